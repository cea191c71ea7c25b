//! Synthetic inputs shared by the criterion benchmarks.

use mcf_core::acquisition::{CloudEvent, CloudEventKind};
use mcf_core::evidence::{ArtifactCategory, Digest256, Source, UtcTimestamp};
use mcf_core::osint::{GeoRange, GeoTable};
use mcf_core::sim::SplitMix64;
use mcf_core::EvidenceRecord;

/// `n` message-like records with a handful of attributes each.
pub fn chain_records(n: usize) -> Vec<EvidenceRecord> {
    (0..n)
        .map(|i| {
            EvidenceRecord::new(
                format!("msg-{i:06}"),
                ArtifactCategory::Message,
                Some(UtcTimestamp::from_epoch(1_462_752_000 + i as i64)),
                [
                    ("body".to_string(), format!("message body number {i}")),
                    ("peer".to_string(), format!("+35386{:07}", i % 10_000_000)),
                    ("direction".to_string(), "Incoming".to_string()),
                ],
                Source::Device,
            )
            .expect("valid record")
        })
        .collect()
}

/// `n` synced device records and their `n` cloud uploads, half of them
/// carrying digests.
pub fn matching_inputs(n: usize, seed: u64) -> (Vec<EvidenceRecord>, Vec<CloudEvent>) {
    let mut rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let t = 1_462_752_000 + rng.range_i64(0, 604_800);
        let digest = Digest256::of(&(i as u64).to_le_bytes());
        let object = format!("IMG_{i:05}.jpg");
        records.push(
            EvidenceRecord::new(
                format!("sync-{i:05}"),
                ArtifactCategory::CloudEvent,
                Some(UtcTimestamp::from_epoch(t)),
                [
                    ("content_digest".to_string(), digest.to_hex()),
                    ("object".to_string(), object.clone()),
                    ("size_bytes".to_string(), "4096".to_string()),
                ],
                Source::Device,
            )
            .expect("valid record"),
        );
        events.push(CloudEvent {
            event_id: format!("ev-{i:05}"),
            kind: CloudEventKind::Upload,
            timestamp: UtcTimestamp::from_epoch(t + 300 + rng.range_i64(0, 60)),
            account: "owner@example.com".into(),
            package_or_object: object,
            content_digest: (i % 2 == 0).then_some(digest),
            size_bytes: Some(4096),
            ip: None,
        });
    }
    (records, events)
}

/// Disjoint IPv4 ranges of random width, in order.
pub fn geo_table(n: usize, seed: u64) -> GeoTable {
    let mut rng = SplitMix64::new(seed);
    let mut next: u32 = 0x0100_0000;
    let ranges = (0..n)
        .map(|i| {
            let start = next + rng.below(1_000) as u32;
            let end = start + rng.below(60_000) as u32;
            next = end + 1;
            GeoRange {
                start: ip4(start),
                end: ip4(end),
                country: format!("C{}", i % 50),
                city: format!("City{i}"),
            }
        })
        .collect();
    GeoTable::new("bench", ranges).expect("ordered disjoint ranges")
}

fn ip4(v: u32) -> u128 {
    u128::from(std::net::Ipv4Addr::from(v).to_ipv6_mapped())
}
