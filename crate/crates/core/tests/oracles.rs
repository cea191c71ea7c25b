mod common;

use common::{
    brute_force_links, geo_linear, reference_encode, sha256sum_external, synthetic_geo_table,
};
use mcf_core::acquisition::{CloudEvent, CloudEventKind};
use mcf_core::correlation::{estimate_clock_skew, match_synced_artifacts, SkewEstimate};
use mcf_core::evidence::{ArtifactCategory, Digest256, Source, UtcTimestamp};
use mcf_core::preservation::{manifest_header, seal, IsolationMethod};
use mcf_core::sim::{generate_case, SimParams, SplitMix64};
use mcf_core::{
    canonical_encode, ingest_cloud_log, ingest_device_dump, resolve_ip, EvidenceRecord, Locale,
};

fn sim(seed: u64) -> (tempfile::TempDir, mcf_core::sim::SimCase) {
    let dir = tempfile::tempdir().unwrap();
    let case = generate_case(
        &SimParams {
            seed,
            ..SimParams::default()
        },
        dir.path(),
    )
    .unwrap();
    (dir, case)
}

#[test]
fn canonical_encoding_matches_reference_encoder() {
    for seed in 0..5 {
        let (_d, case) = sim(seed);
        let dump = ingest_device_dump(&case.bundle_dir).unwrap();
        assert!(!dump.records.is_empty());
        for r in &dump.records {
            assert_eq!(
                canonical_encode(r),
                reference_encode(r),
                "record {}",
                r.record_id()
            );
        }
    }
    let awkward = EvidenceRecord::new(
        "id\u{1f}x",
        ArtifactCategory::Message,
        Some(UtcTimestamp::from_epoch(1)),
        [
            ("a\u{1e}".to_string(), "v\u{1b}\u{1f}".to_string()),
            ("b".to_string(), String::new()),
        ],
        Source::Cloud,
    )
    .unwrap();
    assert_eq!(canonical_encode(&awkward), reference_encode(&awkward));
}

#[test]
fn record_digests_match_external_sha256() {
    let (_d, case) = sim(11);
    let dump = ingest_device_dump(&case.bundle_dir).unwrap();
    let Some(_) = sha256sum_external(b"") else {
        eprintln!("sha256sum not available; external digest oracle skipped");
        return;
    };
    for r in dump.records.iter().take(25) {
        assert_eq!(
            sha256sum_external(&reference_encode(r)).unwrap(),
            r.digest().to_hex()
        );
    }
}

#[test]
fn chain_links_match_external_sha256() {
    let (_d, case) = sim(12);
    let dump = ingest_device_dump(&case.bundle_dir).unwrap();
    let sealed = seal(
        &dump,
        "examiner",
        IsolationMethod::AirplaneMode,
        Locale::DayFirst,
    );
    if sha256sum_external(b"").is_none() {
        eprintln!("sha256sum not available; external chain oracle skipped");
        return;
    }
    let m = &sealed.manifest;
    let header = manifest_header(
        &m.dump_id,
        &dump.collected_at.to_iso(),
        "examiner",
        "sha-256",
    );
    let mut h = hex::decode(sha256sum_external(&header).unwrap()).unwrap();
    for (i, r) in dump.records.iter().enumerate() {
        let mut buf = h.clone();
        buf.extend(reference_encode(r));
        let next = sha256sum_external(&buf).unwrap();
        assert_eq!(next, sealed.links[i].to_hex(), "link {i}");
        h = hex::decode(next).unwrap();
    }
    assert_eq!(hex::encode(&h), m.chain_head.to_hex());
}

fn random_instance(rng: &mut SplitMix64, n: usize) -> (Vec<EvidenceRecord>, Vec<CloudEvent>) {
    let digests: Vec<Digest256> = (0..4u8).map(|i| Digest256::of(&[i])).collect();
    let objects = ["a.jpg", "b.jpg", "c.jpg"];
    let mut records = Vec::new();
    for i in 0..n {
        let mut attrs = Vec::new();
        if rng.below(2) == 0 {
            attrs.push(("content_digest".to_string(), rng.pick(&digests).to_hex()));
        }
        attrs.push(("object".to_string(), rng.pick(&objects).to_string()));
        if rng.below(2) == 0 {
            attrs.push(("size_bytes".to_string(), (100 + rng.below(2)).to_string()));
        }
        let ts = (rng.below(5) > 0).then(|| UtcTimestamp::from_epoch(rng.range_i64(0, 600)));
        records.push(
            EvidenceRecord::new(
                format!("r{i:02}"),
                ArtifactCategory::CloudEvent,
                ts,
                attrs,
                Source::Device,
            )
            .unwrap(),
        );
    }
    let kinds = [
        CloudEventKind::Upload,
        CloudEventKind::Download,
        CloudEventKind::Sync,
    ];
    let events = (0..n)
        .map(|i| CloudEvent {
            event_id: format!("e{i:02}"),
            kind: *rng.pick(&kinds),
            timestamp: UtcTimestamp::from_epoch(rng.range_i64(0, 600)),
            account: "acct".into(),
            package_or_object: rng.pick(&objects).to_string(),
            content_digest: (rng.below(2) == 0).then(|| *rng.pick(&digests)),
            size_bytes: (rng.below(2) == 0).then(|| 100 + rng.below(2)),
            ip: None,
        })
        .collect();
    (records, events)
}

#[test]
fn greedy_matcher_equals_exhaustive_oracle_on_random_instances() {
    let mut rng = SplitMix64::new(7);
    for _ in 0..300 {
        let (records, events) = random_instance(&mut rng, 20);
        let skew = SkewEstimate {
            offset_seconds: rng.range_i64(-30, 30),
            support_count: 0,
            spread_seconds: 0,
        };
        let window = rng.range_i64(0, 200);
        assert_eq!(
            match_synced_artifacts(&records, &events, &skew, window),
            brute_force_links(&records, &events, &skew, window)
        );
    }
}

#[test]
fn skew_estimate_shifts_with_cloud_clock() {
    for seed in 0..10 {
        let (_d, case) = sim(seed);
        let dump = ingest_device_dump(&case.bundle_dir).unwrap();
        let log = ingest_cloud_log(&case.cloud_log).unwrap();
        let base = estimate_clock_skew(&dump.records, &log.events, 3).unwrap();
        for shift in [-7_200i64, -1, 1, 3_600] {
            let shifted: Vec<CloudEvent> = log
                .events
                .iter()
                .map(|e| CloudEvent {
                    timestamp: UtcTimestamp::from_epoch(e.timestamp.seconds() + shift),
                    ..e.clone()
                })
                .collect();
            let s = estimate_clock_skew(&dump.records, &shifted, 3).unwrap();
            assert_eq!(s.offset_seconds, base.offset_seconds + shift);
            assert_eq!(s.support_count, base.support_count);
            assert_eq!(s.spread_seconds, base.spread_seconds);
        }
    }
}

#[test]
fn geo_lookup_matches_linear_scan() {
    let table = synthetic_geo_table(1000, 3);
    let mut rng = SplitMix64::new(99);
    let first = table.ranges()[0].start;
    let last = table.ranges()[999].end;
    for _ in 0..5_000 {
        let lo = (first & 0xffff_ffff) as u32;
        let hi = (last & 0xffff_ffff) as u32;
        let v4 = std::net::Ipv4Addr::from(
            lo.saturating_sub(1000) + rng.below(u64::from(hi - lo) + 2000) as u32,
        );
        let ip = v4.to_string();
        let got = resolve_ip(&ip, &table).map(|g| (g.country, g.city));
        assert_eq!(got, geo_linear(&ip, table.ranges()), "{ip}");
    }
    assert_eq!(resolve_ip("not-an-ip", &table), None);
    assert_eq!(resolve_ip("::1", &table), None);
}
