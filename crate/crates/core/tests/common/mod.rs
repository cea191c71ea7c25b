//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::net::IpAddr;
use std::path::Path;

use mcf_core::acquisition::{CloudEvent, CloudEventKind, Severity, ATTR_FILE};
use mcf_core::correlation::{LinkTier, SkewEstimate, SyncLink};
use mcf_core::osint::{GeoRange, GeoTable};
use mcf_core::{ingest_cloud_log, ingest_device_dump, EvidenceRecord};

/// Field-by-field encoder written from the format description, without
/// calling into the library's encoder.
pub fn reference_encode(r: &EvidenceRecord) -> Vec<u8> {
    fn field(out: &mut Vec<u8>, text: &str) {
        for &b in text.as_bytes() {
            if b == 0x1b || b == 0x1e || b == 0x1f {
                out.push(0x1b);
            }
            out.push(b);
        }
    }
    let mut out = Vec::new();
    let ts = r
        .timestamp()
        .map(|t| t.original_text().to_string())
        .unwrap_or_default();
    let source = format!("{:?}", r.source());
    let category = r.category().to_string();
    let mut parts: Vec<&str> = vec![r.record_id(), &category, &ts, &source];
    let mut keys: Vec<&String> = r.attributes().keys().collect();
    keys.sort();
    for k in keys {
        parts.push(k);
        parts.push(&r.attributes()[k]);
    }
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            out.push(0x1f);
        }
        field(&mut out, p);
    }
    out.push(0x1e);
    out
}

/// SHA-256 through the system `sha256sum` binary, when present.
pub fn sha256sum_external(bytes: &[u8]) -> Option<String> {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let mut child = Command::new("sha256sum")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .ok()?;
    child.stdin.take()?.write_all(bytes).ok()?;
    let out = child.wait_with_output().ok()?;
    let text = String::from_utf8(out.stdout).ok()?;
    text.split_whitespace().next().map(str::to_string)
}

struct Pair {
    record: String,
    event: String,
    delta: i64,
}

/// Repeatedly takes the globally smallest `(|delta|, record, event)` pair
/// among those whose endpoints are both still free.
fn exhaustive_min_scan(
    mut pairs: Vec<Pair>,
    tier: LinkTier,
    used_r: &mut Vec<String>,
    used_e: &mut Vec<String>,
) -> Vec<SyncLink> {
    let mut out = Vec::new();
    loop {
        pairs.retain(|p| !used_r.contains(&p.record) && !used_e.contains(&p.event));
        let mut best: Option<usize> = None;
        for (i, p) in pairs.iter().enumerate() {
            let better = match best {
                None => true,
                Some(j) => {
                    let q = &pairs[j];
                    (p.delta.abs(), &p.record, &p.event) < (q.delta.abs(), &q.record, &q.event)
                }
            };
            if better {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        let p = pairs.swap_remove(i);
        used_r.push(p.record.clone());
        used_e.push(p.event.clone());
        out.push(SyncLink {
            device_record_id: p.record,
            cloud_event_id: p.event,
            tier,
            time_delta_seconds: p.delta,
        });
    }
    out
}

/// Brute-force assignment under the matcher's published rules.
pub fn brute_force_links(
    records: &[EvidenceRecord],
    events: &[CloudEvent],
    skew: &SkewEstimate,
    window: i64,
) -> Vec<SyncLink> {
    let transfers: Vec<&CloudEvent> = events
        .iter()
        .filter(|e| matches!(e.kind, CloudEventKind::Upload | CloudEventKind::Download))
        .collect();
    let dated: Vec<&EvidenceRecord> = records.iter().filter(|r| r.timestamp().is_some()).collect();
    let delta = |r: &EvidenceRecord, e: &CloudEvent| {
        e.timestamp.seconds() - skew.offset_seconds - r.timestamp().unwrap().seconds()
    };

    let mut exact = Vec::new();
    for r in &dated {
        for e in &transfers {
            let rd = r.attribute("content_digest");
            let ed = e.content_digest.map(|d| d.to_hex());
            if rd.is_some() && ed.as_deref() == rd {
                exact.push(Pair {
                    record: r.record_id().into(),
                    event: e.event_id.clone(),
                    delta: delta(r, e),
                });
            }
        }
    }
    let mut used_r = Vec::new();
    let mut used_e = Vec::new();
    let mut links = exhaustive_min_scan(exact, LinkTier::ExactDigest, &mut used_r, &mut used_e);

    let mut meta = Vec::new();
    for r in &dated {
        for e in &transfers {
            if r.attribute("object") != Some(e.package_or_object.as_str()) {
                continue;
            }
            let rs: Option<u64> = r.attribute("size_bytes").and_then(|s| s.parse().ok());
            if let (Some(a), Some(b)) = (rs, e.size_bytes) {
                if a != b {
                    continue;
                }
            }
            let d = delta(r, e);
            if d.abs() <= window {
                meta.push(Pair {
                    record: r.record_id().into(),
                    event: e.event_id.clone(),
                    delta: d,
                });
            }
        }
    }
    links.extend(exhaustive_min_scan(
        meta,
        LinkTier::MetadataWindow,
        &mut used_r,
        &mut used_e,
    ));
    links.sort_by_key(|l| (l.tier, l.device_record_id.clone()));
    links
}

fn key(ip: IpAddr) -> u128 {
    match ip {
        IpAddr::V4(v4) => u128::from(v4.to_ipv6_mapped()),
        IpAddr::V6(v6) => u128::from(v6),
    }
}

/// Linear scan over every range.
pub fn geo_linear(ip: &str, ranges: &[GeoRange]) -> Option<(String, String)> {
    let k = key(ip.parse().ok()?);
    ranges
        .iter()
        .find(|r| r.start <= k && k <= r.end)
        .map(|r| (r.country.clone(), r.city.clone()))
}

/// Builds a table of `n` disjoint IPv4 ranges with gaps between them.
pub fn synthetic_geo_table(n: usize, seed: u64) -> GeoTable {
    let mut rng = mcf_core::sim::SplitMix64::new(seed);
    let mut start: u32 = 0x0100_0000;
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        start += 1 + rng.below(50_000) as u32;
        let len = rng.below(100_000) as u32;
        let end = start + len;
        let s = u128::from(std::net::Ipv4Addr::from(start).to_ipv6_mapped());
        let e = u128::from(std::net::Ipv4Addr::from(end).to_ipv6_mapped());
        ranges.push(GeoRange {
            start: s,
            end: e,
            country: format!("C{:02}", i % 40),
            city: format!("City{i}"),
        });
        start = end;
    }
    GeoTable::new("synthetic", ranges).expect("disjoint sorted ranges")
}

/// Parsed records plus error-ledger entries, per file, must account for
/// every input line. Returns the number of files checked.
pub fn assert_lossless(bundle: &Path, cloud_log: &Path) -> usize {
    let dump = ingest_device_dump(bundle).unwrap();
    for (file, &lines) in &dump.line_counts {
        let records = dump
            .records
            .iter()
            .filter(|r| r.attribute(ATTR_FILE) == Some(file.as_str()))
            .count();
        let errors = dump
            .ledger
            .iter()
            .filter(|e| &e.file == file && e.severity == Severity::Error && e.line.is_some())
            .count();
        assert_eq!(records + errors, lines, "{}: {file}", bundle.display());
    }
    let log = ingest_cloud_log(cloud_log).unwrap();
    assert_eq!(
        log.events.len() + log.ledger.len(),
        log.line_count,
        "{}",
        cloud_log.display()
    );
    dump.line_counts.len() + 1
}

/// Splices malformed lines into three category files and the cloud log.
pub fn corrupt_case(bundle: &Path, cloud_log: &Path) {
    let garbage = [
        "not json",
        "",
        "[1,2,3]",
        r#"{"id":"bad-ts","delivered_at":"31/02/2016 01:00:00 PM","at":"yesterday","installed":"13/13/2016 01:00:00 PM"}"#,
        r#"{"truncated":"#,
        r#"{"@file":"x"}"#,
    ];
    for name in ["messages.jsonl", "calls.jsonl", "installed_apps.jsonl"] {
        let path = bundle.join(name);
        let mut text = std::fs::read_to_string(&path).unwrap_or_default();
        let insert_at = text.find('\n').map(|i| i + 1).unwrap_or(0);
        let bad: String = garbage.iter().map(|g| format!("{g}\n")).collect();
        text.insert_str(insert_at, &bad);
        std::fs::write(&path, text).unwrap();
    }
    let mut log = std::fs::read_to_string(cloud_log).unwrap();
    log.push_str("{\"id\":\"x1\",\"kind\":\"Teleport\",\"ts\":\"2016-05-10T00:00:00Z\",\"account\":\"a\",\"object\":\"o\"}\n\nnope\n");
    std::fs::write(cloud_log, log).unwrap();
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}
