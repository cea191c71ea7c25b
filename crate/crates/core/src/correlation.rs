//! Device/cloud correlation: clock skew estimation, synced-artifact matching,
//! the unified timeline, and the cloud-usage findings derived from them.
//!
//! Device records take part in matching through three optional attributes:
//! `content_digest` (hex SHA-256 of the synced content), `object` (file or
//! object name as the cloud sees it) and `size_bytes`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AppRecord, AppStatus, CloudEvent, CloudEventKind};
use crate::evidence::{render_iso, Digest256, EvidenceRecord, Source};

pub const DEFAULT_WINDOW_SECONDS: i64 = 300;
pub const DEFAULT_MIN_SKEW_SUPPORT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorrelationError {
    #[error("only {found} exact-digest pairs available, {required} required for skew estimation")]
    InsufficientSupport { found: usize, required: usize },
}

/// Cloud clock minus device clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewEstimate {
    pub offset_seconds: i64,
    pub support_count: usize,
    pub spread_seconds: i64,
}

impl SkewEstimate {
    /// Fallback when there is not enough support to estimate.
    pub fn zero() -> Self {
        Self {
            offset_seconds: 0,
            support_count: 0,
            spread_seconds: 0,
        }
    }
}

fn record_digest_attr(r: &EvidenceRecord) -> Option<Digest256> {
    r.attribute("content_digest")
        .and_then(|h| Digest256::from_hex(h).ok())
}

fn record_size(r: &EvidenceRecord) -> Option<u64> {
    r.attribute("size_bytes").and_then(|s| s.parse().ok())
}

/// Only content transfers can be synced copies of device artifacts.
pub fn is_transfer(kind: CloudEventKind) -> bool {
    matches!(kind, CloudEventKind::Upload | CloudEventKind::Download)
}

/// `(cloud_ts - device_ts)` for every dated record/transfer pair sharing a
/// content digest.
pub fn exact_digest_deltas(
    device_records: &[EvidenceRecord],
    cloud_events: &[CloudEvent],
) -> Vec<i64> {
    let mut by_digest: HashMap<Digest256, Vec<&CloudEvent>> = HashMap::new();
    for e in cloud_events.iter().filter(|e| is_transfer(e.kind)) {
        if let Some(d) = e.content_digest {
            by_digest.entry(d).or_default().push(e);
        }
    }
    let mut deltas = Vec::new();
    for r in device_records {
        let (Some(d), Some(ts)) = (record_digest_attr(r), r.timestamp()) else {
            continue;
        };
        for e in by_digest.get(&d).into_iter().flatten() {
            deltas.push(e.timestamp.seconds() - ts.seconds());
        }
    }
    deltas
}

/// Lower median of exact-digest pair offsets.
pub fn estimate_clock_skew(
    device_records: &[EvidenceRecord],
    cloud_events: &[CloudEvent],
    min_support: usize,
) -> Result<SkewEstimate, CorrelationError> {
    let mut deltas = exact_digest_deltas(device_records, cloud_events);
    if deltas.len() < min_support {
        return Err(CorrelationError::InsufficientSupport {
            found: deltas.len(),
            required: min_support,
        });
    }
    if deltas.is_empty() {
        return Ok(SkewEstimate::zero());
    }
    deltas.sort_unstable();
    Ok(SkewEstimate {
        offset_seconds: deltas[(deltas.len() - 1) / 2],
        support_count: deltas.len(),
        spread_seconds: deltas[deltas.len() - 1] - deltas[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkTier {
    ExactDigest,
    MetadataWindow,
}

impl fmt::Display for LinkTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkTier::ExactDigest => "ExactDigest",
            LinkTier::MetadataWindow => "MetadataWindow",
        })
    }
}

/// A device record matched to the cloud event that synced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyncLink {
    pub device_record_id: String,
    pub cloud_event_id: String,
    pub tier: LinkTier,
    /// Skew-corrected cloud time minus device time.
    pub time_delta_seconds: i64,
}

struct Candidate<'a> {
    record: &'a str,
    event: &'a str,
    delta: i64,
}

/// Takes candidates in `(|delta|, record_id, event_id)` order, skipping any
/// whose record or event is already linked.
fn greedy_take<'a>(
    mut candidates: Vec<Candidate<'a>>,
    tier: LinkTier,
    used_records: &mut HashSet<&'a str>,
    used_events: &mut HashSet<&'a str>,
    out: &mut Vec<SyncLink>,
) {
    candidates.sort_by(|a, b| {
        (a.delta.unsigned_abs(), a.record, a.event).cmp(&(
            b.delta.unsigned_abs(),
            b.record,
            b.event,
        ))
    });
    for c in candidates {
        if used_records.contains(c.record) || used_events.contains(c.event) {
            continue;
        }
        used_records.insert(c.record);
        used_events.insert(c.event);
        out.push(SyncLink {
            device_record_id: c.record.to_string(),
            cloud_event_id: c.event.to_string(),
            tier,
            time_delta_seconds: c.delta,
        });
    }
}

/// Two-pass greedy matcher: exact content digests first, then object name,
/// size and time window over what remains.
///
/// Only dated device records and Upload/Download events take part.
pub fn match_synced_artifacts(
    device_records: &[EvidenceRecord],
    cloud_events: &[CloudEvent],
    skew: &SkewEstimate,
    window_seconds: i64,
) -> Vec<SyncLink> {
    let records: Vec<(&EvidenceRecord, i64)> = device_records
        .iter()
        .filter_map(|r| r.timestamp().map(|t| (r, t.seconds())))
        .collect();
    let events: Vec<&CloudEvent> = cloud_events
        .iter()
        .filter(|e| is_transfer(e.kind))
        .collect();
    let corrected = |e: &CloudEvent| e.timestamp.seconds() - skew.offset_seconds;

    let mut used_records = HashSet::new();
    let mut used_events = HashSet::new();
    let mut links = Vec::new();

    let mut by_digest: HashMap<Digest256, Vec<&CloudEvent>> = HashMap::new();
    for e in &events {
        if let Some(d) = e.content_digest {
            by_digest.entry(d).or_default().push(e);
        }
    }
    let mut exact = Vec::new();
    for (r, ts) in &records {
        let Some(d) = record_digest_attr(r) else {
            continue;
        };
        for e in by_digest.get(&d).into_iter().flatten() {
            exact.push(Candidate {
                record: r.record_id(),
                event: &e.event_id,
                delta: corrected(e) - ts,
            });
        }
    }
    greedy_take(
        exact,
        LinkTier::ExactDigest,
        &mut used_records,
        &mut used_events,
        &mut links,
    );

    let mut by_object: HashMap<&str, Vec<&CloudEvent>> = HashMap::new();
    for e in events
        .iter()
        .filter(|e| !used_events.contains(e.event_id.as_str()))
    {
        by_object
            .entry(e.package_or_object.as_str())
            .or_default()
            .push(e);
    }
    let mut window = Vec::new();
    for (r, ts) in records
        .iter()
        .filter(|(r, _)| !used_records.contains(r.record_id()))
    {
        let Some(object) = r.attribute("object") else {
            continue;
        };
        let size = record_size(r);
        for e in by_object.get(object).into_iter().flatten() {
            if let (Some(a), Some(b)) = (size, e.size_bytes) {
                if a != b {
                    continue;
                }
            }
            let delta = corrected(e) - ts;
            if delta.abs() <= window_seconds {
                window.push(Candidate {
                    record: r.record_id(),
                    event: &e.event_id,
                    delta,
                });
            }
        }
    }
    greedy_take(
        window,
        LinkTier::MetadataWindow,
        &mut used_records,
        &mut used_events,
        &mut links,
    );

    links.sort_by(|a, b| (a.tier, &a.device_record_id).cmp(&(b.tier, &b.device_record_id)));
    links
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    /// Device-clock seconds (cloud entries are skew-corrected).
    pub timestamp: i64,
    pub iso: String,
    pub source: Source,
    pub id: String,
    /// Artifact category for device entries, event kind for cloud entries.
    pub label: String,
    /// Timestamp text as it appeared in the source.
    pub original: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedTimeline {
    pub entries: Vec<TimelineEntry>,
    /// Device records left out because they carry no timestamp.
    pub excluded_undated: Vec<String>,
}

/// Merges device records and skew-corrected cloud events.
///
/// Order: timestamp, then Device before Cloud, then id.
pub fn build_timeline(
    device_records: &[EvidenceRecord],
    cloud_events: &[CloudEvent],
    skew: &SkewEstimate,
) -> UnifiedTimeline {
    let mut timeline = UnifiedTimeline::default();
    for r in device_records {
        match r.timestamp() {
            Some(ts) => timeline.entries.push(TimelineEntry {
                timestamp: ts.seconds(),
                iso: ts.to_iso(),
                source: Source::Device,
                id: r.record_id().to_string(),
                label: r.category().to_string(),
                original: ts.original_text().to_string(),
            }),
            None => timeline.excluded_undated.push(r.record_id().to_string()),
        }
    }
    for e in cloud_events {
        let t = e.timestamp.seconds() - skew.offset_seconds;
        timeline.entries.push(TimelineEntry {
            timestamp: t,
            iso: render_iso(t),
            source: Source::Cloud,
            id: e.event_id.clone(),
            label: e.kind.to_string(),
            original: e.timestamp.original_text().to_string(),
        });
    }
    timeline
        .entries
        .sort_by(|a, b| (a.timestamp, a.source, &a.id).cmp(&(b.timestamp, b.source, &b.id)));
    timeline.excluded_undated.sort();
    timeline
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingKind {
    ProvenUpload,
    ProvenDownload,
    AppUsedThenUninstalled,
    AccountActivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Confidence {
    High,
    Medium,
}

/// A derived, evidence-backed claim of cloud usage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudUsageFinding {
    pub finding_id: String,
    pub kind: FindingKind,
    /// Package, object or account the finding is about.
    pub subject: String,
    pub supporting_ids: Vec<String>,
    pub confidence: Confidence,
    pub narrative: String,
}

/// Packages the device shows as uninstalled (or never saw at all although
/// the cloud logged an install) that the cloud log has activity for.
pub fn detect_uninstall_evidence(
    apps: &[AppRecord],
    cloud_events: &[CloudEvent],
) -> Vec<CloudUsageFinding> {
    let mut device_ids: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut uninstalled: BTreeSet<&str> = BTreeSet::new();
    for app in apps {
        if let Some(p) = app.package.as_deref() {
            device_ids.entry(p).or_default().push(&app.record_id);
            if app.status == AppStatus::Uninstalled {
                uninstalled.insert(p);
            }
        }
    }
    let mut cloud_by_package: BTreeMap<&str, Vec<&CloudEvent>> = BTreeMap::new();
    for e in cloud_events {
        cloud_by_package
            .entry(e.package_or_object.as_str())
            .or_default()
            .push(e);
    }
    let orphan_installs = cloud_events
        .iter()
        .filter(|e| {
            e.kind == CloudEventKind::Install
                && !device_ids.contains_key(e.package_or_object.as_str())
        })
        .map(|e| e.package_or_object.as_str());
    let candidates: BTreeSet<&str> = uninstalled.iter().copied().chain(orphan_installs).collect();

    let mut findings = Vec::new();
    for package in candidates {
        let Some(events) = cloud_by_package.get(package) else {
            continue;
        };
        let has_uninstall = events.iter().any(|e| e.kind == CloudEventKind::Uninstall);
        let mut device: Vec<&str> = device_ids.get(package).cloned().unwrap_or_default();
        device.sort_unstable();
        let mut cloud: Vec<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
        cloud.sort_unstable();
        let device_part = if uninstalled.contains(package) {
            "the device lists it as uninstalled"
        } else {
            "the device holds no record of it"
        };
        let uninstall_part = if has_uninstall {
            ", including an Uninstall"
        } else {
            ""
        };
        findings.push(CloudUsageFinding {
            finding_id: String::new(),
            kind: FindingKind::AppUsedThenUninstalled,
            subject: package.to_string(),
            supporting_ids: device.iter().chain(&cloud).map(|s| s.to_string()).collect(),
            confidence: if has_uninstall { Confidence::High } else { Confidence::Medium },
            narrative: format!(
                "Package {package}: {device_part}; the cloud log holds {} event(s) for it{uninstall_part}.",
                cloud.len()
            ),
        });
    }
    findings
}

/// Turns links, logins and uninstall evidence into the ordered finding list.
///
/// Findings are sorted by kind then first supporting id and numbered
/// `F-0001`, `F-0002`, ... in that order.
pub fn derive_cloud_usage_findings(
    links: &[SyncLink],
    cloud_events: &[CloudEvent],
    timeline: &UnifiedTimeline,
    uninstall_findings: &[CloudUsageFinding],
) -> Vec<CloudUsageFinding> {
    let events: HashMap<&str, &CloudEvent> = cloud_events
        .iter()
        .map(|e| (e.event_id.as_str(), e))
        .collect();
    let when: HashMap<&str, &str> = timeline
        .entries
        .iter()
        .map(|e| (e.id.as_str(), e.iso.as_str()))
        .collect();
    let mut findings = Vec::new();
    for link in links {
        let Some(event) = events.get(link.cloud_event_id.as_str()) else {
            continue;
        };
        let (kind, verb) = match event.kind {
            CloudEventKind::Download => (FindingKind::ProvenDownload, "Download"),
            _ => (FindingKind::ProvenUpload, "Upload"),
        };
        let (confidence, basis) = match link.tier {
            LinkTier::ExactDigest => (Confidence::High, "identical content digest"),
            LinkTier::MetadataWindow => (Confidence::Medium, "object name, size and time window"),
        };
        findings.push(CloudUsageFinding {
            finding_id: String::new(),
            kind,
            subject: event.package_or_object.clone(),
            supporting_ids: vec![link.device_record_id.clone(), link.cloud_event_id.clone()],
            confidence,
            narrative: format!(
                "Device record {} matches cloud {verb} event {} of {} by {basis}; corrected time difference {} s.",
                link.device_record_id, link.cloud_event_id, event.package_or_object, link.time_delta_seconds
            ),
        });
    }

    let mut logins: BTreeMap<&str, Vec<&CloudEvent>> = BTreeMap::new();
    for e in cloud_events
        .iter()
        .filter(|e| e.kind == CloudEventKind::Login)
    {
        logins.entry(e.account.as_str()).or_default().push(e);
    }
    for (account, events) in logins {
        let mut ids: Vec<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
        ids.sort_unstable();
        let first_seen = ids
            .iter()
            .filter_map(|id| when.get(id).copied())
            .min()
            .unwrap_or("an unknown time");
        findings.push(CloudUsageFinding {
            finding_id: String::new(),
            kind: FindingKind::AccountActivity,
            subject: account.to_string(),
            supporting_ids: ids.iter().map(|s| s.to_string()).collect(),
            confidence: Confidence::High,
            narrative: format!(
                "Account {account} has {} Login event(s) in the cloud log, the earliest at {first_seen} (device clock).",
                ids.len()
            ),
        });
    }

    findings.extend(uninstall_findings.iter().cloned());
    findings.sort_by(|a, b| {
        (a.kind, a.supporting_ids.first()).cmp(&(b.kind, b.supporting_ids.first()))
    });
    for (i, f) in findings.iter_mut().enumerate() {
        f.finding_id = format!("F-{:04}", i + 1);
    }
    findings
}
