//! Stage outputs of the analysis pipeline and their assembly into a
//! [`CaseReport`](crate::report::CaseReport).
//!
//! Each stage result is plain serde data so the CLI can persist it between
//! subcommands; assembling from persisted stages and assembling in memory
//! give identical reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::acquisition::{
    parse_app_inventory, parse_aux_artifacts, parse_comm_artifacts, AppStatus, CloudLog, DeviceDump,
};
use crate::correlation::{
    build_timeline, derive_cloud_usage_findings, detect_uninstall_evidence, estimate_clock_skew,
    match_synced_artifacts, CloudUsageFinding, CorrelationError, SkewEstimate, SyncLink,
    UnifiedTimeline, DEFAULT_MIN_SKEW_SUPPORT, DEFAULT_WINDOW_SECONDS,
};
use crate::evidence::{Digest256, Locale};
use crate::osint::{build_identity_graph, resolve_ip, AdjacencyEntry, GeoRecord, GeoTable};
use crate::preservation::{SealedManifest, VerificationReport};
use crate::report::{
    AppEntry, AppsSection, ArtifactsSection, CaseReport, ChainSection, CloudLogInput,
    DeviceSection, DumpInput, IdentitySection, InputsSection, LedgerSection, Parameters,
    SkewSection, TimelineSection,
};

pub const DUMP_STAGE_FILE: &str = "dump.json";
pub const VERIFY_STAGE_FILE: &str = "verification.json";
pub const CORRELATION_STAGE_FILE: &str = "correlation.json";
pub const ENRICHMENT_STAGE_FILE: &str = "enrichment.json";

/// Timezone/locale assumption surfaced in every report.
pub const TIMESTAMP_ASSUMPTION: &str =
    "Legacy device timestamps carry no zone; they are read with the manifest zone offset (0 = UTC) and the configured day/month order.";

/// A persisted dump together with the locale it was read with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpStage {
    pub locale: Locale,
    pub dump: DeviceDump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseParams {
    pub window_seconds: i64,
    pub min_skew_support: usize,
    pub locale: Locale,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            min_skew_support: DEFAULT_MIN_SKEW_SUPPORT,
            locale: Locale::DayFirst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyStage {
    pub dump_id: String,
    pub chain_head: Digest256,
    pub record_count: usize,
    pub report: VerificationReport,
}

impl VerifyStage {
    pub fn new(sealed: &SealedManifest, report: VerificationReport) -> Self {
        Self {
            dump_id: sealed.manifest.dump_id.clone(),
            chain_head: sealed.manifest.chain_head,
            record_count: sealed.manifest.record_count,
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationStage {
    pub params: CaseParams,
    pub cloud_log: Option<CloudLog>,
    pub skew: SkewEstimate,
    pub skew_estimated: bool,
    pub skew_warning: Option<String>,
    pub links: Vec<SyncLink>,
    pub timeline: UnifiedTimeline,
    pub findings: Vec<CloudUsageFinding>,
}

/// Skew estimation, matching, timeline and findings for one dump.
///
/// Too little digest support falls back to zero skew with a warning.
pub fn correlate(
    dump: &DeviceDump,
    cloud_log: Option<&CloudLog>,
    params: CaseParams,
) -> CorrelationStage {
    let events = cloud_log.map(|l| l.events.as_slice()).unwrap_or_default();
    let (skew, skew_estimated, skew_warning) =
        match estimate_clock_skew(&dump.records, events, params.min_skew_support) {
            Ok(s) => (s, true, None),
            Err(e @ CorrelationError::InsufficientSupport { .. }) => (
                SkewEstimate::zero(),
                false,
                Some(format!("{e}; proceeding with zero skew")),
            ),
        };
    let links = match_synced_artifacts(&dump.records, events, &skew, params.window_seconds);
    let timeline = build_timeline(&dump.records, events, &skew);
    let (apps, _) = parse_app_inventory(dump);
    let uninstall = detect_uninstall_evidence(&apps, events);
    let findings = derive_cloud_usage_findings(&links, events, &timeline, &uninstall);
    CorrelationStage {
        params,
        cloud_log: cloud_log.cloned(),
        skew,
        skew_estimated,
        skew_warning,
        links,
        timeline,
        findings,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentStage {
    pub node_count: usize,
    pub edge_count: usize,
    pub adjacency: Vec<AdjacencyEntry>,
    pub geo_table: Option<String>,
    pub geolocation: Vec<GeoRecord>,
    pub unresolved_ips: Vec<String>,
}

/// Identity graph from the dump; geolocation of every distinct IP in the
/// cloud log when a table is supplied.
pub fn enrich(
    dump: &DeviceDump,
    cloud_log: Option<&CloudLog>,
    geo: Option<&GeoTable>,
) -> EnrichmentStage {
    let comm = parse_comm_artifacts(dump);
    let aux = parse_aux_artifacts(dump);
    let graph = build_identity_graph(&comm.contacts, &comm.messages, &comm.calls, &aux.emails);
    let mut ips: Vec<&str> = cloud_log
        .into_iter()
        .flat_map(|l| l.events.iter().filter_map(|e| e.ip.as_deref()))
        .collect();
    ips.sort_unstable();
    ips.dedup();
    let mut geolocation = Vec::new();
    let mut unresolved = Vec::new();
    if let Some(table) = geo {
        for ip in ips {
            match resolve_ip(ip, table) {
                Some(g) => geolocation.push(g),
                None => unresolved.push(ip.to_string()),
            }
        }
    } else {
        unresolved.extend(ips.into_iter().map(str::to_string));
    }
    EnrichmentStage {
        node_count: graph.nodes.len(),
        edge_count: graph.edges.len(),
        adjacency: graph.adjacency(),
        geo_table: geo.map(|t| t.name().to_string()),
        geolocation,
        unresolved_ips: unresolved,
    }
}

/// Order-independent digest over a log's events (sorted by id).
pub fn events_digest(log: &CloudLog) -> Digest256 {
    let mut events: Vec<_> = log.events.iter().collect();
    events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    let mut bytes = Vec::new();
    for e in events {
        bytes.extend(crate::evidence::canonical_encode(&e.to_record()));
    }
    Digest256::of(&bytes)
}

fn app_entry(a: &crate::acquisition::AppRecord) -> AppEntry {
    AppEntry {
        record_id: a.record_id.clone(),
        name: a.app_name.clone(),
        package: a.package.clone(),
        installed_at: a.installed_at.as_ref().map(|t| t.to_iso()),
        installed_at_original: a
            .installed_at
            .as_ref()
            .map(|t| t.original_text().to_string()),
    }
}

/// Builds the report from stage outputs. Missing verification or
/// correlation stages leave their sections present but empty.
pub fn assemble_report(
    case_id: &str,
    dump: &DeviceDump,
    verification: Option<&VerifyStage>,
    correlation: &CorrelationStage,
    enrichment: &EnrichmentStage,
) -> CaseReport {
    let (apps, app_ledger) = parse_app_inventory(dump);
    let comm = parse_comm_artifacts(dump);
    let aux = parse_aux_artifacts(dump);

    let mut app_section = AppsSection::default();
    for a in &apps {
        let bucket = match a.status {
            AppStatus::All => &mut app_section.installed,
            AppStatus::ThirdParty => &mut app_section.third_party,
            AppStatus::Disabled => &mut app_section.disabled,
            AppStatus::Uninstalled => &mut app_section.uninstalled,
        };
        bucket.push(app_entry(a));
    }

    let mut device_ledger = dump.ledger.clone();
    device_ledger.extend(app_ledger);
    device_ledger.extend(comm.ledger.iter().cloned());
    device_ledger.extend(aux.ledger.iter().cloned());
    device_ledger.sort();

    let mut notes = vec![TIMESTAMP_ASSUMPTION.to_string()];
    notes.extend(dump.device.format_warnings());
    if let Some(w) = &correlation.skew_warning {
        notes.push(w.clone());
    }
    if !correlation.timeline.excluded_undated.is_empty() {
        notes.push(format!(
            "{} undated device record(s) excluded from the timeline; listed under timeline.excluded_undated.",
            correlation.timeline.excluded_undated.len()
        ));
    }
    if !enrichment.unresolved_ips.is_empty() {
        notes.push(format!(
            "IP address(es) without geolocation: {}.",
            enrichment.unresolved_ips.join(", ")
        ));
    }
    if verification.is_none() {
        notes.push("Chain of custody not verified for this run.".to_string());
    }

    let chain = match verification {
        Some(v) => ChainSection {
            verdict: v.report.verdict.to_string(),
            chain_head: Some(v.chain_head),
            first_divergent_index: v.report.first_divergent_index,
        },
        None => ChainSection {
            verdict: "NotVerified".to_string(),
            chain_head: None,
            first_divergent_index: None,
        },
    };

    let cloud_logs: Vec<CloudLogInput> = correlation
        .cloud_log
        .iter()
        .map(|l| CloudLogInput {
            log_id: l.log_id.clone(),
            event_count: l.events.len(),
            line_count: l.line_count,
            events_digest: events_digest(l),
        })
        .collect();
    let mut cloud_ledger: Vec<_> = correlation
        .cloud_log
        .iter()
        .flat_map(|l| l.ledger.iter().cloned())
        .collect();
    cloud_ledger.sort();

    let mut category_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &dump.records {
        *category_counts.entry(r.category().to_string()).or_insert(0) += 1;
    }

    CaseReport {
        case_id: case_id.to_string(),
        tool_name: "mcf".to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        parameters: Parameters {
            window_seconds: correlation.params.window_seconds,
            min_skew_support: correlation.params.min_skew_support,
            locale: correlation.params.locale,
            zone_offset_minutes: dump.zone_offset_minutes,
        },
        inputs: InputsSection {
            dump: DumpInput {
                dump_id: dump.dump_id.clone(),
                collected_at: dump.collected_at.to_iso(),
                record_count: dump.records.len(),
                category_counts,
                line_counts: dump.line_counts.clone(),
                chain,
            },
            cloud_logs,
        },
        device: DeviceSection {
            profile: dump.device.clone(),
            apps: app_section,
        },
        skew: SkewSection {
            offset_seconds: correlation.skew.offset_seconds,
            support_count: correlation.skew.support_count,
            spread_seconds: correlation.skew.spread_seconds,
            estimated: correlation.skew_estimated,
        },
        findings: correlation.findings.clone(),
        links: correlation.links.clone(),
        timeline: TimelineSection {
            entries: correlation.timeline.entries.clone(),
            excluded_undated: correlation.timeline.excluded_undated.clone(),
        },
        identity_graph: IdentitySection {
            node_count: enrichment.node_count,
            edge_count: enrichment.edge_count,
            adjacency: enrichment.adjacency.clone(),
        },
        geolocation: enrichment.geolocation.clone(),
        artifacts: ArtifactsSection {
            messages: comm.messages,
            calls: comm.calls,
            contacts: comm.contacts,
            wifi: aux.wifi,
            browser: aux.browser,
            sims: aux.sims,
            emails: aux.emails,
            running_apps: aux.running_apps,
        },
        error_ledgers: LedgerSection {
            device: device_ledger,
            cloud: cloud_ledger,
        },
        notes,
    }
}

/// Writes a stage as pretty JSON with a trailing newline.
pub fn write_stage<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)
}

pub fn read_stage<T: DeserializeOwned>(dir: &Path, name: &str) -> std::io::Result<T> {
    let text = std::fs::read_to_string(dir.join(name))?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
