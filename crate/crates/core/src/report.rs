//! Case reports: the JSON document is the source of truth; Markdown and HTML
//! are renderings of that JSON and carry nothing it does not.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::acquisition::{
    BrowserRecord, CallRecord, ContactRecord, DeviceProfile, EmailAccountRecord, LedgerEntry,
    MessageRecord, RunningAppRecord, SimRecord, WifiRecord,
};
use crate::correlation::{CloudUsageFinding, SyncLink, TimelineEntry};
use crate::evidence::{Digest256, Locale};
use crate::osint::{AdjacencyEntry, GeoRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub tool_name: String,
    pub tool_version: String,
    pub parameters: Parameters,
    pub inputs: InputsSection,
    pub device: DeviceSection,
    pub skew: SkewSection,
    pub findings: Vec<CloudUsageFinding>,
    pub links: Vec<SyncLink>,
    pub timeline: TimelineSection,
    pub identity_graph: IdentitySection,
    pub geolocation: Vec<GeoRecord>,
    pub artifacts: ArtifactsSection,
    pub error_ledgers: LedgerSection,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameters {
    pub window_seconds: i64,
    pub min_skew_support: usize,
    pub locale: Locale,
    pub zone_offset_minutes: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputsSection {
    pub dump: DumpInput,
    pub cloud_logs: Vec<CloudLogInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpInput {
    pub dump_id: String,
    pub collected_at: String,
    pub record_count: usize,
    pub category_counts: BTreeMap<String, usize>,
    pub line_counts: BTreeMap<String, usize>,
    pub chain: ChainSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSection {
    /// `Intact`, `Tampered` or `NotVerified`.
    pub verdict: String,
    pub chain_head: Option<Digest256>,
    pub first_divergent_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudLogInput {
    pub log_id: String,
    pub event_count: usize,
    pub line_count: usize,
    pub events_digest: Digest256,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSection {
    pub profile: DeviceProfile,
    pub apps: AppsSection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppsSection {
    pub installed: Vec<AppEntry>,
    pub third_party: Vec<AppEntry>,
    pub disabled: Vec<AppEntry>,
    pub uninstalled: Vec<AppEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppEntry {
    pub record_id: String,
    pub name: String,
    pub package: Option<String>,
    pub installed_at: Option<String>,
    pub installed_at_original: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewSection {
    pub offset_seconds: i64,
    pub support_count: usize,
    pub spread_seconds: i64,
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineSection {
    pub entries: Vec<TimelineEntry>,
    pub excluded_undated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentitySection {
    pub node_count: usize,
    pub edge_count: usize,
    pub adjacency: Vec<AdjacencyEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactsSection {
    pub messages: Vec<MessageRecord>,
    pub calls: Vec<CallRecord>,
    pub contacts: Vec<ContactRecord>,
    pub wifi: Vec<WifiRecord>,
    pub browser: Vec<BrowserRecord>,
    pub sims: Vec<SimRecord>,
    pub emails: Vec<EmailAccountRecord>,
    pub running_apps: Vec<RunningAppRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSection {
    pub device: Vec<LedgerEntry>,
    pub cloud: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
    Html,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
            ReportFormat::Html => "html",
        }
    }

    /// `<case_id>.report.<ext>`
    pub fn file_name(self, case_id: &str) -> String {
        format!("{case_id}.report.{}", self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "html" => Ok(ReportFormat::Html),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn report_json(case: &CaseReport) -> Value {
    serde_json::to_value(case).expect("report serializes")
}

pub fn render_report(case: &CaseReport, format: ReportFormat) -> Vec<u8> {
    render_value(&report_json(case), format)
}

/// Renders a report JSON document (possibly redacted) in the given format.
pub fn render_value(report: &Value, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("json value serializes");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Markdown => to_markdown(&blocks(report)).into_bytes(),
        ReportFormat::Html => to_html(&blocks(report)).into_bytes(),
    }
}

enum Block {
    Heading(u8, String),
    Para(String),
    Table(Vec<String>, Vec<Vec<String>>),
    Bullets(Vec<String>),
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            items.iter().map(cell).collect::<Vec<_>>().join(", ")
        }
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), cell(other))),
    }
}

fn key_values(v: &Value) -> Block {
    let mut pairs = Vec::new();
    flatten("", v, &mut pairs);
    Block::Table(
        vec!["field".into(), "value".into()],
        pairs.into_iter().map(|(k, v)| vec![k, v]).collect(),
    )
}

fn table(v: &Value, preferred: &[&str]) -> Block {
    let items = v.as_array().map(Vec::as_slice).unwrap_or_default();
    if items.is_empty() {
        return Block::Para("(none)".into());
    }
    let mut columns: Vec<String> = preferred.iter().map(|s| s.to_string()).collect();
    let known: BTreeSet<String> = columns.iter().cloned().collect();
    let extra: BTreeSet<String> = items
        .iter()
        .filter_map(Value::as_object)
        .flat_map(|m| m.keys().cloned())
        .filter(|k| !known.contains(k))
        .collect();
    columns.extend(extra);
    let rows = items
        .iter()
        .map(|item| {
            columns
                .iter()
                .map(|c| item.get(c).map(cell).unwrap_or_default())
                .collect()
        })
        .collect();
    Block::Table(columns, rows)
}

fn blocks(r: &Value) -> Vec<Block> {
    let s = |path: &[&str]| -> String {
        let mut v = r;
        for p in path {
            v = v.get(p).unwrap_or(&Value::Null);
        }
        cell(v)
    };
    let at = |key: &str| r.get(key).unwrap_or(&Value::Null);
    let mut b = vec![
        Block::Heading(1, format!("Case report {}", s(&["case_id"]))),
        Block::Para(format!(
            "Generated by {} {}.",
            s(&["tool_name"]),
            s(&["tool_version"])
        )),
        Block::Heading(2, "Parameters".into()),
        key_values(at("parameters")),
        Block::Heading(2, "Inputs".into()),
        key_values(at("inputs").get("dump").unwrap_or(&Value::Null)),
        Block::Heading(3, "Cloud logs".into()),
        table(
            at("inputs").get("cloud_logs").unwrap_or(&Value::Null),
            &["log_id", "event_count", "line_count", "events_digest"],
        ),
        Block::Heading(2, "Device".into()),
        key_values(at("device").get("profile").unwrap_or(&Value::Null)),
    ];
    let apps = at("device").get("apps").unwrap_or(&Value::Null);
    for (key, title) in [
        ("installed", "Installed apps"),
        ("third_party", "Third-party apps"),
        ("disabled", "Disabled apps"),
        ("uninstalled", "Uninstalled apps"),
    ] {
        b.push(Block::Heading(3, title.into()));
        b.push(table(
            apps.get(key).unwrap_or(&Value::Null),
            &[
                "record_id",
                "name",
                "package",
                "installed_at",
                "installed_at_original",
            ],
        ));
    }
    b.push(Block::Heading(2, "Clock skew".into()));
    b.push(key_values(at("skew")));
    b.push(Block::Heading(2, "Findings".into()));
    b.push(table(
        at("findings"),
        &[
            "finding_id",
            "kind",
            "confidence",
            "subject",
            "supporting_ids",
            "narrative",
        ],
    ));
    b.push(Block::Heading(2, "Sync links".into()));
    b.push(table(
        at("links"),
        &[
            "device_record_id",
            "cloud_event_id",
            "tier",
            "time_delta_seconds",
        ],
    ));
    b.push(Block::Heading(2, "Timeline".into()));
    let timeline = at("timeline");
    b.push(table(
        timeline.get("entries").unwrap_or(&Value::Null),
        &["iso", "source", "id", "label", "original"],
    ));
    let undated = timeline
        .get("excluded_undated")
        .map(cell)
        .unwrap_or_default();
    b.push(Block::Para(if undated.is_empty() {
        "Excluded undated records: (none)".to_string()
    } else {
        format!("Excluded undated records: {undated}")
    }));
    b.push(Block::Heading(2, "Identity graph".into()));
    let graph = at("identity_graph");
    b.push(Block::Para(format!(
        "{} identifiers, {} co-occurrence edges.",
        graph.get("node_count").map(cell).unwrap_or_default(),
        graph.get("edge_count").map(cell).unwrap_or_default()
    )));
    let adjacency = graph
        .get("adjacency")
        .and_then(Value::as_array)
        .map(Vec::as_slice)
        .unwrap_or_default();
    if adjacency.is_empty() {
        b.push(Block::Para("(none)".into()));
    } else {
        let rows = adjacency
            .iter()
            .map(|n| {
                let neighbors = n
                    .get("neighbors")
                    .and_then(Value::as_array)
                    .map(|ns| {
                        ns.iter()
                            .map(|x| {
                                format!(
                                    "{} ({})",
                                    x.get("id").map(cell).unwrap_or_default(),
                                    x.get("count").map(cell).unwrap_or_default()
                                )
                            })
                            .collect::<Vec<_>>()
                            .join(", ")
                    })
                    .unwrap_or_default();
                vec![
                    n.get("id").map(cell).unwrap_or_default(),
                    n.get("kind").map(cell).unwrap_or_default(),
                    neighbors,
                ]
            })
            .collect();
        b.push(Block::Table(
            vec!["id".into(), "kind".into(), "neighbors".into()],
            rows,
        ));
    }
    b.push(Block::Heading(2, "Geolocation".into()));
    b.push(table(
        at("geolocation"),
        &["ip", "country", "city", "source_table"],
    ));
    b.push(Block::Heading(2, "Artifacts".into()));
    let artifacts = at("artifacts");
    for (key, title) in [
        ("messages", "Messages"),
        ("calls", "Calls"),
        ("contacts", "Contacts"),
        ("wifi", "Wi-Fi history"),
        ("browser", "Browser history"),
        ("sims", "SIM cards"),
        ("emails", "Configured accounts"),
        ("running_apps", "Running apps"),
    ] {
        b.push(Block::Heading(3, title.into()));
        b.push(table(
            artifacts.get(key).unwrap_or(&Value::Null),
            &["record_id"],
        ));
    }
    b.push(Block::Heading(2, "Error ledgers".into()));
    let ledgers = at("error_ledgers");
    for (key, title) in [("device", "Device"), ("cloud", "Cloud")] {
        b.push(Block::Heading(3, title.into()));
        b.push(table(
            ledgers.get(key).unwrap_or(&Value::Null),
            &["file", "line", "severity", "kind", "message"],
        ));
    }
    b.push(Block::Heading(2, "Notes".into()));
    let notes: Vec<String> = at("notes")
        .as_array()
        .map(|n| n.iter().map(cell).collect())
        .unwrap_or_default();
    b.push(if notes.is_empty() {
        Block::Para("(none)".into())
    } else {
        Block::Bullets(notes)
    });
    b
}

fn md_cell(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('|', "\\|")
        .replace(['\n', '\r'], " ")
}

fn to_markdown(blocks: &[Block]) -> String {
    let mut out = String::new();
    for block in blocks {
        match block {
            Block::Heading(level, text) => {
                let _ = writeln!(out, "{} {}\n", "#".repeat(*level as usize), text);
            }
            Block::Para(text) => {
                let _ = writeln!(out, "{text}\n");
            }
            Block::Bullets(items) => {
                for i in items {
                    let _ = writeln!(out, "- {}", i.replace('\n', " "));
                }
                out.push('\n');
            }
            Block::Table(headers, rows) => {
                let _ = writeln!(
                    out,
                    "| {} |",
                    headers
                        .iter()
                        .map(|h| md_cell(h))
                        .collect::<Vec<_>>()
                        .join(" | ")
                );
                let _ = writeln!(out, "|{}", "---|".repeat(headers.len()));
                for row in rows {
                    let _ = writeln!(
                        out,
                        "| {} |",
                        row.iter()
                            .map(|c| md_cell(c))
                            .collect::<Vec<_>>()
                            .join(" | ")
                    );
                }
                out.push('\n');
            }
        }
    }
    out
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const CELL_STYLE: &str =
    "border:1px solid #999;padding:2px 6px;text-align:left;vertical-align:top;";

fn to_html(blocks: &[Block]) -> String {
    let title = blocks
        .iter()
        .find_map(|b| match b {
            Block::Heading(1, t) => Some(t.as_str()),
            _ => None,
        })
        .unwrap_or("Case report");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n<body style=\"font-family:sans-serif;margin:2em;color:#111;\">",
        html_escape(title)
    );
    for block in blocks {
        match block {
            Block::Heading(level, text) => {
                let _ = writeln!(out, "<h{level}>{}</h{level}>", html_escape(text));
            }
            Block::Para(text) => {
                let _ = writeln!(out, "<p>{}</p>", html_escape(text));
            }
            Block::Bullets(items) => {
                out.push_str("<ul>\n");
                for i in items {
                    let _ = writeln!(out, "<li>{}</li>", html_escape(i));
                }
                out.push_str("</ul>\n");
            }
            Block::Table(headers, rows) => {
                out.push_str("<table style=\"border-collapse:collapse;margin-bottom:1em;font-size:0.9em;\">\n<tr>");
                for h in headers {
                    let _ = write!(
                        out,
                        "<th style=\"{CELL_STYLE}background:#eee;\">{}</th>",
                        html_escape(h)
                    );
                }
                out.push_str("</tr>\n");
                for row in rows {
                    out.push_str("<tr>");
                    for c in row {
                        let _ = write!(out, "<td style=\"{CELL_STYLE}\">{}</td>", html_escape(c));
                    }
                    out.push_str("</tr>\n");
                }
                out.push_str("</table>\n");
            }
        }
    }
    out.push_str("</body>\n</html>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Redaction {
    pub report: Value,
    /// Policy keys that name no field anywhere in the report.
    pub unknown_keys: Vec<String>,
}

const REDACTED_PREFIX: &str = "[REDACTED:";

fn is_redacted(v: &Value) -> bool {
    v.as_str()
        .is_some_and(|s| s.starts_with(REDACTED_PREFIX) && s.ends_with(']'))
}

/// `[REDACTED:<first 8 hex of SHA-256 of the value>]`; strings hash their
/// UTF-8 bytes, other values their compact JSON text.
pub fn redaction_marker(v: &Value) -> String {
    let text = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    format!(
        "{REDACTED_PREFIX}{}]",
        &Digest256::of(text.as_bytes()).to_hex()[..8]
    )
}

/// Replaces the value of every object field named in `policy`.
pub fn redact(report: &Value, policy: &[String]) -> Redaction {
    let policy: BTreeSet<&str> = policy.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut out = report.clone();
    redact_in(&mut out, &policy, &mut seen);
    Redaction {
        report: out,
        unknown_keys: policy
            .into_iter()
            .filter(|k| !seen.contains(*k))
            .map(str::to_string)
            .collect(),
    }
}

fn redact_in<'p>(v: &mut Value, policy: &BTreeSet<&'p str>, seen: &mut BTreeSet<&'p str>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map.iter_mut() {
                if let Some(&key) = policy.get(k.as_str()) {
                    seen.insert(key);
                    if !child.is_null() && !is_redacted(child) {
                        *child = Value::String(redaction_marker(child));
                    }
                } else {
                    redact_in(child, policy, seen);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|i| redact_in(i, policy, seen)),
        _ => {}
    }
}
