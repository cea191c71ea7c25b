//! Parsers for device dump bundles and cloud event logs.
//!
//! A bundle is a directory holding `manifest.json` and one JSON Lines file per
//! artifact category. Every line becomes one [`EvidenceRecord`] or one error
//! ledger entry, never both and never neither.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::evidence::{
    normalize_timestamp, ArtifactCategory, Digest256, EvidenceRecord, Locale, Source, UtcTimestamp,
};
use crate::preservation::IsolationMethod;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Attribute holding the category file a record came from.
pub const ATTR_FILE: &str = "@file";
/// Attribute holding the 1-based line number a record came from.
pub const ATTR_LINE: &str = "@line";

/// Known category files, in the order their records are chained.
pub const CATEGORY_FILES: &[CategoryFile] = &[
    CategoryFile::new(
        "device_info.jsonl",
        ArtifactCategory::DeviceInfo,
        Some("device_clock"),
    ),
    CategoryFile::new("phone_state.jsonl", ArtifactCategory::PhoneState, None),
    CategoryFile::new(
        "installed_apps.jsonl",
        ArtifactCategory::InstalledApp,
        Some("installed"),
    ),
    CategoryFile::new(
        "messages.jsonl",
        ArtifactCategory::Message,
        Some("delivered_at"),
    ),
    CategoryFile::new("calls.jsonl", ArtifactCategory::CallRecord, Some("at")),
    CategoryFile::new("contacts.jsonl", ArtifactCategory::Contact, None),
    CategoryFile::new(
        "wifi_history.jsonl",
        ArtifactCategory::WifiHistory,
        Some("last_connected"),
    ),
    CategoryFile::new(
        "browser_history.jsonl",
        ArtifactCategory::BrowserHistory,
        Some("visited_at"),
    ),
    CategoryFile::new("sim.jsonl", ArtifactCategory::SimCard, None),
    CategoryFile::new(
        "configured_emails.jsonl",
        ArtifactCategory::ConfiguredEmail,
        None,
    ),
    CategoryFile::new("running_apps.jsonl", ArtifactCategory::RunningApp, None),
    CategoryFile::new("sync_log.jsonl", ArtifactCategory::CloudEvent, Some("at")),
];

#[derive(Debug, Clone, Copy)]
pub struct CategoryFile {
    pub name: &'static str,
    pub category: ArtifactCategory,
    /// JSON key whose value becomes the record timestamp.
    pub timestamp_key: Option<&'static str>,
}

impl CategoryFile {
    const fn new(
        name: &'static str,
        category: ArtifactCategory,
        timestamp_key: Option<&'static str>,
    ) -> Self {
        Self {
            name,
            category,
            timestamp_key,
        }
    }

    pub fn stem(&self) -> &'static str {
        self.name.trim_end_matches(".jsonl")
    }

    pub fn lookup(name: &str) -> Option<&'static CategoryFile> {
        CATEGORY_FILES.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("bundle {0} has no manifest.json")]
    MissingManifest(PathBuf),
    #[error("invalid manifest {path}: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error(
        "duplicate record id {id:?}: {first_file}:{first_line} and {second_file}:{second_line}"
    )]
    DuplicateRecordId {
        id: String,
        first_file: String,
        first_line: usize,
        second_file: String,
        second_line: usize,
    },
    #[error("duplicate event id {id:?} at lines {first_line} and {second_line}")]
    DuplicateEventId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AcquisitionError + '_ {
    move |source| AcquisitionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    /// The line was not turned into a record.
    Error,
    /// The line was kept; something about it is noteworthy.
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LedgerKind {
    MalformedLine,
    UnknownStatus,
    UnknownEventKind,
    UnknownCategoryFile,
    MissingDirection,
    FieldWarning,
}

/// One problem found while parsing, with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub file: String,
    pub line: Option<usize>,
    pub kind: LedgerKind,
    pub severity: Severity,
    pub message: String,
}

impl LedgerEntry {
    fn error(file: &str, line: usize, kind: LedgerKind, message: impl Into<String>) -> Self {
        Self {
            file: file.to_string(),
            line: Some(line),
            kind,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(
        file: &str,
        line: Option<usize>,
        kind: LedgerKind,
        message: impl Into<String>,
    ) -> Self {
        Self {
            file: file.to_string(),
            line,
            kind,
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

/// Number of lines in a JSON Lines payload (a trailing newline does not
/// start a new line).
pub fn input_line_count(bytes: &[u8]) -> usize {
    split_lines(bytes).count()
}

fn split_lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let empty = bytes.is_empty();
    body.split(|&b| b == b'\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub dump_id: String,
    /// ISO-8601 text.
    pub collected_at: String,
    #[serde(default)]
    pub zone_offset_minutes: i32,
    pub tool_name: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examiner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolation_method: Option<IsolationMethod>,
}

impl BundleManifest {
    pub fn load(bundle: &Path) -> Result<Self, AcquisitionError> {
        let path = bundle.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(AcquisitionError::MissingManifest(bundle.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| AcquisitionError::InvalidManifest {
            path,
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub model: Option<String>,
    pub device_name: Option<String>,
    pub android_version: Option<String>,
    pub sdk_level: Option<String>,
    pub brand: Option<String>,
    pub manufacturer: Option<String>,
    pub kernel_name: Option<String>,
    pub wifi_mac: Option<String>,
    pub wifi_ssid: Option<String>,
    pub bluetooth_mac: Option<String>,
    pub imei: Option<String>,
    pub developer_option_enabled: Option<bool>,
    pub encryption_enabled: Option<bool>,
    pub flight_mode_on: Option<bool>,
    pub screen_lock_enabled: Option<bool>,
    pub screen_saver_enabled: Option<bool>,
    pub battery_percent: Option<u8>,
    pub device_clock_at_acquisition: Option<UtcTimestamp>,
}

impl DeviceProfile {
    /// Cosmetic problems with hardware identifiers. Values are kept as-is.
    pub fn format_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (field, value) in [
            ("wifi_mac", &self.wifi_mac),
            ("bluetooth_mac", &self.bluetooth_mac),
        ] {
            if let Some(v) = value {
                if !is_strict_mac(v) {
                    out.push(format!(
                        "{field} {v:?} is not a six-octet colon-separated MAC address"
                    ));
                }
            }
        }
        if let Some(imei) = &self.imei {
            if imei.len() != 15 || !imei.bytes().all(|b| b.is_ascii_digit()) {
                out.push(format!("imei {imei:?} is not 15 decimal digits"));
            }
        }
        out
    }

    fn apply(
        &mut self,
        record: &EvidenceRecord,
        file: &str,
        line: usize,
        ledger: &mut Vec<LedgerEntry>,
    ) {
        let text = |k: &str| record.attribute(k).map(str::to_string);
        macro_rules! take_str {
            ($($field:ident),*) => {$(
                if let Some(v) = text(stringify!($field)) { self.$field = Some(v); }
            )*};
        }
        take_str!(
            model,
            device_name,
            android_version,
            sdk_level,
            brand,
            manufacturer,
            kernel_name,
            wifi_mac,
            wifi_ssid,
            bluetooth_mac,
            imei
        );
        macro_rules! take_bool {
            ($($field:ident),*) => {$(
                if let Some(v) = record.attribute(stringify!($field)) {
                    match parse_flag(v) {
                        Some(b) => self.$field = Some(b),
                        None => ledger.push(LedgerEntry::warning(file, Some(line), LedgerKind::FieldWarning,
                            format!("{} has unrecognized flag value {v:?}", stringify!($field)))),
                    }
                }
            )*};
        }
        take_bool!(
            developer_option_enabled,
            encryption_enabled,
            flight_mode_on,
            screen_lock_enabled,
            screen_saver_enabled
        );
        if let Some(v) = record.attribute("battery_percent") {
            match v.parse::<u8>() {
                Ok(p) if p <= 100 => self.battery_percent = Some(p),
                _ => ledger.push(LedgerEntry::warning(
                    file,
                    Some(line),
                    LedgerKind::FieldWarning,
                    format!("battery_percent {v:?} outside 0-100"),
                )),
            }
        }
        if record.category() == ArtifactCategory::DeviceInfo {
            if let Some(ts) = record.timestamp() {
                self.device_clock_at_acquisition = Some(ts.clone());
            }
        }
    }
}

fn is_strict_mac(v: &str) -> bool {
    let groups: Vec<&str> = v.split(':').collect();
    groups.len() == 6
        && groups
            .iter()
            .all(|g| g.len() == 2 && g.bytes().all(|b| b.is_ascii_hexdigit()))
}

fn parse_flag(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" | "enabled" => Some(true),
        "false" | "off" | "no" | "0" | "disabled" => Some(false),
        _ => None,
    }
}

/// Ingestion settings not carried by the bundle itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub locale: Locale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDump {
    pub dump_id: String,
    pub collected_at: UtcTimestamp,
    pub zone_offset_minutes: i32,
    pub manifest: BundleManifest,
    pub device: DeviceProfile,
    pub records: Vec<EvidenceRecord>,
    pub ledger: Vec<LedgerEntry>,
    /// Input line count per category file present in the bundle.
    pub line_counts: BTreeMap<String, usize>,
}

impl DeviceDump {
    pub fn records_in(&self, category: ArtifactCategory) -> impl Iterator<Item = &EvidenceRecord> {
        self.records
            .iter()
            .filter(move |r| r.category() == category)
    }

    pub fn record(&self, id: &str) -> Option<&EvidenceRecord> {
        self.records.iter().find(|r| r.record_id() == id)
    }
}

pub fn ingest_device_dump(bundle: &Path) -> Result<DeviceDump, AcquisitionError> {
    ingest_device_dump_with(bundle, IngestOptions::default())
}

pub fn ingest_device_dump_with(
    bundle: &Path,
    options: IngestOptions,
) -> Result<DeviceDump, AcquisitionError> {
    let manifest = BundleManifest::load(bundle)?;
    let manifest_path = bundle.join(MANIFEST_FILE);
    let collected_at = normalize_timestamp(
        &manifest.collected_at,
        options.locale,
        manifest.zone_offset_minutes,
    )
    .map_err(|e| AcquisitionError::InvalidManifest {
        path: manifest_path,
        reason: e.to_string(),
    })?;

    let mut ledger = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(bundle).map_err(io_err(bundle))? {
        let entry = entry.map_err(io_err(bundle))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".jsonl") || !entry.path().is_file() {
            continue;
        }
        if CategoryFile::lookup(&name).is_some() {
            names.push(name);
        } else {
            ledger.push(LedgerEntry::warning(
                &name,
                None,
                LedgerKind::UnknownCategoryFile,
                "unrecognized category file; not ingested",
            ));
        }
    }
    ledger.sort();

    let present: Vec<&CategoryFile> = CATEGORY_FILES
        .iter()
        .filter(|f| names.iter().any(|n| n == f.name))
        .collect();
    let zone = manifest.zone_offset_minutes;
    let parsed: Vec<Result<ParsedFile, AcquisitionError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = present
            .iter()
            .map(|cat_file| {
                let path = bundle.join(cat_file.name);
                scope.spawn(move || {
                    let bytes = fs::read(&path).map_err(io_err(&path))?;
                    Ok(parse_category_file(cat_file, &bytes, options.locale, zone))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("category parser panicked"))
            .collect()
    });

    let mut records = Vec::new();
    let mut device = DeviceProfile::default();
    let mut line_counts = BTreeMap::new();
    let mut seen: HashMap<String, (String, usize)> = HashMap::new();
    for (cat_file, parsed) in present.iter().zip(parsed) {
        let parsed = parsed?;
        line_counts.insert(cat_file.name.to_string(), parsed.line_count);
        ledger.extend(parsed.ledger);
        for (line, record) in parsed.records {
            if let Some((first_file, first_line)) = seen.get(record.record_id()) {
                return Err(AcquisitionError::DuplicateRecordId {
                    id: record.record_id().to_string(),
                    first_file: first_file.clone(),
                    first_line: *first_line,
                    second_file: cat_file.name.to_string(),
                    second_line: line,
                });
            }
            seen.insert(
                record.record_id().to_string(),
                (cat_file.name.to_string(), line),
            );
            if matches!(
                record.category(),
                ArtifactCategory::DeviceInfo | ArtifactCategory::PhoneState
            ) {
                device.apply(&record, cat_file.name, line, &mut ledger);
            }
            records.push(record);
        }
    }

    Ok(DeviceDump {
        dump_id: manifest.dump_id.clone(),
        collected_at,
        zone_offset_minutes: manifest.zone_offset_minutes,
        manifest,
        device,
        records,
        ledger,
        line_counts,
    })
}

struct ParsedFile {
    records: Vec<(usize, EvidenceRecord)>,
    ledger: Vec<LedgerEntry>,
    line_count: usize,
}

fn parse_category_file(
    cat_file: &CategoryFile,
    bytes: &[u8],
    locale: Locale,
    zone: i32,
) -> ParsedFile {
    let mut records = Vec::new();
    let mut ledger = Vec::new();
    let mut line_count = 0;
    for (idx, raw) in split_lines(bytes).enumerate() {
        let line_no = idx + 1;
        line_count += 1;
        match parse_record_line(cat_file, raw, line_no, locale, zone) {
            Ok(r) => records.push((line_no, r)),
            Err(msg) => ledger.push(LedgerEntry::error(
                cat_file.name,
                line_no,
                LedgerKind::MalformedLine,
                msg,
            )),
        }
    }
    ParsedFile {
        records,
        ledger,
        line_count,
    }
}

fn parse_object(raw: &[u8]) -> Result<Map<String, Value>, String> {
    let text = std::str::from_utf8(raw).map_err(|e| format!("invalid UTF-8: {e}"))?;
    if text.trim().is_empty() {
        return Err("empty line".into());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("line is not a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

/// Attribute text for a JSON value: strings verbatim, everything else as
/// compact JSON.
fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_record_line(
    cat_file: &CategoryFile,
    raw: &[u8],
    line_no: usize,
    locale: Locale,
    zone: i32,
) -> Result<EvidenceRecord, String> {
    let mut obj = parse_object(raw)?;
    let record_id = match obj.remove("id") {
        None => format!("{}-{line_no}", cat_file.stem()),
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(_) => return Err("\"id\" must be a nonempty string".into()),
    };
    let timestamp = match cat_file.timestamp_key.and_then(|k| obj.remove(k)) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            Some(normalize_timestamp(&s, locale, zone).map_err(|e| e.to_string())?)
        }
        Some(_) => {
            return Err(format!(
                "{:?} must be a string",
                cat_file.timestamp_key.unwrap_or_default()
            ))
        }
    };
    let mut attributes = Vec::with_capacity(obj.len() + 2);
    for (k, v) in obj {
        if k.is_empty() || k.starts_with('@') {
            return Err(format!("invalid attribute key {k:?}"));
        }
        if v.is_null() {
            continue;
        }
        attributes.push((k, value_text(&v)));
    }
    attributes.push((ATTR_FILE.to_string(), cat_file.name.to_string()));
    attributes.push((ATTR_LINE.to_string(), line_no.to_string()));
    EvidenceRecord::new(
        record_id,
        cat_file.category,
        timestamp,
        attributes,
        Source::Device,
    )
    .map_err(|e| e.to_string())
}

fn provenance(record: &EvidenceRecord) -> (String, usize) {
    (
        record.attribute(ATTR_FILE).unwrap_or_default().to_string(),
        record
            .attribute(ATTR_LINE)
            .and_then(|l| l.parse().ok())
            .unwrap_or(0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AppStatus {
    All,
    ThirdParty,
    Disabled,
    Uninstalled,
}

impl FromStr for AppStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match folded.as_str() {
            "all" => Ok(AppStatus::All),
            "thirdparty" => Ok(AppStatus::ThirdParty),
            "disabled" => Ok(AppStatus::Disabled),
            "uninstalled" => Ok(AppStatus::Uninstalled),
            _ => Err(format!("unknown app status {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppRecord {
    pub record_id: String,
    pub app_name: String,
    pub package: Option<String>,
    pub installed_at: Option<UtcTimestamp>,
    pub status: AppStatus,
}

/// Typed app inventory plus the lines that could not be typed.
pub fn parse_app_inventory(dump: &DeviceDump) -> (Vec<AppRecord>, Vec<LedgerEntry>) {
    let mut apps = Vec::new();
    let mut ledger = Vec::new();
    for r in dump.records_in(ArtifactCategory::InstalledApp) {
        let (file, line) = provenance(r);
        let name = r.attribute("name").unwrap_or_default();
        if name.is_empty() {
            ledger.push(LedgerEntry::error(
                &file,
                line,
                LedgerKind::MalformedLine,
                "app record without name",
            ));
            continue;
        }
        let status = match r.attribute("status").map(AppStatus::from_str) {
            Some(Ok(s)) => s,
            Some(Err(msg)) => {
                ledger.push(LedgerEntry::error(
                    &file,
                    line,
                    LedgerKind::UnknownStatus,
                    msg,
                ));
                continue;
            }
            None => {
                ledger.push(LedgerEntry::error(
                    &file,
                    line,
                    LedgerKind::UnknownStatus,
                    "missing app status",
                ));
                continue;
            }
        };
        apps.push(AppRecord {
            record_id: r.record_id().to_string(),
            app_name: name.to_string(),
            package: r
                .attribute("package")
                .filter(|p| !p.is_empty())
                .map(str::to_string),
            installed_at: r.timestamp().cloned(),
            status,
        });
    }
    (apps, ledger)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "incoming" | "in" | "received" | "inbox" => Ok(Direction::Incoming),
            "outgoing" | "out" | "sent" => Ok(Direction::Outgoing),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub record_id: String,
    pub peer_number: String,
    pub body: String,
    pub delivered_at: Option<UtcTimestamp>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub record_id: String,
    pub peer_number: String,
    pub at: Option<UtcTimestamp>,
    pub direction: Direction,
    pub duration_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub record_id: String,
    pub display_name: String,
    pub numbers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiRecord {
    pub record_id: String,
    pub ssid: String,
    pub last_connected: Option<UtcTimestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserRecord {
    pub record_id: String,
    pub url: String,
    pub title: Option<String>,
    pub visited_at: Option<UtcTimestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRecord {
    pub record_id: String,
    pub status: Option<String>,
    pub operator_number: Option<String>,
    pub country: Option<String>,
    pub serial: Option<String>,
    pub sim_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailAccountRecord {
    pub record_id: String,
    pub address_or_number: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningAppRecord {
    pub record_id: String,
    pub app_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommArtifacts {
    pub messages: Vec<MessageRecord>,
    pub calls: Vec<CallRecord>,
    pub contacts: Vec<ContactRecord>,
    pub ledger: Vec<LedgerEntry>,
}

fn direction_of(r: &EvidenceRecord, ledger: &mut Vec<LedgerEntry>) -> Result<Direction, ()> {
    let (file, line) = provenance(r);
    match r.attribute("direction") {
        None => {
            ledger.push(LedgerEntry::warning(
                &file,
                Some(line),
                LedgerKind::MissingDirection,
                "direction missing; defaulted to Incoming",
            ));
            Ok(Direction::Incoming)
        }
        Some(d) => d.parse().map_err(|msg: String| {
            ledger.push(LedgerEntry::error(
                &file,
                line,
                LedgerKind::MalformedLine,
                msg,
            ));
        }),
    }
}

fn required<'a>(
    r: &'a EvidenceRecord,
    key: &str,
    ledger: &mut Vec<LedgerEntry>,
) -> Option<&'a str> {
    match r.attribute(key) {
        Some(v) if !v.is_empty() => Some(v),
        _ => {
            let (file, line) = provenance(r);
            ledger.push(LedgerEntry::error(
                &file,
                line,
                LedgerKind::MalformedLine,
                format!("missing {key:?}"),
            ));
            None
        }
    }
}

fn number_list(text: &str) -> Vec<String> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => items
            .iter()
            .map(value_text)
            .filter(|s| !s.is_empty())
            .collect(),
        _ if text.is_empty() => Vec::new(),
        _ => vec![text.to_string()],
    }
}

pub fn parse_comm_artifacts(dump: &DeviceDump) -> CommArtifacts {
    let mut out = CommArtifacts::default();
    for r in dump.records_in(ArtifactCategory::Message) {
        let Some(peer) = required(r, "peer", &mut out.ledger) else {
            continue;
        };
        let Ok(direction) = direction_of(r, &mut out.ledger) else {
            continue;
        };
        out.messages.push(MessageRecord {
            record_id: r.record_id().to_string(),
            peer_number: peer.to_string(),
            body: r.attribute("body").unwrap_or_default().to_string(),
            delivered_at: r.timestamp().cloned(),
            direction,
        });
    }
    for r in dump.records_in(ArtifactCategory::CallRecord) {
        let Some(peer) = required(r, "peer", &mut out.ledger) else {
            continue;
        };
        let Ok(direction) = direction_of(r, &mut out.ledger) else {
            continue;
        };
        let duration_s = match r.attribute("duration_s").map(str::parse::<u64>) {
            None => None,
            Some(Ok(d)) => Some(d),
            Some(Err(_)) => {
                let (file, line) = provenance(r);
                out.ledger.push(LedgerEntry::error(
                    &file,
                    line,
                    LedgerKind::MalformedLine,
                    "duration_s is not a non-negative integer",
                ));
                continue;
            }
        };
        out.calls.push(CallRecord {
            record_id: r.record_id().to_string(),
            peer_number: peer.to_string(),
            at: r.timestamp().cloned(),
            direction,
            duration_s,
        });
    }
    for r in dump.records_in(ArtifactCategory::Contact) {
        out.contacts.push(ContactRecord {
            record_id: r.record_id().to_string(),
            display_name: r.attribute("name").unwrap_or_default().to_string(),
            numbers: number_list(r.attribute("numbers").unwrap_or_default()),
        });
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxArtifacts {
    pub wifi: Vec<WifiRecord>,
    pub browser: Vec<BrowserRecord>,
    pub sims: Vec<SimRecord>,
    pub emails: Vec<EmailAccountRecord>,
    pub running_apps: Vec<RunningAppRecord>,
    pub ledger: Vec<LedgerEntry>,
}

/// Wi-Fi, browser, SIM, configured account and running-app artifacts.
pub fn parse_aux_artifacts(dump: &DeviceDump) -> AuxArtifacts {
    let mut out = AuxArtifacts::default();
    let opt = |r: &EvidenceRecord, k: &str| r.attribute(k).map(str::to_string);
    for r in dump.records_in(ArtifactCategory::WifiHistory) {
        let Some(ssid) = required(r, "ssid", &mut out.ledger) else {
            continue;
        };
        out.wifi.push(WifiRecord {
            record_id: r.record_id().to_string(),
            ssid: ssid.to_string(),
            last_connected: r.timestamp().cloned(),
        });
    }
    for r in dump.records_in(ArtifactCategory::BrowserHistory) {
        let Some(url) = required(r, "url", &mut out.ledger) else {
            continue;
        };
        out.browser.push(BrowserRecord {
            record_id: r.record_id().to_string(),
            url: url.to_string(),
            title: opt(r, "title"),
            visited_at: r.timestamp().cloned(),
        });
    }
    for r in dump.records_in(ArtifactCategory::SimCard) {
        out.sims.push(SimRecord {
            record_id: r.record_id().to_string(),
            status: opt(r, "status"),
            operator_number: opt(r, "operator_number"),
            country: opt(r, "country"),
            serial: opt(r, "serial"),
            sim_type: opt(r, "sim_type"),
        });
    }
    for r in dump.records_in(ArtifactCategory::ConfiguredEmail) {
        let Some(addr) = required(r, "address", &mut out.ledger) else {
            continue;
        };
        out.emails.push(EmailAccountRecord {
            record_id: r.record_id().to_string(),
            address_or_number: addr.to_string(),
        });
    }
    for r in dump.records_in(ArtifactCategory::RunningApp) {
        let Some(name) = required(r, "name", &mut out.ledger) else {
            continue;
        };
        out.running_apps.push(RunningAppRecord {
            record_id: r.record_id().to_string(),
            app_name: name.to_string(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CloudEventKind {
    Install,
    Uninstall,
    Upload,
    Download,
    Login,
    Sync,
}

impl CloudEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudEventKind::Install => "Install",
            CloudEventKind::Uninstall => "Uninstall",
            CloudEventKind::Upload => "Upload",
            CloudEventKind::Download => "Download",
            CloudEventKind::Login => "Login",
            CloudEventKind::Sync => "Sync",
        }
    }
}

impl fmt::Display for CloudEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CloudEventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "install" => Ok(CloudEventKind::Install),
            "uninstall" => Ok(CloudEventKind::Uninstall),
            "upload" => Ok(CloudEventKind::Upload),
            "download" => Ok(CloudEventKind::Download),
            "login" => Ok(CloudEventKind::Login),
            "sync" => Ok(CloudEventKind::Sync),
            _ => Err(format!("unknown event kind {s:?}")),
        }
    }
}

/// One entry of the cloud-side forensic log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudEvent {
    pub event_id: String,
    pub kind: CloudEventKind,
    /// Cloud clock.
    pub timestamp: UtcTimestamp,
    pub account: String,
    pub package_or_object: String,
    pub content_digest: Option<Digest256>,
    pub size_bytes: Option<u64>,
    pub ip: Option<String>,
}

impl CloudEvent {
    /// The event as a generic evidence record (source = Cloud).
    pub fn to_record(&self) -> EvidenceRecord {
        let mut attrs = vec![
            ("kind".to_string(), self.kind.to_string()),
            ("account".to_string(), self.account.clone()),
            ("object".to_string(), self.package_or_object.clone()),
        ];
        if let Some(d) = self.content_digest {
            attrs.push(("content_digest".into(), d.to_hex()));
        }
        if let Some(s) = self.size_bytes {
            attrs.push(("size_bytes".into(), s.to_string()));
        }
        if let Some(ip) = &self.ip {
            attrs.push(("ip".into(), ip.clone()));
        }
        EvidenceRecord::new(
            self.event_id.clone(),
            ArtifactCategory::CloudEvent,
            Some(self.timestamp.clone()),
            attrs,
            Source::Cloud,
        )
        .expect("event ids are validated nonempty at ingestion")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudLog {
    pub log_id: String,
    pub events: Vec<CloudEvent>,
    pub ledger: Vec<LedgerEntry>,
    pub line_count: usize,
}

pub fn ingest_cloud_log(path: &Path) -> Result<CloudLog, AcquisitionError> {
    ingest_cloud_log_with(path, IngestOptions::default())
}

pub fn ingest_cloud_log_with(
    path: &Path,
    options: IngestOptions,
) -> Result<CloudLog, AcquisitionError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let log_id = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud_log".to_string());
    let (events, ledger, line_count) = parse_cloud_lines(&file, &bytes, options.locale)?;
    Ok(CloudLog {
        log_id,
        events,
        ledger,
        line_count,
    })
}

/// Parses cloud log bytes; `file` is only used for ledger provenance.
/// Events keep file order.
pub fn parse_cloud_lines(
    file: &str,
    bytes: &[u8],
    locale: Locale,
) -> Result<(Vec<CloudEvent>, Vec<LedgerEntry>, usize), AcquisitionError> {
    let mut events = Vec::new();
    let mut ledger = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut line_count = 0;
    for (idx, raw) in split_lines(bytes).enumerate() {
        let line_no = idx + 1;
        line_count += 1;
        match parse_event_line(raw, locale) {
            Ok(ev) => {
                if let Some(&first_line) = seen.get(&ev.event_id) {
                    return Err(AcquisitionError::DuplicateEventId {
                        id: ev.event_id,
                        first_line,
                        second_line: line_no,
                    });
                }
                seen.insert(ev.event_id.clone(), line_no);
                events.push(ev);
            }
            Err((kind, msg)) => ledger.push(LedgerEntry::error(file, line_no, kind, msg)),
        }
    }
    Ok((events, ledger, line_count))
}

fn parse_event_line(raw: &[u8], locale: Locale) -> Result<CloudEvent, (LedgerKind, String)> {
    let malformed = |m: String| (LedgerKind::MalformedLine, m);
    let obj = parse_object(raw).map_err(malformed)?;
    let text = |k: &str| -> Result<String, (LedgerKind, String)> {
        match obj.get(k) {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err((
                LedgerKind::MalformedLine,
                format!("missing string field {k:?}"),
            )),
        }
    };
    let event_id = text("id")?;
    if event_id.is_empty() {
        return Err(malformed("empty event id".into()));
    }
    let kind = text("kind")?
        .parse::<CloudEventKind>()
        .map_err(|m| (LedgerKind::UnknownEventKind, m))?;
    let timestamp =
        normalize_timestamp(&text("ts")?, locale, 0).map_err(|e| malformed(e.to_string()))?;
    let account = text("account")?;
    let package_or_object = text("object")?;
    let content_digest = match obj.get("content_digest") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            Some(Digest256::from_hex(s).map_err(|e| malformed(e.to_string()))?)
        }
        Some(_) => return Err(malformed("content_digest must be a hex string".into())),
    };
    let size_bytes = match obj.get("size") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| malformed("size must be a non-negative integer".into()))?,
        ),
    };
    let ip = match obj.get("ip") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed("ip must be a string".into())),
    };
    Ok(CloudEvent {
        event_id,
        kind,
        timestamp,
        account,
        package_or_object,
        content_digest,
        size_bytes,
        ip,
    })
}
