//! Seeded generator of paired device bundles and cloud logs with ground
//! truth, plus a tamper injector for sealed bundles.
//!
//! All randomness comes from [`SplitMix64`] so a seed reproduces the same
//! bytes on every platform. Device timestamps are drawn from the week
//! starting 2016-05-09T00:00:00Z.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::acquisition::{
    ingest_device_dump_with, AcquisitionError, CategoryFile, IngestOptions, ATTR_FILE, ATTR_LINE,
    MANIFEST_FILE,
};
use crate::evidence::{render_iso, render_legacy, Digest256, Locale};
use crate::preservation::SealedManifest;

/// 2016-05-09T00:00:00Z, a Monday.
pub const SIM_WEEK_START: i64 = 1_462_752_000;
pub const SIM_WEEK_SECONDS: i64 = 7 * 86_400;

pub const BUNDLE_DIR: &str = "bundle";
pub const CLOUD_LOG_FILE: &str = "cloud_log.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GEO_TABLE_FILE: &str = "geo_table.csv";

/// SplitMix64 (Steele, Lea & Flood): state advances by 0x9E3779B97F4A7C15,
/// output mixes with 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n` (multiply-high reduction); `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform in `lo..=hi`.
    pub fn range_i64(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo) as u64 + 1) as i64
    }

    /// Uniform in `[0, 1)` with 53 bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("bundle has no tamperable record")]
    EmptyBundle,
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("i/o error on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|source| SimError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub seed: u64,
    pub n_apps: usize,
    pub n_messages: usize,
    pub n_calls: usize,
    pub n_uploads: usize,
    pub n_contacts: usize,
    pub n_logins: usize,
    /// Cloud clock minus device clock.
    pub skew_seconds: i64,
    /// Upper bound of the uniform sync lag, seconds; at least 1.
    pub sync_lag_max_s: i64,
    pub uninstall_fraction: f64,
    /// Whether the cloud logger records content digests of transfers.
    pub digest_logging: bool,
    /// Emit device info, phone state, SIM and configured account lines.
    pub device_profile: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_apps: 6,
            n_messages: 12,
            n_calls: 6,
            n_uploads: 10,
            n_contacts: 6,
            n_logins: 2,
            skew_seconds: 300,
            sync_lag_max_s: 60,
            uninstall_fraction: 0.25,
            digest_logging: true,
            device_profile: true,
        }
    }
}

impl SimParams {
    /// Every count zero and no device profile: an empty bundle and log.
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            n_apps: 0,
            n_messages: 0,
            n_calls: 0,
            n_uploads: 0,
            n_contacts: 0,
            n_logins: 0,
            skew_seconds: 0,
            sync_lag_max_s: 1,
            uninstall_fraction: 0.0,
            digest_logging: true,
            device_profile: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.uninstall_fraction) {
            return Err(SimError::InvalidParams(
                "uninstall_fraction must be in [0, 1]".into(),
            ));
        }
        if self.sync_lag_max_s < 1 {
            return Err(SimError::InvalidParams(
                "sync_lag_max_s must be positive".into(),
            ));
        }
        if self.skew_seconds.abs() > SIM_WEEK_SECONDS {
            return Err(SimError::InvalidParams(
                "skew_seconds must be within one week".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub a: String,
    pub b: String,
    pub count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `(device_record_id, cloud_event_id)`, sorted.
    pub true_links: Vec<(String, String)>,
    pub true_skew_seconds: i64,
    pub uninstalled_packages: Vec<String>,
    pub tamper_index: Option<usize>,
    /// Ids of every dated device record and cloud event in true device-clock
    /// order, ties broken Device before Cloud, then by id.
    pub true_timeline: Vec<String>,
    /// Co-occurrence counts among the planted clique of contact numbers.
    pub planted_edges: Vec<PlantedEdge>,
    /// Owner account the device is configured with (empty without profile).
    pub owner_account: String,
}

#[derive(Debug, Clone)]
pub struct SimCase {
    pub root: PathBuf,
    pub bundle_dir: PathBuf,
    pub cloud_log: PathBuf,
    pub ground_truth_path: PathBuf,
    pub geo_table: Option<PathBuf>,
    pub ground_truth: GroundTruth,
}

struct CloudDraft {
    t: i64,
    kind: &'static str,
    object: String,
    size: Option<u64>,
    digest: Option<Digest256>,
    ip: Option<String>,
    link_record: Option<String>,
}

const MODELS: &[(&str, &str, &str)] = &[
    ("LG-D802", "lge", "LGE"),
    ("SM-G900F", "samsung", "samsung"),
    ("Nexus 5", "google", "LGE"),
    ("XT1068", "motorola", "motorola"),
];
const WORDS: &[&str] = &[
    "meet", "at", "the", "usual", "place", "upload", "done", "call", "me", "later", "photos",
    "sent", "ok",
];
const SSIDS: &[&str] = &["eduroam", "HomeNet-5G", "CafeFreeWiFi", "Airport_Guest"];
const SITES: &[&str] = &[
    "https://www.dropbox.com/home",
    "https://mail.example.com/inbox",
    "https://news.example.org/",
    "https://photos.example.net/album",
];
const RUNNING: &[&str] = &[
    "System UI",
    "Viber",
    "WiFi ADB",
    "Camera",
    "Google Play Store",
];
const LOGIN_IPS: &[&str] = &[
    "203.0.113.17",
    "198.51.100.42",
    "192.0.2.200",
    "203.0.113.250",
];

fn device_time(rng: &mut SplitMix64) -> i64 {
    SIM_WEEK_START + rng.range_i64(3_600, SIM_WEEK_SECONDS - 7_200)
}

fn lines_to_bytes(lines: &[Value]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("json value serializes"));
        out.push('\n');
    }
    out
}

/// Writes `root/bundle/`, `root/cloud_log.jsonl`, `root/ground_truth.json`
/// (and `root/geo_table.csv` when logins are simulated).
pub fn generate_case(params: &SimParams, root: &Path) -> Result<SimCase, SimError> {
    params.validate()?;
    let mut rng = SplitMix64::new(params.seed);
    let bundle_dir = root.join(BUNDLE_DIR);
    fs::create_dir_all(&bundle_dir).map_err(|source| SimError::IoFailure {
        path: bundle_dir.clone(),
        source,
    })?;
    let skew = params.skew_seconds;
    let lag = |rng: &mut SplitMix64| rng.range_i64(0, params.sync_lag_max_s);
    let legacy = |t: i64| render_legacy(t, Locale::DayFirst);

    let mut files: BTreeMap<&'static str, Vec<Value>> = BTreeMap::new();
    let mut cloud: Vec<CloudDraft> = Vec::new();
    // (true device-clock time, id) of every dated device record
    let mut dated: Vec<(i64, String)> = Vec::new();
    let mut truth = GroundTruth {
        true_skew_seconds: skew,
        ..GroundTruth::default()
    };
    let collected_at = SIM_WEEK_START + SIM_WEEK_SECONDS;
    let owner = format!("suspect.{:04}@example.com", params.seed % 10_000);

    if params.device_profile {
        let (model, brand, manufacturer) = *rng.pick(MODELS);
        let imei: String = (0..15)
            .map(|_| char::from(b'0' + rng.below(10) as u8))
            .collect();
        let mac: Vec<String> = (0..6).map(|_| format!("{:02x}", rng.below(256))).collect();
        let clock = collected_at + rng.range_i64(-30, 30);
        files.entry("device_info.jsonl").or_default().push(json!({
            "id": "devinfo",
            "model": model,
            "brand": brand,
            "manufacturer": manufacturer,
            "android_version": "4.4.2",
            "sdk_level": "19",
            "kernel_name": "builder",
            "imei": imei,
            "wifi_mac": mac.join(":"),
            "device_clock": legacy(clock),
        }));
        dated.push((clock, "devinfo".into()));
        files.entry("phone_state.jsonl").or_default().push(json!({
            "id": "state",
            "screen_lock_enabled": rng.below(2) == 1,
            "developer_option_enabled": rng.below(2) == 1,
            "flight_mode_on": true,
            "encryption_enabled": false,
            "screen_saver_enabled": rng.below(2) == 1,
            "battery_percent": rng.range_i64(5, 100),
        }));
        files.entry("sim.jsonl").or_default().push(json!({
            "id": "sim-0",
            "status": "ready",
            "operator_number": "27201",
            "country": "ie",
            "serial": format!("8935301{:012}", rng.below(1_000_000_000_000)),
            "sim_type": "GSM",
        }));
        files
            .entry("configured_emails.jsonl")
            .or_default()
            .push(json!({"id": "email-0", "address": owner}));
        for (i, name) in RUNNING.iter().enumerate() {
            if rng.below(2) == 1 {
                files
                    .entry("running_apps.jsonl")
                    .or_default()
                    .push(json!({"id": format!("run-{i}"), "name": name}));
            }
        }
        for (i, ssid) in SSIDS.iter().enumerate() {
            let t = device_time(&mut rng);
            files.entry("wifi_history.jsonl").or_default().push(
                json!({"id": format!("wifi-{i}"), "ssid": ssid, "last_connected": legacy(t)}),
            );
            dated.push((t, format!("wifi-{i}")));
        }
        for (i, url) in SITES.iter().enumerate() {
            let t = device_time(&mut rng);
            files.entry("browser_history.jsonl").or_default().push(json!({"id": format!("web-{i}"), "url": url, "title": format!("Page {i}"), "visited_at": legacy(t)}));
            dated.push((t, format!("web-{i}")));
        }
        truth.owner_account = owner.clone();
    }

    for i in 0..params.n_apps {
        let id = format!("app-{i:03}");
        let package = format!("com.sim.app{i:03}");
        let installed = device_time(&mut rng);
        let uninstalled = rng.unit() < params.uninstall_fraction;
        let status = if uninstalled {
            "Uninstalled"
        } else if rng.below(3) == 0 {
            "ThirdParty"
        } else {
            "All"
        };
        files
            .entry("installed_apps.jsonl")
            .or_default()
            .push(json!({
                "id": id,
                "name": format!("App{i:03}"),
                "package": package,
                "status": status,
                "installed": legacy(installed),
            }));
        dated.push((installed, id));
        cloud.push(CloudDraft {
            t: installed + skew + lag(&mut rng),
            kind: "Install",
            object: package.clone(),
            size: None,
            digest: None,
            ip: None,
            link_record: None,
        });
        if uninstalled {
            let removed = installed + rng.range_i64(600, 86_400);
            cloud.push(CloudDraft {
                t: removed + skew + lag(&mut rng),
                kind: "Uninstall",
                object: package.clone(),
                size: None,
                digest: None,
                ip: None,
                link_record: None,
            });
            truth.uninstalled_packages.push(package);
        }
    }

    let peers: Vec<String> = (0..8)
        .map(|_| format!("+35386{:07}", rng.below(10_000_000)))
        .collect();
    for i in 0..params.n_messages {
        let id = format!("msg-{i:03}");
        let t = device_time(&mut rng);
        let body: Vec<&str> = (0..rng.range_i64(0, 6)).map(|_| *rng.pick(WORDS)).collect();
        let direction = if rng.below(2) == 0 {
            "Incoming"
        } else {
            "Outgoing"
        };
        files.entry("messages.jsonl").or_default().push(json!({
            "id": id,
            "peer": rng.pick(&peers),
            "body": body.join(" "),
            "direction": direction,
            "delivered_at": legacy(t),
        }));
        dated.push((t, id));
    }
    for i in 0..params.n_calls {
        let id = format!("call-{i:03}");
        let t = device_time(&mut rng);
        let direction = if rng.below(2) == 0 {
            "Incoming"
        } else {
            "Outgoing"
        };
        files.entry("calls.jsonl").or_default().push(json!({
            "id": id,
            "peer": rng.pick(&peers),
            "at": legacy(t),
            "direction": direction,
            "duration_s": rng.range_i64(0, 1_800),
        }));
        dated.push((t, id));
    }

    if params.n_contacts > 0 {
        let clique: Vec<String> = (0..3)
            .map(|k| format!("+35387{k}{:06}", rng.below(1_000_000)))
            .collect();
        let clique_contacts = 1 + rng.below(params.n_contacts.min(3) as u64) as usize;
        for j in 0..params.n_contacts {
            let numbers: Vec<String> = if j < clique_contacts {
                let mut c = clique.clone();
                c.rotate_left(j % 3);
                c
            } else {
                (0..rng.range_i64(1, 2))
                    .map(|k| format!("+4477{j:04}{k}"))
                    .collect()
            };
            files.entry("contacts.jsonl").or_default().push(json!({
                "id": format!("contact-{j:03}"),
                "name": format!("Contact {j}"),
                "numbers": numbers,
            }));
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let (x, y) = if clique[a] < clique[b] {
                    (a, b)
                } else {
                    (b, a)
                };
                truth.planted_edges.push(PlantedEdge {
                    a: clique[x].clone(),
                    b: clique[y].clone(),
                    count: clique_contacts as u32,
                });
            }
        }
    }

    for i in 0..params.n_uploads {
        let id = format!("sync-{i:03}");
        let t = device_time(&mut rng);
        let content: Vec<u8> = (0..4).flat_map(|_| rng.next_u64().to_le_bytes()).collect();
        let digest = Digest256::of(&content);
        let size = 10_000 + rng.below(5_000_000);
        let object = format!("IMG_{i:04}.jpg");
        files.entry("sync_log.jsonl").or_default().push(json!({
            "id": id,
            "kind": "Upload",
            "object": object,
            "content_digest": digest.to_hex(),
            "size_bytes": size,
            "account": owner,
            "at": legacy(t),
        }));
        dated.push((t, id.clone()));
        cloud.push(CloudDraft {
            t: t + skew + lag(&mut rng),
            kind: "Upload",
            object,
            size: Some(size),
            digest: params.digest_logging.then_some(digest),
            ip: None,
            link_record: Some(id),
        });
    }

    for _ in 0..params.n_logins {
        let t = device_time(&mut rng) + skew;
        cloud.push(CloudDraft {
            t,
            kind: "Login",
            object: "session".into(),
            size: None,
            digest: None,
            ip: Some(rng.pick(LOGIN_IPS).to_string()),
            link_record: None,
        });
    }

    cloud.sort_by(|a, b| (a.t, a.kind, &a.object).cmp(&(b.t, b.kind, &b.object)));
    let mut cloud_lines = Vec::with_capacity(cloud.len());
    let mut ordering: Vec<(i64, u8, String)> =
        dated.into_iter().map(|(t, id)| (t, 0, id)).collect();
    for (n, ev) in cloud.iter().enumerate() {
        let id = format!("ev-{n:05}");
        let mut line = json!({
            "id": id,
            "kind": ev.kind,
            "ts": render_iso(ev.t),
            "account": owner,
            "object": ev.object,
        });
        if let Some(s) = ev.size {
            line["size"] = json!(s);
        }
        if let Some(d) = ev.digest {
            line["content_digest"] = json!(d.to_hex());
        }
        if let Some(ip) = &ev.ip {
            line["ip"] = json!(ip);
        }
        cloud_lines.push(line);
        if let Some(rec) = &ev.link_record {
            truth.true_links.push((rec.clone(), id.clone()));
        }
        ordering.push((ev.t - skew, 1, id));
    }
    ordering.sort();
    truth.true_timeline = ordering.into_iter().map(|(_, _, id)| id).collect();
    truth.true_links.sort();
    truth.uninstalled_packages.sort();

    let manifest = json!({
        "dump_id": format!("SIM-{:016x}", params.seed),
        "collected_at": render_iso(collected_at),
        "zone_offset_minutes": 0,
        "tool_name": "mcf-sim",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "examiner": "simulator",
        "isolation_method": "AirplaneMode",
    });
    write(
        &bundle_dir.join(MANIFEST_FILE),
        format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest).expect("json")
        ),
    )?;
    for (name, lines) in &files {
        write(&bundle_dir.join(name), lines_to_bytes(lines))?;
    }
    let cloud_log = root.join(CLOUD_LOG_FILE);
    write(&cloud_log, lines_to_bytes(&cloud_lines))?;
    let geo_table = if params.n_logins > 0 {
        let path = root.join(GEO_TABLE_FILE);
        write(
            &path,
            "range_start_ip,range_end_ip,country,city\n192.0.2.0,192.0.2.255,IE,Dublin\n198.51.100.0,198.51.100.255,IE,Cork\n203.0.113.0,203.0.113.127,GB,London\n",
        )?;
        Some(path)
    } else {
        None
    };
    let ground_truth_path = root.join(GROUND_TRUTH_FILE);
    write(
        &ground_truth_path,
        format!("{}\n", serde_json::to_string_pretty(&truth).expect("json")),
    )?;

    Ok(SimCase {
        root: root.to_path_buf(),
        bundle_dir,
        cloud_log,
        ground_truth_path,
        geo_table,
        ground_truth: truth,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperOutcome {
    /// Index of the mutated record in chain order.
    pub tamper_index: usize,
    pub record_id: String,
    pub file: String,
    pub line: usize,
    pub attribute: String,
}

/// Flips one pseudo-random ASCII letter or digit inside one pseudo-random
/// record's attribute values, in place, keeping the line valid JSON.
pub fn inject_tamper(bundle: &Path, seed: u64) -> Result<TamperOutcome, SimError> {
    let locale = SealedManifest::read(bundle)
        .map(|s| s.locale)
        .unwrap_or_default();
    let dump = ingest_device_dump_with(bundle, IngestOptions { locale })?;
    if dump.records.is_empty() {
        return Err(SimError::EmptyBundle);
    }
    let mut rng = SplitMix64::new(seed);
    let n = dump.records.len();
    let start = rng.below(n as u64) as usize;
    for step in 0..n {
        let index = (start + step) % n;
        let record = &dump.records[index];
        let file = record.attribute(ATTR_FILE).unwrap_or_default().to_string();
        let line_no: usize = record
            .attribute(ATTR_LINE)
            .and_then(|l| l.parse().ok())
            .unwrap_or(0);
        let Some(cat_file) = CategoryFile::lookup(&file) else {
            continue;
        };
        let path = bundle.join(&file);
        let bytes = fs::read(&path).map_err(|source| SimError::IoFailure {
            path: path.clone(),
            source,
        })?;
        let (line_start, line_end) = line_span(&bytes, line_no);
        let line = &bytes[line_start..line_end];
        let mut targets: Vec<(String, Vec<usize>)> = string_values(line)
            .into_iter()
            .filter(|(key, _)| key != "id" && Some(key.as_str()) != cat_file.timestamp_key)
            .map(|(key, span)| (key, mutable_positions(line, span)))
            .filter(|(_, pos)| !pos.is_empty())
            .collect();
        if targets.is_empty() {
            continue;
        }
        targets.sort();
        let (key, positions) = &targets[rng.below(targets.len() as u64) as usize];
        let pos = positions[rng.below(positions.len() as u64) as usize];
        let original = line[pos];
        const ALNUM: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
        let choices: Vec<u8> = ALNUM.iter().copied().filter(|&c| c != original).collect();
        let replacement = choices[rng.below(choices.len() as u64) as usize];
        let mut mutated = bytes.clone();
        mutated[line_start + pos] = replacement;
        write(&path, &mutated)?;
        return Ok(TamperOutcome {
            tamper_index: index,
            record_id: record.record_id().to_string(),
            file,
            line: line_no,
            attribute: key.clone(),
        });
    }
    Err(SimError::EmptyBundle)
}

/// Byte range of 1-based line `n` (without its terminator).
fn line_span(bytes: &[u8], n: usize) -> (usize, usize) {
    let mut start = 0;
    for _ in 1..n {
        start += bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len() - start, |p| p + 1);
    }
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map_or(bytes.len(), |p| start + p);
    let end = if end > start && bytes[end - 1] == b'\r' {
        end - 1
    } else {
        end
    };
    (start, end)
}

/// Top-level `key -> raw byte span of the string value` pairs of a JSON
/// object line (spans exclude the quotes). Non-string values are skipped.
fn string_values(line: &[u8]) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < line.len() && line[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    if line.get(i) != Some(&b'{') {
        return out;
    }
    i += 1;
    loop {
        skip_ws(&mut i);
        if line.get(i) != Some(&b'"') {
            return out;
        }
        let Some(key_end) = string_end(line, i) else {
            return out;
        };
        let key: String = serde_json::from_slice(&line[i..=key_end]).unwrap_or_default();
        i = key_end + 1;
        skip_ws(&mut i);
        if line.get(i) != Some(&b':') {
            return out;
        }
        i += 1;
        skip_ws(&mut i);
        if line.get(i) == Some(&b'"') {
            let Some(end) = string_end(line, i) else {
                return out;
            };
            out.push((key, (i + 1, end)));
            i = end + 1;
        } else {
            let mut depth = 0i32;
            while i < line.len() {
                match line[i] {
                    b'"' => match string_end(line, i) {
                        Some(e) => i = e,
                        None => return out,
                    },
                    b'{' | b'[' => depth += 1,
                    b'}' | b']' if depth > 0 => depth -= 1,
                    b',' | b'}' if depth == 0 => break,
                    _ => {}
                }
                i += 1;
            }
        }
        skip_ws(&mut i);
        match line.get(i) {
            Some(b',') => i += 1,
            _ => return out,
        }
    }
}

/// Index of the closing quote of the string literal opening at `start`.
fn string_end(line: &[u8], start: usize) -> Option<usize> {
    let mut i = start + 1;
    while i < line.len() {
        match line[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

/// Positions of unescaped ASCII letters/digits inside a string literal span.
fn mutable_positions(line: &[u8], (start, end): (usize, usize)) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = start;
    while i < end {
        match line[i] {
            b'\\' => i += if line.get(i + 1) == Some(&b'u') { 6 } else { 2 },
            b if b.is_ascii_alphanumeric() => {
                out.push(i);
                i += 1;
            }
            _ => i += 1,
        }
    }
    out
}
