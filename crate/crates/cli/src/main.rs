use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mcf_core::acquisition::{
    ingest_cloud_log, ingest_device_dump_with, AcquisitionError, BundleManifest, CloudLog,
    IngestOptions,
};
use mcf_core::case::{
    assemble_report, correlate, enrich, read_stage, write_stage, CaseParams, CorrelationStage,
    DumpStage, EnrichmentStage, VerifyStage, CORRELATION_STAGE_FILE, DUMP_STAGE_FILE,
    ENRICHMENT_STAGE_FILE, VERIFY_STAGE_FILE,
};
use mcf_core::correlation::{DEFAULT_MIN_SKEW_SUPPORT, DEFAULT_WINDOW_SECONDS};
use mcf_core::osint::GeoTable;
use mcf_core::preservation::{
    seal_bundle, verify_bundle, IsolationMethod, PreservationError, SealedManifest,
};
use mcf_core::report::{redact, render_value, report_json, ReportFormat};
use mcf_core::sim::{generate_case, inject_tamper, SimError, SimParams, GROUND_TRUTH_FILE};
use mcf_core::{canonical_encode, diff_acquisitions, Locale, Verdict};

const DIFF_FILE: &str = "diff.json";

#[derive(Parser, Debug)]
#[command(
    name = "mcf",
    version,
    about = "Mobile device and cloud log forensic pipeline"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct AnalysisArgs {
    /// Metadata matching window, seconds.
    #[arg(long, default_value_t = DEFAULT_WINDOW_SECONDS)]
    window_seconds: i64,
    /// Exact-digest pairs needed before a clock skew is estimated.
    #[arg(long, default_value_t = DEFAULT_MIN_SKEW_SUPPORT)]
    min_skew_support: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bundle, cloud log and ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        n_apps: usize,
        #[arg(long, default_value_t = 12)]
        n_messages: usize,
        #[arg(long, default_value_t = 6)]
        n_calls: usize,
        #[arg(long, default_value_t = 10)]
        n_uploads: usize,
        #[arg(long, default_value_t = 6)]
        n_contacts: usize,
        #[arg(long, default_value_t = 2)]
        n_logins: usize,
        #[arg(long, default_value_t = 300, allow_hyphen_values = true)]
        skew_seconds: i64,
        #[arg(long, default_value_t = 60)]
        sync_lag_max: i64,
        #[arg(long, default_value_t = 0.25)]
        uninstall_fraction: f64,
        #[arg(long)]
        no_digest_logging: bool,
        #[arg(long)]
        no_device_profile: bool,
        /// Seal the generated bundle.
        #[arg(long)]
        seal: bool,
        /// Seal, then flip one byte chosen by this seed.
        #[arg(long)]
        tamper_seed: Option<u64>,
    },
    /// Parse a bundle into the dump stage file.
    Ingest {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Locale::DayFirst)]
        locale: Locale,
        /// Also write the canonical bytes of every record, in chain order.
        #[arg(long, value_name = "FILE")]
        dump_canonical: Option<PathBuf>,
    },
    /// Compute the hash chain and write the sealed manifest into the bundle.
    Seal {
        bundle: PathBuf,
        /// Defaults to the examiner named in manifest.json.
        #[arg(long)]
        examiner: Option<String>,
        /// Defaults to the isolation method named in manifest.json.
        #[arg(long)]
        isolation: Option<IsolationMethod>,
        #[arg(long, default_value_t = Locale::DayFirst)]
        locale: Locale,
    },
    /// Recompute the chain of a sealed bundle. Exit 3 when tampered.
    Verify {
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record-level difference between two acquisitions of one device.
    Diff {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Locale::DayFirst)]
        locale: Locale,
        #[arg(long)]
        allow_device_mismatch: bool,
    },
    /// Skew estimation, sync matching, timeline and findings.
    Correlate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cloud_log: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Identity graph and IP geolocation.
    Enrich {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cloud_log: Option<PathBuf>,
        #[arg(long)]
        geo_table: Option<PathBuf>,
    },
    /// Render the case report from the stage files.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        case_id: Option<String>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Comma-separated field names whose values are replaced by digests.
        #[arg(long, value_delimiter = ',')]
        redact: Vec<String>,
    },
    /// ingest, seal when unsealed, verify, correlate, enrich and report.
    RunAll {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cloud_log: Option<PathBuf>,
        #[arg(long)]
        geo_table: Option<PathBuf>,
        #[arg(long)]
        case_id: Option<String>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        #[arg(long, value_delimiter = ',')]
        redact: Vec<String>,
        #[arg(long, default_value_t = Locale::DayFirst)]
        locale: Locale,
        #[arg(long)]
        examiner: Option<String>,
        #[arg(long)]
        isolation: Option<IsolationMethod>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

enum Failure {
    Usage(String),
    Tampered,
    Input(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Tampered => 3,
            Failure::Input(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl From<AcquisitionError> for Failure {
    fn from(e: AcquisitionError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<PreservationError> for Failure {
    fn from(e: PreservationError) -> Self {
        match e {
            PreservationError::RecordCountMismatch { .. } => {
                eprintln!("verification: {e}");
                Failure::Tampered
            }
            PreservationError::DeviceMismatch(..) => Failure::Usage(format!(
                "{e}; pass --allow-device-mismatch to compare anyway"
            )),
            PreservationError::Io { .. } => Failure::Other(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParams(m) => Failure::Usage(m),
            SimError::Acquisition(a) => a.into(),
            other => Failure::Other(other.into()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn other(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Other(e.into())
}

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Other)
}

fn save<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome {
    ensure_dir(dir)?;
    write_stage(dir, name, value)
        .with_context(|| format!("cannot write {}", dir.join(name).display()))
        .map_err(Failure::Other)
}

fn load<T: serde::de::DeserializeOwned>(dir: &Path, name: &str, producer: &str) -> Outcome<T> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Failure::Input(anyhow!(
            "{} not found; run `mcf {producer}` first",
            path.display()
        )));
    }
    read_stage(dir, name)
        .with_context(|| format!("cannot read stage file {}", path.display()))
        .map_err(Failure::Input)
}

fn load_cloud_log(path: Option<&Path>) -> Outcome<Option<CloudLog>> {
    path.map(|p| ingest_cloud_log(p).map_err(Failure::from))
        .transpose()
}

fn load_geo(path: Option<&Path>) -> Outcome<Option<GeoTable>> {
    path.map(|p| {
        GeoTable::load(p)
            .with_context(|| format!("geo table {}", p.display()))
            .map_err(Failure::Input)
    })
    .transpose()
}

fn cmd_ingest(bundle: &Path, out: &Path, locale: Locale, dump_canonical: Option<&Path>) -> Outcome {
    let dump = ingest_device_dump_with(bundle, IngestOptions { locale })?;
    eprintln!(
        "ingested {} records from {} ({} ledger entries)",
        dump.records.len(),
        bundle.display(),
        dump.ledger.len()
    );
    if let Some(path) = dump_canonical {
        let bytes: Vec<u8> = dump.records.iter().flat_map(canonical_encode).collect();
        fs::write(path, bytes)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Other)?;
    }
    save(out, DUMP_STAGE_FILE, &DumpStage { locale, dump })
}

fn cmd_seal(
    bundle: &Path,
    examiner: Option<&str>,
    isolation: Option<IsolationMethod>,
    locale: Locale,
) -> Outcome {
    let manifest = BundleManifest::load(bundle)?;
    let examiner = examiner
        .or(manifest.examiner.as_deref())
        .unwrap_or("unspecified");
    let isolation = isolation
        .or(manifest.isolation_method)
        .unwrap_or(IsolationMethod::None);
    let sealed = seal_bundle(bundle, examiner, isolation, locale)?;
    eprintln!(
        "sealed {} records, chain head {}",
        sealed.manifest.record_count, sealed.manifest.chain_head
    );
    Ok(())
}

fn cmd_verify(bundle: &Path, out: Option<&Path>) -> Outcome {
    let (sealed, report) = verify_bundle(bundle)?;
    let stage = VerifyStage::new(&sealed, report);
    if let Some(dir) = out {
        save(dir, VERIFY_STAGE_FILE, &stage)?;
    }
    match stage.report.verdict {
        Verdict::Intact => {
            eprintln!(
                "Intact: {} records, chain head {}",
                stage.record_count, stage.chain_head
            );
            Ok(())
        }
        Verdict::Tampered => {
            eprintln!(
                "Tampered: first divergent record index {}",
                stage
                    .report
                    .first_divergent_index
                    .map_or("unknown".to_string(), |i| i.to_string())
            );
            Err(Failure::Tampered)
        }
    }
}

fn cmd_diff(first: &Path, second: &Path, out: &Path, locale: Locale, allow: bool) -> Outcome {
    let a = ingest_device_dump_with(first, IngestOptions { locale })?;
    let b = ingest_device_dump_with(second, IngestOptions { locale })?;
    let diff = diff_acquisitions(&a, &b, allow)?;
    eprintln!(
        "{} added, {} removed, {} changed, {} identical",
        diff.added.len(),
        diff.removed.len(),
        diff.changed.len(),
        diff.identical_count
    );
    save(out, DIFF_FILE, &diff)
}

fn cmd_correlate(out: &Path, cloud_log: Option<&Path>, analysis: AnalysisArgs) -> Outcome {
    let stage: DumpStage = load(out, DUMP_STAGE_FILE, "ingest")?;
    let log = load_cloud_log(cloud_log)?;
    let params = CaseParams {
        window_seconds: analysis.window_seconds,
        min_skew_support: analysis.min_skew_support,
        locale: stage.locale,
    };
    let corr = correlate(&stage.dump, log.as_ref(), params);
    if let Some(w) = &corr.skew_warning {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{} links, {} findings",
        corr.links.len(),
        corr.findings.len()
    );
    save(out, CORRELATION_STAGE_FILE, &corr)
}

fn cmd_enrich(out: &Path, cloud_log: Option<&Path>, geo_table: Option<&Path>) -> Outcome {
    let stage: DumpStage = load(out, DUMP_STAGE_FILE, "ingest")?;
    let log = load_cloud_log(cloud_log)?;
    let geo = load_geo(geo_table)?;
    let enr = enrich(&stage.dump, log.as_ref(), geo.as_ref());
    eprintln!(
        "{} identifiers, {} edges, {} IPs located",
        enr.node_count,
        enr.edge_count,
        enr.geolocation.len()
    );
    save(out, ENRICHMENT_STAGE_FILE, &enr)
}

fn cmd_report(
    out: &Path,
    case_id: Option<&str>,
    format: ReportFormat,
    policy: &[String],
) -> Outcome<PathBuf> {
    let stage: DumpStage = load(out, DUMP_STAGE_FILE, "ingest")?;
    let verification: Option<VerifyStage> = if out.join(VERIFY_STAGE_FILE).is_file() {
        Some(load(out, VERIFY_STAGE_FILE, "verify")?)
    } else {
        None
    };
    let corr: CorrelationStage = load(out, CORRELATION_STAGE_FILE, "correlate")?;
    let enr: EnrichmentStage = load(out, ENRICHMENT_STAGE_FILE, "enrich")?;
    let case_id = case_id.unwrap_or(&stage.dump.dump_id).to_string();
    let report = assemble_report(&case_id, &stage.dump, verification.as_ref(), &corr, &enr);
    let mut json = report_json(&report);
    if !policy.is_empty() {
        let redaction = redact(&json, policy);
        for key in &redaction.unknown_keys {
            eprintln!("warning: redaction key {key:?} matches no report field");
        }
        json = redaction.report;
    }
    let path = out.join(format.file_name(&case_id));
    fs::write(&path, render_value(&json, format))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Other)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run_all(
    bundle: &Path,
    out: &Path,
    cloud_log: Option<&Path>,
    geo_table: Option<&Path>,
    case_id: Option<&str>,
    format: ReportFormat,
    policy: &[String],
    locale: Locale,
    examiner: Option<&str>,
    isolation: Option<IsolationMethod>,
    analysis: AnalysisArgs,
) -> Outcome {
    cmd_ingest(bundle, out, locale, None)?;
    if !SealedManifest::path(bundle).is_file() {
        cmd_seal(bundle, examiner, isolation, locale)?;
    }
    let verified = cmd_verify(bundle, Some(out));
    if let Err(ref f) = verified {
        if !matches!(f, Failure::Tampered) || !out.join(VERIFY_STAGE_FILE).is_file() {
            return verified;
        }
    }
    cmd_correlate(out, cloud_log, analysis)?;
    cmd_enrich(out, cloud_log, geo_table)?;
    cmd_report(out, case_id, ReportFormat::Json, policy)?;
    if format != ReportFormat::Json {
        cmd_report(out, case_id, format, policy)?;
    }
    verified
}

fn cmd_simulate(out: &Path, params: SimParams, seal: bool, tamper_seed: Option<u64>) -> Outcome {
    ensure_dir(out)?;
    let case = generate_case(&params, out)?;
    if seal || tamper_seed.is_some() {
        seal_bundle(
            &case.bundle_dir,
            "simulator",
            IsolationMethod::AirplaneMode,
            Locale::DayFirst,
        )?;
    }
    if let Some(seed) = tamper_seed {
        let outcome = inject_tamper(&case.bundle_dir, seed)?;
        let mut truth = case.ground_truth.clone();
        truth.tamper_index = Some(outcome.tamper_index);
        let mut text = serde_json::to_string_pretty(&truth).map_err(other)?;
        text.push('\n');
        fs::write(out.join(GROUND_TRUTH_FILE), text).map_err(other)?;
        eprintln!(
            "tampered record {} (index {}) in {} line {}",
            outcome.record_id, outcome.tamper_index, outcome.file, outcome.line
        );
    }
    eprintln!("simulated case written to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate {
            out,
            seed,
            n_apps,
            n_messages,
            n_calls,
            n_uploads,
            n_contacts,
            n_logins,
            skew_seconds,
            sync_lag_max,
            uninstall_fraction,
            no_digest_logging,
            no_device_profile,
            seal,
            tamper_seed,
        } => {
            let params = SimParams {
                seed,
                n_apps,
                n_messages,
                n_calls,
                n_uploads,
                n_contacts,
                n_logins,
                skew_seconds,
                sync_lag_max_s: sync_lag_max,
                uninstall_fraction,
                digest_logging: !no_digest_logging,
                device_profile: !no_device_profile,
            };
            cmd_simulate(&out, params, seal, tamper_seed)
        }
        Command::Ingest {
            bundle,
            out,
            locale,
            dump_canonical,
        } => cmd_ingest(&bundle, &out, locale, dump_canonical.as_deref()),
        Command::Seal {
            bundle,
            examiner,
            isolation,
            locale,
        } => cmd_seal(&bundle, examiner.as_deref(), isolation, locale),
        Command::Verify { bundle, out } => cmd_verify(&bundle, out.as_deref()),
        Command::Diff {
            first,
            second,
            out,
            locale,
            allow_device_mismatch,
        } => cmd_diff(&first, &second, &out, locale, allow_device_mismatch),
        Command::Correlate {
            out,
            cloud_log,
            analysis,
        } => cmd_correlate(&out, cloud_log.as_deref(), analysis),
        Command::Enrich {
            out,
            cloud_log,
            geo_table,
        } => cmd_enrich(&out, cloud_log.as_deref(), geo_table.as_deref()),
        Command::Report {
            out,
            case_id,
            format,
            redact,
        } => cmd_report(&out, case_id.as_deref(), format, &redact).map(|_| ()),
        Command::RunAll {
            bundle,
            out,
            cloud_log,
            geo_table,
            case_id,
            format,
            redact,
            locale,
            examiner,
            isolation,
            analysis,
        } => cmd_run_all(
            &bundle,
            &out,
            cloud_log.as_deref(),
            geo_table.as_deref(),
            case_id.as_deref(),
            format,
            &redact,
            locale,
            examiner.as_deref(),
            isolation,
            analysis,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Tampered => {}
                Failure::Input(e) => eprintln!("input error: {e:#}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
