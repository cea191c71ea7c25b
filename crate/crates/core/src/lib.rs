//! Acquisition, preservation, correlation and reporting for combined
//! mobile-device and cloud-log examinations.

pub mod acquisition;
pub mod case;
pub mod correlation;
pub mod evidence;
pub mod osint;
pub mod preservation;
pub mod report;
pub mod sim;

pub use acquisition::{
    ingest_cloud_log, ingest_device_dump, parse_app_inventory, AcquisitionError, AppRecord,
    AppStatus, CloudEvent, CloudEventKind, CloudLog, DeviceDump, DeviceProfile, LedgerEntry,
};
pub use correlation::{
    build_timeline, derive_cloud_usage_findings, detect_uninstall_evidence, estimate_clock_skew,
    match_synced_artifacts, CloudUsageFinding, CorrelationError, LinkTier, SkewEstimate, SyncLink,
    UnifiedTimeline,
};
pub use evidence::{
    canonical_encode, normalize_timestamp, record_digest, ArtifactCategory, Digest256,
    EvidenceError, EvidenceRecord, Locale, Source, UtcTimestamp,
};
pub use osint::{build_identity_graph, resolve_ip, GeoRecord, GeoTable, IdentityGraph};
pub use preservation::{
    chain_digest, diff_acquisitions, seal, verify_chain, AcquisitionManifest, PreservationError,
    SealedManifest, Verdict, VerificationReport,
};
pub use report::{render_report, CaseReport, ReportFormat};
pub use sim::{generate_case, inject_tamper, GroundTruth, SimParams};
