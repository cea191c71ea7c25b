//! Chain of custody: sealed manifests, linked hash chains over record
//! sequences, tamper localization and acquisition diffing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::acquisition::{ingest_device_dump_with, AcquisitionError, DeviceDump, IngestOptions};
use crate::evidence::{
    canonical_encode, encode_fields, Digest256, EvidenceRecord, Locale, DIGEST_ALGORITHM,
};

pub const SEALED_MANIFEST_FILE: &str = "manifest.sealed.json";

#[derive(Debug, Error)]
pub enum PreservationError {
    #[error("manifest seals {expected} records but {actual} were supplied")]
    RecordCountMismatch { expected: usize, actual: usize },
    #[error("unsupported digest algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("acquisitions come from different devices ({0} vs {1})")]
    DeviceMismatch(String, String),
    #[error("sealed manifest belongs to dump {sealed:?}, bundle is {bundle:?}")]
    DumpIdMismatch { sealed: String, bundle: String },
    #[error("bundle {0} is not sealed")]
    NotSealed(PathBuf),
    #[error("invalid sealed manifest {path}: {reason}")]
    InvalidSealedManifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum IsolationMethod {
    AirplaneMode,
    PoweredOff,
    ShieldedContainer,
    RadioIsolation,
    #[default]
    None,
}

impl FromStr for IsolationMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match folded.as_str() {
            "airplanemode" => Ok(IsolationMethod::AirplaneMode),
            "poweredoff" => Ok(IsolationMethod::PoweredOff),
            "shieldedcontainer" => Ok(IsolationMethod::ShieldedContainer),
            "radioisolation" => Ok(IsolationMethod::RadioIsolation),
            "none" => Ok(IsolationMethod::None),
            _ => Err(format!("unknown isolation method {s:?}")),
        }
    }
}

/// Chain-of-custody envelope over an ordered record set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionManifest {
    pub dump_id: String,
    /// Normalized ISO-8601 text.
    pub collected_at: String,
    pub examiner: String,
    pub isolation_method: IsolationMethod,
    pub digest_algorithm: String,
    pub record_count: usize,
    pub chain_head: Digest256,
}

impl AcquisitionManifest {
    /// Bytes hashed into the first chain link.
    pub fn header_bytes(&self) -> Vec<u8> {
        manifest_header(
            &self.dump_id,
            &self.collected_at,
            &self.examiner,
            &self.digest_algorithm,
        )
    }
}

/// The on-disk `manifest.sealed.json`: manifest plus every per-record link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedManifest {
    #[serde(flatten)]
    pub manifest: AcquisitionManifest,
    /// Locale the bundle was ingested with when sealed.
    pub locale: Locale,
    pub links: Vec<Digest256>,
}

impl SealedManifest {
    pub fn path(bundle: &Path) -> PathBuf {
        bundle.join(SEALED_MANIFEST_FILE)
    }

    pub fn write(&self, bundle: &Path) -> Result<PathBuf, PreservationError> {
        let path = Self::path(bundle);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|source| PreservationError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn read(bundle: &Path) -> Result<Self, PreservationError> {
        let path = Self::path(bundle);
        if !path.is_file() {
            return Err(PreservationError::NotSealed(bundle.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(|source| PreservationError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PreservationError::InvalidSealedManifest {
            path,
            reason: e.to_string(),
        })
    }
}

pub fn manifest_header(
    dump_id: &str,
    collected_at_iso: &str,
    examiner: &str,
    digest_algorithm: &str,
) -> Vec<u8> {
    encode_fields([dump_id, collected_at_iso, examiner, digest_algorithm])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainOutput {
    pub head: Digest256,
    /// `links[i]` is the chain value after absorbing record `i`.
    pub links: Vec<Digest256>,
}

/// `H0 = SHA-256(header)`, `Hi = SHA-256(H(i-1) || canonical_encode(record_i))`.
pub fn chain_digest(manifest_header: &[u8], records: &[EvidenceRecord]) -> ChainOutput {
    let mut current = Digest256::of(manifest_header);
    let mut links = Vec::with_capacity(records.len());
    for record in records {
        let mut h = Sha256::new();
        h.update(current.as_bytes());
        h.update(canonical_encode(record));
        current = Digest256::from_bytes(h.finalize().into());
        links.push(current);
    }
    ChainOutput {
        head: current,
        links,
    }
}

/// Computes the chain over a dump and returns the sealed manifest.
pub fn seal(
    dump: &DeviceDump,
    examiner: &str,
    isolation: IsolationMethod,
    locale: Locale,
) -> SealedManifest {
    let collected_at = dump.collected_at.to_iso();
    let header = manifest_header(&dump.dump_id, &collected_at, examiner, DIGEST_ALGORITHM);
    let chain = chain_digest(&header, &dump.records);
    SealedManifest {
        manifest: AcquisitionManifest {
            dump_id: dump.dump_id.clone(),
            collected_at,
            examiner: examiner.to_string(),
            isolation_method: isolation,
            digest_algorithm: DIGEST_ALGORITHM.to_string(),
            record_count: dump.records.len(),
            chain_head: chain.head,
        },
        locale,
        links: chain.links,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Intact,
    Tampered,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Intact => "Intact",
            Verdict::Tampered => "Tampered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub first_divergent_index: Option<usize>,
    pub expected: Option<Digest256>,
    pub actual: Option<Digest256>,
}

impl VerificationReport {
    fn intact() -> Self {
        Self {
            verdict: Verdict::Intact,
            first_divergent_index: None,
            expected: None,
            actual: None,
        }
    }

    fn tampered(index: usize, expected: Digest256, actual: Digest256) -> Self {
        Self {
            verdict: Verdict::Tampered,
            first_divergent_index: Some(index),
            expected: Some(expected),
            actual: Some(actual),
        }
    }
}

/// Recomputes the chain and compares it with the sealed links.
///
/// With per-record links the reported index is exactly the first record whose
/// link differs. If only the head is available (empty `links`), the index is
/// 0. If every link matches but the head does not, the manifest itself was
/// altered and the index is `record_count`.
pub fn verify_chain(
    sealed: &SealedManifest,
    records: &[EvidenceRecord],
) -> Result<VerificationReport, PreservationError> {
    let manifest = &sealed.manifest;
    if manifest.digest_algorithm != DIGEST_ALGORITHM {
        return Err(PreservationError::UnsupportedAlgorithm(
            manifest.digest_algorithm.clone(),
        ));
    }
    if records.len() != manifest.record_count {
        return Err(PreservationError::RecordCountMismatch {
            expected: manifest.record_count,
            actual: records.len(),
        });
    }
    if !sealed.links.is_empty() && sealed.links.len() != manifest.record_count {
        return Err(PreservationError::RecordCountMismatch {
            expected: sealed.links.len(),
            actual: records.len(),
        });
    }
    let chain = chain_digest(&manifest.header_bytes(), records);
    if let Some((i, (stored, actual))) = sealed
        .links
        .iter()
        .zip(&chain.links)
        .enumerate()
        .find(|(_, (s, a))| s != a)
    {
        return Ok(VerificationReport::tampered(i, *stored, *actual));
    }
    if chain.head != manifest.chain_head {
        let index = if sealed.links.is_empty() {
            0
        } else {
            manifest.record_count
        };
        return Ok(VerificationReport::tampered(
            index,
            manifest.chain_head,
            chain.head,
        ));
    }
    Ok(VerificationReport::intact())
}

/// Seals a bundle on disk, writing `manifest.sealed.json` beside it.
pub fn seal_bundle(
    bundle: &Path,
    examiner: &str,
    isolation: IsolationMethod,
    locale: Locale,
) -> Result<SealedManifest, PreservationError> {
    let dump = ingest_device_dump_with(bundle, IngestOptions { locale })?;
    let sealed = seal(&dump, examiner, isolation, locale);
    sealed.write(bundle)?;
    Ok(sealed)
}

/// Re-ingests a sealed bundle with its sealing locale and verifies it.
pub fn verify_bundle(
    bundle: &Path,
) -> Result<(SealedManifest, VerificationReport), PreservationError> {
    let sealed = SealedManifest::read(bundle)?;
    let dump = ingest_device_dump_with(
        bundle,
        IngestOptions {
            locale: sealed.locale,
        },
    )?;
    if dump.dump_id != sealed.manifest.dump_id {
        return Err(PreservationError::DumpIdMismatch {
            sealed: sealed.manifest.dump_id.clone(),
            bundle: dump.dump_id,
        });
    }
    let report = verify_chain(&sealed, &dump.records)?;
    Ok((sealed, report))
}

/// Record-level difference between two acquisitions of one device.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionDiff {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub changed: Vec<String>,
    pub identical_count: usize,
}

/// Matches records by id; `changed` means same id, different digest.
///
/// Both dumps must report the same IMEI unless `allow_device_mismatch` is set.
pub fn diff_acquisitions(
    a: &DeviceDump,
    b: &DeviceDump,
    allow_device_mismatch: bool,
) -> Result<AcquisitionDiff, PreservationError> {
    if !allow_device_mismatch {
        match (&a.device.imei, &b.device.imei) {
            (Some(x), Some(y)) if x == y => {}
            (x, y) => {
                let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "no IMEI".to_string());
                return Err(PreservationError::DeviceMismatch(show(x), show(y)));
            }
        }
    }
    let left: BTreeMap<&str, Digest256> = a
        .records
        .iter()
        .map(|r| (r.record_id(), r.digest()))
        .collect();
    let right: BTreeMap<&str, Digest256> = b
        .records
        .iter()
        .map(|r| (r.record_id(), r.digest()))
        .collect();
    let mut diff = AcquisitionDiff::default();
    for (id, da) in &left {
        match right.get(id) {
            None => diff.removed.push(id.to_string()),
            Some(db) if db != da => diff.changed.push(id.to_string()),
            Some(_) => diff.identical_count += 1,
        }
    }
    diff.added = right
        .keys()
        .filter(|id| !left.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    Ok(diff)
}
