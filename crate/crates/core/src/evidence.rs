//! Canonical evidence model: timestamps, records, digests and the
//! deterministic byte encoding every digest is computed over.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Field separator in the canonical encoding.
pub const FIELD_SEP: u8 = 0x1f;
/// Record terminator in the canonical encoding.
pub const RECORD_TERM: u8 = 0x1e;
/// Escape byte; precedes any literal occurrence of itself or a separator.
pub const ESCAPE: u8 = 0x1b;

/// Name of the only supported digest algorithm, as written in manifests.
pub const DIGEST_ALGORITHM: &str = "sha-256";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("unparseable timestamp: {0:?}")]
    UnparseableTimestamp(String),
    #[error("impossible date: {0:?}")]
    ImpossibleDate(String),
    #[error("record id must be nonempty")]
    EmptyRecordId,
    #[error("attribute keys must be nonempty (record {0})")]
    EmptyAttributeKey(String),
    #[error("invalid digest hex: {0:?}")]
    InvalidDigest(String),
    #[error("unknown artifact category: {0:?}")]
    UnknownCategory(String),
    #[error("stored digest {stored} does not match recomputed {computed} for record {record_id}")]
    DigestMismatch {
        record_id: String,
        stored: Digest256,
        computed: Digest256,
    },
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest256([u8; 32]);

impl Digest256 {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses 64 hex characters; either case is accepted on input.
    pub fn from_hex(s: &str) -> Result<Self, EvidenceError> {
        let mut out = [0u8; 32];
        if s.len() != 64 {
            return Err(EvidenceError::InvalidDigest(s.to_string()));
        }
        hex::decode_to_slice(s, &mut out)
            .map_err(|_| EvidenceError::InvalidDigest(s.to_string()))?;
        Ok(Self(out))
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256({})", self.to_hex())
    }
}

impl FromStr for Digest256 {
    type Err = EvidenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for Digest256 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest256 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Seconds since the Unix epoch (UTC) plus the exact text it was read from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtcTimestamp {
    seconds: i64,
    original: String,
}

impl UtcTimestamp {
    pub fn new(seconds: i64, original: impl Into<String>) -> Self {
        Self {
            seconds,
            original: original.into(),
        }
    }

    /// A timestamp whose original text is its own ISO-8601 rendering.
    pub fn from_epoch(seconds: i64) -> Self {
        Self {
            seconds,
            original: render_iso(seconds),
        }
    }

    pub fn seconds(&self) -> i64 {
        self.seconds
    }

    pub fn original_text(&self) -> &str {
        &self.original
    }

    pub fn to_iso(&self) -> String {
        render_iso(self.seconds)
    }
}

/// Renders epoch seconds as `YYYY-MM-DDThh:mm:ssZ`.
pub fn render_iso(seconds: i64) -> String {
    match DateTime::from_timestamp(seconds, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => format!("@{seconds}"),
    }
}

/// Renders epoch seconds in the legacy `DD/MM/YYYY hh:mm:ss AM` form.
pub fn render_legacy(seconds: i64, locale: Locale) -> String {
    let Some(dt) = DateTime::from_timestamp(seconds, 0) else {
        return format!("@{seconds}");
    };
    match locale {
        Locale::DayFirst => dt.format("%d/%m/%Y %I:%M:%S %p").to_string(),
        Locale::MonthFirst => dt.format("%m/%d/%Y %I:%M:%S %p").to_string(),
    }
}

/// Field order of the `DD/MM/YYYY` legacy timestamp form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Locale {
    #[default]
    DayFirst,
    MonthFirst,
}

impl FromStr for Locale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "day-first" | "dayfirst" => Ok(Locale::DayFirst),
            "month-first" | "monthfirst" => Ok(Locale::MonthFirst),
            other => Err(format!("unknown locale {other:?}")),
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Locale::DayFirst => "day-first",
            Locale::MonthFirst => "month-first",
        })
    }
}

/// Parses an ISO-8601 (`Z` or `±hh:mm`) or legacy 12-hour timestamp into UTC.
///
/// `zone_offset_minutes` is the local offset east of UTC and applies only to
/// the legacy form; ISO input carries its own zone and ignores `locale`.
pub fn normalize_timestamp(
    raw: &str,
    locale: Locale,
    zone_offset_minutes: i32,
) -> Result<UtcTimestamp, EvidenceError> {
    let seconds = if let Some(fields) = split_iso(raw) {
        iso_seconds(raw, fields)?
    } else if let Some(fields) = split_legacy(raw) {
        legacy_seconds(raw, fields, locale)? - i64::from(zone_offset_minutes) * 60
    } else {
        return Err(EvidenceError::UnparseableTimestamp(raw.to_string()));
    };
    Ok(UtcTimestamp::new(seconds, raw))
}

struct IsoFields {
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    minute: u32,
    second: u32,
    offset_minutes: i64,
}

fn digits(s: &str, min: usize, max: usize) -> Option<u32> {
    if s.len() < min || s.len() > max || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn split_iso(raw: &str) -> Option<IsoFields> {
    let (date, rest) = raw.split_once('T')?;
    let mut d = date.split('-');
    let year = digits(d.next()?, 4, 4)? as i32;
    let month = digits(d.next()?, 2, 2)?;
    let day = digits(d.next()?, 2, 2)?;
    if d.next().is_some() || rest.len() < 9 {
        return None;
    }
    let (clock, zone) = rest.split_at(8);
    let mut c = clock.split(':');
    let hour = digits(c.next()?, 2, 2)?;
    let minute = digits(c.next()?, 2, 2)?;
    let second = digits(c.next()?, 2, 2)?;
    let offset_minutes = if zone == "Z" {
        0
    } else {
        let sign = match zone.as_bytes().first()? {
            b'+' => 1,
            b'-' => -1,
            _ => return None,
        };
        let z = &zone[1..];
        let (h, m) = z
            .split_once(':')
            .unwrap_or_else(|| z.split_at(z.len().min(2)));
        sign * (i64::from(digits(h, 2, 2)?) * 60 + i64::from(digits(m, 2, 2)?))
    };
    Some(IsoFields {
        year,
        month,
        day,
        hour,
        minute,
        second,
        offset_minutes,
    })
}

fn civil_seconds(
    raw: &str,
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    minute: u32,
    second: u32,
) -> Result<i64, EvidenceError> {
    let impossible = || EvidenceError::ImpossibleDate(raw.to_string());
    if hour > 23 || minute > 59 || second > 59 {
        return Err(impossible());
    }
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(impossible)?;
    let dt = date
        .and_hms_opt(hour, minute, second)
        .ok_or_else(impossible)?;
    Ok(dt.and_utc().timestamp())
}

fn iso_seconds(raw: &str, f: IsoFields) -> Result<i64, EvidenceError> {
    if f.offset_minutes.abs() >= 24 * 60 {
        return Err(EvidenceError::ImpossibleDate(raw.to_string()));
    }
    let local = civil_seconds(raw, f.year, f.month, f.day, f.hour, f.minute, f.second)?;
    Ok(local - f.offset_minutes * 60)
}

struct LegacyFields {
    first: u32,
    second_field: u32,
    year: i32,
    hour: u32,
    minute: u32,
    second: u32,
    pm: bool,
}

fn split_legacy(raw: &str) -> Option<LegacyFields> {
    let mut parts = raw.split(' ');
    let date = parts.next()?;
    let clock = parts.next()?;
    let meridiem = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    let pm = match meridiem.to_ascii_uppercase().as_str() {
        "AM" => false,
        "PM" => true,
        _ => return None,
    };
    let mut d = date.split('/');
    let first = digits(d.next()?, 1, 2)?;
    let second_field = digits(d.next()?, 1, 2)?;
    let year = digits(d.next()?, 4, 4)? as i32;
    let mut c = clock.split(':');
    let hour = digits(c.next()?, 1, 2)?;
    let minute = digits(c.next()?, 2, 2)?;
    let second = digits(c.next()?, 2, 2)?;
    if d.next().is_some() || c.next().is_some() {
        return None;
    }
    Some(LegacyFields {
        first,
        second_field,
        year,
        hour,
        minute,
        second,
        pm,
    })
}

fn legacy_seconds(raw: &str, f: LegacyFields, locale: Locale) -> Result<i64, EvidenceError> {
    let (day, month) = match locale {
        Locale::DayFirst => (f.first, f.second_field),
        Locale::MonthFirst => (f.second_field, f.first),
    };
    if f.hour == 0 || f.hour > 12 {
        return Err(EvidenceError::ImpossibleDate(raw.to_string()));
    }
    let hour = match (f.hour, f.pm) {
        (12, false) => 0,
        (12, true) => 12,
        (h, false) => h,
        (h, true) => h + 12,
    };
    civil_seconds(raw, f.year, month, day, hour, f.minute, f.second)
}

/// Closed set of artifact kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArtifactCategory {
    DeviceInfo,
    PhoneState,
    ConfiguredEmail,
    InstalledApp,
    BrowserHistory,
    RunningApp,
    WifiHistory,
    SimCard,
    Contact,
    Message,
    CallRecord,
    CloudEvent,
}

impl ArtifactCategory {
    pub const ALL: [ArtifactCategory; 12] = [
        ArtifactCategory::DeviceInfo,
        ArtifactCategory::PhoneState,
        ArtifactCategory::ConfiguredEmail,
        ArtifactCategory::InstalledApp,
        ArtifactCategory::BrowserHistory,
        ArtifactCategory::RunningApp,
        ArtifactCategory::WifiHistory,
        ArtifactCategory::SimCard,
        ArtifactCategory::Contact,
        ArtifactCategory::Message,
        ArtifactCategory::CallRecord,
        ArtifactCategory::CloudEvent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactCategory::DeviceInfo => "DeviceInfo",
            ArtifactCategory::PhoneState => "PhoneState",
            ArtifactCategory::ConfiguredEmail => "ConfiguredEmail",
            ArtifactCategory::InstalledApp => "InstalledApp",
            ArtifactCategory::BrowserHistory => "BrowserHistory",
            ArtifactCategory::RunningApp => "RunningApp",
            ArtifactCategory::WifiHistory => "WifiHistory",
            ArtifactCategory::SimCard => "SimCard",
            ArtifactCategory::Contact => "Contact",
            ArtifactCategory::Message => "Message",
            ArtifactCategory::CallRecord => "CallRecord",
            ArtifactCategory::CloudEvent => "CloudEvent",
        }
    }
}

impl fmt::Display for ArtifactCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactCategory {
    type Err = EvidenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| EvidenceError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Device,
    Cloud,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Device => "Device",
            Source::Cloud => "Cloud",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One typed, timestamped artifact entry.
///
/// Fields are private so the stored digest can never drift from the content:
/// every constructor and mutator recomputes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr", into = "RecordRepr")]
pub struct EvidenceRecord {
    record_id: String,
    category: ArtifactCategory,
    timestamp: Option<UtcTimestamp>,
    attributes: BTreeMap<String, String>,
    source: Source,
    digest: Digest256,
}

impl EvidenceRecord {
    pub fn new(
        record_id: impl Into<String>,
        category: ArtifactCategory,
        timestamp: Option<UtcTimestamp>,
        attributes: impl IntoIterator<Item = (String, String)>,
        source: Source,
    ) -> Result<Self, EvidenceError> {
        let record_id = record_id.into();
        if record_id.is_empty() {
            return Err(EvidenceError::EmptyRecordId);
        }
        let attributes: BTreeMap<String, String> = attributes.into_iter().collect();
        if attributes.keys().any(String::is_empty) {
            return Err(EvidenceError::EmptyAttributeKey(record_id));
        }
        let mut record = Self {
            record_id,
            category,
            timestamp,
            attributes,
            source,
            digest: Digest256([0; 32]),
        };
        record.digest = record_digest(&record);
        Ok(record)
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn category(&self) -> ArtifactCategory {
        self.category
    }

    pub fn timestamp(&self) -> Option<&UtcTimestamp> {
        self.timestamp.as_ref()
    }

    pub fn attributes(&self) -> &BTreeMap<String, String> {
        &self.attributes
    }

    pub fn attribute(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn digest(&self) -> Digest256 {
        self.digest
    }

    /// Replaces (or inserts) one attribute and re-derives the digest.
    pub fn set_attribute(
        &mut self,
        key: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<(), EvidenceError> {
        let key = key.into();
        if key.is_empty() {
            return Err(EvidenceError::EmptyAttributeKey(self.record_id.clone()));
        }
        self.attributes.insert(key, value.into());
        self.digest = record_digest(self);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    record_id: String,
    category: ArtifactCategory,
    timestamp: Option<UtcTimestamp>,
    source: Source,
    attributes: BTreeMap<String, String>,
    digest: Digest256,
}

impl From<EvidenceRecord> for RecordRepr {
    fn from(r: EvidenceRecord) -> Self {
        RecordRepr {
            record_id: r.record_id,
            category: r.category,
            timestamp: r.timestamp,
            source: r.source,
            attributes: r.attributes,
            digest: r.digest,
        }
    }
}

impl TryFrom<RecordRepr> for EvidenceRecord {
    type Error = EvidenceError;
    fn try_from(r: RecordRepr) -> Result<Self, Self::Error> {
        let record =
            EvidenceRecord::new(r.record_id, r.category, r.timestamp, r.attributes, r.source)?;
        if record.digest != r.digest {
            return Err(EvidenceError::DigestMismatch {
                record_id: record.record_id,
                stored: r.digest,
                computed: record.digest,
            });
        }
        Ok(record)
    }
}

/// Appends `field` with separator/escape bytes escaped.
pub(crate) fn push_escaped(out: &mut Vec<u8>, field: &str) {
    for &b in field.as_bytes() {
        if b == ESCAPE || b == FIELD_SEP || b == RECORD_TERM {
            out.push(ESCAPE);
        }
        out.push(b);
    }
}

/// Encodes an ordered list of text fields as one canonical record.
pub(crate) fn encode_fields<'a>(fields: impl IntoIterator<Item = &'a str>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, field) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(FIELD_SEP);
        }
        push_escaped(&mut out, field);
    }
    out.push(RECORD_TERM);
    out
}

/// Deterministic byte encoding of a record.
///
/// Layout: `record_id US category US timestamp-text US source (US key US value)* RS`
/// with attributes in ascending key order. An absent timestamp encodes as an
/// empty field. Literal ESC/US/RS bytes inside a field are prefixed with ESC.
pub fn canonical_encode(record: &EvidenceRecord) -> Vec<u8> {
    let ts = record.timestamp.as_ref().map_or("", |t| t.original_text());
    let header = [
        record.record_id.as_str(),
        record.category.as_str(),
        ts,
        record.source.as_str(),
    ];
    let attrs = record
        .attributes
        .iter()
        .flat_map(|(k, v)| [k.as_str(), v.as_str()]);
    encode_fields(header.into_iter().chain(attrs))
}

pub fn record_digest(record: &EvidenceRecord) -> Digest256 {
    Digest256::of(&canonical_encode(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent proleptic-Gregorian day count (Hinnant's days_from_civil).
    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        let y = if m <= 2 { y - 1 } else { y };
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146097 + doe - 719468
    }

    fn oracle(y: i64, mo: i64, d: i64, h: i64, mi: i64, s: i64) -> i64 {
        days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s
    }

    fn rec(attrs: &[(&str, &str)]) -> EvidenceRecord {
        EvidenceRecord::new(
            "r1",
            ArtifactCategory::Message,
            Some(UtcTimestamp::from_epoch(0)),
            attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())),
            Source::Device,
        )
        .unwrap()
    }

    #[test]
    fn legacy_day_first_values() {
        let ts = normalize_timestamp("16/12/2015 11:58:23 PM", Locale::DayFirst, 0).unwrap();
        assert_eq!(ts.seconds(), oracle(2015, 12, 16, 23, 58, 23));
        assert_eq!(ts.to_iso(), "2015-12-16T23:58:23Z");
        assert_eq!(ts.original_text(), "16/12/2015 11:58:23 PM");

        let ts = normalize_timestamp("06/04/2016 02:33:53 PM", Locale::DayFirst, 0).unwrap();
        assert_eq!(ts.seconds(), oracle(2016, 4, 6, 14, 33, 53));
        assert_eq!(ts.to_iso(), "2016-04-06T14:33:53Z");
    }

    #[test]
    fn epoch_identity() {
        let ts = normalize_timestamp("1970-01-01T00:00:00Z", Locale::DayFirst, 0).unwrap();
        assert_eq!(ts.seconds(), 0);
    }

    #[test]
    fn iso_offsets_and_locale_ignored() {
        let a = normalize_timestamp("2016-05-10T18:51:13+01:00", Locale::MonthFirst, 0).unwrap();
        let b = normalize_timestamp("2016-05-10T17:51:13Z", Locale::DayFirst, 600).unwrap();
        assert_eq!(a.seconds(), b.seconds());
        let c = normalize_timestamp("2016-05-10T12:51:13-0500", Locale::DayFirst, 0).unwrap();
        assert_eq!(c.seconds(), b.seconds());
    }

    #[test]
    fn legacy_zone_offset_and_midnight() {
        let t = normalize_timestamp("10/05/2016 05:51:13 PM", Locale::DayFirst, 60).unwrap();
        assert_eq!(t.seconds(), oracle(2016, 5, 10, 16, 51, 13));
        let m = normalize_timestamp("01/01/2016 12:00:00 AM", Locale::DayFirst, 0).unwrap();
        assert_eq!(m.seconds(), oracle(2016, 1, 1, 0, 0, 0));
        let n = normalize_timestamp("01/01/2016 12:00:00 PM", Locale::DayFirst, 0).unwrap();
        assert_eq!(n.seconds(), oracle(2016, 1, 1, 12, 0, 0));
    }

    #[test]
    fn month_first_rejects_day_thirteen_date() {
        assert_eq!(
            normalize_timestamp("16/12/2015 11:58:23 PM", Locale::MonthFirst, 0),
            Err(EvidenceError::ImpossibleDate(
                "16/12/2015 11:58:23 PM".into()
            ))
        );
        let ok = normalize_timestamp("12/16/2015 11:58:23 PM", Locale::MonthFirst, 0).unwrap();
        assert_eq!(ok.seconds(), oracle(2015, 12, 16, 23, 58, 23));
    }

    #[test]
    fn timestamp_errors() {
        for bad in [
            "",
            "yesterday",
            "2016-05-10 17:51:13",
            "16/12/2015 23:58:23",
            "2016-05-10T17:51:13",
        ] {
            assert!(
                matches!(
                    normalize_timestamp(bad, Locale::DayFirst, 0),
                    Err(EvidenceError::UnparseableTimestamp(_))
                ),
                "{bad}"
            );
        }
        for bad in [
            "31/02/2016 01:00:00 AM",
            "2016-13-01T00:00:00Z",
            "01/01/2016 13:00:00 PM",
            "01/01/2016 00:10:00 AM",
            "2016-01-01T24:00:00Z",
        ] {
            assert!(
                matches!(
                    normalize_timestamp(bad, Locale::DayFirst, 0),
                    Err(EvidenceError::ImpossibleDate(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn empty_input_sha256_constant() {
        assert_eq!(
            Digest256::of(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn encoding_is_insertion_order_independent() {
        let a = rec(&[("peer", "+1"), ("body", "hi")]);
        let b = rec(&[("body", "hi"), ("peer", "+1")]);
        assert_eq!(canonical_encode(&a), canonical_encode(&b));
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn empty_attributes_encode_header_only() {
        let r = rec(&[]);
        assert_eq!(
            canonical_encode(&r),
            b"r1\x1fMessage\x1f1970-01-01T00:00:00Z\x1fDevice\x1e".to_vec()
        );
    }

    #[test]
    fn separators_are_escaped() {
        let r = rec(&[("k", "a\x1fb")]);
        assert!(canonical_encode(&r).ends_with(b"k\x1fa\x1b\x1fb\x1e"));
    }

    #[test]
    fn digest_is_stable_and_tracked() {
        let mut r = rec(&[("body", "hi")]);
        assert_eq!(record_digest(&r), record_digest(&r.clone()));
        let before = r.digest();
        r.set_attribute("body", "ho").unwrap();
        assert_ne!(before, r.digest());
        assert_eq!(r.digest(), record_digest(&r));
    }

    #[test]
    fn invalid_records_rejected() {
        assert_eq!(
            EvidenceRecord::new("", ArtifactCategory::Contact, None, [], Source::Device),
            Err(EvidenceError::EmptyRecordId)
        );
        assert!(EvidenceRecord::new(
            "x",
            ArtifactCategory::Contact,
            None,
            [(String::new(), "v".to_string())],
            Source::Device
        )
        .is_err());
    }

    #[test]
    fn serde_round_trip_checks_digest() {
        let r = rec(&[("body", "hi")]);
        let json = serde_json::to_string(&r).unwrap();
        let back: EvidenceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let forged = json.replace("\"hi\"", "\"ho\"");
        assert!(serde_json::from_str::<EvidenceRecord>(&forged).is_err());
    }

    #[test]
    fn digest_hex_parse() {
        let d = Digest256::of(b"abc");
        assert_eq!(Digest256::from_hex(&d.to_hex()).unwrap(), d);
        assert_eq!(Digest256::from_hex(&d.to_hex().to_uppercase()).unwrap(), d);
        assert!(Digest256::from_hex("abc").is_err());
        assert_eq!(d.to_hex().len(), 64);
        assert_eq!(d.to_hex(), d.to_hex().to_lowercase());
    }

    fn arb_record() -> impl Strategy<Value = EvidenceRecord> {
        (
            "[a-z0-9\\x1b\\x1e\\x1f]{1,6}",
            0usize..12,
            proptest::option::of("[0-9:/ \\x1f]{0,6}"),
            proptest::collection::btree_map("[a-z\\x1f]{1,4}", "[a-z \\x1e\\x1b]{0,5}", 0..4),
            any::<bool>(),
        )
            .prop_map(|(id, cat, ts, attrs, dev)| {
                EvidenceRecord::new(
                    id,
                    ArtifactCategory::ALL[cat],
                    ts.map(|t| UtcTimestamp::new(0, t)),
                    attrs,
                    if dev { Source::Device } else { Source::Cloud },
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn encoding_injective(a in arb_record(), b in arb_record()) {
            let same_fields = a.record_id() == b.record_id()
                && a.category() == b.category()
                && a.timestamp().map(|t| t.original_text()) == b.timestamp().map(|t| t.original_text())
                && a.source() == b.source()
                && a.attributes() == b.attributes();
            prop_assert_eq!(same_fields, canonical_encode(&a) == canonical_encode(&b));
        }

        #[test]
        fn iso_round_trip(secs in 0i64..4_102_444_800) {
            let iso = render_iso(secs);
            let back = normalize_timestamp(&iso, Locale::DayFirst, 0).unwrap();
            prop_assert_eq!(back.seconds(), secs);
        }

        #[test]
        fn legacy_round_trip(secs in 0i64..4_102_444_800, month_first in any::<bool>()) {
            let locale = if month_first { Locale::MonthFirst } else { Locale::DayFirst };
            let text = render_legacy(secs, locale);
            let parsed = normalize_timestamp(&text, locale, 0).unwrap();
            prop_assert_eq!(parsed.seconds(), secs);
            let again = normalize_timestamp(&parsed.to_iso(), locale, 0).unwrap();
            prop_assert_eq!(again.seconds(), secs);
        }

        #[test]
        fn one_byte_avalanche(value in "[a-z]{1,16}", pos in 0usize..16, repl in b'a'..=b'z') {
            let pos = pos % value.len();
            prop_assume!(value.as_bytes()[pos] != repl);
            let mut bytes = value.clone().into_bytes();
            bytes[pos] = repl;
            let mutated = String::from_utf8(bytes).unwrap();
            let a = rec(&[("body", &value)]);
            let b = rec(&[("body", &mutated)]);
            prop_assert_ne!(a.digest(), b.digest());
        }
    }
}
