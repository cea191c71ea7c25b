//! Offline enrichment: an identity co-occurrence graph over phone numbers and
//! email addresses, and IP geolocation against a bundled range table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{CallRecord, ContactRecord, EmailAccountRecord, MessageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdentifierKind {
    Phone,
    Email,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Identifier {
    pub kind: IdentifierKind,
    pub value: String,
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

impl Identifier {
    /// Emails are trimmed and lowercased; phone numbers keep a leading `+`
    /// and their digits, nothing else. No country code is ever inferred.
    pub fn normalize(raw: &str) -> Option<Identifier> {
        let raw = raw.trim();
        if raw.contains('@') {
            return Some(Identifier {
                kind: IdentifierKind::Email,
                value: raw.to_lowercase(),
            });
        }
        let digits: String = raw.chars().filter(char::is_ascii_digit).collect();
        if digits.is_empty() {
            return None;
        }
        let value = if raw.starts_with('+') {
            format!("+{digits}")
        } else {
            digits
        };
        Some(Identifier {
            kind: IdentifierKind::Phone,
            value,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentityGraph {
    pub nodes: BTreeSet<Identifier>,
    /// Keyed by `(smaller, larger)`.
    pub edges: BTreeMap<(Identifier, Identifier), u32>,
}

impl IdentityGraph {
    fn add_artifact(&mut self, ids: BTreeSet<Identifier>) {
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                *self.edges.entry((a.clone(), b.clone())).or_insert(0) += 1;
            }
        }
        self.nodes.extend(ids);
    }

    fn add_owner_link(&mut self, owners: &BTreeSet<Identifier>, peer: Identifier) {
        for owner in owners {
            if *owner != peer {
                let key = if *owner < peer {
                    (owner.clone(), peer.clone())
                } else {
                    (peer.clone(), owner.clone())
                };
                *self.edges.entry(key).or_insert(0) += 1;
            }
        }
        self.nodes.insert(peer);
    }

    pub fn edge_count(&self, a: &str, b: &str) -> u32 {
        let find = |v: &str| Identifier::normalize(v);
        let (Some(a), Some(b)) = (find(a), find(b)) else {
            return 0;
        };
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    /// JSON-friendly adjacency list, nodes in sorted order.
    pub fn adjacency(&self) -> Vec<AdjacencyEntry> {
        let mut adj: BTreeMap<&Identifier, Vec<Neighbor>> =
            self.nodes.iter().map(|n| (n, Vec::new())).collect();
        for ((a, b), &count) in &self.edges {
            adj.entry(a).or_default().push(Neighbor {
                id: b.value.clone(),
                count,
            });
            adj.entry(b).or_default().push(Neighbor {
                id: a.value.clone(),
                count,
            });
        }
        adj.into_iter()
            .map(|(node, mut neighbors)| {
                neighbors.sort_by(|x, y| x.id.cmp(&y.id));
                AdjacencyEntry {
                    id: node.value.clone(),
                    kind: node.kind,
                    neighbors,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyEntry {
    pub id: String,
    pub kind: IdentifierKind,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub count: u32,
}

/// Builds the co-occurrence graph.
///
/// A contact links all of its numbers pairwise. A message or call links each
/// of the device owner's configured accounts to the peer. Configured accounts
/// alone only add nodes.
pub fn build_identity_graph(
    contacts: &[ContactRecord],
    messages: &[MessageRecord],
    calls: &[CallRecord],
    configured_emails: &[EmailAccountRecord],
) -> IdentityGraph {
    let mut graph = IdentityGraph::default();
    let owners: BTreeSet<Identifier> = configured_emails
        .iter()
        .filter_map(|e| Identifier::normalize(&e.address_or_number))
        .collect();
    graph.nodes.extend(owners.iter().cloned());
    for c in contacts {
        graph.add_artifact(
            c.numbers
                .iter()
                .filter_map(|n| Identifier::normalize(n))
                .collect(),
        );
    }
    let peers = messages
        .iter()
        .map(|m| &m.peer_number)
        .chain(calls.iter().map(|c| &c.peer_number));
    for peer in peers {
        if let Some(p) = Identifier::normalize(peer) {
            graph.add_owner_link(&owners, p);
        }
    }
    graph
}

#[derive(Debug, Error)]
pub enum GeoTableError {
    #[error("malformed geo table at row {row}: {reason}")]
    MalformedTable { row: usize, reason: String },
    #[error("cannot read geo table: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoRecord {
    pub ip: String,
    pub country: String,
    pub city: String,
    pub source_table: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoRange {
    pub start: u128,
    pub end: u128,
    pub country: String,
    pub city: String,
}

/// IPv4 addresses are mapped into the IPv6 space so one table can hold both.
pub fn ip_key(ip: IpAddr) -> u128 {
    match ip {
        IpAddr::V4(v4) => u128::from(v4.to_ipv6_mapped()),
        IpAddr::V6(v6) => u128::from(v6),
    }
}

/// Sorted, non-overlapping IP ranges loaded from CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoTable {
    name: String,
    ranges: Vec<GeoRange>,
}

impl GeoTable {
    pub fn new(name: impl Into<String>, ranges: Vec<GeoRange>) -> Result<Self, GeoTableError> {
        for (i, r) in ranges.iter().enumerate() {
            if r.start > r.end {
                return Err(GeoTableError::MalformedTable {
                    row: i + 1,
                    reason: "range start after range end".into(),
                });
            }
            if i > 0 && ranges[i - 1].end >= r.start {
                let reason = if ranges[i - 1].start > r.start {
                    "ranges not sorted by start"
                } else {
                    "ranges overlap"
                };
                return Err(GeoTableError::MalformedTable {
                    row: i + 1,
                    reason: reason.into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            ranges,
        })
    }

    /// CSV rows `range_start_ip,range_end_ip,country,city`; a header row is
    /// accepted when its first field is not an IP address.
    pub fn from_csv_reader(
        name: impl Into<String>,
        reader: impl std::io::Read,
    ) -> Result<Self, GeoTableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut ranges = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| GeoTableError::MalformedTable {
                row: row_no,
                reason: e.to_string(),
            })?;
            let field = |j: usize| row.get(j).map(str::trim).unwrap_or_default();
            let start = field(0).parse::<IpAddr>();
            if i == 0 && start.is_err() {
                continue;
            }
            if row.len() != 4 {
                return Err(GeoTableError::MalformedTable {
                    row: row_no,
                    reason: format!("expected 4 fields, found {}", row.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<IpAddr>()
                    .map(ip_key)
                    .map_err(|_| GeoTableError::MalformedTable {
                        row: row_no,
                        reason: format!("invalid IP {s:?}"),
                    })
            };
            ranges.push(GeoRange {
                start: parse(field(0))?,
                end: parse(field(1))?,
                country: field(2).to_string(),
                city: field(3).to_string(),
            });
        }
        Self::new(name, ranges)
    }

    pub fn load(path: &Path) -> Result<Self, GeoTableError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_reader(name, std::fs::File::open(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ranges(&self) -> &[GeoRange] {
        &self.ranges
    }
}

/// Binary search for the range containing `ip`; unparseable IPs and misses
/// both yield `None`.
pub fn resolve_ip(ip: &str, table: &GeoTable) -> Option<GeoRecord> {
    let key = ip_key(ip.trim().parse().ok()?);
    let idx = table.ranges.partition_point(|r| r.start <= key);
    let range = table.ranges.get(idx.checked_sub(1)?)?;
    (key <= range.end).then(|| GeoRecord {
        ip: ip.to_string(),
        country: range.country.clone(),
        city: range.city.clone(),
        source_table: table.name.clone(),
    })
}
