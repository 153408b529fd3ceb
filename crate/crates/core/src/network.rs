//! Detector network graph: Bluetooth detectors as nodes, directed road links as edges.
//!
//! Detectors are kept sorted by id, so node index order coincides with id order.
//! Shortest-path tie-breaking relies on that: among equal-cost paths the one
//! with the lexicographically smallest detector-id sequence wins.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorId(String);

impl DetectorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for DetectorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for DetectorId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Directed link identity `(from, to)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkKey {
    pub from: DetectorId,
    pub to: DetectorId,
}

impl LinkKey {
    pub fn new(from: impl Into<DetectorId>, to: impl Into<DetectorId>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub id: DetectorId,
    pub name: String,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: DetectorId,
    pub to: DetectorId,
    /// Meters.
    pub length: f64,
    /// km/h.
    pub free_flow_speed: f64,
}

impl Link {
    pub fn key(&self) -> LinkKey {
        LinkKey {
            from: self.from.clone(),
            to: self.to.clone(),
        }
    }

    /// Seconds needed to traverse the link at free-flow speed.
    pub fn free_flow_time(&self) -> f64 {
        self.length / (self.free_flow_speed / 3.6)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read network document {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse network document: {0}")]
    Parse(String),
    #[error("{context}: empty detector id")]
    EmptyId { context: String },
    #[error("{context}: duplicate detector id {id:?}")]
    DuplicateDetector { id: String, context: String },
    #[error("{context}: {source}")]
    Location { context: String, source: GeoError },
    #[error("{context}: unknown detector {id:?}")]
    UnknownDetector { id: String, context: String },
    #[error("{context}: link from {id:?} to itself")]
    SelfLoop { id: String, context: String },
    #[error("{context}: non-positive length {value}")]
    NonPositiveLength { value: f64, context: String },
    #[error("{context}: non-positive free-flow speed {value}")]
    NonPositiveSpeed { value: f64, context: String },
    #[error("{context}: duplicate link {link}")]
    DuplicateLink { link: LinkKey, context: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRecord {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub free_flow_kmh: f64,
}

/// Serialized form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub detectors: Vec<DetectorRecord>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorNetwork {
    detectors: Vec<Detector>,
    index: HashMap<DetectorId, usize>,
    links: Vec<Link>,
    link_index: HashMap<LinkKey, usize>,
    /// Outgoing link indices per detector, ordered by head detector id.
    adjacency: Vec<Vec<usize>>,
}

/// A path through the network together with its accumulated cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub nodes: Vec<DetectorId>,
    pub links: Vec<LinkKey>,
    pub total_cost: f64,
}

impl DetectorNetwork {
    pub fn from_document(doc: NetworkDocument) -> Result<Self, NetworkError> {
        let mut detectors = Vec::with_capacity(doc.detectors.len());
        let mut seen = HashMap::new();
        for (i, rec) in doc.detectors.into_iter().enumerate() {
            let context = format!("detectors[{i}]");
            if rec.id.is_empty() {
                return Err(NetworkError::EmptyId { context });
            }
            if seen.insert(rec.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateDetector { id: rec.id, context });
            }
            let location = GeoPoint::new(rec.lat, rec.lon)
                .map_err(|source| NetworkError::Location { context, source })?;
            detectors.push(Detector {
                id: DetectorId(rec.id),
                name: rec.name,
                location,
            });
        }
        detectors.sort_by(|a, b| a.id.cmp(&b.id));
        let index: HashMap<DetectorId, usize> = detectors
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i))
            .collect();

        let mut links = Vec::with_capacity(doc.links.len());
        let mut link_index = HashMap::new();
        for (i, rec) in doc.links.into_iter().enumerate() {
            let context = format!("links[{i}]");
            for id in [&rec.from, &rec.to] {
                if !index.contains_key(id.as_str()) {
                    return Err(NetworkError::UnknownDetector {
                        id: id.clone(),
                        context,
                    });
                }
            }
            if rec.from == rec.to {
                return Err(NetworkError::SelfLoop { id: rec.from, context });
            }
            if !(rec.length_m.is_finite() && rec.length_m > 0.0) {
                return Err(NetworkError::NonPositiveLength {
                    value: rec.length_m,
                    context,
                });
            }
            if !(rec.free_flow_kmh.is_finite() && rec.free_flow_kmh > 0.0) {
                return Err(NetworkError::NonPositiveSpeed {
                    value: rec.free_flow_kmh,
                    context,
                });
            }
            let link = Link {
                from: DetectorId(rec.from),
                to: DetectorId(rec.to),
                length: rec.length_m,
                free_flow_speed: rec.free_flow_kmh,
            };
            let key = link.key();
            if link_index.contains_key(&key) {
                return Err(NetworkError::DuplicateLink { link: key, context });
            }
            link_index.insert(key, links.len());
            links.push(link);
        }

        let mut adjacency = vec![Vec::new(); detectors.len()];
        for (li, link) in links.iter().enumerate() {
            adjacency[index[&link.from]].push(li);
        }
        for out in &mut adjacency {
            out.sort_by_key(|&li| index[&links[li].to]);
        }

        Ok(Self {
            detectors,
            index,
            links,
            link_index,
            adjacency,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            description: None,
            detectors: self
                .detectors
                .iter()
                .map(|d| DetectorRecord {
                    id: d.id.0.clone(),
                    name: d.name.clone(),
                    lat: d.location.lat(),
                    lon: d.location.lon(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkRecord {
                    from: l.from.0.clone(),
                    to: l.to.0.clone(),
                    length_m: l.length,
                    free_flow_kmh: l.free_flow_speed,
                })
                .collect(),
        }
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn detector(&self, id: &str) -> Option<&Detector> {
        self.index.get(id).map(|&i| &self.detectors[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn link(&self, from: &str, to: &str) -> Option<&Link> {
        // LinkKey lookups need owned ids; the network is small enough.
        self.link_index
            .get(&LinkKey::new(from, to))
            .map(|&i| &self.links[i])
    }

    pub fn link_by_key(&self, key: &LinkKey) -> Option<&Link> {
        self.link_index.get(key).map(|&i| &self.links[i])
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = &Link> {
        let out = self
            .index
            .get(id)
            .map(|&i| self.adjacency[i].as_slice())
            .unwrap_or(&[]);
        out.iter().map(move |&li| &self.links[li])
    }

    pub(crate) fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &str) -> Result<usize, NetworkError> {
        self.node_index(id).ok_or_else(|| NetworkError::UnknownDetector {
            id: id.to_string(),
            context: "query".to_string(),
        })
    }

    /// Minimal-cost directed path under a static per-link cost.
    ///
    /// Returns `Ok(None)` when `to` is unreachable from `from`.
    pub fn static_shortest_path<F>(
        &self,
        from: &str,
        to: &str,
        cost: F,
    ) -> Result<Option<Path>, NetworkError>
    where
        F: Fn(&Link) -> f64,
    {
        let src = self.require(from)?;
        let dst = self.require(to)?;
        Ok(self
            .label_setting(src, dst, |link, _| cost(link))
            .map(|(total_cost, nodes, links)| self.materialize(total_cost, &nodes, &links)))
    }

    /// Free-flow shortest path by length, in meters.
    pub fn shortest_distance(&self, from: &str, to: &str) -> Result<Option<Path>, NetworkError> {
        self.static_shortest_path(from, to, |l| l.length)
    }

    pub(crate) fn materialize(&self, total_cost: f64, nodes: &[usize], links: &[usize]) -> Path {
        Path {
            nodes: nodes.iter().map(|&i| self.detectors[i].id.clone()).collect(),
            links: links.iter().map(|&li| self.links[li].key()).collect(),
            total_cost,
        }
    }

    /// Label-setting search from `src` to `dst`.
    ///
    /// `edge_cost(link, label_at_tail)` must be positive. The label of a node is the
    /// accumulated cost at which it is reached; for time-dependent costs this is the
    /// elapsed time, and the search is exact when costs are FIFO. Equal labels are
    /// resolved toward the lexicographically smallest node sequence.
    pub(crate) fn label_setting<F>(
        &self,
        src: usize,
        dst: usize,
        edge_cost: F,
    ) -> Option<(f64, Vec<usize>, Vec<usize>)>
    where
        F: Fn(&Link, f64) -> f64,
    {
        let n = self.detectors.len();
        // (label, node path, link path) per node
        let mut best: Vec<Option<(f64, Vec<usize>, Vec<usize>)>> = vec![None; n];
        let mut settled = vec![false; n];
        best[src] = Some((0.0, vec![src], Vec::new()));

        loop {
            let next = (0..n)
                .filter(|&i| !settled[i])
                .filter_map(|i| best[i].as_ref().map(|b| (i, b)))
                .min_by(|(_, a), (_, b)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
                .map(|(i, _)| i)?;
            settled[next] = true;
            if next == dst {
                return best[dst].take();
            }
            let (label, nodes, links) = best[next].clone().expect("selected node has a label");
            for &li in &self.adjacency[next] {
                let link = &self.links[li];
                let head = self.index[&link.to];
                if settled[head] {
                    continue;
                }
                let c = edge_cost(link, label);
                debug_assert!(c > 0.0, "edge costs must be positive");
                let candidate = label + c;
                let mut cand_nodes = nodes.clone();
                cand_nodes.push(head);
                let better = match &best[head] {
                    None => true,
                    Some((l, p, _)) => match candidate.total_cmp(l) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Equal => cand_nodes < *p,
                        std::cmp::Ordering::Greater => false,
                    },
                };
                if better {
                    let mut cand_links = links.clone();
                    cand_links.push(li);
                    best[head] = Some((candidate, cand_nodes, cand_links));
                }
            }
        }
    }
}
