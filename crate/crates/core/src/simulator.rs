//! Deterministic OD-demand simulator emitting raw detector uploads plus ground truth.

use std::collections::HashSet;
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::MacAddress;
use crate::ingest::RawDetection;
use crate::network::{DetectorId, DetectorNetwork, LinkKey};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
    #[error("unknown detector {0} in OD pair")]
    UnknownDetector(String),
    #[error("OD pair {origin} -> {destination} is unreachable")]
    Unreachable { origin: String, destination: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: DetectorId,
    pub destination: DetectorId,
    pub trips_per_hour: f64,
}

fn default_speed_range() -> [f64; 2] {
    [0.6, 1.1]
}

fn default_probability() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub od_pairs: Vec<OdPair>,
    /// `[start, end)`, Unix seconds.
    pub period: [Timestamp; 2],
    /// Fraction of free-flow speed drawn per vehicle.
    #[serde(default = "default_speed_range")]
    pub speed_factor_range: [f64; 2],
    #[serde(default = "default_probability")]
    pub detection_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DemandSpec {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidDemand(m.to_string()));
        if self.period[1] <= self.period[0] {
            return bad("period must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return bad("detection_probability must lie in [0, 1]");
        }
        let [lo, hi] = self.speed_factor_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad("speed_factor_range must be positive and ordered");
        }
        for od in &self.od_pairs {
            if !(od.trips_per_hour.is_finite() && od.trips_per_hour >= 0.0) {
                return bad("trips_per_hour must be non-negative");
            }
            if od.origin == od.destination {
                return bad("origin and destination must differ");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        serde_json::from_str(text).map_err(|e| SimulationError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, SimulationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Multiplies traversal time on `link` for vehicles entering it during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slowdown {
    pub from: DetectorId,
    pub to: DetectorId,
    pub start: Timestamp,
    pub end: Timestamp,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTraversal {
    pub link: LinkKey,
    pub enter: Timestamp,
    pub exit: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrip {
    pub mac: String,
    pub origin: DetectorId,
    pub destination: DetectorId,
    pub departure: Timestamp,
    pub arrival: Timestamp,
    pub speed_factor: f64,
    pub path: Vec<LinkTraversal>,
    /// Number of detections emitted for this vehicle.
    pub detections: usize,
}

impl GroundTruthTrip {
    pub fn duration(&self) -> i64 {
        self.arrival - self.departure
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOutput {
    /// Sorted by timestamp, detector, mac.
    pub detections: Vec<RawDetection>,
    pub ground_truth: Vec<GroundTruthTrip>,
}

impl SimulationOutput {
    pub fn detections_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.detections {
            w.serialize(d).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    pub fn ground_truth_json(&self) -> String {
        serde_json::to_string_pretty(&self.ground_truth).expect("ground truth serializes")
    }

    /// Writes `detections.csv` and `ground_truth.json` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<FsPath>) -> Result<(), SimulationError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("detections.csv"), self.detections_csv())?;
        std::fs::write(dir.join("ground_truth.json"), self.ground_truth_json())?;
        Ok(())
    }
}

fn fresh_mac(rng: &mut ChaCha8Rng, used: &mut HashSet<[u8; 6]>) -> MacAddress {
    loop {
        let mut octets: [u8; 6] = rng.gen();
        // locally administered, unicast
        octets[0] = (octets[0] & 0xfc) | 0x02;
        if used.insert(octets) {
            return MacAddress::from_octets(octets);
        }
    }
}

fn slowdown_at(link: &LinkKey, t: Timestamp, congestion: &[Slowdown]) -> f64 {
    congestion
        .iter()
        .filter(|s| s.from == link.from && s.to == link.to && (s.start..s.end).contains(&t))
        .map(|s| s.factor)
        .product()
}

/// Runs the demand over the network. Fully determined by `demand.seed`.
pub fn simulate(
    net: &DetectorNetwork,
    demand: &DemandSpec,
    congestion: &[Slowdown],
) -> Result<SimulationOutput, SimulationError> {
    demand.validate()?;
    if let Some(s) = congestion.iter().find(|s| !(s.factor.is_finite() && s.factor > 0.0)) {
        return Err(SimulationError::InvalidDemand(format!(
            "slowdown on {}->{} must be positive",
            s.from, s.to
        )));
    }
    let mut paths = Vec::with_capacity(demand.od_pairs.len());
    for od in &demand.od_pairs {
        for id in [&od.origin, &od.destination] {
            if !net.contains(id.as_str()) {
                return Err(SimulationError::UnknownDetector(id.to_string()));
            }
        }
        let path = net
            .static_shortest_path(od.origin.as_str(), od.destination.as_str(), |l| l.free_flow_time())
            .map_err(|e| SimulationError::UnknownDetector(e.to_string()))?
            .ok_or_else(|| SimulationError::Unreachable {
                origin: od.origin.to_string(),
                destination: od.destination.to_string(),
            })?;
        paths.push(path);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(demand.seed);
    let mut used = HashSet::new();
    let mut out = SimulationOutput::default();
    let [start, end] = demand.period;
    let span = (end - start) as f64;
    let [lo, hi] = demand.speed_factor_range;

    for (od, path) in demand.od_pairs.iter().zip(&paths) {
        if od.trips_per_hour == 0.0 {
            continue;
        }
        let headway = 3600.0 / od.trips_per_hour;
        let count = (span / headway).floor() as u64;
        for k in 0..count {
            let jitter: f64 = rng.gen();
            let departure = start + ((k as f64 + jitter) * headway).floor() as Timestamp;
            let departure = departure.min(end - 1);
            let speed_factor = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            let mac = fresh_mac(&mut rng, &mut used).to_string();

            let mut t = departure;
            let mut traversals = Vec::with_capacity(path.links.len());
            for key in &path.links {
                let link = net.link_by_key(key).expect("path links exist");
                let secs = link.free_flow_time() / speed_factor * slowdown_at(key, t, congestion);
                let secs = (secs.round() as i64).max(1);
                traversals.push(LinkTraversal { link: key.clone(), enter: t, exit: t + secs });
                t += secs;
            }

            let passes = std::iter::once((&path.nodes[0], departure))
                .chain(path.nodes[1..].iter().zip(traversals.iter().map(|tr| tr.exit)));
            let mut emitted = 0;
            for (node, at) in passes {
                if rng.gen_bool(demand.detection_probability) {
                    out.detections.push(RawDetection {
                        detector_id: node.to_string(),
                        mac: mac.clone(),
                        timestamp: at,
                    });
                    emitted += 1;
                }
            }
            out.ground_truth.push(GroundTruthTrip {
                mac,
                origin: od.origin.clone(),
                destination: od.destination.clone(),
                departure,
                arrival: t,
                speed_factor,
                path: traversals,
                detections: emitted,
            });
        }
    }
    out.detections
        .sort_by(|a, b| (a.timestamp, &a.detector_id, &a.mac).cmp(&(b.timestamp, &b.detector_id, &b.mac)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::triangle;

    fn demand(rate: f64, p: f64, seed: u64) -> DemandSpec {
        DemandSpec {
            od_pairs: vec![OdPair { origin: "A".into(), destination: "C".into(), trips_per_hour: rate }],
            period: [1_600_000_000, 1_600_003_600],
            speed_factor_range: [0.6, 1.1],
            detection_probability: p,
            seed,
        }
    }

    #[test]
    fn zero_demand() {
        let out = simulate(&triangle(), &demand(0.0, 1.0, 1), &[]).unwrap();
        assert!(out.detections.is_empty() && out.ground_truth.is_empty());
    }

    #[test]
    fn one_trip_three_detections() {
        let mut d = demand(1.0, 1.0, 7);
        d.speed_factor_range = [1.0, 1.0];
        let out = simulate(&triangle(), &d, &[]).unwrap();
        assert_eq!(out.ground_truth.len(), 1);
        let gt = &out.ground_truth[0];
        // A->B->C at free flow is 20 s against 25 s direct
        assert_eq!(gt.path.len(), 2);
        assert_eq!(gt.duration(), 20);
        assert_eq!(out.detections.len(), 3);
        assert!(out.detections.iter().all(|r| r.mac == gt.mac));
        let ids: Vec<&str> = out.detections.iter().map(|r| r.detector_id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C"]);
    }

    #[test]
    fn deterministic() {
        let a = simulate(&triangle(), &demand(30.0, 0.8, 42), &[]).unwrap();
        let b = simulate(&triangle(), &demand(30.0, 0.8, 42), &[]).unwrap();
        assert_eq!(a.detections_csv(), b.detections_csv());
        assert_eq!(a.ground_truth_json(), b.ground_truth_json());
        let c = simulate(&triangle(), &demand(30.0, 0.8, 43), &[]).unwrap();
        assert_ne!(a.detections_csv(), c.detections_csv());
        assert_eq!(a.ground_truth.len(), 30);
    }

    #[test]
    fn macs_unique_and_local() {
        let out = simulate(&triangle(), &demand(500.0, 1.0, 3), &[]).unwrap();
        let macs: HashSet<&str> = out.ground_truth.iter().map(|g| g.mac.as_str()).collect();
        assert_eq!(macs.len(), out.ground_truth.len());
        for m in macs {
            let o = m.parse::<MacAddress>().unwrap().octets();
            assert_eq!(o[0] & 0x03, 0x02);
        }
    }

    #[test]
    fn timestamps_increase_and_within_period() {
        let d = demand(120.0, 1.0, 9);
        let out = simulate(&triangle(), &d, &[]).unwrap();
        for gt in &out.ground_truth {
            assert!(gt.departure >= d.period[0] && gt.departure < d.period[1]);
            let mut last = gt.departure;
            for tr in &gt.path {
                assert_eq!(tr.enter, last);
                assert!(tr.exit > tr.enter);
                last = tr.exit;
            }
            assert_eq!(last, gt.arrival);
        }
    }

    #[test]
    fn slowdown_applies_by_entry_time() {
        let mut d = demand(1.0, 1.0, 7);
        d.speed_factor_range = [1.0, 1.0];
        let slow = [Slowdown { from: "A".into(), to: "B".into(), start: d.period[0], end: d.period[1], factor: 3.0 }];
        let out = simulate(&triangle(), &d, &slow).unwrap();
        let gt = &out.ground_truth[0];
        // path is fixed by free flow; only timing changes
        assert_eq!(gt.path[0].link, LinkKey::new("A", "B"));
        assert_eq!(gt.path[0].exit - gt.path[0].enter, 30);
        assert_eq!(gt.duration(), 40);
    }

    #[test]
    fn errors() {
        let mut d = demand(1.0, 1.0, 1);
        d.od_pairs[0].origin = "C".into();
        d.od_pairs[0].destination = "A".into();
        let err = simulate(&triangle(), &d, &[]).unwrap_err();
        assert!(err.to_string().contains("C -> A"), "{err}");
        d.od_pairs[0].origin = "Z".into();
        assert!(matches!(simulate(&triangle(), &d, &[]), Err(SimulationError::UnknownDetector(_))));
        let mut d = demand(1.0, 1.5, 1);
        assert!(matches!(simulate(&triangle(), &d, &[]), Err(SimulationError::InvalidDemand(_))));
        d.detection_probability = 1.0;
        d.period = [10, 10];
        assert!(matches!(simulate(&triangle(), &d, &[]), Err(SimulationError::InvalidDemand(_))));
    }

    #[test]
    fn demand_json_defaults() {
        let d = DemandSpec::from_json(r#"{"od_pairs":[{"origin":"A","destination":"C","trips_per_hour":4}],"period":[0,3600]}"#).unwrap();
        assert_eq!(d.speed_factor_range, [0.6, 1.1]);
        assert_eq!(d.detection_probability, 1.0);
    }
}
