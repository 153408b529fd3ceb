//! Trip reconstruction from check-ins, per-trip metrics and dashboard aggregates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::LinkStateProvider;
use crate::identity::MacPseudonym;
use crate::ingest::DetectionEvent;
use crate::network::{DetectorId, DetectorNetwork, NetworkError};
use crate::time::Timestamp;

/// Default segmentation gap: a pause longer than this ends a trip.
pub const DEFAULT_GAP_SECONDS: i64 = 900;
/// Repeat detections at one detector within this many seconds are jitter.
pub const DUPLICATE_WINDOW_SECONDS: i64 = 60;
/// Estimated speeds strictly below this are classified as walking.
pub const WALK_MAX_KMH: f64 = 7.0;

#[derive(Debug, Error, PartialEq)]
pub enum TripError {
    #[error("check-ins are not sorted by time (index {0})")]
    Unsorted(usize),
    #[error("gap threshold must be positive")]
    NonPositiveGap,
    #[error("a trip needs at least two check-ins")]
    TooShort,
    #[error("trip has zero duration")]
    ZeroDuration,
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
}

impl From<NetworkError> for TripError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::UnknownDetector { id, .. } => TripError::UnknownDetector(id),
            other => TripError::UnknownDetector(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Checkin {
    pub detector_id: DetectorId,
    pub timestamp: Timestamp,
}

impl Checkin {
    pub fn new(detector: impl Into<DetectorId>, timestamp: Timestamp) -> Self {
        Self {
            detector_id: detector.into(),
            timestamp,
        }
    }
}

impl From<&DetectionEvent> for Checkin {
    fn from(e: &DetectionEvent) -> Self {
        Self {
            detector_id: e.detector_id.clone(),
            timestamp: e.timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walk,
    Car,
}

impl Mode {
    pub fn from_speed(kmh: f64) -> Self {
        if kmh < WALK_MAX_KMH {
            Mode::Walk
        } else {
            Mode::Car
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub pseudonym: MacPseudonym,
    pub checkins: Vec<Checkin>,
    pub origin: DetectorId,
    pub destination: DetectorId,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Meters; absent when some leg has no connecting path.
    pub distance: Option<f64>,
    /// Seconds.
    pub duration: i64,
    /// km/h.
    pub est_speed: Option<f64>,
    pub mode: Option<Mode>,
    pub unroutable: bool,
}

/// Output of [`segment_trips`]: maximal runs split at gaps above the threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub runs: Vec<Vec<Checkin>>,
}

impl Segmentation {
    /// Runs of two or more check-ins.
    pub fn trips(&self) -> impl Iterator<Item = &[Checkin]> {
        self.runs.iter().filter(|r| r.len() >= 2).map(Vec::as_slice)
    }

    /// Check-ins that stand alone.
    pub fn singletons(&self) -> impl Iterator<Item = &Checkin> {
        self.runs.iter().filter(|r| r.len() == 1).map(|r| &r[0])
    }

    pub fn trip_count(&self) -> usize {
        self.trips().count()
    }

    pub fn singleton_count(&self) -> usize {
        self.singletons().count()
    }
}

/// Splits a time-ordered check-in stream at every gap strictly above `gap_threshold`.
pub fn segment_trips(checkins: &[Checkin], gap_threshold: i64) -> Result<Segmentation, TripError> {
    if gap_threshold <= 0 {
        return Err(TripError::NonPositiveGap);
    }
    if let Some(i) = checkins.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(TripError::Unsorted(i + 1));
    }
    let mut runs: Vec<Vec<Checkin>> = Vec::new();
    for c in checkins {
        match runs.last_mut() {
            Some(run) if c.timestamp - run.last().expect("runs are non-empty").timestamp <= gap_threshold => {
                run.push(c.clone())
            }
            _ => runs.push(vec![c.clone()]),
        }
    }
    Ok(Segmentation { runs })
}

/// Removes re-detection jitter from a time-ordered stream.
///
/// A check-in is dropped when it repeats the previous kept detector within
/// [`DUPLICATE_WINDOW_SECONDS`], or shares the previous kept timestamp.
pub fn collapse_duplicates(checkins: &[Checkin]) -> Vec<Checkin> {
    let mut out: Vec<Checkin> = Vec::with_capacity(checkins.len());
    for c in checkins {
        if let Some(prev) = out.last() {
            let same_spot = prev.detector_id == c.detector_id
                && c.timestamp - prev.timestamp <= DUPLICATE_WINDOW_SECONDS;
            if same_spot || prev.timestamp == c.timestamp {
                continue;
            }
        }
        out.push(c.clone());
    }
    out
}

/// Sum of free-flow shortest-path lengths between consecutive check-in detectors.
fn leg_distance(net: &DetectorNetwork, checkins: &[Checkin]) -> Result<Option<f64>, TripError> {
    let mut total = 0.0;
    for w in checkins.windows(2) {
        match net.shortest_distance(w[0].detector_id.as_str(), w[1].detector_id.as_str())? {
            Some(p) => total += p.total_cost,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

/// Distance, duration, speed and mode of one run of check-ins.
pub fn trip_metrics(
    pseudonym: &MacPseudonym,
    checkins: &[Checkin],
    net: &DetectorNetwork,
) -> Result<Trip, TripError> {
    if checkins.len() < 2 {
        return Err(TripError::TooShort);
    }
    if let Some(i) = checkins.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(TripError::Unsorted(i + 1));
    }
    for c in checkins {
        if !net.contains(c.detector_id.as_str()) {
            return Err(TripError::UnknownDetector(c.detector_id.to_string()));
        }
    }
    let first = &checkins[0];
    let last = &checkins[checkins.len() - 1];
    let duration = last.timestamp - first.timestamp;
    if duration <= 0 {
        return Err(TripError::ZeroDuration);
    }
    let distance = leg_distance(net, checkins)?;
    let est_speed = distance.map(|d| d * 3.6 / duration as f64);
    Ok(Trip {
        pseudonym: pseudonym.clone(),
        checkins: checkins.to_vec(),
        origin: first.detector_id.clone(),
        destination: last.detector_id.clone(),
        start: first.timestamp,
        end: last.timestamp,
        distance,
        duration,
        est_speed,
        mode: est_speed.map(Mode::from_speed),
        unroutable: distance.is_none(),
    })
}

/// Trips and leftover singletons of one device's stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconstruction {
    pub trips: Vec<Trip>,
    pub singleton_count: usize,
}

impl Reconstruction {
    pub fn merge(&mut self, other: Reconstruction) {
        self.trips.extend(other.trips);
        self.singleton_count += other.singleton_count;
    }
}

/// Collapse jitter, segment, and compute metrics for every run of one pseudonym.
pub fn reconstruct_trips(
    pseudonym: &MacPseudonym,
    checkins: &[Checkin],
    net: &DetectorNetwork,
    gap_threshold: i64,
) -> Result<Reconstruction, TripError> {
    let cleaned = collapse_duplicates(checkins);
    let seg = segment_trips(&cleaned, gap_threshold)?;
    let trips = seg
        .trips()
        .map(|run| trip_metrics(pseudonym, run, net))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Reconstruction {
        trips,
        singleton_count: seg.singleton_count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardSummary {
    pub from: Timestamp,
    pub to: Timestamp,
    pub trip_count: usize,
    /// Trips whose distance could be computed; the only ones in the distance/time totals.
    pub routable_trip_count: usize,
    pub checkin_count: usize,
    /// km/h, total distance over total time.
    pub avg_speed: Option<f64>,
    /// Meters.
    pub total_distance: f64,
    /// Seconds.
    pub total_travel_time: f64,
    /// Meters.
    pub avg_trip_distance: Option<f64>,
}

/// Distance-weighted aggregates over a set of trips.
pub fn dashboard_summary(trips: &[Trip], singleton_count: usize, range: (Timestamp, Timestamp)) -> DashboardSummary {
    let routable: Vec<&Trip> = trips.iter().filter(|t| !t.unroutable).collect();
    let total_distance: f64 = routable.iter().filter_map(|t| t.distance).sum();
    let total_travel_time: f64 = routable.iter().map(|t| t.duration as f64).sum();
    let checkin_count = trips.iter().map(|t| t.checkins.len()).sum::<usize>() + singleton_count;
    DashboardSummary {
        from: range.0,
        to: range.1,
        trip_count: trips.len(),
        routable_trip_count: routable.len(),
        checkin_count,
        avg_speed: (total_travel_time > 0.0)
            .then(|| total_distance * 3.6 / total_travel_time),
        total_distance,
        total_travel_time,
        avg_trip_distance: (!routable.is_empty()).then(|| total_distance / routable.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalTripRow {
    pub date_time: Timestamp,
    pub origin: DetectorId,
    pub destination: DetectorId,
    /// Seconds.
    pub trip_time: i64,
    /// Meters.
    pub distance: Option<f64>,
    /// km/h.
    pub est_speed: Option<f64>,
    /// Trip speed over the network-average speed on the same links and windows.
    pub comparison: Option<f64>,
}

/// Network-average speed (km/h) along the trip's legs, from link states of the
/// windows in which each leg started. `None` when any traversed link lacks a state.
pub fn network_average_speed(
    trip: &Trip,
    net: &DetectorNetwork,
    states: &dyn LinkStateProvider,
) -> Option<f64> {
    let mut length = 0.0;
    let mut time = 0.0;
    for w in trip.checkins.windows(2) {
        let path = net
            .shortest_distance(w[0].detector_id.as_str(), w[1].detector_id.as_str())
            .ok()??;
        for key in &path.links {
            let link = net.link_by_key(key)?;
            let state = states.link_state(key, w[0].timestamp)?;
            length += link.length;
            time += state.estimate;
        }
    }
    (time > 0.0).then(|| length * 3.6 / time)
}

pub fn personal_trips(
    trips: &[Trip],
    net: &DetectorNetwork,
    states: &dyn LinkStateProvider,
) -> Vec<PersonalTripRow> {
    trips
        .iter()
        .map(|t| PersonalTripRow {
            date_time: t.start,
            origin: t.origin.clone(),
            destination: t.destination.clone(),
            trip_time: t.duration,
            distance: t.distance,
            est_speed: t.est_speed,
            comparison: t
                .est_speed
                .zip(network_average_speed(t, net, states))
                .map(|(own, avg)| own / avg),
        })
        .collect()
}
