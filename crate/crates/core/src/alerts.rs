//! Intersection alerts from signal phase-and-timing plus camera presence flags.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{bearing_difference, haversine, initial_bearing, GeoPoint};
use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum SpatError {
    #[error("intersection {0}: empty phase plan")]
    EmptyPlan(String),
    #[error("intersection {0}: phase durations must be positive")]
    NonPositiveDuration(String),
    #[error("intersection {0}: current phase {1:?} not in plan")]
    PhaseNotInPlan(String, Phase),
    #[error("intersection {0}: time to change must be finite and non-negative")]
    BadTimeToChange(String),
    #[error("fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStep {
    pub phase: Phase,
    /// Seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatMessage {
    pub intersection_id: String,
    pub location: GeoPoint,
    pub current_phase: Phase,
    /// Seconds until `current_phase` ends.
    pub time_to_change: f64,
    /// Cyclic plan. The current phase is taken to be its first occurrence.
    pub phase_plan: Vec<PhaseStep>,
}

impl SpatMessage {
    pub fn validate(&self) -> Result<(), SpatError> {
        let id = || self.intersection_id.clone();
        if self.phase_plan.is_empty() {
            return Err(SpatError::EmptyPlan(id()));
        }
        if self
            .phase_plan
            .iter()
            .any(|s| !(s.duration.is_finite() && s.duration > 0.0))
        {
            return Err(SpatError::NonPositiveDuration(id()));
        }
        if !(self.time_to_change.is_finite() && self.time_to_change >= 0.0) {
            return Err(SpatError::BadTimeToChange(id()));
        }
        if self.current_index().is_none() {
            return Err(SpatError::PhaseNotInPlan(id(), self.current_phase));
        }
        Ok(())
    }

    pub fn cycle_length(&self) -> f64 {
        self.phase_plan.iter().map(|s| s.duration).sum()
    }

    fn current_index(&self) -> Option<usize> {
        self.phase_plan
            .iter()
            .position(|s| s.phase == self.current_phase)
    }
}

/// Phase shown `offset` seconds from now.
///
/// The current phase holds on `[0, time_to_change)`; afterwards the plan runs
/// cyclically from the step following the current one.
pub fn phase_at(spat: &SpatMessage, offset: f64) -> Phase {
    if offset < spat.time_to_change {
        return spat.current_phase;
    }
    let n = spat.phase_plan.len();
    let Some(current) = spat.current_index() else {
        return spat.current_phase;
    };
    let cycle = spat.cycle_length();
    let into_cycle = (offset - spat.time_to_change).rem_euclid(cycle);
    let mut boundary = 0.0;
    for k in 1..=n {
        let step = &spat.phase_plan[(current + k) % n];
        boundary += step.duration;
        if into_cycle < boundary {
            return step.phase;
        }
    }
    // into_cycle rounded up to the cycle length
    spat.phase_plan[(current + 1) % n].phase
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionState {
    pub spat: SpatMessage,
    pub pedestrian_present: bool,
    pub queue_present: bool,
    pub observed_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleApproach {
    pub position: GeoPoint,
    /// m/s.
    pub speed: f64,
    /// Degrees clockwise from north, [0, 360).
    pub bearing: f64,
}

/// Declaration order is emission priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    PedestrianCrossing,
    QueueAhead,
    RedLightAtArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub intersection_id: String,
    pub kind: AlertKind,
    /// Seconds until the vehicle reaches the stop line.
    pub eta: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachConfig {
    pub radius_m: f64,
    pub bearing_cone_deg: f64,
    pub min_speed_mps: f64,
    pub max_staleness_s: i64,
}

impl Default for ApproachConfig {
    fn default() -> Self {
        Self {
            radius_m: 150.0,
            bearing_cone_deg: 45.0,
            min_speed_mps: 1.0,
            max_staleness_s: 30,
        }
    }
}

/// Distance in meters when the vehicle counts as approaching, else `None`.
pub fn approach_distance(vehicle: &VehicleApproach, target: GeoPoint, cfg: &ApproachConfig) -> Option<f64> {
    let distance = haversine(vehicle.position, target);
    if distance > cfg.radius_m || vehicle.speed <= cfg.min_speed_mps {
        return None;
    }
    let to_target = initial_bearing(vehicle.position, target);
    (bearing_difference(vehicle.bearing, to_target) <= cfg.bearing_cone_deg).then_some(distance)
}

/// Alerts for one vehicle at one intersection; empty when the sensor data is stale.
pub fn evaluate_approach(
    vehicle: &VehicleApproach,
    state: &IntersectionState,
    now: Timestamp,
    cfg: &ApproachConfig,
) -> Vec<Alert> {
    let staleness = now - state.observed_at;
    if !(0..=cfg.max_staleness_s).contains(&staleness) {
        return Vec::new();
    }
    let Some(distance) = approach_distance(vehicle, state.spat.location, cfg) else {
        return Vec::new();
    };
    let eta = distance / vehicle.speed;
    let id = &state.spat.intersection_id;
    let mut alerts = Vec::new();
    if state.pedestrian_present {
        alerts.push(Alert {
            intersection_id: id.clone(),
            kind: AlertKind::PedestrianCrossing,
            eta,
            severity: Severity::Warning,
        });
    }
    if state.queue_present {
        alerts.push(Alert {
            intersection_id: id.clone(),
            kind: AlertKind::QueueAhead,
            eta,
            severity: Severity::Info,
        });
    }
    if phase_at(&state.spat, eta) == Phase::Red {
        alerts.push(Alert {
            intersection_id: id.clone(),
            kind: AlertKind::RedLightAtArrival,
            eta,
            severity: Severity::Warning,
        });
    }
    alerts.sort_by_key(|a| a.kind);
    alerts
}

/// Evaluates a vehicle against many intersections and counts stale suppressions.
#[derive(Debug, Default)]
pub struct AlertEvaluator {
    pub config: ApproachConfig,
    stale_suppressed: AtomicU64,
}

impl AlertEvaluator {
    pub fn new(config: ApproachConfig) -> Self {
        Self {
            config,
            stale_suppressed: AtomicU64::new(0),
        }
    }

    pub fn evaluate(&self, vehicle: &VehicleApproach, states: &[IntersectionState], now: Timestamp) -> Vec<Alert> {
        let mut out = Vec::new();
        for st in states {
            let staleness = now - st.observed_at;
            if !(0..=self.config.max_staleness_s).contains(&staleness) {
                if approach_distance(vehicle, st.spat.location, &self.config).is_some() {
                    self.stale_suppressed.fetch_add(1, Ordering::Relaxed);
                }
                continue;
            }
            out.extend(evaluate_approach(vehicle, st, now, &self.config));
        }
        out
    }

    pub fn stale_suppressed(&self) -> u64 {
        self.stale_suppressed.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Deserialize)]
struct FixtureRecord {
    intersection_id: String,
    lat: f64,
    lon: f64,
    current_phase: Phase,
    time_to_change: f64,
    phase_plan: Vec<PhaseStep>,
    #[serde(default)]
    pedestrian_present: bool,
    #[serde(default)]
    queue_present: bool,
    #[serde(default)]
    observed_at: Option<Timestamp>,
}

#[derive(Debug, Deserialize)]
struct FixtureDocument {
    intersections: Vec<FixtureRecord>,
}

/// Parses an intersection fixture; records without `observed_at` are stamped with `received_at`.
pub fn parse_intersections(text: &str, received_at: Timestamp) -> Result<Vec<IntersectionState>, SpatError> {
    let doc: FixtureDocument = serde_json::from_str(text).map_err(|e| SpatError::Fixture(e.to_string()))?;
    doc.intersections
        .into_iter()
        .map(|r| {
            let location = GeoPoint::new(r.lat, r.lon).map_err(|e| SpatError::Fixture(e.to_string()))?;
            let spat = SpatMessage {
                intersection_id: r.intersection_id,
                location,
                current_phase: r.current_phase,
                time_to_change: r.time_to_change,
                phase_plan: r.phase_plan,
            };
            spat.validate()?;
            Ok(IntersectionState {
                spat,
                pedestrian_present: r.pedestrian_present,
                queue_present: r.queue_present,
                observed_at: r.observed_at.unwrap_or(received_at),
            })
        })
        .collect()
}

pub fn load_intersections(path: impl AsRef<Path>, received_at: Timestamp) -> Result<Vec<IntersectionState>, SpatError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| SpatError::Fixture(format!("{}: {e}", path.as_ref().display())))?;
    parse_intersections(&text, received_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan() -> Vec<PhaseStep> {
        vec![
            PhaseStep { phase: Phase::Green, duration: 30.0 },
            PhaseStep { phase: Phase::Yellow, duration: 3.0 },
            PhaseStep { phase: Phase::Red, duration: 20.0 },
        ]
    }

    fn spat(current: Phase, ttc: f64) -> SpatMessage {
        SpatMessage {
            intersection_id: "egnatia-aristotelous".into(),
            location: GeoPoint::new(40.6325, 22.9410).unwrap(),
            current_phase: current,
            time_to_change: ttc,
            phase_plan: plan(),
        }
    }

    fn state(s: SpatMessage, ped: bool, queue: bool, observed_at: Timestamp) -> IntersectionState {
        IntersectionState { spat: s, pedestrian_present: ped, queue_present: queue, observed_at }
    }

    /// Vehicle `distance` m south of the intersection heading `bearing`.
    fn vehicle(s: &SpatMessage, distance: f64, speed: f64, bearing: f64) -> VehicleApproach {
        VehicleApproach { position: s.location.destination(180.0, distance), speed, bearing }
    }

    #[test]
    fn timeline_walk() {
        let s = spat(Phase::Green, 5.0);
        assert_eq!(phase_at(&s, 0.0), Phase::Green);
        assert_eq!(phase_at(&s, 4.99), Phase::Green);
        assert_eq!(phase_at(&s, 5.0), Phase::Yellow);
        assert_eq!(phase_at(&s, 7.5), Phase::Yellow);
        assert_eq!(phase_at(&s, 8.0), Phase::Red);
        assert_eq!(phase_at(&s, 10.0), Phase::Red);
        assert_eq!(phase_at(&s, 27.9), Phase::Red);
        assert_eq!(phase_at(&s, 28.0), Phase::Green);
        assert_eq!(phase_at(&s, 5.0 + 53.0), phase_at(&s, 5.0));
        let red = spat(Phase::Red, 2.0);
        assert_eq!(phase_at(&red, 1.0), Phase::Red);
        assert_eq!(phase_at(&red, 2.0), Phase::Green);
    }

    #[test]
    fn validation() {
        let mut s = spat(Phase::Green, 5.0);
        assert!(s.validate().is_ok());
        s.phase_plan.retain(|p| p.phase != Phase::Green);
        assert!(matches!(s.validate(), Err(SpatError::PhaseNotInPlan(..))));
        s.phase_plan.clear();
        assert!(matches!(s.validate(), Err(SpatError::EmptyPlan(_))));
        let mut s = spat(Phase::Green, -1.0);
        assert!(matches!(s.validate(), Err(SpatError::BadTimeToChange(_))));
        s.time_to_change = 1.0;
        s.phase_plan[1].duration = 0.0;
        assert!(matches!(s.validate(), Err(SpatError::NonPositiveDuration(_))));
    }

    #[test]
    fn heading_away_is_silent() {
        let s = spat(Phase::Red, 50.0);
        let st = state(s.clone(), true, true, 100);
        assert!(evaluate_approach(&vehicle(&s, 100.0, 10.0, 180.0), &st, 100, &ApproachConfig::default()).is_empty());
        // too far, too slow
        assert!(evaluate_approach(&vehicle(&s, 151.0, 10.0, 0.0), &st, 100, &ApproachConfig::default()).is_empty());
        assert!(evaluate_approach(&vehicle(&s, 100.0, 1.0, 0.0), &st, 100, &ApproachConfig::default()).is_empty());
        // inside the cone edge
        assert!(!evaluate_approach(&vehicle(&s, 100.0, 10.0, 44.0), &st, 100, &ApproachConfig::default()).is_empty());
        assert!(evaluate_approach(&vehicle(&s, 100.0, 10.0, 46.0), &st, 100, &ApproachConfig::default()).is_empty());
    }

    #[test]
    fn red_at_arrival() {
        let s = spat(Phase::Green, 5.0);
        let st = state(s.clone(), false, false, 1_000);
        let alerts = evaluate_approach(&vehicle(&s, 100.0, 10.0, 0.0), &st, 1_000, &ApproachConfig::default());
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].kind, AlertKind::RedLightAtArrival);
        assert!((alerts[0].eta - 10.0).abs() < 1e-6);
        // arriving in 2 s while still green
        let alerts = evaluate_approach(&vehicle(&s, 20.0, 10.0, 0.0), &st, 1_000, &ApproachConfig::default());
        assert!(alerts.is_empty());
    }

    #[test]
    fn pedestrian_first() {
        let s = spat(Phase::Green, 5.0);
        let st = state(s.clone(), true, true, 1_000);
        let alerts = evaluate_approach(&vehicle(&s, 100.0, 10.0, 0.0), &st, 1_010, &ApproachConfig::default());
        let kinds: Vec<AlertKind> = alerts.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![AlertKind::PedestrianCrossing, AlertKind::QueueAhead, AlertKind::RedLightAtArrival]);
        assert_eq!(alerts[0].severity, Severity::Warning);
    }

    #[test]
    fn stale_data_is_silent_and_counted() {
        let s = spat(Phase::Red, 50.0);
        let st = state(s.clone(), true, true, 1_000);
        let v = vehicle(&s, 50.0, 10.0, 0.0);
        assert!(!evaluate_approach(&v, &st, 1_030, &ApproachConfig::default()).is_empty());
        assert!(evaluate_approach(&v, &st, 1_031, &ApproachConfig::default()).is_empty());
        let ev = AlertEvaluator::default();
        assert!(ev.evaluate(&v, std::slice::from_ref(&st), 2_000).is_empty());
        assert_eq!(ev.stale_suppressed(), 1);
        assert_eq!(ev.evaluate(&v, &[st], 1_000).len(), 3);
    }

    #[test]
    fn fixture_parsing() {
        let text = r#"{"intersections":[{"intersection_id":"x","lat":40.63,"lon":22.94,"current_phase":"Green",
            "time_to_change":5,"phase_plan":[{"phase":"Green","duration":30},{"phase":"Red","duration":20}],
            "pedestrian_present":true}]}"#;
        let states = parse_intersections(text, 77).unwrap();
        assert_eq!(states[0].observed_at, 77);
        assert!(states[0].pedestrian_present && !states[0].queue_present);
        let bad = text.replace("\"current_phase\":\"Green\"", "\"current_phase\":\"Yellow\"");
        assert!(parse_intersections(&bad, 0).is_err());
    }

    fn arb_spat() -> impl Strategy<Value = SpatMessage> {
        (prop::collection::vec((0usize..3, 1u32..40), 1..6), 0usize..6, 0u32..60).prop_map(|(steps, cur, ttc)| {
            let phases = [Phase::Green, Phase::Yellow, Phase::Red];
            let phase_plan: Vec<PhaseStep> = steps
                .iter()
                .map(|&(p, d)| PhaseStep { phase: phases[p], duration: d as f64 })
                .collect();
            let current_phase = phase_plan[cur % phase_plan.len()].phase;
            SpatMessage {
                intersection_id: "p".into(),
                location: GeoPoint::new(40.0, 22.0).unwrap(),
                current_phase,
                time_to_change: ttc as f64,
                phase_plan,
            }
        })
    }

    proptest! {
        #[test]
        fn occupancy_matches_plan_fractions(s in arb_spat()) {
            let cycle = s.cycle_length();
            let cycles = 3.0;
            let steps = (cycle * cycles) as usize;
            for phase in [Phase::Green, Phase::Yellow, Phase::Red] {
                let seen = (0..steps)
                    .filter(|&k| phase_at(&s, s.time_to_change + k as f64) == phase)
                    .count() as f64;
                let want: f64 = s.phase_plan.iter().filter(|p| p.phase == phase).map(|p| p.duration).sum::<f64>() * cycles;
                prop_assert!((seen - want).abs() <= 1.0, "{phase:?}: {seen} vs {want}");
            }
        }

        #[test]
        fn cyclic(s in arb_spat(), k in 0u32..500) {
            let t = s.time_to_change + k as f64;
            prop_assert_eq!(phase_at(&s, t), phase_at(&s, t + s.cycle_length()));
        }
    }
}
