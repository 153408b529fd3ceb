//! Link travel-time estimation from re-identified detections.
//!
//! Consecutive check-ins of one device at the two ends of a direct link yield a
//! travel-time sample. Samples are aggregated per link and 900 s window with a
//! median/MAD gate followed by the mean of the survivors. This estimator stands
//! in for the point-to-point method used by the production detector network,
//! whose exact formula is not public.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{DetectorNetwork, Link, LinkKey};
use crate::time::{time_of_day_bin, DayClass, TimeWindow, Timestamp, WINDOW_SECONDS};
use crate::trips::Checkin;

/// Samples implying a faster speed than this are implausible.
pub const MAX_PLAUSIBLE_KMH: f64 = 150.0;

/// Consistency constant turning a MAD into a Gaussian sigma estimate.
pub const MAD_SCALE: f64 = 1.4826;
/// Gate width in sigmas around the median.
pub const MAD_GATE: f64 = 3.0;

pub const HIGH_COMFORT_RATIO: f64 = 0.75;
pub const MEDIUM_COMFORT_RATIO: f64 = 0.40;

#[derive(Debug, Error, PartialEq)]
pub enum SampleRejection {
    #[error("non-positive travel time {0}")]
    NonPositive(f64),
    #[error("implied speed {kmh:.1} km/h exceeds {MAX_PLAUSIBLE_KMH} km/h")]
    Implausible { kmh: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeSample {
    pub link: LinkKey,
    pub depart: Timestamp,
    /// Seconds.
    pub travel_time: f64,
}

impl TravelTimeSample {
    pub fn new(link: &Link, depart: Timestamp, travel_time: f64) -> Result<Self, SampleRejection> {
        if !(travel_time.is_finite() && travel_time > 0.0) {
            return Err(SampleRejection::NonPositive(travel_time));
        }
        let kmh = link.length / travel_time * 3.6;
        if kmh > MAX_PLAUSIBLE_KMH {
            return Err(SampleRejection::Implausible { kmh });
        }
        Ok(Self {
            link: link.key(),
            depart,
            travel_time,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Traversals {
    pub samples: Vec<TravelTimeSample>,
    /// Adjacent pairs dropped by the plausibility bound.
    pub rejected: usize,
}

/// Pairs consecutive check-ins of one device over direct links.
pub fn match_link_traversals(checkins: &[Checkin], net: &DetectorNetwork) -> Traversals {
    let mut out = Traversals::default();
    for pair in checkins.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let Some(link) = net.link(a.detector_id.as_str(), b.detector_id.as_str()) else {
            continue;
        };
        match TravelTimeSample::new(link, a.timestamp, (b.timestamp - a.timestamp) as f64) {
            Ok(s) => out.samples.push(s),
            Err(_) => out.rejected += 1,
        }
    }
    out
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median/MAD-gated mean. `None` for an empty input.
///
/// Values farther than `3 × 1.4826 × MAD` from the median are dropped; when the
/// MAD is zero only values equal to the median survive.
pub fn robust_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = median_sorted(&sorted);
    let mut deviations: Vec<f64> = sorted.iter().map(|x| (x - median).abs()).collect();
    deviations.sort_by(f64::total_cmp);
    let mad = median_sorted(&deviations);
    let survivors: Vec<f64> = if mad == 0.0 {
        sorted.iter().copied().filter(|&x| x == median).collect()
    } else {
        let gate = MAD_GATE * MAD_SCALE * mad;
        sorted
            .iter()
            .copied()
            .filter(|x| (x - median).abs() <= gate)
            .collect()
    };
    // MAD == 0 implies a strict majority equals the median, so survivors is never empty.
    let mean = survivors.iter().sum::<f64>() / survivors.len() as f64;
    // Keep within the survivors' hull despite rounding in the sum.
    Some(mean.clamp(survivors[0], survivors[survivors.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comfort {
    High,
    Medium,
    Low,
}

impl Comfort {
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio >= HIGH_COMFORT_RATIO {
            Comfort::High
        } else if ratio >= MEDIUM_COMFORT_RATIO {
            Comfort::Medium
        } else {
            Comfort::Low
        }
    }
}

/// Current speed over free-flow speed for a link traversed in `estimate` seconds.
pub fn congestion_ratio(link: &Link, estimate: f64) -> f64 {
    let current_kmh = link.length / estimate * 3.6;
    current_kmh / link.free_flow_speed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub link: LinkKey,
    pub window_start: Timestamp,
    /// Robust travel-time estimate, seconds.
    pub estimate: f64,
    pub sample_count: usize,
    pub congestion_ratio: f64,
    pub comfort: Comfort,
}

impl LinkState {
    pub fn window(&self) -> TimeWindow {
        TimeWindow::containing(self.window_start)
    }
}

pub fn comfort_index(state: &LinkState) -> Comfort {
    Comfort::from_ratio(state.congestion_ratio)
}

/// Robust state of one link over one window; `None` when there are no samples.
pub fn aggregate_link_window(
    link: &Link,
    window: TimeWindow,
    samples: &[TravelTimeSample],
) -> Option<LinkState> {
    debug_assert!(samples.iter().all(|s| window.contains(s.depart) && s.link == link.key()));
    let times: Vec<f64> = samples.iter().map(|s| s.travel_time).collect();
    let estimate = robust_mean(&times)?;
    let ratio = congestion_ratio(link, estimate);
    Some(LinkState {
        link: link.key(),
        window_start: window.start(),
        estimate,
        sample_count: samples.len(),
        congestion_ratio: ratio,
        comfort: Comfort::from_ratio(ratio),
    })
}

/// Read access to per-window link states.
pub trait LinkStateProvider {
    /// State of `link` for the window containing `t`.
    fn link_state(&self, link: &LinkKey, t: Timestamp) -> Option<&LinkState>;
}

/// Immutable set of link states over any number of windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficSnapshot {
    pub generated_at: Timestamp,
    pub rejected_samples: usize,
    states: BTreeMap<(LinkKey, Timestamp), LinkState>,
}

/// Serialized form of a [`TrafficSnapshot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDocument {
    pub generated_at: Timestamp,
    pub window_seconds: i64,
    #[serde(default)]
    pub rejected_samples: usize,
    pub states: Vec<LinkState>,
}

impl TrafficSnapshot {
    /// Buckets samples by (link, window of departure) and aggregates each bucket.
    pub fn build(samples: &[TravelTimeSample], net: &DetectorNetwork, generated_at: Timestamp) -> Self {
        let mut buckets: BTreeMap<(LinkKey, TimeWindow), Vec<TravelTimeSample>> = BTreeMap::new();
        for s in samples {
            buckets
                .entry((s.link.clone(), TimeWindow::containing(s.depart)))
                .or_default()
                .push(s.clone());
        }
        let states = buckets
            .into_iter()
            .filter_map(|((key, window), group)| {
                let link = net.link_by_key(&key)?;
                aggregate_link_window(link, window, &group).map(|st| ((key, window.start()), st))
            })
            .collect();
        Self {
            generated_at,
            rejected_samples: 0,
            states,
        }
    }

    pub fn from_states(states: impl IntoIterator<Item = LinkState>, generated_at: Timestamp) -> Self {
        Self {
            generated_at,
            rejected_samples: 0,
            states: states
                .into_iter()
                .map(|s| ((s.link.clone(), TimeWindow::containing(s.window_start).start()), s))
                .collect(),
        }
    }

    pub fn insert(&mut self, state: LinkState) {
        let start = TimeWindow::containing(state.window_start).start();
        self.states.insert((state.link.clone(), start), state);
    }

    pub fn states(&self) -> impl Iterator<Item = &LinkState> {
        self.states.values()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// States of the most recent window present in the snapshot.
    pub fn latest(&self) -> Vec<&LinkState> {
        let Some(last) = self.states.values().map(|s| s.window_start).max() else {
            return Vec::new();
        };
        self.states.values().filter(|s| s.window_start == last).collect()
    }

    pub fn to_document(&self) -> SnapshotDocument {
        SnapshotDocument {
            generated_at: self.generated_at,
            window_seconds: WINDOW_SECONDS,
            rejected_samples: self.rejected_samples,
            states: self.states.values().cloned().collect(),
        }
    }

    pub fn from_document(doc: SnapshotDocument) -> Self {
        let mut snap = Self::from_states(doc.states, doc.generated_at);
        snap.rejected_samples = doc.rejected_samples;
        snap
    }
}

impl LinkStateProvider for TrafficSnapshot {
    fn link_state(&self, link: &LinkKey, t: Timestamp) -> Option<&LinkState> {
        self.states
            .get(&(link.clone(), TimeWindow::containing(t).start()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricProfile {
    pub link: LinkKey,
    pub day_class: DayClass,
    /// 900 s time-of-day bin, 0..=95.
    pub time_of_day_bin: u32,
    pub estimate: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoricProfiles {
    profiles: BTreeMap<(LinkKey, DayClass, u32), HistoricProfile>,
}

impl HistoricProfiles {
    pub fn from_profiles(profiles: impl IntoIterator<Item = HistoricProfile>) -> Self {
        Self {
            profiles: profiles
                .into_iter()
                .map(|p| ((p.link.clone(), p.day_class, p.time_of_day_bin), p))
                .collect(),
        }
    }

    /// Profile for the day class and time-of-day bin of `t`.
    pub fn lookup(&self, link: &LinkKey, t: Timestamp) -> Option<&HistoricProfile> {
        self.profiles
            .get(&(link.clone(), DayClass::of(t), time_of_day_bin(t)))
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoricProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// Buckets samples by (link, day class, time-of-day bin) and aggregates robustly.
pub fn build_historic_profiles(samples: &[TravelTimeSample]) -> HistoricProfiles {
    let mut buckets: BTreeMap<(LinkKey, DayClass, u32), Vec<f64>> = BTreeMap::new();
    for s in samples {
        buckets
            .entry((s.link.clone(), DayClass::of(s.depart), time_of_day_bin(s.depart)))
            .or_default()
            .push(s.travel_time);
    }
    HistoricProfiles::from_profiles(buckets.into_iter().filter_map(|((link, day_class, bin), times)| {
        robust_mean(&times).map(|estimate| HistoricProfile {
            link,
            day_class,
            time_of_day_bin: bin,
            estimate,
            sample_count: times.len(),
        })
    }))
}

/// Extracts samples from many devices' check-in streams.
pub fn collect_samples<'a, I>(streams: I, net: &DetectorNetwork) -> Traversals
where
    I: IntoIterator<Item = &'a [Checkin]>,
{
    let mut all = Traversals::default();
    for stream in streams {
        let t = match_link_traversals(stream, net);
        all.samples.extend(t.samples);
        all.rejected += t.rejected;
    }
    all
}
