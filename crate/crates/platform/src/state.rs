//! Shared service state. Derived data is published as immutable `Arc` snapshots.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use serde::Serialize;

use safemobility_core::alerts::{load_intersections, AlertEvaluator, ApproachConfig, IntersectionState};
use safemobility_core::estimation::{build_historic_profiles, collect_samples, HistoricProfiles, TrafficSnapshot};
use safemobility_core::feeds::{fetch_air_quality, fetch_parking, AirQualityReading, FeedBatch, ParkingStatus};
use safemobility_core::identity::{AccountStore, ProfileCipher, Pseudonymizer};
use safemobility_core::ingest::{read_detections_csv, read_detections_csv_file, BatchReport, EventLog, IngestError, RawDetection};
use safemobility_core::trips::{collapse_duplicates, reconstruct_trips, Checkin, Trip, TripError};
use safemobility_core::{DetectorNetwork, Timestamp};

use crate::config::{ApiConfig, FeedConfig};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        chrono::Utc::now().timestamp()
    }
}

/// Settable clock for tests and replays.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(t: Timestamp) -> Self {
        Self(AtomicI64::new(t))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Default)]
pub struct Traffic {
    pub snapshot: TrafficSnapshot,
    pub historic: HistoricProfiles,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedState<T> {
    pub fetched_at: Option<Timestamp>,
    pub records: Vec<T>,
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

impl<T> Default for FeedState<T> {
    fn default() -> Self {
        Self { fetched_at: None, records: Vec::new(), diagnostics: Vec::new(), error: None }
    }
}

impl<T> FeedState<T> {
    fn from_result(res: Result<FeedBatch<T>, String>, now: Timestamp) -> Self {
        match res {
            Ok(b) => Self { fetched_at: Some(now), records: b.records, diagnostics: b.diagnostics, error: None },
            Err(e) => Self { fetched_at: Some(now), records: Vec::new(), diagnostics: Vec::new(), error: Some(e) },
        }
    }
}

#[derive(Debug, Default)]
pub struct Feeds {
    pub parking: FeedState<ParkingStatus>,
    pub air_quality: FeedState<AirQualityReading>,
}

/// A user's trip together with the index of the MAC it was observed under.
#[derive(Debug, Clone)]
pub struct OwnedTrip {
    pub mac_index: usize,
    pub trip: Trip,
}

impl OwnedTrip {
    pub fn id(&self) -> String {
        format!("{}-{}", self.mac_index, self.trip.start)
    }
}

pub struct AppState {
    pub net: Arc<DetectorNetwork>,
    pub accounts: AccountStore,
    pub events: EventLog,
    pub alerts: AlertEvaluator,
    pub intersections: Vec<IntersectionState>,
    pub clock: Arc<dyn Clock>,
    pub gap_threshold: i64,
    pub admin_token: Option<String>,
    pub feed_sources: FeedConfig,
    traffic: RwLock<Arc<Traffic>>,
    feeds: RwLock<Arc<Feeds>>,
    writes: Mutex<()>,
}

impl AppState {
    pub fn new(cfg: &ApiConfig, clock: Arc<dyn Clock>) -> anyhow::Result<Arc<Self>> {
        let secrets = cfg.validate()?;
        let net = DetectorNetwork::load(&cfg.network).context("loading network")?;
        std::fs::create_dir_all(&cfg.data_dir).with_context(|| format!("creating {}", cfg.data_dir.display()))?;
        let pseudonymizer = Pseudonymizer::new(&secrets.salt)?;
        let cipher = ProfileCipher::new(&secrets.profile_key)?;
        let accounts = AccountStore::open_with_rounds(cfg.data_dir.join("accounts.json"), pseudonymizer, cipher, cfg.pbkdf2_rounds)?;
        let events = EventLog::open(cfg.data_dir.join("detections.ndjson"))?;
        let intersections = match &cfg.intersections {
            Some(p) => load_intersections(p, clock.now())?,
            None => Vec::new(),
        };
        let state = Arc::new(Self {
            net: Arc::new(net),
            accounts,
            events,
            alerts: AlertEvaluator::new(ApproachConfig::default()),
            intersections,
            clock,
            gap_threshold: cfg.gap_threshold_s,
            admin_token: secrets.admin_token,
            feed_sources: cfg.feeds.clone(),
            traffic: RwLock::new(Arc::default()),
            feeds: RwLock::new(Arc::default()),
            writes: Mutex::new(()),
        });
        if let Some(path) = &cfg.replay {
            let rows = read_detections_csv_file(path)?;
            let report = state.replay(rows)?;
            tracing::info!(accepted = report.accepted, rejected = report.rejected.len(), "startup replay");
        } else {
            state.rebuild_traffic();
        }
        state.refresh_feeds();
        Ok(state)
    }

    pub fn traffic(&self) -> Arc<Traffic> {
        self.traffic.read().expect("traffic lock poisoned").clone()
    }

    pub fn feeds(&self) -> Arc<Feeds> {
        self.feeds.read().expect("feeds lock poisoned").clone()
    }

    /// Recomputes link states and historic profiles from the whole event log.
    pub fn rebuild_traffic(&self) {
        let streams: Vec<Vec<Checkin>> = self
            .events
            .by_pseudonym()
            .values()
            .map(|evs| collapse_duplicates(&evs.iter().map(Checkin::from).collect::<Vec<_>>()))
            .collect();
        let samples = collect_samples(streams.iter().map(Vec::as_slice), &self.net);
        let mut snapshot = TrafficSnapshot::build(&samples.samples, &self.net, self.clock.now());
        snapshot.rejected_samples += samples.rejected;
        let historic = build_historic_profiles(&samples.samples);
        *self.traffic.write().expect("traffic lock poisoned") = Arc::new(Traffic { snapshot, historic });
    }

    pub fn refresh_feeds(&self) {
        let now = self.clock.now();
        let parking = match &self.feed_sources.parking {
            Some(src) => FeedState::from_result(fetch_parking(src, now).map_err(|e| e.to_string()), now),
            None => FeedState::default(),
        };
        let air_quality = match &self.feed_sources.air_quality {
            Some(src) => FeedState::from_result(fetch_air_quality(src, now).map_err(|e| e.to_string()), now),
            None => FeedState::default(),
        };
        *self.feeds.write().expect("feeds lock poisoned") = Arc::new(Feeds { parking, air_quality });
    }

    pub fn replay_csv(&self, text: &str) -> Result<BatchReport, IngestError> {
        self.replay(read_detections_csv(text.as_bytes()))
    }

    /// Ingests raw detections, then republishes traffic state. Serialized with other writes.
    pub fn replay(&self, rows: Vec<Result<RawDetection, IngestError>>) -> Result<BatchReport, IngestError> {
        let _guard = self.writes.lock().expect("write lock poisoned");
        let report = self
            .events
            .ingest_batch(rows, &self.net, self.accounts.pseudonymizer(), self.clock.now())?;
        self.rebuild_traffic();
        Ok(report)
    }

    /// Trips of one user within `[from, to]`, optionally limited to one MAC. Also returns the singleton count.
    pub fn user_trips(
        &self,
        user_id: &str,
        mac_index: Option<usize>,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Option<(Vec<OwnedTrip>, usize)>, TripError> {
        let Some(account) = self.accounts.account(user_id) else {
            return Ok(None);
        };
        let mut trips = Vec::new();
        let mut singletons = 0;
        for (idx, pseudonym) in account.pseudonyms.iter().enumerate() {
            if mac_index.is_some_and(|m| m != idx) {
                continue;
            }
            let events = self.events.query_detections(pseudonym, from, to).unwrap_or_default();
            let checkins: Vec<Checkin> = events.iter().map(Checkin::from).collect();
            let rec = reconstruct_trips(pseudonym, &checkins, &self.net, self.gap_threshold)?;
            singletons += rec.singleton_count;
            trips.extend(rec.trips.into_iter().map(|trip| OwnedTrip { mac_index: idx, trip }));
        }
        trips.sort_by_key(|t| (t.trip.start, t.mac_index));
        Ok(Some((trips, singletons)))
    }
}

/// Periodically refreshes feed snapshots.
pub fn spawn_feed_poller(state: Arc<AppState>) -> Option<tokio::task::JoinHandle<()>> {
    let secs = state.feed_sources.poll_interval_s;
    if secs == 0 || (state.feed_sources.parking.is_none() && state.feed_sources.air_quality.is_none()) {
        return None;
    }
    Some(tokio::spawn(async move {
        let mut tick = tokio::time::interval(std::time::Duration::from_secs(secs));
        tick.tick().await;
        loop {
            tick.tick().await;
            let st = state.clone();
            if tokio::task::spawn_blocking(move || st.refresh_feeds()).await.is_err() {
                tracing::warn!("feed refresh panicked");
            }
        }
    }))
}
