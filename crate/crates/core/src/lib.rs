//! Mobility analytics over a network of roadside Bluetooth detectors.
//!
//! Detections are pseudonymized at ingest, segmented into per-device trips,
//! paired into link travel-time samples for robust congestion estimation, and
//! used for time-dependent pre-trip routing. Intersection alerts, external
//! information feeds, a deterministic traffic simulator and survey KPI scoring
//! complete the platform.

pub mod alerts;
pub mod estimation;
pub mod feeds;
pub mod geo;
pub mod identity;
pub mod ingest;
pub mod kpi;
pub mod network;
pub mod routing;
pub mod simulator;
pub mod time;
pub mod trips;

pub use geo::{haversine, GeoPoint};
pub use network::{DetectorId, DetectorNetwork, Link, LinkKey};
pub use time::{TimeWindow, Timestamp};
