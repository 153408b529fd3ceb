//! Parking availability and air quality feeds.
//!
//! Both feeds share one JSON document shape and one loader; the source is either
//! a local path or an `http(s)://` URL.
//!
//! ```json
//! {"facilities": [{"facility_id": "p1", "name": "Port", "lat": 40.63, "lon": 22.93,
//!                  "capacity": 400, "free_spaces": 120, "observed_at": 1600000000}]}
//! {"readings": [{"station_id": "s1", "lat": 40.63, "lon": 22.94,
//!                "pollutant": "PM10", "value": 35.0, "observed_at": 1600000000}]}
//! ```

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::time::Timestamp;

pub const PARKING_TTL_SECONDS: i64 = 600;
pub const AIR_QUALITY_TTL_SECONDS: i64 = 3600;

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("feed source unreachable: {0}")]
    Unreachable(String),
    #[error("feed document unparseable: {0}")]
    Unparseable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingStatus {
    pub facility_id: String,
    pub name: String,
    pub location: GeoPoint,
    pub capacity: u32,
    pub free_spaces: u32,
    pub observed_at: Timestamp,
    pub stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "PM10")]
    Pm10,
    #[serde(rename = "PM2.5")]
    Pm25,
    #[serde(rename = "NO2")]
    No2,
    #[serde(rename = "O3")]
    O3,
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pollutant::Pm10 => "PM10",
            Pollutant::Pm25 => "PM2.5",
            Pollutant::No2 => "NO2",
            Pollutant::O3 => "O3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirQualityReading {
    pub station_id: String,
    pub location: GeoPoint,
    pub pollutant: Pollutant,
    /// µg/m³.
    pub value: f64,
    pub observed_at: Timestamp,
    pub stale: bool,
}

/// Normalized records plus one diagnostic line per dropped record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedBatch<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<String>,
}

impl<T> Default for FeedBatch<T> {
    fn default() -> Self {
        Self { records: Vec::new(), diagnostics: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedTtls {
    pub parking: i64,
    pub air_quality: i64,
}

impl Default for FeedTtls {
    fn default() -> Self {
        Self { parking: PARKING_TTL_SECONDS, air_quality: AIR_QUALITY_TTL_SECONDS }
    }
}

pub fn is_stale(observed_at: Timestamp, now: Timestamp, ttl: i64) -> bool {
    now - observed_at > ttl
}

#[derive(Deserialize)]
struct ParkingRecord {
    facility_id: String,
    name: String,
    lat: f64,
    lon: f64,
    capacity: u32,
    free_spaces: u32,
    observed_at: Timestamp,
}

#[derive(Deserialize)]
struct AirRecord {
    station_id: String,
    lat: f64,
    lon: f64,
    pollutant: Pollutant,
    value: f64,
    observed_at: Timestamp,
}

/// Reads a source into text. `http://` and `https://` go over the network.
pub fn read_source(source: &str) -> Result<String, FeedError> {
    if source.starts_with("http://") || source.starts_with("https://") {
        let mut resp = ureq::get(source)
            .call()
            .map_err(|e| FeedError::Unreachable(format!("{source}: {e}")))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| FeedError::Unreachable(format!("{source}: {e}")))
    } else {
        std::fs::read_to_string(Path::new(source)).map_err(|e| FeedError::Unreachable(format!("{source}: {e}")))
    }
}

fn records<R: DeserializeOwned>(text: &str, key: &str, diagnostics: &mut Vec<String>) -> Result<Vec<(usize, R)>, FeedError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| FeedError::Unparseable(e.to_string()))?;
    let list = match doc.get(key) {
        Some(serde_json::Value::Array(items)) => items,
        Some(_) => return Err(FeedError::Unparseable(format!("\"{key}\" is not an array"))),
        None => return Err(FeedError::Unparseable(format!("missing \"{key}\""))),
    };
    let mut out = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        match R::deserialize(item) {
            Ok(r) => out.push((i, r)),
            Err(e) => diagnostics.push(format!("{key}[{i}]: {e}")),
        }
    }
    Ok(out)
}

pub fn parse_parking(text: &str, now: Timestamp, ttl: i64) -> Result<FeedBatch<ParkingStatus>, FeedError> {
    let mut batch = FeedBatch::default();
    for (i, r) in records::<ParkingRecord>(text, "facilities", &mut batch.diagnostics)? {
        let location = match GeoPoint::new(r.lat, r.lon) {
            Ok(p) => p,
            Err(e) => {
                batch.diagnostics.push(format!("facilities[{i}]: {e}"));
                continue;
            }
        };
        if r.capacity == 0 {
            batch.diagnostics.push(format!("facilities[{i}]: capacity must be positive"));
            continue;
        }
        if r.free_spaces > r.capacity {
            batch.diagnostics.push(format!(
                "facilities[{i}]: free_spaces {} exceeds capacity {}",
                r.free_spaces, r.capacity
            ));
            continue;
        }
        batch.records.push(ParkingStatus {
            facility_id: r.facility_id,
            name: r.name,
            location,
            capacity: r.capacity,
            free_spaces: r.free_spaces,
            observed_at: r.observed_at,
            stale: is_stale(r.observed_at, now, ttl),
        });
    }
    Ok(batch)
}

pub fn parse_air_quality(text: &str, now: Timestamp, ttl: i64) -> Result<FeedBatch<AirQualityReading>, FeedError> {
    let mut batch = FeedBatch::default();
    for (i, r) in records::<AirRecord>(text, "readings", &mut batch.diagnostics)? {
        let location = match GeoPoint::new(r.lat, r.lon) {
            Ok(p) => p,
            Err(e) => {
                batch.diagnostics.push(format!("readings[{i}]: {e}"));
                continue;
            }
        };
        if !(r.value.is_finite() && r.value >= 0.0) {
            batch.diagnostics.push(format!("readings[{i}]: value {} not a non-negative number", r.value));
            continue;
        }
        batch.records.push(AirQualityReading {
            station_id: r.station_id,
            location,
            pollutant: r.pollutant,
            value: r.value,
            observed_at: r.observed_at,
            stale: is_stale(r.observed_at, now, ttl),
        });
    }
    Ok(batch)
}

pub fn fetch_parking(source: &str, now: Timestamp) -> Result<FeedBatch<ParkingStatus>, FeedError> {
    parse_parking(&read_source(source)?, now, PARKING_TTL_SECONDS)
}

pub fn fetch_air_quality(source: &str, now: Timestamp) -> Result<FeedBatch<AirQualityReading>, FeedError> {
    parse_air_quality(&read_source(source)?, now, AIR_QUALITY_TTL_SECONDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NOW: Timestamp = 1_600_000_000;

    #[test]
    fn empty_documents() {
        assert!(parse_parking(r#"{"facilities":[]}"#, NOW, 600).unwrap().records.is_empty());
        assert!(parse_air_quality(r#"{"readings":[]}"#, NOW, 3600).unwrap().records.is_empty());
        assert!(matches!(parse_parking("{", NOW, 600), Err(FeedError::Unparseable(_))));
        assert!(matches!(parse_parking(r#"{"readings":[]}"#, NOW, 600), Err(FeedError::Unparseable(_))));
    }

    #[test]
    fn parking_staleness() {
        let text = format!(
            r#"{{"facilities":[
              {{"facility_id":"a","name":"A","lat":40.63,"lon":22.94,"capacity":100,"free_spaces":10,"observed_at":{}}},
              {{"facility_id":"b","name":"B","lat":40.64,"lon":22.95,"capacity":50,"free_spaces":50,"observed_at":{}}}]}}"#,
            NOW - 700,
            NOW - 600
        );
        let batch = parse_parking(&text, NOW, PARKING_TTL_SECONDS).unwrap();
        assert_eq!(batch.records.len(), 2);
        assert!(batch.records[0].stale);
        // exactly at the TTL is still fresh
        assert!(!batch.records[1].stale);
    }

    #[test]
    fn overfull_dropped() {
        let text = r#"{"facilities":[
          {"facility_id":"a","name":"A","lat":40.63,"lon":22.94,"capacity":10,"free_spaces":11,"observed_at":0},
          {"facility_id":"b","name":"B","lat":40.63,"lon":22.94,"capacity":0,"free_spaces":0,"observed_at":0},
          {"facility_id":"c","name":"C","lat":95.0,"lon":22.94,"capacity":5,"free_spaces":1,"observed_at":0},
          {"facility_id":"d","name":"D"}]}"#;
        let batch = parse_parking(text, 0, 600).unwrap();
        assert!(batch.records.is_empty());
        assert_eq!(batch.diagnostics.len(), 4);
        assert!(batch.diagnostics.iter().any(|d| d.starts_with("facilities[0]") && d.contains("exceeds capacity")));
    }

    #[test]
    fn air_quality_passthrough() {
        let text = format!(
            r#"{{"readings":[
              {{"station_id":"s","lat":40.63,"lon":22.94,"pollutant":"PM10","value":35.0,"observed_at":{NOW}}},
              {{"station_id":"s","lat":40.63,"lon":22.94,"pollutant":"PM2.5","value":-1.0,"observed_at":{NOW}}},
              {{"station_id":"s","lat":40.63,"lon":22.94,"pollutant":"CO","value":1.0,"observed_at":{NOW}}}]}}"#
        );
        let batch = parse_air_quality(&text, NOW, AIR_QUALITY_TTL_SECONDS).unwrap();
        assert_eq!(batch.records.len(), 1);
        let r = &batch.records[0];
        assert_eq!((r.pollutant, r.value, r.stale), (Pollutant::Pm10, 35.0, false));
        assert_eq!(batch.diagnostics.len(), 2);
        assert_eq!(serde_json::to_value(Pollutant::Pm25).unwrap(), "PM2.5");
    }

    #[test]
    fn file_source_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("parking.json");
        std::fs::write(&path, r#"{"facilities":[]}"#).unwrap();
        assert!(fetch_parking(path.to_str().unwrap(), NOW).unwrap().records.is_empty());
        let missing = dir.path().join("nope.json");
        assert!(matches!(fetch_parking(missing.to_str().unwrap(), NOW), Err(FeedError::Unreachable(_))));
    }

    proptest! {
        #[test]
        fn records_satisfy_invariants(
            rows in prop::collection::vec((0u32..200, 0u32..250, -100.0f64..100.0, -5000i64..5000, -100.0f64..100.0), 0..20)
        ) {
            let facilities: Vec<serde_json::Value> = rows.iter().enumerate().map(|(i, &(cap, free, lat, age, _))| serde_json::json!({
                "facility_id": format!("f{i}"), "name": "x", "lat": lat, "lon": 22.9,
                "capacity": cap, "free_spaces": free, "observed_at": NOW - age,
            })).collect();
            let readings: Vec<serde_json::Value> = rows.iter().enumerate().map(|(i, &(_, _, lat, age, v))| serde_json::json!({
                "station_id": format!("s{i}"), "lat": lat, "lon": 22.9, "pollutant": "NO2",
                "value": v, "observed_at": NOW - age,
            })).collect();
            let ptext = serde_json::json!({ "facilities": facilities }).to_string();
            let atext = serde_json::json!({ "readings": readings }).to_string();
            let p = parse_parking(&ptext, NOW, 600).unwrap();
            prop_assert_eq!(p.records.len() + p.diagnostics.len(), rows.len());
            for r in &p.records {
                prop_assert!(r.capacity > 0 && r.free_spaces <= r.capacity);
                prop_assert_eq!(r.stale, NOW - r.observed_at > 600);
            }
            prop_assert_eq!(&p, &parse_parking(&ptext, NOW, 600).unwrap());
            let a = parse_air_quality(&atext, NOW, 3600).unwrap();
            prop_assert_eq!(a.records.len() + a.diagnostics.len(), rows.len());
            for r in &a.records {
                prop_assert!(r.value.is_finite() && r.value >= 0.0);
                prop_assert_eq!(r.stale, NOW - r.observed_at > 3600);
            }
            prop_assert_eq!(&a, &parse_air_quality(&atext, NOW, 3600).unwrap());
        }
    }
}
