//! Detection ingest: validate, pseudonymize, append to a newline-delimited event log.
//!
//! The log starts with one header line naming the format and version; every
//! following line is one JSON event. Raw MACs are dropped before anything is
//! written. Appends are serialized through a single writer; readers see the
//! in-memory copy of the flushed prefix.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{IdentityError, MacAddress, MacPseudonym, Pseudonymizer};
use crate::network::{DetectorId, DetectorNetwork};
use crate::time::Timestamp;

/// Future timestamps beyond this many seconds past the ingest clock are rejected.
pub const CLOCK_SKEW_SECONDS: i64 = 60;

const LOG_FORMAT: &str = "safemobility-detections";
const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error("malformed MAC {0:?}")]
    MalformedMac(String),
    #[error("future timestamp {timestamp} (clock {clock})")]
    FutureTimestamp { timestamp: Timestamp, clock: Timestamp },
    #[error("query range inverted: from {from} > to {to}")]
    InvertedRange { from: Timestamp, to: Timestamp },
    #[error("event log {path}: {message}")]
    Format { path: String, message: String },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("event log I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Unvalidated detector upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDetection {
    pub detector_id: String,
    pub mac: String,
    pub timestamp: Timestamp,
}

/// One pseudonymized check-in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detector_id: DetectorId,
    pub pseudonym: MacPseudonym,
    pub timestamp: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    format: String,
    version: u32,
}

#[derive(Debug, Default, Serialize)]
pub struct BatchReport {
    pub accepted: usize,
    pub rejected: Vec<String>,
}

/// Validates a raw record and substitutes the pseudonym for the MAC.
pub fn validate_detection(
    raw: &RawDetection,
    net: &DetectorNetwork,
    pseudonymizer: &Pseudonymizer,
    clock: Timestamp,
) -> Result<DetectionEvent, IngestError> {
    let detector = net
        .detector(&raw.detector_id)
        .ok_or_else(|| IngestError::UnknownDetector(raw.detector_id.clone()))?;
    let mac: MacAddress = raw.mac.parse().map_err(|e| match e {
        IdentityError::MalformedMac(m) => IngestError::MalformedMac(m),
        other => IngestError::MalformedMac(other.to_string()),
    })?;
    if raw.timestamp > clock + CLOCK_SKEW_SECONDS {
        return Err(IngestError::FutureTimestamp {
            timestamp: raw.timestamp,
            clock,
        });
    }
    Ok(DetectionEvent {
        detector_id: detector.id.clone(),
        pseudonym: pseudonymizer.pseudonymize(&mac),
        timestamp: raw.timestamp,
    })
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    writer: Mutex<File>,
    events: RwLock<Vec<DetectionEvent>>,
}

impl EventLog {
    /// Opens or creates the log. A torn final line (no trailing newline) is discarded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let fmt_err = |message: String| IngestError::Format {
            path: path.display().to_string(),
            message,
        };

        let mut events = Vec::new();
        if text.is_empty() {
            let header = serde_json::to_string(&LogHeader {
                format: LOG_FORMAT.into(),
                version: LOG_VERSION,
            })
            .expect("header serializes");
            writeln!(file, "{header}")?;
            file.sync_data()?;
        } else {
            let complete = match text.rfind('\n') {
                Some(i) => i + 1,
                None => 0,
            };
            if complete < text.len() {
                // Drop the partially written tail so the next append starts on a fresh line.
                file.set_len(complete as u64)?;
                file.seek(SeekFrom::End(0))?;
            }
            let mut lines = text[..complete].lines();
            let header: LogHeader = lines
                .next()
                .and_then(|l| serde_json::from_str(l).ok())
                .ok_or_else(|| fmt_err("missing header".into()))?;
            if header.format != LOG_FORMAT || header.version != LOG_VERSION {
                return Err(fmt_err(format!(
                    "unsupported format {} v{}",
                    header.format, header.version
                )));
            }
            for (i, line) in lines.enumerate() {
                let event: DetectionEvent = serde_json::from_str(line)
                    .map_err(|e| fmt_err(format!("line {}: {e}", i + 2)))?;
                events.push(event);
            }
        }
        Ok(Self {
            path,
            writer: Mutex::new(file),
            events: RwLock::new(events),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates, pseudonymizes and durably appends one detection.
    pub fn ingest_detection(
        &self,
        raw: &RawDetection,
        net: &DetectorNetwork,
        pseudonymizer: &Pseudonymizer,
        clock: Timestamp,
    ) -> Result<DetectionEvent, IngestError> {
        let event = validate_detection(raw, net, pseudonymizer, clock)?;
        self.append(std::slice::from_ref(&event))?;
        Ok(event)
    }

    /// Ingests many records with a single flush; invalid records are reported, not fatal.
    pub fn ingest_batch<I>(
        &self,
        raws: I,
        net: &DetectorNetwork,
        pseudonymizer: &Pseudonymizer,
        clock: Timestamp,
    ) -> Result<BatchReport, IngestError>
    where
        I: IntoIterator<Item = Result<RawDetection, IngestError>>,
    {
        let mut report = BatchReport::default();
        let mut valid = Vec::new();
        for raw in raws {
            match raw.and_then(|r| validate_detection(&r, net, pseudonymizer, clock)) {
                Ok(ev) => valid.push(ev),
                Err(e) => report.rejected.push(e.to_string()),
            }
        }
        self.append(&valid)?;
        report.accepted = valid.len();
        Ok(report)
    }

    fn append(&self, events: &[DetectionEvent]) -> Result<(), IngestError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for ev in events {
            buf.push_str(&serde_json::to_string(ev).expect("event serializes"));
            buf.push('\n');
        }
        let mut file = self.writer.lock().expect("writer lock poisoned");
        file.write_all(buf.as_bytes())?;
        file.sync_data()?;
        self.events
            .write()
            .expect("events lock poisoned")
            .extend_from_slice(events);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.read().expect("events lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every event in ingest order.
    pub fn snapshot(&self) -> Vec<DetectionEvent> {
        self.events.read().expect("events lock poisoned").clone()
    }

    /// Events of one pseudonym with `from <= t <= to`, ascending by time then detector id.
    pub fn query_detections(
        &self,
        pseudonym: &MacPseudonym,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<DetectionEvent>, IngestError> {
        if from > to {
            return Err(IngestError::InvertedRange { from, to });
        }
        let mut out: Vec<DetectionEvent> = self
            .events
            .read()
            .expect("events lock poisoned")
            .iter()
            .filter(|e| &e.pseudonym == pseudonym && (from..=to).contains(&e.timestamp))
            .cloned()
            .collect();
        sort_events(&mut out);
        Ok(out)
    }

    /// All events grouped per pseudonym, each group time-ordered.
    pub fn by_pseudonym(&self) -> BTreeMap<MacPseudonym, Vec<DetectionEvent>> {
        group_by_pseudonym(&self.events.read().expect("events lock poisoned"))
    }
}

pub fn sort_events(events: &mut [DetectionEvent]) {
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.detector_id.cmp(&b.detector_id))
    });
}

pub fn group_by_pseudonym(events: &[DetectionEvent]) -> BTreeMap<MacPseudonym, Vec<DetectionEvent>> {
    let mut groups: BTreeMap<MacPseudonym, Vec<DetectionEvent>> = BTreeMap::new();
    for ev in events {
        groups.entry(ev.pseudonym.clone()).or_default().push(ev.clone());
    }
    for g in groups.values_mut() {
        sort_events(g);
    }
    groups
}

/// Reads `detector_id,mac,timestamp` rows (header required).
pub fn read_detections_csv<R: Read>(reader: R) -> Vec<Result<RawDetection, IngestError>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<RawDetection>()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| IngestError::Csv {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_detections_csv_file(path: impl AsRef<Path>) -> Result<Vec<Result<RawDetection, IngestError>>, IngestError> {
    let file = File::open(path)?;
    Ok(read_detections_csv(BufReader::new(file)))
}

/// Number of complete lines in a log file, header included.
pub fn count_lines(path: impl AsRef<Path>) -> Result<usize, IngestError> {
    Ok(BufReader::new(File::open(path)?).lines().count())
}
