//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use safemobility_core::alerts::{parse_intersections, AlertEvaluator, ApproachConfig, IntersectionState, Phase, PhaseStep, SpatMessage, VehicleApproach};
use safemobility_core::estimation::{build_historic_profiles, collect_samples, HistoricProfiles, TrafficSnapshot};
use safemobility_core::identity::{MacAddress, MacPseudonym, Pseudonymizer};
use safemobility_core::kpi::{read_responses_csv, render_table};
use safemobility_core::routing::{compare_routes, route, CostContext, RouteRequest, TravelMode};
use safemobility_core::simulator::{simulate, DemandSpec, Slowdown};
use safemobility_core::trips::{dashboard_summary, reconstruct_trips, segment_trips, Checkin, DEFAULT_GAP_SECONDS};
use safemobility_core::{DetectorNetwork, GeoPoint, Timestamp};

type CheckinTuple = (String, Timestamp);

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_checkins(raw: Vec<CheckinTuple>) -> Vec<Checkin> {
    raw.into_iter().map(|(d, t)| Checkin::new(d.as_str(), t)).collect()
}

fn tuples(cs: &[Checkin]) -> Vec<CheckinTuple> {
    cs.iter().map(|c| (c.detector_id.as_str().to_string(), c.timestamp)).collect()
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {text:?}")))
}

/// Great-circle distance in meters.
#[pyfunction]
fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    let a = GeoPoint::new(lat1, lon1).map_err(value_err)?;
    let b = GeoPoint::new(lat2, lon2).map_err(value_err)?;
    Ok(safemobility_core::haversine(a, b))
}

/// Salted pseudonym of a MAC address, as 64 hex digits.
#[pyfunction]
fn pseudonymize(mac: &str, salt: &[u8]) -> PyResult<String> {
    let mac: MacAddress = mac.parse().map_err(value_err)?;
    let p = Pseudonymizer::new(salt).map_err(value_err)?;
    Ok(p.pseudonymize(&mac).to_string())
}

#[pyfunction]
fn mac_variants(mac: &str) -> PyResult<Vec<String>> {
    let mac: MacAddress = mac.parse().map_err(value_err)?;
    Ok(safemobility_core::identity::mac_variants(&mac))
}

/// MAD-filtered mean; `None` for an empty input.
#[pyfunction]
fn robust_mean(values: Vec<f64>) -> Option<f64> {
    safemobility_core::estimation::robust_mean(&values)
}

/// Splits `(detector, timestamp)` check-ins into trips and singletons.
#[pyfunction]
#[pyo3(signature = (checkins, gap_threshold = DEFAULT_GAP_SECONDS))]
fn segment(checkins: Vec<CheckinTuple>, gap_threshold: i64) -> PyResult<(Vec<Vec<CheckinTuple>>, Vec<CheckinTuple>)> {
    let seg = segment_trips(&to_checkins(checkins), gap_threshold).map_err(value_err)?;
    let trips = seg.trips().map(tuples).collect();
    let singles: Vec<Checkin> = seg.singletons().cloned().collect();
    Ok((trips, tuples(&singles)))
}

/// Signal phase `offset` seconds after the message was received.
#[pyfunction]
fn phase_at(current_phase: &str, time_to_change: f64, plan: Vec<(String, f64)>, offset: f64) -> PyResult<String> {
    let phase_plan = plan
        .iter()
        .map(|(p, d)| Ok(PhaseStep { phase: parse_enum::<Phase>("phase", p)?, duration: *d }))
        .collect::<PyResult<Vec<_>>>()?;
    let spat = SpatMessage {
        intersection_id: "py".into(),
        location: GeoPoint::new(0.0, 0.0).map_err(value_err)?,
        current_phase: parse_enum("phase", current_phase)?,
        time_to_change,
        phase_plan,
    };
    spat.validate().map_err(value_err)?;
    Ok(format!("{:?}", safemobility_core::alerts::phase_at(&spat, offset)))
}

/// Scores survey responses in CSV form against the KPI targets.
#[pyfunction]
fn evaluate_kpi<'py>(py: Python<'py>, csv_text: &str) -> PyResult<Bound<'py, PyAny>> {
    let responses = read_responses_csv(csv_text.as_bytes()).map_err(value_err)?;
    let eval = safemobility_core::kpi::evaluate(&responses).map_err(value_err)?;
    to_py(py, &eval)
}

#[pyfunction]
fn kpi_table(csv_text: &str) -> PyResult<String> {
    let responses = read_responses_csv(csv_text.as_bytes()).map_err(value_err)?;
    let eval = safemobility_core::kpi::evaluate(&responses).map_err(value_err)?;
    Ok(render_table(&eval))
}

#[pyclass(frozen)]
struct Network {
    inner: DetectorNetwork,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: DetectorNetwork::load(path).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: DetectorNetwork::from_json(text).map_err(value_err)? })
    }

    #[getter]
    fn detector_ids(&self) -> Vec<String> {
        self.inner.detectors().iter().map(|d| d.id.as_str().to_string()).collect()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.inner.links().len()
    }

    /// `(meters, [detector ids])` of the shortest path, or `None` when unreachable.
    fn shortest_distance(&self, origin: &str, destination: &str) -> PyResult<Option<(f64, Vec<String>)>> {
        let path = self.inner.shortest_distance(origin, destination).map_err(value_err)?;
        Ok(path.map(|p| (p.total_cost, p.nodes.iter().map(|n| n.as_str().to_string()).collect())))
    }

    /// Trips of one device's check-ins, each with distance, duration, speed and mode.
    #[pyo3(signature = (checkins, gap_threshold = DEFAULT_GAP_SECONDS))]
    fn trips<'py>(&self, py: Python<'py>, checkins: Vec<CheckinTuple>, gap_threshold: i64) -> PyResult<Bound<'py, PyAny>> {
        let rec = self.reconstruct(checkins, gap_threshold)?;
        to_py(py, &rec.trips)
    }

    #[pyo3(signature = (checkins, start, end, gap_threshold = DEFAULT_GAP_SECONDS))]
    fn dashboard<'py>(
        &self,
        py: Python<'py>,
        checkins: Vec<CheckinTuple>,
        start: Timestamp,
        end: Timestamp,
        gap_threshold: i64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let in_range = checkins.into_iter().filter(|(_, t)| (start..=end).contains(t)).collect();
        let rec = self.reconstruct(in_range, gap_threshold)?;
        to_py(py, &dashboard_summary(&rec.trips, rec.singleton_count, (start, end)))
    }

    /// Runs the simulator. Returns `(detections_csv, ground_truth)`.
    #[pyo3(signature = (demand_json, congestion_json = None))]
    fn simulate<'py>(&self, py: Python<'py>, demand_json: &str, congestion_json: Option<&str>) -> PyResult<(String, Bound<'py, PyAny>)> {
        let demand = DemandSpec::from_json(demand_json).map_err(value_err)?;
        let congestion: Vec<Slowdown> = match congestion_json {
            Some(t) => serde_json::from_str(t).map_err(value_err)?,
            None => Vec::new(),
        };
        let out = simulate(&self.inner, &demand, &congestion).map_err(value_err)?;
        Ok((out.detections_csv(), to_py(py, &out.ground_truth)?))
    }
}

impl Network {
    fn reconstruct(&self, raw: Vec<CheckinTuple>, gap: i64) -> PyResult<safemobility_core::trips::Reconstruction> {
        let mut cs = to_checkins(raw);
        cs.sort_by_key(|c| c.timestamp);
        let anon = MacPseudonym::parse(&"0".repeat(64)).expect("valid token");
        reconstruct_trips(&anon, &cs, &self.inner, gap).map_err(value_err)
    }
}

/// Link states and historic profiles built from per-device check-in streams.
#[pyclass(frozen)]
struct TrafficModel {
    net: DetectorNetwork,
    snapshot: TrafficSnapshot,
    historic: HistoricProfiles,
}

#[pymethods]
impl TrafficModel {
    #[new]
    fn new(network: &Network, streams: Vec<Vec<CheckinTuple>>, generated_at: Timestamp) -> Self {
        let streams: Vec<Vec<Checkin>> = streams.into_iter().map(to_checkins).collect();
        let samples = collect_samples(streams.iter().map(Vec::as_slice), &network.inner);
        let mut snapshot = TrafficSnapshot::build(&samples.samples, &network.inner, generated_at);
        snapshot.rejected_samples += samples.rejected;
        let historic = build_historic_profiles(&samples.samples);
        Self { net: network.inner.clone(), snapshot, historic }
    }

    fn states<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let all: Vec<_> = self.snapshot.states().collect();
        to_py(py, &all)
    }

    #[getter]
    fn rejected_samples(&self) -> usize {
        self.snapshot.rejected_samples
    }

    /// Fastest route, or `None` when the destination is unreachable.
    #[pyo3(signature = (origin, destination, depart, mode = "car"))]
    fn route<'py>(&self, py: Python<'py>, origin: &str, destination: &str, depart: Timestamp, mode: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        let req = self.request(origin, destination, depart, mode)?;
        let ctx = CostContext { realtime: &self.snapshot, historic: &self.historic };
        let found = route(&req, &self.net, &ctx).map_err(|e| PyKeyError::new_err(e.to_string()))?;
        found.map(|r| to_py(py, &r)).transpose()
    }

    #[pyo3(signature = (origin, destination, depart, mode = "car"))]
    fn compare<'py>(&self, py: Python<'py>, origin: &str, destination: &str, depart: Timestamp, mode: &str) -> PyResult<Bound<'py, PyAny>> {
        let req = self.request(origin, destination, depart, mode)?;
        let ctx = CostContext { realtime: &self.snapshot, historic: &self.historic };
        let cmp = compare_routes(&req, &self.net, &ctx).map_err(|e| PyKeyError::new_err(e.to_string()))?;
        to_py(py, &cmp)
    }
}

impl TrafficModel {
    fn request(&self, origin: &str, destination: &str, depart: Timestamp, mode: &str) -> PyResult<RouteRequest> {
        Ok(RouteRequest {
            origin: origin.into(),
            destination: destination.into(),
            depart,
            mode: parse_enum::<TravelMode>("mode", mode)?,
        })
    }
}

/// Intersection alerts from a SPaT fixture document.
#[pyclass(frozen)]
struct AlertService {
    states: Vec<IntersectionState>,
    evaluator: AlertEvaluator,
}

#[pymethods]
impl AlertService {
    #[new]
    fn new(fixture_json: &str, received_at: Timestamp) -> PyResult<Self> {
        let states = parse_intersections(fixture_json, received_at).map_err(value_err)?;
        Ok(Self { states, evaluator: AlertEvaluator::new(ApproachConfig::default()) })
    }

    /// Speed in m/s, bearing in degrees from north.
    fn alerts<'py>(&self, py: Python<'py>, lat: f64, lon: f64, speed: f64, bearing: f64, now: Timestamp) -> PyResult<Bound<'py, PyAny>> {
        let position = GeoPoint::new(lat, lon).map_err(value_err)?;
        let vehicle = VehicleApproach { position, speed, bearing: bearing.rem_euclid(360.0) };
        to_py(py, &self.evaluator.evaluate(&vehicle, &self.states, now))
    }

    #[getter]
    fn stale_suppressed(&self) -> u64 {
        self.evaluator.stale_suppressed()
    }
}

#[pymodule]
fn safemobility(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(haversine, m)?)?;
    m.add_function(wrap_pyfunction!(pseudonymize, m)?)?;
    m.add_function(wrap_pyfunction!(mac_variants, m)?)?;
    m.add_function(wrap_pyfunction!(robust_mean, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(phase_at, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_kpi, m)?)?;
    m.add_function(wrap_pyfunction!(kpi_table, m)?)?;
    m.add_class::<Network>()?;
    m.add_class::<TrafficModel>()?;
    m.add_class::<AlertService>()?;
    Ok(())
}
