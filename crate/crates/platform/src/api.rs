//! HTTP routes.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use safemobility_core::alerts::{Alert, VehicleApproach};
use safemobility_core::estimation::{LinkState, LinkStateProvider};
use safemobility_core::feeds::{is_stale, AIR_QUALITY_TTL_SECONDS, PARKING_TTL_SECONDS};
use safemobility_core::identity::{IdentityError, UserProfile, SESSION_TTL_SECONDS};
use safemobility_core::ingest::{BatchReport, CLOCK_SKEW_SECONDS};
use safemobility_core::routing::{compare_routes, route, CostContext, RouteComparison, RouteRequest, RouteResult, RoutingError, TravelMode};
use safemobility_core::time::{parse_bound, WINDOW_SECONDS};
use safemobility_core::trips::{dashboard_summary, personal_trips, Checkin, DashboardSummary, Mode, PersonalTripRow};
use safemobility_core::{DetectorId, GeoPoint, Timestamp};

use crate::state::{AppState, FeedState, OwnedTrip};

type Shared = Arc<AppState>;

/// Error body `{code, message}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request("invalid_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::bad_request("invalid_query", r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Authenticated user id from `Authorization: Bearer <token>`.
pub struct AuthUser(pub String);

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let token = bearer(&parts.headers)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
        state
            .accounts
            .resolve_session(token, state.clock.now())
            .map(AuthUser)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "invalid or expired session"))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/register", post(register))
        .route("/login", post(login))
        .route("/dashboard", get(dashboard))
        .route("/trips", get(trips))
        .route("/trips/{id}", get(trip_detail))
        .route("/traffic", get(traffic))
        .route("/route", post(route_handler))
        .route("/route/compare", post(route_compare))
        .route("/alerts", get(alerts))
        .route("/parking", get(parking))
        .route("/airquality", get(air_quality))
        .route("/admin/replay", post(admin_replay))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub service: String,
    pub version: String,
    pub detectors: usize,
    pub links: usize,
    pub events: usize,
    pub accounts: usize,
}

async fn health(State(st): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        service: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        detectors: st.net.detectors().len(),
        links: st.net.links().len(),
        events: st.events.len(),
        accounts: st.accounts.len(),
    })
}

#[derive(Debug, Deserialize)]
pub struct RegisterRequest {
    #[serde(flatten)]
    pub profile: UserProfile,
    pub email: String,
    pub password: String,
    pub macs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub user_id: String,
}

fn identity_error(e: IdentityError) -> ApiError {
    let code = match e {
        IdentityError::DuplicateEmail => return ApiError::new(StatusCode::CONFLICT, "duplicate_email", e.to_string()),
        IdentityError::MalformedMac(_) => "malformed_mac",
        IdentityError::NoMac => "no_mac",
        IdentityError::MalformedEmail => "malformed_email",
        IdentityError::WeakPassword => "weak_password",
        IdentityError::InvalidProfile(_) => "invalid_profile",
        _ => return ApiError::internal(e),
    };
    ApiError::bad_request(code, e.to_string())
}

async fn register(
    State(st): State<Shared>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterResponse>)> {
    let Json(req) = body?;
    let now = st.clock.now();
    let user_id = tokio::task::spawn_blocking(move || {
        let macs: Vec<&str> = req.macs.iter().map(String::as_str).collect();
        st.accounts.register_user(req.profile, &macs, &req.email, &req.password, now)
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(identity_error)?;
    Ok((StatusCode::CREATED, Json(RegisterResponse { user_id })))
}

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub email: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub token_type: String,
    pub expires_at: Timestamp,
}

async fn login(State(st): State<Shared>, body: Result<Json<LoginRequest>, JsonRejection>) -> ApiResult<Json<LoginResponse>> {
    let Json(req) = body?;
    let now = st.clock.now();
    let token = tokio::task::spawn_blocking(move || st.accounts.authenticate(&req.email, &req.password, now))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::new(StatusCode::UNAUTHORIZED, "invalid_credentials", e.to_string()))?;
    Ok(Json(LoginResponse { token, token_type: "Bearer".into(), expires_at: now + SESSION_TTL_SECONDS }))
}

#[derive(Debug, Deserialize)]
pub struct RangeQuery {
    pub from: Option<String>,
    pub to: Option<String>,
    pub mac_index: Option<usize>,
}

fn resolve_range(q: &RangeQuery, now: Timestamp) -> ApiResult<(Timestamp, Timestamp)> {
    let parse = |text: &Option<String>, end: bool, default: Timestamp| match text {
        None => Ok(default),
        Some(t) => parse_bound(t, end)
            .ok_or_else(|| ApiError::bad_request("invalid_date", format!("{t:?} is not a date or RFC 3339 timestamp"))),
    };
    let from = parse(&q.from, false, 0)?;
    let to = parse(&q.to, true, now + CLOCK_SKEW_SECONDS)?;
    if from > to {
        return Err(ApiError::bad_request("inverted_range", "from is after to"));
    }
    Ok((from, to))
}

fn load_trips(st: &AppState, user: &str, q: &RangeQuery) -> ApiResult<(Vec<OwnedTrip>, usize, Timestamp, Timestamp)> {
    let (from, to) = resolve_range(q, st.clock.now())?;
    if let Some(idx) = q.mac_index {
        let owned = st.accounts.account(user).map_or(0, |a| a.pseudonyms.len());
        if idx >= owned {
            return Err(ApiError::bad_request("unknown_mac_index", format!("mac_index {idx} out of range (0..{owned})")));
        }
    }
    let (trips, singletons) = st
        .user_trips(user, q.mac_index, from, to)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "account no longer exists"))?;
    Ok((trips, singletons, from, to))
}

async fn dashboard(
    State(st): State<Shared>,
    AuthUser(user): AuthUser,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> ApiResult<Json<DashboardSummary>> {
    let Query(q) = q?;
    let (trips, singletons, from, to) = load_trips(&st, &user, &q)?;
    let plain: Vec<_> = trips.into_iter().map(|t| t.trip).collect();
    Ok(Json(dashboard_summary(&plain, singletons, (from, to))))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TripRow {
    pub id: String,
    pub mac_index: usize,
    #[serde(flatten)]
    pub row: PersonalTripRow,
    pub mode: Option<Mode>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TripList {
    pub from: Timestamp,
    pub to: Timestamp,
    pub trips: Vec<TripRow>,
}

fn rows(st: &AppState, trips: &[OwnedTrip]) -> Vec<TripRow> {
    let traffic = st.traffic();
    let plain: Vec<_> = trips.iter().map(|t| t.trip.clone()).collect();
    personal_trips(&plain, &st.net, &traffic.snapshot)
        .into_iter()
        .zip(trips)
        .map(|(row, t)| TripRow { id: t.id(), mac_index: t.mac_index, row, mode: t.trip.mode })
        .collect()
}

async fn trips(
    State(st): State<Shared>,
    AuthUser(user): AuthUser,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> ApiResult<Json<TripList>> {
    let Query(q) = q?;
    let (trips, _, from, to) = load_trips(&st, &user, &q)?;
    Ok(Json(TripList { from, to, trips: rows(&st, &trips) }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TripDetail {
    #[serde(flatten)]
    pub summary: TripRow,
    pub end: Timestamp,
    pub unroutable: bool,
    pub checkins: Vec<Checkin>,
}

async fn trip_detail(State(st): State<Shared>, AuthUser(user): AuthUser, Path(id): Path<String>) -> ApiResult<Json<TripDetail>> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "trip_not_found", format!("no trip {id}"));
    let (idx, start) = id.split_once('-').ok_or_else(not_found)?;
    let idx: usize = idx.parse().map_err(|_| not_found())?;
    let start: Timestamp = start.parse().map_err(|_| not_found())?;
    let owned = st.accounts.account(&user).map_or(0, |a| a.pseudonyms.len());
    if idx >= owned {
        return Err(not_found());
    }
    let q = RangeQuery { from: None, to: None, mac_index: Some(idx) };
    let (trips, ..) = load_trips(&st, &user, &q)?;
    let found = trips.into_iter().find(|t| t.trip.start == start).ok_or_else(not_found)?;
    let summary = rows(&st, std::slice::from_ref(&found)).pop().ok_or_else(not_found)?;
    Ok(Json(TripDetail {
        summary,
        end: found.trip.end,
        unroutable: found.trip.unroutable,
        checkins: found.trip.checkins,
    }))
}

#[derive(Debug, Deserialize)]
pub struct TrafficQuery {
    pub at: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrafficResponse {
    pub generated_at: Timestamp,
    pub window_seconds: i64,
    pub rejected_samples: usize,
    /// Set when a specific instant was requested; otherwise each link's latest window is shown.
    pub at: Option<Timestamp>,
    pub states: Vec<LinkState>,
}

async fn traffic(State(st): State<Shared>, q: Result<Query<TrafficQuery>, QueryRejection>) -> ApiResult<Json<TrafficResponse>> {
    let Query(q) = q?;
    let t = st.traffic();
    let at = match &q.at {
        None => None,
        Some(text) => Some(
            text.parse::<Timestamp>()
                .ok()
                .or_else(|| parse_bound(text, false))
                .ok_or_else(|| ApiError::bad_request("invalid_date", format!("{text:?} is not a timestamp")))?,
        ),
    };
    let states = match at {
        None => t.snapshot.latest().into_iter().cloned().collect(),
        Some(at) => st
            .net
            .links()
            .iter()
            .filter_map(|l| t.snapshot.link_state(&l.key(), at).cloned())
            .collect(),
    };
    Ok(Json(TrafficResponse {
        generated_at: t.snapshot.generated_at,
        window_seconds: WINDOW_SECONDS,
        rejected_samples: t.snapshot.rejected_samples,
        at,
        states,
    }))
}

#[derive(Debug, Deserialize)]
pub struct RouteBody {
    pub origin: DetectorId,
    pub destination: DetectorId,
    pub depart: Option<Timestamp>,
    #[serde(default)]
    pub mode: TravelMode,
}

impl RouteBody {
    fn request(self, now: Timestamp) -> RouteRequest {
        RouteRequest { origin: self.origin, destination: self.destination, depart: self.depart.unwrap_or(now), mode: self.mode }
    }
}

fn routing_error(e: RoutingError) -> ApiError {
    match e {
        RoutingError::UnknownDetector(_) => ApiError::bad_request("unknown_detector", e.to_string()),
    }
}

async fn route_handler(State(st): State<Shared>, body: Result<Json<RouteBody>, JsonRejection>) -> ApiResult<Json<RouteResult>> {
    let Json(body) = body?;
    let req = body.request(st.clock.now());
    let t = st.traffic();
    let ctx = CostContext { realtime: &t.snapshot, historic: &t.historic };
    route(&req, &st.net, &ctx)
        .map_err(routing_error)?
        .map(Json)
        .ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "no_route", format!("no route from {} to {}", req.origin, req.destination))
        })
}

async fn route_compare(State(st): State<Shared>, body: Result<Json<RouteBody>, JsonRejection>) -> ApiResult<Json<RouteComparison>> {
    let Json(body) = body?;
    let req = body.request(st.clock.now());
    let t = st.traffic();
    let ctx = CostContext { realtime: &t.snapshot, historic: &t.historic };
    Ok(Json(compare_routes(&req, &st.net, &ctx).map_err(routing_error)?))
}

#[derive(Debug, Deserialize)]
pub struct AlertQuery {
    pub lat: f64,
    pub lon: f64,
    /// m/s.
    pub speed: f64,
    pub bearing: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AlertResponse {
    pub evaluated_at: Timestamp,
    pub alerts: Vec<Alert>,
    pub stale_suppressed: u64,
}

async fn alerts(State(st): State<Shared>, q: Result<Query<AlertQuery>, QueryRejection>) -> ApiResult<Json<AlertResponse>> {
    let Query(q) = q?;
    let position = GeoPoint::new(q.lat, q.lon).map_err(|e| ApiError::bad_request("invalid_position", e.to_string()))?;
    if !(q.speed.is_finite() && q.speed >= 0.0) {
        return Err(ApiError::bad_request("invalid_speed", "speed must be a non-negative number of m/s"));
    }
    if !q.bearing.is_finite() {
        return Err(ApiError::bad_request("invalid_bearing", "bearing must be a number of degrees"));
    }
    let vehicle = VehicleApproach { position, speed: q.speed, bearing: q.bearing.rem_euclid(360.0) };
    let now = st.clock.now();
    let alerts = st.alerts.evaluate(&vehicle, &st.intersections, now);
    Ok(Json(AlertResponse { evaluated_at: now, alerts, stale_suppressed: st.alerts.stale_suppressed() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedResponse<T> {
    pub served_at: Timestamp,
    pub fetched_at: Option<Timestamp>,
    pub records: Vec<T>,
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

fn feed_response<T: Clone>(f: &FeedState<T>, now: Timestamp, mut restale: impl FnMut(&mut T)) -> FeedResponse<T> {
    let mut records = f.records.clone();
    records.iter_mut().for_each(&mut restale);
    FeedResponse {
        served_at: now,
        fetched_at: f.fetched_at,
        records,
        diagnostics: f.diagnostics.clone(),
        error: f.error.clone(),
    }
}

async fn parking(State(st): State<Shared>) -> Json<FeedResponse<safemobility_core::feeds::ParkingStatus>> {
    let now = st.clock.now();
    let feeds = st.feeds();
    Json(feed_response(&feeds.parking, now, |r| r.stale = is_stale(r.observed_at, now, PARKING_TTL_SECONDS)))
}

async fn air_quality(State(st): State<Shared>) -> Json<FeedResponse<safemobility_core::feeds::AirQualityReading>> {
    let now = st.clock.now();
    let feeds = st.feeds();
    Json(feed_response(&feeds.air_quality, now, |r| r.stale = is_stale(r.observed_at, now, AIR_QUALITY_TTL_SECONDS)))
}

async fn admin_replay(State(st): State<Shared>, headers: HeaderMap, body: String) -> ApiResult<Json<BatchReport>> {
    let Some(expected) = st.admin_token.as_deref() else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "admin_disabled", "no admin token configured"));
    };
    match bearer(&headers) {
        Some(t) if safemobility_core::identity::constant_time_eq(t.as_bytes(), expected.as_bytes()) => {}
        _ => return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "admin token required")),
    }
    let report = tokio::task::spawn_blocking(move || st.replay_csv(&body))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok(Json(report))
}
