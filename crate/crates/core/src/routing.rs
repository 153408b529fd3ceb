//! Time-dependent pre-trip routing.
//!
//! Car link costs fall back from a trusted realtime window estimate, to the
//! historic profile for the same day class and time of day, to free flow.
//! Each link is costed at the moment the route reaches its tail; within a
//! window the estimate is constant, and the search is exact whenever link
//! costs do not let a later departure arrive earlier (FIFO).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{HistoricProfiles, LinkStateProvider};
use crate::network::{DetectorId, DetectorNetwork, Link, LinkKey};
use crate::time::Timestamp;

/// Realtime estimates backed by fewer samples than this are ignored.
pub const REALTIME_MIN_SAMPLES: usize = 5;
pub const WALK_SPEED_KMH: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    #[default]
    Car,
    Walk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSource {
    Realtime,
    Historic,
    Freeflow,
}

/// Which cost sources a route may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostTier {
    /// realtime → historic → free flow
    #[default]
    Chain,
    /// realtime → free flow
    Realtime,
    /// historic → free flow
    Historic,
    Freeflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub origin: DetectorId,
    pub destination: DetectorId,
    pub depart: Timestamp,
    #[serde(default)]
    pub mode: TravelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCost {
    pub link: LinkKey,
    pub cost_seconds: f64,
    pub cost_source: CostSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub path: Vec<LinkKey>,
    pub total_time: f64,
    pub per_link: Vec<LinkCost>,
    pub depart: Timestamp,
    pub arrive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteComparison {
    pub realtime: Option<RouteResult>,
    pub historic: Option<RouteResult>,
    pub freeflow: Option<RouteResult>,
}

/// Traffic inputs for costing links.
#[derive(Clone, Copy)]
pub struct CostContext<'a> {
    pub realtime: &'a dyn LinkStateProvider,
    pub historic: &'a HistoricProfiles,
}

fn lookup_time(at: f64) -> Timestamp {
    at.floor() as Timestamp
}

fn realtime_cost(link: &Link, at: f64, ctx: &CostContext<'_>) -> Option<f64> {
    ctx.realtime
        .link_state(&link.key(), lookup_time(at))
        .filter(|s| s.sample_count >= REALTIME_MIN_SAMPLES && s.estimate > 0.0)
        .map(|s| s.estimate)
}

fn historic_cost(link: &Link, at: f64, ctx: &CostContext<'_>) -> Option<f64> {
    ctx.historic
        .lookup(&link.key(), lookup_time(at))
        .filter(|p| p.estimate > 0.0)
        .map(|p| p.estimate)
}

/// Seconds to traverse `link` entering at `at`, and where the figure came from.
pub fn link_cost_tiered(
    link: &Link,
    at: f64,
    ctx: &CostContext<'_>,
    mode: TravelMode,
    tier: CostTier,
) -> (f64, CostSource) {
    if mode == TravelMode::Walk {
        return (link.length / (WALK_SPEED_KMH / 3.6), CostSource::Freeflow);
    }
    let realtime = matches!(tier, CostTier::Chain | CostTier::Realtime)
        .then(|| realtime_cost(link, at, ctx))
        .flatten();
    if let Some(c) = realtime {
        return (c, CostSource::Realtime);
    }
    let historic = matches!(tier, CostTier::Chain | CostTier::Historic)
        .then(|| historic_cost(link, at, ctx))
        .flatten();
    if let Some(c) = historic {
        return (c, CostSource::Historic);
    }
    (link.free_flow_time(), CostSource::Freeflow)
}

pub fn link_cost(link: &Link, depart: Timestamp, ctx: &CostContext<'_>, mode: TravelMode) -> (f64, CostSource) {
    link_cost_tiered(link, depart as f64, ctx, mode, CostTier::Chain)
}

/// Earliest-arrival route for `req` using the full fallback chain.
pub fn route(
    req: &RouteRequest,
    net: &DetectorNetwork,
    ctx: &CostContext<'_>,
) -> Result<Option<RouteResult>, RoutingError> {
    route_tiered(req, net, ctx, CostTier::Chain)
}

pub fn route_tiered(
    req: &RouteRequest,
    net: &DetectorNetwork,
    ctx: &CostContext<'_>,
    tier: CostTier,
) -> Result<Option<RouteResult>, RoutingError> {
    let src = net
        .node_index(req.origin.as_str())
        .ok_or_else(|| RoutingError::UnknownDetector(req.origin.to_string()))?;
    let dst = net
        .node_index(req.destination.as_str())
        .ok_or_else(|| RoutingError::UnknownDetector(req.destination.to_string()))?;
    let depart = req.depart as f64;
    let found = net.label_setting(src, dst, |link, elapsed| {
        link_cost_tiered(link, depart + elapsed, ctx, req.mode, tier).0
    });
    let Some((_, _, link_ids)) = found else {
        return Ok(None);
    };

    let mut elapsed = 0.0;
    let mut per_link = Vec::with_capacity(link_ids.len());
    for li in link_ids {
        let link = &net.links()[li];
        let (cost, source) = link_cost_tiered(link, depart + elapsed, ctx, req.mode, tier);
        elapsed += cost;
        per_link.push(LinkCost {
            link: link.key(),
            cost_seconds: cost,
            cost_source: source,
        });
    }
    Ok(Some(RouteResult {
        path: per_link.iter().map(|c| c.link.clone()).collect(),
        total_time: elapsed,
        per_link,
        depart: req.depart,
        arrive: depart + elapsed,
    }))
}

/// The same request routed with each cost tier pinned.
pub fn compare_routes(
    req: &RouteRequest,
    net: &DetectorNetwork,
    ctx: &CostContext<'_>,
) -> Result<RouteComparison, RoutingError> {
    Ok(RouteComparison {
        realtime: route_tiered(req, net, ctx, CostTier::Realtime)?,
        historic: route_tiered(req, net, ctx, CostTier::Historic)?,
        freeflow: route_tiered(req, net, ctx, CostTier::Freeflow)?,
    })
}

/// Cost of following `path` from `depart` under `tier`; used to price a fixed route.
pub fn path_time(
    path: &[LinkKey],
    depart: Timestamp,
    net: &DetectorNetwork,
    ctx: &CostContext<'_>,
    mode: TravelMode,
    tier: CostTier,
) -> Option<f64> {
    let mut elapsed = 0.0;
    for key in path {
        let link = net.link_by_key(key)?;
        elapsed += link_cost_tiered(link, depart as f64 + elapsed, ctx, mode, tier).0;
    }
    Some(elapsed)
}
