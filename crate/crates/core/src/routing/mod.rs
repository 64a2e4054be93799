//! Fast and quiet route geometries per OD pair, from an HTTP routing service or
//! a deterministic offline stub, with an on-disk cache in front of either.

mod cache;
mod service;
mod stub;

pub use cache::{CachedBackend, RouteCache};
pub use service::{ServiceBackend, ServiceConfig};
pub use stub::{LinearElevation, StubBackend};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{euclidean_km, haversine_km, LonLat};

/// Route length over straight-line length above which a route is flagged.
pub const CROW_CIRCUITY: f64 = 1.2;

/// Endpoint tolerance, degrees.
const ENDPOINT_TOL_DEG: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("network error (retriable): {0}")]
    Network(String),
    #[error("malformed route response: {reason}; payload starts `{excerpt}`")]
    Parse { reason: String, excerpt: String },
    #[error("routing service quota exceeded")]
    Throttled,
    #[error("origin and destination coincide")]
    IdenticalEndpoints,
    #[error("invalid route: {0}")]
    Invalid(String),
    #[error("route cache: {0}")]
    Cache(String),
    #[error("elevations: {0}")]
    Elevation(String),
}

impl RoutingError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, RoutingError::Network(_) | RoutingError::Throttled)
    }

    pub(crate) fn parse(reason: impl Into<String>, payload: &str) -> Self {
        RoutingError::Parse {
            reason: reason.into(),
            excerpt: payload.chars().take(120).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Fast,
    Quiet,
}

impl Profile {
    pub const BOTH: [Profile; 2] = [Profile::Fast, Profile::Quiet];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Fast => "fast",
            Profile::Quiet => "quiet",
        }
    }

    /// Value of the service's `plan` query parameter.
    pub fn plan(self) -> &'static str {
        match self {
            Profile::Fast => "fastest",
            Profile::Quiet => "quietest",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Profile::Fast),
            "quiet" => Ok(Profile::Quiet),
            other => Err(format!("unknown route profile `{other}`")),
        }
    }
}

/// Wire and cache format of a single route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDocument {
    pub coordinates: Vec<[f64; 2]>,
    pub distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevations_m: Option<Vec<f64>>,
}

impl RouteDocument {
    /// Parses a response body, keeping an excerpt of it in any error.
    pub fn from_json(body: &str) -> Result<Self, RoutingError> {
        let doc: Self = serde_json::from_str(body).map_err(|e| RoutingError::parse(e.to_string(), body))?;
        if doc.coordinates.len() < 2 {
            return Err(RoutingError::parse("fewer than two coordinates", body));
        }
        if !doc.distance_m.is_finite() || doc.distance_m < 0.0 {
            return Err(RoutingError::parse("distance_m is not a non-negative number", body));
        }
        if let Some(e) = &doc.elevations_m {
            if e.len() != doc.coordinates.len() {
                return Err(RoutingError::parse("elevations_m and coordinates differ in length", body));
            }
        }
        Ok(doc)
    }
}

/// One routing job: an OD pair between zone centroids, under one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub origin: String,
    pub dest: String,
    pub from: LonLat,
    pub to: LonLat,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub origin: String,
    pub dest: String,
    pub profile: Profile,
    pub coords: Vec<LonLat>,
    pub distance_km: f64,
    pub gradient_pct: f64,
    pub elevations_m: Option<Vec<f64>>,
}

impl Route {
    /// Validates a document against its request. If the document does not start
    /// or end at the centroids, straight connectors to them are added and their
    /// length included in the distance.
    pub fn from_document(req: &RouteRequest, doc: &RouteDocument) -> Result<Route, RoutingError> {
        if doc.coordinates.len() < 2 {
            return Err(RoutingError::Invalid("fewer than two coordinates".into()));
        }
        let mut coords: Vec<LonLat> = Vec::with_capacity(doc.coordinates.len() + 2);
        let mut elevations = doc.elevations_m.clone();
        if let Some(e) = &elevations {
            if e.len() != doc.coordinates.len() {
                return Err(RoutingError::Elevation("length differs from coordinates".into()));
            }
        }
        let mut distance_m = doc.distance_m;
        let first = LonLat::from(doc.coordinates[0]);
        let last = LonLat::from(*doc.coordinates.last().expect("len ≥ 2"));
        for p in doc.coordinates.iter().map(|&c| LonLat::from(c)) {
            p.validate().map_err(|e| RoutingError::Invalid(e.to_string()))?;
        }
        if !near(first, req.from) {
            coords.push(req.from);
            distance_m += haversine_km(req.from, first) * 1000.0;
            if let Some(e) = elevations.as_mut() {
                e.insert(0, e[0]);
            }
        }
        coords.extend(doc.coordinates.iter().map(|&c| LonLat::from(c)));
        if !near(last, req.to) {
            coords.push(req.to);
            distance_m += haversine_km(last, req.to) * 1000.0;
            if let Some(e) = elevations.as_mut() {
                e.push(*e.last().expect("non-empty"));
            }
        }
        let distance_km = distance_m / 1000.0;
        let euclid = euclidean_km(req.from, req.to).map_err(|e| RoutingError::Invalid(e.to_string()))?;
        if distance_km < euclid - 1e-6 {
            return Err(RoutingError::Invalid(format!(
                "route distance {distance_km} km is shorter than the straight line {euclid} km"
            )));
        }
        let gradient_pct = match &elevations {
            Some(e) if distance_km > 0.0 => mean_gradient(&coords, e, distance_km)?,
            _ => 0.0,
        };
        Ok(Route {
            origin: req.origin.clone(),
            dest: req.dest.clone(),
            profile: req.profile,
            coords,
            distance_km,
            gradient_pct,
            elevations_m: elevations,
        })
    }

    pub fn euclid_km(&self) -> f64 {
        haversine_km(self.coords[0], *self.coords.last().expect("len ≥ 2"))
    }

    pub fn circuity(&self) -> Result<f64, RoutingError> {
        circuity(self.distance_km, self.euclid_km())
    }

    /// True when the route is more circuitous than the CROW benchmark.
    pub fn exceeds_crow(&self) -> bool {
        self.circuity().is_ok_and(|c| c > CROW_CIRCUITY)
    }
}

fn near(a: LonLat, b: LonLat) -> bool {
    (a.lon - b.lon).abs() <= ENDPOINT_TOL_DEG && (a.lat - b.lat).abs() <= ENDPOINT_TOL_DEG
}

/// Mean gradient in percent: total absolute climb and descent over distance.
pub fn mean_gradient(coords: &[LonLat], elevations_m: &[f64], distance_km: f64) -> Result<f64, RoutingError> {
    if coords.len() != elevations_m.len() {
        return Err(RoutingError::Elevation(format!(
            "{} elevations for {} coordinates",
            elevations_m.len(),
            coords.len()
        )));
    }
    if !(distance_km > 0.0) {
        return Err(RoutingError::Elevation(format!("distance {distance_km} km")));
    }
    let change: f64 = elevations_m.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(100.0 * change / (distance_km * 1000.0))
}

/// Route length over straight-line length. Evaluated in metres, where
/// decimal kilometre inputs are typically exact.
pub fn circuity(route_km: f64, euclid_km: f64) -> Result<f64, RoutingError> {
    if !(euclid_km > 0.0) {
        return Err(RoutingError::Invalid(format!("straight-line distance {euclid_km} km")));
    }
    Ok((route_km * 1000.0) / (euclid_km * 1000.0))
}

/// Source of route documents.
pub trait RouteBackend: Send + Sync {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError>;

    fn route(&self, req: &RouteRequest) -> Result<Route, RoutingError> {
        Route::from_document(req, &self.fetch(req)?)
    }
}

impl<B: RouteBackend + ?Sized> RouteBackend for &B {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError> {
        (**self).fetch(req)
    }
}

impl<B: RouteBackend + ?Sized> RouteBackend for Box<B> {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError> {
        (**self).fetch(req)
    }
}

pub const DEFAULT_PARALLELISM: usize = 4;

/// Routes every request with at most `parallelism` in flight. Results are in
/// request order, one per request.
pub fn route_batch<B: RouteBackend>(
    backend: &B,
    requests: &[RouteRequest],
    parallelism: usize,
) -> Vec<Result<Route, RoutingError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build();
    match pool {
        Ok(pool) => pool.install(|| requests.par_iter().map(|r| backend.route(r)).collect()),
        Err(_) => requests.iter().map(|r| backend.route(r)).collect(),
    }
}
