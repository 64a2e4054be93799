use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{RouteBackend, RouteDocument, RouteRequest, RoutingError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub base_url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Upper bound on requests per second across all threads.
    #[serde(default = "default_rate")]
    pub requests_per_second: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_rate() -> f64 {
    10.0
}

fn default_timeout() -> f64 {
    30.0
}

/// Client for a routing service answering
/// `GET <base_url>?plan=fastest|quietest&points=lon,lat|lon,lat[&key=...]`
/// with a [`RouteDocument`] body.
pub struct ServiceBackend {
    config: ServiceConfig,
    agent: ureq::Agent,
    next_slot: Mutex<Instant>,
}

impl ServiceBackend {
    pub fn new(config: ServiceConfig) -> Result<Self, RoutingError> {
        if !(config.requests_per_second > 0.0) {
            return Err(RoutingError::Invalid(format!(
                "requests_per_second must be positive, got {}",
                config.requests_per_second
            )));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    /// Blocks until this caller's slot under the global rate limit.
    fn wait_turn(&self) {
        let interval = Duration::from_secs_f64(1.0 / self.config.requests_per_second);
        let slot = {
            let mut next = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

impl RouteBackend for ServiceBackend {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError> {
        self.wait_turn();
        let points = format!("{},{}|{},{}", req.from.lon, req.from.lat, req.to.lon, req.to.lat);
        let mut call = self
            .agent
            .get(&self.config.base_url)
            .query("plan", req.profile.plan())
            .query("points", &points);
        if let Some(key) = &self.config.api_key {
            call = call.query("key", key);
        }
        let mut response = call.call().map_err(|e| RoutingError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 {
            return Err(RoutingError::Throttled);
        }
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| RoutingError::Network(e.to_string()))?;
        match status {
            200..=299 => RouteDocument::from_json(&body),
            500..=599 => Err(RoutingError::Network(format!("HTTP {status}"))),
            _ => Err(RoutingError::parse(format!("HTTP {status}"), &body)),
        }
    }
}
