use serde::{Deserialize, Serialize};

use super::{Profile, RouteBackend, RouteDocument, RouteRequest, RoutingError};
use crate::geo::{polyline_km, LonLat};

/// Terrain height as a plane over lon/lat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearElevation {
    pub base_m: f64,
    pub m_per_deg_lon: f64,
    pub m_per_deg_lat: f64,
}

impl LinearElevation {
    pub fn at(&self, p: LonLat) -> f64 {
        self.base_m + self.m_per_deg_lon * p.lon + self.m_per_deg_lat * p.lat
    }
}

/// Offline router producing axis-aligned paths.
///
/// Fast routes go east-west along the origin's latitude, then north-south. Quiet
/// routes overshoot the destination longitude by a quarter of the east-west
/// span and come back, so they are always at least as long. Paths are built
/// from the lexicographically smaller endpoint and reversed when needed, so
/// swapping endpoints mirrors the path exactly.
///
/// With `grid_step_deg` set, every leg gains vertices at multiples of the step,
/// so routes running along the same line share vertices.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StubBackend {
    pub grid_step_deg: Option<f64>,
    pub elevation: Option<LinearElevation>,
}

impl StubBackend {
    pub fn path(&self, from: LonLat, to: LonLat, profile: Profile) -> Result<Vec<LonLat>, RoutingError> {
        if from == to {
            return Err(RoutingError::IdenticalEndpoints);
        }
        let swapped = (to.lon, to.lat) < (from.lon, from.lat);
        let (a, b) = if swapped { (to, from) } else { (from, to) };
        let corners = match profile {
            Profile::Fast => vec![a, LonLat::new(b.lon, a.lat), b],
            Profile::Quiet => {
                let dlon = b.lon - a.lon;
                let overshoot = if dlon != 0.0 { 0.25 * dlon } else { 0.25 * (b.lat - a.lat).abs() };
                let x = b.lon + overshoot;
                vec![a, LonLat::new(x, a.lat), LonLat::new(x, b.lat), b]
            }
        };
        let mut path: Vec<LonLat> = Vec::new();
        for w in corners.windows(2) {
            self.push_leg(&mut path, w[0], w[1]);
        }
        if swapped {
            path.reverse();
        }
        Ok(path)
    }

    fn push_leg(&self, path: &mut Vec<LonLat>, p: LonLat, q: LonLat) {
        if path.last() != Some(&p) {
            path.push(p);
        }
        if p == q {
            return;
        }
        if let Some(step) = self.grid_step_deg.filter(|s| *s > 0.0) {
            let horizontal = p.lat == q.lat;
            let (s, e) = if horizontal { (p.lon, q.lon) } else { (p.lat, q.lat) };
            let (lo, hi) = (s.min(e), s.max(e));
            let mut ticks: Vec<f64> = ((lo / step).floor() as i64 + 1..=(hi / step).ceil() as i64 - 1)
                .map(|k| (k as f64 * step * 1e9).round() / 1e9)
                .filter(|&t| t > lo + 1e-9 && t < hi - 1e-9)
                .collect();
            if s > e {
                ticks.reverse();
            }
            for t in ticks {
                path.push(if horizontal { LonLat::new(t, p.lat) } else { LonLat::new(p.lon, t) });
            }
        }
        path.push(q);
    }
}

impl RouteBackend for StubBackend {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError> {
        let path = self.path(req.from, req.to, req.profile)?;
        Ok(RouteDocument {
            distance_m: polyline_km(&path) * 1000.0,
            elevations_m: self.elevation.map(|e| path.iter().map(|&p| e.at(p)).collect()),
            coordinates: path.iter().map(|p| p.to_array()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_km;

    fn req(from: LonLat, to: LonLat, profile: Profile) -> RouteRequest {
        RouteRequest { origin: "A".into(), dest: "B".into(), from, to, profile }
    }

    #[test]
    fn fast_path_is_two_legs() {
        let (a, b) = (LonLat::new(0.0, 0.0), LonLat::new(0.01, 0.01));
        let route = StubBackend::default().route(&req(a, b, Profile::Fast)).unwrap();
        assert_eq!(route.coords, vec![a, LonLat::new(0.01, 0.0), b]);
        let legs = haversine_km(a, LonLat::new(0.01, 0.0)) + haversine_km(LonLat::new(0.01, 0.0), b);
        assert!((route.distance_km - legs).abs() < 1e-12);
        assert_eq!(route.gradient_pct, 0.0);
    }

    #[test]
    fn quiet_is_never_shorter_and_paths_mirror() {
        let stub = StubBackend { grid_step_deg: Some(0.003), elevation: None };
        let (a, b) = (LonLat::new(-1.55, 53.80), LonLat::new(-1.57, 53.79));
        let fast = stub.route(&req(a, b, Profile::Fast)).unwrap();
        let quiet = stub.route(&req(a, b, Profile::Quiet)).unwrap();
        assert!(quiet.distance_km >= fast.distance_km);
        let back = stub.route(&req(b, a, Profile::Fast)).unwrap();
        assert!((back.distance_km - fast.distance_km).abs() < 1e-9);
        let mut rev = back.coords.clone();
        rev.reverse();
        assert_eq!(rev, fast.coords);
    }

    #[test]
    fn identical_endpoints_fail() {
        let p = LonLat::new(0.5, 0.5);
        assert!(matches!(
            StubBackend::default().fetch(&req(p, p, Profile::Fast)),
            Err(RoutingError::IdenticalEndpoints)
        ));
    }

    #[test]
    fn deterministic_documents() {
        let stub = StubBackend {
            grid_step_deg: Some(0.005),
            elevation: Some(LinearElevation { base_m: 50.0, m_per_deg_lon: 800.0, m_per_deg_lat: 1500.0 }),
        };
        let r = req(LonLat::new(-1.6, 53.78), LonLat::new(-1.55, 53.81), Profile::Quiet);
        let a = serde_json::to_string(&stub.fetch(&r).unwrap()).unwrap();
        let b = serde_json::to_string(&stub.fetch(&r).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(stub.route(&r).unwrap().gradient_pct > 0.0);
    }
}
