//! WGS84 point type and great-circle helpers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    OutOfRange { lon: f64, lat: f64 },
}

/// A longitude/latitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }

    pub fn validate(self) -> Result<Self, GeoError> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(GeoError::OutOfRange {
                lon: self.lon,
                lat: self.lat,
            })
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.lon, self.lat]
    }
}

impl From<[f64; 2]> for LonLat {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

/// Great-circle (haversine) distance in km.
pub fn euclidean_km(a: LonLat, b: LonLat) -> Result<f64, GeoError> {
    let a = a.validate()?;
    let b = b.validate()?;
    Ok(haversine_km(a, b))
}

/// Haversine distance without range checks. Symmetric bit-for-bit: only absolute
/// differences and commutative products enter the formula.
pub(crate) fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).abs().to_radians();
    let dlambda = (b.lon - a.lon).abs().to_radians();
    let s1 = (dphi / 2.0).sin();
    let s2 = (dlambda / 2.0).sin();
    let h = s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2;
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Sum of great-circle leg lengths along a polyline, km.
pub fn polyline_km(coords: &[LonLat]) -> f64 {
    coords.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
}

/// Spherical area of a closed ring (first point may or may not be repeated), km².
fn ring_area_km2(ring: &[LonLat]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let n = ring.len();
    let mut total = 0.0;
    for i in 0..n {
        let p1 = ring[i];
        let p2 = ring[(i + 1) % n];
        total += (p2.lon - p1.lon).to_radians()
            * (2.0 + p1.lat.to_radians().sin() + p2.lat.to_radians().sin());
    }
    (total * EARTH_RADIUS_KM * EARTH_RADIUS_KM / 2.0).abs()
}

/// Area of a polygon given as an exterior ring followed by holes, km².
pub fn polygon_area_km2(rings: &[Vec<LonLat>]) -> f64 {
    let mut rings = rings.iter();
    let Some(exterior) = rings.next() else {
        return 0.0;
    };
    let holes: f64 = rings.map(|r| ring_area_km2(r)).sum();
    (ring_area_km2(exterior) - holes).max(0.0)
}

/// Axis-aligned bounding box `[min_lon, min_lat, max_lon, max_lat]`.
pub fn bbox<'a>(points: impl IntoIterator<Item = &'a LonLat>) -> Option<[f64; 4]> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let mut b = [first.lon, first.lat, first.lon, first.lat];
    for p in it {
        b[0] = b[0].min(p.lon);
        b[1] = b[1].min(p.lat);
        b[2] = b[2].max(p.lon);
        b[3] = b[3].max(p.lat);
    }
    Some(b)
}
