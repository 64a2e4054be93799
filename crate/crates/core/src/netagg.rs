//! Route network: fast routes broken into atomic segments, with the cycling
//! volumes of every route crossing a segment summed per scenario.
//!
//! Segments are keyed by their endpoints quantized to [`QUANTUM_DEG`]. Routes
//! overlap only where they share vertices, which routers produce for shared
//! streets; no geometric overlay is attempted.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::geo::{haversine_km, LonLat};
use crate::geojson::{put_f64, Feature, FeatureCollection, Geometry, Properties};
use crate::scenarios::Scenario;

pub const QUANTUM_DEG: f64 = 1e-6;

/// Per-scenario cycling volume.
pub type Volumes = BTreeMap<Scenario, f64>;

/// A position on the quantization grid, in units of [`QUANTUM_DEG`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub lon: i64,
    pub lat: i64,
}

impl GridPoint {
    pub fn quantize(p: LonLat) -> Self {
        Self {
            lon: (p.lon / QUANTUM_DEG).round() as i64,
            lat: (p.lat / QUANTUM_DEG).round() as i64,
        }
    }

    pub fn to_lonlat(self) -> LonLat {
        LonLat::new(self.lon as f64 / 1e6, self.lat as f64 / 1e6)
    }
}

/// Undirected segment with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub a: GridPoint,
    pub b: GridPoint,
}

impl SegmentKey {
    /// None for a zero-length segment.
    pub fn new(p: GridPoint, q: GridPoint) -> Option<Self> {
        match p.cmp(&q) {
            std::cmp::Ordering::Less => Some(Self { a: p, b: q }),
            std::cmp::Ordering::Greater => Some(Self { a: q, b: p }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn length_km(&self) -> f64 {
        haversine_km(self.a.to_lonlat(), self.b.to_lonlat())
    }
}

/// One key per consecutive vertex pair, skipping pairs that quantize to one point.
pub fn atomize(coords: &[LonLat]) -> Vec<SegmentKey> {
    let q: Vec<GridPoint> = coords.iter().map(|&p| GridPoint::quantize(p)).collect();
    q.windows(2).filter_map(|w| SegmentKey::new(w[0], w[1])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicSegment {
    pub key: SegmentKey,
    pub values: Volumes,
}

/// Route geometry plus the volume it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteFlow {
    pub coords: Vec<LonLat>,
    pub values: Volumes,
}

/// Sums route volumes onto every segment they traverse; a route crossing a
/// segment twice contributes twice. Contributions are added in ascending
/// order, so the result does not depend on route order. Output is sorted by key.
pub fn overline(routes: &[RouteFlow]) -> Vec<AtomicSegment> {
    let keyed: Vec<Vec<SegmentKey>> = routes.par_iter().map(|r| atomize(&r.coords)).collect();
    let mut crossings: BTreeMap<SegmentKey, Vec<usize>> = BTreeMap::new();
    for (i, keys) in keyed.iter().enumerate() {
        for &k in keys {
            crossings.entry(k).or_default().push(i);
        }
    }
    crossings
        .into_iter()
        .map(|(key, idx)| {
            let mut parts: BTreeMap<Scenario, Vec<f64>> = BTreeMap::new();
            for i in idx {
                for (&s, &v) in &routes[i].values {
                    parts.entry(s).or_default().push(v);
                }
            }
            let values = parts
                .into_iter()
                .map(|(s, mut vs)| {
                    vs.sort_by(f64::total_cmp);
                    (s, vs.into_iter().sum())
                })
                .collect();
            AtomicSegment { key, values }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSegment {
    pub coords: Vec<LonLat>,
    pub values: Volumes,
}

impl NetworkSegment {
    pub fn length_km(&self) -> f64 {
        self.coords.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
    }
}

/// Joins chains of segments meeting at degree-2 vertices where both sides carry
/// equal volumes. Output order follows the smallest segment key of each chain.
pub fn merge_contiguous(segments: &[AtomicSegment]) -> Vec<NetworkSegment> {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&i, &j| segments[i].key.cmp(&segments[j].key));
    let mut at: HashMap<GridPoint, Vec<usize>> = HashMap::new();
    for (i, s) in segments.iter().enumerate() {
        at.entry(s.key.a).or_default().push(i);
        at.entry(s.key.b).or_default().push(i);
    }
    // The segment continuing a chain through `node` from `from`, if merging is allowed there.
    let next = |node: GridPoint, from: usize| -> Option<usize> {
        match at[&node].as_slice() {
            [x, y] if x != y => {
                let other = if *x == from { *y } else { *x };
                (segments[other].values == segments[from].values).then_some(other)
            }
            _ => None,
        }
    };
    let far = |seg: usize, node: GridPoint| {
        let k = segments[seg].key;
        if k.a == node {
            k.b
        } else {
            k.a
        }
    };

    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    for start in order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let key = segments[start].key;
        let mut forward = vec![key.a, key.b];
        let (mut seg, mut node) = (start, key.b);
        while let Some(n) = next(node, seg).filter(|&n| !used[n]) {
            used[n] = true;
            node = far(n, node);
            forward.push(node);
            seg = n;
        }
        let mut backward = Vec::new();
        let (mut seg, mut node) = (start, key.a);
        while let Some(n) = next(node, seg).filter(|&n| !used[n]) {
            used[n] = true;
            node = far(n, node);
            backward.push(node);
            seg = n;
        }
        backward.reverse();
        backward.extend(forward);
        out.push(NetworkSegment {
            coords: backward.into_iter().map(GridPoint::to_lonlat).collect(),
            values: segments[start].values.clone(),
        });
    }
    out
}

/// Network as GeoJSON, one LineString per segment with a volume property per
/// scenario (`baseline`, `govtarget_slc`, ...) and `length_km`.
pub fn network_features(network: &[NetworkSegment]) -> FeatureCollection {
    FeatureCollection::new(
        network
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let mut props = Properties::new();
                props.insert("id".into(), (i as u64).into());
                for (s, &v) in &seg.values {
                    put_f64(&mut props, &s.slc_property(), v);
                }
                put_f64(&mut props, "length_km", seg.length_km());
                Feature::new(Geometry::line(&seg.coords), props)
            })
            .collect(),
    )
}
