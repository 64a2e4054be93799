use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geojson::Feature;
use crate::scenarios::Scenario;
use crate::schema::RankKey;

/// Band edges used when the configuration gives none, km.
pub const DEFAULT_BAND_EDGES_KM: [f64; 10] = [0.0, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0];

/// Flow summarised for the distance distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub d_km: f64,
    pub all: f64,
    /// Cyclists per scenario; scenarios missing here contribute nothing.
    pub slc: Vec<(Scenario, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    /// Exclusive lower bound, km.
    pub band_min_km: f64,
    /// Inclusive upper bound, km; `None` for the open band beyond the last edge.
    pub band_max_km: Option<f64>,
    pub scenario: Scenario,
    /// Commuters by any mode.
    pub trips: f64,
    pub cyclists: f64,
    /// Cycling mode share, in [0, 1].
    pub share: f64,
}

/// Commuter counts and cycling shares by distance band (`(lo, hi]`) and scenario.
/// Trips beyond the last edge fall into a final open band. Rows are ordered by
/// band, then by scenario.
pub fn distance_distribution(
    rows: &[DistanceRow],
    scenarios: &[Scenario],
    band_edges_km: &[f64],
) -> Result<Vec<BandRow>, PipelineError> {
    let err = |m: &str| PipelineError::new(super::Stage::Stats, m);
    if band_edges_km.len() < 2 {
        return Err(err("at least two band edges are needed"));
    }
    if band_edges_km.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(err("band edges must be strictly ascending"));
    }
    let n_bands = band_edges_km.len();
    let band_of = |d: f64| {
        // Index of the first edge ≥ d gives the band (edges[i-1], edges[i]].
        let i = band_edges_km.partition_point(|&e| e < d);
        i.clamp(1, n_bands) - 1
    };
    let mut trips = vec![0.0; n_bands];
    let mut cyclists = vec![vec![0.0; scenarios.len()]; n_bands];
    for r in rows {
        let b = band_of(r.d_km);
        trips[b] += r.all;
        for (j, s) in scenarios.iter().enumerate() {
            if let Some(&(_, v)) = r.slc.iter().find(|(rs, _)| rs == s) {
                cyclists[b][j] += v;
            }
        }
    }
    let mut out = Vec::with_capacity(n_bands * scenarios.len());
    for b in 0..n_bands {
        for (j, &s) in scenarios.iter().enumerate() {
            let share = if trips[b] > 0.0 { (cyclists[b][j] / trips[b]).clamp(0.0, 1.0) } else { 0.0 };
            out.push(BandRow {
                band_min_km: band_edges_km[b],
                band_max_km: band_edges_km.get(b + 1).copied(),
                scenario: s,
                trips: trips[b],
                cyclists: cyclists[b][j],
                share,
            });
        }
    }
    // Drop the open band when it is empty so fixed bands cover the data exactly.
    if trips[n_bands - 1] == 0.0 {
        out.retain(|r| r.band_max_km.is_some());
    }
    Ok(out)
}

/// Distribution as CSV: `band_min_km,band_max_km,scenario,trips,cyclists,share`.
pub fn distribution_csv(rows: &[BandRow]) -> String {
    let mut out = String::from("band_min_km,band_max_km,scenario,trips,cyclists,share\n");
    for r in rows {
        let max = r.band_max_km.map_or_else(|| "inf".to_string(), |v| v.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.band_min_km, max, r.scenario, r.trips, r.cyclists, r.share
        ));
    }
    out
}

/// Something orderable by scenario volume or impact.
pub trait Rankable {
    fn origin(&self) -> &str;
    fn dest(&self) -> &str;
    fn rank_value(&self, scenario: Scenario, key: RankKey) -> Option<f64>;
}

impl Rankable for Feature {
    fn origin(&self) -> &str {
        self.prop_str("origin").or_else(|| self.prop_str("id")).unwrap_or("")
    }

    fn dest(&self) -> &str {
        self.prop_str("dest").unwrap_or("")
    }

    fn rank_value(&self, scenario: Scenario, key: RankKey) -> Option<f64> {
        self.prop_f64(&key.property(scenario)?)
    }
}

/// Top `n` items by `key` under `scenario`, descending, ties broken by
/// (origin, dest). Items without a value sort last.
pub fn rank_lines<'a, T: Rankable>(
    lines: &'a [T],
    scenario: Scenario,
    key: RankKey,
    n: usize,
) -> Result<Vec<&'a T>, PipelineError> {
    if n == 0 {
        return Err(PipelineError::new(super::Stage::Stats, "n must be at least 1"));
    }
    let mut keyed: Vec<(Option<f64>, &T)> = lines.iter().map(|l| (l.rank_value(scenario, key), l)).collect();
    keyed.sort_by(|(va, a), (vb, b)| {
        let by_value = match (va, vb) {
            (Some(x), Some(y)) => y.total_cmp(x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_value
            .then_with(|| a.origin().cmp(b.origin()))
            .then_with(|| a.dest().cmp(b.dest()))
    });
    Ok(keyed.into_iter().take(n).map(|(_, l)| l).collect())
}
