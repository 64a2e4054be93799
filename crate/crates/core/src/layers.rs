//! Read-only layer queries over loaded bundles, as served to the map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geojson::FeatureCollection;
use crate::pipeline::{rank_lines, RegionBundle};
use crate::scenarios::Scenario;
use crate::schema::{Layer, RankKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayerError {
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// Which features of which layer to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerQuery {
    pub layer: Layer,
    #[serde(default = "baseline")]
    pub scenario: Scenario,
    /// Keep only the top `n` features.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub order_by: RankKey,
}

fn baseline() -> Scenario {
    Scenario::Baseline
}

impl LayerQuery {
    pub fn new(layer: Layer) -> Self {
        Self { layer, scenario: Scenario::Baseline, n: None, order_by: RankKey::Slc }
    }

    /// Ordering by impacts is offered only for line layers under a non-baseline scenario.
    pub fn validate(&self) -> Result<(), LayerError> {
        if self.n == Some(0) {
            return Err(LayerError::InvalidQuery("n must be at least 1".into()));
        }
        if self.order_by != RankKey::Slc {
            if self.scenario == Scenario::Baseline {
                return Err(LayerError::InvalidQuery(format!(
                    "order_by={} is not available for the baseline",
                    self.order_by.name()
                )));
            }
            if !self.layer.is_line_layer() {
                return Err(LayerError::InvalidQuery(format!(
                    "order_by={} applies only to line layers, not {}",
                    self.order_by.name(),
                    self.layer
                )));
            }
        }
        Ok(())
    }
}

/// Features of one layer. With `n`, the top `n` by `order_by` under the query
/// scenario, descending; otherwise every feature in bundle order.
pub fn query_layer(bundle: &RegionBundle, query: &LayerQuery) -> Result<FeatureCollection, LayerError> {
    query.validate()?;
    let features = &bundle.layer(query.layer).features;
    match query.n {
        None => Ok(FeatureCollection::new(features.clone())),
        Some(n) => {
            let top = rank_lines(features, query.scenario, query.order_by, n)
                .map_err(|e| LayerError::InvalidQuery(e.message))?;
            Ok(FeatureCollection::new(top.into_iter().cloned().collect()))
        }
    }
}

/// Region listing entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub id: String,
    pub bbox: Option<[f64; 4]>,
    pub lines: usize,
    pub zones: usize,
}

pub fn region_summaries(bundles: &[RegionBundle]) -> Vec<RegionSummary> {
    bundles
        .iter()
        .map(|b| RegionSummary {
            id: b.region_id.clone(),
            bbox: b.bbox(),
            lines: b.layer(Layer::StraightLines).features.len(),
            zones: b.layer(Layer::Zones).features.len(),
        })
        .collect()
}

pub fn find_region<'a>(bundles: &'a [RegionBundle], id: &str) -> Result<&'a RegionBundle, LayerError> {
    bundles
        .iter()
        .find(|b| b.region_id == id)
        .ok_or_else(|| LayerError::UnknownRegion(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_by_visibility_rule() {
        let mut q = LayerQuery::new(Layer::FastRoutes);
        q.validate().unwrap();
        q.order_by = RankKey::HealthValue;
        assert!(q.validate().is_err());
        q.scenario = Scenario::GoDutch;
        q.validate().unwrap();
        q.layer = Layer::Network;
        assert!(q.validate().is_err());
        q.layer = Layer::StraightLines;
        q.n = Some(0);
        assert!(q.validate().is_err());
    }
}
