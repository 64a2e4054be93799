use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BandRow, Counts, Manifest, PipelineError, ScenarioTotals, Stage};
use crate::data::Thresholds;
use crate::geojson::FeatureCollection;
use crate::model::{FitReport, ModelCoefficients};
use crate::scenarios::Scenario;
use crate::schema::Layer;

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsDocument {
    pub region_id: String,
    /// `fitted` or `configured`.
    pub coefficient_source: String,
    pub coefficients: ModelCoefficients,
    pub fit: Option<FitReport>,
    pub counts: Counts,
    pub thresholds: Thresholds,
    pub scenarios: Vec<Scenario>,
    pub totals: BTreeMap<Scenario, ScenarioTotals>,
    pub band_edges_km: Vec<f64>,
    pub distance_distribution: Vec<BandRow>,
}

/// A bundle read into memory.
#[derive(Debug, Clone)]
pub struct RegionBundle {
    pub region_id: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stats: StatsDocument,
    layers: BTreeMap<Layer, FeatureCollection>,
}

impl RegionBundle {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let read = |name: &str| {
            fs::read(dir.join(name)).map_err(|e| PipelineError::new(Stage::Load, format!("{}/{name}: {e}", dir.display())))
        };
        let parse_err = |name: &str, e: serde_json::Error| PipelineError::new(Stage::Load, format!("{name}: {e}"));
        let manifest: Manifest =
            serde_json::from_slice(&read("manifest.json")?).map_err(|e| parse_err("manifest.json", e))?;
        let stats: StatsDocument = serde_json::from_slice(&read("stats.json")?).map_err(|e| parse_err("stats.json", e))?;
        let mut layers = BTreeMap::new();
        for layer in Layer::ALL {
            let name = layer.file_name();
            let fc: FeatureCollection = serde_json::from_slice(&read(name)?).map_err(|e| parse_err(name, e))?;
            layers.insert(layer, fc);
        }
        Ok(Self {
            region_id: manifest.region_id.clone(),
            dir: dir.to_path_buf(),
            manifest,
            stats,
            layers,
        })
    }

    pub fn layer(&self, layer: Layer) -> &FeatureCollection {
        &self.layers[&layer]
    }

    /// Bounding box of the zones, `[min_lon, min_lat, max_lon, max_lat]`.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        self.layer(Layer::Zones).bbox()
    }
}

/// Loads every bundle directly under `root`, sorted by region id. Hidden
/// directories (in-progress builds) and directories without a manifest are skipped.
pub fn discover_bundles(root: &Path) -> Result<Vec<RegionBundle>, PipelineError> {
    let entries = fs::read_dir(root).map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", root.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| PipelineError::new(Stage::Load, e))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if hidden || !path.is_dir() || !path.join("manifest.json").is_file() {
            continue;
        }
        out.push(RegionBundle::load(&path)?);
    }
    out.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    Ok(out)
}
