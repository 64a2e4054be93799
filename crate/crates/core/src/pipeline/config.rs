use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::DEFAULT_BAND_EDGES_KM;
use super::{PipelineError, Stage};
use crate::data::Thresholds;
use crate::routing::{LinearElevation, ServiceConfig, DEFAULT_PARALLELISM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub od: PathBuf,
    pub zones: PathBuf,
    /// `id,lon,lat` file, for zone files without centroid properties.
    #[serde(default)]
    pub centroids: Option<PathBuf>,
    pub mortality: PathBuf,
    pub age_profiles: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub scenario_params: PathBuf,
    pub impact_params: PathBuf,
    /// Fixed coefficients; when absent the model is fitted to the region.
    #[serde(default)]
    pub coefficients: Option<PathBuf>,
    /// Terms held at zero when fitting.
    #[serde(default)]
    pub exclude_terms: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Service,
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    pub backend: BackendKind,
    pub cache_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Stub only: spacing of shared vertices, degrees.
    #[serde(default)]
    pub grid_step_deg: Option<f64>,
    /// Stub only: synthetic terrain.
    #[serde(default)]
    pub elevation: Option<LinearElevation>,
    #[serde(default)]
    pub service: Option<ServiceConfig>,
}

fn default_edges() -> Vec<f64> {
    DEFAULT_BAND_EDGES_KM.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "default_edges")]
    pub band_edges_km: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { band_edges_km: default_edges() }
    }
}

/// Region build configuration. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub region_id: String,
    /// Parent of the bundle directory, which is named after the region.
    pub output_dir: PathBuf,
    pub inputs: InputPaths,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub model: ModelConfig,
    pub routing: RoutingConfig,
    #[serde(default)]
    pub stats: StatsConfig,
}

impl RegionConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut c: Self = toml::from_str(text).map_err(|e| PipelineError::new(Stage::Config, e))?;
        if c.region_id.is_empty()
            || !c.region_id.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_')
        {
            return Err(PipelineError::new(
                Stage::Config,
                format!("region_id `{}` must be non-empty ASCII letters, digits, `-` or `_`", c.region_id),
            ));
        }
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        abs(&mut c.output_dir);
        abs(&mut c.inputs.od);
        abs(&mut c.inputs.zones);
        abs(&mut c.inputs.mortality);
        abs(&mut c.inputs.age_profiles);
        if let Some(p) = c.inputs.centroids.as_mut() {
            abs(p);
        }
        abs(&mut c.model.scenario_params);
        abs(&mut c.model.impact_params);
        if let Some(p) = c.model.coefficients.as_mut() {
            abs(p);
        }
        abs(&mut c.routing.cache_dir);
        if c.routing.backend == BackendKind::Service && c.routing.service.is_none() {
            return Err(PipelineError::new(Stage::Config, "service backend needs a [routing.service] table"));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.output_dir.join(&self.region_id)
    }
}
