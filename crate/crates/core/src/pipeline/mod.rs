//! Region build: ingest → route → fit → scenarios → impacts → network → stats,
//! written as an immutable bundle directory.
//!
//! The bundle holds one GeoJSON file per map layer, `stats.json` with the
//! coefficients and distance distribution (also as `distance_distribution.csv`),
//! `coefficients.toml`, and `manifest.json` listing SHA-256 hashes of every
//! input and output. Nothing time-dependent is written, so rebuilding from the
//! same inputs reproduces the bundle byte for byte.

mod analysis;
mod bundle;
mod config;

pub use analysis::{
    distance_distribution, distribution_csv, rank_lines, BandRow, DistanceRow, Rankable,
    DEFAULT_BAND_EDGES_KM,
};
pub use bundle::{discover_bundles, RegionBundle, StatsDocument};
pub use config::{BackendKind, InputPaths, ModelConfig, RegionConfig, RoutingConfig, StatsConfig};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    aggregate_bidirectional, filter_eligible, intrazonal_nominal_distance, parse_centroids_csv,
    parse_mortality_table, parse_od_table, parse_zones_geojson, DesireLine, OdPair, Partition, Thresholds, Zone, ZoneSet,
};
use crate::geo::LonLat;
use crate::geojson::{put_f64, Feature, FeatureCollection, Geometry, Properties};
use crate::impacts::{parse_age_profiles, ImpactContext, ImpactParams, ImpactResult};
use crate::model::{fit_logistic, FitOptions, FitReport, ModelCoefficients, TermMask, TrainingObservation};
use crate::netagg::{merge_contiguous, network_features, overline, RouteFlow};
use crate::routing::{
    route_batch, CachedBackend, Profile, Route, RouteBackend, RouteCache, RouteRequest, ServiceBackend,
    StubBackend, CROW_CIRCUITY,
};
use crate::scenarios::{run_scenarios, Scenario, ScenarioParams, ScenarioResult};
use crate::schema::{impact_property, Layer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Route,
    Fit,
    Scenarios,
    Impacts,
    Network,
    Stats,
    Write,
    Load,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Route => "route",
            Stage::Fit => "fit",
            Stage::Scenarios => "scenarios",
            Stage::Impacts => "impacts",
            Stage::Network => "network",
            Stage::Stats => "stats",
            Stage::Write => "write",
            Stage::Load => "load",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self { stage, message: message.to_string() }
    }
}

fn tagged<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

fn read_input(stage: Stage, path: &Path, hashes: &mut BTreeMap<String, String>, role: &str) -> Result<Vec<u8>, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))?;
    hashes.insert(role.to_string(), sha256_hex(&bytes));
    Ok(bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub bundle_dir: PathBuf,
    pub lines: usize,
    pub intrazonal: usize,
    pub excluded: usize,
    pub outside_region: usize,
    pub routing_errors: usize,
}

/// Builds with the backend named in the configuration, behind the route cache.
pub fn build_region(config: &RegionConfig) -> Result<BuildSummary, PipelineError> {
    build_region_with(config, configured_backend(config)?)
}

/// The routing backend named in the configuration, without the cache.
pub fn configured_backend(config: &RegionConfig) -> Result<Box<dyn RouteBackend>, PipelineError> {
    Ok(match config.routing.backend {
        BackendKind::Stub => Box::new(StubBackend {
            grid_step_deg: config.routing.grid_step_deg,
            elevation: config.routing.elevation,
        }),
        BackendKind::Service => {
            let svc = config
                .routing
                .service
                .clone()
                .ok_or_else(|| PipelineError::new(Stage::Config, "missing [routing.service]"))?;
            Box::new(ServiceBackend::new(svc).map_err(tagged(Stage::Route))?)
        }
    })
}

/// One eligible OD pair through every stage.
struct LineRecord {
    line: DesireLine,
    fast: Option<Route>,
    quiet: Option<Route>,
    errors: Vec<String>,
    d_km: f64,
    h_pct: f64,
    scenarios: Vec<ScenarioResult>,
    impacts: Vec<ImpactResult>,
}

impl LineRecord {
    fn distance_source(&self) -> &'static str {
        if self.fast.is_some() {
            "fast_route"
        } else {
            "euclidean"
        }
    }
}

struct IntraRecord {
    od: OdPair,
    d_km: f64,
    scenarios: Vec<ScenarioResult>,
    impacts: Vec<ImpactResult>,
}

struct Ingested {
    zones: ZoneSet,
    partition: Partition,
}

fn ingest(config: &RegionConfig, input_hashes: &mut BTreeMap<String, String>) -> Result<Ingested, PipelineError> {
    let od_bytes = read_input(Stage::Ingest, &config.inputs.od, input_hashes, "od")?;
    let pairs = parse_od_table(od_bytes.as_slice()).map_err(tagged(Stage::Ingest))?;
    let pairs = aggregate_bidirectional(&pairs);
    let centroids = match &config.inputs.centroids {
        Some(p) => {
            let bytes = read_input(Stage::Ingest, p, input_hashes, "centroids")?;
            Some(parse_centroids_csv(bytes.as_slice()).map_err(tagged(Stage::Ingest))?)
        }
        None => None,
    };
    let zone_bytes = read_input(Stage::Ingest, &config.inputs.zones, input_hashes, "zones")?;
    let zones = parse_zones_geojson(zone_bytes.as_slice(), centroids.as_ref()).map_err(tagged(Stage::Ingest))?;
    let partition = filter_eligible(pairs, &zones, &config.thresholds).map_err(tagged(Stage::Ingest))?;
    if partition.lines.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, "no OD pair passes the line thresholds"));
    }
    Ok(Ingested { zones, partition })
}

/// Fast and quiet routes for every line, through the route cache. A failed
/// fast route leaves the line on its straight-line distance and no hilliness.
fn route_lines<B: RouteBackend>(
    config: &RegionConfig,
    backend: B,
    eligible: Vec<DesireLine>,
) -> Result<Vec<LineRecord>, PipelineError> {
    let cache = RouteCache::new(&config.routing.cache_dir).map_err(tagged(Stage::Route))?;
    let cached = CachedBackend { cache, inner: backend };
    let requests: Vec<RouteRequest> = eligible
        .iter()
        .flat_map(|l| {
            Profile::BOTH.map(|profile| RouteRequest {
                origin: l.od.origin.clone(),
                dest: l.od.dest.clone(),
                from: l.from,
                to: l.to,
                profile,
            })
        })
        .collect();
    let mut routed = route_batch(&cached, &requests, config.routing.parallelism).into_iter();
    let mut lines = Vec::with_capacity(eligible.len());
    for line in eligible {
        let mut errors = Vec::new();
        let mut take = |profile: Profile| match routed.next().expect("two results per line") {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("{profile}: {e}"));
                None
            }
        };
        let fast = take(Profile::Fast);
        let quiet = take(Profile::Quiet);
        let (d_km, h_pct) = match &fast {
            Some(r) => (r.distance_km, r.gradient_pct),
            None => (line.euclid_km, 0.0),
        };
        if !(d_km > 0.0) {
            return Err(PipelineError::new(
                Stage::Route,
                format!("{} -> {}: zero trip distance", line.od.origin, line.od.dest),
            ));
        }
        lines.push(LineRecord { line, fast, quiet, errors, d_km, h_pct, scenarios: vec![], impacts: vec![] });
    }
    Ok(lines)
}

/// Outcome of routing a region without building it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub lines: usize,
    pub routes: usize,
    /// `origin -> dest profile: cause`, one per failed request.
    pub errors: Vec<String>,
}

/// Routes every eligible line into the route cache.
pub fn route_region_with<B: RouteBackend>(config: &RegionConfig, backend: B) -> Result<RouteSummary, PipelineError> {
    let Ingested { partition, .. } = ingest(config, &mut BTreeMap::new())?;
    let lines = route_lines(config, backend, partition.lines)?;
    let mut errors = Vec::new();
    let mut routes = 0;
    for l in &lines {
        routes += usize::from(l.fast.is_some()) + usize::from(l.quiet.is_some());
        errors.extend(l.errors.iter().map(|e| format!("{} -> {} {e}", l.line.od.origin, l.line.od.dest)));
    }
    Ok(RouteSummary { lines: lines.len(), routes, errors })
}

/// A model fit from an OD table and previously cached fast routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheFit {
    pub report: FitReport,
    /// Interzonal pairs that passed the thresholds and had a cached fast route.
    pub used: usize,
    /// Eligible-looking pairs with no cached fast route.
    pub unrouted: usize,
}

/// Fits the uptake model on interzonal pairs whose fast route is in the cache.
/// Route endpoints stand in for zone centroids, so the straight-line threshold
/// is applied between the first and last route vertices. Intrazonal pairs are
/// left out, since their nominal distance needs zone areas.
pub fn fit_from_cache(
    od_path: &Path,
    cache_dir: &Path,
    thresholds: &Thresholds,
    options: &FitOptions,
) -> Result<CacheFit, PipelineError> {
    let bytes = fs::read(od_path).map_err(|e| PipelineError::new(Stage::Ingest, format!("{}: {e}", od_path.display())))?;
    let pairs = aggregate_bidirectional(&parse_od_table(bytes.as_slice()).map_err(tagged(Stage::Ingest))?);
    let cache = RouteCache::new(cache_dir).map_err(tagged(Stage::Route))?;
    let mut obs = Vec::new();
    let mut unrouted = 0;
    for od in pairs.into_iter().filter(|p| !p.is_intrazonal()) {
        let Some(doc) = cache.load_pair(&od.origin, &od.dest, Profile::Fast).map_err(tagged(Stage::Route))? else {
            if od.all >= thresholds.min_commuters {
                unrouted += 1;
            }
            continue;
        };
        let (Some(&from), Some(&to)) = (doc.coordinates.first(), doc.coordinates.last()) else {
            continue;
        };
        let req = RouteRequest { origin: od.origin.clone(), dest: od.dest.clone(), from: from.into(), to: to.into(), profile: Profile::Fast };
        let route = Route::from_document(&req, &doc)
            .map_err(|e| PipelineError::new(Stage::Route, format!("{} -> {}: {e}", od.origin, od.dest)))?;
        if !thresholds.admits(route.euclid_km(), od.all) {
            continue;
        }
        obs.push(TrainingObservation::new(route.distance_km, route.gradient_pct, od.all, od.cycle).map_err(tagged(Stage::Fit))?);
    }
    let report = fit_logistic(&obs, options).map_err(tagged(Stage::Fit))?;
    Ok(CacheFit { report, used: obs.len(), unrouted })
}

/// Builds the bundle using `backend` for routes not already cached.
pub fn build_region_with<B: RouteBackend>(config: &RegionConfig, backend: B) -> Result<BuildSummary, PipelineError> {
    let mut input_hashes = BTreeMap::new();
    let Ingested { zones, partition } = ingest(config, &mut input_hashes)?;
    let gender_available = partition.lines.iter().all(|l| l.od.gender.is_some())
        && partition.intrazonal.iter().all(|o| o.gender.is_some());
    let Partition { lines: eligible, intrazonal, excluded, outside_region } = partition;
    let mut lines = route_lines(config, backend, eligible)?;
    let zone_of = |id: &str| zones.get(id).expect("filtered pairs reference known zones");
    let mut intra: Vec<IntraRecord> = intrazonal
        .into_iter()
        .map(|od| {
            let d_km = intrazonal_nominal_distance(zone_of(&od.origin).area_km2).map_err(tagged(Stage::Ingest))?;
            Ok(IntraRecord { od, d_km, scenarios: vec![], impacts: vec![] })
        })
        .collect::<Result<_, PipelineError>>()?;

    // Fit.
    let (coefficients, fit_report) = match &config.model.coefficients {
        Some(path) => {
            let bytes = read_input(Stage::Fit, path, &mut input_hashes, "coefficients")?;
            let text = String::from_utf8(bytes).map_err(tagged(Stage::Fit))?;
            (ModelCoefficients::from_toml_str(&text).map_err(tagged(Stage::Fit))?, None)
        }
        None => {
            let mut obs = Vec::with_capacity(lines.len() + intra.len());
            for l in &lines {
                obs.push(TrainingObservation::new(l.d_km, l.h_pct, l.line.od.all, l.line.od.cycle).map_err(tagged(Stage::Fit))?);
            }
            for i in &intra {
                obs.push(TrainingObservation::new(i.d_km, 0.0, i.od.all, i.od.cycle).map_err(tagged(Stage::Fit))?);
            }
            let mask = TermMask::excluding(&config.model.exclude_terms).map_err(tagged(Stage::Fit))?;
            let report = fit_logistic(&obs, &FitOptions { mask, ..Default::default() }).map_err(tagged(Stage::Fit))?;
            (report.coefficients, Some(report))
        }
    };

    // Scenarios.
    let sp_bytes = read_input(Stage::Scenarios, &config.model.scenario_params, &mut input_hashes, "scenario_params")?;
    let scenario_params =
        ScenarioParams::from_toml_str(&String::from_utf8_lossy(&sp_bytes)).map_err(tagged(Stage::Scenarios))?;
    let keep = |mut rs: Vec<ScenarioResult>| {
        if !gender_available {
            rs.retain(|r| r.scenario != Scenario::GenderEqual);
        }
        rs
    };
    lines
        .par_iter_mut()
        .try_for_each(|l| {
            l.scenarios = keep(run_scenarios(&l.line.od, l.d_km, l.h_pct, &coefficients, &scenario_params)?);
            Ok(())
        })
        .map_err(tagged::<crate::model::ModelError>(Stage::Scenarios))?;
    intra
        .par_iter_mut()
        .try_for_each(|i| {
            i.scenarios = keep(run_scenarios(&i.od, i.d_km, 0.0, &coefficients, &scenario_params)?);
            Ok(())
        })
        .map_err(tagged::<crate::model::ModelError>(Stage::Scenarios))?;
    let scenarios: Vec<Scenario> = Scenario::ALL
        .into_iter()
        .filter(|&s| s != Scenario::GenderEqual || gender_available)
        .collect();

    // Impacts.
    let ip_bytes = read_input(Stage::Impacts, &config.model.impact_params, &mut input_hashes, "impact_params")?;
    let impact_params =
        ImpactParams::from_toml_str(&String::from_utf8_lossy(&ip_bytes)).map_err(tagged(Stage::Impacts))?;
    let ap_bytes = read_input(Stage::Impacts, &config.inputs.age_profiles, &mut input_hashes, "age_profiles")?;
    let profiles = parse_age_profiles(ap_bytes.as_slice()).map_err(tagged(Stage::Impacts))?;
    let mort_bytes = read_input(Stage::Impacts, &config.inputs.mortality, &mut input_hashes, "mortality")?;
    let mortality = parse_mortality_table(mort_bytes.as_slice()).map_err(tagged(Stage::Impacts))?;
    let ctx = ImpactContext { params: &impact_params, profiles: &profiles, mortality: &mortality };
    lines
        .par_iter_mut()
        .try_for_each(|l| {
            let area = &zone_of(&l.line.od.origin).mortality_area;
            l.impacts = l
                .scenarios
                .iter()
                .map(|r| ctx.evaluate(&l.line.od, area, r, l.d_km))
                .collect::<Result<_, _>>()?;
            Ok(())
        })
        .map_err(tagged::<crate::impacts::ImpactError>(Stage::Impacts))?;
    intra
        .par_iter_mut()
        .try_for_each(|i| {
            let area = &zone_of(&i.od.origin).mortality_area;
            i.impacts = i
                .scenarios
                .iter()
                .map(|r| ctx.evaluate(&i.od, area, r, i.d_km))
                .collect::<Result<_, _>>()?;
            Ok(())
        })
        .map_err(tagged::<crate::impacts::ImpactError>(Stage::Impacts))?;

    // Network.
    let flows: Vec<RouteFlow> = lines
        .iter()
        .filter_map(|l| {
            l.fast.as_ref().map(|r| RouteFlow {
                coords: r.coords.clone(),
                values: l.scenarios.iter().map(|s| (s.scenario, s.slc)).collect(),
            })
        })
        .collect();
    let network = merge_contiguous(&overline(&flows));
    if network.is_empty() && !flows.is_empty() {
        return Err(PipelineError::new(Stage::Network, "routes produced no network segments"));
    }

    // Stats.
    let rows: Vec<DistanceRow> = lines
        .iter()
        .map(|l| DistanceRow {
            d_km: l.d_km,
            all: l.line.od.all as f64,
            slc: l.scenarios.iter().map(|s| (s.scenario, s.slc)).collect(),
        })
        .collect();
    let distribution = distance_distribution(&rows, &scenarios, &config.stats.band_edges_km)?;
    let routing_errors = lines.iter().filter(|l| !l.errors.is_empty()).count();
    let mut totals = BTreeMap::new();
    for (k, &s) in scenarios.iter().enumerate() {
        let mut t = ScenarioTotals::default();
        for (rs, is) in lines
            .iter()
            .map(|l| (&l.scenarios, &l.impacts))
            .chain(intra.iter().map(|i| (&i.scenarios, &i.impacts)))
        {
            t.cyclists += rs[k].slc;
            t.health_value += is[k].health_value;
            t.co2_saved += is[k].co2_saved_kg;
            t.net_deaths_avoided += is[k].net_deaths_avoided;
        }
        totals.insert(s, t);
    }
    let stats = StatsDocument {
        region_id: config.region_id.clone(),
        coefficient_source: if fit_report.is_some() { "fitted" } else { "configured" }.to_string(),
        coefficients,
        fit: fit_report,
        counts: Counts {
            lines: lines.len(),
            intrazonal: intra.len(),
            excluded: excluded.len(),
            outside_region: outside_region.len(),
            routing_errors,
            crow_exceeded: lines.iter().filter(|l| l.fast.as_ref().is_some_and(Route::exceeds_crow)).count(),
            commuters_in_lines: lines.iter().map(|l| l.line.od.all).sum(),
            commuters_excluded: excluded.iter().map(|o| o.all).sum(),
            commuters_outside_region: outside_region.iter().map(|o| o.all).sum(),
        },
        thresholds: config.thresholds,
        scenarios: scenarios.clone(),
        totals,
        band_edges_km: config.stats.band_edges_km.clone(),
        distance_distribution: distribution.clone(),
    };

    // Write.
    let zone_features = zone_features(&zones.iter().collect::<Vec<_>>(), &lines, &intra, &scenarios);
    let centroid_features = FeatureCollection::new(
        zone_features
            .features
            .iter()
            .zip(zones.iter())
            .map(|(f, z)| Feature::new(Geometry::point(z.centroid), f.properties.clone()))
            .collect(),
    );
    let line_props: Vec<Properties> = lines.iter().map(line_properties).collect();
    let straight = FeatureCollection::new(
        lines
            .iter()
            .zip(&line_props)
            .map(|(l, p)| Feature::new(Geometry::line(&[l.line.from, l.line.to]), p.clone()))
            .collect(),
    );
    let route_layer = |profile: Profile| {
        FeatureCollection::new(
            lines
                .iter()
                .zip(&line_props)
                .filter_map(|(l, p)| {
                    let r = match profile {
                        Profile::Fast => l.fast.as_ref(),
                        Profile::Quiet => l.quiet.as_ref(),
                    }?;
                    let mut props = p.clone();
                    props.insert("profile".into(), profile.name().into());
                    put_f64(&mut props, "route_km", r.distance_km);
                    put_f64(&mut props, "gradient_pct", r.gradient_pct);
                    put_f64(&mut props, "circuity", circuity_of(r, &l.line));
                    Some(Feature::new(Geometry::line(&r.coords), props))
                })
                .collect(),
        )
    };

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (Layer::Zones.file_name(), geojson_bytes(&zone_features)?),
        (Layer::Centroids.file_name(), geojson_bytes(&centroid_features)?),
        (Layer::StraightLines.file_name(), geojson_bytes(&straight)?),
        (Layer::FastRoutes.file_name(), geojson_bytes(&route_layer(Profile::Fast))?),
        (Layer::QuietRoutes.file_name(), geojson_bytes(&route_layer(Profile::Quiet))?),
        (Layer::Network.file_name(), geojson_bytes(&network_features(&network))?),
        ("stats.json", json_bytes(&stats)?),
        ("distance_distribution.csv", distribution_csv(&distribution).into_bytes()),
        ("coefficients.toml", coefficients.to_toml_string().into_bytes()),
    ];
    let manifest = Manifest {
        region_id: config.region_id.clone(),
        routing_backend: config.routing.backend,
        inputs: input_hashes,
        files: files.iter().map(|(n, b)| (n.to_string(), sha256_hex(b))).collect(),
    };
    files.push(("manifest.json", json_bytes(&manifest)?));
    let bundle_dir = write_bundle(&config.output_dir, &config.region_id, &files)?;

    Ok(BuildSummary {
        bundle_dir,
        lines: lines.len(),
        intrazonal: intra.len(),
        excluded: excluded.len(),
        outside_region: outside_region.len(),
        routing_errors,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTotals {
    pub cyclists: f64,
    pub health_value: f64,
    pub co2_saved: f64,
    pub net_deaths_avoided: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub lines: usize,
    pub intrazonal: usize,
    pub excluded: usize,
    pub outside_region: usize,
    pub routing_errors: usize,
    pub crow_exceeded: usize,
    pub commuters_in_lines: u64,
    pub commuters_excluded: u64,
    pub commuters_outside_region: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub region_id: String,
    pub routing_backend: BackendKind,
    /// SHA-256 of each input file, by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each bundle file except the manifest.
    pub files: BTreeMap<String, String>,
}

fn circuity_of(r: &Route, line: &DesireLine) -> f64 {
    crate::routing::circuity(r.distance_km, line.euclid_km).unwrap_or(f64::NAN)
}

fn put_scenarios(props: &mut Properties, scenarios: &[ScenarioResult], impacts: &[ImpactResult]) {
    for (r, i) in scenarios.iter().zip(impacts) {
        put_f64(props, &r.scenario.slc_property(), r.slc);
        if r.scenario != Scenario::Baseline {
            put_f64(props, &impact_property(r.scenario, "health_value"), i.health_value);
            put_f64(props, &impact_property(r.scenario, "co2_saved"), i.co2_saved_kg);
            put_f64(props, &impact_property(r.scenario, "net_deaths_avoided"), i.net_deaths_avoided);
        }
    }
}

fn line_properties(l: &LineRecord) -> Properties {
    let od = &l.line.od;
    let mut p = Properties::new();
    p.insert("id".into(), format!("{} {}", od.origin, od.dest).into());
    p.insert("origin".into(), od.origin.clone().into());
    p.insert("dest".into(), od.dest.clone().into());
    p.insert("distance_source".into(), l.distance_source().into());
    for (k, v) in [("all", od.all), ("cycle", od.cycle), ("walk", od.walk), ("car", od.car), ("other", od.other)] {
        p.insert(k.into(), v.into());
    }
    put_f64(&mut p, "euclid_km", l.line.euclid_km);
    put_f64(&mut p, "distance_km", l.d_km);
    put_f64(&mut p, "hilliness_pct", l.h_pct);
    let opt = |r: Option<&Route>, f: &dyn Fn(&Route) -> f64| r.map_or(f64::NAN, f);
    put_f64(&mut p, "fast_km", opt(l.fast.as_ref(), &|r| r.distance_km));
    put_f64(&mut p, "quiet_km", opt(l.quiet.as_ref(), &|r| r.distance_km));
    put_f64(&mut p, "circuity_fast", opt(l.fast.as_ref(), &|r| circuity_of(r, &l.line)));
    put_f64(&mut p, "circuity_quiet", opt(l.quiet.as_ref(), &|r| circuity_of(r, &l.line)));
    p.insert(
        "crow_exceeded".into(),
        l.fast
            .as_ref()
            .map_or(Value::Null, |r| Value::Bool(circuity_of(r, &l.line) > CROW_CIRCUITY)),
    );
    if !l.errors.is_empty() {
        p.insert("routing_error".into(), l.errors.join("; ").into());
    }
    put_scenarios(&mut p, &l.scenarios, &l.impacts);
    p
}

/// Zone aggregates: half of each line touching the zone plus its intrazonal flow.
fn zone_features(zones: &[&Zone], lines: &[LineRecord], intra: &[IntraRecord], scenarios: &[Scenario]) -> FeatureCollection {
    #[derive(Default, Clone)]
    struct Acc {
        counts: [f64; 5],
        intra_all: f64,
        intra_cycle: f64,
        slc: Vec<f64>,
        impacts: Vec<[f64; 3]>,
    }
    let blank = Acc { slc: vec![0.0; scenarios.len()], impacts: vec![[0.0; 3]; scenarios.len()], ..Default::default() };
    let mut acc: BTreeMap<&str, Acc> = zones.iter().map(|z| (z.id.as_str(), blank.clone())).collect();
    let mut add = |zone: &str, od: &OdPair, rs: &[ScenarioResult], is: &[ImpactResult], w: f64| {
        let a = acc.get_mut(zone).expect("known zone");
        for (c, v) in a.counts.iter_mut().zip([od.all, od.cycle, od.walk, od.car, od.other]) {
            *c += w * v as f64;
        }
        for (k, (r, i)) in rs.iter().zip(is).enumerate() {
            a.slc[k] += w * r.slc;
            a.impacts[k][0] += w * i.health_value;
            a.impacts[k][1] += w * i.co2_saved_kg;
            a.impacts[k][2] += w * i.net_deaths_avoided;
        }
    };
    for l in lines {
        add(&l.line.od.origin, &l.line.od, &l.scenarios, &l.impacts, 0.5);
        add(&l.line.od.dest, &l.line.od, &l.scenarios, &l.impacts, 0.5);
    }
    for i in intra {
        add(&i.od.origin, &i.od, &i.scenarios, &i.impacts, 1.0);
    }
    for i in intra {
        let a = acc.get_mut(i.od.origin.as_str()).expect("known zone");
        a.intra_all += i.od.all as f64;
        a.intra_cycle += i.od.cycle as f64;
    }

    let features = zones
        .iter()
        .map(|z| {
            let a = &acc[z.id.as_str()];
            let mut p = Properties::new();
            p.insert("id".into(), z.id.clone().into());
            p.insert("name".into(), z.name.clone().into());
            for (k, v) in ["all", "cycle", "walk", "car", "other"].into_iter().zip(a.counts) {
                put_f64(&mut p, k, v);
            }
            put_f64(&mut p, "intrazonal_all", a.intra_all);
            put_f64(&mut p, "intrazonal_cycle", a.intra_cycle);
            put_f64(&mut p, "intrazonal_rate", if a.intra_all > 0.0 { a.intra_cycle / a.intra_all } else { 0.0 });
            for (k, &s) in scenarios.iter().enumerate() {
                put_f64(&mut p, &s.slc_property(), a.slc[k]);
                if s != Scenario::Baseline {
                    for (field, v) in ["health_value", "co2_saved", "net_deaths_avoided"].into_iter().zip(a.impacts[k]) {
                        put_f64(&mut p, &impact_property(s, field), v);
                    }
                }
            }
            Feature::new(zone_geometry(z), p)
        })
        .collect();
    FeatureCollection::new(features)
}

fn zone_geometry(z: &Zone) -> Geometry {
    let ring = |r: &Vec<LonLat>| r.iter().map(|p| p.to_array()).collect::<Vec<_>>();
    let poly = |rings: &Vec<Vec<LonLat>>| rings.iter().map(ring).collect::<Vec<_>>();
    match z.boundary.as_slice() {
        [single] => Geometry::Polygon(poly(single)),
        many => Geometry::MultiPolygon(many.iter().map(poly).collect()),
    }
}

fn geojson_bytes(fc: &FeatureCollection) -> Result<Vec<u8>, PipelineError> {
    let mut v = serde_json::to_vec(fc).map_err(tagged(Stage::Write))?;
    v.push(b'\n');
    Ok(v)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(tagged(Stage::Write))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes into a hidden temporary directory next to the bundle, then swaps it in.
fn write_bundle(root: &Path, region_id: &str, files: &[(&str, Vec<u8>)]) -> Result<PathBuf, PipelineError> {
    let err = tagged(Stage::Write);
    fs::create_dir_all(root).map_err(|e| err(format!("{}: {e}", root.display())))?;
    let tmp = tempfile::Builder::new()
        .prefix(".build-")
        .tempdir_in(root)
        .map_err(|e| err(format!("{}: {e}", root.display())))?;
    for (name, bytes) in files {
        fs::write(tmp.path().join(name), bytes).map_err(|e| err(format!("{name}: {e}")))?;
    }
    let target = root.join(region_id);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(|e| err(format!("{}: {e}", target.display())))?;
    }
    let staged = tmp.keep();
    if let Err(e) = fs::rename(&staged, &target) {
        let _ = fs::remove_dir_all(&staged);
        return Err(err(format!("{}: {e}", target.display())));
    }
    Ok(target)
}
