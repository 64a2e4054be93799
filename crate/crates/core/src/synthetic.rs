//! Seeded synthetic inputs: binomial training data from known coefficients and
//! complete toy regions for exercising the pipeline end to end.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::data::OdPair;
use crate::model::{predict_pcycle, ModelCoefficients, ModelError, TrainingObservation};

/// Coefficients with a realistic shape: share rises over the first km or two,
/// then decays, and hills suppress cycling more at longer distances.
pub fn reference_coefficients() -> ModelCoefficients {
    ModelCoefficients {
        alpha: -3.0,
        beta_d: -0.3,
        beta_sqrt_d: 1.2,
        beta_d2: 0.002,
        gamma_h: -0.3,
        gamma_dh: 0.01,
        gamma_sqrtdh: -0.05,
    }
}

/// Draws `n_cycle ~ Binomial(trials, p(d, h))` at every grid point.
pub fn simulate_observations(
    coeffs: &ModelCoefficients,
    d_grid: &[f64],
    h_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<TrainingObservation>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(d_grid.len() * h_grid.len());
    for &d in d_grid {
        for &h in h_grid {
            let p = predict_pcycle(coeffs, d, h)?;
            let n_cycle = Binomial::new(trials, p)
                .expect("p in (0, 1)")
                .sample(&mut rng);
            out.push(TrainingObservation::new(d, h, trials, n_cycle)?);
        }
    }
    Ok(out)
}

/// Inputs for a gridded toy region, all as file contents.
#[derive(Debug, Clone)]
pub struct SyntheticRegion {
    pub od_csv: String,
    pub zones_geojson: String,
    pub mortality_csv: String,
    pub age_profiles_csv: String,
    pub scenario_toml: String,
    pub impacts_toml: String,
    pub pairs: Vec<OdPair>,
}

#[derive(Debug, Clone, Copy)]
pub struct RegionSpec {
    /// Zones per side of the square grid.
    pub side: usize,
    /// Zone edge length, degrees.
    pub cell_deg: f64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub seed: u64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            side: 4,
            cell_deg: 0.02,
            origin_lon: -1.60,
            origin_lat: 53.78,
            seed: 7,
        }
    }
}

/// Builds a grid region. Commuter totals fall off with centroid distance and
/// cycling is drawn from `coeffs` using straight-line distance as a stand-in
/// for route distance, with flat terrain.
pub fn region(spec: &RegionSpec, coeffs: &ModelCoefficients) -> SyntheticRegion {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<String> = (0..spec.side * spec.side).map(|i| format!("Z{i:03}")).collect();
    let centroid = |i: usize| {
        let (row, col) = (i / spec.side, i % spec.side);
        // Offset from the cell centre, so centroids are population-weighted looking.
        let jitter = 0.1 * spec.cell_deg * (((i * 7) % 5) as f64 - 2.0) / 2.0;
        (
            spec.origin_lon + (col as f64 + 0.5) * spec.cell_deg + jitter,
            spec.origin_lat + (row as f64 + 0.5) * spec.cell_deg - jitter,
        )
    };

    let mut features = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let (row, col) = (i / spec.side, i % spec.side);
        let x0 = spec.origin_lon + col as f64 * spec.cell_deg;
        let y0 = spec.origin_lat + row as f64 * spec.cell_deg;
        let (x1, y1) = (x0 + spec.cell_deg, y0 + spec.cell_deg);
        let (cx, cy) = centroid(i);
        features.push(format!(
            r#"{{"type":"Feature","properties":{{"id":"{id}","name":"Zone {i}","centroid_lon":{cx},"centroid_lat":{cy},"mortality_area":"LA{}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#,
            row / 2
        ));
    }
    let zones_geojson = format!(
        "{{\"type\":\"FeatureCollection\",\"features\":[\n{}\n]}}\n",
        features.join(",\n")
    );

    let mut pairs = Vec::new();
    for (i, o) in ids.iter().enumerate() {
        for (j, d) in ids.iter().enumerate() {
            let (ox, oy) = centroid(i);
            let (dx, dy) = centroid(j);
            let km = crate::geo::haversine_km(
                crate::geo::LonLat::new(ox, oy),
                crate::geo::LonLat::new(dx, dy),
            );
            let nominal = if i == j { 0.6 } else { km };
            let mean = 400.0 * (-nominal / 2.5).exp();
            let all = (mean * rng.random_range(0.6..1.4)).round() as u64;
            if all == 0 {
                continue;
            }
            let p = predict_pcycle(coeffs, nominal, 0.0).expect("positive distance");
            let cycle = Binomial::new(all, p).unwrap().sample(&mut rng);
            let rest = all - cycle;
            let walk_share = (0.6 * (-nominal / 0.8).exp()).min(0.9);
            let walk = Binomial::new(rest, walk_share).unwrap().sample(&mut rng);
            let car = Binomial::new(rest - walk, 0.75).unwrap().sample(&mut rng);
            let other = rest - walk - car;
            let male_all = Binomial::new(all, 0.52).unwrap().sample(&mut rng);
            let male_cycle = Binomial::new(cycle, 0.7).unwrap().sample(&mut rng).min(male_all);
            let female_cycle = (cycle - male_cycle).min(all - male_all);
            let male_cycle = cycle - female_cycle;
            pairs.push(OdPair {
                origin: o.clone(),
                dest: d.clone(),
                all,
                cycle,
                walk,
                car,
                other,
                gender: Some(crate::data::GenderSplit {
                    male_all,
                    male_cycle,
                    female_all: all - male_all,
                    female_cycle,
                }),
            });
        }
    }
    let mut od = Vec::new();
    crate::data::write_od_table(&pairs, &mut od).expect("in-memory write");

    let mut mortality_csv = String::from("area_id,sex,age_min,age_max,annual_rate\n");
    for la in 0..spec.side.div_ceil(2) {
        for (sex, factor) in [("male", 1.0), ("female", 0.7)] {
            for (lo, hi, rate) in [(16, 39, 0.0006), (40, 64, 0.0035), (65, 74, 0.015)] {
                let _ = writeln!(
                    mortality_csv,
                    "LA{la},{sex},{lo},{hi},{}",
                    rate * factor * (1.0 + 0.1 * la as f64)
                );
            }
        }
    }

    let age_profiles_csv = "scenario,sex,age_min,age_max,weight\n\
baseline,male,16,39,0.4\nbaseline,male,40,64,0.3\nbaseline,male,65,74,0.02\n\
baseline,female,16,39,0.17\nbaseline,female,40,64,0.1\nbaseline,female,65,74,0.01\n\
godutch,male,16,39,0.25\ngodutch,male,40,64,0.22\ngodutch,male,65,74,0.03\n\
godutch,female,16,39,0.25\ngodutch,female,40,64,0.22\ngodutch,female,65,74,0.03\n"
        .to_string();

    let scenario_toml = "gd_main = 1.5\ngd_dist = -0.05\neb_main = 0.1\neb_dist = 0.03\neb_hill = 0.1\n".to_string();
    let impacts_toml = DEFAULT_IMPACTS_TOML.to_string();

    SyntheticRegion {
        od_csv: String::from_utf8(od).expect("csv is utf-8"),
        zones_geojson,
        mortality_csv,
        age_profiles_csv,
        scenario_toml,
        impacts_toml,
        pairs,
    }
}

/// Impact parameters matching the shipped `config/impacts.toml`.
pub const DEFAULT_IMPACTS_TOML: &str = "\
speed_cycle = 14.0
speed_walk = 4.8
speed_ebike = 18.0
rr_cycle = 0.90
ref_min_cycle = 100.0
rr_walk = 0.89
ref_min_walk = 168.0
benefit_cap = 2.0
ebike_benefit_scale = 0.7
vsl = 1800000.0
commute_trips_per_week = 10.0
weeks_per_year = 45.6
co2_kg_per_km = 0.186
";

impl SyntheticRegion {
    /// Writes the inputs plus a `region.toml` using the stub router into `dir`.
    pub fn write_to(&self, dir: &Path, region_id: &str) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("od.csv"), &self.od_csv)?;
        fs::write(dir.join("zones.geojson"), &self.zones_geojson)?;
        fs::write(dir.join("mortality.csv"), &self.mortality_csv)?;
        fs::write(dir.join("age_profiles.csv"), &self.age_profiles_csv)?;
        fs::write(dir.join("scenario.toml"), &self.scenario_toml)?;
        fs::write(dir.join("impacts.toml"), &self.impacts_toml)?;
        fs::write(
            dir.join("region.toml"),
            format!(
                "region_id = \"{region_id}\"\noutput_dir = \"out\"\n\n\
[inputs]\nod = \"od.csv\"\nzones = \"zones.geojson\"\nmortality = \"mortality.csv\"\nage_profiles = \"age_profiles.csv\"\n\n\
[thresholds]\nmax_euclid_km = 20.0\nmin_commuters = 10\n\n\
[model]\nscenario_params = \"scenario.toml\"\nimpact_params = \"impacts.toml\"\n\n\
[routing]\nbackend = \"stub\"\ncache_dir = \"route_cache\"\ngrid_step_deg = 0.005\n\n\
[routing.elevation]\nbase_m = 50.0\nm_per_deg_lon = 800.0\nm_per_deg_lat = 1500.0\n"
            ),
        )
    }
}
