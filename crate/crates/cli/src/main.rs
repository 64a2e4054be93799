use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cyclepot_core::data::Thresholds;
use cyclepot_core::model::{FitOptions, TermMask};
use cyclepot_core::pipeline::{
    build_region, configured_backend, fit_from_cache, route_region_with, BackendKind, PipelineError, RegionBundle,
    RegionConfig, Stage,
};
use cyclepot_core::synthetic::{reference_coefficients, region, RegionSpec};

#[derive(Debug, Parser)]
#[command(name = "cyclepot", version, about = "Cycling potential region builds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Backend {
    Stub,
    Service,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Stub => BackendKind::Stub,
            Backend::Service => BackendKind::Service,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a region bundle.
    Build {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the uptake model from an OD table and a route cache.
    Fit {
        #[arg(long)]
        od: PathBuf,
        /// Route cache directory filled by `route` or `build`.
        #[arg(long)]
        routes: PathBuf,
        /// Coefficient file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        max_euclid_km: f64,
        #[arg(long, default_value_t = 10)]
        min_commuters: u64,
        /// Hold a term at zero; repeatable.
        #[arg(long = "exclude-term")]
        exclude_terms: Vec<String>,
    },
    /// Route every eligible line of a region into its route cache.
    Route {
        /// Region configuration supplying zones, thresholds and routing settings.
        #[arg(long)]
        config: PathBuf,
        /// OD table, overriding the configured one.
        #[arg(long)]
        od: Option<PathBuf>,
        /// Backend, overriding the configured one.
        #[arg(long, value_enum)]
        backend: Option<Backend>,
    },
    /// Print the diagnostics of a built bundle.
    Stats {
        #[arg(long)]
        bundle: PathBuf,
        /// Print the full stats document as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic region with a ready-to-build configuration.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        region_id: String,
        /// Zones per side of the square grid.
        #[arg(long, default_value_t = 4)]
        side: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<String, PipelineError> {
    let mut out = String::new();
    match command {
        Command::Build { config } => {
            let config = RegionConfig::load(&config)?;
            let s = build_region(&config)?;
            writeln!(out, "built {}", s.bundle_dir.display()).unwrap();
            writeln!(
                out,
                "lines {}, intrazonal {}, excluded {}, outside region {}, routing errors {}",
                s.lines, s.intrazonal, s.excluded, s.outside_region, s.routing_errors
            )
            .unwrap();
        }
        Command::Fit { od, routes, out: path, max_euclid_km, min_commuters, exclude_terms } => {
            let mask = TermMask::excluding(&exclude_terms).map_err(|e| PipelineError::new(Stage::Config, e))?;
            let thresholds = Thresholds { max_euclid_km, min_commuters };
            let fit = fit_from_cache(&od, &routes, &thresholds, &FitOptions { mask, ..Default::default() })?;
            fs::write(&path, fit.report.coefficients.to_toml_string())
                .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", path.display())))?;
            writeln!(out, "wrote {}", path.display()).unwrap();
            writeln!(
                out,
                "{} pairs ({} unrouted), {} iterations, log-likelihood {:.6}",
                fit.used, fit.unrouted, fit.report.iterations, fit.report.log_likelihood
            )
            .unwrap();
            if !fit.report.dropped_terms.is_empty() {
                writeln!(out, "dropped terms: {}", fit.report.dropped_terms.join(", ")).unwrap();
            }
        }
        Command::Route { config, od, backend } => {
            let mut config = RegionConfig::load(&config)?;
            if let Some(od) = od {
                config.inputs.od = od;
            }
            if let Some(b) = backend {
                config.routing.backend = b.into();
            }
            let s = route_region_with(&config, configured_backend(&config)?)?;
            writeln!(
                out,
                "{} lines, {} routes in {}",
                s.lines,
                s.routes,
                config.routing.cache_dir.display()
            )
            .unwrap();
            for e in &s.errors {
                writeln!(out, "failed: {e}").unwrap();
            }
        }
        Command::Stats { bundle, json } => {
            let b = RegionBundle::load(&bundle)?;
            if json {
                out = serde_json::to_string_pretty(&b.stats).map_err(|e| PipelineError::new(Stage::Stats, e))?;
                out.push('\n');
            } else {
                write_stats(&mut out, &b);
            }
        }
        Command::Synth { out: dir, region_id, side, seed } => {
            if side < 2 {
                return Err(PipelineError::new(Stage::Config, "side must be at least 2"));
            }
            let spec = RegionSpec { side, seed, ..Default::default() };
            region(&spec, &reference_coefficients())
                .write_to(&dir, &region_id)
                .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", dir.display())))?;
            writeln!(out, "wrote {}", dir.join("region.toml").display()).unwrap();
        }
    }
    Ok(out)
}

fn write_stats(out: &mut String, b: &RegionBundle) {
    let s = &b.stats;
    writeln!(out, "region {}", s.region_id).unwrap();
    writeln!(out, "coefficients ({})", s.coefficient_source).unwrap();
    for (name, value) in cyclepot_core::model::TERM_NAMES.iter().zip(s.coefficients.to_array()) {
        writeln!(out, "  {name:<8} {value:>12.6}").unwrap();
    }
    let c = &s.counts;
    writeln!(
        out,
        "lines {}, intrazonal {}, excluded {}, outside region {}, routing errors {}",
        c.lines, c.intrazonal, c.excluded, c.outside_region, c.routing_errors
    )
    .unwrap();
    writeln!(out, "{:<12} {:>12} {:>14} {:>12} {:>10}", "scenario", "cyclists", "health_value", "co2_kg", "deaths").unwrap();
    for (scenario, t) in &s.totals {
        writeln!(
            out,
            "{:<12} {:>12.1} {:>14.0} {:>12.0} {:>10.4}",
            scenario.name(),
            t.cyclists,
            t.health_value,
            t.co2_saved,
            t.net_deaths_avoided
        )
        .unwrap();
    }
    writeln!(out, "cycling share by distance band").unwrap();
    for row in &s.distance_distribution {
        let hi = row.band_max_km.map_or("inf".to_string(), |h| h.to_string());
        writeln!(
            out,
            "  ({}, {}] {:<12} {:>8.0} trips {:>7.4}",
            row.band_min_km,
            hi,
            row.scenario.name(),
            row.trips,
            row.share
        )
        .unwrap();
    }
}
