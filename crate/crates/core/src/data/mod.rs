//! Domain model and ingestion of origin-destination tables, zones and mortality rates.

mod mortality;
mod od;
mod zones;

pub use mortality::{parse_mortality_table, MortalityRow, MortalityTable, Sex};
pub use od::{aggregate_bidirectional, parse_od_table, write_od_table, GenderSplit, OdPair};
pub use zones::{
    filter_eligible, intrazonal_nominal_distance, parse_centroids_csv, parse_zones_geojson,
    DesireLine, Partition, Thresholds, Zone, ZoneSet,
};

use thiserror::Error;

use crate::geo::GeoError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: invalid OD pair {origin} -> {dest}: {reason}")]
    Validation {
        line: u64,
        origin: String,
        dest: String,
        reason: String,
    },
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("zone {id}: {reason}")]
    Zone { id: String, reason: String },
    #[error("zone {0}: non-positive area")]
    NonPositiveArea(String),
    #[error("mortality table: {0}")]
    Mortality(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn csv_line(err: &csv::Error) -> u64 {
    err.position().map(|p| p.line()).unwrap_or(0)
}
