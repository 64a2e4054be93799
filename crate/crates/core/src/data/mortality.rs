use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{csv_line, DataError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            other => Err(format!("unknown sex `{other}`")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "male",
            Sex::Female => "female",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityRow {
    pub area_id: String,
    pub sex: Sex,
    pub age_min: u32,
    pub age_max: u32,
    /// Deaths per person-year.
    pub annual_rate: f64,
}

/// Age- and sex-specific all-cause mortality rates per area.
#[derive(Debug, Clone, Default)]
pub struct MortalityTable {
    cells: BTreeMap<(String, Sex), Vec<MortalityRow>>,
}

impl MortalityTable {
    pub fn new(rows: Vec<MortalityRow>) -> Result<Self, DataError> {
        let mut cells: BTreeMap<(String, Sex), Vec<MortalityRow>> = BTreeMap::new();
        for row in rows {
            if !(0.0..=1.0).contains(&row.annual_rate) {
                return Err(DataError::Mortality(format!(
                    "{} {} {}-{}: rate {} outside [0, 1]",
                    row.area_id, row.sex, row.age_min, row.age_max, row.annual_rate
                )));
            }
            if row.age_min > row.age_max {
                return Err(DataError::Mortality(format!(
                    "{} {}: age band {}-{} is reversed",
                    row.area_id, row.sex, row.age_min, row.age_max
                )));
            }
            let bands = cells.entry((row.area_id.clone(), row.sex)).or_default();
            if let Some(clash) = bands
                .iter()
                .find(|b| b.age_min <= row.age_max && row.age_min <= b.age_max)
            {
                return Err(DataError::Mortality(format!(
                    "{} {}: age band {}-{} overlaps {}-{}",
                    row.area_id, row.sex, row.age_min, row.age_max, clash.age_min, clash.age_max
                )));
            }
            bands.push(row);
        }
        Ok(Self { cells })
    }

    /// Rate for an exact (area, sex, band) cell.
    pub fn rate(&self, area_id: &str, sex: Sex, age_min: u32, age_max: u32) -> Option<f64> {
        self.cells
            .get(&(area_id.to_string(), sex))?
            .iter()
            .find(|r| r.age_min == age_min && r.age_max == age_max)
            .map(|r| r.annual_rate)
    }

    pub fn has_area(&self, area_id: &str) -> bool {
        self.cells.keys().any(|(a, _)| a == area_id)
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Deserialize)]
struct RawRow {
    area_id: String,
    sex: String,
    age_min: u32,
    age_max: u32,
    annual_rate: f64,
}

/// Reads `area_id,sex,age_min,age_max,annual_rate`.
pub fn parse_mortality_table<R: Read>(reader: R) -> Result<MortalityTable, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for raw in rdr.deserialize::<RawRow>() {
        let raw = raw.map_err(|e| DataError::Malformed {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        let sex = raw.sex.parse().map_err(DataError::Mortality)?;
        rows.push(MortalityRow {
            area_id: raw.area_id,
            sex,
            age_min: raw.age_min,
            age_max: raw.age_max,
            annual_rate: raw.annual_rate,
        });
    }
    MortalityTable::new(rows)
}
