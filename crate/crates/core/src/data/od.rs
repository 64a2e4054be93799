use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{csv_line, DataError};

const BASE_HEADER: [&str; 7] = ["origin", "dest", "all", "cycle", "walk", "car", "other"];
const GENDER_HEADER: [&str; 4] = ["male_all", "male_cycle", "female_all", "female_cycle"];
const COLUMNS: [&str; 11] = [
    "origin", "dest", "all", "cycle", "walk", "car", "other", "male_all", "male_cycle", "female_all",
    "female_cycle",
];

/// Commuter counts split by sex, for the Gender Equality scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderSplit {
    pub male_all: u64,
    pub male_cycle: u64,
    pub female_all: u64,
    pub female_cycle: u64,
}

impl GenderSplit {
    fn add(self, other: Self) -> Self {
        Self {
            male_all: self.male_all + other.male_all,
            male_cycle: self.male_cycle + other.male_cycle,
            female_all: self.female_all + other.female_all,
            female_cycle: self.female_cycle + other.female_cycle,
        }
    }
}

/// Commuters between two zones by main mode. `car` counts drivers only;
/// car passengers are in `other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: String,
    pub dest: String,
    pub all: u64,
    pub cycle: u64,
    pub walk: u64,
    pub car: u64,
    pub other: u64,
    pub gender: Option<GenderSplit>,
}

impl OdPair {
    pub fn is_intrazonal(&self) -> bool {
        self.origin == self.dest
    }

    /// Checks the count invariants, returning a human-readable reason on failure.
    pub fn check(&self) -> Result<(), String> {
        let sum = self.cycle + self.walk + self.car + self.other;
        if sum != self.all {
            return Err(format!(
                "mode counts sum to {sum} ({}+{}+{}+{}) but all = {}",
                self.cycle, self.walk, self.car, self.other, self.all
            ));
        }
        if let Some(g) = self.gender {
            if g.male_all + g.female_all != self.all {
                return Err(format!(
                    "male_all + female_all = {} but all = {}",
                    g.male_all + g.female_all,
                    self.all
                ));
            }
            if g.male_cycle + g.female_cycle != self.cycle {
                return Err(format!(
                    "male_cycle + female_cycle = {} but cycle = {}",
                    g.male_cycle + g.female_cycle,
                    self.cycle
                ));
            }
            if g.male_cycle > g.male_all || g.female_cycle > g.female_all {
                return Err("gender cyclists exceed gender totals".into());
            }
        }
        Ok(())
    }

    fn merge(&mut self, other: &OdPair) {
        self.all += other.all;
        self.cycle += other.cycle;
        self.walk += other.walk;
        self.car += other.car;
        self.other += other.other;
        self.gender = match (self.gender, other.gender) {
            (Some(a), Some(b)) => Some(a.add(b)),
            _ => None,
        };
    }
}

fn parse_count(field: &str, column: &str, line: u64, origin: &str, dest: &str) -> Result<u64, DataError> {
    let value: i64 = field.trim().parse().map_err(|_| DataError::Malformed {
        line,
        reason: format!("column `{column}`: `{field}` is not an integer"),
    })?;
    u64::try_from(value).map_err(|_| DataError::Validation {
        line,
        origin: origin.to_string(),
        dest: dest.to_string(),
        reason: format!("negative count {value} in column `{column}`"),
    })
}

/// Reads an OD table. The header must be exactly
/// `origin,dest,all,cycle,walk,car,other` optionally followed by
/// `male_all,male_cycle,female_all,female_cycle`.
pub fn parse_od_table<R: Read>(reader: R) -> Result<Vec<OdPair>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Malformed {
        line: csv_line(&e).max(1),
        reason: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    let with_gender = if found == BASE_HEADER {
        false
    } else if found.len() == 11 && found[..7] == BASE_HEADER && found[7..] == GENDER_HEADER {
        true
    } else {
        return Err(DataError::Header {
            expected: format!("{}[,{}]", BASE_HEADER.join(","), GENDER_HEADER.join(",")),
            found: found.join(","),
        });
    };

    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let origin = record[0].trim().to_string();
        let dest = record[1].trim().to_string();
        if origin.is_empty() || dest.is_empty() {
            return Err(DataError::Malformed {
                line,
                reason: "empty zone id".into(),
            });
        }
        let count = |i: usize| parse_count(&record[i], COLUMNS[i], line, &origin, &dest);
        let gender = if with_gender {
            Some(GenderSplit {
                male_all: count(7)?,
                male_cycle: count(8)?,
                female_all: count(9)?,
                female_cycle: count(10)?,
            })
        } else {
            None
        };
        let pair = OdPair {
            all: count(2)?,
            cycle: count(3)?,
            walk: count(4)?,
            car: count(5)?,
            other: count(6)?,
            origin,
            dest,
            gender,
        };
        pair.check().map_err(|reason| DataError::Validation {
            line,
            origin: pair.origin.clone(),
            dest: pair.dest.clone(),
            reason,
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes pairs in the same format `parse_od_table` reads. Gender columns are
/// written only when every pair carries a split.
pub fn write_od_table<W: Write>(pairs: &[OdPair], writer: W) -> Result<(), DataError> {
    let with_gender = !pairs.is_empty() && pairs.iter().all(|p| p.gender.is_some());
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<&str> = BASE_HEADER.to_vec();
    if with_gender {
        header.extend(GENDER_HEADER);
    }
    let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    wtr.write_record(&header).map_err(io)?;
    for p in pairs {
        let mut row = vec![
            p.origin.clone(),
            p.dest.clone(),
            p.all.to_string(),
            p.cycle.to_string(),
            p.walk.to_string(),
            p.car.to_string(),
            p.other.to_string(),
        ];
        if let (true, Some(g)) = (with_gender, p.gender) {
            row.extend([g.male_all, g.male_cycle, g.female_all, g.female_cycle].map(|v| v.to_string()));
        }
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Sums flows in both directions into one pair per unordered zone pair, oriented
/// with the lexicographically smaller id first. Output is sorted by (origin, dest),
/// so the result does not depend on input order.
pub fn aggregate_bidirectional(pairs: &[OdPair]) -> Vec<OdPair> {
    let mut merged: BTreeMap<(String, String), OdPair> = BTreeMap::new();
    for p in pairs {
        let (a, b) = if p.origin <= p.dest {
            (p.origin.clone(), p.dest.clone())
        } else {
            (p.dest.clone(), p.origin.clone())
        };
        match merged.get_mut(&(a.clone(), b.clone())) {
            Some(existing) => existing.merge(p),
            None => {
                let mut canonical = p.clone();
                canonical.origin = a.clone();
                canonical.dest = b.clone();
                merged.insert((a, b), canonical);
            }
        }
    }
    merged.into_values().collect()
}
