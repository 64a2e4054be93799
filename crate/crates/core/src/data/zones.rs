use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{csv_line, DataError, OdPair};
use crate::geo::{self, LonLat};
use crate::geojson::{FeatureCollection, Geometry};

/// A census zone with its population-weighted centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub name: String,
    /// Polygons, each an exterior ring followed by holes.
    pub boundary: Vec<Vec<Vec<LonLat>>>,
    pub centroid: LonLat,
    pub area_km2: f64,
    /// Key into the mortality table; defaults to the zone id.
    pub mortality_area: String,
}

impl Zone {
    pub fn bbox(&self) -> Option<[f64; 4]> {
        geo::bbox(self.boundary.iter().flatten().flatten())
    }

    fn validate(&self) -> Result<(), DataError> {
        let err = |reason: String| DataError::Zone {
            id: self.id.clone(),
            reason,
        };
        if !(self.area_km2 > 0.0) {
            return Err(DataError::NonPositiveArea(self.id.clone()));
        }
        self.centroid.validate()?;
        let Some([x0, y0, x1, y1]) = self.bbox() else {
            return Err(err("empty boundary".into()));
        };
        let c = self.centroid;
        if c.lon < x0 || c.lon > x1 || c.lat < y0 || c.lat > y1 {
            return Err(err(format!(
                "centroid ({}, {}) outside boundary bounding box",
                c.lon, c.lat
            )));
        }
        Ok(())
    }
}

/// Zones of one region, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    index: HashMap<String, usize>,
}

impl ZoneSet {
    pub fn new(zones: Vec<Zone>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(zones.len());
        for (i, z) in zones.iter().enumerate() {
            z.validate()?;
            if index.insert(z.id.clone(), i).is_some() {
                return Err(DataError::Zone {
                    id: z.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self { zones, index })
    }

    pub fn get(&self, id: &str) -> Option<&Zone> {
        self.index.get(id).map(|&i| &self.zones[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Zone> {
        self.zones.iter()
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

fn ring(positions: &[[f64; 2]]) -> Result<Vec<LonLat>, DataError> {
    positions
        .iter()
        .map(|&p| Ok(LonLat::from(p).validate()?))
        .collect()
}

fn polygon(rings: &[Vec<[f64; 2]>]) -> Result<Vec<Vec<LonLat>>, DataError> {
    rings.iter().map(|r| ring(r)).collect()
}

/// Reads a zone FeatureCollection of Polygons/MultiPolygons with `id` and `name`
/// properties. Centroids come from `centroid_lon`/`centroid_lat` properties or,
/// failing that, from `centroids`. An `area_km2` property overrides the area
/// computed from the geometry; `mortality_area` optionally names the mortality key.
pub fn parse_zones_geojson<R: Read>(
    mut reader: R,
    centroids: Option<&HashMap<String, LonLat>>,
) -> Result<ZoneSet, DataError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let fc: FeatureCollection =
        serde_json::from_str(&text).map_err(|e| DataError::GeoJson(e.to_string()))?;

    let mut zones = Vec::with_capacity(fc.features.len());
    for (i, f) in fc.features.iter().enumerate() {
        let props = &f.properties;
        let id = match props.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(DataError::GeoJson(format!("feature {i} has no `id` property"))),
        };
        let name = props
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or(&id)
            .to_string();
        let boundary = match &f.geometry {
            Some(Geometry::Polygon(rings)) => vec![polygon(rings)?],
            Some(Geometry::MultiPolygon(polys)) => polys.iter().map(|p| polygon(p)).collect::<Result<_, _>>()?,
            _ => {
                return Err(DataError::Zone {
                    id,
                    reason: "geometry must be a Polygon or MultiPolygon".into(),
                })
            }
        };
        let prop_f64 = |k: &str| props.get(k).and_then(|v| v.as_f64());
        let centroid = match (prop_f64("centroid_lon"), prop_f64("centroid_lat")) {
            (Some(lon), Some(lat)) => LonLat::new(lon, lat),
            _ => *centroids.and_then(|c| c.get(&id)).ok_or_else(|| DataError::Zone {
                id: id.clone(),
                reason: "no centroid (property pair or centroid CSV row)".into(),
            })?,
        };
        let area_km2 = prop_f64("area_km2")
            .unwrap_or_else(|| boundary.iter().map(|p| geo::polygon_area_km2(p)).sum());
        let mortality_area = props
            .get("mortality_area")
            .and_then(|v| v.as_str())
            .unwrap_or(&id)
            .to_string();
        zones.push(Zone {
            id,
            name,
            boundary,
            centroid,
            area_km2,
            mortality_area,
        });
    }
    ZoneSet::new(zones)
}

#[derive(Deserialize)]
struct CentroidRow {
    id: String,
    lon: f64,
    lat: f64,
}

/// Reads a centroid CSV with header `id,lon,lat`.
pub fn parse_centroids_csv<R: Read>(reader: R) -> Result<HashMap<String, LonLat>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = HashMap::new();
    for row in rdr.deserialize::<CentroidRow>() {
        let row = row.map_err(|e| DataError::Malformed {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        out.insert(row.id, LonLat::new(row.lon, row.lat).validate()?);
    }
    Ok(out)
}

/// Nominal trip length for within-zone commuting: the radius of a circle with the
/// zone's area.
pub fn intrazonal_nominal_distance(area_km2: f64) -> Result<f64, DataError> {
    if !(area_km2 > 0.0) || !area_km2.is_finite() {
        return Err(DataError::NonPositiveArea(format!("area {area_km2}")));
    }
    Ok((area_km2 / PI).sqrt())
}

/// Straight centroid-to-centroid line for an interzonal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesireLine {
    pub od: OdPair,
    pub from: LonLat,
    pub to: LonLat,
    pub euclid_km: f64,
}

impl DesireLine {
    /// Returns `None` for intrazonal pairs, which have no line.
    pub fn new(od: OdPair, from: LonLat, to: LonLat) -> Result<Option<Self>, DataError> {
        if od.is_intrazonal() {
            return Ok(None);
        }
        let euclid_km = geo::euclidean_km(from, to)?;
        Ok(Some(Self {
            od,
            from,
            to,
            euclid_km,
        }))
    }
}

/// Line-selection thresholds. Both bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(default = "Thresholds::default_max_km")]
    pub max_euclid_km: f64,
    #[serde(default = "Thresholds::default_min_commuters")]
    pub min_commuters: u64,
}

impl Thresholds {
    fn default_max_km() -> f64 {
        20.0
    }
    fn default_min_commuters() -> u64 {
        10
    }

    pub fn admits(&self, euclid_km: f64, all: u64) -> bool {
        euclid_km <= self.max_euclid_km && all >= self.min_commuters
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_euclid_km: Self::default_max_km(),
            min_commuters: Self::default_min_commuters(),
        }
    }
}

/// How `filter_eligible` split its input. Every input pair lands in exactly one list.
#[derive(Debug, Clone, Default)]
pub struct Partition {
    pub lines: Vec<DesireLine>,
    pub intrazonal: Vec<OdPair>,
    /// Interzonal pairs failing a threshold.
    pub excluded: Vec<OdPair>,
    /// Pairs with an endpoint outside the region's zone set.
    pub outside_region: Vec<OdPair>,
}

/// Splits pairs into eligible desire lines, intrazonal flows (area statistics) and
/// exclusions. Input order is preserved within each list.
pub fn filter_eligible(
    pairs: Vec<OdPair>,
    zones: &ZoneSet,
    thresholds: &Thresholds,
) -> Result<Partition, DataError> {
    let mut out = Partition::default();
    for od in pairs {
        let (Some(o), Some(d)) = (zones.get(&od.origin), zones.get(&od.dest)) else {
            out.outside_region.push(od);
            continue;
        };
        if od.is_intrazonal() {
            out.intrazonal.push(od);
            continue;
        }
        let (from, to) = (o.centroid, d.centroid);
        let line = DesireLine::new(od, from, to)?.expect("interzonal pair");
        if thresholds.admits(line.euclid_km, line.od.all) {
            out.lines.push(line);
        } else {
            out.excluded.push(line.od);
        }
    }
    Ok(out)
}
