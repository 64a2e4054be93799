//! The small subset of GeoJSON the bundle reads and writes.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::geo::LonLat;

pub type Properties = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
pub enum Geometry {
    Point([f64; 2]),
    LineString(Vec<[f64; 2]>),
    Polygon(Vec<Vec<[f64; 2]>>),
    MultiPolygon(Vec<Vec<Vec<[f64; 2]>>>),
}

impl Geometry {
    pub fn line(coords: &[LonLat]) -> Self {
        Geometry::LineString(coords.iter().map(|p| p.to_array()).collect())
    }

    pub fn point(p: LonLat) -> Self {
        Geometry::Point(p.to_array())
    }

    /// Every position in the geometry.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        match self {
            Geometry::Point(p) => vec![*p],
            Geometry::LineString(l) => l.clone(),
            Geometry::Polygon(rings) => rings.iter().flatten().copied().collect(),
            Geometry::MultiPolygon(polys) => polys.iter().flatten().flatten().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum FeatureTag {
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum CollectionTag {
    FeatureCollection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    #[serde(rename = "type")]
    tag: FeatureTag,
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub properties: Properties,
}

impl Feature {
    pub fn new(geometry: Geometry, properties: Properties) -> Self {
        Self {
            tag: FeatureTag::Feature,
            geometry: Some(geometry),
            properties,
        }
    }

    pub fn prop_f64(&self, key: &str) -> Option<f64> {
        self.properties.get(key).and_then(Value::as_f64)
    }

    pub fn prop_str(&self, key: &str) -> Option<&str> {
        self.properties.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCollection {
    #[serde(rename = "type")]
    tag: CollectionTag,
    pub features: Vec<Feature>,
}

impl FeatureCollection {
    pub fn new(features: Vec<Feature>) -> Self {
        Self {
            tag: CollectionTag::FeatureCollection,
            features,
        }
    }

    pub fn bbox(&self) -> Option<[f64; 4]> {
        let pts: Vec<LonLat> = self
            .features
            .iter()
            .filter_map(|f| f.geometry.as_ref())
            .flat_map(|g| g.positions())
            .map(LonLat::from)
            .collect();
        crate::geo::bbox(&pts)
    }
}

/// Inserts a float property; non-finite values become `null`.
pub fn put_f64(props: &mut Properties, key: &str, value: f64) {
    props.insert(
        key.to_string(),
        serde_json::Number::from_f64(value).map_or(Value::Null, Value::Number),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_writes_standard_shape() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"LineString","coordinates":[[0.0,1.0],[2.0,3.0]]},"properties":{"a":1}}]}"#;
        let fc: FeatureCollection = serde_json::from_str(text).unwrap();
        assert_eq!(fc.features[0].prop_f64("a"), Some(1.0));
        assert_eq!(fc.bbox(), Some([0.0, 1.0, 2.0, 3.0]));
        let back = serde_json::to_string(&fc).unwrap();
        assert_eq!(back, text);
        assert!(serde_json::from_str::<FeatureCollection>(r#"{"type":"Feature","features":[]}"#).is_err());
    }
}
