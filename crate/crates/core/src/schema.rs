//! Layer names and the property-name contract of every served feature.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geojson::{Feature, Geometry};
use crate::scenarios::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Zones,
    StraightLines,
    FastRoutes,
    QuietRoutes,
    Network,
    Centroids,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::Zones,
        Layer::StraightLines,
        Layer::FastRoutes,
        Layer::QuietRoutes,
        Layer::Network,
        Layer::Centroids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Zones => "zones",
            Layer::StraightLines => "straight_lines",
            Layer::FastRoutes => "fast_routes",
            Layer::QuietRoutes => "quiet_routes",
            Layer::Network => "network",
            Layer::Centroids => "centroids",
        }
    }

    /// Bundle file holding the layer.
    pub fn file_name(self) -> &'static str {
        match self {
            Layer::Zones => "zones.geojson",
            Layer::StraightLines => "lines.geojson",
            Layer::FastRoutes => "routes_fast.geojson",
            Layer::QuietRoutes => "routes_quiet.geojson",
            Layer::Network => "network.geojson",
            Layer::Centroids => "centroids.geojson",
        }
    }

    /// Layers whose features are individual OD flows.
    pub fn is_line_layer(self) -> bool {
        matches!(self, Layer::StraightLines | Layer::FastRoutes | Layer::QuietRoutes)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layer::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown layer `{s}`"))
    }
}

/// Quantity lines can be ordered by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    #[default]
    Slc,
    HealthValue,
    Co2Saved,
}

impl RankKey {
    pub fn name(self) -> &'static str {
        match self {
            RankKey::Slc => "slc",
            RankKey::HealthValue => "health_value",
            RankKey::Co2Saved => "co2_saved",
        }
    }

    /// Property holding this quantity under `scenario`. Impact keys have no
    /// baseline property.
    pub fn property(self, scenario: Scenario) -> Option<String> {
        match self {
            RankKey::Slc => Some(scenario.slc_property()),
            _ if scenario == Scenario::Baseline => None,
            key => Some(impact_property(scenario, key.name())),
        }
    }
}

impl FromStr for RankKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slc" => Ok(RankKey::Slc),
            "health_value" => Ok(RankKey::HealthValue),
            "co2_saved" => Ok(RankKey::Co2Saved),
            other => Err(format!("unknown ordering key `{other}`")),
        }
    }
}

/// Impact quantities written per non-baseline scenario.
pub const IMPACT_FIELDS: [&str; 3] = ["health_value", "co2_saved", "net_deaths_avoided"];

/// `<prefix>_<field>`, e.g. `dutch_health_value`.
pub fn impact_property(scenario: Scenario, field: &str) -> String {
    format!("{}_{field}", scenario.prefix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Number,
    Text,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertySpec {
    pub name: String,
    pub kind: Kind,
    pub required: bool,
    pub nullable: bool,
}

fn spec(name: impl Into<String>, kind: Kind) -> PropertySpec {
    PropertySpec { name: name.into(), kind, required: true, nullable: false }
}

/// Scenario volumes and impacts. Gender Equality needs gender-split input, so its
/// properties may be absent.
fn scenario_specs() -> Vec<PropertySpec> {
    let mut out = Vec::new();
    for s in Scenario::ALL {
        let required = s != Scenario::GenderEqual;
        out.push(PropertySpec { required, ..spec(s.slc_property(), Kind::Number) });
        if s != Scenario::Baseline {
            for field in IMPACT_FIELDS {
                out.push(PropertySpec { required, ..spec(impact_property(s, field), Kind::Number) });
            }
        }
    }
    out
}

fn count_specs() -> Vec<PropertySpec> {
    ["all", "cycle", "walk", "car", "other"]
        .into_iter()
        .map(|n| spec(n, Kind::Number))
        .collect()
}

/// Properties every feature of `layer` carries.
pub fn layer_schema(layer: Layer) -> Vec<PropertySpec> {
    let mut out = Vec::new();
    match layer {
        Layer::Zones | Layer::Centroids => {
            out.push(spec("id", Kind::Text));
            out.push(spec("name", Kind::Text));
            out.extend(count_specs());
            for n in ["intrazonal_all", "intrazonal_cycle", "intrazonal_rate"] {
                out.push(spec(n, Kind::Number));
            }
            out.extend(scenario_specs());
        }
        Layer::StraightLines | Layer::FastRoutes | Layer::QuietRoutes => {
            for n in ["id", "origin", "dest", "distance_source"] {
                out.push(spec(n, Kind::Text));
            }
            out.extend(count_specs());
            for n in ["euclid_km", "distance_km", "hilliness_pct"] {
                out.push(spec(n, Kind::Number));
            }
            let nullable_num = |n: &str| PropertySpec { nullable: true, ..spec(n, Kind::Number) };
            out.push(nullable_num("fast_km"));
            out.push(nullable_num("quiet_km"));
            out.push(nullable_num("circuity_fast"));
            out.push(nullable_num("circuity_quiet"));
            out.push(PropertySpec { nullable: true, ..spec("crow_exceeded", Kind::Bool) });
            out.push(PropertySpec { required: false, ..spec("routing_error", Kind::Text) });
            out.extend(scenario_specs());
            if layer != Layer::StraightLines {
                out.push(spec("profile", Kind::Text));
                out.push(spec("route_km", Kind::Number));
                out.push(spec("gradient_pct", Kind::Number));
                out.push(spec("circuity", Kind::Number));
            }
        }
        Layer::Network => {
            out.push(spec("id", Kind::Number));
            out.push(spec("length_km", Kind::Number));
            for s in Scenario::ALL {
                out.push(PropertySpec {
                    required: s != Scenario::GenderEqual,
                    ..spec(s.slc_property(), Kind::Number)
                });
            }
        }
    }
    out
}

/// Checks geometry type and properties of a feature against the layer schema.
pub fn validate_feature(layer: Layer, feature: &Feature) -> Result<(), String> {
    let geometry_ok = match (&feature.geometry, layer) {
        (Some(Geometry::Polygon(_) | Geometry::MultiPolygon(_)), Layer::Zones) => true,
        (Some(Geometry::Point(_)), Layer::Centroids) => true,
        (Some(Geometry::LineString(c)), l) if l.is_line_layer() || l == Layer::Network => c.len() >= 2,
        _ => false,
    };
    if !geometry_ok {
        return Err(format!("{layer}: unexpected geometry {:?}", feature.geometry.as_ref().map(|g| g.positions().len())));
    }
    for p in layer_schema(layer) {
        match feature.properties.get(&p.name) {
            None if p.required => return Err(format!("{layer}: missing property `{}`", p.name)),
            None => {}
            Some(Value::Null) if p.nullable => {}
            Some(v) => {
                let ok = match p.kind {
                    Kind::Number => v.is_number(),
                    Kind::Text => v.is_string(),
                    Kind::Bool => v.is_boolean(),
                };
                if !ok {
                    return Err(format!("{layer}: property `{}` has wrong type: {v}", p.name));
                }
            }
        }
    }
    Ok(())
}
