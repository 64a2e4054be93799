//! Cycling potential modelling for commuter origin-destination data.
//!
//! The crate covers the whole regional build: OD ingestion and line selection
//! ([`data`]), the distance/hilliness uptake model ([`model`]), scenario levels of
//! cycling ([`scenarios`]), health and carbon impacts ([`impacts`]), route
//! acquisition ([`routing`]), route-network aggregation ([`netagg`]), the region
//! pipeline and its on-disk bundle ([`pipeline`]) and the map-layer queries served
//! over HTTP ([`layers`]).

pub mod data;
pub mod geo;
pub mod model;
pub mod geojson;
pub mod synthetic;
pub mod scenarios;
pub mod impacts;
pub mod routing;
pub mod netagg;
pub mod schema;
pub mod pipeline;
pub mod layers;
