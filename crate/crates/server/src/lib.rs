//! Read-only HTTP service over region bundles.
//!
//! Routes:
//! - `GET /regions`
//! - `GET /regions/{id}/layer?layer=..&scenario=..&n=..&order_by=..&download=1`
//! - `GET /regions/{id}/stats`
//!
//! Anything else falls through to the optional static root.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use cyclepot_core::layers::{find_region, query_layer, region_summaries, LayerError, LayerQuery, RegionSummary};
use cyclepot_core::pipeline::RegionBundle;
use cyclepot_core::scenarios::Scenario;
use cyclepot_core::schema::{Layer, RankKey};

pub const GEOJSON_MIME: &str = "application/geo+json";

struct AppState {
    bundles: Vec<RegionBundle>,
    summaries: Vec<RegionSummary>,
}

/// Builds the router. Bundles are loaded once and never mutated.
pub fn app(bundles: Vec<RegionBundle>, static_root: Option<PathBuf>) -> Router {
    let summaries = region_summaries(&bundles);
    let state = Arc::new(AppState { bundles, summaries });
    let router = Router::new()
        .route("/regions", get(list_regions))
        .route("/regions/{id}/layer", get(get_layer))
        .route("/regions/{id}/stats", get(get_stats))
        .with_state(state);
    match static_root {
        Some(root) => router.fallback_service(ServeDir::new(root)),
        None => router,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(message: impl Into<String>) -> Self {
        Self { status: StatusCode::NOT_FOUND, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<LayerError> for ApiError {
    fn from(e: LayerError) -> Self {
        match e {
            LayerError::UnknownRegion(_) => Self::not_found(e.to_string()),
            LayerError::InvalidQuery(_) => Self::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

async fn list_regions(State(state): State<Arc<AppState>>) -> Json<Vec<RegionSummary>> {
    Json(state.summaries.clone())
}

/// Raw query parameters; parsed by hand so that an unknown layer is a 404
/// while other malformed values are a 400.
#[derive(Debug, Default, Deserialize)]
pub struct LayerParams {
    pub layer: Option<String>,
    pub scenario: Option<String>,
    pub n: Option<String>,
    pub order_by: Option<String>,
    pub download: Option<String>,
}

impl LayerParams {
    pub fn to_query(&self) -> Result<LayerQuery, ApiError> {
        let layer_name = self.layer.as_deref().ok_or_else(|| ApiError::bad_request("missing `layer` parameter"))?;
        let layer: Layer = layer_name.parse().map_err(|_| ApiError::not_found(format!("unknown layer `{layer_name}`")))?;
        let mut q = LayerQuery::new(layer);
        if let Some(s) = &self.scenario {
            q.scenario = s.parse::<Scenario>().map_err(|e| ApiError::bad_request(e.to_string()))?;
        }
        if let Some(n) = &self.n {
            let n = n.parse::<usize>().map_err(|_| ApiError::bad_request(format!("n must be a positive integer, got `{n}`")))?;
            q.n = Some(n);
        }
        if let Some(k) = &self.order_by {
            q.order_by = k.parse::<RankKey>().map_err(|e| ApiError::bad_request(e.to_string()))?;
        }
        q.validate()?;
        Ok(q)
    }

    fn wants_download(&self) -> bool {
        matches!(self.download.as_deref(), Some("1") | Some("true"))
    }
}

async fn get_layer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<LayerParams>,
) -> Result<Response, ApiError> {
    let bundle = find_region(&state.bundles, &id)?;
    let query = params.to_query()?;
    let fc = query_layer(bundle, &query)?;
    let body = serde_json::to_vec(&fc).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?;
    let mut response = (StatusCode::OK, body).into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(GEOJSON_MIME));
    if params.wants_download() {
        let file = format!("{}_{}_{}.geojson", bundle.region_id, query.layer, query.scenario.name());
        let value = HeaderValue::from_str(&format!("attachment; filename=\"{file}\""))
            .expect("region ids and layer names are header-safe");
        headers.insert(header::CONTENT_DISPOSITION, value);
    }
    Ok(response)
}

async fn get_stats(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bundle = find_region(&state.bundles, &id)?;
    Ok(Json(&bundle.stats).into_response())
}
