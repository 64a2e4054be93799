use std::fs;
use std::path::Path;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use cyclepot_core::geojson::FeatureCollection;
use cyclepot_core::model::ModelCoefficients;
use cyclepot_core::pipeline::{build_region, discover_bundles, distance_distribution, DistanceRow, RegionConfig, StatsDocument};
use cyclepot_core::scenarios::Scenario;
use cyclepot_core::schema::{validate_feature, Layer};
use cyclepot_core::synthetic::{reference_coefficients, region, RegionSpec};
use cyclepot_server::{app, GEOJSON_MIME};

fn build_into(root: &Path, id: &str, spec: &RegionSpec) {
    let src = root.join(format!("src-{id}"));
    region(spec, &reference_coefficients()).write_to(&src, id).unwrap();
    let mut config = RegionConfig::load(&src.join("region.toml")).unwrap();
    config.output_dir = root.join("bundles");
    build_region(&config).unwrap();
}

fn fixture(ids: &[&str]) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("bundles")).unwrap();
    for (i, id) in ids.iter().enumerate() {
        let spec = RegionSpec { seed: 11 + i as u64, ..Default::default() };
        build_into(dir.path(), id, &spec);
    }
    let bundles = discover_bundles(&dir.path().join("bundles")).unwrap();
    (dir, app(bundles, None))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn get_json(app: &Router, uri: &str) -> serde_json::Value {
    let (status, _, body) = get(app, uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn region_listing_is_sorted_and_stable() {
    let (_dir, app) = fixture(&["north", "east"]);
    let first = get_json(&app, "/regions").await;
    let ids: Vec<&str> = first.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["east", "north"]);
    for r in first.as_array().unwrap() {
        assert_eq!(r["bbox"].as_array().unwrap().len(), 4);
    }
    assert_eq!(first, get_json(&app, "/regions").await);
}

#[tokio::test]
async fn empty_bundle_dir_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(discover_bundles(dir.path()).unwrap(), None);
    assert_eq!(get_json(&app, "/regions").await, serde_json::json!([]));
}

#[tokio::test]
async fn layers_validate_and_requests_are_idempotent() {
    let (_dir, app) = fixture(&["synth"]);
    for layer in Layer::ALL {
        for s in [Scenario::Baseline, Scenario::GoDutch, Scenario::Ebikes] {
            let uri = format!("/regions/synth/layer?layer={layer}&scenario={}", s.name());
            let (status, headers, body) = get(&app, &uri).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(headers[header::CONTENT_TYPE], GEOJSON_MIME);
            assert!(headers.get(header::CONTENT_DISPOSITION).is_none());
            let fc: FeatureCollection = serde_json::from_slice(&body).unwrap();
            assert!(!fc.features.is_empty());
            for f in &fc.features {
                validate_feature(layer, f).unwrap();
            }
            assert_eq!(body, get(&app, &uri).await.2);
        }
    }
}

#[tokio::test]
async fn zones_carry_intrazonal_rate_and_network_carries_dutch() {
    let (_dir, app) = fixture(&["synth"]);
    let zones: FeatureCollection =
        serde_json::from_value(get_json(&app, "/regions/synth/layer?layer=zones").await).unwrap();
    let regions = get_json(&app, "/regions").await;
    assert_eq!(zones.features.len() as u64, regions[0]["zones"].as_u64().unwrap());
    assert!(zones.features.iter().all(|z| z.prop_f64("intrazonal_rate").is_some()));

    let net: FeatureCollection =
        serde_json::from_value(get_json(&app, "/regions/synth/layer?layer=network&scenario=godutch").await).unwrap();
    assert!(net.features.iter().all(|f| f.prop_f64("dutch_slc").is_some()));
}

#[tokio::test]
async fn top_n_is_applied_server_side() {
    let (_dir, app) = fixture(&["synth"]);
    for (key, prop) in [("slc", "dutch_slc"), ("health_value", "dutch_health_value"), ("co2_saved", "dutch_co2_saved")] {
        let uri = format!("/regions/synth/layer?layer=straight_lines&scenario=godutch&n=6&order_by={key}");
        let fc: FeatureCollection = serde_json::from_value(get_json(&app, &uri).await).unwrap();
        assert_eq!(fc.features.len(), 6);
        let v: Vec<f64> = fc.features.iter().map(|f| f.prop_f64(prop).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[0] >= w[1]), "{key}: {v:?}");
    }
}

#[tokio::test]
async fn error_statuses() {
    let (_dir, app) = fixture(&["synth"]);
    let cases = [
        ("/regions/nowhere/layer?layer=zones", StatusCode::NOT_FOUND),
        ("/regions/nowhere/stats", StatusCode::NOT_FOUND),
        ("/regions/synth/layer?layer=tiles", StatusCode::NOT_FOUND),
        ("/regions/synth/layer", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=straight_lines&order_by=health_value", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=network&scenario=godutch&order_by=co2_saved", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=straight_lines&n=0", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=straight_lines&n=-2", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=zones&scenario=utopia", StatusCode::BAD_REQUEST),
        ("/regions/synth/layer?layer=zones&order_by=fame", StatusCode::BAD_REQUEST),
    ];
    for (uri, want) in cases {
        let (status, _, body) = get(&app, uri).await;
        assert_eq!(status, want, "{uri}");
        let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(err["error"].is_string(), "{uri}");
    }
}

#[tokio::test]
async fn download_forces_attachment() {
    let (_dir, app) = fixture(&["synth"]);
    let plain = get(&app, "/regions/synth/layer?layer=fast_routes&scenario=godutch").await;
    let (status, headers, body) = get(&app, "/regions/synth/layer?layer=fast_routes&scenario=godutch&download=1").await;
    assert_eq!(status, StatusCode::OK);
    let disposition = headers[header::CONTENT_DISPOSITION].to_str().unwrap();
    assert!(disposition.starts_with("attachment;"), "{disposition}");
    assert!(disposition.contains("synth_fast_routes_godutch.geojson"));
    assert_eq!(body, plain.2);
}

#[tokio::test]
async fn stats_document_matches_recomputation() {
    let (dir, app) = fixture(&["synth"]);
    let stats: StatsDocument = serde_json::from_value(get_json(&app, "/regions/synth/stats").await).unwrap();
    assert_eq!(stats.band_edges_km.first(), Some(&0.0));
    assert_eq!(stats.band_edges_km.last(), Some(&30.0));
    let echoed = fs::read_to_string(dir.path().join("bundles/synth/coefficients.toml")).unwrap();
    assert_eq!(stats.coefficients, ModelCoefficients::from_toml_str(&echoed).unwrap());

    let lines: FeatureCollection =
        serde_json::from_value(get_json(&app, "/regions/synth/layer?layer=straight_lines").await).unwrap();
    let rows: Vec<DistanceRow> = lines
        .features
        .iter()
        .map(|l| DistanceRow {
            d_km: l.prop_f64("distance_km").unwrap(),
            all: l.prop_f64("all").unwrap(),
            slc: stats.scenarios.iter().map(|&s| (s, l.prop_f64(&s.slc_property()).unwrap())).collect(),
        })
        .collect();
    let recomputed = distance_distribution(&rows, &stats.scenarios, &stats.band_edges_km).unwrap();
    assert_eq!(recomputed, stats.distance_distribution);
}

#[tokio::test]
async fn static_root_serves_ui_files() {
    let (dir, _) = fixture(&[]);
    let ui = dir.path().join("ui");
    fs::create_dir_all(&ui).unwrap();
    fs::write(ui.join("index.html"), "<p>map</p>").unwrap();
    let app = app(discover_bundles(&dir.path().join("bundles")).unwrap(), Some(ui));
    let (status, _, body) = get(&app, "/index.html").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<p>map</p>");
    assert_eq!(get_json(&app, "/regions").await, serde_json::json!([]));
}
