use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use cyclepot_core::geo::LonLat;
use cyclepot_core::routing::{
    route_batch, Profile, RouteBackend, RouteRequest, RoutingError, ServiceBackend, ServiceConfig,
};

/// Serves the canned `(status, body)` replies in turn, reporting each request line.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/route", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap() > 2 {
                line.clear();
            }
            tx.send(request_line.trim().to_string()).unwrap();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn request(profile: Profile) -> RouteRequest {
    RouteRequest {
        origin: "A".into(),
        dest: "B".into(),
        from: LonLat::new(-1.55, 53.8),
        to: LonLat::new(-1.53, 53.8),
        profile,
    }
}

fn config(url: String) -> ServiceConfig {
    ServiceConfig {
        base_url: url,
        api_key: Some("k1".into()),
        requests_per_second: 50.0,
        timeout_s: 5.0,
    }
}

const OK_BODY: &str = r#"{"coordinates":[[-1.55,53.8],[-1.54,53.8],[-1.53,53.8]],"distance_m":1400.0,"elevations_m":[40.0,44.0,41.0]}"#;

#[test]
fn sends_wire_contract_and_parses_response() {
    let (url, rx) = serve(vec![(200, OK_BODY)]);
    let backend = ServiceBackend::new(config(url)).unwrap();
    let route = backend.route(&request(Profile::Quiet)).unwrap();
    let line = rx.recv().unwrap();
    assert!(line.starts_with("GET /route?"), "{line}");
    assert!(line.contains("plan=quietest"), "{line}");
    assert!(line.contains("points=-1.55%2C53.8%7C-1.53%2C53.8"), "{line}");
    assert!(line.contains("key=k1"), "{line}");
    assert_eq!(route.distance_km, 1.4);
    assert!((route.gradient_pct - 100.0 * 7.0 / 1400.0).abs() < 1e-12);
}

#[test]
fn quota_and_malformed_responses_are_distinguished() {
    let (url, _rx) = serve(vec![
        (429, "{}"),
        (200, r#"{"distance_m":10}"#),
        (503, "down"),
    ]);
    let backend = ServiceBackend::new(config(url)).unwrap();
    assert!(matches!(backend.fetch(&request(Profile::Fast)), Err(RoutingError::Throttled)));
    match backend.fetch(&request(Profile::Fast)) {
        Err(RoutingError::Parse { excerpt, .. }) => assert_eq!(excerpt, r#"{"distance_m":10}"#),
        other => panic!("{other:?}"),
    }
    let err = backend.fetch(&request(Profile::Fast)).unwrap_err();
    assert!(err.is_retriable(), "{err}");
}

#[test]
fn unreachable_service_is_retriable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = ServiceBackend::new(config(format!("http://127.0.0.1:{port}/route"))).unwrap();
    let err = backend.fetch(&request(Profile::Fast)).unwrap_err();
    assert!(matches!(err, RoutingError::Network(_)), "{err}");
}

#[test]
fn rate_limit_spaces_requests() {
    let (url, _rx) = serve(vec![(200, OK_BODY); 4]);
    let backend = ServiceBackend::new(ServiceConfig { requests_per_second: 20.0, ..config(url) }).unwrap();
    let reqs: Vec<_> = (0..4).map(|_| request(Profile::Fast)).collect();
    let start = Instant::now();
    let results = route_batch(&backend, &reqs, 4);
    assert_eq!(results.len(), 4);
    assert!(results.iter().all(Result::is_ok));
    // Four requests at 20/s need at least three 50 ms gaps.
    assert!(start.elapsed().as_millis() >= 150, "{:?}", start.elapsed());
}
