use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Profile, RouteBackend, RouteDocument, RouteRequest, RoutingError};

/// Directory of route documents, one file per `<origin>_<dest>_<profile>`.
#[derive(Debug, Clone)]
pub struct RouteCache {
    dir: PathBuf,
}

/// Keeps ids readable while making them safe as file-name parts: anything but
/// ASCII letters, digits, `-` and `.` becomes `%XX`.
fn encode(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || (b == b'.' && !id.starts_with('.')) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl RouteCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, RoutingError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| RoutingError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, req: &RouteRequest) -> PathBuf {
        self.path_for_pair(&req.origin, &req.dest, req.profile)
    }

    pub fn path_for_pair(&self, origin: &str, dest: &str, profile: Profile) -> PathBuf {
        self.dir.join(format!("{}_{}_{}", encode(origin), encode(dest), profile))
    }

    pub fn load(&self, req: &RouteRequest) -> Result<Option<RouteDocument>, RoutingError> {
        self.load_pair(&req.origin, &req.dest, req.profile)
    }

    pub fn load_pair(&self, origin: &str, dest: &str, profile: Profile) -> Result<Option<RouteDocument>, RoutingError> {
        let path = self.path_for_pair(origin, dest, profile);
        match fs::read_to_string(&path) {
            Ok(text) => RouteDocument::from_json(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(RoutingError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes to a temporary file in the cache directory, then renames it into place.
    pub fn store(&self, req: &RouteRequest, doc: &RouteDocument) -> Result<(), RoutingError> {
        let path = self.path_for(req);
        let err = |e: &dyn std::fmt::Display| RoutingError::Cache(format!("{}: {e}", path.display()));
        let text = serde_json::to_string(doc).map_err(|e| err(&e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| err(&e))?;
        tmp.write_all(text.as_bytes()).map_err(|e| err(&e))?;
        tmp.persist(&path).map_err(|e| err(&e.error))?;
        Ok(())
    }
}

/// Serves from the cache when possible and caches whatever the inner backend returns.
pub struct CachedBackend<B> {
    pub cache: RouteCache,
    pub inner: B,
}

impl<B: RouteBackend> RouteBackend for CachedBackend<B> {
    fn fetch(&self, req: &RouteRequest) -> Result<RouteDocument, RoutingError> {
        if let Some(doc) = self.cache.load(req)? {
            return Ok(doc);
        }
        let doc = self.inner.fetch(req)?;
        self.cache.store(req, &doc)?;
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LonLat;
    use crate::routing::{Profile, Route, StubBackend};

    struct Offline;

    impl RouteBackend for Offline {
        fn fetch(&self, _: &RouteRequest) -> Result<RouteDocument, RoutingError> {
            panic!("network used despite cached fixture");
        }
    }

    fn req() -> RouteRequest {
        RouteRequest {
            origin: "E02002361".into(),
            dest: "E02002363".into(),
            from: LonLat::new(-1.55, 53.80),
            to: LonLat::new(-1.53, 53.81),
            profile: Profile::Fast,
        }
    }

    #[test]
    fn fixture_is_served_without_fetching() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = r#"{"coordinates":[[-1.55,53.8],[-1.53,53.8],[-1.53,53.81]],"distance_m":2460.0}"#;
        fs::write(dir.path().join("E02002361_E02002363_fast"), fixture).unwrap();
        let backend = CachedBackend { cache: RouteCache::new(dir.path()).unwrap(), inner: Offline };
        let route = backend.route(&req()).unwrap();
        assert_eq!(route.distance_km, 2.46);
    }

    #[test]
    fn cache_round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let backend = CachedBackend {
            cache: RouteCache::new(dir.path()).unwrap(),
            inner: StubBackend { grid_step_deg: Some(0.004), elevation: None },
        };
        let first = backend.route(&req()).unwrap();
        assert!(backend.cache.path_for(&req()).exists());
        let cached = CachedBackend { cache: RouteCache::new(dir.path()).unwrap(), inner: Offline };
        let second: Route = cached.route(&req()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn ids_are_encoded_for_file_names() {
        assert_eq!(encode("E0200/1_x"), "E0200%2F1%5Fx");
        assert_eq!(encode(".."), "%2E%2E");
    }
}
