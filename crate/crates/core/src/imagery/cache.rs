use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FetchOutcome, ImageProvider, ImageRequest, ProviderMeta};
use crate::error::{Error, Result};

/// Geohash precision of the cache's directory level (cells of roughly 150 m).
const CELL_PRECISION: usize = 7;

fn round6(v: f64) -> i64 {
    (v * 1e6).round() as i64
}

/// Where a request lives in the cache: `<geohash>/<stem>.img`.
///
/// Coordinates are rounded to 1e-6 degrees before hashing, so requests within about
/// 0.1 m of each other share an entry. The stem hashes the rounded location, the camera
/// and the requested size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub geohash: String,
    pub stem: String,
}

impl CacheKey {
    pub fn for_request(r: &ImageRequest) -> Result<Self> {
        let (lat, lon) = (round6(r.lat), round6(r.lon));
        let geohash = geohash::encode(
            geohash::Coord {
                x: lon as f64 / 1e6,
                y: lat as f64 / 1e6,
            },
            CELL_PRECISION,
        )
        .map_err(|e| Error::Precondition(format!("cannot geohash ({}, {}): {e}", r.lat, r.lon)))?;
        let material = format!(
            "{lat}|{lon}|{}|{}|{}|{}x{}",
            round6(r.camera.heading_deg),
            round6(r.camera.pitch_deg),
            round6(r.camera.fov_deg),
            r.width,
            r.height
        );
        let digest = Sha256::digest(material.as_bytes());
        let stem = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { geohash, stem })
    }

    pub fn image_path(&self, root: &Path) -> PathBuf {
        root.join(&self.geohash).join(format!("{}.img", self.stem))
    }

    pub fn sidecar_path(&self, root: &Path) -> PathBuf {
        root.join(&self.geohash).join(format!("{}.json", self.stem))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    request: ImageRequest,
    provider: String,
    capture_id: Option<String>,
    /// Set when the provider reported no imagery; no `.img` file exists then.
    not_available: Option<String>,
    sha256: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2,
        }
    }
}

/// Wraps a provider with a content-addressed disk cache and retry with exponential backoff.
#[derive(Debug)]
pub struct CachedProvider<P> {
    inner: P,
    root: PathBuf,
    retry: RetryPolicy,
    provider_calls: AtomicUsize,
}

impl<P: ImageProvider> CachedProvider<P> {
    pub fn new(inner: P, root: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            root: root.into(),
            retry: RetryPolicy::default(),
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Calls that reached the wrapped provider, retries included.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, key: &CacheKey) -> Result<Option<FetchOutcome>> {
        let sidecar_path = key.sidecar_path(&self.root);
        if !sidecar_path.exists() {
            return Ok(None);
        }
        let sidecar: Sidecar = crate::io::read_json(&sidecar_path)?;
        if let Some(reason) = sidecar.not_available {
            return Ok(Some(FetchOutcome::NotAvailable { reason }));
        }
        let path = key.image_path(&self.root);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        if sidecar.sha256.as_deref() != Some(&sha_hex(&bytes)) {
            log::warn!("cache entry {} failed its checksum; refetching", path.display());
            return Ok(None);
        }
        Ok(Some(FetchOutcome::Image {
            bytes,
            meta: ProviderMeta {
                provider: sidecar.provider,
                capture_id: sidecar.capture_id,
                from_cache: true,
            },
        }))
    }

    fn fetch_with_retry(&self, request: &ImageRequest) -> Result<FetchOutcome> {
        let mut delay = self.retry.initial_backoff;
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            match self.inner.fetch(request) {
                Err(Error::ProviderUnreachable { message, .. }) if attempt < attempts => {
                    log::warn!("{} unreachable (attempt {attempt}): {message}", self.inner.name());
                    std::thread::sleep(delay);
                    delay *= self.retry.multiplier;
                }
                Err(Error::ProviderUnreachable { message, .. }) => {
                    return Err(Error::ProviderUnreachable { attempts, message })
                }
                other => return other,
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl<P: ImageProvider> ImageProvider for CachedProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn fetch(&self, request: &ImageRequest) -> Result<FetchOutcome> {
        request.validate()?;
        let key = CacheKey::for_request(request)?;
        if let Some(hit) = self.lookup(&key)? {
            return Ok(hit);
        }
        let outcome = self.fetch_with_retry(request)?;
        let sidecar = match &outcome {
            FetchOutcome::Image { bytes, meta } => {
                crate::io::write_atomic(&key.image_path(&self.root), bytes)?;
                Sidecar {
                    request: request.clone(),
                    provider: meta.provider.clone(),
                    capture_id: meta.capture_id.clone(),
                    not_available: None,
                    sha256: Some(sha_hex(bytes)),
                }
            }
            FetchOutcome::NotAvailable { reason } => {
                log::info!("no imagery at ({}, {}): {reason}", request.lat, request.lon);
                Sidecar {
                    request: request.clone(),
                    provider: self.inner.name().to_string(),
                    capture_id: None,
                    not_available: Some(reason.clone()),
                    sha256: None,
                }
            }
        };
        // The sidecar lands last, so a reader never sees it without its image.
        crate::io::write_json(&key.sidecar_path(&self.root), &sidecar)?;
        Ok(outcome)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveEntry {
    lat: f64,
    lon: f64,
    heading_deg: f64,
    path: String,
}

/// Serves images from a local archive listed in `index.json`
/// (`[{lat, lon, heading_deg, path}]`, paths relative to the archive root).
#[derive(Debug, Clone)]
pub struct DiskProvider {
    root: PathBuf,
    entries: Vec<ArchiveEntry>,
}

impl DiskProvider {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let entries = crate::io::read_json(&root.join("index.json"))?;
        Ok(Self { root, entries })
    }
}

impl ImageProvider for DiskProvider {
    fn name(&self) -> &str {
        "disk"
    }

    fn fetch(&self, request: &ImageRequest) -> Result<FetchOutcome> {
        let hit = self.entries.iter().find(|e| {
            round6(e.lat) == round6(request.lat)
                && round6(e.lon) == round6(request.lon)
                && round6(e.heading_deg) == round6(request.camera.heading_deg)
        });
        let Some(entry) = hit else {
            return Ok(FetchOutcome::NotAvailable {
                reason: "location not in archive".into(),
            });
        };
        let path = self.root.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(FetchOutcome::Image {
            bytes,
            meta: ProviderMeta {
                provider: self.name().into(),
                capture_id: Some(entry.path.clone()),
                from_cache: false,
            },
        })
    }
}
