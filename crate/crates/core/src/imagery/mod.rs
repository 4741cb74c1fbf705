//! Street-level image providers and the on-disk fetch cache.

mod cache;
mod synthetic;
mod texture;

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, CachedProvider, DiskProvider, RetryPolicy};
pub use synthetic::{
    generate_synthetic_pool, render_scene, ClassMix, SceneLayout, SplitFractions, SyntheticPool, SyntheticProvider,
    SyntheticSceneSpec,
};

use crate::error::{Error, Result};
use crate::geo::CameraParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub lat: f64,
    pub lon: f64,
    pub camera: CameraParams,
    pub width: u32,
    pub height: u32,
}

impl ImageRequest {
    pub fn new(lat: f64, lon: f64, camera: CameraParams, width: u32, height: u32) -> Self {
        Self {
            lat,
            lon,
            camera,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Precondition("requested image size must be positive".into()));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Precondition(format!(
                "coordinates out of range: ({}, {})",
                self.lat, self.lon
            )));
        }
        if !self.camera.is_valid() {
            return Err(Error::Precondition("invalid camera parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMeta {
    pub provider: String,
    /// Provider-side identifier of the capture, when it has one.
    pub capture_id: Option<String>,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FetchOutcome {
    /// Encoded image bytes (PNG for the built-in providers).
    Image { bytes: Vec<u8>, meta: ProviderMeta },
    /// The provider has no imagery for this location. Not an error.
    NotAvailable { reason: String },
}

impl FetchOutcome {
    pub fn bytes(&self) -> Option<&[u8]> {
        match self {
            FetchOutcome::Image { bytes, .. } => Some(bytes),
            FetchOutcome::NotAvailable { .. } => None,
        }
    }
}

/// A source of street-level imagery. Implementations must be safe to call concurrently.
///
/// Transient failures should surface as [`Error::ProviderUnreachable`], which callers retry.
pub trait ImageProvider: Send + Sync {
    fn name(&self) -> &str;
    fn fetch(&self, request: &ImageRequest) -> Result<FetchOutcome>;
}
