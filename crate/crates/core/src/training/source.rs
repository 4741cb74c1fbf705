use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::pool::DatasetPool;

/// Looks up the RGB image behind a pool record.
pub trait ImageSource: Send + Sync {
    fn image(&self, image_id: &str) -> Result<Arc<RgbImage>>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryImages {
    images: HashMap<String, Arc<RgbImage>>,
}

impl MemoryImages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, image: RgbImage) {
        self.images.insert(image_id.into(), Arc::new(image));
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl FromIterator<(String, RgbImage)> for MemoryImages {
    fn from_iter<T: IntoIterator<Item = (String, RgbImage)>>(iter: T) -> Self {
        Self {
            images: iter.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
        }
    }
}

impl ImageSource for MemoryImages {
    fn image(&self, image_id: &str) -> Result<Arc<RgbImage>> {
        self.images
            .get(image_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("image {image_id}")))
    }
}

/// Reads PNGs from each record's `image_path`, keeping decoded images in memory.
#[derive(Debug, Default)]
pub struct DiskImages {
    paths: HashMap<String, PathBuf>,
    cache: Mutex<HashMap<String, Arc<RgbImage>>>,
}

impl DiskImages {
    pub fn for_pool(pool: &DatasetPool) -> Self {
        Self {
            paths: pool
                .records()
                .iter()
                .map(|r| (r.image_id.clone(), pool.resolve(&r.image_path)))
                .collect(),
            cache: Mutex::default(),
        }
    }
}

impl ImageSource for DiskImages {
    fn image(&self, image_id: &str) -> Result<Arc<RgbImage>> {
        if let Some(img) = self.cache.lock().expect("image cache poisoned").get(image_id) {
            return Ok(img.clone());
        }
        let path = self
            .paths
            .get(image_id)
            .ok_or_else(|| Error::NotFound(format!("image {image_id}")))?;
        let img = Arc::new(RgbImage::load(path)?);
        self.cache
            .lock()
            .expect("image cache poisoned")
            .insert(image_id.to_string(), img.clone());
        Ok(img)
    }
}
