use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{DatasetPool, Split};
use crate::taxonomy::ClassId;

/// One training crop: the window origin and size inside an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub image_id: String,
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    /// Material the crop was centered on; `None` when drawn uniformly.
    pub class: Option<ClassId>,
}

#[derive(Debug, Clone)]
struct ImageEntry {
    image_id: String,
    height: usize,
    width: usize,
}

/// Crops centered on surface-material regions with equal quotas per material.
///
/// Each training mask is tiled into `crop × crop` cells; every (cell, material) pair with
/// at least one pixel contributes a centroid, snapped to the nearest pixel of that material.
/// A crop for material `c` picks an image containing `c` uniformly, then one of its centroids.
#[derive(Debug, Clone)]
pub struct ClassUniformSampler {
    crop: usize,
    images: Vec<ImageEntry>,
    centroids: BTreeMap<ClassId, Vec<(usize, Vec<(usize, usize)>)>>,
    unsampleable: Vec<ClassId>,
}

impl ClassUniformSampler {
    pub fn new(pool: &DatasetPool, crop: usize) -> Result<Self> {
        if crop == 0 {
            return Err(Error::Config("crop size must be positive".into()));
        }
        let ids = pool.ids_in(Split::Train);
        if ids.is_empty() {
            return Err(Error::Precondition("training split is empty".into()));
        }
        let taxonomy = pool.taxonomy();
        let mut images = Vec::with_capacity(ids.len());
        let mut centroids: BTreeMap<ClassId, Vec<(usize, Vec<(usize, usize)>)>> = BTreeMap::new();
        for (idx, id) in ids.into_iter().enumerate() {
            let mask = pool.mask(&id)?;
            let (w, h) = mask.dims();
            let mut per_class: BTreeMap<ClassId, Vec<(usize, usize)>> = BTreeMap::new();
            for ty in (0..h).step_by(crop) {
                for tx in (0..w).step_by(crop) {
                    let (th, tw) = (crop.min(h - ty), crop.min(w - tx));
                    let mut sums: BTreeMap<u8, (f64, f64, usize)> = BTreeMap::new();
                    for y in ty..ty + th {
                        for x in tx..tx + tw {
                            let c = mask.get(x, y);
                            if taxonomy.is_material(c) {
                                let e = sums.entry(c.0).or_default();
                                e.0 += y as f64;
                                e.1 += x as f64;
                                e.2 += 1;
                            }
                        }
                    }
                    for (c, (sy, sx, n)) in sums {
                        let (cy, cx) = (sy / n as f64, sx / n as f64);
                        let mut best = (f64::INFINITY, (0, 0));
                        for y in ty..ty + th {
                            for x in tx..tx + tw {
                                if mask.get(x, y).0 == c {
                                    let d = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                                    if d < best.0 {
                                        best = (d, (y, x));
                                    }
                                }
                            }
                        }
                        per_class.entry(ClassId(c)).or_default().push(best.1);
                    }
                }
            }
            for (c, pts) in per_class {
                centroids.entry(c).or_default().push((idx, pts));
            }
            images.push(ImageEntry {
                image_id: id,
                height: h,
                width: w,
            });
        }
        let unsampleable: Vec<ClassId> = taxonomy
            .material_ids()
            .into_iter()
            .filter(|c| !centroids.contains_key(c))
            .collect();
        if !unsampleable.is_empty() {
            log::warn!("materials absent from every training mask: {unsampleable:?}");
        }
        Ok(Self {
            crop,
            images,
            centroids,
            unsampleable,
        })
    }

    /// Materials with no pixel in any training mask.
    pub fn unsampleable(&self) -> &[ClassId] {
        &self.unsampleable
    }

    pub fn sampleable(&self) -> Vec<ClassId> {
        self.centroids.keys().copied().collect()
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    /// Draws `n` crops, shuffled. Quotas are `n / k` per sampleable material with the
    /// remainder spread over randomly chosen materials.
    pub fn plan_epoch(&self, n: usize, rng: &mut impl Rng) -> Vec<CropSpec> {
        let classes = self.sampleable();
        let mut out = Vec::with_capacity(n);
        if classes.is_empty() {
            for _ in 0..n {
                let idx = rng.random_range(0..self.images.len());
                let e = &self.images[idx];
                let y = rng.random_range(0..e.height);
                let x = rng.random_range(0..e.width);
                out.push(self.window(idx, y, x, None));
            }
            return out;
        }
        let k = classes.len();
        let mut quotas = vec![n / k; k];
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(rng);
        for &i in order.iter().take(n % k) {
            quotas[i] += 1;
        }
        for (class, quota) in classes.iter().zip(quotas) {
            let holders = &self.centroids[class];
            for _ in 0..quota {
                let (idx, pts) = &holders[rng.random_range(0..holders.len())];
                let (y, x) = pts[rng.random_range(0..pts.len())];
                out.push(self.window(*idx, y, x, Some(*class)));
            }
        }
        out.shuffle(rng);
        out
    }

    fn window(&self, idx: usize, cy: usize, cx: usize, class: Option<ClassId>) -> CropSpec {
        let e = &self.images[idx];
        let (h, w) = (self.crop.min(e.height), self.crop.min(e.width));
        let y0 = cy.saturating_sub(h / 2).min(e.height - h);
        let x0 = cx.saturating_sub(w / 2).min(e.width - w);
        CropSpec {
            image_id: e.image_id.clone(),
            y0,
            x0,
            height: h,
            width: w,
            class,
        }
    }
}
