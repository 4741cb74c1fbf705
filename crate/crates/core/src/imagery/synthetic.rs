//! Deterministic street scenes with pixel-exact labels.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::texture::{mix64, shade, Surface, Texture};
use super::{FetchOutcome, ImageProvider, ImageRequest, ProviderMeta};
use crate::error::{Error, Result};
use crate::geo::CameraParams;
use crate::image::RgbImage;
use crate::mask::{MaskImage, Provenance};
use crate::pool::{CaptureSide, DatasetPool, ImageRecord, MaskSlot, Split};
use crate::taxonomy::{ClassId, LabelTaxonomy};
use crate::tensor::Tensor3;
use crate::training::MemoryImages;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.2,
            validation: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub taxonomy: LabelTaxonomy,
    /// 0 disables cast shadows; 1 darkens shadowed pixels by half.
    pub shadow_level: f32,
    /// Expected number of occluders (vehicles, poles) per image.
    pub occluder_density: f32,
    /// Chance that a second material patch appears inside the sidewalk.
    pub secondary_probability: f32,
    /// Per-image color gain range `1 ± color_jitter`.
    pub color_jitter: f32,
    /// Remaining images after train, validation and test go to the unlabeled split.
    pub splits: SplitFractions,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 64,
            height: 64,
            taxonomy: LabelTaxonomy::canonical(),
            shadow_level: 0.3,
            occluder_density: 0.6,
            secondary_probability: 0.3,
            color_jitter: 0.08,
            splits: SplitFractions::default(),
        }
    }
}

impl SyntheticSceneSpec {
    pub fn new(seed: u64, taxonomy: LabelTaxonomy) -> Self {
        Self {
            seed,
            taxonomy,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config("synthetic scenes must be at least 8x8".into()));
        }
        let f = &self.splits;
        let fractions = [f.train, f.validation, f.test];
        if fractions.iter().any(|v| !(0.0..=1.0).contains(v)) || fractions.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::Config(format!("invalid split fractions {f:?}")));
        }
        if !(0.0..=1.0).contains(&self.shadow_level) || self.occluder_density < 0.0 {
            return Err(Error::Config("shadow_level must be in [0, 1] and occluder_density ≥ 0".into()));
        }
        Ok(())
    }
}

/// Relative frequencies of the sidewalk materials a pool is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub materials: Vec<String>,
    pub weights: Vec<f64>,
}

impl ClassMix {
    pub fn uniform<S: AsRef<str>>(materials: &[S]) -> Self {
        Self {
            materials: materials.iter().map(|m| m.as_ref().to_string()).collect(),
            weights: vec![1.0; materials.len()],
        }
    }

    pub fn weighted<S: AsRef<str>>(entries: &[(S, f64)]) -> Self {
        Self {
            materials: entries.iter().map(|(m, _)| m.as_ref().to_string()).collect(),
            weights: entries.iter().map(|(_, w)| *w).collect(),
        }
    }

    fn resolve(&self, taxonomy: &LabelTaxonomy) -> Result<Vec<ClassId>> {
        if self.materials.len() < 2 {
            return Err(Error::Precondition("class mix needs at least two surface materials".into()));
        }
        if self.weights.len() != self.materials.len() || self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("class mix weights must be positive, one per material".into()));
        }
        self.materials
            .iter()
            .map(|name| match taxonomy.id_of(name) {
                Some(id) if taxonomy.is_material(id) => Ok(id),
                _ => Err(Error::Precondition(format!("{name:?} is not a surface material of the taxonomy"))),
            })
            .collect()
    }
}

/// What a scene shows: the sidewalk material, an optional second patch, and the side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub primary: ClassId,
    pub secondary: Option<ClassId>,
    pub side: CaptureSide,
}

fn texture_for(taxonomy: &LabelTaxonomy, class: ClassId) -> Texture {
    if class == taxonomy.road() {
        Texture::Road
    } else if class == taxonomy.background() {
        Texture::Background
    } else {
        let name = &taxonomy.get(class).expect("class in taxonomy").name;
        Texture::for_material(name, class.0)
    }
}

/// Renders one scene. Returns the image, its exact mask and the occluded fraction.
///
/// The layout and occluders come from one random stream and lighting from another, so
/// changing `shadow_level` alters pixels but never the mask.
pub fn render_scene(spec: &SyntheticSceneSpec, image_seed: u64, layout: SceneLayout) -> Result<(RgbImage, MaskImage, f64)> {
    spec.validate()?;
    let tax = &spec.taxonomy;
    for c in std::iter::once(layout.primary).chain(layout.secondary) {
        if !tax.is_material(c) {
            return Err(Error::InvalidClass {
                id: u32::from(c.0),
                num_classes: tax.len(),
            });
        }
    }
    let (w, h) = (spec.width, spec.height);
    let (wf, hf) = (w as f32, h as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed);
    let horizon = hf * rng.random_range(0.28..0.42);
    let curb0 = wf * rng.random_range(0.35..0.6);
    let slope = rng.random_range(-0.3f32..0.5);
    let patch = layout.secondary.map(|c| {
        let pw = rng.random_range(0.15..0.35) * wf;
        let ph = rng.random_range(0.15..0.35) * hf;
        let px = rng.random_range(0.0..(wf - pw));
        let py = rng.random_range(horizon..(hf - ph).max(horizon + 1.0));
        (c, px, py, pw, ph)
    });

    let mut mask = MaskImage::filled(w, h, tax.background(), Provenance::HumanRefined);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f32 + 0.5, y as f32 + 0.5);
            if yf < horizon {
                continue;
            }
            let curb = curb0 + slope * (yf - horizon);
            let on_sidewalk = match layout.side {
                CaptureSide::Left => xf < curb,
                CaptureSide::Right => xf >= wf - curb,
            };
            let class = if !on_sidewalk {
                tax.road()
            } else {
                match patch {
                    Some((c, px, py, pw, ph)) if xf >= px && xf < px + pw && yf >= py && yf < py + ph => c,
                    _ => layout.primary,
                }
            };
            mask.set(x, y, class);
        }
    }

    // Occluders are labeled background, as an annotator would.
    let n_occ = spec.occluder_density.floor() as usize + usize::from(rng.random::<f32>() < spec.occluder_density.fract());
    let mut occluders = Vec::with_capacity(n_occ);
    for _ in 0..n_occ {
        let pole = rng.random_bool(0.4);
        let (ow, oh) = if pole {
            (rng.random_range(2.0..4.0), rng.random_range(0.3..0.6) * hf)
        } else {
            (rng.random_range(0.18..0.35) * wf, rng.random_range(0.1..0.2) * hf)
        };
        let ox = rng.random_range(0.0..(wf - ow));
        let oy = rng.random_range((horizon - 0.2 * oh)..(hf - oh).max(horizon));
        let color = [rng.random_range(0.05..0.6), rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)];
        occluders.push((ox, oy, ow, oh, color));
    }
    let mut image = Tensor3::zeros(3, h, w);
    let mut occluded = 0usize;
    let tint_rng_seed = mix64(image_seed ^ 0x7469_6e74);
    let mut tint_rng = ChaCha8Rng::seed_from_u64(tint_rng_seed);
    let gain = 1.0 + spec.color_jitter * tint_rng.random_range(-1.0f32..1.0);
    let tint = [0, 1, 2].map(|_| gain * (1.0 + 0.5 * spec.color_jitter * tint_rng.random_range(-1.0f32..1.0)));
    let surface = Surface {
        seed: mix64(image_seed ^ 0x5eed),
        phase: (tint_rng.random_range(0.0..64.0), tint_rng.random_range(0.0..64.0)),
        tint,
        horizon,
    };
    let mut shadow_rng = ChaCha8Rng::seed_from_u64(mix64(image_seed ^ 0x5ad0));
    let shadow_angle = shadow_rng.random_range(0.0..std::f32::consts::PI);
    let shadow_offset = shadow_rng.random_range(-0.3..0.3) * wf;
    let shadow_gain = 1.0 - 0.5 * spec.shadow_level;
    let (sn_x, sn_y) = (shadow_angle.cos(), shadow_angle.sin());
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f32 + 0.5, y as f32 + 0.5);
            let occluder = occluders
                .iter()
                .find(|(ox, oy, ow, oh, _)| xf >= *ox && xf < ox + ow && yf >= *oy && yf < oy + oh);
            let mut rgb = if let Some((.., color)) = occluder {
                occluded += 1;
                mask.set(x, y, tax.background());
                *color
            } else {
                shade(texture_for(tax, mask.get(x, y)), x, y, &surface)
            };
            let shadowed = yf >= horizon && (xf - wf / 2.0) * sn_x + (yf - hf / 2.0) * sn_y > shadow_offset;
            if shadowed {
                rgb = rgb.map(|v| v * shadow_gain);
            }
            for (c, v) in rgb.into_iter().enumerate() {
                *image.at_mut(c, y, x) = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok((RgbImage::new(image)?, mask, occluded as f64 / (w * h) as f64))
}

/// A generated pool together with everything the generator knows about it.
#[derive(Debug, Clone)]
pub struct SyntheticPool {
    pub pool: DatasetPool,
    pub images: MemoryImages,
    /// Exact masks for every image, unlabeled ones included.
    pub truth: BTreeMap<String, MaskImage>,
    pub layouts: BTreeMap<String, SceneLayout>,
}

impl SyntheticPool {
    /// Writes `images/<id>.png`, `masks/<id>.png` for labeled records and `manifest.jsonl`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        for r in self.pool.records() {
            let img = crate::training::ImageSource::image(&self.images, &r.image_id)?;
            img.save(&dir.join(&r.image_path))?;
        }
        crate::manifest::save_manifest(&self.pool, &dir.join("manifest.jsonl"))?;
        self.pool.taxonomy().save(&dir.join("taxonomy.json"))?;
        let truth_dir = dir.join("truth");
        std::fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
        for (id, m) in &self.truth {
            m.save_png(&truth_dir.join(format!("{id}.png")), Some(self.pool.taxonomy()))?;
        }
        Ok(())
    }
}

/// Builds a pool whose every labeled split contains every material of `mix`.
pub fn generate_synthetic_pool(spec: &SyntheticSceneSpec, n_images: usize, mix: &ClassMix) -> Result<SyntheticPool> {
    spec.validate()?;
    let classes = mix.resolve(&spec.taxonomy)?;
    let k = classes.len();
    if n_images == 0 {
        return Err(Error::Precondition("n_images must be positive".into()));
    }
    let counts = [
        (Split::Train, (spec.splits.train * n_images as f64).floor() as usize),
        (Split::Validation, (spec.splits.validation * n_images as f64).floor() as usize),
        (Split::Test, (spec.splits.test * n_images as f64).floor() as usize),
    ];
    for (split, c) in counts {
        if c < k {
            return Err(Error::Precondition(format!(
                "{n_images} images give {c} {split:?} images; at least {k} are needed to cover every material"
            )));
        }
    }
    let labeled: usize = counts.iter().map(|(_, c)| c).sum();
    let unlabeled = n_images - labeled;
    let weights = WeightedIndex::new(&mix.weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut pool = DatasetPool::new(spec.taxonomy.clone());
    let mut images = MemoryImages::new();
    let mut truth = BTreeMap::new();
    let mut layouts = BTreeMap::new();
    let mut index = 0usize;
    for (split, count) in counts.into_iter().chain(std::iter::once((Split::Unlabeled, unlabeled))) {
        let mut primaries: Vec<ClassId> = classes.iter().copied().cycle().take(k.min(count)).collect();
        while primaries.len() < count {
            primaries.push(classes[weights.sample(&mut rng)]);
        }
        primaries.shuffle(&mut rng);
        for primary in primaries {
            let secondary = (rng.random::<f32>() < spec.secondary_probability).then(|| {
                let others: Vec<ClassId> = classes.iter().copied().filter(|c| *c != primary).collect();
                others[rng.random_range(0..others.len())]
            });
            let side = if rng.random_bool(0.5) {
                CaptureSide::Left
            } else {
                CaptureSide::Right
            };
            let layout = SceneLayout {
                primary,
                secondary,
                side,
            };
            let image_seed = mix64(spec.seed ^ mix64(index as u64));
            let (image, mask, occlusion) = render_scene(spec, image_seed, layout)?;
            let id = format!("syn{index:05}");
            let record = ImageRecord {
                image_id: id.clone(),
                lat: 42.35 + index as f64 * 1e-4,
                lon: -71.06,
                segment_id: format!("seg{index:05}"),
                camera: CameraParams::default(),
                side,
                split,
                occlusion_fraction: occlusion,
                inventory_label: Some(primary),
                image_path: format!("images/{id}.png"),
            };
            let slot = split
                .is_labeled()
                .then(|| MaskSlot::Memory(Arc::new(mask.clone())));
            pool.insert(record, slot)?;
            images.insert(id.clone(), image);
            truth.insert(id.clone(), mask);
            layouts.insert(id, layout);
            index += 1;
        }
    }
    Ok(SyntheticPool {
        pool,
        images,
        truth,
        layouts,
    })
}

/// Serves synthetic scenes keyed by location and camera, so any request is reproducible.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    pub spec: SyntheticSceneSpec,
    pub materials: Vec<ClassId>,
    /// Fraction of locations reported as having no imagery.
    pub coverage_gap: f64,
}

impl SyntheticProvider {
    pub fn new(spec: SyntheticSceneSpec) -> Self {
        let materials = spec.taxonomy.material_ids();
        Self {
            spec,
            materials,
            coverage_gap: 0.0,
        }
    }

    fn request_seed(&self, r: &ImageRequest) -> u64 {
        let q = |v: f64| (v * 1e6).round() as i64 as u64;
        let mut s = mix64(self.spec.seed ^ q(r.lat));
        s = mix64(s ^ q(r.lon));
        s = mix64(s ^ q(r.camera.heading_deg));
        s = mix64(s ^ q(r.camera.pitch_deg));
        mix64(s ^ q(r.camera.fov_deg))
    }
}

impl ImageProvider for SyntheticProvider {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn fetch(&self, request: &ImageRequest) -> Result<FetchOutcome> {
        request.validate()?;
        let seed = self.request_seed(request);
        if ((seed >> 11) as f64 / (1u64 << 53) as f64) < self.coverage_gap {
            return Ok(FetchOutcome::NotAvailable {
                reason: "no synthetic coverage at this location".into(),
            });
        }
        let spec = SyntheticSceneSpec {
            width: request.width as usize,
            height: request.height as usize,
            ..self.spec.clone()
        };
        let layout = SceneLayout {
            primary: self.materials[(seed % self.materials.len() as u64) as usize],
            secondary: None,
            side: if seed & 1 == 0 {
                CaptureSide::Left
            } else {
                CaptureSide::Right
            },
        };
        let (image, _, _) = render_scene(&spec, seed, layout)?;
        Ok(FetchOutcome::Image {
            bytes: image.to_png()?,
            meta: ProviderMeta {
                provider: self.name().into(),
                capture_id: Some(format!("{seed:016x}")),
                from_cache: false,
            },
        })
    }
}
