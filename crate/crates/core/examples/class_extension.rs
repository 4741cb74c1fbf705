//! Extends a trained seven-class model with three new paving materials.
//!
//! A base model learns five materials plus road and background. Its classifier is then widened
//! to ten outputs and fine-tuned on the old training images together with new images that show
//! granite block, hexagonal pavers and cobblestone.
//!
//! ```text
//! cargo run --release -p sidewalk-core --example class_extension -- [n_images] [epochs]
//! ```

use std::time::Instant;

use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SplitFractions, SyntheticPool, SyntheticSceneSpec};
use sidewalk::model::{Backbone, SegmentationModel};
use sidewalk::pool::MaskSlot;
use sidewalk::training::{evaluate_split, train_stage, ImageSource, MemoryImages, TrainConfig};
use sidewalk::{DatasetPool, LabelTaxonomy, Split};

const OLD: [&str; 5] = ["concrete", "brick", "granite/bluestone", "asphalt", "mixed"];
const NEW: [&str; 3] = ["granite block/stone", "hexagonal asphalt paver", "cobblestone"];

fn pool(seed: u64, taxonomy: &LabelTaxonomy, n: usize, mix: &ClassMix) -> sidewalk::Result<SyntheticPool> {
    let spec = SyntheticSceneSpec {
        splits: SplitFractions {
            train: 0.5,
            validation: 0.2,
            test: 0.3,
        },
        ..SyntheticSceneSpec::new(seed, taxonomy.clone())
    };
    generate_synthetic_pool(&spec, n, mix)
}

/// Union of two pools under `taxonomy`, ids prefixed to keep them apart.
fn merge(parts: &[(&str, &SyntheticPool)], taxonomy: &LabelTaxonomy) -> sidewalk::Result<(DatasetPool, MemoryImages)> {
    let mut pool = DatasetPool::new(taxonomy.clone());
    let mut images = MemoryImages::new();
    for (prefix, part) in parts {
        for r in part.pool.records() {
            let mut r = r.clone();
            let old_id = std::mem::take(&mut r.image_id);
            r.image_id = format!("{prefix}{old_id}");
            images.insert(r.image_id.clone(), (*part.images.image(&old_id)?).clone());
            let mask = part.pool.mask_slot(&old_id).map(|_| part.pool.mask(&old_id)).transpose()?;
            pool.insert(r, mask.map(MaskSlot::Memory))?;
        }
    }
    Ok((pool, images))
}

fn main() -> sidewalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(240, |s| s.parse().expect("n_images"));
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));
    let start = Instant::now();

    let base = LabelTaxonomy::base();
    let extended = base.extend(&NEW)?;
    let old_pool = pool(1, &base, n, &ClassMix::uniform(&OLD))?;
    let new_pool = pool(2, &extended, n, &ClassMix::uniform(&NEW))?;
    let config = TrainConfig {
        epochs_per_stage: epochs,
        ..TrainConfig::desk()
    };

    let mut model: SegmentationModel = SegmentationModel::new(sidewalk::model::ModelConfig::new(base.len()))?;
    train_stage(&mut model, &old_pool.pool, &old_pool.images, &config, 1, 0)?;
    let scales = model.config().inference_scales.clone();
    let (_, before_old) = evaluate_split(&model, &old_pool.pool, &old_pool.images, Split::Test, &scales)?;
    println!("base model: materials mIoU {:.4} ({:.0?})", before_old.materials_or_zero(), start.elapsed());

    let mut wide = model.replace_classifier_head(extended.len(), 11)?;
    let probe = old_pool.images.image(&old_pool.pool.ids_in(Split::Test)[0])?;
    let same = model.backbone().forward(probe.tensor()).0 == wide.backbone().forward(probe.tensor()).0;
    println!("backbone features unchanged by head replacement: {same}");

    let (_, before_new) = evaluate_split(&wide, &new_pool.pool, &new_pool.images, Split::Test, &scales)?;
    let (train, images) = merge(&[("a", &old_pool), ("b", &new_pool)], &extended)?;
    train_stage(&mut wide, &train, &images, &config, 2, 0)?;
    let (_, after_new) = evaluate_split(&wide, &new_pool.pool, &new_pool.images, Split::Test, &scales)?;
    let mut old_eval = old_pool.pool.clone();
    old_eval.set_taxonomy(extended.clone())?;
    let (_, after_old) = evaluate_split(&wide, &old_eval, &old_pool.images, Split::Test, &scales)?;

    println!("{:>24}  {:>8}  {:>8}", "class", "before", "after");
    for name in OLD.iter().chain(&NEW) {
        let id = extended.id_of(name).expect("known class");
        let (b, a) = if NEW.contains(name) {
            (before_new.iou(id), after_new.iou(id))
        } else {
            (before_old.iou(id), after_old.iou(id))
        };
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{name:>24}  {:>8}  {:>8}", fmt(b), fmt(a));
    }
    println!("done in {:.0?}", start.elapsed());
    Ok(())
}
