//! Trains one stage on a synthetic four-material pool and reports per-epoch validation mIoU.
//!
//! ```text
//! cargo run -p sidewalk-core --example train_stage -- [n_images] [epochs] [learning_rate] [crops_per_epoch] [crop_size]
//! ```

use std::time::Instant;

use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::model::{ModelConfig, SegmentationModel};
use sidewalk::training::{evaluate_split, train_stage, TrainConfig};
use sidewalk::{LabelTaxonomy, Split};

fn main() -> sidewalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(150, |s| s.parse().expect("n_images"));
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));
    let learning_rate: f32 = args.next().map_or(0.002, |s| s.parse().expect("learning rate"));
    let crops: Option<usize> = args.next().map(|s| s.parse().expect("crops per epoch"));
    let crop_size: usize = args.next().map_or(32, |s| s.parse().expect("crop size"));

    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let spec = SyntheticSceneSpec::new(1, taxonomy.clone());
    let syn = generate_synthetic_pool(&spec, n, &ClassMix::uniform(&materials))?;
    println!(
        "pool: {} train / {} validation / {} test",
        syn.pool.count(Split::Train),
        syn.pool.count(Split::Validation),
        syn.pool.count(Split::Test)
    );

    let mut model: SegmentationModel = SegmentationModel::new(ModelConfig::new(taxonomy.len()))?;
    let config = TrainConfig {
        epochs_per_stage: epochs,
        learning_rate,
        crops_per_epoch: crops,
        crop_size,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let stage = train_stage(&mut model, &syn.pool, &syn.images, &config, 1, 7)?;
    for r in &stage.epochs {
        println!(
            "epoch {:2}  loss {:.4}  val mIoU {:.4}  materials {:.4}",
            r.epoch,
            r.train_loss,
            r.val_miou_all,
            r.val_miou_materials.unwrap_or(f64::NAN)
        );
    }
    println!("best epoch {} after {:.1?}", stage.best.epoch, start.elapsed());

    let scales = model.config().inference_scales.clone();
    let (_, test) = evaluate_split(&model, &syn.pool, &syn.images, Split::Test, &scales)?;
    for c in &test.per_class {
        println!("{:>10}  IoU {:?}", c.name, c.iou.map(|v| (v * 1e4).round() / 1e4));
    }
    println!("test mIoU {:.4}, materials {:.4}", test.miou_all, test.materials_or_zero());
    for scales in [vec![1.0], vec![0.5, 1.0]] {
        let (_, r) = evaluate_split(&model, &syn.pool, &syn.images, Split::Test, &scales)?;
        println!("scales {scales:?}: test mIoU {:.4}, materials {:.4}", r.miou_all, r.materials_or_zero());
    }
    let (_, r) = evaluate_split(&model, &syn.pool, &syn.images, Split::Train, &scales)?;
    println!("train split: mIoU {:.4}, materials {:.4}", r.miou_all, r.materials_or_zero());
    Ok(())
}
