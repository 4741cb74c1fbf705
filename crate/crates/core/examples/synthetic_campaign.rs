//! Runs a three-stage campaign on a synthetic pool with the oracle reviewer, once with
//! the full acquisition strategy and once with random acquisition, and compares them.
//!
//! ```text
//! cargo run -p sidewalk-core --example synthetic_campaign -- [seeds] [n_images] [sample_size] [crops_per_epoch] [uniform|skewed]
//! ```

use std::sync::Arc;
use std::time::Instant;

use sidewalk::active::campaign::fresh_model;
use sidewalk::active::{run_campaign, CampaignConfig, Strategy};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SplitFractions, SyntheticSceneSpec};
use sidewalk::review::{OracleReviewer, ReviewConfig, ReviewQueue, SystemClock};
use sidewalk::training::{DefaultModel, TrainConfig};
use sidewalk::LabelTaxonomy;

fn main() -> sidewalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(1, |s| s.parse().expect("seeds"));
    let n: usize = args.next().map_or(250, |s| s.parse().expect("n_images"));
    let sample: usize = args.next().map_or(25, |s| s.parse().expect("sample size"));
    let crops: usize = args.next().map_or(128, |s| s.parse().expect("crops per epoch"));
    let skewed = args.next().is_some_and(|s| s == "skewed");

    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let mut totals = [0.0f64; 2];
    for seed in 0..seeds {
        let mut spec = SyntheticSceneSpec::new(100 + seed, taxonomy.clone());
        spec.splits = SplitFractions {
            train: 0.12,
            validation: 0.12,
            test: 0.16,
        };
        // The skewed mix makes brick and mixed pavement rare, as in most real inventories.
        let mix = if skewed {
            ClassMix::weighted(&[("concrete", 6.0), ("brick", 1.0), ("asphalt", 2.0), ("mixed", 1.0)])
        } else {
            ClassMix::uniform(&materials)
        };
        let syn = generate_synthetic_pool(&spec, n, &mix)?;
        for (i, strategy) in [Strategy::Full, Strategy::Random].into_iter().enumerate() {
            let config = CampaignConfig {
                max_stages: 3,
                sample_size: sample,
                strategy,
                seed,
                train: TrainConfig {
                    crops_per_epoch: Some(crops),
                    ..TrainConfig::desk()
                },
                scales: Some(vec![0.5, 1.0]),
                ..CampaignConfig::default()
            };
            let queue = ReviewQueue::in_memory(taxonomy.clone(), ReviewConfig::default(), Arc::new(SystemClock));
            let mut oracle = OracleReviewer::new("oracle", syn.truth.clone());
            let model: DefaultModel = fresh_model(&config, &syn.pool)?;
            let start = Instant::now();
            let run = run_campaign(&config, syn.pool.clone(), model, &syn.images, &queue, &mut oracle, None)?;
            for s in &run.stages {
                println!(
                    "seed {seed} {strategy:?} stage {}: train {:3}  val {:.4}  test {:.4}  acquired {}",
                    s.stage,
                    s.train_count,
                    s.best_material_miou(),
                    s.test.as_ref().and_then(|t| t.miou_materials).unwrap_or(f64::NAN),
                    s.acquisition.len()
                );
            }
            let last = run.stages.last().and_then(|s| s.test.as_ref()).and_then(|t| t.miou_materials).unwrap_or(0.0);
            totals[i] += last;
            println!("seed {seed} {strategy:?}: final test materials mIoU {last:.4} in {:.1?}", start.elapsed());
        }
    }
    println!(
        "mean final materials mIoU: full {:.4}, random {:.4}",
        totals[0] / seeds as f64,
        totals[1] / seeds as f64
    );
    Ok(())
}
