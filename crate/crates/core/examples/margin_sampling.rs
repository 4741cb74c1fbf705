//! One acquisition round: margin uncertainty, validation analysis and similarity retrieval.
//!
//! A briefly trained model scores every unlabeled image by `1 − min margin`, the validation
//! split is split into failures and successes and clustered, and the stage budget is filled
//! with uncertain images first and images resembling the failure seeds second.
//!
//! ```text
//! cargo run --release -p sidewalk-core --example margin_sampling -- [stage] [sample_size]
//! ```

use sidewalk::active::{
    analyze_validation, margin_uncertainty, plan_stage_acquisition, score_unlabeled, AnalysisConfig, BudgetSchedule,
};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::model::{ModelConfig, SegmentationModel};
use sidewalk::training::{train_stage, ImageSource, TrainConfig};
use sidewalk::{LabelTaxonomy, Split};

fn main() -> sidewalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let stage: usize = args.next().map_or(2, |s| s.parse().expect("stage"));
    let sample: usize = args.next().map_or(20, |s| s.parse().expect("sample size"));

    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let syn = generate_synthetic_pool(&SyntheticSceneSpec::new(9, taxonomy.clone()), 120, &ClassMix::uniform(&materials))?;
    let mut model: SegmentationModel = SegmentationModel::new(ModelConfig::new(taxonomy.len()))?;
    let config = TrainConfig {
        epochs_per_stage: 3,
        ..TrainConfig::desk()
    };
    train_stage(&mut model, &syn.pool, &syn.images, &config, 1, 0)?;
    let scales = model.config().inference_scales.clone();

    let first = &syn.pool.ids_in(Split::Unlabeled)[0];
    let p = model.predict(syn.images.image(first)?.as_ref(), &scales)?;
    let u = margin_uncertainty(&p.fused)?;
    let low = u.margins.iter().filter(|m| **m < 0.2).count();
    println!(
        "{first}: image uncertainty {:.4}, {low} of {} pixels with margin below 0.2",
        u.image_uncertainty,
        u.margins.len()
    );

    let scored = score_unlabeled(&model, &syn.pool, &syn.images, &scales)?;
    println!("\nmost uncertain of {} unlabeled images:", scored.len());
    for s in scored.iter().take(5) {
        println!("  {}  {:.6}", s.image_id, s.uncertainty);
    }

    let analysis_config = AnalysisConfig {
        k_clusters: 3,
        ..AnalysisConfig::default()
    };
    let report = analyze_validation(&model, &syn.pool, &syn.images, &analysis_config, &scales)?;
    println!(
        "\nvalidation: {} analyzed, {} failures, {} successes, {} seeds",
        report.analyzed,
        report.failures.len(),
        report.successes.len(),
        report.seeds.len()
    );

    let schedule = BudgetSchedule::new(stage, sample)?;
    let (nu, ns) = schedule.quotas();
    println!("\nstage {stage}: {nu} by uncertainty, {ns} by similarity");
    for a in plan_stage_acquisition(&schedule, &scored, &report.seed_features())? {
        println!("  {:>11?}  {}  {:.6}", a.reason, a.image_id, a.score);
    }
    Ok(())
}
