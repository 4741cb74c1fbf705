//! Hierarchical multi-scale inference on one synthetic image.
//!
//! Runs the network at each scale, then blends the score maps lowest scale first:
//! `g = a·h_low + (1 − a)·h_high`. The manual blend is compared with `predict`.
//!
//! ```text
//! cargo run -p sidewalk-core --example multiscale_fusion -- [scales, e.g. 0.5,1,2]
//! ```

use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::model::{fuse_pair, FusedScoreMap, ModelConfig, ScoreMap, SegmentationModel};
use sidewalk::training::ImageSource;
use sidewalk::{LabelTaxonomy, Split};

fn main() -> sidewalk::Result<()> {
    let scales: Vec<f64> = std::env::args()
        .nth(1)
        .map_or("0.5,1,2".into(), |s| s)
        .split(',')
        .map(|s| s.parse().expect("scale"))
        .collect();

    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let syn = generate_synthetic_pool(&SyntheticSceneSpec::new(2, taxonomy.clone()), 30, &ClassMix::uniform(&materials))?;
    let image = syn.images.image(&syn.pool.ids_in(Split::Test)[0])?;

    let mut config = ModelConfig::new(taxonomy.len());
    config.inference_scales = scales.clone();
    let model: SegmentationModel = SegmentationModel::new(config)?;
    println!("{} parameters shared by every scale", model.parameter_count());

    let outputs = scales
        .iter()
        .map(|&s| model.forward_single_scale(&image, s))
        .collect::<sidewalk::Result<Vec<_>>>()?;
    for o in &outputs {
        let a = &o.attention.weights.data;
        let mean = a.iter().sum::<f32>() / a.len() as f32;
        println!("scale {:>4}: attention mean {mean:.3}", o.scores.scale);
    }

    // Highest scale is the innermost term; each lower scale wraps the running blend.
    let (last, rest) = outputs.split_last().expect("at least one scale");
    let mut fused = FusedScoreMap {
        values: last.scores.values.clone(),
    };
    for o in rest.iter().rev() {
        let inner = ScoreMap {
            values: fused.values,
            scale: o.scores.scale,
        };
        fused = fuse_pair(&o.scores, &o.attention, &inner)?;
    }

    let predicted = model.predict(&image, &scales)?;
    let max_diff = fused
        .values
        .data
        .iter()
        .zip(&predicted.fused.values.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("manual blend vs predict: max |diff| {max_diff:.2e}");
    println!("image uncertainty {:.4}", predicted.uncertainty.image_uncertainty);
    Ok(())
}
