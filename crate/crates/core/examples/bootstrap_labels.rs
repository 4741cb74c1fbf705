//! Seeds the first training labels from a generic street-scene segmenter and a city inventory.
//!
//! Every sidewalk pixel takes the material the inventory lists for the image's street
//! segment; road and everything else keep their generic meaning. Segments missing from the
//! inventory are skipped. The resulting masks are scored against the true synthetic masks,
//! which reveals what the shortcut costs where a sidewalk mixes materials.
//!
//! ```text
//! cargo run -p sidewalk-core --example bootstrap_labels -- [n_images]
//! ```

use std::collections::HashMap;

use sidewalk::active::bootstrap::MaskBackedSegmenter;
use sidewalk::active::bootstrap_initial_labels;
use sidewalk::evaluation::{compute_metrics, percent, ConfusionMatrix};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::training::ImageSource;
use sidewalk::LabelTaxonomy;

fn main() -> sidewalk::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(60, |s| s.parse().expect("n_images"));
    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let spec = SyntheticSceneSpec {
        secondary_probability: 0.4,
        ..SyntheticSceneSpec::new(4, taxonomy.clone())
    };
    let syn = generate_synthetic_pool(&spec, n, &ClassMix::uniform(&materials))?;

    // The synthetic inventory lists each segment's prevailing material; every fifth is missing.
    let inventory: HashMap<String, _> = syn
        .pool
        .records()
        .iter()
        .enumerate()
        .filter(|(k, _)| k % 5 != 4)
        .filter_map(|(_, r)| r.inventory_label.map(|c| (r.segment_id.clone(), c)))
        .collect();

    let pairs = syn
        .pool
        .records()
        .iter()
        .map(|r| Ok(((*syn.images.image(&r.image_id)?).clone(), syn.truth[&r.image_id].clone())))
        .collect::<sidewalk::Result<Vec<_>>>()?;
    let generic = MaskBackedSegmenter::new(taxonomy.clone(), pairs);

    let outcome = bootstrap_initial_labels(syn.pool.records(), &syn.images, &generic, &inventory, &taxonomy)?;
    println!("{} masks bootstrapped, {} images skipped", outcome.masks.len(), outcome.skipped.len());
    if let Some(s) = outcome.skipped.first() {
        println!("  e.g. {}: {}", s.image_id, s.reason);
    }

    let mut cm = ConfusionMatrix::new(taxonomy.len());
    for (id, mask) in &outcome.masks {
        cm.accumulate(mask, &syn.truth[id])?;
    }
    let report = compute_metrics(&cm, &taxonomy)?;
    println!("bootstrap labels vs truth: mIoU {}, materials {}", percent(report.miou_all), percent(report.materials_or_zero()));
    for c in &report.per_class {
        println!("  {:>10}  {}", c.name, c.iou.map_or("-".into(), percent));
    }
    Ok(())
}
