//! Per-class scores, the all-class mIoU and the materials-only mIoU.
//!
//! First aggregates the published per-class IoUs of the ten-class model, then scores a few
//! synthetic masks against a deliberately corrupted copy of themselves.
//!
//! ```text
//! cargo run -p sidewalk-core --example evaluate_table
//! ```

use sidewalk::evaluation::{compute_metrics, mean_iou, percent, ConfusionMatrix};
use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::{LabelTaxonomy, Provenance, Split};

const PUBLISHED: [(&str, f64); 10] = [
    ("concrete", 88.69),
    ("brick", 91.79),
    ("granite/bluestone", 81.09),
    ("asphalt", 92.58),
    ("mixed", 86.11),
    ("granite block/stone", 82.92),
    ("hexagonal asphalt paver", 92.81),
    ("cobblestone", 90.95),
    ("road", 99.01),
    ("background", 99.16),
];

fn main() -> sidewalk::Result<()> {
    let taxonomy = LabelTaxonomy::canonical();
    let mut per_class = vec![None; taxonomy.len()];
    for (name, iou) in PUBLISHED {
        per_class[taxonomy.id_of(name).expect("canonical class").index()] = Some(iou / 100.0);
    }
    let (all, materials) = mean_iou(&per_class, &taxonomy);
    println!("published table: mIoU {} | eight materials {}", percent(all.unwrap()), percent(materials.unwrap()));

    let materials = ["concrete", "brick", "asphalt", "mixed"];
    let taxonomy = LabelTaxonomy::with_materials(&materials)?;
    let syn = generate_synthetic_pool(&SyntheticSceneSpec::new(3, taxonomy.clone()), 40, &ClassMix::uniform(&materials))?;
    let brick = taxonomy.id_of("brick").unwrap();
    let concrete = taxonomy.id_of("concrete").unwrap();
    let mut cm = ConfusionMatrix::new(taxonomy.len());
    for id in syn.pool.ids_in(Split::Test) {
        let truth = syn.pool.mask(&id)?;
        // Every third brick pixel is called concrete.
        let mut pred = truth.as_ref().clone().with_provenance(Provenance::ModelPrediction);
        for (i, p) in pred.pixels_mut().iter_mut().enumerate() {
            if *p == brick.0 && i % 3 == 0 {
                *p = concrete.0;
            }
        }
        cm.accumulate(&pred, &truth)?;
    }
    let report = compute_metrics(&cm, &taxonomy)?;
    println!("\n{:>12}  {:>7}  {:>9}  {:>7}  {:>8}", "class", "IoU", "precision", "recall", "pixels");
    for c in &report.per_class {
        let f = |v: Option<f64>| v.map_or("-".into(), percent);
        println!("{:>12}  {:>7}  {:>9}  {:>7}  {:>8}", c.name, f(c.iou), f(c.precision), f(c.recall), c.truth_pixels);
    }
    println!("mIoU {} | materials {}", percent(report.miou_all), percent(report.materials_or_zero()));
    Ok(())
}
