//! Renders a grid of synthetic street scenes next to their label masks.
//!
//! ```text
//! cargo run -p sidewalk-core --example synthetic_scenes -- /tmp/scenes.png
//! ```

use sidewalk::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use sidewalk::training::ImageSource;
use sidewalk::{LabelTaxonomy, RgbImage};

fn main() -> sidewalk::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_scenes.png".into());
    let taxonomy = LabelTaxonomy::canonical();
    let spec = SyntheticSceneSpec::new(3, taxonomy.clone());
    let materials: Vec<&str> = taxonomy
        .material_ids()
        .into_iter()
        .map(|id| taxonomy.get(id).unwrap().name.as_str())
        .collect();
    let syn = generate_synthetic_pool(&spec, 60, &ClassMix::uniform(&materials))?;

    let (cols, rows) = (8, 4);
    let (w, h) = (spec.width, spec.height);
    let mut mosaic = RgbImage::black(cols * w, rows * 2 * h);
    for (i, (id, mask)) in syn.truth.iter().take(cols * rows).enumerate() {
        let image = syn.images.image(id)?;
        let (ox, oy) = ((i % cols) * w, (i / cols) * 2 * h);
        for y in 0..h {
            for x in 0..w {
                mosaic.set(ox + x, oy + y, image.get(x, y));
                let color = taxonomy.get(mask.get(x, y)).unwrap().color;
                mosaic.set(ox + x, oy + h + y, color.map(|c| f32::from(c) / 255.0));
            }
        }
        let layout = &syn.layouts[id];
        println!(
            "{id}: {} (+{:?}) on the {:?} side",
            taxonomy.get(layout.primary).unwrap().name,
            layout.secondary.map(|c| taxonomy.get(c).unwrap().name.clone()),
            layout.side
        );
    }
    mosaic.save(std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
