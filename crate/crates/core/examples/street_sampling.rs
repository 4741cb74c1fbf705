//! Plans image captures along a small street network and exports a per-segment material map.
//!
//! Capture points fall every `interval` meters along each usable segment, with one camera
//! looking at each sidewalk. The material histograms here are made up; in a real run they
//! come from `geo::aggregate_segments` over model predictions.
//!
//! ```text
//! cargo run -p sidewalk-core --example street_sampling -- [interval_m] [out.geojson]
//! ```

use std::collections::BTreeMap;

use sidewalk::geo::{
    bearing_and_headings, export_geojson, plan_captures, sample_points, write_geojson, CameraVariation, ExportStyle,
    SegmentSummary, StreetSegment,
};
use sidewalk::LabelTaxonomy;

fn main() -> sidewalk::Result<()> {
    let mut args = std::env::args().skip(1);
    let interval: f64 = args.next().map_or(5.0, |s| s.parse().expect("interval"));
    let out = args.next().unwrap_or_else(|| "street_sampling.geojson".into());

    let network = vec![
        StreetSegment::new("beacon", vec![(42.3560, -71.0700), (42.3565, -71.0680), (42.3568, -71.0660)], "residential")?,
        StreetSegment::new("charles", vec![(42.3560, -71.0700), (42.3580, -71.0705)], "secondary")?,
        StreetSegment::new("storrow", vec![(42.3570, -71.0750), (42.3590, -71.0700)], "motorway")?,
    ];
    for seg in &network {
        let points = sample_points(seg, interval)?;
        let h = bearing_and_headings(seg, 0.0)?;
        println!(
            "{:>8}: {:7.1} m, {:3} points, bearing {:6.2}, cameras {:6.2} / {:6.2}{}",
            seg.segment_id,
            seg.length_m,
            points.len(),
            h.bearing_deg,
            h.heading_left,
            h.heading_right,
            if seg.exclude { "  (excluded)" } else { "" }
        );
    }

    let captures = plan_captures(&network, interval, &CameraVariation::default())?;
    println!("{} capture requests; first: {:?}", captures.len(), captures.first());

    let taxonomy = LabelTaxonomy::canonical();
    let id = |n: &str| taxonomy.id_of(n).expect("canonical class");
    let summary = |seg: &str, counts: &[(&str, u64)]| {
        let histogram: BTreeMap<_, _> = counts.iter().map(|(n, c)| (id(n), *c)).collect();
        let total: u64 = histogram.values().sum();
        SegmentSummary {
            segment_id: seg.into(),
            dominant: histogram.iter().max_by_key(|(_, c)| **c).map(|(k, _)| *k),
            image_count: 2 * sample_points(network.iter().find(|s| s.segment_id == seg).unwrap(), interval).unwrap().len(),
            distribution: histogram.iter().map(|(k, c)| (*k, *c as f64 / total as f64)).collect(),
            material_histogram: histogram,
        }
    };
    let summaries = vec![
        summary("beacon", &[("brick", 9_000), ("concrete", 2_500)]),
        summary("charles", &[("concrete", 12_000), ("asphalt", 800)]),
    ];
    let export = export_geojson(&summaries, &network, &taxonomy, &ExportStyle::default());
    for f in export.collection["features"].as_array().into_iter().flatten() {
        let p = &f["properties"];
        println!("{:>8}: {} stroke {} width {}", p["segment_id"], p["dominant"], p["stroke"], p["stroke-width"]);
    }
    write_geojson(&export, std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
