use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::aggregate::SegmentSummary;
use super::network::StreetSegment;
use crate::error::Result;
use crate::taxonomy::LabelTaxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportStyle {
    pub stroke_width: f64,
    /// Segments whose dominant material is anything other than this one get a thicker line.
    pub baseline_material: String,
    pub emphasis_factor: f64,
}

impl Default for ExportStyle {
    fn default() -> Self {
        Self {
            stroke_width: 2.0,
            baseline_material: "concrete".into(),
            emphasis_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoJsonExport {
    pub collection: Value,
    /// Summaries without a matching segment geometry.
    pub skipped: Vec<String>,
}

fn hex(color: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", color[0], color[1], color[2])
}

/// Builds an RFC 7946 FeatureCollection of segment LineStrings (coordinates as `[lon, lat]`).
pub fn export_geojson(
    summaries: &[SegmentSummary],
    segments: &[StreetSegment],
    taxonomy: &LabelTaxonomy,
    style: &ExportStyle,
) -> GeoJsonExport {
    let geometry: HashMap<&str, &StreetSegment> = segments.iter().map(|s| (s.segment_id.as_str(), s)).collect();
    let mut features = Vec::new();
    let mut skipped = Vec::new();
    for summary in summaries {
        let Some(segment) = geometry.get(summary.segment_id.as_str()) else {
            log::warn!("no geometry for segment {}; feature skipped", summary.segment_id);
            skipped.push(summary.segment_id.clone());
            continue;
        };
        let dominant = summary.dominant.and_then(|id| taxonomy.get(id));
        let emphasized = dominant.is_some_and(|c| c.name != style.baseline_material);
        let width = if emphasized {
            style.stroke_width * style.emphasis_factor
        } else {
            style.stroke_width
        };
        let distribution: Map<String, Value> = summary
            .distribution
            .iter()
            .filter_map(|(id, share)| taxonomy.get(*id).map(|c| (c.name.clone(), json!(share))))
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": segment.polyline.iter().map(|&(lat, lon)| [lon, lat]).collect::<Vec<_>>(),
            },
            "properties": {
                "segment_id": summary.segment_id,
                "dominant": dominant.map(|c| c.name.clone()),
                "distribution": distribution,
                "image_count": summary.image_count,
                "stroke": hex(dominant.map(|c| c.color).unwrap_or([128, 128, 128])),
                "stroke-width": width,
            },
        }));
    }
    GeoJsonExport {
        collection: json!({ "type": "FeatureCollection", "features": features }),
        skipped,
    }
}

pub fn write_geojson(export: &GeoJsonExport, path: &Path) -> Result<()> {
    crate::io::write_json(path, &export.collection)
}
