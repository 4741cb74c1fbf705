//! Line-delimited JSON manifests describing a [`DatasetPool`].
//!
//! One object per line with fixed keys:
//! `image_id, lat, lon, segment_id, heading_deg, pitch_deg, fov_deg, side, split,
//! occlusion_fraction, inventory_label, image_path, mask_path`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::CameraParams;
use crate::mask::Provenance;
use crate::pool::{CaptureSide, DatasetPool, ImageRecord, MaskSlot, Split};
use crate::taxonomy::{ClassId, LabelTaxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLine {
    pub image_id: String,
    pub lat: f64,
    pub lon: f64,
    pub segment_id: String,
    pub heading_deg: f64,
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub side: CaptureSide,
    pub split: Split,
    pub occlusion_fraction: f64,
    pub inventory_label: Option<ClassId>,
    pub image_path: String,
    pub mask_path: Option<String>,
}

impl ManifestLine {
    pub fn into_record(self) -> (ImageRecord, Option<String>) {
        (
            ImageRecord {
                image_id: self.image_id,
                lat: self.lat,
                lon: self.lon,
                segment_id: self.segment_id,
                camera: CameraParams {
                    heading_deg: self.heading_deg,
                    pitch_deg: self.pitch_deg,
                    fov_deg: self.fov_deg,
                },
                side: self.side,
                split: self.split,
                occlusion_fraction: self.occlusion_fraction,
                inventory_label: self.inventory_label,
                image_path: self.image_path,
            },
            self.mask_path,
        )
    }

    pub fn from_record(record: &ImageRecord, mask_path: Option<String>) -> Self {
        Self {
            image_id: record.image_id.clone(),
            lat: record.lat,
            lon: record.lon,
            segment_id: record.segment_id.clone(),
            heading_deg: record.camera.heading_deg,
            pitch_deg: record.camera.pitch_deg,
            fov_deg: record.camera.fov_deg,
            side: record.side,
            split: record.split,
            occlusion_fraction: record.occlusion_fraction,
            inventory_label: record.inventory_label,
            image_path: record.image_path.clone(),
            mask_path,
        }
    }
}

/// A record dropped during ingestion, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub pool: DatasetPool,
    pub rejected: Vec<Rejection>,
}

/// Parses a manifest. Over-occluded records are rejected and reported; every other
/// defect is an error.
pub fn parse_manifest(text: &str, taxonomy: LabelTaxonomy, base_dir: Option<&Path>) -> Result<Ingested> {
    let mut pool = DatasetPool::new(taxonomy);
    if let Some(dir) = base_dir {
        pool = pool.with_base_dir(dir);
    }
    let mut rejected = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: ManifestLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let (record, mask_path) = line.into_record();
        if record.occlusion_fraction > crate::pool::MAX_OCCLUSION {
            log::warn!(
                "rejecting {} at line {line_no}: occlusion_fraction {}",
                record.image_id,
                record.occlusion_fraction
            );
            rejected.push(Rejection {
                line: line_no,
                image_id: record.image_id,
                reason: format!("occlusion_fraction {} exceeds {}", record.occlusion_fraction, crate::pool::MAX_OCCLUSION),
            });
            continue;
        }
        let slot = match mask_path {
            Some(raw) => {
                let resolved = pool.resolve(&raw);
                if !resolved.exists() {
                    return Err(Error::Integrity(format!(
                        "line {line_no}: mask {} for {} does not exist",
                        resolved.display(),
                        record.image_id
                    )));
                }
                Some(MaskSlot::File { raw, resolved })
            }
            None => None,
        };
        pool.insert(record, slot).map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(format!("line {line_no}: {m}")),
            other => other,
        })?;
    }
    Ok(Ingested { pool, rejected })
}

pub fn load_manifest(path: &Path, taxonomy: LabelTaxonomy) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, taxonomy, path.parent())
}

/// Serializes the pool. In-memory masks are written as indexed PNGs under
/// `masks/<image_id>.png` relative to the manifest.
pub fn render_manifest(pool: &DatasetPool, mask_dir: Option<&Path>) -> Result<String> {
    let mut out = String::new();
    for record in pool.records() {
        let mask_path = match pool.mask_slot(&record.image_id) {
            None => None,
            Some(MaskSlot::File { raw, .. }) => Some(raw.clone()),
            Some(MaskSlot::Memory(mask)) => {
                let rel = format!("masks/{}.png", record.image_id);
                if let Some(dir) = mask_dir {
                    mask.save_png(&dir.join(&rel), Some(pool.taxonomy()))?;
                }
                Some(rel)
            }
        };
        out.push_str(&serde_json::to_string(&ManifestLine::from_record(record, mask_path))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_manifest(pool: &DatasetPool, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = render_manifest(pool, Some(dir))?;
    crate::io::write_atomic(path, text.as_bytes())
}

/// Rebuilds in-memory mask slots, e.g. after a resume, so the pool no longer depends on files.
pub fn materialize_masks(pool: &DatasetPool) -> Result<DatasetPool> {
    let mut out = DatasetPool::new(pool.taxonomy().clone());
    if let Some(dir) = pool.base_dir() {
        out = out.with_base_dir(dir);
    }
    for record in pool.records() {
        let slot = match pool.mask_slot(&record.image_id) {
            Some(_) => Some(MaskSlot::Memory(Arc::new(
                pool.mask(&record.image_id)?.as_ref().clone().with_provenance(Provenance::HumanRefined),
            ))),
            None => None,
        };
        out.insert(record.clone(), slot)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskImage;

    fn line(id: &str, split: &str, occ: f64, mask: Option<&str>) -> String {
        let mask = mask.map(|m| format!("\"{m}\"")).unwrap_or("null".into());
        format!(
            r#"{{"image_id":"{id}","lat":42.3601,"lon":-71.0589,"segment_id":"s1","heading_deg":90.0,"pitch_deg":0.0,"fov_deg":80.0,"side":"left","split":"{split}","occlusion_fraction":{occ:?},"inventory_label":null,"image_path":"img/{id}.png","mask_path":{mask}}}"#
        )
    }

    fn write_mask(dir: &Path, name: &str) {
        MaskImage::filled(4, 4, ClassId(1), Provenance::HumanRefined)
            .save_png(&dir.join(name), None)
            .unwrap();
    }

    #[test]
    fn counts_splits() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "a.png");
        write_mask(dir.path(), "b.png");
        let text = [
            line("a", "train", 0.0, Some("a.png")),
            line("b", "train", 0.2, Some("b.png")),
            line("c", "unlabeled", 0.5, None),
        ]
        .join("\n");
        let ing = parse_manifest(&text, LabelTaxonomy::canonical(), Some(dir.path())).unwrap();
        assert_eq!(ing.pool.count(Split::Train), 2);
        assert_eq!(ing.pool.count(Split::Unlabeled), 1);
        assert!(ing.rejected.is_empty());
        assert_eq!(ing.pool.mask("a").unwrap().get(0, 0), ClassId(1));
    }

    #[test]
    fn rejects_over_occluded_records() {
        let text = [line("a", "unlabeled", 0.9, None), line("b", "unlabeled", 0.8, None)].join("\n");
        let ing = parse_manifest(&text, LabelTaxonomy::canonical(), None).unwrap();
        assert_eq!(ing.pool.len(), 1);
        assert_eq!(ing.rejected.len(), 1);
        assert_eq!(ing.rejected[0].image_id, "a");
        assert_eq!(ing.rejected[0].line, 1);
    }

    #[test]
    fn empty_manifest_gives_empty_pool() {
        let ing = parse_manifest("", LabelTaxonomy::canonical(), None).unwrap();
        assert!(ing.pool.is_empty());
    }

    #[test]
    fn errors_name_the_line_or_integrity_problem() {
        let text = [line("a", "unlabeled", 0.1, None), "{not json".to_string()].join("\n");
        match parse_manifest(&text, LabelTaxonomy::canonical(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dup = [line("a", "unlabeled", 0.1, None), line("a", "unlabeled", 0.1, None)].join("\n");
        assert!(matches!(
            parse_manifest(&dup, LabelTaxonomy::canonical(), None),
            Err(Error::Integrity(_))
        ));
        let unmasked = line("a", "train", 0.1, None);
        assert!(matches!(
            parse_manifest(&unmasked, LabelTaxonomy::canonical(), None),
            Err(Error::Integrity(_))
        ));
        let missing_file = line("a", "train", 0.1, Some("nope.png"));
        assert!(matches!(
            parse_manifest(&missing_file, LabelTaxonomy::canonical(), Some(Path::new("/nonexistent"))),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn render_is_byte_identical_for_file_backed_pools() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "a.png");
        let text = [line("a", "validation", 0.0, Some("a.png")), line("c", "unlabeled", 0.25, None)].join("\n") + "\n";
        let ing = parse_manifest(&text, LabelTaxonomy::canonical(), Some(dir.path())).unwrap();
        assert_eq!(render_manifest(&ing.pool, None).unwrap(), text);
    }
}
