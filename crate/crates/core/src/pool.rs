//! Image records and the labeled/unlabeled pool bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::CameraParams;
use crate::mask::{MaskImage, Provenance};
use crate::taxonomy::{ClassId, LabelTaxonomy};

/// Records with more than this share of sidewalk occluded are rejected at ingestion.
pub const MAX_OCCLUSION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    Unlabeled,
}

impl Split {
    pub fn is_labeled(self) -> bool {
        self != Split::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub lat: f64,
    pub lon: f64,
    pub segment_id: String,
    pub camera: CameraParams,
    pub side: CaptureSide,
    pub split: Split,
    pub occlusion_fraction: f64,
    pub inventory_label: Option<ClassId>,
    /// Path as written in the manifest; resolved against the pool's base directory.
    pub image_path: String,
}

impl ImageRecord {
    pub fn check_admissible(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.occlusion_fraction) {
            return Err(Error::Integrity(format!(
                "{}: occlusion_fraction {} outside [0, 1]",
                self.image_id, self.occlusion_fraction
            )));
        }
        if self.occlusion_fraction > MAX_OCCLUSION {
            return Err(Error::Precondition(format!(
                "{}: occlusion_fraction {} exceeds {MAX_OCCLUSION}",
                self.image_id, self.occlusion_fraction
            )));
        }
        Ok(())
    }
}

/// Where a labeled record's mask lives.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSlot {
    Memory(Arc<MaskImage>),
    /// `raw` is the manifest string, `resolved` the path opened on demand.
    File { raw: String, resolved: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPool {
    taxonomy: LabelTaxonomy,
    records: Vec<ImageRecord>,
    index: HashMap<String, usize>,
    masks: BTreeMap<String, MaskSlot>,
    base_dir: Option<PathBuf>,
}

impl DatasetPool {
    pub fn new(taxonomy: LabelTaxonomy) -> Self {
        Self {
            taxonomy,
            records: Vec::new(),
            index: HashMap::new(),
            masks: BTreeMap::new(),
            base_dir: None,
        }
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    pub fn resolve(&self, raw: &str) -> PathBuf {
        match &self.base_dir {
            Some(base) if Path::new(raw).is_relative() => base.join(raw),
            _ => PathBuf::from(raw),
        }
    }

    pub fn taxonomy(&self) -> &LabelTaxonomy {
        &self.taxonomy
    }

    /// Replaces the taxonomy with an append-only extension of it.
    pub fn set_taxonomy(&mut self, taxonomy: LabelTaxonomy) -> Result<()> {
        let preserved = self
            .taxonomy
            .classes()
            .iter()
            .all(|c| taxonomy.get(c.id).is_some_and(|n| n.name == c.name));
        if !preserved {
            return Err(Error::Precondition("new taxonomy must extend the current one".into()));
        }
        self.taxonomy = taxonomy;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn ids_in(&self, split: Split) -> Vec<String> {
        self.records_in(split).map(|r| r.image_id.clone()).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records_in(split).count()
    }

    pub fn mask_slot(&self, image_id: &str) -> Option<&MaskSlot> {
        self.masks.get(image_id)
    }

    pub fn mask(&self, image_id: &str) -> Result<Arc<MaskImage>> {
        match self.masks.get(image_id) {
            Some(MaskSlot::Memory(m)) => Ok(m.clone()),
            Some(MaskSlot::File { resolved, .. }) => {
                let mask = MaskImage::load_png(resolved, Provenance::HumanRefined)?;
                mask.validate(&self.taxonomy)?;
                Ok(Arc::new(mask))
            }
            None => Err(Error::NotFound(format!("no mask for {image_id}"))),
        }
    }

    /// Adds a record after checking admissibility and uniqueness.
    pub fn insert(&mut self, record: ImageRecord, mask: Option<MaskSlot>) -> Result<()> {
        record.check_admissible()?;
        if self.index.contains_key(&record.image_id) {
            return Err(Error::Integrity(format!("duplicate image_id {}", record.image_id)));
        }
        if let Some(label) = record.inventory_label {
            if !self.taxonomy.contains(label) {
                return Err(Error::InvalidClass {
                    id: label.0 as u32,
                    num_classes: self.taxonomy.len(),
                });
            }
        }
        match (record.split.is_labeled(), &mask) {
            (true, None) => {
                return Err(Error::Integrity(format!(
                    "labeled record {} has no mask",
                    record.image_id
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Integrity(format!(
                    "unlabeled record {} must not carry a mask",
                    record.image_id
                )))
            }
            _ => {}
        }
        if let Some(MaskSlot::Memory(m)) = &mask {
            m.validate(&self.taxonomy)?;
        }
        if let Some(slot) = mask {
            self.masks.insert(record.image_id.clone(), slot);
        }
        self.index.insert(record.image_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Moves unlabeled records into the training split with their refined masks.
    ///
    /// All-or-nothing: on error the receiver is untouched and no new pool is produced.
    pub fn promote_to_training(&self, image_ids: &[String], masks: &HashMap<String, MaskImage>) -> Result<DatasetPool> {
        let mut seen = std::collections::HashSet::new();
        for id in image_ids {
            let record = self
                .record(id)
                .ok_or_else(|| Error::Precondition(format!("{id} is not in the pool")))?;
            if record.split != Split::Unlabeled {
                return Err(Error::Precondition(format!("{id} is not unlabeled (split {:?})", record.split)));
            }
            if !seen.insert(id) {
                return Err(Error::Precondition(format!("{id} listed twice")));
            }
            let mask = masks
                .get(id)
                .ok_or_else(|| Error::Precondition(format!("no refined mask for {id}")))?;
            if mask.provenance != Provenance::HumanRefined {
                return Err(Error::Precondition(format!(
                    "mask for {id} has provenance {:?}, expected human_refined",
                    mask.provenance
                )));
            }
            mask.validate(&self.taxonomy)?;
        }
        let mut next = self.clone();
        for id in image_ids {
            let i = next.index[id];
            next.records[i].split = Split::Train;
            next.masks.insert(id.clone(), MaskSlot::Memory(Arc::new(masks[id].clone())));
        }
        Ok(next)
    }

    /// Checks the pool invariants; used after deserialization and in tests.
    pub fn check_invariants(&self) -> Result<()> {
        for r in &self.records {
            let has_mask = self.masks.contains_key(&r.image_id);
            if r.split.is_labeled() != has_mask {
                return Err(Error::Integrity(format!("mask presence mismatch for {}", r.image_id)));
            }
        }
        if self.index.len() != self.records.len() {
            return Err(Error::Integrity("duplicate ids".into()));
        }
        Ok(())
    }
}
