//! Campaign directories: where the pool comes from and how a run is configured.
//!
//! ```text
//! <dir>/campaign.json     progress, written by the campaign driver
//! <dir>/project.json      this module's ProjectFile
//! <dir>/taxonomy.json     label taxonomy of the pool
//! <dir>/review/           review queue event log and snapshot
//! <dir>/stage_k/          acquisition.jsonl, analysis.json, checkpoint.json, metrics.jsonl
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::active::campaign::{fresh_model, resume_campaign, run_campaign, CampaignConfig, CampaignRun, ExternalReviewers, ReviewDriver};
use crate::error::{Error, Result};
use crate::imagery::{generate_synthetic_pool, ClassMix, SyntheticSceneSpec};
use crate::manifest::load_manifest;
use crate::mask::MaskImage;
use crate::pool::DatasetPool;
use crate::review::{OracleReviewer, ReviewConfig, ReviewQueue, SystemClock};
use crate::taxonomy::LabelTaxonomy;
use crate::training::{DefaultModel, DiskImages, ImageSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolSource {
    Manifest {
        manifest: PathBuf,
        /// `None` uses the canonical seven-class taxonomy.
        taxonomy: Option<PathBuf>,
    },
    Synthetic {
        spec: SyntheticSceneSpec,
        images: usize,
        mix: ClassMix,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerMode {
    /// Ground-truth substitution; needs a synthetic source.
    Oracle,
    /// People working through the review service.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub dir: PathBuf,
    pub source: PoolSource,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub review: ReviewConfig,
    pub reviewer: ReviewerMode,
}

pub struct LoadedPool {
    pub pool: DatasetPool,
    pub images: Box<dyn ImageSource>,
    /// Exact masks for every image when the source can provide them.
    pub truth: Option<BTreeMap<String, MaskImage>>,
}

impl PoolSource {
    /// Paths in the source are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<LoadedPool> {
        match self {
            PoolSource::Manifest { manifest, taxonomy } => {
                let taxonomy = match taxonomy {
                    Some(p) => LabelTaxonomy::load(&base.join(p))?,
                    None => LabelTaxonomy::canonical(),
                };
                let ingested = load_manifest(&base.join(manifest), taxonomy)?;
                for r in &ingested.rejected {
                    log::warn!("manifest record rejected: {r:?}");
                }
                let images = Box::new(DiskImages::for_pool(&ingested.pool));
                Ok(LoadedPool {
                    pool: ingested.pool,
                    images,
                    truth: None,
                })
            }
            PoolSource::Synthetic { spec, images, mix } => {
                let syn = generate_synthetic_pool(spec, *images, mix)?;
                Ok(LoadedPool {
                    pool: syn.pool,
                    images: Box::new(syn.images),
                    truth: Some(syn.truth),
                })
            }
        }
    }
}

impl ProjectFile {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    fn queue_for(&self, dir: PathBuf, taxonomy: LabelTaxonomy) -> Result<ReviewQueue> {
        ReviewQueue::open(&dir, taxonomy, self.review, Arc::new(SystemClock))
    }

    fn reviewer(&self, loaded: &LoadedPool) -> Result<Box<dyn ReviewDriver>> {
        match self.reviewer {
            ReviewerMode::External => Ok(Box::new(ExternalReviewers)),
            ReviewerMode::Oracle => {
                let truth = loaded
                    .truth
                    .clone()
                    .ok_or_else(|| Error::Config("the oracle reviewer needs a synthetic pool source".into()))?;
                Ok(Box::new(OracleReviewer::new("oracle", truth)))
            }
        }
    }

    /// Starts a new campaign. `dir` and relative source paths resolve against `base`.
    pub fn run(&self, base: &Path) -> Result<CampaignRun<crate::model::EncoderDecoder>> {
        let dir = absolute(&base.join(&self.dir))?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stored = ProjectFile {
            dir: dir.clone(),
            source: absolutize(&self.source, base)?,
            ..self.clone()
        };
        let loaded = stored.source.load(Path::new("/"))?;
        crate::io::write_json(&dir.join("project.json"), &stored)?;
        loaded.pool.taxonomy().save(&dir.join("taxonomy.json"))?;
        let queue = self.queue_for(dir.join("review"), loaded.pool.taxonomy().clone())?;
        let mut reviewer = self.reviewer(&loaded)?;
        let model: DefaultModel = fresh_model(&self.campaign, &loaded.pool)?;
        run_campaign(
            &self.campaign,
            loaded.pool,
            model,
            loaded.images.as_ref(),
            &queue,
            reviewer.as_mut(),
            Some(&dir),
        )
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn absolutize(source: &PoolSource, base: &Path) -> Result<PoolSource> {
    Ok(match source {
        PoolSource::Manifest { manifest, taxonomy } => PoolSource::Manifest {
            manifest: absolute(&base.join(manifest))?,
            taxonomy: taxonomy.as_ref().map(|t| absolute(&base.join(t))).transpose()?,
        },
        other => other.clone(),
    })
}

/// Opens the review queue of the campaign in `dir`.
pub fn open_queue(dir: &Path) -> Result<ReviewQueue> {
    let project = ProjectFile::load(&dir.join("project.json"))?;
    let taxonomy = LabelTaxonomy::load(&dir.join("taxonomy.json"))?;
    project.queue_for(dir.join("review"), taxonomy)
}

/// Continues the campaign stored in `dir`.
pub fn resume(dir: &Path) -> Result<CampaignRun<crate::model::EncoderDecoder>> {
    let project = ProjectFile::load(&dir.join("project.json"))?;
    let loaded = project.source.load(Path::new("/"))?;
    let queue = project.queue_for(dir.join("review"), loaded.pool.taxonomy().clone())?;
    let mut reviewer = project.reviewer(&loaded)?;
    resume_campaign(dir, loaded.pool, loaded.images.as_ref(), &queue, reviewer.as_mut())
}
