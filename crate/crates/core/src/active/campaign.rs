use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::acquisition::{plan_random_acquisition, plan_stage_acquisition, Acquisition};
use super::analysis::{analyze_validation, AnalysisConfig};
use super::budget::BudgetSchedule;
use super::selection::score_unlabeled;
use crate::error::{Error, Result};
use crate::evaluation::percent;
use crate::io;
use crate::model::{Backbone, ModelConfig, SegmentationModel};
use crate::pool::{DatasetPool, Split};
use crate::review::{EnqueueItem, OracleReviewer, ReviewQueue, TaskStatus};
use crate::training::{evaluate_split, train_stage, ImageSource, StageCheckpoint, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Margin-sampling share plus similarity to validation failures and successes.
    Full,
    /// Uniform random baseline with the same budget.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub max_stages: usize,
    pub sample_size: usize,
    /// Stop when best-stage material mIoU gains less than this (as a fraction) ...
    pub min_improvement: f64,
    /// ... for this many consecutive stages.
    pub patience: usize,
    pub strategy: Strategy,
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    /// Scales for scoring, analysis and test evaluation; `None` uses the model's.
    pub scales: Option<Vec<f64>>,
    /// How long to wait for reviewers before pausing.
    pub review_timeout_ms: u64,
    pub poll_interval_ms: u64,
    /// Report test-split metrics after every stage.
    pub evaluate_test: bool,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            max_stages: 5,
            sample_size: 300,
            min_improvement: 0.005,
            patience: 2,
            strategy: Strategy::Full,
            model: None,
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            scales: None,
            review_timeout_ms: 0,
            poll_interval_ms: 500,
            evaluate_test: true,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_stages == 0 {
            return Err(Error::Config("max_stages must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.train.validate()?;
        if let Some(s) = &self.scales {
            crate::model::check_scales(s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub miou_all: f64,
    pub miou_materials: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
}

/// Outcome of one active-learning stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub stage: usize,
    pub train_count: usize,
    pub unlabeled_count: usize,
    pub best_epoch: usize,
    pub validation: SplitScore,
    pub test: Option<SplitScore>,
    pub acquisition: Vec<Acquisition>,
    pub stop: bool,
    pub stop_reason: Option<String>,
    /// Present in memory; persisted separately as `stage_k/checkpoint.json`.
    #[serde(skip)]
    pub checkpoint: Option<StageCheckpoint>,
}

impl StageState {
    /// The value the stopping rule tracks.
    pub fn best_material_miou(&self) -> f64 {
        self.validation.miou_materials.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
enum Phase {
    Training { stage: usize },
    AwaitingReview { stage: usize },
    Done,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CampaignRecord {
    config: CampaignConfig,
    stages: Vec<StageState>,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CampaignStatus {
    Completed,
    /// Reviewers did not finish stage `stage` in time; resume once they have.
    Paused { stage: usize },
}

pub struct CampaignRun<B: Backbone> {
    pub stages: Vec<StageState>,
    pub status: CampaignStatus,
    pub pool: DatasetPool,
    pub model: SegmentationModel<B>,
}

/// Whatever produces refined masks once a stage's tasks are queued.
pub trait ReviewDriver {
    fn stage_enqueued(&mut self, queue: &ReviewQueue, stage: usize) -> Result<()>;
}

impl ReviewDriver for OracleReviewer {
    fn stage_enqueued(&mut self, queue: &ReviewQueue, stage: usize) -> Result<()> {
        let n = self.review_stage(queue, stage)?;
        log::info!("oracle refined {n} masks for stage {stage}");
        Ok(())
    }
}

/// Human reviewers working through the HTTP service; the campaign only waits.
pub struct ExternalReviewers;

impl ReviewDriver for ExternalReviewers {
    fn stage_enqueued(&mut self, _: &ReviewQueue, stage: usize) -> Result<()> {
        log::info!("stage {stage} queued for human review");
        Ok(())
    }
}

/// True when each of the last `patience` stage-over-stage gains is below `min_improvement`.
pub fn should_stop(history: &[f64], min_improvement: f64, patience: usize) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    history.windows(2).rev().take(patience).all(|w| w[1] - w[0] < min_improvement)
}

pub fn stage_dir(root: &Path, stage: usize) -> PathBuf {
    root.join(format!("stage_{stage}"))
}

struct Ctx<'a> {
    config: &'a CampaignConfig,
    images: &'a dyn ImageSource,
    queue: &'a ReviewQueue,
    dir: Option<&'a Path>,
}

impl Ctx<'_> {
    fn save(&self, stages: &[StageState], phase: Phase) -> Result<()> {
        if let Some(dir) = self.dir {
            let record = CampaignRecord {
                config: self.config.clone(),
                stages: stages.to_vec(),
                phase,
            };
            io::write_json(&dir.join("campaign.json"), &record)?;
        }
        Ok(())
    }
}

/// Runs stages until the stopping rule fires, `max_stages` is reached, or reviewers
/// time out. `pool` is the initial labeled/unlabeled pool; `model` the starting weights.
pub fn run_campaign<B: Backbone>(
    config: &CampaignConfig,
    pool: DatasetPool,
    model: SegmentationModel<B>,
    images: &dyn ImageSource,
    queue: &ReviewQueue,
    reviewer: &mut dyn ReviewDriver,
    dir: Option<&Path>,
) -> Result<CampaignRun<B>> {
    config.validate()?;
    if let Some(d) = dir {
        if d.join("campaign.json").exists() {
            return Err(Error::Precondition(format!(
                "{} already holds a campaign; resume it instead",
                d.display()
            )));
        }
    }
    let ctx = Ctx {
        config,
        images,
        queue,
        dir,
    };
    ctx.save(&[], Phase::Training { stage: 1 })?;
    drive(&ctx, Vec::new(), Phase::Training { stage: 1 }, pool, model, reviewer)
}

/// Picks up a campaign persisted under `dir`.
///
/// `initial_pool` must be the pool the campaign started from; promotions recorded in
/// the review queue are replayed on top of it.
pub fn resume_campaign<B: Backbone>(
    dir: &Path,
    initial_pool: DatasetPool,
    images: &dyn ImageSource,
    queue: &ReviewQueue,
    reviewer: &mut dyn ReviewDriver,
) -> Result<CampaignRun<B>> {
    let record: CampaignRecord = io::read_json(&dir.join("campaign.json"))?;
    let state = queue.state();
    let mut pool = initial_pool;
    for promo in &state.promotions {
        let masks: HashMap<String, crate::mask::MaskImage> = promo
            .image_ids
            .iter()
            .map(|id| {
                state
                    .tasks
                    .values()
                    .find(|t| &t.image_id == id && t.status == TaskStatus::Accepted)
                    .and_then(|t| t.refined.clone())
                    .map(|m| (id.clone(), m))
                    .ok_or_else(|| Error::Integrity(format!("promotion of {id} has no accepted mask")))
            })
            .collect::<Result<_>>()?;
        pool = pool.promote_to_training(&promo.image_ids, &masks)?;
    }
    let model = match record.stages.last() {
        Some(last) => StageCheckpoint::load(&stage_dir(dir, last.stage).join("checkpoint.json"))?
            .weights
            .restore::<B>()?,
        None => fresh_model(&record.config, &pool)?,
    };
    let ctx = Ctx {
        config: &record.config,
        images,
        queue,
        dir: Some(dir),
    };
    log::info!("resuming campaign in {} at {:?}", dir.display(), record.phase);
    drive(&ctx, record.stages.clone(), record.phase.clone(), pool, model, reviewer)
}

/// A new model sized for the pool's taxonomy.
pub fn fresh_model<B: Backbone>(config: &CampaignConfig, pool: &DatasetPool) -> Result<SegmentationModel<B>> {
    let mut mc = config.model.clone().unwrap_or_else(|| ModelConfig::new(pool.taxonomy().len()));
    mc.num_classes = pool.taxonomy().len();
    SegmentationModel::new(mc)
}

fn drive<B: Backbone>(
    ctx: &Ctx<'_>,
    mut stages: Vec<StageState>,
    mut phase: Phase,
    mut pool: DatasetPool,
    mut model: SegmentationModel<B>,
    reviewer: &mut dyn ReviewDriver,
) -> Result<CampaignRun<B>> {
    let config = ctx.config;
    let scales = config.scales.clone().unwrap_or_else(|| model.config().inference_scales.clone());
    loop {
        match phase {
            Phase::Done => {
                return Ok(CampaignRun {
                    stages,
                    status: CampaignStatus::Completed,
                    pool,
                    model,
                })
            }
            Phase::Training { stage } => {
                let state = run_stage(ctx, stage, &stages, &pool, &mut model, &scales)?;
                let stop = state.stop;
                if !stop {
                    enqueue(ctx, &state, &model, &scales)?;
                }
                stages.push(state);
                phase = if stop {
                    Phase::Done
                } else {
                    Phase::AwaitingReview { stage }
                };
                ctx.save(&stages, phase.clone())?;
                if !stop {
                    reviewer.stage_enqueued(ctx.queue, stage)?;
                }
            }
            Phase::AwaitingReview { stage } => {
                if !await_reviews(ctx, stage)? {
                    log::warn!("stage {stage}: reviews incomplete after timeout; campaign paused");
                    return Ok(CampaignRun {
                        stages,
                        status: CampaignStatus::Paused { stage },
                        pool,
                        model,
                    });
                }
                let ids: Vec<String> = ctx
                    .queue
                    .tasks(stage, None)?
                    .into_iter()
                    .map(|t| t.task_id)
                    .collect();
                let promotion = ctx.queue.accept_and_promote(&ids, &pool)?;
                pool = promotion.pool;
                phase = Phase::Training { stage: stage + 1 };
                ctx.save(&stages, phase.clone())?;
            }
        }
    }
}

fn score(report: &crate::evaluation::MetricsReport) -> SplitScore {
    SplitScore {
        miou_all: report.miou_all,
        miou_materials: report.miou_materials,
        per_class_iou: report.per_class.iter().map(|c| c.iou).collect(),
    }
}

fn run_stage<B: Backbone>(
    ctx: &Ctx<'_>,
    stage: usize,
    previous: &[StageState],
    pool: &DatasetPool,
    model: &mut SegmentationModel<B>,
    scales: &[f64],
) -> Result<StageState> {
    let config = ctx.config;
    let started = Instant::now();
    let checkpoint = train_stage(
        model,
        pool,
        ctx.images,
        &config.train,
        stage,
        config.seed.wrapping_add(stage as u64 * 1_000_003),
    )?;
    let validation = SplitScore {
        miou_all: checkpoint.best.val_miou_all,
        miou_materials: checkpoint.best.val_miou_materials,
        per_class_iou: checkpoint.best.per_class_iou.clone(),
    };
    let test = if config.evaluate_test && pool.count(Split::Test) > 0 {
        let (_, report) = evaluate_split(model, pool, ctx.images, Split::Test, scales)?;
        Some(score(&report))
    } else {
        None
    };

    let mut history: Vec<f64> = previous.iter().map(StageState::best_material_miou).collect();
    history.push(validation.miou_materials.unwrap_or(0.0));
    let (stop, stop_reason) = if stage >= config.max_stages {
        (true, Some(format!("reached max_stages = {}", config.max_stages)))
    } else if should_stop(&history, config.min_improvement, config.patience) {
        (
            true,
            Some(format!(
                "material mIoU gained < {} points for {} stages",
                config.min_improvement * 100.0,
                config.patience
            )),
        )
    } else if pool.count(Split::Unlabeled) == 0 {
        (true, Some("unlabeled pool exhausted".into()))
    } else {
        (false, None)
    };

    let mut state = StageState {
        stage,
        train_count: pool.count(Split::Train),
        unlabeled_count: pool.count(Split::Unlabeled),
        best_epoch: checkpoint.best.epoch,
        validation,
        test,
        acquisition: Vec::new(),
        stop,
        stop_reason,
        checkpoint: None,
    };

    if !stop {
        state.acquisition = match config.strategy {
            Strategy::Full => {
                let analysis = analyze_validation(
                    model,
                    pool,
                    ctx.images,
                    &AnalysisConfig {
                        seed: config.analysis.seed ^ stage as u64,
                        ..config.analysis
                    },
                    scales,
                )?;
                if let Some(dir) = ctx.dir {
                    io::write_json(&stage_dir(dir, stage).join("analysis.json"), &analysis)?;
                }
                let mut schedule = BudgetSchedule::new(stage, config.sample_size)?;
                schedule.best_fraction = config.analysis.best_fraction;
                schedule.failure_fraction = config.analysis.failure_fraction;
                let unlabeled = score_unlabeled(model, pool, ctx.images, scales)?;
                plan_stage_acquisition(&schedule, &unlabeled, &analysis.seed_features())?
            }
            Strategy::Random => plan_random_acquisition(
                stage,
                &pool.ids_in(Split::Unlabeled),
                config.sample_size,
                config.seed,
            ),
        };
        if state.acquisition.len() < config.sample_size {
            log::warn!(
                "stage {stage}: only {} unlabeled images left for a sample of {}",
                state.acquisition.len(),
                config.sample_size
            );
        }
    }

    if let Some(dir) = ctx.dir {
        let sd = stage_dir(dir, stage);
        checkpoint.save(&sd.join("checkpoint.json"))?;
        io::write_jsonl(&sd.join("metrics.jsonl"), &checkpoint.epochs)?;
        io::write_jsonl(&sd.join("acquisition.jsonl"), &state.acquisition)?;
    }
    log::info!(
        "stage {stage}: {} train images, val materials mIoU {}, test {} ({:.1?})",
        state.train_count,
        percent(state.best_material_miou()),
        state
            .test
            .as_ref()
            .map_or("-".into(), |t| percent(t.miou_materials.unwrap_or(0.0))),
        started.elapsed()
    );
    state.checkpoint = Some(checkpoint);
    Ok(state)
}

fn enqueue<B: Backbone>(ctx: &Ctx<'_>, state: &StageState, model: &SegmentationModel<B>, scales: &[f64]) -> Result<()> {
    let items = state
        .acquisition
        .iter()
        .map(|a| {
            let p = model.predict(ctx.images.image(&a.image_id)?.as_ref(), scales)?;
            Ok(EnqueueItem {
                image_id: a.image_id.clone(),
                predicted: p.mask,
                uncertainty: p.uncertainty,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.queue.enqueue_stage(state.stage, items)?;
    Ok(())
}

/// Waits until every task of `stage` is submitted or accepted. False on timeout.
fn await_reviews(ctx: &Ctx<'_>, stage: usize) -> Result<bool> {
    let deadline = Instant::now() + Duration::from_millis(ctx.config.review_timeout_ms);
    loop {
        let open = ctx
            .queue
            .tasks(stage, None)?
            .iter()
            .filter(|t| !matches!(t.status, TaskStatus::Submitted | TaskStatus::Accepted))
            .count();
        if open == 0 {
            return Ok(true);
        }
        if Instant::now() >= deadline {
            log::info!("stage {stage}: {open} tasks still open");
            return Ok(false);
        }
        std::thread::sleep(Duration::from_millis(ctx.config.poll_interval_ms.max(1)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rule_needs_consecutive_flat_stages() {
        assert!(!should_stop(&[0.5], 0.005, 2));
        assert!(!should_stop(&[0.5, 0.501], 0.005, 2));
        assert!(should_stop(&[0.5, 0.501, 0.503], 0.005, 2));
        assert!(!should_stop(&[0.5, 0.501, 0.6], 0.005, 2));
        assert!(!should_stop(&[0.5, 0.6, 0.601], 0.005, 2));
        assert!(should_stop(&[0.5, 0.6, 0.601, 0.602], 0.005, 2));
    }
}
