//! Expert review queue: stage acquisitions go out as tasks, refined masks come back.
//!
//! Every change is an event folded into [`QueueState`]; with a directory attached the
//! events are appended to `events.jsonl` and periodically compacted into `snapshot.json`.

mod oracle;
mod state;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use oracle::OracleReviewer;
pub use state::{PromotionRecord, QueueState, RefinementStats, ReviewEvent, ReviewTask, TaskStatus};

use crate::active::UncertaintyMap;
use crate::error::{Error, Result};
use crate::evaluation::ConfusionMatrix;
use crate::io;
use crate::mask::{MaskImage, Provenance};
use crate::pool::DatasetPool;
use crate::taxonomy::LabelTaxonomy;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock for tests and simulations; only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub claim_timeout_ms: u64,
    /// Events between automatic snapshots when persisted.
    pub compact_every: usize,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            claim_timeout_ms: 30 * 60 * 1000,
            compact_every: 256,
        }
    }
}

/// One image handed to reviewers.
#[derive(Debug, Clone)]
pub struct EnqueueItem {
    pub image_id: String,
    pub predicted: MaskImage,
    pub uncertainty: UncertaintyMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub task_id: String,
    pub reviewer_id: String,
    pub token: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Promotion {
    /// `None` when every requested image had already been promoted.
    pub record: Option<PromotionRecord>,
    pub pool: DatasetPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub counts: BTreeMap<TaskStatus, usize>,
    /// Rows are accepted (refined) labels, columns the model's predictions.
    pub confusion: ConfusionMatrix,
    pub mean_fraction_changed: Option<f64>,
    pub mean_edit_seconds: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LoggedEvent {
    seq: u64,
    event: ReviewEvent,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    state: QueueState,
}

struct Store {
    events: PathBuf,
    snapshot: PathBuf,
    pending: usize,
}

struct Inner {
    state: QueueState,
    taxonomy: LabelTaxonomy,
    store: Option<Store>,
}

pub struct ReviewQueue {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    config: ReviewConfig,
}

impl ReviewQueue {
    pub fn in_memory(taxonomy: LabelTaxonomy, config: ReviewConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner: Mutex::new(Inner {
                state: QueueState::default(),
                taxonomy,
                store: None,
            }),
            clock,
            config,
        }
    }

    /// Opens (or creates) a persisted queue, replaying the event log over the last snapshot.
    pub fn open(dir: &Path, taxonomy: LabelTaxonomy, config: ReviewConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let snapshot = dir.join("snapshot.json");
        let events = dir.join("events.jsonl");
        let mut state = if snapshot.exists() {
            io::read_json::<Snapshot>(&snapshot)?.state
        } else {
            QueueState::default()
        };
        let mut pending = 0;
        if events.exists() {
            let text = std::fs::read_to_string(&events).map_err(|e| Error::io(&events, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let logged: LoggedEvent = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if logged.seq <= state.seq {
                    continue;
                }
                state.apply(&logged.event)?;
                pending += 1;
            }
        }
        Ok(Self {
            inner: Mutex::new(Inner {
                state,
                taxonomy,
                store: Some(Store {
                    events,
                    snapshot,
                    pending,
                }),
            }),
            clock,
            config,
        })
    }

    pub fn config(&self) -> &ReviewConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(&self, inner: &mut Inner, event: ReviewEvent) -> Result<()> {
        inner.state.apply(&event)?;
        if let Some(store) = &mut inner.store {
            io::append_jsonl(
                &store.events,
                &LoggedEvent {
                    seq: inner.state.seq,
                    event,
                },
            )?;
            store.pending += 1;
            if store.pending >= self.config.compact_every {
                Self::write_snapshot(&inner.state, store)?;
            }
        }
        Ok(())
    }

    fn write_snapshot(state: &QueueState, store: &mut Store) -> Result<()> {
        io::write_json(&store.snapshot, &Snapshot { state: state.clone() })?;
        io::write_atomic(&store.events, b"")?;
        store.pending = 0;
        Ok(())
    }

    /// Writes a snapshot and truncates the event log.
    pub fn compact(&self) -> Result<()> {
        let mut inner = self.lock();
        let Inner { state, store, .. } = &mut *inner;
        if let Some(store) = store {
            Self::write_snapshot(state, store)?;
        }
        Ok(())
    }

    fn expire_locked(&self, inner: &mut Inner) -> Result<usize> {
        let now = self.clock.now_ms();
        let expired: Vec<String> = inner
            .state
            .tasks
            .values()
            .filter(|t| t.status == TaskStatus::Claimed)
            .filter(|t| t.claimed_at_ms.is_some_and(|at| now >= at.saturating_add(self.config.claim_timeout_ms)))
            .map(|t| t.task_id.clone())
            .collect();
        for task_id in &expired {
            log::info!("claim on {task_id} expired");
            self.commit(
                inner,
                ReviewEvent::ClaimExpired {
                    task_id: task_id.clone(),
                    at_ms: now,
                },
            )?;
        }
        Ok(expired.len())
    }

    /// Returns abandoned claims to pending.
    pub fn expire_claims(&self) -> Result<usize> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)
    }

    pub fn taxonomy(&self) -> LabelTaxonomy {
        self.lock().taxonomy.clone()
    }

    pub fn set_taxonomy(&self, taxonomy: LabelTaxonomy) {
        self.lock().taxonomy = taxonomy;
    }

    /// One pending task per image; images already queued for this stage are skipped.
    pub fn enqueue_stage(&self, stage: usize, items: Vec<EnqueueItem>) -> Result<Vec<ReviewTask>> {
        if items.is_empty() {
            return Err(Error::Precondition(format!("stage {stage}: acquisition is empty")));
        }
        let mut inner = self.lock();
        for item in items {
            let task_id = ReviewTask::id_for(stage, &item.image_id);
            if inner.state.tasks.contains_key(&task_id) {
                log::warn!("{task_id} already enqueued; skipping");
                continue;
            }
            if (item.predicted.width(), item.predicted.height()) != (item.uncertainty.width, item.uncertainty.height) {
                return Err(Error::shape(
                    format!("{}x{}", item.predicted.width(), item.predicted.height()),
                    format!("{}x{} uncertainty map", item.uncertainty.width, item.uncertainty.height),
                ));
            }
            let task = ReviewTask {
                task_id,
                image_id: item.image_id,
                stage,
                predicted: item.predicted,
                uncertainty: item.uncertainty,
                status: TaskStatus::Pending,
                reviewer_id: None,
                claim_token: None,
                claimed_at_ms: None,
                revision: 0,
                refined: None,
                stats: None,
            };
            self.commit(&mut inner, ReviewEvent::Enqueued { task: Box::new(task) })?;
        }
        Ok(inner.state.tasks.values().filter(|t| t.stage == stage).cloned().collect())
    }

    pub fn get(&self, task_id: &str) -> Result<ReviewTask> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)?;
        inner.state.task(task_id).cloned()
    }

    pub fn tasks(&self, stage: usize, status: Option<TaskStatus>) -> Result<Vec<ReviewTask>> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)?;
        Ok(inner
            .state
            .tasks
            .values()
            .filter(|t| t.stage == stage && status.is_none_or(|s| t.status == s))
            .cloned()
            .collect())
    }

    /// Statuses of every task, cheaper than cloning tasks.
    pub fn statuses(&self) -> BTreeMap<String, TaskStatus> {
        self.lock().state.tasks.iter().map(|(k, t)| (k.clone(), t.status)).collect()
    }

    pub fn state(&self) -> QueueState {
        self.lock().state.clone()
    }

    pub fn claim(&self, task_id: &str, reviewer_id: &str) -> Result<Claim> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)?;
        let now = self.clock.now_ms();
        let token = format!("{:032x}", rand::rng().random::<u128>());
        self.commit(
            &mut inner,
            ReviewEvent::Claimed {
                task_id: task_id.to_string(),
                reviewer_id: reviewer_id.to_string(),
                token: token.clone(),
                at_ms: now,
            },
        )?;
        Ok(Claim {
            task_id: task_id.to_string(),
            reviewer_id: reviewer_id.to_string(),
            token,
            expires_at_ms: now.saturating_add(self.config.claim_timeout_ms),
        })
    }

    /// Claims the first pending task of a stage, if any.
    pub fn claim_next(&self, stage: usize, reviewer_id: &str) -> Result<Option<Claim>> {
        let next = {
            let mut inner = self.lock();
            self.expire_locked(&mut inner)?;
            inner
                .state
                .tasks
                .values()
                .find(|t| t.stage == stage && t.status == TaskStatus::Pending)
                .map(|t| t.task_id.clone())
        };
        match next {
            Some(id) => match self.claim(&id, reviewer_id) {
                Ok(c) => Ok(Some(c)),
                // Another reviewer got there first.
                Err(Error::Conflict(_)) => self.claim_next(stage, reviewer_id),
                Err(e) => Err(e),
            },
            None => Ok(None),
        }
    }

    pub fn submit_refinement(&self, task_id: &str, token: &str, reviewer_id: &str, mask: MaskImage) -> Result<ReviewTask> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)?;
        let task = inner.state.task(task_id)?;
        if task.status != TaskStatus::Claimed {
            return Err(Error::Conflict(format!("task {task_id} is {}, not claimed", task.status.as_str())));
        }
        if task.reviewer_id.as_deref() != Some(reviewer_id) || task.claim_token.as_deref() != Some(token) {
            return Err(Error::Conflict(format!("stale or foreign claim on {task_id}")));
        }
        if mask.dims() != task.predicted.dims() {
            return Err(Error::shape(
                format!("{}x{}", task.predicted.width(), task.predicted.height()),
                format!("{}x{}", mask.width(), mask.height()),
            ));
        }
        mask.validate(&inner.taxonomy)?;
        let now = self.clock.now_ms();
        let stats = RefinementStats {
            edit_seconds: now.saturating_sub(task.claimed_at_ms.unwrap_or(now)) as f64 / 1000.0,
            fraction_changed: mask.fraction_changed(&task.predicted)?,
        };
        if task.revision > 0 {
            log::info!("{task_id}: revision {} replaces an earlier submission", task.revision + 1);
        }
        self.commit(
            &mut inner,
            ReviewEvent::Submitted {
                task_id: task_id.to_string(),
                reviewer_id: reviewer_id.to_string(),
                mask: mask.with_provenance(Provenance::HumanRefined),
                stats,
                at_ms: now,
            },
        )?;
        inner.state.task(task_id).cloned()
    }

    /// Approves a submitted mask. Promotion into the pool happens in [`Self::accept_and_promote`].
    pub fn accept(&self, task_id: &str) -> Result<ReviewTask> {
        let mut inner = self.lock();
        let at_ms = self.clock.now_ms();
        self.commit(
            &mut inner,
            ReviewEvent::Accepted {
                task_id: task_id.to_string(),
                at_ms,
            },
        )?;
        inner.state.task(task_id).cloned()
    }

    pub fn reject(&self, task_id: &str, reason: &str) -> Result<ReviewTask> {
        let mut inner = self.lock();
        let at_ms = self.clock.now_ms();
        self.commit(
            &mut inner,
            ReviewEvent::Rejected {
                task_id: task_id.to_string(),
                reason: reason.to_string(),
                at_ms,
            },
        )?;
        inner.state.task(task_id).cloned()
    }

    /// Puts a rejected task back up for review.
    pub fn requeue(&self, task_id: &str) -> Result<ReviewTask> {
        let mut inner = self.lock();
        let at_ms = self.clock.now_ms();
        self.commit(
            &mut inner,
            ReviewEvent::Requeued {
                task_id: task_id.to_string(),
                at_ms,
            },
        )?;
        inner.state.task(task_id).cloned()
    }

    /// Accepts the given tasks and moves their images into the training split.
    ///
    /// All-or-nothing: if any task is neither submitted nor accepted, nothing changes.
    /// Images promoted earlier are skipped, so repeated or concurrent calls promote
    /// each image exactly once; later calls return `record: None` and `pool` unchanged.
    pub fn accept_and_promote(&self, task_ids: &[String], pool: &DatasetPool) -> Result<Promotion> {
        let mut inner = self.lock();
        let ids: Vec<String> = task_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let mut to_accept = Vec::new();
        let mut masks = HashMap::new();
        let mut image_ids = Vec::new();
        for id in &ids {
            let task = inner.state.task(id)?;
            match task.status {
                TaskStatus::Submitted => to_accept.push(id.clone()),
                TaskStatus::Accepted => {}
                other => {
                    return Err(Error::Precondition(format!(
                        "task {id} is {}; batch not promoted",
                        other.as_str()
                    )))
                }
            }
            if inner.state.promoted.contains_key(&task.image_id) || masks.contains_key(&task.image_id) {
                continue;
            }
            let mask = task
                .refined
                .clone()
                .ok_or_else(|| Error::Integrity(format!("task {id} has no refined mask")))?;
            image_ids.push(task.image_id.clone());
            masks.insert(task.image_id.clone(), mask);
        }
        let next = if image_ids.is_empty() {
            pool.clone()
        } else {
            pool.promote_to_training(&image_ids, &masks)?
        };
        let at_ms = self.clock.now_ms();
        for id in to_accept {
            self.commit(&mut inner, ReviewEvent::Accepted { task_id: id, at_ms })?;
        }
        let record = if image_ids.is_empty() {
            None
        } else {
            let record = PromotionRecord {
                batch: inner.state.promotions.len() as u64 + 1,
                image_ids,
                at_ms,
            };
            self.commit(&mut inner, ReviewEvent::Promoted { record: record.clone() })?;
            Some(record)
        };
        Ok(Promotion { record, pool: next })
    }

    pub fn promoted(&self) -> BTreeMap<String, u64> {
        self.lock().state.promoted.clone()
    }

    pub fn stage_summary(&self, stage: usize) -> Result<StageSummary> {
        let mut inner = self.lock();
        self.expire_locked(&mut inner)?;
        let mut counts: BTreeMap<TaskStatus, usize> = TaskStatus::ALL.iter().map(|s| (*s, 0)).collect();
        let mut confusion = ConfusionMatrix::new(inner.taxonomy.len());
        let mut changed = Vec::new();
        let mut seconds = Vec::new();
        for t in inner.state.tasks.values().filter(|t| t.stage == stage) {
            *counts.entry(t.status).or_default() += 1;
            if t.status == TaskStatus::Accepted {
                if let Some(refined) = &t.refined {
                    confusion.accumulate(&t.predicted, refined)?;
                }
                if let Some(s) = t.stats {
                    changed.push(s.fraction_changed);
                    seconds.push(s.edit_seconds);
                }
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Ok(StageSummary {
            stage,
            counts,
            confusion,
            mean_fraction_changed: mean(&changed),
            mean_edit_seconds: mean(&seconds),
        })
    }
}
