use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::active::UncertaintyMap;
use crate::error::{Error, Result};
use crate::mask::MaskImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Claimed,
    Submitted,
    Accepted,
    Rejected,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 5] = [
        TaskStatus::Pending,
        TaskStatus::Claimed,
        TaskStatus::Submitted,
        TaskStatus::Accepted,
        TaskStatus::Rejected,
    ];

    /// The only legal edges. `Claimed -> Pending` is a claim expiring.
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, next),
            (Pending, Claimed) | (Claimed, Submitted) | (Claimed, Pending) | (Submitted, Accepted) | (Submitted, Rejected) | (Rejected, Pending)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Claimed => "claimed",
            TaskStatus::Submitted => "submitted",
            TaskStatus::Accepted => "accepted",
            TaskStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementStats {
    /// Seconds between claim and submission.
    pub edit_seconds: f64,
    /// Share of pixels that differ from the predicted mask, in [0, 1].
    pub fraction_changed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub task_id: String,
    pub image_id: String,
    pub stage: usize,
    pub predicted: MaskImage,
    pub uncertainty: UncertaintyMap,
    pub status: TaskStatus,
    pub reviewer_id: Option<String>,
    #[serde(default)]
    pub claim_token: Option<String>,
    #[serde(default)]
    pub claimed_at_ms: Option<u64>,
    pub revision: u32,
    #[serde(default)]
    pub refined: Option<MaskImage>,
    #[serde(default)]
    pub stats: Option<RefinementStats>,
}

impl ReviewTask {
    pub fn id_for(stage: usize, image_id: &str) -> String {
        format!("s{stage}-{image_id}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionRecord {
    pub batch: u64,
    pub image_ids: Vec<String>,
    pub at_ms: u64,
}

/// Everything that ever happens to the queue. State is a fold over these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReviewEvent {
    Enqueued {
        task: Box<ReviewTask>,
    },
    Claimed {
        task_id: String,
        reviewer_id: String,
        token: String,
        at_ms: u64,
    },
    ClaimExpired {
        task_id: String,
        at_ms: u64,
    },
    Submitted {
        task_id: String,
        reviewer_id: String,
        mask: MaskImage,
        stats: RefinementStats,
        at_ms: u64,
    },
    Accepted {
        task_id: String,
        at_ms: u64,
    },
    Rejected {
        task_id: String,
        reason: String,
        at_ms: u64,
    },
    Requeued {
        task_id: String,
        at_ms: u64,
    },
    Promoted {
        record: PromotionRecord,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub tasks: BTreeMap<String, ReviewTask>,
    /// image_id -> promotion batch.
    pub promoted: BTreeMap<String, u64>,
    pub promotions: Vec<PromotionRecord>,
    /// Sequence number of the last applied event.
    pub seq: u64,
}

impl QueueState {
    pub fn task(&self, task_id: &str) -> Result<&ReviewTask> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| Error::NotFound(format!("task {task_id}")))
    }

    fn transition(&mut self, task_id: &str, next: TaskStatus) -> Result<&mut ReviewTask> {
        let task = self
            .tasks
            .get_mut(task_id)
            .ok_or_else(|| Error::NotFound(format!("task {task_id}")))?;
        if !task.status.can_become(next) {
            return Err(Error::Conflict(format!(
                "task {task_id} is {}; cannot become {}",
                task.status.as_str(),
                next.as_str()
            )));
        }
        task.status = next;
        Ok(task)
    }

    /// Applies one event, or leaves the state untouched and returns an error.
    pub fn apply(&mut self, event: &ReviewEvent) -> Result<()> {
        match event {
            ReviewEvent::Enqueued { task } => {
                if self.tasks.contains_key(&task.task_id) {
                    return Err(Error::Conflict(format!("task {} already exists", task.task_id)));
                }
                if task.status != TaskStatus::Pending {
                    return Err(Error::Conflict(format!("task {} enqueued as {:?}", task.task_id, task.status)));
                }
                self.tasks.insert(task.task_id.clone(), (**task).clone());
            }
            ReviewEvent::Claimed {
                task_id,
                reviewer_id,
                token,
                at_ms,
            } => {
                let t = self.transition(task_id, TaskStatus::Claimed)?;
                t.reviewer_id = Some(reviewer_id.clone());
                t.claim_token = Some(token.clone());
                t.claimed_at_ms = Some(*at_ms);
            }
            ReviewEvent::ClaimExpired { task_id, .. } => {
                let t = self.transition(task_id, TaskStatus::Pending)?;
                t.reviewer_id = None;
                t.claim_token = None;
                t.claimed_at_ms = None;
            }
            ReviewEvent::Submitted {
                task_id,
                reviewer_id,
                mask,
                stats,
                ..
            } => {
                let current = self.task(task_id)?;
                if current.reviewer_id.as_deref() != Some(reviewer_id) {
                    return Err(Error::Conflict(format!("task {task_id} is not claimed by {reviewer_id}")));
                }
                let t = self.transition(task_id, TaskStatus::Submitted)?;
                t.refined = Some(mask.clone());
                t.stats = Some(*stats);
                t.revision += 1;
                t.claim_token = None;
            }
            ReviewEvent::Accepted { task_id, .. } => {
                self.transition(task_id, TaskStatus::Accepted)?;
            }
            ReviewEvent::Rejected { task_id, .. } => {
                self.transition(task_id, TaskStatus::Rejected)?;
            }
            ReviewEvent::Requeued { task_id, .. } => {
                let t = self.transition(task_id, TaskStatus::Pending)?;
                t.reviewer_id = None;
                t.claim_token = None;
                t.claimed_at_ms = None;
            }
            ReviewEvent::Promoted { record } => {
                for id in &record.image_ids {
                    if let Some(batch) = self.promoted.get(id) {
                        return Err(Error::Conflict(format!("{id} already promoted in batch {batch}")));
                    }
                }
                for id in &record.image_ids {
                    self.promoted.insert(id.clone(), record.batch);
                }
                self.promotions.push(record.clone());
            }
        }
        self.seq += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_edges() {
        use TaskStatus::*;
        let legal: Vec<(TaskStatus, TaskStatus)> = TaskStatus::ALL
            .iter()
            .flat_map(|a| TaskStatus::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(
            legal,
            [
                (Pending, Claimed),
                (Claimed, Pending),
                (Claimed, Submitted),
                (Submitted, Accepted),
                (Submitted, Rejected),
                (Rejected, Pending)
            ]
        );
        assert!(!Accepted.can_become(Pending));
    }

    #[test]
    fn status_names_round_trip() {
        for s in TaskStatus::ALL {
            assert_eq!(TaskStatus::parse(s.as_str()), Some(s));
        }
    }
}
