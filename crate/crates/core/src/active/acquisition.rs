use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::budget::BudgetSchedule;
use super::retrieval::retrieve_similar;
use super::selection::{rank_by_uncertainty, ScoredImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    Uncertainty,
    Similarity,
    Expert,
    Random,
}

/// One image chosen for labeling in a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub stage: usize,
    pub image_id: String,
    pub reason: SelectionReason,
    /// Uncertainty for uncertainty picks, best cosine similarity for similarity picks.
    pub score: f64,
}

/// Combines uncertainty and similarity picks for one stage.
///
/// The uncertainty quota is filled first. Similarity then fills its quota from the
/// images not yet chosen. Any shortfall (few seeds, zero-norm features) is topped up
/// from the uncertainty ranking, so the total is `min(sample_size, |unlabeled|)`.
pub fn plan_stage_acquisition(
    schedule: &BudgetSchedule,
    unlabeled: &[ScoredImage],
    seeds: &[(String, Vec<f32>)],
) -> Result<Vec<Acquisition>> {
    if unlabeled.is_empty() {
        return Err(Error::Precondition("unlabeled pool is empty".into()));
    }
    let mut ranked = unlabeled.to_vec();
    rank_by_uncertainty(&mut ranked);
    ranked.dedup_by(|a, b| a.image_id == b.image_id);
    let total = schedule.sample_size.min(ranked.len());
    let (u_quota, s_quota) = schedule.quotas_for(total);

    let mut chosen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(total);
    for s in ranked.iter().take(u_quota) {
        chosen.insert(s.image_id.clone());
        out.push(Acquisition {
            stage: schedule.stage,
            image_id: s.image_id.clone(),
            reason: SelectionReason::Uncertainty,
            score: s.uncertainty,
        });
    }
    if s_quota > 0 {
        let candidates: Vec<(String, Vec<f32>)> = ranked
            .iter()
            .filter(|s| !chosen.contains(&s.image_id))
            .map(|s| (s.image_id.clone(), s.features.clone()))
            .collect();
        for (id, sim) in retrieve_similar(seeds, &candidates, s_quota) {
            chosen.insert(id.clone());
            out.push(Acquisition {
                stage: schedule.stage,
                image_id: id,
                reason: SelectionReason::Similarity,
                score: sim,
            });
        }
    }
    if out.len() < total {
        log::warn!(
            "stage {}: similarity filled {} of {s_quota}; topping up by uncertainty",
            schedule.stage,
            out.len() - u_quota
        );
        for s in &ranked {
            if out.len() == total {
                break;
            }
            if chosen.insert(s.image_id.clone()) {
                out.push(Acquisition {
                    stage: schedule.stage,
                    image_id: s.image_id.clone(),
                    reason: SelectionReason::Uncertainty,
                    score: s.uncertainty,
                });
            }
        }
    }
    Ok(out)
}

/// Uniform random baseline acquisition.
pub fn plan_random_acquisition(stage: usize, unlabeled_ids: &[String], sample_size: usize, seed: u64) -> Vec<Acquisition> {
    let mut ids: Vec<String> = unlabeled_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (stage as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    ids.shuffle(&mut rng);
    ids.truncate(sample_size);
    ids.into_iter()
        .map(|image_id| Acquisition {
            stage,
            image_id,
            reason: SelectionReason::Random,
            score: 0.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(n: usize) -> Vec<ScoredImage> {
        (0..n)
            .map(|i| ScoredImage {
                image_id: format!("u{i:03}"),
                uncertainty: ((i * 37) % 101) as f64 / 101.0,
                features: vec![(i % 5) as f32 + 0.5, (i % 7) as f32],
            })
            .collect()
    }

    #[test]
    fn stage_one_splits_ten_ninety() {
        let sched = BudgetSchedule::new(1, 30).unwrap();
        let seeds = vec![("seed".to_string(), vec![1.0, 0.0])];
        let acq = plan_stage_acquisition(&sched, &pool(200), &seeds).unwrap();
        assert_eq!(acq.len(), 30);
        let u = acq.iter().filter(|a| a.reason == SelectionReason::Uncertainty).count();
        assert_eq!(u, 3);
    }

    #[test]
    fn no_seeds_tops_up_from_uncertainty() {
        let sched = BudgetSchedule::new(2, 20).unwrap();
        let acq = plan_stage_acquisition(&sched, &pool(50), &[]).unwrap();
        assert_eq!(acq.len(), 20);
        assert!(acq.iter().all(|a| a.reason == SelectionReason::Uncertainty));
        let mut ranked = pool(50);
        rank_by_uncertainty(&mut ranked);
        let want: Vec<_> = ranked.iter().take(20).map(|s| s.image_id.clone()).collect();
        let got: Vec<_> = acq.iter().map(|a| a.image_id.clone()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn small_pool_is_exhausted() {
        let sched = BudgetSchedule::new(1, 300).unwrap();
        let acq = plan_stage_acquisition(&sched, &pool(12), &[("s".into(), vec![1.0, 1.0])]).unwrap();
        assert_eq!(acq.len(), 12);
    }

    #[test]
    fn empty_pool_errors() {
        let sched = BudgetSchedule::new(1, 3).unwrap();
        assert!(plan_stage_acquisition(&sched, &[], &[]).is_err());
    }

    #[test]
    fn random_baseline_is_seeded() {
        let ids: Vec<String> = (0..40).map(|i| format!("u{i}")).collect();
        let a = plan_random_acquisition(1, &ids, 10, 7);
        assert_eq!(a, plan_random_acquisition(1, &ids, 10, 7));
        assert_ne!(a, plan_random_acquisition(2, &ids, 10, 7));
        assert_eq!(a.len(), 10);
    }

    proptest! {
        #[test]
        fn acquisition_is_unique_and_sized(n in 1usize..80, sample in 1usize..60, stage in 1usize..13, nseeds in 0usize..4) {
            let sched = BudgetSchedule::new(stage, sample).unwrap();
            let seeds: Vec<(String, Vec<f32>)> = (0..nseeds).map(|i| (format!("s{i}"), vec![i as f32, 1.0])).collect();
            let acq = plan_stage_acquisition(&sched, &pool(n), &seeds).unwrap();
            prop_assert_eq!(acq.len(), sample.min(n));
            let ids: BTreeSet<_> = acq.iter().map(|a| &a.image_id).collect();
            prop_assert_eq!(ids.len(), acq.len());
        }
    }
}
