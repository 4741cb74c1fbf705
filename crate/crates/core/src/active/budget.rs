use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-stage acquisition budget.
///
/// The uncertainty share starts at 10% in stage 1 and grows by 10 points per stage,
/// capped at 100%; the rest of the batch is filled by feature similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    /// 1-based stage index.
    pub stage: usize,
    pub sample_size: usize,
    pub best_fraction: f64,
    pub failure_fraction: f64,
}

impl BudgetSchedule {
    pub fn new(stage: usize, sample_size: usize) -> Result<Self> {
        if stage == 0 {
            return Err(Error::Precondition("stages are numbered from 1".into()));
        }
        Ok(Self {
            stage,
            sample_size,
            best_fraction: 0.10,
            failure_fraction: 0.20,
        })
    }

    /// Percent of the batch chosen by uncertainty: `min(10·k, 100)`.
    pub fn uncertainty_percent(&self) -> usize {
        (10 * self.stage).min(100)
    }

    pub fn uncertainty_share(&self) -> f64 {
        self.uncertainty_percent() as f64 / 100.0
    }

    /// `(uncertainty, similarity)` counts for a batch of `batch` images.
    /// The uncertainty count is rounded up; similarity takes the remainder.
    pub fn quotas_for(&self, batch: usize) -> (usize, usize) {
        let u = (self.uncertainty_percent() * batch).div_ceil(100);
        (u, batch - u)
    }

    pub fn quotas(&self) -> (usize, usize) {
        self.quotas_for(self.sample_size)
    }

    /// Sizes of the success and failure groups taken from `n` validation images.
    pub fn analysis_group_sizes(&self, n: usize) -> (usize, usize) {
        let take = |f: f64| ((f * n as f64) - 1e-9).ceil().max(0.0) as usize;
        let failures = take(self.failure_fraction).min(n);
        let successes = take(self.best_fraction).min(n - failures);
        (successes, failures)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_stages_with_300_images() {
        let q = |k| BudgetSchedule::new(k, 300).unwrap().quotas();
        assert_eq!(q(1), (30, 270));
        assert_eq!(q(2), (60, 240));
        assert_eq!(q(3), (90, 210));
        assert_eq!(q(10), (300, 0));
        assert_eq!(q(14), (300, 0));
    }

    #[test]
    fn fifty_validation_images_give_five_and_ten() {
        let s = BudgetSchedule::new(1, 300).unwrap();
        assert_eq!(s.analysis_group_sizes(50), (5, 10));
        assert_eq!(s.analysis_group_sizes(7), (1, 2));
        assert_eq!(s.analysis_group_sizes(0), (0, 0));
    }

    #[test]
    fn stage_zero_is_rejected() {
        assert!(BudgetSchedule::new(0, 10).is_err());
    }

    proptest! {
        #[test]
        fn quotas_always_sum_to_the_batch(stage in 1usize..=20, batch in 0usize..2000) {
            let s = BudgetSchedule::new(stage, batch).unwrap();
            let (u, r) = s.quotas();
            prop_assert_eq!(u + r, batch);
            let exact = s.uncertainty_share() * batch as f64;
            prop_assert!(u as f64 >= exact - 1e-9 && (u as f64) < exact + 1.0);
            prop_assert!((0.0..=1.0).contains(&s.uncertainty_share()));
        }
    }
}
