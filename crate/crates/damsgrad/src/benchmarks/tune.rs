//! Seeded random-search tuning of the step size.
//!
//! Trials draw `alpha` log-uniformly from a closed range; the objective is a
//! full benchmark run's final loss. Diverged or non-finite trials stay in
//! the log but never win. The whole search is reproducible from its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::HyperParams;
use crate::Real;

use super::RunRecord;

/// Search specification: the `alpha` range, trial budget, run length, seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub alpha_min: Real,
    pub alpha_max: Real,
    pub budget: usize,
    /// Steps per trial run; the objective is the run's final loss.
    pub steps: u64,
    pub seed: u64,
}

impl TuneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0)
            || !(self.alpha_max >= self.alpha_min)
            || !self.alpha_max.is_finite()
        {
            return Err(Error::InvalidSpec(format!(
                "alpha range [{}, {}] must be positive, ordered, finite",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidSpec("trial budget must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidSpec("trial runs need at least one step".into()));
        }
        Ok(())
    }

    /// The full trial sequence of step sizes, log-uniform over the range.
    pub fn sample_alphas(&self) -> Vec<Real> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = (self.alpha_min.ln(), self.alpha_max.ln());
        (0..self.budget)
            .map(|_| {
                if lo == hi {
                    self.alpha_min
                } else {
                    rng.random_range(lo..hi).exp()
                }
            })
            .collect()
    }
}

/// One evaluated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub hp: HyperParams<Real>,
    pub final_loss: Real,
    /// True when the trial run diverged or produced a non-finite objective.
    pub diverged: bool,
}

/// Trial log plus the winner (argmin of final loss over usable trials;
/// `None` when every trial diverged).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub best: Option<TrialRecord>,
    pub trials: Vec<TrialRecord>,
}

/// Runs the search: each trial copies `base`, swaps in a sampled `alpha`,
/// and evaluates `objective` (a full benchmark run) on it.
pub fn random_search_tune<F>(
    spec: &TuneSpec,
    base: &HyperParams<Real>,
    mut objective: F,
) -> Result<TuneOutcome>
where
    F: FnMut(&HyperParams<Real>) -> Result<RunRecord>,
{
    spec.validate()?;
    let mut trials = Vec::with_capacity(spec.budget);
    for (trial, alpha) in spec.sample_alphas().into_iter().enumerate() {
        let hp = HyperParams { alpha, ..*base };
        let record = objective(&hp)?;
        trials.push(TrialRecord {
            trial,
            hp,
            final_loss: record.final_loss,
            diverged: record.diverged || !record.final_loss.is_finite(),
        });
    }
    let best = trials
        .iter()
        .filter(|t| !t.diverged)
        .min_by(|a, b| a.final_loss.partial_cmp(&b.final_loss).expect("finite losses"))
        .copied();
    Ok(TuneOutcome { best, trials })
}
