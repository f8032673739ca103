//! Deterministic experiment drivers: the Rastrigin trajectory study, a
//! non-stationary drift-regression task, and a seeded random-search tuner.
//!
//! Every run is reproducible from `(seed, configuration)` alone. Drivers
//! return a [`RunRecord`] whose CSV rendering is byte-stable, and they can
//! stop at and resume from a [`TrainSnapshot`] without perturbing the
//! trajectory (data streams are keyed by step index, not by draw order).

pub mod drift;
pub mod rastrigin;
pub mod tune;

use serde::{Deserialize, Serialize};

use crate::analysis::ReplacementTrace;
use crate::error::{Error, Result};
use crate::optim::{
    GradVector, HyperParams, Optimizer, OptimizerKind, OptimizerState, ParamVector,
};
use crate::Real;

/// Absolute loss bound beyond which a run is flagged as diverged and stopped.
pub const DIVERGENCE_LIMIT: Real = 1e12;

/// Trailing-loss window for [`RunRecord::final_loss`].
pub const FINAL_LOSS_WINDOW: usize = 100;

/// Replacement traces cover the leading `min(dim, MONITOR_LIMIT)` parameter
/// elements; the `v_max` probe column is always element 0.
pub const MONITOR_LIMIT: usize = 8;

/// Resumable training position: step counter, parameters, optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSnapshot {
    pub step: u64,
    pub theta: ParamVector<Real>,
    pub state: OptimizerState<Real>,
}

/// Everything one run (or run segment) produced.
///
/// `losses[i]` is the pre-step loss at global step `first_step + i`;
/// trajectory and probe entries are the post-step values of the same step,
/// so every series length equals `steps_executed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Global index of the first executed step (1 for fresh runs).
    pub first_step: u64,
    pub steps_executed: u64,
    pub losses: Vec<Real>,
    /// Post-step parameter positions; present only for 2-parameter problems.
    pub trajectory: Option<Vec<[Real; 2]>>,
    /// Post-step `v_max` of element 0; present for the maximum-keeping rules.
    pub v_max_probe: Option<Vec<Real>>,
    /// Replacement events over the monitored leading elements.
    pub replacement_trace: ReplacementTrace,
    /// True when the run stopped early on a non-finite or out-of-bounds loss.
    pub diverged: bool,
    /// Mean of the trailing `min(FINAL_LOSS_WINDOW, n)` losses (NaN if none).
    pub final_loss: Real,
    pub snapshot: TrainSnapshot,
}

impl RunRecord {
    /// Renders the run as CSV: `step,loss[,x1,x2][,v_max_probe]`, one row per
    /// executed step, floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss");
        if self.trajectory.is_some() {
            out.push_str(",x1,x2");
        }
        if self.v_max_probe.is_some() {
            out.push_str(",v_max_probe");
        }
        out.push('\n');
        for i in 0..self.losses.len() {
            out.push_str(&(self.first_step + i as u64).to_string());
            out.push(',');
            out.push_str(&self.losses[i].to_string());
            if let Some(traj) = &self.trajectory {
                out.push(',');
                out.push_str(&traj[i][0].to_string());
                out.push(',');
                out.push_str(&traj[i][1].to_string());
            }
            if let Some(probe) = &self.v_max_probe {
                out.push(',');
                out.push_str(&probe[i].to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn trailing_mean(losses: &[Real], window: usize) -> Real {
    if losses.is_empty() {
        return Real::NAN;
    }
    let tail = &losses[losses.len().saturating_sub(window)..];
    tail.iter().sum::<Real>() / tail.len() as Real
}

pub(crate) fn median(values: &[Real]) -> Real {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Drives one optimizer over a step-indexed loss/gradient stream.
///
/// `eval(step, theta)` returns the loss at `theta` and the gradient to feed
/// the optimizer. A non-finite loss or gradient stops the run unrecorded and
/// flags it; a finite loss beyond [`DIVERGENCE_LIMIT`] is recorded first and
/// then stops it. `stop_at` truncates the segment (inclusive); `resume`
/// continues a previous segment's snapshot.
pub(crate) fn run_stream<F>(
    kind: OptimizerKind,
    hp: &HyperParams<Real>,
    init: ParamVector<Real>,
    total_steps: u64,
    resume: Option<&TrainSnapshot>,
    stop_at: Option<u64>,
    mut eval: F,
) -> Result<RunRecord>
where
    F: FnMut(u64, &ParamVector<Real>) -> Result<(Real, GradVector<Real>)>,
{
    if total_steps == 0 {
        return Err(Error::InvalidSpec("a run needs at least one step".into()));
    }
    let dim = init.len();
    let (mut theta, mut opt, first_step) = match resume {
        Some(snap) => {
            if snap.theta.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "snapshot parameters vs problem",
                    expected: dim,
                    actual: snap.theta.len(),
                });
            }
            if snap.step >= total_steps {
                return Err(Error::InvalidSpec(format!(
                    "snapshot is at step {} of a {total_steps}-step run",
                    snap.step
                )));
            }
            let opt = Optimizer::with_state(kind, *hp, snap.state.clone())?;
            (snap.theta.clone(), opt, snap.step + 1)
        }
        None => (init, Optimizer::new(kind, *hp, dim)?, 1),
    };
    let last_step = stop_at.map_or(total_steps, |s| s.min(total_steps));
    if last_step < first_step {
        return Err(Error::InvalidSpec(format!(
            "stop step {last_step} precedes the first step {first_step}"
        )));
    }

    let monitored = dim.min(MONITOR_LIMIT);
    let mut losses = Vec::new();
    let mut trajectory = (dim == 2).then(Vec::new);
    let mut v_max_probe = matches!(kind, OptimizerKind::AmsGrad | OptimizerKind::DAmsGrad)
        .then(Vec::new);
    let mut trace = ReplacementTrace::new();
    let mut diverged = false;

    for step in first_step..=last_step {
        let (loss, g) = eval(step, &theta)?;
        if !loss.is_finite() || g.as_slice().iter().any(|x| !x.is_finite()) {
            diverged = true;
            break;
        }
        let report = opt.step(&mut theta, &g)?;
        losses.push(loss);
        if let Some(traj) = &mut trajectory {
            traj.push([theta.0[0], theta.0[1]]);
        }
        if let Some(probe) = &mut v_max_probe {
            probe.push(opt.state().v_max[0]);
        }
        if let Some(report) = report {
            for (element, &replaced) in report.replaced_mask[..monitored].iter().enumerate() {
                if replaced {
                    trace.record(step, element);
                }
            }
        }
        if loss.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
    }

    let steps_executed = losses.len() as u64;
    let final_loss = trailing_mean(&losses, FINAL_LOSS_WINDOW);
    Ok(RunRecord {
        first_step,
        steps_executed,
        losses,
        trajectory,
        v_max_probe,
        replacement_trace: trace,
        diverged,
        final_loss,
        snapshot: TrainSnapshot {
            step: first_step - 1 + steps_executed,
            theta,
            state: opt.into_state(),
        },
    })
}
