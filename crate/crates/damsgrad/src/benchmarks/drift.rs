//! Non-stationary drift regression.
//!
//! A small MLP regresses a scalar target on uniform inputs while the problem
//! drifts through phases: each phase picks a target function and a gradient
//! scale multiplier. The multiplier scales the gradient handed to the
//! optimizer (recorded losses stay raw), isolating gradient-scale
//! non-stationarity: an optimizer whose running maximum of the second moment
//! never forgets a large old scale keeps taking tiny steps long after a
//! downward shift.
//!
//! Determinism and resumability: the batch for step `t` of a run with seed
//! `s` comes from an RNG seeded by `s` on stream `t`, so a resumed segment
//! sees exactly the stream the uninterrupted run would have seen. Network
//! initialization draws from stream 0, which batch sampling (streams >= 1)
//! never touches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Batch, Matrix, Mlp};
use crate::optim::{HyperParams, OptimizerKind};
use crate::Real;

use super::{median, run_stream, RunRecord, TrainSnapshot};

/// Scalar-valued target functions on `[-1, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetFn {
    Linear,
    Quadratic,
    SineMix,
}

impl TargetFn {
    pub fn eval(self, x: &[Real]) -> Real {
        let d = x.len() as Real;
        match self {
            TargetFn::Linear => {
                x.iter().enumerate().map(|(i, &v)| (i + 1) as Real * v).sum::<Real>() / d
            }
            TargetFn::Quadratic => x.iter().map(|&v| v * v).sum::<Real>() / d - 1.0 / 3.0,
            TargetFn::SineMix => {
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| (std::f64::consts::PI * v + (i + 1) as Real).sin())
                    .sum::<Real>()
                    / d
            }
        }
    }
}

impl std::str::FromStr for TargetFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(TargetFn::Linear),
            "quadratic" => Ok(TargetFn::Quadratic),
            "sine-mix" => Ok(TargetFn::SineMix),
            other => Err(Error::InvalidSpec(format!("unknown target function '{other}'"))),
        }
    }
}

/// One contiguous span of steps with a fixed target and gradient scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub span: u64,
    pub target: TargetFn,
    pub grad_scale: Real,
}

/// Phase schedule plus the input sampler parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRegressionTask {
    pub phases: Vec<Phase>,
    pub input_dim: usize,
    pub batch_size: usize,
    /// Standard deviation of the Gaussian noise added to targets.
    pub noise_std: Real,
}

impl DriftRegressionTask {
    /// Single-phase stationary control at gradient scale 1.
    pub fn stationary(target: TargetFn, steps: u64) -> Self {
        DriftRegressionTask {
            phases: vec![Phase { span: steps, target, grad_scale: 1.0 }],
            ..DriftRegressionTask::sampler_defaults()
        }
    }

    /// Two-phase task whose second phase drops the gradient scale by
    /// `factor` and switches the target function.
    pub fn downward_shift(phase1: u64, phase2: u64, factor: Real) -> Self {
        DriftRegressionTask {
            phases: vec![
                Phase { span: phase1, target: TargetFn::SineMix, grad_scale: factor },
                Phase { span: phase2, target: TargetFn::Linear, grad_scale: 1.0 },
            ],
            ..DriftRegressionTask::sampler_defaults()
        }
    }

    fn sampler_defaults() -> Self {
        DriftRegressionTask {
            phases: Vec::new(),
            input_dim: 4,
            batch_size: 16,
            noise_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidSpec("task needs at least one phase".into()));
        }
        for phase in &self.phases {
            if phase.span == 0 {
                return Err(Error::InvalidSpec("phase spans must be positive".into()));
            }
            if !(phase.grad_scale > 0.0) || !phase.grad_scale.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "gradient scale multipliers must be positive and finite, got {}",
                    phase.grad_scale
                )));
            }
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input dimension must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch size must be positive".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "noise level must be non-negative and finite, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// Sum of the phase spans; phases are contiguous and cover the run.
    pub fn total_steps(&self) -> u64 {
        self.phases.iter().map(|p| p.span).sum()
    }

    /// Phase active at a 1-based step index.
    pub fn phase_at(&self, step: u64) -> Result<&Phase> {
        if step == 0 {
            return Err(Error::InvalidSpec("steps are 1-based".into()));
        }
        let mut upto = 0;
        for phase in &self.phases {
            upto += phase.span;
            if step <= upto {
                return Ok(phase);
            }
        }
        Err(Error::InvalidSpec(format!(
            "step {step} is outside the {}-step schedule",
            self.total_steps()
        )))
    }

    /// First step (1-based) of the last phase, if the schedule has more than
    /// one phase.
    pub fn transition_step(&self) -> Option<u64> {
        if self.phases.len() < 2 {
            return None;
        }
        let before: u64 = self.phases[..self.phases.len() - 1].iter().map(|p| p.span).sum();
        Some(before + 1)
    }

    /// Batch for step `step` of the run seeded `seed`: inputs uniform on
    /// `[-1, 1]`, row-major, then one noise draw per example.
    pub fn sample_batch(&self, seed: u64, step: u64) -> Result<Batch<Real>> {
        let phase = self.phase_at(step)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step);
        let mut xs = Vec::with_capacity(self.batch_size * self.input_dim);
        for _ in 0..self.batch_size * self.input_dim {
            xs.push(rng.random_range(-1.0..1.0));
        }
        let inputs = Matrix::from_vec(self.batch_size, self.input_dim, xs)?;
        let mut ys = Vec::with_capacity(self.batch_size);
        for r in 0..self.batch_size {
            let z: Real = rng.sample(StandardNormal);
            ys.push(phase.target.eval(inputs.row(r)) + self.noise_std * z);
        }
        let targets = Matrix::from_vec(self.batch_size, 1, ys)?;
        Batch::new(inputs, targets)
    }
}

/// Trains `net` on the task under one optimizer. Records the raw batch loss
/// per step and, for the maximum-keeping rules, a `v_max` probe of parameter
/// element 0 plus replacement events over the leading monitored elements.
pub fn run_drift_regression(
    kind: OptimizerKind,
    hp: &HyperParams<Real>,
    task: &DriftRegressionTask,
    net: &Mlp<Real>,
    seed: u64,
) -> Result<RunRecord> {
    run_drift_regression_segment(kind, hp, task, net, seed, None, None)
}

/// [`run_drift_regression`] with checkpointing, like the Rastrigin variant.
pub fn run_drift_regression_segment(
    kind: OptimizerKind,
    hp: &HyperParams<Real>,
    task: &DriftRegressionTask,
    net: &Mlp<Real>,
    seed: u64,
    resume: Option<&TrainSnapshot>,
    stop_at: Option<u64>,
) -> Result<RunRecord> {
    task.validate()?;
    if net.input_dim() != task.input_dim {
        return Err(Error::DimensionMismatch {
            context: "network input vs task",
            expected: task.input_dim,
            actual: net.input_dim(),
        });
    }
    if net.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "network output vs scalar target",
            expected: 1,
            actual: net.output_dim(),
        });
    }
    let mut work = net.clone();
    run_stream(
        kind,
        hp,
        net.flatten(),
        task.total_steps(),
        resume,
        stop_at,
        move |step, theta| {
            work.set_params(theta)?;
            let phase = task.phase_at(step)?;
            let batch = task.sample_batch(seed, step)?;
            let (y, cache) = work.forward(&batch.inputs)?;
            let loss = crate::network::mse_loss(&y, &batch.targets)?;
            let mut g = work.backward(&cache, &batch.targets)?;
            for v in &mut g.0 {
                *v *= phase.grad_scale;
            }
            Ok((loss, g))
        },
    )
}

/// Steps from the transition until performance returns to the pre-shift
/// level.
///
/// The reference floor is the median raw loss over the last 1000 steps (or
/// as many as exist) before the transition; a step counts as recovered when
/// the mean loss over the following 100 steps is at most twice that floor.
/// Counting includes the recovery step itself, so a run the shift never
/// disturbs yields 1. `None` when the run diverged, is a resumed segment,
/// the transition leaves no pre-history or lies outside the run, or no full
/// post-transition window gets back under the threshold.
pub fn recovery_steps(record: &RunRecord, transition_step: u64) -> Option<u64> {
    const LEAD_WINDOW: usize = 100;
    const FLOOR_WINDOW: usize = 1000;
    const FLOOR_FACTOR: Real = 2.0;

    let n = record.losses.len();
    if record.diverged || record.first_step != 1 || transition_step < 2 {
        return None;
    }
    if transition_step > n as u64 {
        return None;
    }
    let t = (transition_step - 1) as usize;
    let floor = median(&record.losses[t.saturating_sub(FLOOR_WINDOW)..t]);
    let threshold = FLOOR_FACTOR * floor;
    if n < LEAD_WINDOW {
        return None;
    }
    for i in t..=(n - LEAD_WINDOW) {
        let lead: Real = record.losses[i..i + LEAD_WINDOW].iter().sum();
        if lead / LEAD_WINDOW as Real <= threshold {
            return Some((i - t) as u64 + 1);
        }
    }
    None
}
