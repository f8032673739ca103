//! Two-dimensional Rastrigin trajectory study.
//!
//! `L(x1, x2) = 20 + sum_i (x_i^2 - 10 cos(2 pi x_i))`: a global minimum of 0
//! at the origin under a lattice of local minima near the integer points,
//! the nearest of which sit at loss about 1 or above. Reaching a final loss
//! below 1 therefore certifies arrival in the global basin.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::optim::{GradVector, HyperParams, OptimizerKind, ParamVector};
use crate::Real;

use super::{run_stream, RunRecord, TrainSnapshot};

/// Loss and analytic gradient, `grad_i = 2 x_i + 20 pi sin(2 pi x_i)`.
pub fn rastrigin_eval(x: [Real; 2]) -> (Real, [Real; 2]) {
    let mut loss = 20.0;
    let mut grad = [0.0; 2];
    for i in 0..2 {
        loss += x[i] * x[i] - 10.0 * (TAU * x[i]).cos();
        grad[i] = 2.0 * x[i] + 20.0 * PI * (TAU * x[i]).sin();
    }
    (loss, grad)
}

/// Runs one optimizer on the Rastrigin surface. The objective itself is
/// deterministic; the seed only labels the produced record downstream.
pub fn run_rastrigin(
    kind: OptimizerKind,
    hp: &HyperParams<Real>,
    steps: u64,
    start: [Real; 2],
    seed: u64,
) -> Result<RunRecord> {
    run_rastrigin_segment(kind, hp, steps, start, seed, None, None)
}

/// [`run_rastrigin`] with checkpointing: stop after `stop_at` (inclusive)
/// and/or resume from a snapshot of an earlier segment.
pub fn run_rastrigin_segment(
    kind: OptimizerKind,
    hp: &HyperParams<Real>,
    steps: u64,
    start: [Real; 2],
    _seed: u64,
    resume: Option<&TrainSnapshot>,
    stop_at: Option<u64>,
) -> Result<RunRecord> {
    if !start.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { context: "rastrigin start point" });
    }
    run_stream(
        kind,
        hp,
        ParamVector(start.to_vec()),
        steps,
        resume,
        stop_at,
        |_, theta| {
            let (loss, grad) = rastrigin_eval([theta.0[0], theta.0[1]]);
            Ok((loss, GradVector(grad.to_vec())))
        },
    )
}
