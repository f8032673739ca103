//! First-order stochastic optimizers: SGD, Adam, AmsGrad, and d-AmsGrad.
//!
//! d-AmsGrad replaces AmsGrad's running maximum of the second momentum with a
//! decayed maximum, `v_max <- max(beta3 * v_max, v)`, so stale curvature
//! estimates are eventually forgotten. `beta3` selects the regime: values at
//! or below `beta2` collapse to Adam, `beta3 = 1` collapses to AmsGrad, and
//! anything in between is the decayed-maximum rule proper.
//!
//! Step rules are functional: they take state by reference and return the
//! updated state alongside the updated parameters. All three adaptive rules
//! share the same momenta and parameter-update arithmetic, so the collapsed
//! regimes match their namesakes bit for bit on identical inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Behavioral regime of the decayed-maximum rule, determined by `beta3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `beta3 <= beta2`: the decayed maximum always picks the fresh `v`.
    AdamEquivalent,
    /// `beta3 = 1`: the maximum never decays.
    AmsGradEquivalent,
    /// `beta2 < beta3 < 1`: stale maxima decay geometrically until replaced.
    DecayedMax,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::AdamEquivalent => "adam_equivalent",
            Mode::AmsGradEquivalent => "amsgrad_equivalent",
            Mode::DecayedMax => "decayed_max",
        };
        f.write_str(s)
    }
}

/// Optimizer identifiers understood by the benchmark drivers and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "amsgrad")]
    AmsGrad,
    #[serde(rename = "d-amsgrad")]
    DAmsGrad,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AmsGrad => "amsgrad",
            OptimizerKind::DAmsGrad => "d-amsgrad",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "amsgrad" => Ok(OptimizerKind::AmsGrad),
            "d-amsgrad" => Ok(OptimizerKind::DAmsGrad),
            other => Err(Error::InvalidSpec(format!("unknown optimizer id '{other}'"))),
        }
    }
}

/// Hyperparameters shared by the whole family.
///
/// `beta3` only matters to d-AmsGrad but is carried unconditionally so that
/// [`classify_mode`] is total and run metadata always records the regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<T> {
    pub alpha: T,
    pub beta1: T,
    pub beta2: T,
    pub beta3: T,
    pub epsilon: T,
}

impl<T: Scalar> HyperParams<T> {
    /// The customary defaults: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`,
    /// with `beta3` chosen by the caller.
    pub fn new(alpha: T, beta3: T) -> Self {
        HyperParams {
            alpha,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            beta3,
            epsilon: T::lit(1e-8),
        }
    }

    /// Strict range validation for configuration boundaries: `alpha > 0`,
    /// `0 <= beta1 < 1`, `0 <= beta2 < 1`, `0 <= beta3 <= 1`, `epsilon > 0`,
    /// everything finite.
    ///
    /// The step rules themselves accept `alpha = 0` (a frozen-trajectory
    /// diagnostic); this boundary check does not.
    pub fn validate(&self) -> Result<()> {
        self.check_step_usable()?;
        if self.alpha <= T::zero() {
            return Err(Error::InvalidHyperParams(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Regime of the decayed maximum under these hyperparameters.
    pub fn mode(&self) -> Mode {
        classify_mode(self)
    }

    fn check_step_usable(&self) -> Result<()> {
        let ok_unit = |b: T| b >= T::zero() && b < T::one();
        if !self.alpha.is_finite() || self.alpha < T::zero() {
            return Err(Error::InvalidHyperParams(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !ok_unit(self.beta1) {
            return Err(Error::InvalidHyperParams(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !ok_unit(self.beta2) {
            return Err(Error::InvalidHyperParams(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(self.beta3 >= T::zero() && self.beta3 <= T::one()) {
            return Err(Error::InvalidHyperParams(format!(
                "beta3 must lie in [0, 1], got {}",
                self.beta3
            )));
        }
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::InvalidHyperParams(format!(
                "epsilon must be finite and positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Classifies the decayed-maximum regime. Total on validated hyperparameters:
/// `beta3 <= beta2` is Adam-equivalent, `beta3 = 1` is AmsGrad-equivalent,
/// and `beta2 < beta3 < 1` is the decayed maximum proper.
pub fn classify_mode<T: Scalar>(hp: &HyperParams<T>) -> Mode {
    if hp.beta3 <= hp.beta2 {
        Mode::AdamEquivalent
    } else if hp.beta3 == T::one() {
        Mode::AmsGradEquivalent
    } else {
        Mode::DecayedMax
    }
}

/// Parameter vector. Entries are finite before and after every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T>(pub Vec<T>);

/// Gradient vector, paired elementwise with a [`ParamVector`] of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVector<T>(pub Vec<T>);

impl<T> ParamVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> GradVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParamVector(v)
    }
}

impl<T> From<Vec<T>> for GradVector<T> {
    fn from(v: Vec<T>) -> Self {
        GradVector(v)
    }
}

/// Momentum state shared by the adaptive rules. `m`, `v`, and `v_max` stay
/// length-matched to the parameters; `v` and `v_max` are non-negative; `t`
/// counts completed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub v_max: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    /// Fresh state: all momenta zero, step counter zero.
    pub fn zeros(dim: usize) -> Self {
        OptimizerState {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            v_max: vec![T::zero(); dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Per-step observability for d-AmsGrad: which elements replaced their
/// decayed maximum this step, and the effective per-element learning rate
/// `alpha / (sqrt(v_max / (1 - beta2^t)) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub replaced_mask: Vec<bool>,
    pub effective_lr: Vec<T>,
}

fn check_lengths<T>(context: &'static str, theta: &[T], g: &[T]) -> Result<()> {
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: theta.len(),
            actual: g.len(),
        });
    }
    Ok(())
}

fn check_finite<T: Scalar>(context: &'static str, xs: &[T]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}

fn check_state_dim<T>(state: &OptimizerState<T>, dim: usize) -> Result<()> {
    for (len, context) in [
        (state.m.len(), "optimizer state m"),
        (state.v.len(), "optimizer state v"),
        (state.v_max.len(), "optimizer state v_max"),
    ] {
        if len != dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: dim,
                actual: len,
            });
        }
    }
    Ok(())
}

/// `beta^t` with the exponent as an integer step count. Falls back to the
/// log-space form for exponents beyond `i32`, where underflow to zero is the
/// correct limit anyway.
fn pow_steps<T: Scalar>(beta: T, t: u64) -> T {
    if t <= i32::MAX as u64 {
        beta.powi(t as i32)
    } else {
        (T::lit(t as f64) * beta.ln()).exp()
    }
}

/// First momenta update, shared verbatim by Adam, AmsGrad, and d-AmsGrad:
/// `m = beta1 m + (1 - beta1) g`, `v = beta2 v + (1 - beta2) g^2`.
fn updated_momenta<T: Scalar>(
    state: &OptimizerState<T>,
    g: &[T],
    hp: &HyperParams<T>,
) -> (Vec<T>, Vec<T>) {
    let one = T::one();
    let (c1, c2) = (one - hp.beta1, one - hp.beta2);
    let m = state
        .m
        .iter()
        .zip(g)
        .map(|(&m, &g)| hp.beta1 * m + c1 * g)
        .collect();
    let v = state
        .v
        .iter()
        .zip(g)
        .map(|(&v, &g)| hp.beta2 * v + c2 * g * g)
        .collect();
    (m, v)
}

/// Bias-corrected parameter update, shared verbatim by the adaptive rules:
/// `theta - alpha m / ((1 - beta1^t) (sqrt(v_sel / (1 - beta2^t)) + eps))`,
/// with `v_sel` the rule's choice of second momentum.
fn updated_params<T: Scalar>(
    theta: &[T],
    m: &[T],
    v_sel: &[T],
    t: u64,
    hp: &HyperParams<T>,
) -> Vec<T> {
    let one = T::one();
    let bc1 = one - pow_steps(hp.beta1, t);
    let bc2 = one - pow_steps(hp.beta2, t);
    theta
        .iter()
        .zip(m.iter().zip(v_sel))
        .map(|(&th, (&m, &v))| th - hp.alpha * m / (bc1 * ((v / bc2).sqrt() + hp.epsilon)))
        .collect()
}

fn effective_lr<T: Scalar>(v_max: &[T], t: u64, hp: &HyperParams<T>) -> Vec<T> {
    let bc2 = T::one() - pow_steps(hp.beta2, t);
    v_max
        .iter()
        .map(|&v| hp.alpha / ((v / bc2).sqrt() + hp.epsilon))
        .collect()
}

/// Plain gradient descent: `theta - alpha g`.
///
/// Accepts `alpha = 0` (frozen trajectory). Empty vectors are valid and
/// produce an empty result.
pub fn sgd_step<T: Scalar>(theta: &ParamVector<T>, g: &GradVector<T>, alpha: T) -> Result<ParamVector<T>> {
    check_lengths("sgd parameters vs gradient", &theta.0, &g.0)?;
    if !alpha.is_finite() || alpha < T::zero() {
        return Err(Error::InvalidHyperParams(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    check_finite("sgd parameters", &theta.0)?;
    check_finite("sgd gradient", &g.0)?;
    let new: Vec<T> = theta.0.iter().zip(&g.0).map(|(&t, &g)| t - alpha * g).collect();
    check_finite("sgd updated parameters", &new)?;
    Ok(ParamVector(new))
}

fn adaptive_prologue<T: Scalar>(
    state: &OptimizerState<T>,
    theta: &ParamVector<T>,
    g: &GradVector<T>,
    hp: &HyperParams<T>,
) -> Result<()> {
    hp.check_step_usable()?;
    check_lengths("parameters vs gradient", &theta.0, &g.0)?;
    check_state_dim(state, theta.len())?;
    check_finite("parameters", &theta.0)?;
    check_finite("gradient", &g.0)?;
    Ok(())
}

fn adaptive_epilogue<T: Scalar>(m: &[T], v: &[T], theta: &[T]) -> Result<()> {
    check_finite("updated first momentum", m)?;
    check_finite("updated second momentum", v)?;
    check_finite("updated parameters", theta)?;
    Ok(())
}

/// One Adam step with bias correction.
pub fn adam_step<T: Scalar>(
    state: &OptimizerState<T>,
    theta: &ParamVector<T>,
    g: &GradVector<T>,
    hp: &HyperParams<T>,
) -> Result<(OptimizerState<T>, ParamVector<T>)> {
    adaptive_prologue(state, theta, g, hp)?;
    let t = state.t + 1;
    let (m, v) = updated_momenta(state, &g.0, hp);
    let new_theta = updated_params(&theta.0, &m, &v, t, hp);
    adaptive_epilogue(&m, &v, &new_theta)?;
    let new_state = OptimizerState {
        m,
        v,
        v_max: state.v_max.clone(),
        t,
    };
    Ok((new_state, ParamVector(new_theta)))
}

/// One AmsGrad step: like Adam, but the denominator uses the running maximum
/// of the second momentum (ties keep the fresh value).
pub fn amsgrad_step<T: Scalar>(
    state: &OptimizerState<T>,
    theta: &ParamVector<T>,
    g: &GradVector<T>,
    hp: &HyperParams<T>,
) -> Result<(OptimizerState<T>, ParamVector<T>)> {
    adaptive_prologue(state, theta, g, hp)?;
    let t = state.t + 1;
    let (m, v) = updated_momenta(state, &g.0, hp);
    let v_max: Vec<T> = state
        .v_max
        .iter()
        .zip(&v)
        .map(|(&prev, &v)| if v >= prev { v } else { prev })
        .collect();
    let new_theta = updated_params(&theta.0, &m, &v_max, t, hp);
    adaptive_epilogue(&m, &v, &new_theta)?;
    let new_state = OptimizerState { m, v, v_max, t };
    Ok((new_state, ParamVector(new_theta)))
}

/// One d-AmsGrad step: the running maximum decays by `beta3` before it
/// competes with the fresh second momentum, `v_max <- max(beta3 v_max, v)`.
///
/// The returned [`StepReport`] marks the elements whose decayed maximum was
/// replaced this step (ties count as replacement) and the effective
/// per-element learning rate.
pub fn d_amsgrad_step<T: Scalar>(
    state: &OptimizerState<T>,
    theta: &ParamVector<T>,
    g: &GradVector<T>,
    hp: &HyperParams<T>,
) -> Result<(OptimizerState<T>, ParamVector<T>, StepReport<T>)> {
    adaptive_prologue(state, theta, g, hp)?;
    let t = state.t + 1;
    let (m, v) = updated_momenta(state, &g.0, hp);
    let mut replaced = vec![false; v.len()];
    let v_max: Vec<T> = state
        .v_max
        .iter()
        .zip(v.iter().enumerate())
        .map(|(&prev, (i, &v))| {
            let decayed = hp.beta3 * prev;
            if v >= decayed {
                replaced[i] = true;
                v
            } else {
                decayed
            }
        })
        .collect();
    let new_theta = updated_params(&theta.0, &m, &v_max, t, hp);
    adaptive_epilogue(&m, &v, &new_theta)?;
    let report = StepReport {
        replaced_mask: replaced,
        effective_lr: effective_lr(&v_max, t, hp),
    };
    let new_state = OptimizerState { m, v, v_max, t };
    Ok((new_state, ParamVector(new_theta), report))
}

/// Stateful convenience wrapper used by the benchmark drivers: owns the
/// optimizer state and mutates the parameter vector in place.
///
/// Construction accepts `alpha = 0` (the strict range check belongs to
/// configuration boundaries, see [`HyperParams::validate`]).
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    hp: HyperParams<T>,
    state: OptimizerState<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, hp: HyperParams<T>, dim: usize) -> Result<Self> {
        hp.check_step_usable()?;
        Ok(Optimizer {
            kind,
            hp,
            state: OptimizerState::zeros(dim),
        })
    }

    /// Rebuilds a wrapper around previously captured state (checkpoint resume).
    pub fn with_state(kind: OptimizerKind, hp: HyperParams<T>, state: OptimizerState<T>) -> Result<Self> {
        hp.check_step_usable()?;
        check_state_dim(&state, state.m.len())?;
        Ok(Optimizer { kind, hp, state })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hp(&self) -> &HyperParams<T> {
        &self.hp
    }

    pub fn state(&self) -> &OptimizerState<T> {
        &self.state
    }

    pub fn into_state(self) -> OptimizerState<T> {
        self.state
    }

    /// Advances one step. Returns a report for the maximum-keeping rules
    /// (for AmsGrad the "replacement" is the plain maximum picking the fresh
    /// value); `None` for SGD and Adam.
    pub fn step(&mut self, theta: &mut ParamVector<T>, g: &GradVector<T>) -> Result<Option<StepReport<T>>> {
        match self.kind {
            OptimizerKind::Sgd => {
                *theta = sgd_step(theta, g, self.hp.alpha)?;
                self.state.t += 1;
                Ok(None)
            }
            OptimizerKind::Adam => {
                let (state, new_theta) = adam_step(&self.state, theta, g, &self.hp)?;
                self.state = state;
                *theta = new_theta;
                Ok(None)
            }
            OptimizerKind::AmsGrad => {
                let prev_v_max = self.state.v_max.clone();
                let (state, new_theta) = amsgrad_step(&self.state, theta, g, &self.hp)?;
                let replaced_mask = state
                    .v
                    .iter()
                    .zip(&prev_v_max)
                    .map(|(&v, &prev)| v >= prev)
                    .collect();
                let report = StepReport {
                    replaced_mask,
                    effective_lr: effective_lr(&state.v_max, state.t, &self.hp),
                };
                self.state = state;
                *theta = new_theta;
                Ok(Some(report))
            }
            OptimizerKind::DAmsGrad => {
                let (state, new_theta, report) = d_amsgrad_step(&self.state, theta, g, &self.hp)?;
                self.state = state;
                *theta = new_theta;
                Ok(Some(report))
            }
        }
    }
}
