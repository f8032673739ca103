//! When does d-AmsGrad forget a stale maximum?
//!
//! After a replacement leaves `v_max = v` at step `T`, the decayed maximum
//! shrinks by `beta3` per step while the second momentum relaxes toward the
//! current gradient scale. With `v_bar` the expected recent squared gradient,
//! the next replacement is predicted at the smallest `t >= 1` satisfying
//!
//! ```text
//! v_max(T) <= c(t) * v_bar,    c(t) = (1 - beta2^t) / (beta3^t - beta2^t)
//! ```
//!
//! `c(t)` is strictly increasing and diverges, so a finite prediction exists
//! whenever `v_bar > 0` and `beta3 < 1`. At `beta3 = 1` the coefficient is
//! identically 1 and the rule degenerates to AmsGrad: the maximum is only
//! ever displaced by a value at least as large.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, GradVector, HyperParams, OptimizerState, ParamVector, StepReport};
use crate::scalar::Scalar;

fn check_regime<T: Scalar>(beta2: T, beta3: T) -> Result<()> {
    if !(beta2 >= T::zero() && beta2 < T::one()) || !beta2.is_finite() {
        return Err(Error::InvalidSpec(format!("beta2 must lie in [0, 1), got {beta2}")));
    }
    if !(beta3 <= T::one()) || !beta3.is_finite() {
        return Err(Error::InvalidSpec(format!("beta3 must lie in (beta2, 1], got {beta3}")));
    }
    if beta3 <= beta2 {
        return Err(Error::ModeError(format!(
            "replacement analysis needs beta3 > beta2 (decayed maximum); got beta2={beta2}, beta3={beta3}"
        )));
    }
    Ok(())
}

/// `beta^t` in log space, accurate far beyond where repeated multiplication
/// or `powi` would be convenient.
fn pow_log<T: Scalar>(beta: T, t: u64) -> T {
    if beta == T::zero() {
        return T::zero();
    }
    (T::lit(t as f64) * beta.ln()).exp()
}

/// The replacement coefficient `c(t) = (1 - beta2^t) / (beta3^t - beta2^t)`.
///
/// Requires `t >= 1` and `beta2 < beta3 <= 1`. Strictly greater than 1 for
/// `beta3 < 1`, exactly 1 at `beta3 = 1`, strictly increasing, and divergent.
pub fn replacement_coefficient<T: Scalar>(t: u64, beta2: T, beta3: T) -> Result<T> {
    check_regime(beta2, beta3)?;
    if t == 0 {
        return Err(Error::InvalidSpec("replacement coefficient is defined for t >= 1".into()));
    }
    let b2t = pow_log(beta2, t);
    let b3t = pow_log(beta3, t);
    Ok((T::one() - b2t) / (b3t - b2t))
}

/// Step at which the decayed maximum is next replaced, counted from the last
/// replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstReplacement {
    /// Offset `t >= 1` after the last replacement.
    AtStep(u64),
    /// The current maximum is never dominated (`v_bar = 0`, or `beta3 = 1`
    /// with `v_bar < v_max`).
    Unbounded,
}

impl std::fmt::Display for FirstReplacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FirstReplacement::AtStep(t) => write!(f, "{t}"),
            FirstReplacement::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Inputs to the replacement prediction: the state right after a replacement
/// at step `last_replacement_step`, plus the expected near-future gradient
/// scale `v_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementScenario<T> {
    pub beta2: T,
    pub beta3: T,
    pub last_replacement_step: u64,
    pub v_max: T,
    pub v_bar: T,
}

impl<T: Scalar> ReplacementScenario<T> {
    pub fn new(beta2: T, beta3: T, last_replacement_step: u64, v_max: T, v_bar: T) -> Result<Self> {
        check_regime(beta2, beta3)?;
        if !v_max.is_finite() || v_max < T::zero() {
            return Err(Error::InvalidSpec(format!("v_max must be finite and non-negative, got {v_max}")));
        }
        if !v_bar.is_finite() || v_bar < T::zero() {
            return Err(Error::InvalidSpec(format!("v_bar must be finite and non-negative, got {v_bar}")));
        }
        Ok(ReplacementScenario {
            beta2,
            beta3,
            last_replacement_step,
            v_max,
            v_bar,
        })
    }
}

/// A scenario together with its predicted first-replacement offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementPrediction<T> {
    pub scenario: ReplacementScenario<T>,
    pub t_star: FirstReplacement,
}

/// Predicts the first replacement offset: `min { t >= 1 : v_max <= c(t) v_bar }`,
/// or [`FirstReplacement::Unbounded`] when `v_bar = 0` (and at `beta3 = 1`
/// when `v_bar < v_max`, where the constant coefficient never catches up).
///
/// The search brackets the threshold by doubling and then bisects; `c(t)` is
/// strictly increasing, so this finds the same step a linear scan would.
pub fn predict_first_replacement<T: Scalar>(
    scenario: ReplacementScenario<T>,
) -> Result<ReplacementPrediction<T>> {
    let ReplacementScenario {
        beta2,
        beta3,
        v_max,
        v_bar,
        ..
    } = scenario;
    check_regime(beta2, beta3)?;

    if v_bar == T::zero() {
        return Ok(ReplacementPrediction {
            scenario,
            t_star: FirstReplacement::Unbounded,
        });
    }
    let satisfied = |t: u64| -> Result<bool> {
        Ok(v_max <= replacement_coefficient(t, beta2, beta3)? * v_bar)
    };
    if satisfied(1)? {
        return Ok(ReplacementPrediction {
            scenario,
            t_star: FirstReplacement::AtStep(1),
        });
    }
    if beta3 == T::one() {
        return Ok(ReplacementPrediction {
            scenario,
            t_star: FirstReplacement::Unbounded,
        });
    }

    let mut lo = 1u64;
    let mut hi = 2u64;
    while !satisfied(hi)? {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            break;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if satisfied(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ReplacementPrediction {
        scenario,
        t_star: FirstReplacement::AtStep(hi),
    })
}

/// EMA horizon used to estimate `v_bar` from raw squared gradients:
/// `ceil(1 / (1 - beta2))` trailing steps.
pub fn averaging_window<T: Scalar>(beta2: T) -> Result<u64> {
    if !(beta2 >= T::zero() && beta2 < T::one()) {
        return Err(Error::InvalidSpec(format!("beta2 must lie in [0, 1), got {beta2}")));
    }
    let w = (T::one() / (T::one() - beta2)).ceil();
    Ok(w.to_f64().map(|x| x as u64).unwrap_or(u64::MAX).max(1))
}

/// Estimates `v_bar` as the trailing mean of squared gradients over the
/// [`averaging_window`] for the given `beta2` (or over everything, if the
/// history is shorter).
pub fn estimate_v_bar<T: Scalar>(g_squared: &[T], beta2: T) -> Result<T> {
    if g_squared.is_empty() {
        return Err(Error::InvalidSpec("cannot estimate v_bar from an empty history".into()));
    }
    let window = averaging_window(beta2)? as usize;
    let tail = &g_squared[g_squared.len().saturating_sub(window)..];
    let sum = tail.iter().fold(T::zero(), |acc, &x| acc + x);
    Ok(sum / T::lit(tail.len() as f64))
}

/// Observed replacement events of a d-AmsGrad run: `(step, element)` pairs
/// in increasing step order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementTrace {
    pub events: Vec<(u64, usize)>,
}

impl ReplacementTrace {
    pub fn new() -> Self {
        ReplacementTrace::default()
    }

    /// Appends one event; steps must arrive in non-decreasing order.
    pub fn record(&mut self, step: u64, element: usize) {
        debug_assert!(self.events.last().is_none_or(|&(s, _)| s <= step));
        self.events.push((step, element));
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Steps between consecutive events of one element, in event order.
    pub fn gaps_for_element(&self, element: usize) -> Vec<u64> {
        let steps: Vec<u64> = self
            .events
            .iter()
            .filter(|&&(_, e)| e == element)
            .map(|&(s, _)| s)
            .collect();
        steps.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Per-element gaps pooled over all elements (element index order).
    pub fn inter_event_gaps(&self) -> Vec<u64> {
        let mut elements: Vec<usize> = self.events.iter().map(|&(_, e)| e).collect();
        elements.sort_unstable();
        elements.dedup();
        elements
            .into_iter()
            .flat_map(|e| self.gaps_for_element(e))
            .collect()
    }
}

/// Collects the replacement events out of a run's step reports. Report `i`
/// is taken to be step `i + 1`.
pub fn empirical_replacement_trace<T>(reports: &[StepReport<T>]) -> ReplacementTrace {
    let mut trace = ReplacementTrace::new();
    for (i, report) in reports.iter().enumerate() {
        for (element, &replaced) in report.replaced_mask.iter().enumerate() {
            if replaced {
                trace.record(i as u64 + 1, element);
            }
        }
    }
    trace
}

/// Runs a one-element d-AmsGrad from a just-replaced state (`v = v_max`) on a
/// constant squared gradient and returns the first step (1-based offset) at
/// which the decayed maximum is replaced, or `None` within `max_steps`.
pub fn simulate_first_replacement(
    beta2: f64,
    beta3: f64,
    v_max: f64,
    g_squared: f64,
    max_steps: u64,
) -> Result<Option<u64>> {
    check_regime(beta2, beta3)?;
    if !(v_max >= 0.0) || !(g_squared >= 0.0) {
        return Err(Error::InvalidSpec("v_max and g_squared must be non-negative".into()));
    }
    let hp = HyperParams {
        alpha: 0.0,
        beta1: 0.9,
        beta2,
        beta3,
        epsilon: 1e-8,
    };
    let mut state = OptimizerState {
        m: vec![0.0],
        v: vec![v_max],
        v_max: vec![v_max],
        t: 0,
    };
    let mut theta = ParamVector(vec![0.0]);
    let g = GradVector(vec![g_squared.sqrt()]);
    for k in 1..=max_steps {
        let (s, th, report) = optim::d_amsgrad_step(&state, &theta, &g, &hp)?;
        state = s;
        theta = th;
        if report.replaced_mask[0] {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// One row of the prediction-vs-empirical comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub beta2: f64,
    pub beta3: f64,
    pub v_max: f64,
    pub v_bar: f64,
    pub t_star_pred: FirstReplacement,
    pub t_star_emp: Option<u64>,
}

/// Renders comparison rows as CSV with the frozen column order
/// `beta2,beta3,v_max_T,v_bar,t_star_pred,t_star_emp`. An unobserved
/// empirical replacement renders as `not-observed`.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("beta2,beta3,v_max_T,v_bar,t_star_pred,t_star_emp\n");
    for row in rows {
        let emp = match row.t_star_emp {
            Some(t) => t.to_string(),
            None => "not-observed".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.beta2, row.beta3, row.v_max, row.v_bar, row.t_star_pred, emp
        ));
    }
    out
}
