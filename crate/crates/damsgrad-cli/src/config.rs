//! Experiment configuration: strict TOML with defaults filled in at parse
//! time, so a parsed config serializes back to an equivalent document and
//! its hash pins the exact experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use damsgrad::benchmarks::drift::{DriftRegressionTask, TargetFn};
use damsgrad::benchmarks::tune::TuneSpec;
use damsgrad::optim::{HyperParams, OptimizerKind};
use damsgrad::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Rastrigin runs always start here; the canonical hard start used by the
/// whole benchmark suite.
pub const RASTRIGIN_START: [Real; 2] = [-3.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkId {
    Rastrigin,
    DriftStationary,
    DriftDownwardShift,
}

impl std::fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BenchmarkId::Rastrigin => "rastrigin",
            BenchmarkId::DriftStationary => "drift-stationary",
            BenchmarkId::DriftDownwardShift => "drift-downward-shift",
        };
        f.write_str(s)
    }
}

fn default_beta1() -> Real {
    0.9
}
fn default_beta2() -> Real {
    0.999
}
fn default_epsilon() -> Real {
    1e-8
}

/// The `[hyperparams]` table. `beta3` stays optional here because its
/// default depends on the optimizer; see [`HyperSection::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    pub alpha: Real,
    #[serde(default = "default_beta1")]
    pub beta1: Real,
    #[serde(default = "default_beta2")]
    pub beta2: Real,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta3: Option<Real>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Real,
}

impl HyperSection {
    /// Fills `beta3` by optimizer: required for `d-amsgrad` (the decay is
    /// its defining knob, so no silent default), fixed at 1 for `amsgrad`,
    /// and `beta2` otherwise (where the value is inert anyway).
    pub fn resolve(&self, kind: OptimizerKind) -> Result<HyperParams<Real>> {
        let beta3 = match (kind, self.beta3) {
            (OptimizerKind::DAmsGrad, None) => {
                bail!("optimizer \"d-amsgrad\" requires hyperparams.beta3")
            }
            (OptimizerKind::AmsGrad, Some(b)) if b != 1.0 => {
                bail!("\"amsgrad\" keeps the plain maximum; beta3 = {b} conflicts (omit it or use \"d-amsgrad\")")
            }
            (OptimizerKind::AmsGrad, _) => 1.0,
            (_, Some(b)) => b,
            (_, None) => self.beta2,
        };
        let hp = HyperParams {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3,
            epsilon: self.epsilon,
        };
        hp.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(hp)
    }
}

fn default_phase1() -> u64 {
    5000
}
fn default_phase2() -> u64 {
    15_000
}
fn default_factor() -> Real {
    100.0
}
fn default_noise_std() -> Real {
    0.1
}
fn default_hidden() -> usize {
    16
}
fn default_target() -> TargetFn {
    TargetFn::SineMix
}

/// The `[drift]` table; every field has the benchmark-suite default, so an
/// empty table selects the standard task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    #[serde(default = "default_phase1")]
    pub phase1: u64,
    #[serde(default = "default_phase2")]
    pub phase2: u64,
    #[serde(default = "default_factor")]
    pub factor: Real,
    #[serde(default = "default_noise_std")]
    pub noise_std: Real,
    /// Hidden width of the regression network (input 4, output 1).
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Target function for the stationary task (the shift task pins its own).
    #[serde(default = "default_target")]
    pub target: TargetFn,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            phase1: default_phase1(),
            phase2: default_phase2(),
            factor: default_factor(),
            noise_std: default_noise_std(),
            hidden: default_hidden(),
            target: default_target(),
        }
    }
}

fn default_alpha_min() -> Real {
    1e-4
}
fn default_alpha_max() -> Real {
    10.0
}
fn default_budget() -> usize {
    64
}
fn default_trial_steps() -> u64 {
    10_000
}

/// The `[tuner]` table. Present means the config supports `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSection {
    #[serde(default = "default_alpha_min")]
    pub alpha_min: Real,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: Real,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_trial_steps")]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
}

impl TunerSection {
    pub fn to_spec(&self) -> TuneSpec {
        TuneSpec {
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            budget: self.budget,
            steps: self.steps,
            seed: self.seed,
        }
    }
}

fn default_beta2s() -> Vec<Real> {
    vec![0.99, 0.999]
}
fn default_beta3s() -> Vec<Real> {
    vec![0.9995, 0.99999]
}
fn default_v_max() -> Real {
    1.0
}
fn default_v_bars() -> Vec<Real> {
    vec![0.01]
}
fn default_max_scan() -> u64 {
    2_000_000
}

/// The `[replacement]` table for `analyze-replacement`: the grid of decay
/// regimes and steady squared-gradient levels to scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplacementSection {
    #[serde(default = "default_beta2s")]
    pub beta2s: Vec<Real>,
    #[serde(default = "default_beta3s")]
    pub beta3s: Vec<Real>,
    #[serde(default = "default_v_max")]
    pub v_max: Real,
    #[serde(default = "default_v_bars")]
    pub v_bars: Vec<Real>,
    /// Simulation cutoff for the empirical column.
    #[serde(default = "default_max_scan")]
    pub max_scan: u64,
}

impl Default for ReplacementSection {
    fn default() -> Self {
        ReplacementSection {
            beta2s: default_beta2s(),
            beta3s: default_beta3s(),
            v_max: default_v_max(),
            v_bars: default_v_bars(),
            max_scan: default_max_scan(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    pub optimizer: OptimizerKind,
    pub steps: u64,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub hyperparams: HyperSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuner: Option<TunerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replacement: Option<ReplacementSection>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must be non-empty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds contain duplicates; each seed writes its own artifact set");
        }
        if self.steps == 0 {
            bail!("steps must be at least 1");
        }
        self.hyperparams.resolve(self.optimizer)?;

        match self.benchmark {
            BenchmarkId::Rastrigin => {
                if self.drift.is_some() {
                    bail!("the [drift] table applies only to drift benchmarks");
                }
            }
            BenchmarkId::DriftStationary => {}
            BenchmarkId::DriftDownwardShift => {
                let d = self.drift.clone().unwrap_or_default();
                if self.steps != d.phase1 + d.phase2 {
                    bail!(
                        "steps ({}) must equal drift.phase1 + drift.phase2 ({})",
                        self.steps,
                        d.phase1 + d.phase2
                    );
                }
            }
        }
        if let Some(d) = &self.drift {
            if d.phase1 == 0 || d.phase2 == 0 {
                bail!("drift phases must be non-empty");
            }
            if !(d.factor > 0.0) || !d.factor.is_finite() {
                bail!("drift.factor must be a positive finite number");
            }
            if !(d.noise_std >= 0.0) || !d.noise_std.is_finite() {
                bail!("drift.noise_std must be a non-negative finite number");
            }
            if d.hidden == 0 {
                bail!("drift.hidden must be at least 1");
            }
        }
        if let Some(t) = &self.tuner {
            t.to_spec().validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let Some(r) = &self.replacement {
            if r.beta2s.is_empty() || r.beta3s.is_empty() || r.v_bars.is_empty() {
                bail!("replacement grid lists must be non-empty");
            }
            for &b2 in &r.beta2s {
                if !(b2 > 0.0 && b2 < 1.0) {
                    bail!("replacement.beta2s entries must lie in (0, 1), got {b2}");
                }
            }
            for &b3 in &r.beta3s {
                if !(b3 > 0.0 && b3 <= 1.0) {
                    bail!("replacement.beta3s entries must lie in (0, 1], got {b3}");
                }
            }
            if !(r.v_max >= 0.0) || r.v_bars.iter().any(|&v| !(v >= 0.0)) {
                bail!("replacement.v_max and v_bars must be non-negative");
            }
        }
        Ok(())
    }

    /// Resolved step-rule hyperparameters.
    pub fn hp(&self) -> Result<HyperParams<Real>> {
        self.hyperparams.resolve(self.optimizer)
    }

    /// The drift task this config describes. Errors on `rastrigin`.
    pub fn drift_task(&self) -> Result<DriftRegressionTask> {
        let d = self.drift.clone().unwrap_or_default();
        let mut task = match self.benchmark {
            BenchmarkId::Rastrigin => bail!("rastrigin is not a drift benchmark"),
            BenchmarkId::DriftStationary => DriftRegressionTask::stationary(d.target, self.steps),
            BenchmarkId::DriftDownwardShift => {
                DriftRegressionTask::downward_shift(d.phase1, d.phase2, d.factor)
            }
        };
        task.noise_std = d.noise_std;
        Ok(task)
    }

    /// Network layer widths for the drift benchmarks.
    pub fn net_dims(&self) -> Vec<usize> {
        let hidden = self.drift.clone().unwrap_or_default().hidden;
        vec![4, hidden, 1]
    }

    /// Canonical text: the parsed config re-serialized with all defaults
    /// made explicit. Hashing this pins the experiment regardless of
    /// formatting or comments in the source file.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).context("config parse failed")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text)
}

/// Output directory precedence: `--out`, then `out_dir` in the config, then
/// `$DAMSGRAD_OUT_ROOT/<config stem>`, then `./runs/<config stem>`.
pub fn resolve_out_dir(
    cli_out: Option<PathBuf>,
    cfg: &ExperimentConfig,
    config_path: &Path,
) -> PathBuf {
    if let Some(out) = cli_out {
        return out;
    }
    if let Some(out) = &cfg.out_dir {
        return out.clone();
    }
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    match std::env::var_os("DAMSGRAD_OUT_ROOT") {
        Some(root) => PathBuf::from(root).join(stem),
        None => PathBuf::from("runs").join(stem),
    }
}
