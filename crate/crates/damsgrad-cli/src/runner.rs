//! Subcommand drivers: execute benchmark runs across seeds and write the
//! plot-ready artifacts (per-seed CSVs, summary JSON, comparison tables).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use damsgrad::analysis::{
    comparison_csv, predict_first_replacement, simulate_first_replacement, ComparisonRow,
    ReplacementScenario,
};
use damsgrad::benchmarks::drift::{recovery_steps, run_drift_regression_segment, DriftRegressionTask};
use damsgrad::benchmarks::rastrigin::run_rastrigin_segment;
use damsgrad::benchmarks::tune::random_search_tune;
use damsgrad::benchmarks::{RunRecord, TrainSnapshot};
use damsgrad::network::{Activation, Mlp, OutputMap};
use damsgrad::optim::{classify_mode, HyperParams, Mode, OptimizerKind};
use damsgrad::Real;
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::{
    load_checkpoint, save_checkpoint, write_atomic, Checkpoint, NetHeader,
    CHECKPOINT_FORMAT_VERSION,
};
use crate::config::{BenchmarkId, ExperimentConfig, RASTRIGIN_START};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

const DRIFT_ACTIVATION: Activation = Activation::Swish;
const DRIFT_OUTPUT_MAP: OutputMap = OutputMap::Identity;

/// One seed of the configured benchmark. The network (drift benchmarks) is
/// seeded by the run seed, so resuming rebuilds the identical
/// initialization before the snapshot parameters are applied.
fn run_one(
    cfg: &ExperimentConfig,
    hp: &HyperParams<Real>,
    task: Option<&DriftRegressionTask>,
    seed: u64,
    resume: Option<&TrainSnapshot>,
    stop_at: Option<u64>,
) -> Result<RunRecord> {
    let record = match cfg.benchmark {
        BenchmarkId::Rastrigin => run_rastrigin_segment(
            cfg.optimizer,
            hp,
            cfg.steps,
            RASTRIGIN_START,
            seed,
            resume,
            stop_at,
        ),
        BenchmarkId::DriftStationary | BenchmarkId::DriftDownwardShift => {
            let net = Mlp::scaled_uniform(
                &cfg.net_dims(),
                DRIFT_ACTIVATION,
                DRIFT_OUTPUT_MAP,
                seed,
            )
            .map_err(|e| anyhow!("{e}"))?;
            run_drift_regression_segment(
                cfg.optimizer,
                hp,
                task.expect("drift task prepared"),
                &net,
                seed,
                resume,
                stop_at,
            )
        }
    };
    record.map_err(|e| anyhow!("{e}"))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot build worker pool")
}

/// Interpolated order-statistic quantile of a sorted slice.
fn quantile(sorted: &[Real], p: Real) -> Real {
    let h = (sorted.len() as Real - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as Real) * (sorted[hi] - sorted[lo])
}

#[derive(Serialize)]
struct PerSeed {
    seed: u64,
    first_step: u64,
    steps_executed: u64,
    final_loss: Real,
    diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovery_steps: Option<u64>,
}

#[derive(Serialize)]
struct SeedFailure {
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    format_version: u32,
    config_hash: &'a str,
    benchmark: String,
    optimizer: String,
    mode: Mode,
    hyperparams: &'a HyperParams<Real>,
    steps: u64,
    seeds: &'a [u64],
    /// Median of final losses across successful seeds; null if none.
    median_final_loss: Option<Real>,
    /// Interquartile range (q75 - q25) of the same.
    iqr_final_loss: Option<Real>,
    per_seed: Vec<PerSeed>,
    failures: Vec<SeedFailure>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: usize,
    pub checkpoint_at: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<()> {
    let hp = cfg.hp()?;
    let hash = cfg.hash();
    let task = match cfg.benchmark {
        BenchmarkId::Rastrigin => None,
        _ => Some(cfg.drift_task()?),
    };

    let mut seeds: Vec<u64> = match opts.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };

    if let Some(at) = opts.checkpoint_at {
        if at == 0 || at > cfg.steps {
            bail!("--checkpoint-at must lie in 1..={}", cfg.steps);
        }
    }

    let resume_cp = match &opts.resume {
        Some(path) => {
            let cp = load_checkpoint(path, &hash)?;
            if let Some(s) = opts.seed {
                if s != cp.seed {
                    bail!("--seed {s} conflicts with checkpoint seed {}", cp.seed);
                }
            }
            let expected_net = match cfg.benchmark {
                BenchmarkId::Rastrigin => None,
                _ => Some(NetHeader {
                    dims: cfg.net_dims(),
                    activation: DRIFT_ACTIVATION,
                    output_map: DRIFT_OUTPUT_MAP,
                }),
            };
            if cp.net != expected_net {
                bail!("checkpoint network header does not match the configured benchmark");
            }
            if let Some(at) = opts.checkpoint_at {
                if at <= cp.snapshot.step {
                    bail!(
                        "--checkpoint-at {at} is not past the resumed step {}",
                        cp.snapshot.step
                    );
                }
            }
            seeds = vec![cp.seed];
            Some(cp)
        }
        None => None,
    };

    if (opts.checkpoint_at.is_some() || resume_cp.is_some()) && seeds.len() != 1 {
        bail!("checkpointing drives a single seed; pass --seed to select one");
    }

    let pool = thread_pool(opts.jobs)?;
    let resume_snapshot = resume_cp.as_ref().map(|cp| &cp.snapshot);
    let results: Vec<(u64, Result<RunRecord>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                (
                    seed,
                    run_one(cfg, &hp, task.as_ref(), seed, resume_snapshot, opts.checkpoint_at),
                )
            })
            .collect()
    });

    let transition = task.as_ref().and_then(|t| t.transition_step());
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    let mut finals = Vec::new();
    for (seed, result) in &results {
        match result {
            Ok(record) => {
                let recovery = transition
                    .filter(|_| record.first_step == 1)
                    .and_then(|t| recovery_steps(record, t));
                write_atomic(
                    &out_dir.join(format!("seed_{seed}.csv")),
                    record.to_csv().as_bytes(),
                )?;
                if record.diverged {
                    eprintln!("seed {seed}: diverged after {} steps", record.steps_executed);
                }
                finals.push(record.final_loss);
                per_seed.push(PerSeed {
                    seed: *seed,
                    first_step: record.first_step,
                    steps_executed: record.steps_executed,
                    final_loss: record.final_loss,
                    diverged: record.diverged,
                    recovery_steps: recovery,
                });
            }
            Err(e) => {
                eprintln!("seed {seed}: failed: {e}");
                failures.push(SeedFailure {
                    seed: *seed,
                    error: e.to_string(),
                });
            }
        }
    }

    finals.sort_by(Real::total_cmp);
    let (median, iqr) = if finals.is_empty() {
        (None, None)
    } else {
        (
            Some(quantile(&finals, 0.5)),
            Some(quantile(&finals, 0.75) - quantile(&finals, 0.25)),
        )
    };
    let summary = Summary {
        format_version: ARTIFACT_FORMAT_VERSION,
        config_hash: &hash,
        benchmark: cfg.benchmark.to_string(),
        optimizer: cfg.optimizer.to_string(),
        mode: classify_mode(&hp),
        hyperparams: &hp,
        steps: cfg.steps,
        seeds: &seeds,
        median_final_loss: median,
        iqr_final_loss: iqr,
        per_seed,
        failures,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;

    if let Some(at) = opts.checkpoint_at {
        let (seed, record) = match &results[0] {
            (seed, Ok(record)) => (*seed, record),
            (seed, Err(e)) => bail!("seed {seed} failed before step {at}: {e}"),
        };
        let net = match cfg.benchmark {
            BenchmarkId::Rastrigin => None,
            _ => Some(NetHeader {
                dims: cfg.net_dims(),
                activation: DRIFT_ACTIVATION,
                output_map: DRIFT_OUTPUT_MAP,
            }),
        };
        let checkpoint = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: hash.clone(),
            seed,
            snapshot: record.snapshot.clone(),
            net,
        };
        let path = opts
            .checkpoint_path
            .clone()
            .unwrap_or_else(|| out_dir.join(format!("checkpoint_seed_{seed}.json")));
        save_checkpoint(&path, &checkpoint)?;
        println!("checkpoint written to {}", path.display());
    }

    let ok = results.iter().filter(|(_, r)| r.is_ok()).count();
    println!(
        "{}: {ok}/{} seeds done, artifacts in {}",
        cfg.benchmark,
        seeds.len(),
        out_dir.display()
    );
    if ok == 0 {
        bail!("all seeds failed");
    }
    Ok(())
}

#[derive(Serialize)]
struct BestTrial {
    trial: usize,
    alpha: Real,
    final_loss: Real,
    mode: Mode,
}

#[derive(Serialize)]
struct TuneReport<'a> {
    format_version: u32,
    config_hash: &'a str,
    benchmark: String,
    optimizer: String,
    budget: usize,
    trial_steps: u64,
    tuner_seed: u64,
    /// Winning trial (lowest final loss among non-diverged); null if every
    /// trial diverged.
    best: Option<BestTrial>,
}

pub fn tune_experiment(cfg: &ExperimentConfig, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let Some(tuner) = &cfg.tuner else {
        bail!("config has no [tuner] section");
    };
    let mut spec = tuner.to_spec();
    if let Some(s) = seed {
        spec.seed = s;
    }
    let hp = cfg.hp()?;

    let task = match cfg.benchmark {
        BenchmarkId::Rastrigin => None,
        BenchmarkId::DriftStationary => {
            let mut task = cfg.drift_task()?;
            task.phases[0].span = spec.steps;
            Some(task)
        }
        BenchmarkId::DriftDownwardShift => {
            bail!("tune supports rastrigin and drift-stationary; the shift task is measured by recovery, not final loss")
        }
    };
    let outcome = random_search_tune(&spec, &hp, |trial_hp| match &task {
        None => run_rastrigin_segment(
            cfg.optimizer,
            trial_hp,
            spec.steps,
            RASTRIGIN_START,
            spec.seed,
            None,
            None,
        ),
        Some(task) => {
            let net = Mlp::scaled_uniform(
                &cfg.net_dims(),
                DRIFT_ACTIVATION,
                DRIFT_OUTPUT_MAP,
                spec.seed,
            )?;
            run_drift_regression_segment(cfg.optimizer, trial_hp, task, &net, spec.seed, None, None)
        }
    })
    .map_err(|e| anyhow!("{e}"))?;

    let mut csv = String::from("trial,alpha,final_loss,diverged\n");
    for t in &outcome.trials {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            t.trial, t.hp.alpha, t.final_loss, t.diverged
        ));
    }
    write_atomic(&out_dir.join("trials.csv"), csv.as_bytes())?;

    let report = TuneReport {
        format_version: ARTIFACT_FORMAT_VERSION,
        config_hash: &cfg.hash(),
        benchmark: cfg.benchmark.to_string(),
        optimizer: cfg.optimizer.to_string(),
        budget: spec.budget,
        trial_steps: spec.steps,
        tuner_seed: spec.seed,
        best: outcome.best.as_ref().map(|b| BestTrial {
            trial: b.trial,
            alpha: b.hp.alpha,
            final_loss: b.final_loss,
            mode: classify_mode(&b.hp),
        }),
    };
    write_json(&out_dir.join("best.json"), &report)?;

    match &outcome.best {
        Some(b) => println!(
            "best trial {}: alpha {} with final loss {} (artifacts in {})",
            b.trial,
            b.hp.alpha,
            b.final_loss,
            out_dir.display()
        ),
        None => eprintln!("every trial diverged; see trials.csv"),
    }
    Ok(())
}

pub fn compare_modes(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    modes: &[Real],
    jobs: usize,
) -> Result<()> {
    if cfg.optimizer != OptimizerKind::DAmsGrad {
        bail!("compare sweeps beta3 regimes; set optimizer = \"d-amsgrad\"");
    }
    for &m in modes {
        if !(0.0..=1.0).contains(&m) || !m.is_finite() {
            bail!("mode beta3 {m} outside [0, 1]");
        }
    }
    let mut sorted = modes.to_vec();
    sorted.sort_by(Real::total_cmp);
    sorted.dedup();
    if sorted.len() != modes.len() {
        bail!("duplicate modes would produce colliding columns");
    }

    let base = cfg.hp()?;
    let task = match cfg.benchmark {
        BenchmarkId::Rastrigin => None,
        _ => Some(cfg.drift_task()?),
    };
    let transition = task.as_ref().and_then(|t| t.transition_step());

    // Paired design: every mode sees the same seeds, and with them the same
    // network initializations and data streams.
    let mut grid = Vec::with_capacity(cfg.seeds.len() * modes.len());
    for &seed in &cfg.seeds {
        for (mi, &beta3) in modes.iter().enumerate() {
            grid.push((mi, seed, beta3));
        }
    }
    let pool = thread_pool(jobs)?;
    let cells: Vec<((usize, u64), Result<RunRecord>)> = pool.install(|| {
        grid.par_iter()
            .map(|&(mi, seed, beta3)| {
                let hp = HyperParams { beta3, ..base };
                ((mi, seed), run_one(cfg, &hp, task.as_ref(), seed, None, None))
            })
            .collect()
    });

    let mut by_key = std::collections::BTreeMap::new();
    for ((mi, seed), result) in cells {
        let record = result.with_context(|| format!("mode {} seed {seed}", modes[mi]))?;
        let recovery = transition.and_then(|t| recovery_steps(&record, t));
        by_key.insert((seed, mi), (record.final_loss, recovery));
    }

    let mut header = String::from("seed");
    for &m in modes {
        header.push_str(&format!(",final_loss_{m}"));
    }
    if transition.is_some() {
        for &m in modes {
            header.push_str(&format!(",recovery_steps_{m}"));
        }
    }
    let mut csv = header;
    csv.push('\n');
    for &seed in &cfg.seeds {
        csv.push_str(&seed.to_string());
        for mi in 0..modes.len() {
            csv.push_str(&format!(",{}", by_key[&(seed, mi)].0));
        }
        if transition.is_some() {
            for mi in 0..modes.len() {
                match by_key[&(seed, mi)].1 {
                    Some(r) => csv.push_str(&format!(",{r}")),
                    None => csv.push_str(",not-observed"),
                }
            }
        }
        csv.push('\n');
    }
    write_atomic(&out_dir.join("compare.csv"), csv.as_bytes())?;

    for (mi, &m) in modes.iter().enumerate() {
        let mut finals: Vec<Real> = cfg.seeds.iter().map(|&s| by_key[&(s, mi)].0).collect();
        finals.sort_by(Real::total_cmp);
        let hp = HyperParams { beta3: m, ..base };
        println!(
            "beta3 {m} ({}): median final loss {}",
            classify_mode(&hp),
            quantile(&finals, 0.5)
        );
    }
    if transition.is_some() {
        if let Some(ref_mi) = modes.iter().position(|&m| m == 1.0) {
            for (mi, &m) in modes.iter().enumerate() {
                if mi == ref_mi {
                    continue;
                }
                let wins = cfg
                    .seeds
                    .iter()
                    .filter(|&&s| match (by_key[&(s, mi)].1, by_key[&(s, ref_mi)].1) {
                        (Some(d), Some(a)) => d < a,
                        (Some(_), None) => true,
                        _ => false,
                    })
                    .count();
                println!(
                    "beta3 {m} recovers before beta3 1 in {wins}/{} paired seeds",
                    cfg.seeds.len()
                );
            }
        }
    }
    println!("comparison table in {}", out_dir.join("compare.csv").display());
    Ok(())
}

pub fn analyze_replacement(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let r = cfg.replacement.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for &beta2 in &r.beta2s {
        for &beta3 in &r.beta3s {
            for &v_bar in &r.v_bars {
                let scenario = ReplacementScenario::new(beta2, beta3, 0, r.v_max, v_bar)
                    .map_err(|e| anyhow!("grid point ({beta2}, {beta3}): {e}"))?;
                let pred = predict_first_replacement(scenario).map_err(|e| anyhow!("{e}"))?;
                let emp = simulate_first_replacement(beta2, beta3, r.v_max, v_bar, r.max_scan)
                    .map_err(|e| anyhow!("{e}"))?;
                rows.push(ComparisonRow {
                    beta2,
                    beta3,
                    v_max: r.v_max,
                    v_bar,
                    t_star_pred: pred.t_star,
                    t_star_emp: emp,
                });
            }
        }
    }
    write_atomic(&out_dir.join("replacement.csv"), comparison_csv(&rows).as_bytes())?;
    println!(
        "replacement grid ({} rows) in {}",
        rows.len(),
        out_dir.join("replacement.csv").display()
    );
    Ok(())
}
