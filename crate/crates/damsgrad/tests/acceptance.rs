// End-to-end acceptance checks, one test per claim. Each prints a summary
// line; run with --nocapture to see them for passing tests too.

use damsgrad::analysis::{
    predict_first_replacement, replacement_coefficient, simulate_first_replacement,
    FirstReplacement, ReplacementScenario,
};
use damsgrad::benchmarks::drift::{recovery_steps, run_drift_regression, run_drift_regression_segment, DriftRegressionTask, TargetFn};
use damsgrad::benchmarks::rastrigin::{run_rastrigin, run_rastrigin_segment};
use damsgrad::benchmarks::tune::{random_search_tune, TuneSpec};
use damsgrad::benchmarks::RunRecord;
use damsgrad::network::{mse_loss, Activation, Matrix, Mlp, OutputMap};
use damsgrad::optim::{GradVector, HyperParams, Optimizer, OptimizerKind, ParamVector};
use damsgrad::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 4;

fn random_stream(seed: u64, steps: usize) -> (Vec<Real>, Vec<Vec<Real>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0: Vec<Real> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stream = (0..steps)
        .map(|_| {
            (0..DIM)
                .map(|_| {
                    let g: Real = rng.random_range(-3.0..3.0);
                    if g == 0.0 { 1e-3 } else { g }
                })
                .collect()
        })
        .collect();
    (theta0, stream)
}

fn bits_eq(a: &[Real], b: &[Real]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// With beta3 = 1 the decayed maximum never decays and must reproduce
// AmsGrad bit for bit; with beta3 = beta2 (and strictly positive squared
// gradients) the maximum always picks the fresh value and must reproduce
// Adam bit for bit.
#[test]
fn mode_collapse_exactness() {
    for seed in 0..50u64 {
        let (theta0, stream) = random_stream(seed, 200);

        let hp_one = HyperParams::new(0.01, 1.0);
        let mut ams = Optimizer::new(OptimizerKind::AmsGrad, hp_one.clone(), DIM).unwrap();
        let mut dams = Optimizer::new(OptimizerKind::DAmsGrad, hp_one, DIM).unwrap();
        let mut ta = ParamVector(theta0.clone());
        let mut td = ParamVector(theta0.clone());
        for g in &stream {
            let ra = ams.step(&mut ta, &GradVector(g.clone())).unwrap().unwrap();
            let rd = dams.step(&mut td, &GradVector(g.clone())).unwrap().unwrap();
            assert!(bits_eq(&ta.0, &td.0), "seed {seed}: theta diverged between amsgrad and beta3=1");
            assert_eq!(ra.replaced_mask, rd.replaced_mask, "seed {seed}");
        }
        assert!(bits_eq(&ams.state().v_max, &dams.state().v_max), "seed {seed}");

        let hp_b2 = HyperParams::new(0.01, 0.999);
        let mut adam = Optimizer::new(OptimizerKind::Adam, hp_b2.clone(), DIM).unwrap();
        let mut dams = Optimizer::new(OptimizerKind::DAmsGrad, hp_b2, DIM).unwrap();
        let mut ta = ParamVector(theta0.clone());
        let mut td = ParamVector(theta0);
        for g in &stream {
            adam.step(&mut ta, &GradVector(g.clone())).unwrap();
            dams.step(&mut td, &GradVector(g.clone())).unwrap();
            assert!(bits_eq(&ta.0, &td.0), "seed {seed}: theta diverged between adam and beta3=beta2");
        }
        assert!(bits_eq(&adam.state().m, &dams.state().m), "seed {seed}");
        assert!(bits_eq(&adam.state().v, &dams.state().v), "seed {seed}");
    }
    println!("mode collapse: 50/50 streams bitwise identical in both regimes: pass");
}

// A constant gradient stream c has bias-corrected moments exactly c and c^2.
#[test]
fn bias_correction_identity() {
    let rel = |x: Real, y: Real| (x - y).abs() / y.abs();
    for c in [-2.5, -1.0, 0.3, 1.7] {
        let hp = HyperParams::<Real>::new(0.01, 0.999);
        let (beta1, beta2) = (hp.beta1, hp.beta2);
        let mut opt = Optimizer::new(OptimizerKind::Adam, hp, 1).unwrap();
        let mut theta = ParamVector(vec![0.0]);
        let g = GradVector(vec![c]);
        for t in 1..=1000i32 {
            opt.step(&mut theta, &g).unwrap();
            let m_hat = opt.state().m[0] / (1.0 - beta1.powi(t));
            let v_hat = opt.state().v[0] / (1.0 - beta2.powi(t));
            assert!(rel(m_hat, c) < 1e-12, "c {c} t {t}: m_hat {m_hat}");
            assert!(rel(v_hat, c * c) < 1e-12, "c {c} t {t}: v_hat {v_hat}");
        }
    }
    println!("bias correction: m_hat = c and v_hat = c^2 to 1e-12 for 1000 steps: pass");
}

// Analytic backpropagation agrees with central finite differences across
// seeds, activations, and batch sizes.
#[test]
fn mlp_gradients_match_finite_differences() {
    let dims = [4usize, 6, 5, 3];
    let mut worst: Real = 0.0;
    for seed in 0..10u64 {
        for activation in [Activation::Swish, Activation::Tanh] {
            for batch in [1usize, 7] {
                let mut net =
                    Mlp::<Real>::scaled_uniform(&dims, activation, OutputMap::Identity, seed)
                        .unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let x = Matrix::from_vec(
                    batch,
                    dims[0],
                    (0..batch * dims[0]).map(|_| rng.random_range(-1.5..1.5)).collect(),
                )
                .unwrap();
                let d = Matrix::from_vec(
                    batch,
                    *dims.last().unwrap(),
                    (0..batch * dims.last().unwrap())
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap();

                let (_, cache) = net.forward(&x).unwrap();
                let analytic = net.backward(&cache, &d).unwrap();

                let mut point = net.flatten().0;
                let eps = 1e-6;
                for i in 0..point.len() {
                    let orig = point[i];
                    let mut eval = |p: Real| {
                        point[i] = p;
                        net.set_params(&ParamVector(point.clone())).unwrap();
                        let (y, _) = net.forward(&x).unwrap();
                        mse_loss(&y, &d).unwrap()
                    };
                    let numeric = (eval(orig + eps) - eval(orig - eps)) / (2.0 * eps);
                    point[i] = orig;
                    net.set_params(&ParamVector(point.clone())).unwrap();
                    let a = analytic.0[i];
                    let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                    worst = worst.max(err);
                }
            }
        }
    }
    assert!(worst < 1e-5, "max rel err {worst}");
    println!("mlp gradients vs central differences: max rel err {worst:.2e} < 1e-5: pass");
}

// Each optimizer, with its learning rate tuned by the standard random
// search, should reach the global basin (loss below 1) within 10^4 steps
// in at least 18 of 20 tuning outcomes.
#[test]
fn rastrigin_tuned_runs_reach_global_basin() {
    let mut counts = Vec::new();
    for (label, kind, beta3) in [
        ("adam", OptimizerKind::Adam, 0.999),
        ("amsgrad", OptimizerKind::AmsGrad, 1.0),
        ("d-amsgrad", OptimizerKind::DAmsGrad, 0.99999),
    ] {
        let mut attained = 0;
        for seed in 0..20u64 {
            let spec = TuneSpec {
                alpha_min: 1e-4,
                alpha_max: 10.0,
                budget: 64,
                steps: 10_000,
                seed,
            };
            let base = HyperParams::new(1e-3, beta3);
            let outcome = random_search_tune(&spec, &base, |hp| {
                run_rastrigin(kind, hp, spec.steps, [-3.0, 5.0], seed)
            })
            .unwrap();
            let Some(best) = outcome.best else { continue };
            let rerun = run_rastrigin(kind, &best.hp, 10_000, [-3.0, 5.0], seed).unwrap();
            if rerun.losses.iter().any(|&l| l < 1.0) {
                attained += 1;
            }
        }
        println!("rastrigin {label}: basin reached in {attained}/20 tuning outcomes (need 18)");
        counts.push((label, attained));
    }
    for (label, attained) in &counts {
        assert!(
            *attained >= 18,
            "{label}: global basin in {attained}/20 tuned runs, need 18/20 \
             (full counts: {counts:?})"
        );
    }
    println!("rastrigin tuned runs: pass");
}

// The closed-form first-replacement step matches a step-by-step simulation
// of the update rule, and the replacement coefficient is strictly
// increasing.
#[test]
fn replacement_law_matches_prediction() {
    for beta2 in [0.99, 0.999] {
        for beta3 in [0.9995, 0.99999] {
            for v_bar in [0.01, 0.25] {
                let scenario = ReplacementScenario::new(beta2, beta3, 0, 1.0, v_bar).unwrap();
                let pred = predict_first_replacement(scenario).unwrap();
                let FirstReplacement::AtStep(t_pred) = pred.t_star else {
                    panic!("bounded scenario predicted unbounded");
                };
                let t_emp = simulate_first_replacement(beta2, beta3, 1.0, v_bar, t_pred + 10)
                    .unwrap()
                    .expect("simulation never replaced");
                assert!(
                    t_emp.abs_diff(t_pred) <= 1,
                    "beta2 {beta2} beta3 {beta3} v_bar {v_bar}: predicted {t_pred}, empirical {t_emp}"
                );
            }

            let mut prev = replacement_coefficient(1, beta2, beta3).unwrap();
            for t in 2..=100_000u64 {
                let c = replacement_coefficient(t, beta2, beta3).unwrap();
                assert!(c > prev, "c(t) not increasing at t {t} (beta2 {beta2}, beta3 {beta3})");
                prev = c;
            }
        }
    }
    println!("replacement law: predictions within 1 step of simulation, c(t) strictly increasing: pass");
}

// After a 100x downward shift in gradient scale the decayed maximum must
// recover faster than the plain maximum in at least 16 of 20 paired seeds,
// while on a stationary task the two stay within 10% of each other.
#[test]
fn drift_adaptability_and_stationary_control() {
    let task = DriftRegressionTask::downward_shift(5000, 15_000, 100.0);
    let transition = task.transition_step().unwrap();
    let mut wins = 0;
    for seed in 0..20u64 {
        let net =
            Mlp::scaled_uniform(&[4, 16, 1], Activation::Swish, OutputMap::Identity, seed)
                .unwrap();
        let ams = run_drift_regression(
            OptimizerKind::AmsGrad,
            &HyperParams::new(0.001, 1.0),
            &task,
            &net,
            seed,
        )
        .unwrap();
        let dams = run_drift_regression(
            OptimizerKind::DAmsGrad,
            &HyperParams::new(0.001, 0.99999),
            &task,
            &net,
            seed,
        )
        .unwrap();
        let win = match (recovery_steps(&dams, transition), recovery_steps(&ams, transition)) {
            (Some(d), Some(a)) => d < a,
            (Some(_), None) => true,
            _ => false,
        };
        if win {
            wins += 1;
        }
    }
    println!("drift recovery: decayed maximum wins {wins}/20 paired seeds (need 16)");
    assert!(wins >= 16, "decayed maximum won only {wins}/20 paired seeds, need 16");

    let control = DriftRegressionTask::stationary(TargetFn::SineMix, 20_000);
    let mut d_finals = Vec::new();
    let mut a_finals = Vec::new();
    for seed in 0..20u64 {
        let net =
            Mlp::scaled_uniform(&[4, 16, 1], Activation::Swish, OutputMap::Identity, seed)
                .unwrap();
        a_finals.push(
            run_drift_regression(
                OptimizerKind::AmsGrad,
                &HyperParams::new(0.001, 1.0),
                &control,
                &net,
                seed,
            )
            .unwrap()
            .final_loss,
        );
        d_finals.push(
            run_drift_regression(
                OptimizerKind::DAmsGrad,
                &HyperParams::new(0.001, 0.99999),
                &control,
                &net,
                seed,
            )
            .unwrap()
            .final_loss,
        );
    }
    let median = |v: &mut Vec<Real>| {
        v.sort_by(Real::total_cmp);
        0.5 * (v[9] + v[10])
    };
    let (md, ma) = (median(&mut d_finals), median(&mut a_finals));
    let gap = (md - ma).abs() / md.min(ma);
    println!("stationary control: median final losses {md:.6} vs {ma:.6} ({:.2}% apart, need < 10%)", 100.0 * gap);
    assert!(gap < 0.10, "stationary medians {md} vs {ma} differ by {:.1}%", 100.0 * gap);
}

// Reruns are byte-identical and a checkpointed run stitches back together
// into exactly the uninterrupted one.
#[test]
fn determinism_and_checkpoint_resume() {
    let hp = HyperParams::new(0.005, 0.99999);
    let a = run_rastrigin(OptimizerKind::DAmsGrad, &hp, 3000, [-3.0, 5.0], 7).unwrap();
    let b = run_rastrigin(OptimizerKind::DAmsGrad, &hp, 3000, [-3.0, 5.0], 7).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a, b);

    let task = DriftRegressionTask::downward_shift(300, 500, 100.0);
    let net = Mlp::scaled_uniform(&[4, 8, 1], Activation::Swish, OutputMap::Identity, 3).unwrap();
    let da = run_drift_regression(OptimizerKind::DAmsGrad, &hp, &task, &net, 11).unwrap();
    let db = run_drift_regression(OptimizerKind::DAmsGrad, &hp, &task, &net, 11).unwrap();
    assert_eq!(da.to_csv(), db.to_csv());
    assert_eq!(da, db);

    let stitched_csv = |head: &RunRecord, tail: &RunRecord| {
        let tail_csv = tail.to_csv();
        let body = &tail_csv[tail_csv.find('\n').unwrap() + 1..];
        format!("{}{}", head.to_csv(), body)
    };

    let full = run_rastrigin(OptimizerKind::DAmsGrad, &hp, 3000, [-3.0, 5.0], 7).unwrap();
    let head = run_rastrigin_segment(OptimizerKind::DAmsGrad, &hp, 3000, [-3.0, 5.0], 7, None, Some(1000)).unwrap();
    let tail = run_rastrigin_segment(
        OptimizerKind::DAmsGrad,
        &hp,
        3000,
        [-3.0, 5.0],
        7,
        Some(&head.snapshot),
        None,
    )
    .unwrap();
    assert_eq!(full.to_csv(), stitched_csv(&head, &tail));
    assert_eq!(full.snapshot, tail.snapshot);
    assert_eq!(full.final_loss.to_bits(), tail.final_loss.to_bits());

    let full = run_drift_regression(OptimizerKind::DAmsGrad, &hp, &task, &net, 11).unwrap();
    let head =
        run_drift_regression_segment(OptimizerKind::DAmsGrad, &hp, &task, &net, 11, None, Some(400))
            .unwrap();
    let tail = run_drift_regression_segment(
        OptimizerKind::DAmsGrad,
        &hp,
        &task,
        &net,
        11,
        Some(&head.snapshot),
        None,
    )
    .unwrap();
    assert_eq!(full.to_csv(), stitched_csv(&head, &tail));
    assert_eq!(full.snapshot, tail.snapshot);

    println!("determinism and checkpoint resume: byte-identical: pass");
}
