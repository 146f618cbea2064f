mod common;

use std::time::Instant;

use common::*;
use spnorm_core::experiments::{gen_synthetic, relative_error, SynthSpec};
use spnorm_core::solver::{bsum_step, grad_u, grad_v, objective, surrogate_hessian_u, surrogate_hessian_v};
use spnorm_core::{balanced_factorization, solve, DenseMatrix, Factors, Init, ObservedMatrix, PExponent, SolverConfig};

fn p(x: f64) -> PExponent {
    PExponent::new(x).unwrap()
}

fn random_problem(seed: u64, m: usize, n: usize, d: usize) -> (ObservedMatrix, Factors) {
    let mut g = rng(seed);
    let y = gaussian(&mut g, m, n, 2.0);
    let obs = random_mask(&mut g, &y, 0.6);
    (obs, random_factors(&mut g, m, n, d, 0.8))
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-12)
}

#[test]
fn gradients_match_central_differences() {
    let ps = [0.2, 0.5, 0.8, 1.0];
    let lambdas = [0.05, 0.5, 2.0];
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let (y, f) = random_problem(k, 7, 5, 3);
        let cfg = SolverConfig::new(p(ps[k as usize % 4]), lambdas[k as usize % 3], 3);
        let (pv, lam) = (cfg.p.get(), cfg.lambda);
        let fd_u = central_difference(f.u(), 1e-5, |u| reference_objective(&y, u, f.v(), lam, pv));
        let fd_v = central_difference(f.v(), 1e-5, |v| reference_objective(&y, f.u(), v, lam, pv));
        worst = worst.max(rel(&grad_u(&y, &f, &cfg).unwrap(), &fd_u));
        worst = worst.max(rel(&grad_v(&y, &f, &cfg).unwrap(), &fd_v));
    }
    assert!(worst < 1e-5, "max relative gradient error {worst}");
}

#[test]
fn objective_matches_definition() {
    for k in 0..10u64 {
        let (y, f) = random_problem(500 + k, 6, 8, 2);
        let cfg = SolverConfig::new(p(0.4), 0.7, 2);
        let a = objective(&y, &f, &cfg).unwrap();
        let b = reference_objective(&y, f.u(), f.v(), 0.7, 0.4);
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

/// `L(U⁰) + ⟨G, Δ⟩ + ½⟨ΔH̃, Δ⟩`
fn surrogate(base: f64, g: &DenseMatrix, h: &DenseMatrix, delta: &DenseMatrix) -> f64 {
    base + g.inner(delta) + 0.5 * delta.matmul(h).unwrap().inner(delta)
}

#[test]
fn quadratic_surrogate_majorizes_both_blocks() {
    for base_seed in 0..20u64 {
        let (y, f) = random_problem(1000 + base_seed, 9, 7, 3);
        let cfg = SolverConfig::new(p([0.3, 0.5, 0.9, 1.0][base_seed as usize % 4]), 0.8, 3);
        let (pv, lam) = (cfg.p.get(), cfg.lambda);
        let l0 = reference_objective(&y, f.u(), f.v(), lam, pv);
        let (gu, hu) = (grad_u(&y, &f, &cfg).unwrap(), surrogate_hessian_u(&f, &cfg).unwrap());
        let (gv, hv) = (grad_v(&y, &f, &cfg).unwrap(), surrogate_hessian_v(&f, &cfg).unwrap());
        let zero_u = DenseMatrix::zeros(9, 3);
        assert!((surrogate(l0, &gu, &hu, &zero_u) - l0).abs() < 1e-14 * l0.max(1.0));
        let mut g = rng(base_seed);
        for k in 0..5 {
            let scale = [1e-3, 0.1, 1.0, 3.0, 10.0][k];
            let du = gaussian(&mut g, 9, 3, scale);
            let u = f.u().add(&du).unwrap();
            let gap = surrogate(l0, &gu, &hu, &du) - reference_objective(&y, &u, f.v(), lam, pv);
            assert!(gap >= -1e-9 * l0.max(1.0), "U block gap {gap}");
            let dv = gaussian(&mut g, 7, 3, scale);
            let v = f.v().add(&dv).unwrap();
            let gap = surrogate(l0, &gv, &hv, &dv) - reference_objective(&y, f.u(), &v, lam, pv);
            assert!(gap >= -1e-9 * l0.max(1.0), "V block gap {gap}");
        }
    }
}

#[test]
fn surrogate_curvature_dominates_masked_row_gram() {
    for seed in 0..10u64 {
        let (y, f) = random_problem(2000 + seed, 8, 10, 4);
        let cfg = SolverConfig::new(p(0.5), 0.3, 4);
        let h = surrogate_hessian_u(&f, &cfg).unwrap();
        for i in 0..y.rows() {
            let cols: Vec<usize> = y.row_slice(i).iter().map(|o| o.col).collect();
            let vi = DenseMatrix::from_fn(cols.len(), 4, |a, b| f.v().get(cols[a], b));
            let diff = h.sub(&vi.gram()).unwrap();
            assert!(min_eigenvalue(&diff) >= -1e-10, "row {i}");
        }
    }
}

#[test]
fn single_steps_never_increase_the_objective() {
    for seed in 0..30u64 {
        let (y, mut f) = random_problem(3000 + seed, 10, 9, 4);
        let cfg = SolverConfig::new(p([0.3, 0.6, 1.0][seed as usize % 3]), 0.5, 4);
        let mut prev = objective(&y, &f, &cfg).unwrap();
        for _ in 0..20 {
            f = bsum_step(&y, &f, &cfg).unwrap();
            let next = objective(&y, &f, &cfg).unwrap();
            assert!(next <= prev + 1e-10 * prev.max(1.0));
            prev = next;
        }
    }
}

fn synth(m: usize, n: usize, rank: usize, snr_db: f64, missing: f64, seed: u64) -> spnorm_core::experiments::GroundTruth {
    gen_synthetic(&SynthSpec {
        m,
        n,
        rank,
        snr_db,
        missing_rate: missing,
        seed,
    })
    .unwrap()
}

#[test]
fn solve_trace_is_monotone() {
    for seed in 0..4u64 {
        let gt = synth(40, 35, 4, 10.0, 0.4, seed);
        let cfg = SolverConfig::new(p(0.5), 5.0, 2).with_escape(true).with_seed(seed);
        let (_, report) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
        for w in report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].max(1.0), "{} -> {}", w[0], w[1]);
        }
        for e in &report.escape_events {
            let t = &report.objective_trace;
            assert!(t[e.trace_index] < t[e.trace_index - 1]);
        }
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let gt = synth(30, 25, 3, 12.0, 0.3, 9);
    let cfg = SolverConfig::new(p(0.5), 2.0, 2).with_escape(true).with_seed(4);
    let (fa, a) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
    let (fb, b) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    let bits = |t: &[f64]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.objective_trace), bits(&b.objective_trace));
}

#[test]
fn noiseless_rank_two_is_recovered() {
    let gt = synth(20, 20, 2, f64::INFINITY, 0.4, 5);
    let cfg = SolverConfig::new(p(0.5), 0.01, 5)
        .with_seed(5)
        .with_conv_tol(1e-6)
        .with_max_iter(20_000);
    let (f, report) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
    assert_eq!(report.final_width, 2);
    let re = relative_error(&f, &gt.x_true, &gt.test_mask).unwrap();
    assert!(re < 1e-3, "held-out RE {re}");
}

#[test]
fn width_one_start_escapes_to_rank_two() {
    let gt = synth(20, 20, 2, f64::INFINITY, 0.2, 8);
    let cfg = SolverConfig::new(p(0.5), 0.05, 1).with_escape(true).with_escape_budget(3).with_seed(8);
    let (_, report) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
    assert!(report.escapes >= 1);
    assert_eq!(report.final_width, 2);
}

#[test]
fn rebalancing_a_solution_never_hurts() {
    for seed in 0..4u64 {
        let gt = synth(30, 30, 3, 15.0, 0.3, 40 + seed);
        let cfg = SolverConfig::new(p(0.5), 3.0, 5).with_seed(seed);
        let (f, report) = solve(&gt.y_obs, &cfg, Init::Random).unwrap();
        assert!(report.final_width > 0);
        let balanced = balanced_factorization(&f.product(), f.width()).unwrap();
        let gap = spnorm_core::diagnostics::variational_gap(&balanced, cfg.p).unwrap();
        assert!(gap.abs() <= 1e-8, "gap {gap}");
        let raw = objective(&gt.y_obs, &f, &cfg).unwrap();
        let rebalanced = objective(&gt.y_obs, &balanced, &cfg).unwrap();
        assert!(rebalanced <= raw + 1e-9, "{rebalanced} > {raw}");
    }
}

#[test]
fn step_cost_scales_linearly_in_observations() {
    let (m, n, d) = (600, 600, 4);
    let mut g = rng(77);
    let x = gaussian(&mut g, m, n, 1.0);
    let f = random_factors(&mut g, m, n, d, 1.0);
    let cfg = SolverConfig::new(p(0.5), 1.0, d);
    let time = |frac: f64, g: &mut rand_chacha::ChaCha8Rng| {
        let y = random_mask(g, &x, frac);
        bsum_step(&y, &f, &cfg).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let start = Instant::now();
            std::hint::black_box(bsum_step(&y, &f, &cfg).unwrap());
            best = best.min(start.elapsed().as_secs_f64());
        }
        (y.len() as f64, best)
    };
    let (z1, t1) = time(0.2, &mut g);
    let (z4, t4) = time(0.8, &mut g);
    let ratio = (t4 / t1) / (z4 / z1);
    assert!((0.5..=2.0).contains(&ratio), "time ratio {} for |Z| ratio {}", t4 / t1, z4 / z1);
}
