mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sspb_core::sparse_svm::{group_lasso_lambda_max, group_lasso_penalty, smoothed_hinge};
use sspb_core::{
    group_prox, select_regularizer_for_count, smooth_objective, train_group_lasso_svm,
    GroupStructure, TrainConfig,
};

fn prox_objective(z: &[f64], w: &[f64], groups: &GroupStructure, tau: f64) -> f64 {
    let sq: f64 = z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * sq + tau * group_lasso_penalty(z, groups)
}

#[test]
fn prox_matches_numerical_minimization() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..30 {
        let groups = GroupStructure::from_lengths(&[2, 1, 3]).unwrap();
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tau = rng.gen_range(0.0..1.5);
        let closed = group_prox(&w, &groups, tau);
        let numeric = oracles::nelder_mead(|z| prox_objective(z, &w, &groups, tau), &w, 0.5, 8);
        let f_closed = prox_objective(&closed, &w, &groups, tau);
        let f_numeric = prox_objective(&numeric, &w, &groups, tau);
        assert!(f_closed <= f_numeric + 1e-12, "case {case}: {f_closed} > {f_numeric}");
        for (a, b) in closed.iter().zip(&numeric) {
            assert!((a - b).abs() <= 1e-6, "case {case}: {closed:?} vs {numeric:?}");
        }
    }
}

#[test]
fn smoothed_hinge_is_continuous_at_its_knots() {
    for mu in [0.05, 0.1, 0.5] {
        for knot in [1.0, 1.0 - mu] {
            let (a, da) = smoothed_hinge(knot - 1e-9, mu);
            let (b, db) = smoothed_hinge(knot + 1e-9, mu);
            assert!((a - b).abs() < 1e-8);
            assert!((da - db).abs() < 1e-6);
        }
    }
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    (x, y)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for (l2, lw) in [(1.0, 1.0), (0.0, 1.0 / 40.0), (1.0, 10.0)] {
        let (x, y) = random_problem(&mut rng, 40, 7);
        let w: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let b = rng.gen_range(-0.5..0.5);
        let (_, g, gb) = smooth_objective(&x, &y, &w, b, l2, lw, 0.1).unwrap();
        let f = |w: &[f64], b: f64| smooth_objective(&x, &y, w, b, l2, lw, 0.1).unwrap().0;
        let h = 1e-6;
        let mut fd = Vec::new();
        for k in 0..7 {
            let mut p = w.clone();
            let mut m = w.clone();
            p[k] += h;
            m[k] -= h;
            fd.push((f(&p, b) - f(&m, b)) / (2.0 * h));
        }
        fd.push((f(&w, b + h) - f(&w, b - h)) / (2.0 * h));
        let mut an = g.clone();
        an.push(gb);
        let diff: f64 = an.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale <= 1e-5, "relative error {}", diff / scale);
    }
}

/// 200 samples, five groups of three dimensions; only groups 0 and 2 carry
/// the label.
fn planted(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>, GroupStructure) {
    let groups = GroupStructure::uniform(5, 3);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut row: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in 0..3 {
            row[k] += 0.8 * label;
            row[6 + k] += 0.6 * label;
        }
        x.push(row);
        y.push(label);
    }
    (x, y, groups)
}

fn solver() -> TrainConfig {
    TrainConfig {
        tol: 1e-9,
        max_epochs: 20_000,
        ..TrainConfig::default()
    }
}

#[test]
fn kept_count_is_monotone_over_a_lambda_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (x, y, groups) = planted(&mut rng);
    let lmax = group_lasso_lambda_max(&x, &y, &groups, 0.1).unwrap();
    let mut last = usize::MAX;
    for i in 0..10 {
        let lambda = lmax * i as f64 / 9.0;
        let fit = train_group_lasso_svm(&x, &y, &groups, &TrainConfig { lambda, ..solver() }).unwrap();
        let k = fit.selection.len();
        assert!(k <= last, "lambda {lambda}: {k} groups after {last}");
        last = k;
    }
    assert_eq!(last, 0);
}

#[test]
fn planted_support_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (x, y, groups) = planted(&mut rng);
    let lmax = group_lasso_lambda_max(&x, &y, &groups, 0.1).unwrap();
    let found = (1..40).any(|i| {
        let lambda = lmax * i as f64 / 40.0;
        let fit = train_group_lasso_svm(&x, &y, &groups, &TrainConfig { lambda, ..solver() }).unwrap();
        fit.selection.kept() == [0, 2]
    });
    assert!(found);
    let choice = select_regularizer_for_count(&x, &y, &groups, 2, &solver()).unwrap();
    assert_eq!(choice.selection.kept(), &[0, 2]);
}

#[test]
fn lambda_max_zeroes_every_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let (x, y, groups) = planted(&mut rng);
    let lmax = group_lasso_lambda_max(&x, &y, &groups, 0.1).unwrap();
    let at = train_group_lasso_svm(&x, &y, &groups, &TrainConfig { lambda: lmax * 1.001, ..solver() }).unwrap();
    assert!(at.selection.is_empty());
    let below = train_group_lasso_svm(&x, &y, &groups, &TrainConfig { lambda: lmax * 0.9, ..solver() }).unwrap();
    assert!(!below.selection.is_empty());
}
