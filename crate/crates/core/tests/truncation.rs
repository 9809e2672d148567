use std::sync::Arc;

use num_complex::Complex64;

use semiclassical::experiment::{compare, log_fit, sigma_search, strictly_decreasing, ReferenceOptions};
use semiclassical::flow::FlowOptions;
use semiclassical::potential::PotentialModel;
use semiclassical::truncation::{autotune_g, choose_l, propagate, tail_order, xi1_norm, Problem, RunSettings};
use semiclassical::wavepacket::{BasisEvaluator, Frame};

/// `cos x − Σ_{k <= n} (Taylor terms)` summed directly from the tail series.
fn cosine_tail(x: f64, n: usize) -> f64 {
    let mut k = n + 1;
    while k % 2 == 1 {
        k += 1;
    }
    let mut sum = 0.0;
    let mut term = x.powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
    let mut sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
    while term.abs() > 1e-300 && k < 400 {
        sum += sign * term;
        term *= x * x / ((k + 1) * (k + 2)) as f64;
        sign = -sign;
        k += 2;
        if term.abs() < 1e-30 * sum.abs() {
            break;
        }
    }
    sum
}

#[test]
fn taylor_residual_matches_series_tail() {
    let v = PotentialModel::parse(1, "cos(x)").unwrap();
    let (hbar, l) = (0.05, 6);
    let f = Frame::standard(hbar, &[0.0], &[0.0]).unwrap();
    let table = v.taylor_coeffs(&[0.0], l + 1).unwrap();
    let grid = Arc::new(f.auto_grid(0).unwrap());
    let ev = BasisEvaluator::new(&f, Arc::new(semiclassical::multiindex::BasisIndexSet::enumerate_upto(1, 0))).unwrap();
    let psi = ev.combination(&[Complex64::new(1.0, 0.0)], &grid);
    let numeric = xi1_norm(&v, &table, l + 1, &psi);
    let oracle = psi.mul_real(|x| cosine_tail(x[0], l + 1)).norm();
    assert!(oracle > 1e-8);
    assert!((numeric - oracle).abs() <= 1e-6 * oracle, "{numeric:e} vs {oracle:e}");
}

#[test]
fn deep_taylor_residual_keeps_relative_accuracy() {
    // far below the ε|V| cancellation floor of a direct difference
    let v = PotentialModel::parse(1, "cos(x)").unwrap();
    let (hbar, l) = (0.02, 15);
    let f = Frame::standard(hbar, &[0.0], &[0.0]).unwrap();
    let table = v.taylor_coeffs(&[0.0], tail_order(l)).unwrap();
    let grid = Arc::new(f.auto_grid(4).unwrap());
    let ev = BasisEvaluator::new(&f, Arc::new(semiclassical::multiindex::BasisIndexSet::enumerate_upto(1, 4))).unwrap();
    let psi = ev.combination(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.8)], &grid);
    let numeric = xi1_norm(&v, &table, l + 1, &psi);
    let oracle = psi.mul_real(|x| cosine_tail(x[0], l + 1)).norm();
    assert!(oracle < 1e-20 && oracle > 0.0);
    assert!((numeric - oracle).abs() <= 1e-10 * oracle, "{numeric:e} vs {oracle:e}");
}

#[test]
fn quartic_tail_vanishes_exactly() {
    let v = PotentialModel::parse(1, "x^4/4 - x").unwrap();
    let f = Frame::standard(0.05, &[0.3], &[0.0]).unwrap();
    let table = v.taylor_coeffs(&[0.3], tail_order(3)).unwrap();
    let grid = Arc::new(f.auto_grid(3).unwrap());
    let ev = BasisEvaluator::new(&f, Arc::new(semiclassical::multiindex::BasisIndexSet::enumerate_upto(1, 3))).unwrap();
    let psi = ev.combination(&[Complex64::new(0.5, 0.0); 4], &grid);
    assert_eq!(xi1_norm(&v, &table, 4, &psi), 0.0);
}

#[test]
fn quartic_is_its_own_taylor_polynomial() {
    let v = PotentialModel::parse(1, "x^4/4").unwrap();
    let f = Frame::standard(0.05, &[0.0], &[0.0]).unwrap();
    let table = v.taylor_coeffs(&[0.0], 4).unwrap();
    let grid = Arc::new(f.auto_grid(3).unwrap());
    let ev = BasisEvaluator::new(&f, Arc::new(semiclassical::multiindex::BasisIndexSet::enumerate_upto(1, 3))).unwrap();
    let psi = ev.combination(&[Complex64::new(0.5, 0.0); 4], &grid);
    assert!(xi1_norm(&v, &table, 4, &psi) < 1e-14);
}

#[test]
fn quartic_certificate_dominates_measured_error() {
    let v = Arc::new(PotentialModel::parse(1, "x^4/4").unwrap());
    let problem = Problem::coherent(v, &[0.5], &[0.0]);
    let hbar = 0.05;
    let mut s = RunSettings::new(hbar, choose_l(hbar, 0.4).unwrap(), 1.0);
    s.flow = FlowOptions::with_tol(1e-12);
    s.coeff.tol = 1e-12;
    let c = compare(&problem, &s, &ReferenceOptions::default()).unwrap();
    let e = c.bound();
    assert!(e.is_finite() && e > 0.0);
    assert!(c.reference_resolves(0.01));
    assert!(c.measured() <= 1.05 * e, "measured {:e} bound {e:e}", c.measured());
    assert!(c.propagation.certificate.e.windows(2).all(|w| w[1] >= w[0]));
    assert!(c.error.identity_gap < 1e-12);
}

#[test]
fn harmonic_sweep_is_exact() {
    let v = Arc::new(PotentialModel::harmonic(&[1.0]));
    let problem = Problem::coherent(v, &[1.0], &[0.0]);
    let s = RunSettings::new(0.1, 3, 1.0);
    let p = propagate(&problem, &s).unwrap();
    assert!(p.certificate.final_bound() < 1e-12);
    let tuned = autotune_g(&problem, &s, 0.1, &[0.5, 0.3, 0.4]).unwrap();
    assert_eq!(tuned.g, 0.3);
    assert_eq!(tuned.table.len(), 3);
}

#[test]
fn autotune_reports_out_of_regime_candidates() {
    let v = Arc::new(PotentialModel::harmonic(&[1.0]));
    let problem = Problem::coherent(v, &[0.0], &[0.0]);
    let s = RunSettings::new(0.1, 3, 0.5);
    let tuned = autotune_g(&problem, &s, 0.1, &[0.1, 0.3]).unwrap();
    assert_eq!(tuned.table[0], (0.1, None));
    assert!(autotune_g(&problem, &s, 0.1, &[0.1, 0.2]).is_err());
}

#[test]
fn unnormalized_initial_data_is_rejected() {
    let v = Arc::new(PotentialModel::harmonic(&[1.0]));
    let mut problem = Problem::coherent(v, &[0.0], &[0.0]);
    problem.c0 = vec![Complex64::new(0.9, 0.0)];
    assert!(matches!(problem.check(0.1, 1e-10), Err(semiclassical::Error::Config(_))));
}

#[test]
fn fits_recover_synthetic_rates() {
    let hbars = [0.1, 0.05, 0.0333, 0.025, 0.02];
    let y: Vec<f64> = hbars.iter().map(|h: &f64| 3.0 * (-0.7 / h).exp()).collect();
    let inv: Vec<f64> = hbars.iter().map(|h| 1.0 / h).collect();
    let fit = log_fit(&inv, &y).unwrap();
    assert!((fit.slope + 0.7).abs() < 1e-10 && (fit.intercept - 3f64.ln()).abs() < 1e-9);
    assert!(fit.r2 > 1.0 - 1e-12);
    let z: Vec<f64> = hbars.iter().map(|h: &f64| (-2.0 / h.sqrt()).exp()).collect();
    let (sigma, _) = sigma_search(&hbars, &z).unwrap();
    assert_eq!(sigma, 0.5);
    assert!(strictly_decreasing(&y) && !strictly_decreasing(&[1.0, 1.0]));
}
