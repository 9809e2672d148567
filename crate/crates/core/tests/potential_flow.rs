use std::sync::Arc;

use proptest::prelude::*;

use semiclassical::flow::{energy, integrate_flow, monitor_growth, FlowOptions};
use semiclassical::multiindex::MultiIndex;
use semiclassical::potential::PotentialModel;
use semiclassical::wavepacket::Frame;

fn models() -> Vec<PotentialModel> {
    vec![
        PotentialModel::parse(1, "cos(x)").unwrap(),
        PotentialModel::parse(1, "x^4/4 - x^2").unwrap(),
        PotentialModel::morse(1.0, 0.8, 0.1),
        PotentialModel::gaussian_bumps(2, &[(1.0, vec![0.2, -0.1], 0.7), (-0.5, vec![-0.4, 0.3], 1.1)]),
        PotentialModel::trigonometric(0.7, &[1.0, -0.5], 0.2),
        PotentialModel::parse(2, "exp(-x^2 - y^2/2) * sin(x + 2*y)").unwrap(),
    ]
}

fn central_gradient(v: &PotentialModel, a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let h = 1e-5 * (1.0 + a[i].abs());
            let mut p = a.to_vec();
            let mut m = a.to_vec();
            p[i] += h;
            m[i] -= h;
            (v.value(&p) - v.value(&m)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradients_match_central_differences() {
    for v in models() {
        for a in [vec![0.3, -0.2], vec![-1.1, 0.7], vec![0.05, 1.4]] {
            let a = &a[..v.dim()];
            let (g, h) = v.grad_hess(a).unwrap();
            let fd = central_gradient(&v, a);
            for i in 0..v.dim() {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{} at {a:?}", v.label());
            }
            assert!((&h - h.transpose()).amax() < 1e-14);
        }
    }
}

#[test]
fn taylor_table_is_translation_consistent() {
    for v in models() {
        let a: Vec<f64> = [0.4, -0.3][..v.dim()].to_vec();
        let here = v.taylor_coeffs(&a, 6).unwrap();
        let moved = v.shifted(&a).unwrap().taylor_coeffs(&vec![0.0; v.dim()], 6).unwrap();
        for (x, y) in here.coeffs().iter().zip(moved.coeffs()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{}", v.label());
        }
    }
}

#[test]
fn coefficients_respect_the_cauchy_bound() {
    let delta = 0.8;
    for v in models() {
        let a: Vec<f64> = [0.2, 0.1][..v.dim()].to_vec();
        let m = v.polydisc_majorant(&a, delta).unwrap();
        let table = v.taylor_coeffs(&a, 10).unwrap();
        for (idx, c) in table.basis().indices().iter().zip(table.coeffs()) {
            assert!(c.abs() <= 1.1 * m / delta.powi(idx.order() as i32), "{} m={:?}", v.label(), idx.entries());
        }
    }
}

#[test]
fn polynomials_are_recovered_exactly() {
    let terms = vec![
        (MultiIndex::new(vec![3, 1]), 0.7),
        (MultiIndex::new(vec![0, 2]), -1.3),
        (MultiIndex::new(vec![1, 0]), 2.0),
    ];
    let v = PotentialModel::polynomial(2, &terms);
    let t = v.taylor_coeffs(&[0.0, 0.0], 5).unwrap();
    for (m, c) in &terms {
        assert!((t.get(m).unwrap() - c).abs() < 1e-14);
    }
    let nonzero = t.coeffs().iter().filter(|c| **c != 0.0).count();
    assert_eq!(nonzero, 3);
}

#[test]
fn harmonic_flow_returns_after_a_period() {
    let v = Arc::new(PotentialModel::harmonic(&[2.0]));
    let f0 = Frame::standard(0.1, &[0.7], &[-0.2]).unwrap();
    let traj = integrate_flow(v.clone(), &f0, std::f64::consts::PI, FlowOptions::with_tol(1e-12)).unwrap();
    let f = traj.final_frame();
    assert!((f.a[0] - 0.7).abs() < 1e-9 && (f.eta[0] + 0.2).abs() < 1e-9);
    let d = traj.diagnostics();
    assert!(d.max_symplectic < 1e-8 && d.energy_drift < 1e-8);
    assert!((energy(&v, f) - energy(&v, &f0)).abs() < 1e-9);
    assert!(traj.time_reversal_error().unwrap() < 1e-8);
}

#[test]
fn dense_output_interpolates_between_knots() {
    let v = Arc::new(PotentialModel::parse(1, "cos(x)").unwrap());
    let f0 = Frame::standard(0.05, &[0.2], &[0.0]).unwrap();
    let full = integrate_flow(v.clone(), &f0, 1.0, FlowOptions::with_tol(1e-12)).unwrap();
    let short = integrate_flow(v, &f0, 0.37, FlowOptions::with_tol(1e-12)).unwrap();
    let mid = full.frame_at(0.37).unwrap();
    let end = short.final_frame();
    assert!((mid.a[0] - end.a[0]).abs() < 1e-10);
    assert!((mid.a_mat[(0, 0)] - end.a_mat[(0, 0)]).norm() < 1e-10);
    assert!((mid.action - end.action).abs() < 1e-10);
}

#[test]
fn unstable_equilibrium_grows_exponentially() {
    // near the top of cos, ‖A‖ grows like e^{t}
    let v = Arc::new(PotentialModel::parse(1, "cos(x)").unwrap());
    let f0 = Frame::standard(0.1, &[0.0], &[0.0]).unwrap();
    let traj = integrate_flow(v, &f0, 6.0, FlowOptions::with_tol(1e-11)).unwrap();
    let g = monitor_growth(&traj).unwrap();
    assert!((g.lambda_fit - 1.0).abs() < 0.15, "λ = {}", g.lambda_fit);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cosine_jets_match_closed_form(a in -3.0f64..3.0) {
        let v = PotentialModel::parse(1, "cos(x)").unwrap();
        let t = v.taylor_coeffs(&[a], 8).unwrap();
        let mut fact = 1.0;
        for (k, c) in t.coeffs().iter().enumerate() {
            if k > 0 { fact *= k as f64; }
            let deriv = match k % 4 { 0 => a.cos(), 1 => -a.sin(), 2 => -a.cos(), _ => a.sin() };
            prop_assert!((c - deriv / fact).abs() < 1e-14);
        }
    }

    #[test]
    fn flow_preserves_pair_conditions(a in -1.0f64..1.0, eta in -1.0f64..1.0, hbar in 0.01f64..0.5) {
        let v = Arc::new(PotentialModel::parse(1, "x^4/4 - x^2/2").unwrap());
        let f0 = Frame::standard(hbar, &[a], &[eta]).unwrap();
        let traj = integrate_flow(v, &f0, 2.0, FlowOptions::with_tol(1e-11)).unwrap();
        prop_assert!(traj.diagnostics().max_symplectic < 1e-8);
        prop_assert!(traj.final_frame().validate(1e-8).unwrap().pass);
    }
}
