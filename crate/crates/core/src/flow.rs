//! Classical flow of the wavepacket parameters:
//! `ȧ = η`, `η̇ = −∇V(a)`, `Ȧ = iB`, `Ḃ = i V''(a) A`, `Ṡ = η²/2 − V(a)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::potential::jet::JetSpace;
use crate::potential::PotentialModel;
use crate::wavepacket::Frame;

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are
// not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    /// Re-impose the symplectic-pair conditions on `B` after each step.
    pub renormalize: bool,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: DEFAULT_TOL,
            renormalize: false,
            max_steps: 2_000_000,
        }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions {
            tol,
            ..Self::default()
        }
    }
}

/// Right-hand side of the stacked real system.
struct Rhs {
    model: Arc<PotentialModel>,
    space: Arc<JetSpace>,
    d: usize,
}

impl Rhs {
    fn new(model: Arc<PotentialModel>) -> Self {
        let d = model.dim();
        Rhs {
            space: JetSpace::new(d, 2),
            model,
            d,
        }
    }

    fn len(&self) -> usize {
        2 * self.d + 4 * self.d * self.d + 1
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let dd = d * d;
        let (a, rest) = y.split_at(d);
        let (eta, rest) = rest.split_at(d);
        let (am, rest) = rest.split_at(2 * dd);
        let (bm, _) = rest.split_at(2 * dd);
        let table = self.model.taylor_in(&self.space, a)?;
        let grad = table.gradient();
        let hess = table.hessian();
        out[..d].copy_from_slice(eta);
        for i in 0..d {
            out[d + i] = -grad[i];
        }
        let o = 2 * d;
        // A stored as (re, im) pairs in row-major order
        for t in 0..dd {
            // Ȧ = iB
            out[o + 2 * t] = -bm[2 * t + 1];
            out[o + 2 * t + 1] = bm[2 * t];
        }
        let ob = o + 2 * dd;
        for i in 0..d {
            for j in 0..d {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..d {
                    re += hess[(i, k)] * am[2 * (k * d + j)];
                    im += hess[(i, k)] * am[2 * (k * d + j) + 1];
                }
                // Ḃ = i V'' A
                out[ob + 2 * (i * d + j)] = -im;
                out[ob + 2 * (i * d + j) + 1] = re;
            }
        }
        let kinetic: f64 = eta.iter().map(|e| e * e).sum::<f64>() / 2.0;
        out[ob + 2 * dd] = kinetic - table.value();
        Ok(())
    }
}

fn pack(frame: &Frame) -> Vec<f64> {
    let d = frame.dim();
    let mut y = Vec::with_capacity(2 * d + 4 * d * d + 1);
    y.extend(frame.a.iter());
    y.extend(frame.eta.iter());
    for m in [&frame.a_mat, &frame.b_mat] {
        for i in 0..d {
            for j in 0..d {
                y.push(m[(i, j)].re);
                y.push(m[(i, j)].im);
            }
        }
    }
    y.push(frame.action);
    y
}

fn unpack(y: &[f64], hbar: f64, d: usize, branch: Complex64) -> Result<Frame> {
    let dd = d * d;
    let mat = |off: usize| {
        DMatrix::from_fn(d, d, |i, j| {
            Complex64::new(y[off + 2 * (i * d + j)], y[off + 2 * (i * d + j) + 1])
        })
    };
    let mut f = Frame::new(
        hbar,
        DVector::from_column_slice(&y[..d]),
        DVector::from_column_slice(&y[d..2 * d]),
        mat(2 * d),
        mat(2 * d + 2 * dd),
    )?;
    f.action = y[2 * d + 4 * dd];
    f.continue_branch(branch);
    Ok(f)
}

/// `B ← (Re(AA*)⁻¹ + i Im sym(BA⁻¹)) A`, which restores both pair
/// conditions exactly when `AA*` is real.
fn renormalize(frame: &mut Frame) {
    let Some(a_inv) = frame.a_mat.clone().try_inverse() else {
        return;
    };
    let p = &frame.b_mat * &a_inv;
    let ps = (&p + p.transpose()) * Complex64::new(0.5, 0.0);
    let cov = (&frame.a_mat * frame.a_mat.adjoint()).map(|z| z.re);
    let Some(re) = cov.try_inverse() else {
        return;
    };
    let fixed = DMatrix::from_fn(frame.dim(), frame.dim(), |i, j| Complex64::new(re[(i, j)], ps[(i, j)].im));
    frame.b_mat = fixed * &frame.a_mat;
}

struct Stepper {
    rhs: Rhs,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(model: Arc<PotentialModel>) -> Self {
        let rhs = Rhs::new(model);
        let n = rhs.len();
        Stepper {
            rhs,
            k: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
        }
    }

    /// One DP5(4) step; returns the fifth-order solution and the scaled error.
    fn step(&mut self, y: &[f64], h: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
        let n = y.len();
        self.rhs.eval(y, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, kr) in self.k[..s].iter().enumerate() {
                    acc += h * A[s][r] * kr[i];
                }
                self.tmp[i] = acc;
            }
            self.rhs.eval(&self.tmp, &mut self.k[s])?;
        }
        let mut y5 = vec![0.0; n];
        let mut err = 0.0f64;
        for i in 0..n {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * self.k[s][i];
                s4 += B4[s] * self.k[s][i];
            }
            y5[i] = y[i] + h * s5;
            let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if y5.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }
        Ok((y5, err))
    }

    /// Adaptive integration from `(t0, y0)` to `t1`, calling `on_step` after
    /// every accepted step.
    fn integrate(
        &mut self,
        t0: f64,
        y0: &[f64],
        t1: f64,
        h0: f64,
        options: &FlowOptions,
        mut on_step: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut h = h0.abs().min(span).max(f64::MIN_POSITIVE);
        let mut steps = 0usize;
        while (t1 - t) * dir > 0.0 {
            let remaining = (t1 - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = if last { remaining } else { h };
            let (y_new, err) = match self.step(&y, dir * hs, options.tol) {
                Ok(v) => v,
                Err(e) => {
                    return Err(Error::IntegrationFailure {
                        last_t: t,
                        reason: e.to_string(),
                    })
                }
            };
            if err <= 1.0 {
                t = if last { t1 } else { t + dir * hs };
                y = on_step(t, &y_new)?;
                steps += 1;
                if steps > options.max_steps {
                    return Err(Error::Resource(format!(
                        "classical flow exceeded {} steps at t = {t}",
                        options.max_steps
                    )));
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                0.1
            };
            h = hs * factor;
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::IntegrationFailure {
                    last_t: t,
                    reason: "step size underflow".into(),
                });
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDiagnostics {
    pub max_symplectic: f64,
    pub max_covariance: f64,
    pub energy_drift: f64,
    pub max_norm_a: f64,
    pub max_branch_jump: f64,
}

/// Knot frames of an adaptive integration plus dense evaluation.
pub struct Trajectory {
    model: Arc<PotentialModel>,
    options: FlowOptions,
    times: Vec<f64>,
    frames: Vec<Frame>,
    diagnostics: FlowDiagnostics,
}

/// `η²/2 + V(a)`.
pub fn energy(model: &PotentialModel, frame: &Frame) -> f64 {
    frame.eta.norm_squared() / 2.0 + model.value(frame.a.as_slice())
}

pub fn integrate_flow(
    model: Arc<PotentialModel>,
    frame0: &Frame,
    t_final: f64,
    options: FlowOptions,
) -> Result<Trajectory> {
    if model.dim() != frame0.dim() {
        return Err(Error::Config("model and frame dimensions differ".into()));
    }
    let hbar = frame0.hbar;
    let d = frame0.dim();
    let e0 = energy(&model, frame0);
    let report0 = frame0.validate(f64::INFINITY)?;
    let mut times = vec![0.0];
    let mut frames = vec![frame0.clone()];
    let mut diag = FlowDiagnostics {
        max_symplectic: report0.cond1.max(report0.cond2),
        max_covariance: report0.covariance,
        energy_drift: 0.0,
        max_norm_a: frame0.matrix_norms().0,
        max_branch_jump: 0.0,
    };
    let mut stepper = Stepper::new(model.clone());
    let h0 = (options.tol.powf(0.2) * 0.1).min(t_final.abs().max(1e-300));
    if t_final != 0.0 {
        stepper.integrate(0.0, &pack(frame0), t_final, h0, &options, |t, y| {
            let prev = frames.last().expect("initial frame present").sqrt_branch;
            let mut f = unpack(y, hbar, d, prev)?;
            if options.renormalize {
                renormalize(&mut f);
            }
            let r = f.validate(f64::INFINITY)?;
            diag.max_symplectic = diag.max_symplectic.max(r.cond1.max(r.cond2));
            diag.max_covariance = diag.max_covariance.max(r.covariance);
            diag.energy_drift = diag.energy_drift.max((energy(&model, &f) - e0).abs());
            diag.max_norm_a = diag.max_norm_a.max(f.matrix_norms().0);
            diag.max_branch_jump = diag.max_branch_jump.max((f.sqrt_branch - prev).norm());
            let packed = pack(&f);
            times.push(t);
            frames.push(f);
            Ok(packed)
        })?;
    }
    Ok(Trajectory {
        model,
        options,
        times,
        frames,
        diagnostics: diag,
    })
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("trajectory has a knot")
    }

    pub fn final_frame(&self) -> &Frame {
        self.frames.last().expect("trajectory has a knot")
    }

    pub fn diagnostics(&self) -> &FlowDiagnostics {
        &self.diagnostics
    }

    pub fn model(&self) -> &Arc<PotentialModel> {
        &self.model
    }

    /// Frame at an arbitrary time inside the integrated interval, obtained
    /// by integrating from the nearest preceding knot.
    pub fn frame_at(&self, t: f64) -> Result<Frame> {
        let t_end = self.t_final();
        let (lo, hi) = if t_end >= 0.0 { (0.0, t_end) } else { (t_end, 0.0) };
        let slack = 1e-12 * (1.0 + t_end.abs());
        if t < lo - slack || t > hi + slack {
            return Err(Error::Schedule(format!(
                "time {t} outside the trajectory interval [{lo}, {hi}]"
            )));
        }
        // knots are monotone in the integration direction
        let forward = t_end >= 0.0;
        let idx = if forward {
            self.times.partition_point(|&s| s <= t).saturating_sub(1)
        } else {
            self.times.partition_point(|&s| s >= t).saturating_sub(1)
        };
        let (t0, f0) = (self.times[idx], &self.frames[idx]);
        if t == t0 {
            return Ok(f0.clone());
        }
        let h0 = if idx + 1 < self.times.len() {
            (self.times[idx + 1] - t0).abs()
        } else {
            (t - t0).abs()
        };
        let mut stepper = Stepper::new(self.model.clone());
        let mut branch = f0.sqrt_branch;
        let (hbar, d) = (f0.hbar, f0.dim());
        let y = stepper.integrate(t0, &pack(f0), t, h0, &self.options, |_, y| {
            let f = unpack(y, hbar, d, branch)?;
            branch = f.sqrt_branch;
            Ok(y.to_vec())
        })?;
        let mut f = unpack(&y, hbar, d, branch)?;
        if self.options.renormalize {
            renormalize(&mut f);
        }
        Ok(f)
    }

    /// Integrate back from the final frame to `t = 0`; returns the largest
    /// componentwise deviation from the initial frame.
    pub fn time_reversal_error(&self) -> Result<f64> {
        let back = integrate_flow(
            self.model.clone(),
            &Frame {
                action: self.final_frame().action,
                ..self.final_frame().clone()
            },
            -self.t_final(),
            self.options,
        )?;
        let start = pack(&self.frames[0]);
        let end = pack(back.final_frame());
        Ok(start
            .iter()
            .zip(&end)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// CSV rows: `t, a.., eta.., A re/im.., B re/im.., S, cond1, cond2`.
    pub fn to_csv_rows(&self) -> (String, Vec<Vec<f64>>) {
        let d = self.frames[0].dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("a{i}")));
        header.extend((1..=d).map(|i| format!("eta{i}")));
        for name in ["A", "B"] {
            for i in 1..=d {
                for j in 1..=d {
                    header.push(format!("{name}{i}{j}_re"));
                    header.push(format!("{name}{i}{j}_im"));
                }
            }
        }
        header.extend(["S", "cond1", "cond2"].map(String::from));
        let rows = self
            .times
            .iter()
            .zip(&self.frames)
            .map(|(t, f)| {
                let mut row = vec![*t];
                row.extend(pack(f));
                let r = f.validate(f64::INFINITY).map(|r| (r.cond1, r.cond2)).unwrap_or((f64::NAN, f64::NAN));
                row.push(r.0);
                row.push(r.1);
                row
            })
            .collect();
        (header.join(","), rows)
    }
}

/// Least-squares envelope `log‖A(t)‖ ≈ log N + λ|t|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthFit {
    pub n_fit: f64,
    pub lambda_fit: f64,
}

/// Fit over 64 evenly spaced times of the whole trajectory.
pub fn monitor_growth(traj: &Trajectory) -> Result<GrowthFit> {
    monitor_growth_window(traj, 0.0, traj.t_final())
}

pub fn monitor_growth_window(traj: &Trajectory, t0: f64, t1: f64) -> Result<GrowthFit> {
    const SAMPLES: usize = 64;
    let mut xs = Vec::with_capacity(SAMPLES);
    let mut ys = Vec::with_capacity(SAMPLES);
    for k in 0..SAMPLES {
        let t = t0 + (t1 - t0) * k as f64 / (SAMPLES - 1) as f64;
        xs.push(t.abs());
        ys.push(traj.frame_at(t)?.matrix_norms().0.ln());
    }
    let fit = crate::stats::linear_fit(&xs, &ys);
    Ok(GrowthFit {
        n_fit: fit.intercept.exp(),
        lambda_fit: fit.slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(hbar: f64, a: f64, eta: f64) -> Frame {
        Frame::standard(hbar, &[a], &[eta]).unwrap()
    }

    #[test]
    fn free_flight_closed_form() {
        let v = Arc::new(PotentialModel::parse(1, "0").unwrap());
        let f0 = scalar(0.1, 0.3, 1.5);
        let traj = integrate_flow(v, &f0, 2.0, FlowOptions::with_tol(1e-12)).unwrap();
        let f = traj.final_frame();
        assert!((f.a[0] - 3.3).abs() < 1e-10);
        assert!((f.eta[0] - 1.5).abs() < 1e-12);
        assert!((f.a_mat[(0, 0)] - Complex64::new(1.0, 2.0)).norm() < 1e-10);
        assert!((f.b_mat[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((f.action - 1.5 * 1.5 * 2.0 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_coherent_state() {
        let v = Arc::new(PotentialModel::harmonic(&[1.0]));
        let traj = integrate_flow(v, &scalar(0.05, 1.0, 0.0), 3.0, FlowOptions::with_tol(1e-12)).unwrap();
        for (t, f) in traj.times().iter().zip(traj.frames()) {
            let e = Complex64::from_polar(1.0, *t);
            assert!((f.a_mat[(0, 0)] - e).norm() < 1e-9);
            assert!((f.b_mat[(0, 0)] - e).norm() < 1e-9);
            assert!((f.a[0] - t.cos()).abs() < 1e-9);
            assert!((f.eta[0] + t.sin()).abs() < 1e-9);
            assert!((f.action + (2.0 * t).sin() / 4.0).abs() < 1e-9);
        }
        let mid = traj.frame_at(1.2345).unwrap();
        assert!((mid.a[0] - 1.2345f64.cos()).abs() < 1e-10);
        assert!(traj.diagnostics().max_branch_jump < 0.5);
        assert!(traj.time_reversal_error().unwrap() < 1e-10);
    }

    #[test]
    fn negative_time_is_supported() {
        let v = Arc::new(PotentialModel::harmonic(&[1.0]));
        let traj = integrate_flow(v, &scalar(0.05, 1.0, 0.0), -1.0, FlowOptions::with_tol(1e-12)).unwrap();
        assert!((traj.final_frame().a[0] - 1f64.cos()).abs() < 1e-10);
        assert!((traj.final_frame().eta[0] - 1f64.sin()).abs() < 1e-10);
        assert!((traj.frame_at(-0.5).unwrap().a[0] - 0.5f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn singular_potential_fails_with_last_time() {
        let v = Arc::new(PotentialModel::parse(1, "-1/x").unwrap());
        match integrate_flow(v, &scalar(0.1, 1.0, 0.0), 5.0, FlowOptions::default()) {
            Err(Error::IntegrationFailure { last_t, .. }) => assert!(last_t > 0.0 && last_t < 5.0),
            other => panic!("unexpected {:?}", other.map(|t| t.t_final())),
        }
    }

    #[test]
    fn growth_fits() {
        let osc = Arc::new(PotentialModel::harmonic(&[1.0]));
        let traj = integrate_flow(osc, &scalar(0.1, 0.0, 0.0), 10.0, FlowOptions::default()).unwrap();
        assert!(monitor_growth(&traj).unwrap().lambda_fit.abs() < 1e-8);
        let free = Arc::new(PotentialModel::parse(1, "0").unwrap());
        let traj = integrate_flow(free, &scalar(0.1, 0.0, 0.0), 100.0, FlowOptions::default()).unwrap();
        assert!(monitor_growth_window(&traj, 10.0, 100.0).unwrap().lambda_fit <= 0.1);
    }
}
