//! Truncation order selection, residuals and the Duhamel certificate.
//!
//! For `ψ̃ = e^{iS/ħ} Σ c_j φ_j` driven by the truncated Galerkin system the
//! Schrödinger residual splits into the Taylor remainder
//! `ξ¹ = (Z^[l]_a − Z_a) ψ̃` and the leakage `ξ²` out of the cap `J̃`, and
//! `‖ψ̃(t) − Ψ(t)‖ <= ħ⁻¹ ∫_0^t (‖ξ¹‖ + ‖ξ²‖)`.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::{integrate_flow, FlowOptions, Trajectory};
use crate::galerkin::{integrate_coefficients, operator_at, CoefficientOptions, CoefficientRun, GalerkinSpace};
use crate::grid::{Grid, GridFunction};
use crate::multiindex::BasisIndexSet;
use crate::potential::{Analyticity, PotentialModel, TaylorTable};
use crate::wavepacket::{wavefunction, BasisEvaluator, Frame};

/// `⌊g/ħ⌋`, rejecting orders below 3. A relative slack of `1e-12` keeps
/// exact ratios such as `0.3 / 0.1` from rounding down.
pub fn choose_l(hbar: f64, g: f64) -> Result<usize> {
    if !(hbar > 0.0 && g > 0.0) {
        return Err(Error::Config(format!("ħ = {hbar} and g = {g} must be positive")));
    }
    let l = (g / hbar * (1.0 + 1e-12)).floor() as usize;
    if l < 3 {
        return Err(Error::OutOfRegime { l, g, hbar });
    }
    Ok(l)
}

/// Initial data independent of ħ: `(a₀, η₀, A₀, B₀)` and coefficients on
/// grades `<= J`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: Arc<PotentialModel>,
    pub a0: DVector<f64>,
    pub eta0: DVector<f64>,
    pub a_mat0: nalgebra::DMatrix<Complex64>,
    pub b_mat0: nalgebra::DMatrix<Complex64>,
    pub j: usize,
    pub c0: Vec<Complex64>,
}

impl Problem {
    /// `A₀ = B₀ = I`, `c = δ_{j0}`.
    pub fn coherent(model: Arc<PotentialModel>, a0: &[f64], eta0: &[f64]) -> Self {
        let d = a0.len();
        Problem {
            model,
            a0: DVector::from_column_slice(a0),
            eta0: DVector::from_column_slice(eta0),
            a_mat0: nalgebra::DMatrix::identity(d, d),
            b_mat0: nalgebra::DMatrix::identity(d, d),
            j: 0,
            c0: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn frame(&self, hbar: f64) -> Result<Frame> {
        Frame::new(
            hbar,
            self.a0.clone(),
            self.eta0.clone(),
            self.a_mat0.clone(),
            self.b_mat0.clone(),
        )
    }

    pub fn check(&self, hbar: f64, tol_sympl: f64) -> Result<()> {
        let n: f64 = self.c0.iter().map(|c| c.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "initial coefficients must have unit norm, Σ|c_j|² = {n}"
            )));
        }
        let report = self.frame(hbar)?.validate(tol_sympl)?;
        if !report.pass {
            return Err(Error::InvalidFrame(format!(
                "initial frame violates the pair conditions: {report:?}"
            )));
        }
        if self.c0.len() > crate::multiindex::basis_size(self.a0.len(), self.j)? as usize {
            return Err(Error::Config(format!(
                "{} coefficients exceed the basis size for J = {}",
                self.c0.len(),
                self.j
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub hbar: f64,
    pub l: usize,
    pub t_final: f64,
    pub flow: FlowOptions,
    pub coeff: CoefficientOptions,
    pub cert_points: usize,
}

impl RunSettings {
    pub fn new(hbar: f64, l: usize, t_final: f64) -> Self {
        RunSettings {
            hbar,
            l,
            t_final,
            flow: FlowOptions::default(),
            coeff: CoefficientOptions::default(),
            cert_points: 33,
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        let n = self.cert_points.max(2);
        (0..n)
            .map(|k| self.t_final * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// `μ = ‖ξ¹‖ + ‖ξ²‖` at the schedule times and `E(t) = ħ⁻¹ ∫_0^t μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub times: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub mu: Vec<f64>,
    pub e: Vec<f64>,
}

impl Certificate {
    /// Trapezoidal accumulation of `μ = ξ¹ + ξ²`.
    pub fn accumulate(times: Vec<f64>, xi1: Vec<f64>, xi2: Vec<f64>, hbar: f64) -> Result<Self> {
        if times.len() != xi1.len() || times.len() != xi2.len() || times.is_empty() {
            return Err(Error::Schedule("residual samples do not match the schedule".into()));
        }
        if times.windows(2).any(|w| w[1].abs() < w[0].abs()) {
            return Err(Error::Schedule("certificate times must move away from 0".into()));
        }
        let mu: Vec<f64> = xi1.iter().zip(&xi2).map(|(a, b)| a + b).collect();
        let mut e = vec![0.0; times.len()];
        for k in 1..times.len() {
            e[k] = e[k - 1] + 0.5 * (mu[k] + mu[k - 1]) * (times[k] - times[k - 1]).abs() / hbar;
        }
        Ok(Certificate {
            times,
            xi1,
            xi2,
            mu,
            e,
        })
    }

    pub fn final_bound(&self) -> f64 {
        *self.e.last().expect("non-empty certificate")
    }
}

/// `‖(Σ_{|m| <= top} c_m (x−a)^m − V) ψ‖` on the grid of `psi`.
///
/// Where `table` continues past `top` and `V` is analytic, the remainder is
/// summed as the series tail `Σ_{top < |m| <= L}` at every grid point whose
/// two last grades are negligible against the tail, which avoids the `ε|V|`
/// cancellation of the direct difference. Other points use the difference.
pub fn xi1_norm(model: &PotentialModel, table: &TaylorTable, top: usize, psi: &GridFunction) -> f64 {
    let last = table.order();
    let series = model.is_analytic() && last >= top + 2;
    let r = psi.mul_real(|x| {
        if series {
            let tail = table.eval_graded(x, top + 1, last);
            let edge = table.eval_graded(x, last - 1, last).abs();
            if edge <= 1e-17 * tail.abs() {
                return tail;
            }
        }
        model.value(x) - table.eval_graded(x, 0, top)
    });
    r.norm()
}

/// Order of the Taylor table used for the ξ¹ tail series at expansion order `l`.
pub fn tail_order(l: usize) -> usize {
    2 * (l + 1) + 8
}

/// Shape of the analytic ξ¹ envelope
/// `M e^{4τ(δ²d + |a|²)} (√(ħ(l+2)) ‖A‖ / δ)^{l+2}` with the unspecified
/// numerical constants set to one; for qualitative comparison only.
pub fn analytic_envelope(meta: &Analyticity, frame: &Frame, l: usize) -> f64 {
    let d = frame.dim() as f64;
    let na = frame.matrix_norms().0;
    let base = (frame.hbar * (l + 2) as f64).sqrt() * na / meta.delta;
    meta.m * (4.0 * meta.tau * (meta.delta * meta.delta * d + frame.a.norm_squared())).exp() * base.powi(l as i32 + 2)
}

/// Highest grade whose coefficient exceeds `threshold` in modulus.
pub fn occupied_grade(basis: &BasisIndexSet, c: &[Complex64], threshold: f64) -> usize {
    c.iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > threshold)
        .map(|(i, _)| basis.grade_of(i))
        .max()
        .unwrap_or(0)
}

/// Output of one certified propagation.
pub struct Propagation {
    pub settings: RunSettings,
    pub trajectory: Trajectory,
    pub space: GalerkinSpace,
    pub frames: Vec<Frame>,
    pub coefficients: CoefficientRun,
    pub certificate: Certificate,
    /// Largest `‖K − K*‖` over the schedule.
    pub max_hermitian_defect: f64,
}

const OCCUPIED: f64 = 1e-15;

pub fn propagate(problem: &Problem, settings: &RunSettings) -> Result<Propagation> {
    let model = &problem.model;
    let frame0 = problem.frame(settings.hbar)?;
    let space = GalerkinSpace::new(frame0.dim(), problem.j, settings.l)?;
    let trajectory = integrate_flow(model.clone(), &frame0, settings.t_final, settings.flow)?;
    let schedule = settings.schedule();
    let coefficients = integrate_coefficients(
        model,
        &trajectory,
        &space,
        &problem.c0,
        &schedule,
        &settings.coeff,
    )?;
    let mut frames = Vec::with_capacity(schedule.len());
    let mut xi1 = Vec::with_capacity(schedule.len());
    let mut xi2 = Vec::with_capacity(schedule.len());
    let mut defect = 0.0f64;
    for (t, c) in schedule.iter().zip(&coefficients.coeffs) {
        let (frame, op) = operator_at(model, &trajectory, &space, *t)?;
        defect = defect.max(op.hermitian_defect());
        let leak = op.leakage(c);
        xi2.push(leak.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        let table = model.taylor_coeffs(frame.a.as_slice(), tail_order(settings.l))?;
        let n = occupied_grade(space.basis(), c, OCCUPIED);
        let grid = Arc::new(frame.auto_grid(n)?);
        let ev = BasisEvaluator::new(&frame, space.basis().clone())?;
        let psi = ev.combination(c, &grid);
        xi1.push(xi1_norm(model, &table, settings.l + 1, &psi));
        frames.push(frame);
    }
    let certificate = Certificate::accumulate(schedule, xi1, xi2, settings.hbar)?;
    Ok(Propagation {
        settings: settings.clone(),
        trajectory,
        space,
        frames,
        coefficients,
        certificate,
        max_hermitian_defect: defect,
    })
}

impl Propagation {
    pub fn final_coefficients(&self) -> &[Complex64] {
        self.coefficients.coeffs.last().expect("schedule is non-empty")
    }

    pub fn final_frame(&self) -> &Frame {
        self.frames.last().expect("schedule is non-empty")
    }

    /// `e^{iS/ħ} Σ c_j φ_j` at the final time.
    pub fn final_wavefunction(&self, grid: &Arc<Grid>) -> Result<GridFunction> {
        wavefunction(self.final_frame(), self.space.basis(), self.final_coefficients(), grid)
    }

    /// Highest grade occupied above roundoff at any schedule time.
    pub fn widest_grade(&self) -> usize {
        self.coefficients
            .coeffs
            .iter()
            .map(|c| occupied_grade(self.space.basis(), c, OCCUPIED))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub g: f64,
    /// `(g, l(ħ_ref), E(T))`, `None` for out-of-regime candidates.
    pub table: Vec<(f64, Option<(usize, f64)>)>,
}

/// Candidate minimizing `E(T)` at `hbar_ref`; ties resolve to the smaller g.
pub fn autotune_g(problem: &Problem, template: &RunSettings, hbar_ref: f64, candidates: &[f64]) -> Result<TuneResult> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut best: Option<(f64, f64)> = None;
    let mut table = Vec::with_capacity(sorted.len());
    for &g in &sorted {
        let l = match choose_l(hbar_ref, g) {
            Ok(l) => l,
            Err(Error::OutOfRegime { .. }) => {
                table.push((g, None));
                continue;
            }
            Err(e) => return Err(e),
        };
        let settings = RunSettings {
            hbar: hbar_ref,
            l,
            ..template.clone()
        };
        let e = propagate(problem, &settings)?.certificate.final_bound();
        table.push((g, Some((l, e))));
        if best.is_none_or(|(_, be)| e < be) {
            best = Some((g, e));
        }
    }
    match best {
        Some((g, _)) => Ok(TuneResult { g, table }),
        None => Err(Error::OutOfRegime {
            l: 0,
            g: sorted.last().copied().unwrap_or(0.0),
            hbar: hbar_ref,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_l_examples() {
        assert_eq!(choose_l(0.1, 0.5).unwrap(), 5);
        assert_eq!(choose_l(0.01, 0.1).unwrap(), 10);
        assert_eq!(choose_l(0.1, 0.3).unwrap(), 3);
        assert!(matches!(choose_l(0.05, 0.1), Err(Error::OutOfRegime { l: 2, .. })));
    }

    #[test]
    fn constant_residual_accumulates_linearly() {
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.25).collect();
        let c = Certificate::accumulate(times, vec![2e-3; 5], vec![1e-3; 5], 0.05).unwrap();
        assert!((c.final_bound() - 3e-3 / 0.05).abs() < 1e-15);
        assert!(c.e.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn misaligned_schedule_is_rejected() {
        assert!(matches!(
            Certificate::accumulate(vec![0.0, 1.0], vec![0.0], vec![0.0, 0.0], 0.1),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn quadratic_run_has_zero_certificate() {
        let p = Problem::coherent(Arc::new(PotentialModel::harmonic(&[1.0])), &[1.0], &[0.0]);
        let run = propagate(&p, &RunSettings::new(0.05, 3, 1.0)).unwrap();
        assert!(run.certificate.final_bound() < 1e-12);
        assert_eq!(run.final_coefficients()[0], Complex64::new(1.0, 0.0));
    }
}
