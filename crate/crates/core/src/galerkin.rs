//! Galerkin system `iħ ċ = K c` for the anharmonic Taylor part of `V`.
//!
//! `K̃ = Σ_{3 <= |m| <= l+1} (D^m V(a)/m!) X̃^m` is assembled with columns on
//! the cap `J̃ = J + 3l − 3` and rows on `J̃ + l + 1`. Its square block is
//! `K`; the remaining rows map `c` to the coefficients that leave the
//! truncated basis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::ladder::LadderAction;
use crate::multiindex::BasisIndexSet;
use crate::potential::jet::JetSpace;
use crate::potential::{PotentialModel, TaylorTable};
use crate::wavepacket::Frame;

/// Smallest per-step defect the adaptive coefficient integrator asks for,
/// per square root of the coefficient dimension.
pub const ROUNDOFF_FLOOR: f64 = 16.0 * f64::EPSILON;

type CMat = DMatrix<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// `J̃(l) = J + 3l − 3`; orders below 2 are rejected.
pub fn tilde_cap(j: usize, l: usize) -> Result<usize> {
    if l < 2 {
        return Err(Error::OrderTooLow { have: l, need: 2 });
    }
    Ok(j + 3 * l - 3)
}

/// Index sets and jet layout shared by every assembly of one run.
#[derive(Clone, Debug)]
pub struct GalerkinSpace {
    l: usize,
    j: usize,
    cap: usize,
    basis: Arc<BasisIndexSet>,
    work: Arc<BasisIndexSet>,
    powers: Arc<BasisIndexSet>,
    jets: Arc<JetSpace>,
}

impl GalerkinSpace {
    pub fn new(dim: usize, j: usize, l: usize) -> Result<Self> {
        let cap = tilde_cap(j, l)?;
        crate::multiindex::basis_size(dim, cap + l + 1)?;
        let jets = JetSpace::new(dim, l + 1);
        Ok(GalerkinSpace {
            l,
            j,
            cap,
            basis: Arc::new(BasisIndexSet::enumerate_upto(dim, cap)),
            work: Arc::new(BasisIndexSet::enumerate_upto(dim, cap + l + 1)),
            powers: Arc::new(jets.basis().clone()),
            jets,
        })
    }

    pub fn order(&self) -> usize {
        self.l
    }

    pub fn initial_cap(&self) -> usize {
        self.j
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &Arc<BasisIndexSet> {
        &self.basis
    }

    /// Index set with rows up to `J̃ + l + 1`.
    pub fn extended_basis(&self) -> &Arc<BasisIndexSet> {
        &self.work
    }

    pub fn jets(&self) -> &Arc<JetSpace> {
        &self.jets
    }

    /// Embed coefficients given on a prefix of the graded order.
    pub fn embed(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        if c.len() > self.basis.count_upto(self.j) {
            return Err(Error::Config(format!(
                "initial coefficients extend beyond grade {}",
                self.j
            )));
        }
        let mut out = vec![zero(); self.basis.len()];
        out[..c.len()].copy_from_slice(c);
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct GalerkinOperator {
    k: CMat,
    leak: CMat,
}

impl GalerkinOperator {
    /// The square operator on `|j|, |k| <= J̃`.
    pub fn k(&self) -> &CMat {
        &self.k
    }

    /// Rows `J̃ < |j| <= J̃ + l + 1` of `K̃`.
    pub fn leakage_block(&self) -> &CMat {
        &self.leak
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.k - self.k.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.k.iter().chain(self.leak.iter()).all(|z| *z == zero())
    }

    pub fn leakage(&self, c: &[Complex64]) -> Vec<Complex64> {
        (&self.leak * DVector::from_column_slice(c)).as_slice().to_vec()
    }
}

/// Assemble `K̃` at the frame's center from a Taylor table of order `>= l+1`.
pub fn assemble_k(space: &GalerkinSpace, frame: &Frame, table: &TaylorTable) -> Result<GalerkinOperator> {
    let l = space.l;
    if table.order() < l + 1 {
        return Err(Error::OrderTooLow {
            have: table.order(),
            need: l + 1,
        });
    }
    let action = LadderAction::new(frame, space.work.clone());
    let n = space.basis.len();
    let nw = space.work.len();
    let powers = &space.powers;
    // (parent ordinal, axis, coefficient) for every power with |m| >= 1
    let plan: Vec<(usize, usize, f64)> = (1..powers.len())
        .map(|o| {
            let m = powers.get(o);
            let p = m.last_nonzero().expect("non-zero power");
            let parent = powers.ordinal(&m.lowered(p).expect("positive entry")).expect("parent in set");
            let coeff = if m.order() >= 3 {
                table.get(m).unwrap_or(0.0)
            } else {
                0.0
            };
            (parent, p, coeff)
        })
        .collect();
    let mut k = CMat::zeros(n, n);
    let mut leak = CMat::zeros(nw - n, n);
    let mut vs = vec![vec![zero(); nw]; powers.len()];
    for col in 0..n {
        vs[0].iter_mut().for_each(|z| *z = zero());
        vs[0][col] = Complex64::new(1.0, 0.0);
        let mut acc = vec![zero(); nw];
        for (o, &(parent, axis, coeff)) in plan.iter().enumerate() {
            let o = o + 1;
            let (head, tail) = vs.split_at_mut(o);
            let out = &mut tail[0];
            out.iter_mut().for_each(|z| *z = zero());
            action.apply_axis(axis, &head[parent], out);
            if coeff != 0.0 {
                for (a, v) in acc.iter_mut().zip(out.iter()) {
                    *a += *v * coeff;
                }
            }
        }
        for (r, v) in acc.into_iter().enumerate() {
            if r < n {
                k[(r, col)] = v;
            } else {
                leak[(r - n, col)] = v;
            }
        }
    }
    Ok(GalerkinOperator { k, leak })
}

/// Frame, Taylor table and operator at time `t` along the trajectory.
pub fn operator_at(
    model: &PotentialModel,
    traj: &Trajectory,
    space: &GalerkinSpace,
    t: f64,
) -> Result<(Frame, GalerkinOperator)> {
    let frame = traj.frame_at(t)?;
    let table = model.taylor_in(&space.jets, frame.a.as_slice())?;
    let op = assemble_k(space, &frame, &table)?;
    Ok((frame, op))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Fourth-order Magnus step with two Gauss points.
    Magnus4,
    /// `exp(−i h K(t + h/2) / ħ)`.
    ExponentialMidpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientOptions {
    pub integrator: Integrator,
    /// Local error target per unit time.
    pub tol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        CoefficientOptions {
            integrator: Integrator::Magnus4,
            tol: 1e-12,
            max_steps: 200_000,
            h_max: 0.25,
        }
    }
}

/// Coefficients at the requested output times.
#[derive(Clone, Debug)]
pub struct CoefficientRun {
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<Complex64>>,
    pub max_norm_drift: f64,
    pub steps: usize,
    pub rejected: usize,
}

/// `exp(−i H) c` for Hermitian `H` by its Taylor series on the vector, in
/// substeps of 1-norm at most 1/2.
///
/// An eigendecomposition would spread roundoff of size `ε‖c‖` over every
/// grade. The series only ever combines neighbouring entries through the
/// band of `H`, so exponentially small top-grade coefficients, which feed
/// the leakage residual, keep their relative accuracy. Each substep runs
/// until every entry of the new term is below `ε/4` of the partial sum at
/// that entry.
fn expm_apply(h: &CMat, c: &[Complex64]) -> Result<Vec<Complex64>> {
    const MAX_TERMS: usize = 400;
    let n = c.len();
    let one_norm = (0..h.ncols())
        .map(|j| h.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let substeps = (2.0 * one_norm).ceil().max(1.0) as usize;
    let scaled = h * Complex64::new(0.0, -1.0 / substeps as f64);
    let mut v = DVector::from_column_slice(c);
    for _ in 0..substeps {
        let mut sum = v.clone();
        let mut term = v;
        let mut converged = false;
        for k in 1..=MAX_TERMS {
            term = &scaled * term * Complex64::new(1.0 / k as f64, 0.0);
            sum += &term;
            if term.iter().zip(sum.iter()).all(|(t, s)| t.norm() <= 0.25 * f64::EPSILON * s.norm()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::IntegrationFailure {
                last_t: f64::NAN,
                reason: format!("exponential series did not converge in {MAX_TERMS} terms (n = {n})"),
            });
        }
        v = sum;
    }
    Ok(v.as_slice().to_vec())
}

struct Propagator<'a> {
    model: &'a PotentialModel,
    traj: &'a Trajectory,
    space: &'a GalerkinSpace,
    integrator: Integrator,
    hbar: f64,
}

impl Propagator<'_> {
    fn k_at(&self, t: f64) -> Result<CMat> {
        Ok(operator_at(self.model, self.traj, self.space, t)?.1.k)
    }

    fn step(&self, t: f64, h: f64, c: &[Complex64]) -> Result<Vec<Complex64>> {
        let hb = self.hbar;
        let heff = match self.integrator {
            Integrator::ExponentialMidpoint => self.k_at(t + h / 2.0)? * Complex64::new(h / hb, 0.0),
            Integrator::Magnus4 => {
                let r = 3f64.sqrt() / 6.0;
                let k1 = self.k_at(t + h * (0.5 - r))?;
                let k2 = self.k_at(t + h * (0.5 + r))?;
                let comm = &k2 * &k1 - &k1 * &k2;
                (&k1 + &k2) * Complex64::new(h / (2.0 * hb), 0.0)
                    - comm * Complex64::new(0.0, 3f64.sqrt() * h * h / (12.0 * hb * hb))
            }
        };
        expm_apply(&heff, c)
    }
}

fn norm(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unitary integration of `iħ ċ = K(t) c` from `t = 0`, reporting `c` at the
/// (sorted, same-sign) output times. `c0` lives on the cap `J`.
pub fn integrate_coefficients(
    model: &PotentialModel,
    traj: &Trajectory,
    space: &GalerkinSpace,
    c0: &[Complex64],
    t_out: &[f64],
    options: &CoefficientOptions,
) -> Result<CoefficientRun> {
    let hbar = traj.frames()[0].hbar;
    let c_init = space.embed(c0)?;
    let n0 = norm(&c_init);
    let floor = ROUNDOFF_FLOOR * (c_init.len() as f64).sqrt();
    let prop = Propagator {
        model,
        traj,
        space,
        integrator: options.integrator,
        hbar,
    };
    let order = match options.integrator {
        Integrator::Magnus4 => 4.0,
        Integrator::ExponentialMidpoint => 2.0,
    };
    let dir = match t_out.last() {
        Some(&t) if t < 0.0 => -1.0,
        _ => 1.0,
    };
    if t_out.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || t_out.iter().any(|t| t * dir < 0.0) {
        return Err(Error::Schedule("output times must be monotone and share a sign".into()));
    }
    let mut run = CoefficientRun {
        times: Vec::with_capacity(t_out.len()),
        coeffs: Vec::with_capacity(t_out.len()),
        max_norm_drift: 0.0,
        steps: 0,
        rejected: 0,
    };
    let mut t = 0.0f64;
    let mut c = c_init;
    let mut h = options.h_max.min(0.05);
    for &target in t_out {
        while (target - t) * dir > 1e-15 * (1.0 + t.abs()) {
            let remaining = (target - t).abs();
            let hs = h.min(remaining).min(options.h_max);
            let full = prop.step(t, dir * hs, &c)?;
            let half = prop.step(t, dir * hs / 2.0, &c)?;
            let two = prop.step(t + dir * hs / 2.0, dir * hs / 2.0, &half)?;
            let err = full
                .iter()
                .zip(&two)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            // step doubling cannot resolve differences below a few ulps
            let target_err = (options.tol * hs).max(floor);
            if err <= target_err {
                t = if hs == remaining { target } else { t + dir * hs };
                c = two;
                run.steps += 1;
                run.max_norm_drift = run.max_norm_drift.max((norm(&c) - n0).abs());
            } else {
                run.rejected += 1;
            }
            if run.steps + run.rejected > options.max_steps {
                return Err(Error::IntegrationFailure {
                    last_t: t,
                    reason: format!("coefficient integrator exceeded {} steps", options.max_steps),
                });
            }
            let factor = if err == 0.0 {
                2.0
            } else {
                (0.9 * (target_err / err).powf(1.0 / (order + 1.0))).clamp(0.2, 2.0)
            };
            h = hs * factor;
            if h < 1e-12 * (1.0 + t.abs()) {
                return Err(Error::IntegrationFailure {
                    last_t: t,
                    reason: "coefficient step size underflow".into(),
                });
            }
        }
        run.times.push(target);
        run.coeffs.push(c.clone());
    }
    Ok(run)
}

/// Chebyshev–Lobatto nodes on `[0, t]` and the matrix mapping node values of
/// `f` to node values of `∫_0^s f`.
pub fn chebyshev_integration(t: f64, n: usize) -> (Vec<f64>, DMatrix<f64>) {
    use std::f64::consts::PI;
    let nn = n - 1;
    let x: Vec<f64> = (0..n).map(|j| -(PI * j as f64 / nn as f64).cos()).collect();
    let tk = |k: usize, x: f64| (k as f64 * x.clamp(-1.0, 1.0).acos()).cos();
    let mut s = DMatrix::zeros(n, n);
    for col in 0..n {
        // Chebyshev coefficients of the cardinal function at node `col`
        let w = if col == 0 || col == nn { 0.5 } else { 1.0 };
        let mut a: Vec<f64> = (0..n)
            .map(|k| 2.0 / nn as f64 * w * tk(k, x[col]))
            .collect();
        a[0] *= 0.5;
        a[nn] *= 0.5;
        let mut b = vec![0.0; n + 1];
        b[1] += a[0];
        if n > 1 {
            b[2] += a[1] / 4.0;
        }
        for k in 2..n {
            b[k + 1] += a[k] / (2.0 * (k + 1) as f64);
            b[k - 1] -= a[k] / (2.0 * (k - 1) as f64);
        }
        let eval = |x: f64| b.iter().enumerate().map(|(k, bk)| bk * tk(k, x)).sum::<f64>();
        let base = eval(-1.0);
        for row in 0..n {
            s[(row, col)] = (eval(x[row]) - base) * t / 2.0;
        }
    }
    let nodes = x.iter().map(|x| (x + 1.0) * t / 2.0).collect();
    (nodes, s)
}

#[derive(Clone, Debug)]
pub struct DysonTerms {
    /// `c^0 .. c^{q_max}` at the final time.
    pub terms: Vec<Vec<Complex64>>,
    /// Remainder built from the integrated coefficients.
    pub remainder: Vec<Complex64>,
    /// Integrated `c(t)` for comparison.
    pub integrated: Vec<Complex64>,
}

/// Dyson terms `c^q(t) = (iħ)^{-q} ∫_{0<s_q<…<s_1<t} K(s_1)⋯K(s_q) c(0)` by
/// repeated spectral cumulative integration, plus the remainder obtained by
/// applying the same recursion `q_max + 1` times to `c(s)` itself.
pub fn dyson_terms(
    model: &PotentialModel,
    traj: &Trajectory,
    space: &GalerkinSpace,
    c0: &[Complex64],
    t: f64,
    q_max: usize,
    nodes: usize,
    options: &CoefficientOptions,
) -> Result<DysonTerms> {
    if q_max > space.l + 1 {
        return Err(Error::Config(format!(
            "Dyson order {q_max} exceeds l + 1 = {}",
            space.l + 1
        )));
    }
    if !(3..=257).contains(&nodes) {
        return Err(Error::QuadratureBudget(format!("{nodes} quadrature nodes requested")));
    }
    let hbar = traj.frames()[0].hbar;
    let (s, integ) = chebyshev_integration(t, nodes);
    let ks: Vec<CMat> = s
        .iter()
        .map(|&si| operator_at(model, traj, space, si).map(|(_, op)| op.k))
        .collect::<Result<_>>()?;
    let n = space.basis.len();
    let factor = Complex64::new(0.0, -1.0 / hbar);
    let pass = |u: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> {
        let f: Vec<DVector<Complex64>> = ks
            .iter()
            .zip(u)
            .map(|(k, ui)| k * DVector::from_column_slice(ui) * factor)
            .collect();
        (0..nodes)
            .map(|row| {
                let mut out = vec![zero(); n];
                for (col, fc) in f.iter().enumerate() {
                    let w = integ[(row, col)];
                    if w != 0.0 {
                        for (o, v) in out.iter_mut().zip(fc.iter()) {
                            *o += v * w;
                        }
                    }
                }
                out
            })
            .collect()
    };
    let c_init = space.embed(c0)?;
    let mut u = vec![c_init.clone(); nodes];
    let mut terms = vec![c_init.clone()];
    for _ in 0..q_max {
        u = pass(&u);
        terms.push(u[nodes - 1].clone());
    }
    let run = integrate_coefficients(model, traj, space, c0, &s[1..], options)?;
    let mut w: Vec<Vec<Complex64>> = std::iter::once(c_init).chain(run.coeffs).collect();
    let integrated = w[nodes - 1].clone();
    for _ in 0..=q_max {
        w = pass(&w);
    }
    Ok(DysonTerms {
        terms,
        remainder: w[nodes - 1].clone(),
        integrated,
    })
}
