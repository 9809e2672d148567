//! Hagedorn wavepackets `φ_j[A, B, ħ, a, η]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Spectral};
use crate::multiindex::BasisIndexSet;

/// Cramér's constant in `|H_k(y)| <= κ 2^{k/2} √(k!) e^{y²/2}`.
pub const KAPPA: f64 = 1.086435;

const MAX_CONDITION: f64 = 1e12;

type CMat = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Parameters of one wavepacket family plus the classical action.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub hbar: f64,
    pub a: DVector<f64>,
    pub eta: DVector<f64>,
    pub a_mat: CMat,
    pub b_mat: CMat,
    pub action: f64,
    /// A square root of `1 / det A`, continued along the trajectory.
    pub sqrt_branch: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    /// `‖AᵀB − BᵀA‖_F`
    pub cond1: f64,
    /// `‖A*B + B*A − 2I‖_F`
    pub cond2: f64,
    /// `‖(Re BA⁻¹)⁻¹ − AA*‖_F`, infinite if `Re BA⁻¹` is not positive definite
    pub covariance: f64,
    pub pass: bool,
}

impl FrameReport {
    pub fn max_residual(&self) -> f64 {
        self.cond1.max(self.cond2).max(self.covariance)
    }
}

impl Frame {
    /// Frame with `S = 0` and the principal branch of `(det A)^{-1/2}`.
    pub fn new(hbar: f64, a: DVector<f64>, eta: DVector<f64>, a_mat: CMat, b_mat: CMat) -> Result<Self> {
        let d = a.len();
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidFrame(format!("ħ must be positive, got {hbar}")));
        }
        if d == 0 || eta.len() != d || a_mat.shape() != (d, d) || b_mat.shape() != (d, d) {
            return Err(Error::InvalidFrame("inconsistent frame dimensions".into()));
        }
        let finite = a.iter().chain(eta.iter()).all(|v| v.is_finite())
            && a_mat.iter().chain(b_mat.iter()).all(|z| z.is_finite());
        if !finite {
            return Err(Error::InvalidFrame("non-finite frame entries".into()));
        }
        let det = a_mat.determinant();
        if det == c(0.0) {
            return Err(Error::InvalidFrame("A is singular".into()));
        }
        Ok(Frame {
            hbar,
            a,
            eta,
            a_mat,
            b_mat,
            action: 0.0,
            sqrt_branch: det.inv().sqrt(),
        })
    }

    /// `A = B = I`.
    pub fn standard(hbar: f64, a: &[f64], eta: &[f64]) -> Result<Self> {
        let d = a.len();
        Self::new(
            hbar,
            DVector::from_column_slice(a),
            DVector::from_column_slice(eta),
            CMat::identity(d, d),
            CMat::identity(d, d),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Replace `sqrt_branch` by the root of `1 / det A` nearest `previous`.
    pub fn continue_branch(&mut self, previous: Complex64) {
        let s = self.a_mat.determinant().inv().sqrt();
        self.sqrt_branch = if (s - previous).norm() <= (s + previous).norm() { s } else { -s };
    }

    pub fn validate(&self, tol: f64) -> Result<FrameReport> {
        let d = self.dim();
        for (name, m) in [("A", &self.a_mat), ("B", &self.b_mat)] {
            let sv = m.clone().singular_values();
            if sv.min() == 0.0 || !sv.min().is_finite() {
                return Err(Error::InvalidFrame(format!("{name} is singular")));
            }
        }
        let (a, b) = (&self.a_mat, &self.b_mat);
        let cond1 = (a.transpose() * b - b.transpose() * a).norm();
        let cond2 = (a.adjoint() * b + b.adjoint() * a - CMat::identity(d, d) * c(2.0)).norm();
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidFrame("A is singular".into()))?;
        let re = (b * a_inv).map(|z| z.re);
        let sym = (&re - re.transpose()).norm();
        let covariance = match re.clone().cholesky() {
            Some(ch) => {
                let cov = (a * a.adjoint()).map(|z| z.re);
                sym + (ch.inverse() - cov).norm()
            }
            None => f64::INFINITY,
        };
        Ok(FrameReport {
            cond1,
            cond2,
            covariance,
            pass: cond1 <= tol && cond2 <= tol && covariance <= tol,
        })
    }

    /// Spectral condition number of `A`.
    pub fn condition(&self) -> f64 {
        let sv = self.a_mat.clone().singular_values();
        sv.max() / sv.min()
    }

    /// Operator 2-norms `(‖A‖, ‖B‖)`.
    pub fn matrix_norms(&self) -> (f64, f64) {
        (
            self.a_mat.clone().singular_values().max(),
            self.b_mat.clone().singular_values().max(),
        )
    }

    /// Grid covering `a ± 8√(ħ(N+d))‖A‖` per axis, resolving both the
    /// position width and the momentum content of the basis up to grade `cap`.
    pub fn auto_grid(&self, cap: usize) -> Result<Grid> {
        let d = self.dim();
        let (na, nb) = self.matrix_norms();
        let spread = (self.hbar * (cap + d) as f64).sqrt();
        let half = 8.0 * spread * na;
        let sigma = (self.hbar / 2.0).sqrt() * na;
        let mut n = Vec::with_capacity(d);
        for k in 0..d {
            let kmax = (self.eta[k].abs() + 8.0 * spread * nb) / self.hbar;
            let h = (sigma / 16.0).min(std::f64::consts::PI / (1.25 * kmax));
            let pts = ((2.0 * half / h).ceil() as usize).next_multiple_of(8);
            n.push(pts);
        }
        let total = n.iter().map(|&v| v as f64).product::<f64>();
        if total > 5e7 {
            return Err(Error::Resource(format!("auto grid of shape {n:?}")));
        }
        Grid::centered(self.a.as_slice(), &vec![half; d], &n)
    }
}

/// Pointwise evaluator for `φ_j`, `j` in a fixed index set.
pub struct BasisEvaluator {
    d: usize,
    a: Vec<f64>,
    eta: Vec<f64>,
    hbar: f64,
    a_inv: Vec<Complex64>,
    conj_a: Vec<Complex64>,
    quad: Vec<Complex64>,
    prefactor: Complex64,
    basis: Arc<BasisIndexSet>,
    // for each parent ordinal k: lowered neighbours and the children it produces
    steps: Vec<Step>,
}

struct Step {
    k: usize,
    sqrt_k: Vec<f64>,
    lower: Vec<Option<usize>>,
    children: Vec<(usize, usize, f64)>,
}

impl BasisEvaluator {
    pub fn new(frame: &Frame, basis: Arc<BasisIndexSet>) -> Result<Self> {
        let d = frame.dim();
        if basis.dim() != d {
            return Err(Error::Config("basis and frame dimensions differ".into()));
        }
        let cond = frame.condition();
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Conditioning(cond));
        }
        let a_inv = frame
            .a_mat
            .clone()
            .try_inverse()
            .ok_or(Error::Conditioning(f64::INFINITY))?;
        let quad = &frame.b_mat * &a_inv;
        let row_major = |m: &CMat| (0..d * d).map(|t| m[(t / d, t % d)]).collect::<Vec<_>>();
        let prefactor = frame.sqrt_branch
            * (std::f64::consts::PI * frame.hbar).powf(-(d as f64) / 4.0);
        let mut steps = Vec::new();
        let cap = basis.cap();
        let parents = if cap == 0 { 0 } else { basis.count_upto(cap - 1) };
        for k in 0..parents {
            let mk = basis.get(k);
            let first = mk.last_nonzero().unwrap_or(0);
            let children = (first..d)
                .filter_map(|p| {
                    basis
                        .raise(k, p)
                        .map(|j| (p, j, 1.0 / ((mk.get(p) + 1) as f64).sqrt()))
                })
                .collect();
            steps.push(Step {
                k,
                sqrt_k: (0..d).map(|p| (mk.get(p) as f64).sqrt()).collect(),
                lower: (0..d).map(|p| basis.lower(k, p)).collect(),
                children,
            });
        }
        Ok(BasisEvaluator {
            d,
            a: frame.a.iter().copied().collect(),
            eta: frame.eta.iter().copied().collect(),
            hbar: frame.hbar,
            a_inv: row_major(&a_inv),
            conj_a: row_major(&frame.a_mat.map(|z| z.conj())),
            quad: row_major(&quad),
            prefactor,
            basis,
            steps,
        })
    }

    pub fn basis(&self) -> &Arc<BasisIndexSet> {
        &self.basis
    }

    pub fn phi0(&self, x: &[f64]) -> Complex64 {
        let d = self.d;
        let y: Vec<f64> = (0..d).map(|i| x[i] - self.a[i]).collect();
        let mut q = c(0.0);
        let mut lin = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += self.quad[i * d + j] * (y[i] * y[j]);
            }
            lin += self.eta[i] * y[i];
        }
        self.prefactor * (-q / (2.0 * self.hbar) + Complex64::new(0.0, lin / self.hbar)).exp()
    }

    /// All `φ_j(x)` in basis order.
    pub fn eval_at(&self, x: &[f64], out: &mut [Complex64]) {
        let d = self.d;
        out[0] = self.phi0(x);
        let scale = (2.0 / self.hbar).sqrt();
        let y: Vec<f64> = (0..d).map(|i| scale * (x[i] - self.a[i])).collect();
        let mut rhs = vec![c(0.0); d];
        for step in &self.steps {
            let phik = out[step.k];
            for (i, r) in rhs.iter_mut().enumerate() {
                let mut v = phik * y[i];
                for p in 0..d {
                    if let Some(lo) = step.lower[p] {
                        v -= self.conj_a[i * d + p] * (step.sqrt_k[p] * out[lo]);
                    }
                }
                *r = v;
            }
            for &(p, j, inv_sqrt) in &step.children {
                let mut v = c(0.0);
                for (i, r) in rhs.iter().enumerate() {
                    v += self.a_inv[p * d + i] * r;
                }
                out[j] = v * inv_sqrt;
            }
        }
    }

    /// Every basis function sampled on `grid`.
    pub fn eval_grid(&self, grid: &Arc<Grid>) -> Vec<GridFunction> {
        let n = self.basis.len();
        let pts = grid.points();
        let mut cols = vec![vec![c(0.0); pts.len()]; n];
        let mut buf = vec![c(0.0); n];
        for (t, x) in pts.iter().enumerate() {
            self.eval_at(x, &mut buf);
            for (col, v) in cols.iter_mut().zip(&buf) {
                col[t] = *v;
            }
        }
        cols.into_iter()
            .map(|v| GridFunction::new(grid.clone(), v))
            .collect()
    }

    /// `Σ_j coeffs_j φ_j(x)` on the grid.
    pub fn combination(&self, coeffs: &[Complex64], grid: &Arc<Grid>) -> GridFunction {
        let mut buf = vec![c(0.0); self.basis.len()];
        let values = grid
            .points()
            .iter()
            .map(|x| {
                self.eval_at(x, &mut buf);
                buf.iter().zip(coeffs).map(|(p, c)| p * c).sum()
            })
            .collect();
        GridFunction::new(grid.clone(), values)
    }
}

/// `φ_0` sampled on `grid`.
pub fn eval_phi0(frame: &Frame, grid: &Arc<Grid>) -> Result<GridFunction> {
    let ev = BasisEvaluator::new(frame, Arc::new(BasisIndexSet::enumerate_upto(frame.dim(), 0)))?;
    Ok(GridFunction::from_fn(grid.clone(), |x| ev.phi0(x)))
}

/// All `φ_j` with `|j| <= cap` sampled on `grid`, in graded order.
pub fn eval_basis(frame: &Frame, cap: usize, grid: &Arc<Grid>) -> Result<Vec<GridFunction>> {
    let basis = Arc::new(BasisIndexSet::enumerate_upto(frame.dim(), cap));
    Ok(BasisEvaluator::new(frame, basis)?.eval_grid(grid))
}

/// `e^{iS/ħ} Σ_j c_j φ_j` on the grid.
pub fn wavefunction(
    frame: &Frame,
    basis: &Arc<BasisIndexSet>,
    coeffs: &[Complex64],
    grid: &Arc<Grid>,
) -> Result<GridFunction> {
    let ev = BasisEvaluator::new(frame, basis.clone())?;
    let mut psi = ev.combination(coeffs, grid);
    psi.scale(Complex64::from_polar(1.0, frame.action / frame.hbar));
    Ok(psi)
}

fn check_resolution(psi: &GridFunction, fft: &mut Spectral) -> Result<()> {
    let tail = psi.spectral_tail(fft);
    if tail > 1e-20 {
        return Err(Error::GridInsufficient(format!(
            "spectral tail fraction {tail:.3e} is too large for accurate derivatives"
        )));
    }
    Ok(())
}

/// `𝒜_m* ψ = (2ħ)^{-1/2} [ conj(B)ᵀ(x − a) − i conj(A)ᵀ(−iħ∇ − η) ]_m ψ`.
pub fn apply_raising(frame: &Frame, m: usize, psi: &GridFunction, fft: &mut Spectral) -> Result<GridFunction> {
    check_resolution(psi, fft)?;
    let d = frame.dim();
    let h = frame.hbar;
    let mut out = psi.mul_real(|_| 0.0);
    for n in 0..d {
        let bn = frame.b_mat[(n, m)].conj();
        let an = frame.a_mat[(n, m)].conj();
        let an_ = frame.a[n];
        out.axpy(c(1.0), &psi.mul_real(|x| x[n] - an_).scaled(bn))?;
        // −i conj(A)_{nm} (−iħ ∂_n − η_n) = −ħ conj(A)_{nm} ∂_n + i η_n conj(A)_{nm}
        let dpsi = psi.derivative(n, fft);
        out.axpy(-an * h, &dpsi)?;
        out.axpy(Complex64::new(0.0, frame.eta[n]) * an, psi)?;
    }
    out.scale(c((2.0 * h).powf(-0.5)));
    Ok(out)
}

/// Same operator through `−√(ħ/2) g⁻¹ Σ_n conj(A)_{nm} ∂_n (g ψ)` with
/// `g = exp{−⟨x−a, (BA⁻¹)*(x−a)⟩/(2ħ) − i⟨η, x−a⟩/ħ}`, η included.
///
/// The quotient is evaluated as `∂_n ψ + ψ ∂_n ln g`. Forming `gψ` and dividing by
/// `g` afterwards amplifies the spectral noise of the derivative by `|g|⁻¹`, which
/// reaches `e^{80}` at the edge of a typical grid.
pub fn apply_raising_weighted(
    frame: &Frame,
    m: usize,
    psi: &GridFunction,
    fft: &mut Spectral,
) -> Result<GridFunction> {
    check_resolution(psi, fft)?;
    let d = frame.dim();
    let h = frame.hbar;
    let a_inv = frame
        .a_mat
        .clone()
        .try_inverse()
        .ok_or(Error::Conditioning(f64::INFINITY))?;
    let q = (&frame.b_mat * a_inv).adjoint();
    let q_sym = (&q + q.transpose()).scale(0.5);
    let grid = psi.grid().clone();
    let points = grid.points();
    let s = -(h / 2.0).sqrt();
    let mut acc = GridFunction::zeros(grid.clone());
    for n in 0..d {
        let weight = frame.a_mat[(n, m)].conj();
        let dpsi = psi.derivative(n, fft);
        let values = dpsi
            .values()
            .iter()
            .zip(psi.values())
            .zip(&points)
            .map(|((dp, p), x)| {
                let mut dlog = Complex64::new(0.0, -frame.eta[n] / h);
                for j in 0..d {
                    dlog -= q_sym[(n, j)] * ((x[j] - frame.a[j]) / h);
                }
                dp + p * dlog
            })
            .collect();
        acc.axpy(weight * s, &GridFunction::new(grid.clone(), values))?;
    }
    Ok(acc)
}

impl GridFunction {
    fn scaled(mut self, s: Complex64) -> GridFunction {
        self.scale(s);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermiteReport {
    pub k: u32,
    pub y: f64,
    /// `ln |H_k(y)|`
    pub log_abs: f64,
    /// Whether `|y| > √(2k+1)`, where the power bound applies.
    pub power_applies: bool,
    pub power_ok: bool,
    pub cramer_ok: bool,
}

impl HermiteReport {
    pub fn pass(&self) -> bool {
        self.cramer_ok && (!self.power_applies || self.power_ok)
    }
}

/// `(sign, ln|H_k(y)|)` for the physicists' Hermite polynomial, via the
/// three-term recurrence with rescaling against overflow.
pub fn hermite_log(k: u32, y: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    let mut log_scale = 0.0;
    for n in 0..k {
        let next = 2.0 * y * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            prev /= m;
            cur /= m;
            log_scale += m.ln();
        }
    }
    (cur.signum(), cur.abs().ln() + log_scale)
}

pub fn hermite_bound_check(k: u32, y: f64) -> HermiteReport {
    let (_, log_abs) = hermite_log(k, y);
    let kf = k as f64;
    let slack = 1e-12 * (1.0 + log_abs.abs());
    let power_applies = y.abs() > (2.0 * kf + 1.0).sqrt();
    let power_ok = log_abs <= kf * (2.0 * y.abs()).ln() + slack;
    let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    let cramer = KAPPA.ln() + 0.5 * kf * 2f64.ln() + 0.5 * log_fact + 0.5 * y * y;
    HermiteReport {
        k,
        y,
        log_abs,
        power_applies,
        power_ok,
        cramer_ok: log_abs <= cramer + slack,
    }
}
