//! Potential models with exact Taylor coefficients via jet arithmetic.

pub mod expr;
pub mod jet;
pub mod parse;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::multiindex::{BasisIndexSet, MultiIndex};
pub use expr::Expr;
use jet::JetSpace;
pub use parse::parse_expr;

/// User-asserted analyticity data: strip width and growth envelope
/// `|V(z)| <= M exp(τ |z|²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Analyticity {
    pub delta: f64,
    pub m: f64,
    pub tau: f64,
}

#[derive(Clone, Debug)]
enum Kind {
    Expr(Expr),
    /// `exp(-1/x^u)` for `x > 0`, `0` otherwise. One-dimensional.
    Gevrey { u: f64, tail: Expr },
}

#[derive(Clone, Debug)]
pub struct PotentialModel {
    dim: usize,
    kind: Kind,
    analyticity: Option<Analyticity>,
    label: String,
}

impl PotentialModel {
    pub fn from_expr(dim: usize, expr: Expr) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if expr.arity() > dim {
            return Err(Error::Config(format!(
                "expression uses variable x{} but the dimension is {dim}",
                expr.arity()
            )));
        }
        let label = expr.to_string();
        Ok(PotentialModel {
            dim,
            kind: Kind::Expr(expr),
            analyticity: None,
            label,
        })
    }

    pub fn parse(dim: usize, src: &str) -> Result<Self> {
        let mut model = Self::from_expr(dim, parse_expr(src)?)?;
        model.label = src.trim().to_string();
        Ok(model)
    }

    /// `Σ ω_i² x_i² / 2`.
    pub fn harmonic(omegas: &[f64]) -> Self {
        let expr = sum(omegas
            .iter()
            .enumerate()
            .map(|(i, &w)| Expr::c(0.5 * w * w) * Expr::var(i).powf(2.0)));
        Self::labelled(omegas.len(), expr, format!("harmonic{omegas:?}"))
    }

    /// `Σ c_m x^m` over the given monomials.
    pub fn polynomial(dim: usize, terms: &[(MultiIndex, f64)]) -> Self {
        let expr = sum(terms.iter().map(|(m, c)| {
            m.entries()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .fold(Expr::c(*c), |acc, (i, &p)| acc * Expr::var(i).powf(p as f64))
        }));
        Self::labelled(dim, expr, format!("polynomial({} terms)", terms.len()))
    }

    /// `amplitude * cos(k · x) + offset`.
    pub fn trigonometric(amplitude: f64, wavevector: &[f64], offset: f64) -> Self {
        let phase = sum(wavevector
            .iter()
            .enumerate()
            .map(|(i, &k)| Expr::c(k) * Expr::var(i)));
        let expr = Expr::c(amplitude) * phase.cos() + Expr::c(offset);
        let mut model = Self::labelled(
            wavevector.len(),
            expr,
            format!("{amplitude}*cos(k.x)+{offset}"),
        );
        // entire with |cos(k.z)| <= cosh(|k| δ) on the strip
        let kn = wavevector.iter().map(|k| k * k).sum::<f64>().sqrt();
        model.analyticity = Some(Analyticity {
            delta: 1.0,
            m: amplitude.abs() * kn.cosh() + offset.abs(),
            tau: 0.0,
        });
        model
    }

    /// `Σ h_k exp(-|x - c_k|² / (2 w_k²))`.
    pub fn gaussian_bumps(dim: usize, bumps: &[(f64, Vec<f64>, f64)]) -> Self {
        let expr = sum(bumps.iter().map(|(h, c, w)| {
            let r2 = sum((0..dim).map(|i| (Expr::var(i) - Expr::c(c[i])).powf(2.0)));
            Expr::c(*h) * (-(r2 / Expr::c(2.0 * w * w))).exp()
        }));
        Self::labelled(dim, expr, format!("gaussian_bumps({})", bumps.len()))
    }

    /// `D (1 - exp(-α (x - x0)))²`, one-dimensional.
    pub fn morse(depth: f64, alpha: f64, x0: f64) -> Self {
        let s = Expr::c(1.0) - (-(Expr::c(alpha) * (Expr::var(0) - Expr::c(x0)))).exp();
        Self::labelled(1, Expr::c(depth) * s.powf(2.0), format!("morse({depth},{alpha},{x0})"))
    }

    /// `exp(-1/x^u)` for `x > 0`, zero for `x <= 0`: smooth of Gevrey class
    /// `1 + 1/u` but not analytic at the origin.
    pub fn gevrey(u: f64) -> Self {
        let tail = (-(Expr::var(0).powf(-u))).exp();
        PotentialModel {
            dim: 1,
            kind: Kind::Gevrey { u, tail },
            analyticity: None,
            label: format!("gevrey(u={u})"),
        }
    }

    fn labelled(dim: usize, expr: Expr, label: String) -> Self {
        PotentialModel {
            dim,
            kind: Kind::Expr(expr),
            analyticity: None,
            label,
        }
    }

    pub fn with_analyticity(mut self, a: Analyticity) -> Self {
        self.analyticity = Some(a);
        self
    }

    pub fn analyticity(&self) -> Option<Analyticity> {
        match self.kind {
            Kind::Gevrey { .. } => None,
            Kind::Expr(_) => self.analyticity,
        }
    }

    /// `u` for the Gevrey model, whose expected decay exponent is `u/(1+u)`.
    pub fn gevrey_exponent(&self) -> Option<f64> {
        match self.kind {
            Kind::Gevrey { u, .. } => Some(u),
            Kind::Expr(_) => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, Kind::Expr(_))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Expr(e) => e.eval(x),
            Kind::Gevrey { tail, .. } => {
                if x[0] > 0.0 {
                    tail.eval(x)
                } else {
                    0.0
                }
            }
        }
    }

    /// The model `x ↦ V(x + shift)`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        match &self.kind {
            Kind::Expr(e) => Ok(Self::labelled(
                self.dim,
                e.shifted(shift),
                format!("{}(x+{shift:?})", self.label),
            )),
            Kind::Gevrey { .. } => Err(Error::Unsupported(
                "shifting the piecewise Gevrey model".into(),
            )),
        }
    }

    /// Normalized Taylor coefficients `D^m V(a) / m!` for `|m| <= order`.
    pub fn taylor_coeffs(&self, a: &[f64], order: usize) -> Result<TaylorTable> {
        self.taylor_in(&JetSpace::new(self.dim, order), a)
    }

    /// Same as [`taylor_coeffs`](Self::taylor_coeffs) with a prebuilt jet space.
    pub fn taylor_in(&self, space: &Arc<JetSpace>, a: &[f64]) -> Result<TaylorTable> {
        if a.len() != self.dim || space.dim() != self.dim {
            return Err(Error::Config(format!(
                "expansion point has dimension {}, model has {}",
                a.len(),
                self.dim
            )));
        }
        let coeffs = match &self.kind {
            Kind::Expr(e) => e.eval_jet(space, a)?.into_coeffs(),
            Kind::Gevrey { tail, .. } => {
                if a[0] > 0.0 {
                    tail.eval_jet(space, a)?.into_coeffs()
                } else if a[0] < 0.0 {
                    vec![0.0; space.len()]
                } else {
                    // every derivative vanishes at the origin
                    vec![0.0; space.len()]
                }
            }
        };
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonAnalytic {
                subexpr: self.label.clone(),
                reason: format!(
                    "Taylor coefficient {} is not finite",
                    space.basis().get(bad)
                ),
            });
        }
        Ok(TaylorTable {
            point: a.to_vec(),
            space: space.clone(),
            coeffs,
        })
    }

    /// Gradient and Hessian at `a`.
    pub fn grad_hess(&self, a: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let table = self.taylor_coeffs(a, 2)?;
        Ok((table.gradient(), table.hessian()))
    }

    /// Sampled upper estimate of `sup |V|` over the torus
    /// `{ z_j = a_j + δ e^{iθ_j} }`, inflated by 1.1.
    pub fn polydisc_majorant(&self, a: &[f64], delta: f64) -> Result<f64> {
        const ANGLES: usize = 64;
        let Kind::Expr(e) = &self.kind else {
            return Err(Error::Unsupported(format!(
                "complex evaluation of the non-analytic model {}",
                self.label
            )));
        };
        if delta <= 0.0 {
            return Err(Error::Config("polydisc radius must be positive".into()));
        }
        let d = self.dim;
        let total = ANGLES
            .checked_pow(d as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::Resource(format!("{ANGLES}^{d} torus samples")))?;
        let unit: Vec<Complex64> = (0..ANGLES)
            .map(|k| Complex64::from_polar(delta, 2.0 * std::f64::consts::PI * k as f64 / ANGLES as f64))
            .collect();
        let mut z = vec![Complex64::new(0.0, 0.0); d];
        let mut best = 0.0f64;
        for flat in 0..total {
            let mut rem = flat;
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = Complex64::new(a[i], 0.0) + unit[rem % ANGLES];
                rem /= ANGLES;
            }
            best = best.max(e.eval_complex(&z).norm());
        }
        Ok(1.1 * best)
    }

    /// Minimum of `V` over a box sampled on a tensor grid; fails if any
    /// sample is not finite.
    pub fn check_bounded_below(&self, lo: &[f64], hi: &[f64], per_axis: usize) -> Result<f64> {
        let d = self.dim;
        let n = per_axis.max(2);
        let total = n.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut min = f64::INFINITY;
        for flat in 0..total {
            let mut rem = flat;
            for i in 0..d {
                let k = rem % n;
                rem /= n;
                x[i] = lo[i] + (hi[i] - lo[i]) * k as f64 / (n - 1) as f64;
            }
            let v = self.value(&x);
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "potential {} is not finite at {x:?}",
                    self.label
                )));
            }
            min = min.min(v);
        }
        Ok(min)
    }
}

fn sum(terms: impl Iterator<Item = Expr>) -> Expr {
    terms.reduce(|a, b| a + b).unwrap_or(Expr::c(0.0))
}

/// Normalized Taylor coefficients `c_m = D^m V(a) / m!` for `|m| <= order`.
#[derive(Clone, Debug)]
pub struct TaylorTable {
    point: Vec<f64>,
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl TaylorTable {
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn order(&self) -> usize {
        self.space.order()
    }

    pub fn basis(&self) -> &BasisIndexSet {
        self.space.basis()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `(x - a)^m`, `None` above the table order.
    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.space.basis().ordinal(m).map(|i| self.coeffs[i])
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn gradient(&self) -> DVector<f64> {
        let d = self.point.len();
        DVector::from_fn(d, |i, _| {
            self.get(&MultiIndex::unit(d, i)).unwrap_or(0.0)
        })
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let d = self.point.len();
        DMatrix::from_fn(d, d, |i, j| {
            let m = MultiIndex::unit(d, i).add(&MultiIndex::unit(d, j));
            let c = self.get(&m).unwrap_or(0.0);
            if i == j {
                2.0 * c
            } else {
                c
            }
        })
    }

    /// Evaluate `Σ_{lo <= |m| <= hi} c_m (x - a)^m`.
    pub fn eval_graded(&self, x: &[f64], lo: usize, hi: usize) -> f64 {
        let shifted: Vec<f64> = x.iter().zip(&self.point).map(|(x, a)| x - a).collect();
        let basis = self.space.basis();
        let hi = hi.min(self.order());
        if self.point.len() == 1 {
            // Horner in one variable
            let mut acc = 0.0;
            for k in (lo..=hi).rev() {
                acc = acc * shifted[0] + self.coeffs[k];
            }
            return acc * shifted[0].powi(lo as i32);
        }
        (lo..=hi)
            .flat_map(|n| basis.grade_range(n))
            .map(|i| self.coeffs[i] * basis.get(i).monomial(&shifted))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn quadratic_coefficients() {
        let v = PotentialModel::parse(1, "x^2/2").unwrap();
        let t = v.taylor_coeffs(&[0.7], 4).unwrap();
        let expect = [0.245, 0.7, 0.5, 0.0, 0.0];
        for (c, e) in t.coeffs().iter().zip(expect) {
            assert!((c - e).abs() < 1e-15, "{c} vs {e}");
        }
    }

    #[test]
    fn cosine_coefficients() {
        let v = PotentialModel::parse(1, "cos(x)").unwrap();
        let t = v.taylor_coeffs(&[0.0], 4).unwrap();
        let expect = [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0];
        for (c, e) in t.coeffs().iter().zip(expect) {
            assert!((c - e).abs() < 1e-15);
        }
    }

    #[test]
    fn two_dimensional_cubic() {
        let v = PotentialModel::parse(2, "x^2*y").unwrap();
        let t = v.taylor_coeffs(&[1.0, 2.0], 3).unwrap();
        let expect = [
            (mi(&[2, 1]), 1.0),
            (mi(&[2, 0]), 2.0),
            (mi(&[1, 1]), 2.0),
            (mi(&[0, 1]), 1.0),
            (mi(&[1, 0]), 4.0),
            (mi(&[0, 0]), 2.0),
        ];
        for (i, m) in t.basis().indices().iter().enumerate() {
            let want = expect
                .iter()
                .find(|(k, _)| k == m)
                .map(|(_, c)| *c)
                .unwrap_or(0.0);
            assert!((t.coeffs()[i] - want).abs() < 1e-14, "{m}: {}", t.coeffs()[i]);
        }
    }

    #[test]
    fn grad_hess_examples() {
        let v = PotentialModel::parse(1, "x^2/2").unwrap();
        let (g, h) = v.grad_hess(&[3.0]).unwrap();
        assert_eq!((g[0], h[(0, 0)]), (3.0, 1.0));
        let v = PotentialModel::parse(1, "cos(x)").unwrap();
        let (g, h) = v.grad_hess(&[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
        assert!(h[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn division_by_zero_names_subexpression() {
        let v = PotentialModel::parse(1, "1/(x - 1)").unwrap();
        match v.taylor_coeffs(&[1.0], 3) {
            Err(Error::NonAnalytic { subexpr, .. }) => assert!(subexpr.contains("x1 - 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn majorant_examples() {
        let lin = PotentialModel::parse(1, "x").unwrap();
        let m = lin.polydisc_majorant(&[0.0], 1.0).unwrap();
        assert!((1.0..=1.2).contains(&m));
        let cos = PotentialModel::parse(1, "cos(x)").unwrap();
        assert!(cos.polydisc_majorant(&[0.0], 1.0).unwrap() >= 1.0f64.cosh());
        let c = PotentialModel::parse(1, "-2.5").unwrap();
        assert!((c.polydisc_majorant(&[0.3], 0.5).unwrap() - 2.75).abs() < 1e-14);
        let g = PotentialModel::gevrey(1.0);
        assert!(matches!(g.polydisc_majorant(&[0.0], 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gevrey_jets() {
        let g = PotentialModel::gevrey(1.0);
        assert!(g.taylor_coeffs(&[-0.5], 6).unwrap().coeffs().iter().all(|&c| c == 0.0));
        let t = g.taylor_coeffs(&[0.5], 2).unwrap();
        // f = exp(-1/x): f(0.5) = e^-2, f' = f / x^2
        let f = (-2.0f64).exp();
        assert!((t.coeffs()[0] - f).abs() < 1e-15);
        assert!((t.coeffs()[1] - 4.0 * f).abs() < 1e-14);
        assert!(!g.is_analytic());
    }

    #[test]
    fn families_evaluate() {
        let h = PotentialModel::harmonic(&[1.0, 2.0]);
        assert!((h.value(&[1.0, 1.0]) - 2.5).abs() < 1e-15);
        let m = PotentialModel::morse(2.0, 1.0, 0.0);
        assert!(m.value(&[0.0]).abs() < 1e-15);
        let b = PotentialModel::gaussian_bumps(1, &[(1.0, vec![0.0], 1.0)]);
        assert!((b.value(&[0.0]) - 1.0).abs() < 1e-15);
        let p = PotentialModel::polynomial(2, &[(mi(&[1, 2]), 3.0)]);
        assert!((p.value(&[2.0, 0.5]) - 1.5).abs() < 1e-15);
        assert!(h.check_bounded_below(&[-1.0, -1.0], &[1.0, 1.0], 11).unwrap() >= 0.0);
        let bad = PotentialModel::parse(1, "1/x").unwrap();
        assert!(bad.check_bounded_below(&[-1.0], &[1.0], 11).is_err());
    }
}
