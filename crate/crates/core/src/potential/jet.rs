//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A jet of order `p` in `d` variables stores one coefficient per
//! multi-index `|m| <= p`, in the graded order of [`BasisIndexSet`].
//! Products drop every monomial above order `p`.

use std::sync::Arc;

use crate::multiindex::{BasisIndexSet, MultiIndex};

/// Shared layout and product table for jets of one `(d, p)`.
#[derive(Debug)]
pub struct JetSpace {
    basis: BasisIndexSet,
    // (i, j, k) with index_i + index_j = index_k and |k| <= p
    products: Vec<(u32, u32, u32)>,
}

impl JetSpace {
    pub fn new(dim: usize, order: usize) -> Arc<Self> {
        let basis = BasisIndexSet::enumerate_upto(dim, order);
        let mut products = Vec::new();
        for (i, mi) in basis.indices().iter().enumerate() {
            let gi = mi.order();
            for (j, mj) in basis.indices()[..basis.count_upto(order - gi)]
                .iter()
                .enumerate()
            {
                let k = basis.ordinal(&mi.add(mj)).expect("sum stays inside the cap");
                products.push((i as u32, j as u32, k as u32));
            }
        }
        Arc::new(JetSpace { basis, products })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn order(&self) -> usize {
        self.basis.cap()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &BasisIndexSet {
        &self.basis
    }
}

#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Self {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = c;
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    /// The coordinate function `x_axis` expanded about `x_axis = at`.
    pub fn variable(space: &Arc<JetSpace>, axis: usize, at: f64) -> Self {
        let mut jet = Self::constant(space, at);
        if space.order() >= 1 {
            let e = MultiIndex::unit(space.dim(), axis);
            jet.coeffs[space.basis.ordinal(&e).unwrap()] = 1.0;
        }
        jet
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet {
        self.map(|a| -a)
    }

    pub fn scale(&self, s: f64) -> Jet {
        self.map(|a| a * s)
    }

    pub fn add_constant(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let mut out = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.space.products {
            out[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet {
            space: self.space.clone(),
            coeffs: out,
        }
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut acc = Jet::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// `f(self)` given the normalized derivatives `f^{(k)}(c_0) / k!`
    /// for `k = 0..=order`, by Horner evaluation in the nilpotent part.
    pub fn compose(&self, series: &[f64]) -> Jet {
        let p = self.space.order();
        debug_assert_eq!(series.len(), p + 1);
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = Jet::constant(&self.space, series[p]);
        for k in (0..p).rev() {
            acc = acc.mul(&h).add_constant(series[k]);
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let series = inv_factorials(self.space.order())
            .into_iter()
            .map(|f| f * e0)
            .collect::<Vec<_>>();
        self.compose(&series)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&trig_series(self.space.order(), s, c))
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        // cos(u0 + h) = sin(u0 + π/2 + h)
        self.compose(&trig_series(self.space.order(), c, -s))
    }

    /// `1 / self`; requires a non-zero constant term (checked by the caller).
    pub fn recip(&self) -> Jet {
        let u0 = self.value();
        let mut series = Vec::with_capacity(self.space.order() + 1);
        let mut term = 1.0 / u0;
        for _ in 0..=self.space.order() {
            series.push(term);
            term *= -1.0 / u0;
        }
        self.compose(&series)
    }

    /// `self^r` for real `r`; requires a positive constant term.
    pub fn powf(&self, r: f64) -> Jet {
        let u0 = self.value();
        let mut series = Vec::with_capacity(self.space.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.space.order() {
            series.push(binom * u0.powf(r - k as f64));
            binom *= (r - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

fn inv_factorials(p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p + 1);
    let mut f = 1.0;
    for k in 0..=p {
        if k > 0 {
            f /= k as f64;
        }
        out.push(f);
    }
    out
}

/// Series of `sin(u0 + h)` where `s = sin u0`, `c = cos u0`.
fn trig_series(p: usize, s: f64, c: f64) -> Vec<f64> {
    let cycle = [s, c, -s, -c];
    inv_factorials(p)
        .into_iter()
        .enumerate()
        .map(|(k, f)| cycle[k % 4] * f)
        .collect()
}
