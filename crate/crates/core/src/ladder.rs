//! Matrices of `(x − a)^m` in the wavepacket basis.
//!
//! Multiplication by `x_i − a_i` acts on the basis as
//! `√(ħ/2) Σ_p [A_ip √(k_p+1) φ_{k+e_p} + conj(A_ip) √(k_p) φ_{k−e_p}]`,
//! so `(x − a)^m` is obtained exactly by `|m|` such applications as long
//! as the working cap exceeds the column cap by `|m|`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::multiindex::{basis_size, BasisIndexSet, MultiIndex};
use crate::wavepacket::Frame;

/// Entry budget for assembled matrices.
const MAX_ENTRIES: u128 = 50_000_000;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Single-axis ladder action on coefficient vectors over a fixed index set.
#[derive(Clone, Debug)]
pub struct LadderAction {
    basis: Arc<BasisIndexSet>,
    up: Vec<Complex64>,
    down: Vec<Complex64>,
    sqrt: Vec<f64>,
}

impl LadderAction {
    pub fn new(frame: &Frame, basis: Arc<BasisIndexSet>) -> Self {
        let d = frame.dim();
        let s = (frame.hbar / 2.0).sqrt();
        let mut up = Vec::with_capacity(d * d);
        let mut down = Vec::with_capacity(d * d);
        for i in 0..d {
            for p in 0..d {
                up.push(frame.a_mat[(i, p)] * s);
                down.push(frame.a_mat[(i, p)].conj() * s);
            }
        }
        let sqrt = (0..=basis.cap() + 1).map(|k| (k as f64).sqrt()).collect();
        LadderAction {
            basis,
            up,
            down,
            sqrt,
        }
    }

    pub fn basis(&self) -> &Arc<BasisIndexSet> {
        &self.basis
    }

    /// `out += (x_axis − a_axis) v`; components raised beyond the cap are
    /// dropped, so callers size the index set to avoid that.
    pub fn apply_axis(&self, axis: usize, v: &[Complex64], out: &mut [Complex64]) {
        let d = self.basis.dim();
        for (k, &vk) in v.iter().enumerate() {
            if vk == zero() {
                continue;
            }
            let mk = self.basis.get(k);
            for p in 0..d {
                let kp = mk.get(p) as usize;
                if let Some(j) = self.basis.raise(k, p) {
                    out[j] += self.up[axis * d + p] * (self.sqrt[kp + 1] * vk);
                }
                if let Some(j) = self.basis.lower(k, p) {
                    out[j] += self.down[axis * d + p] * (self.sqrt[kp] * vk);
                }
            }
        }
    }

    /// `(x − a)^m v`.
    pub fn apply_power(&self, m: &MultiIndex, v: &[Complex64]) -> Vec<Complex64> {
        let mut cur = v.to_vec();
        let mut next = vec![zero(); v.len()];
        for (axis, &e) in m.entries().iter().enumerate() {
            for _ in 0..e {
                next.iter_mut().for_each(|z| *z = zero());
                self.apply_axis(axis, &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        cur
    }
}

/// Column-compressed complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn from_columns(nrows: usize, cols: impl IntoIterator<Item = Vec<(usize, Complex64)>>) -> Self {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        for col in cols {
            for (r, v) in col {
                row_idx.push(r);
                vals.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix {
            nrows,
            col_ptr,
            row_idx,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.col_ptr[k]..self.col_ptr[k + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.column(k).find(|(r, _)| *r == j).map(|(_, v)| v).unwrap_or(zero())
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![zero(); self.nrows];
        for (k, &vk) in v.iter().enumerate().take(self.ncols()) {
            for (r, a) in self.column(k) {
                out[r] += a * vk;
            }
        }
        out
    }

    /// `self * other`; requires `self.ncols() >= other.nrows()` and treats
    /// missing columns of `self` as zero.
    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        let cols = (0..other.ncols()).map(|k| {
            let mut acc = vec![zero(); self.nrows];
            for (r, b) in other.column(k) {
                if r < self.ncols() {
                    for (i, a) in self.column(r) {
                        acc[i] += a * b;
                    }
                }
            }
            acc.into_iter()
                .enumerate()
                .filter(|(_, v)| *v != zero())
                .collect()
        });
        SparseMatrix::from_columns(self.nrows, cols)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols());
        for k in 0..self.ncols() {
            for (r, v) in self.column(k) {
                m[(r, k)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Coordinate list, one `row col re im` line per stored entry.
    pub fn to_coo(&self) -> String {
        let mut s = String::new();
        for k in 0..self.ncols() {
            for (r, v) in self.column(k) {
                let _ = writeln!(s, "{r} {k} {:.17e} {:.17e}", v.re, v.im);
            }
        }
        s
    }
}

/// `⟨φ_j, (x − a)^m φ_k⟩` for `|j| <= R`, `|k| <= C`.
#[derive(Clone, Debug)]
pub struct LadderMatrix {
    power: MultiIndex,
    rows: Arc<BasisIndexSet>,
    cols: Arc<BasisIndexSet>,
    matrix: SparseMatrix,
}

impl LadderMatrix {
    pub fn power(&self) -> &MultiIndex {
        &self.power
    }

    pub fn rows(&self) -> &Arc<BasisIndexSet> {
        &self.rows
    }

    pub fn cols(&self) -> &Arc<BasisIndexSet> {
        &self.cols
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn get(&self, j: &MultiIndex, k: &MultiIndex) -> Complex64 {
        match (self.rows.ordinal(j), self.cols.ordinal(k)) {
            (Some(r), Some(c)) => self.matrix.get(r, c),
            _ => zero(),
        }
    }

    /// Largest `|X − X*|` over the square block shared by rows and columns.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.cols.len().min(self.rows.len());
        let m = self.matrix.to_dense();
        let mut worst = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
            }
        }
        worst
    }

    /// Square block with both caps equal to `cap`.
    pub fn top_left(&self, cap: usize) -> SparseMatrix {
        let n = self.rows.count_upto(cap);
        let ncols = self.cols.count_upto(cap);
        SparseMatrix::from_columns(
            n,
            (0..ncols).map(|k| self.matrix.column(k).filter(|(r, _)| *r < n).collect()),
        )
    }
}

fn check_budget(d: usize, rows: usize, cols: usize) -> Result<()> {
    let r = basis_size(d, rows)?;
    let c = basis_size(d, cols)?;
    if r.saturating_mul(c) > MAX_ENTRIES {
        return Err(Error::Resource(format!(
            "ladder matrix with {r} rows and {c} columns (caps {rows}, {cols}) exceeds the {MAX_ENTRIES} entry budget"
        )));
    }
    Ok(())
}

pub fn build_single(frame: &Frame, axis: usize, row_cap: usize, col_cap: usize) -> Result<LadderMatrix> {
    build_power(frame, &MultiIndex::unit(frame.dim(), axis), row_cap, col_cap)
}

pub fn build_power(frame: &Frame, m: &MultiIndex, row_cap: usize, col_cap: usize) -> Result<LadderMatrix> {
    let d = frame.dim();
    if m.dim() != d {
        return Err(Error::Config("power and frame dimensions differ".into()));
    }
    if m.order() == 0 {
        return Err(Error::Config("ladder power must have |m| >= 1".into()));
    }
    if row_cap < col_cap {
        return Err(Error::Config("row cap must be at least the column cap".into()));
    }
    check_budget(d, row_cap, col_cap)?;
    let work = Arc::new(BasisIndexSet::enumerate_upto(d, row_cap.max(col_cap + m.order())));
    let action = LadderAction::new(frame, work.clone());
    let rows = Arc::new(BasisIndexSet::enumerate_upto(d, row_cap));
    let cols = Arc::new(BasisIndexSet::enumerate_upto(d, col_cap));
    let nrows = rows.len();
    let columns = (0..cols.len()).map(|k| {
        let mut e = vec![zero(); work.len()];
        e[k] = Complex64::new(1.0, 0.0);
        action
            .apply_power(m, &e)
            .into_iter()
            .take(nrows)
            .enumerate()
            .filter(|(_, v)| *v != zero())
            .collect()
    });
    let matrix = SparseMatrix::from_columns(nrows, columns);
    Ok(LadderMatrix {
        power: m.clone(),
        rows,
        cols,
        matrix,
    })
}

/// Displayed envelope `ħ^{|m|/2} (√2 d)^{|m|} ‖A‖^{|m|} √((|k|+1)⋯(|k|+|m|))`.
pub fn magnitude_envelope(frame: &Frame, m: &MultiIndex, k_grade: usize) -> f64 {
    let n = m.order();
    let d = frame.dim() as f64;
    let norm_a = frame.matrix_norms().0;
    let rising: f64 = (1..=n).map(|i| (k_grade + i) as f64).product();
    frame.hbar.powf(n as f64 / 2.0) * (2f64.sqrt() * d * norm_a).powi(n as i32) * rising.sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductReport {
    pub max_entry: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// Max-abs entry of `X^{m_1} ⋯ X^{m_q}` on the square cap, compared with the
/// product of single-factor envelopes evaluated at the cap.
pub fn product_norm_check(frame: &Frame, ms: &[MultiIndex], cap: usize) -> Result<ProductReport> {
    let mut acc: Option<SparseMatrix> = None;
    let mut envelope = 1.0;
    for m in ms {
        let x = build_power(frame, m, cap, cap)?;
        envelope *= magnitude_envelope(frame, m, cap);
        acc = Some(match acc {
            None => x.matrix,
            Some(p) => p.mul(&x.matrix),
        });
    }
    let max_entry = acc.map(|p| p.max_abs()).unwrap_or(1.0);
    Ok(ProductReport {
        max_entry,
        envelope,
        ratio: max_entry / envelope,
    })
}
