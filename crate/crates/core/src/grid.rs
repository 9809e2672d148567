//! Uniform tensor grids and complex samples on them.
//!
//! Grids are treated as periodic boxes `[lo, lo + n h)` per axis so that
//! derivatives can be taken spectrally. The flat layout is row-major with
//! the last axis fastest.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    h: Vec<f64>,
    n: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, h: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != h.len() || lo.len() != n.len() {
            return Err(Error::Config("grid axes are inconsistent".into()));
        }
        if h.iter().any(|&h| !(h > 0.0 && h.is_finite())) || n.iter().any(|&n| n < 2) {
            return Err(Error::Config("grid spacing must be positive with at least 2 points".into()));
        }
        Ok(Grid { lo, h, n })
    }

    /// `n` points per axis covering `[center - half, center + half)`.
    pub fn centered(center: &[f64], half_width: &[f64], n: &[usize]) -> Result<Self> {
        let h: Vec<f64> = half_width
            .iter()
            .zip(n)
            .map(|(w, &n)| 2.0 * w / n as f64)
            .collect();
        let lo = center.iter().zip(half_width).map(|(c, w)| c - w).collect();
        Self::new(lo, h, n.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Box length per axis.
    pub fn extent(&self) -> Vec<f64> {
        self.h.iter().zip(&self.n).map(|(h, &n)| h * n as f64).collect()
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis])
            .map(|i| self.lo[axis] + i as f64 * self.h[axis])
            .collect()
    }

    /// Coordinates of every point, flat layout.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|k| self.axis_coords(k)).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; d];
        for _ in 0..self.len() {
            out.push((0..d).map(|k| axes[k][idx[k]]).collect());
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < self.n[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    /// Angular wavenumbers of the discrete Fourier modes along `axis`, in
    /// FFT order; the Nyquist mode is mapped to zero.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let scale = 2.0 * std::f64::consts::PI / (n as f64 * self.h[axis]);
        (0..n)
            .map(|q| {
                if 2 * q == n {
                    0.0
                } else if q < n.div_ceil(2) {
                    q as f64 * scale
                } else {
                    (q as f64 - n as f64) * scale
                }
            })
            .collect()
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }
}

#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), values.len(), "sample count must match the grid");
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self::new(grid, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = grid.points().iter().map(|x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid.shape(),
                other.grid.shape()
            )))
        }
    }

    /// `⟨self, other⟩ = ∫ conj(self) other`, rectangle rule.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        self.check_same(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: Complex64, other: &GridFunction) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    /// Pointwise product with a real function of position.
    pub fn mul_real(&self, f: impl Fn(&[f64]) -> f64) -> GridFunction {
        let values = self
            .grid
            .points()
            .iter()
            .zip(&self.values)
            .map(|(x, v)| v * f(x))
            .collect();
        GridFunction::new(self.grid.clone(), values)
    }

    /// Squared norm carried by points within `margin` cells of the box
    /// boundary on some axis.
    pub fn edge_mass(&self, margin: usize) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut idx = vec![0usize; d];
        let mut mass = 0.0;
        for v in &self.values {
            if (0..d).any(|k| idx[k] < margin || idx[k] + margin >= g.n[k]) {
                mass += v.norm_sqr();
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < g.n[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        mass * g.cell_volume()
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, axis: usize, fft: &mut Spectral) -> GridFunction {
        let k = self.grid.wavenumbers(axis);
        let mut out = self.values.clone();
        fft.apply_along(&self.grid, axis, &mut out, |q, v| *v *= Complex64::new(0.0, k[q]));
        GridFunction::new(self.grid.clone(), out)
    }

    /// Fraction of the squared norm in the top eighth of the spectrum along
    /// every axis; a resolution diagnostic for spectral derivatives.
    pub fn spectral_tail(&self, fft: &mut Spectral) -> f64 {
        let mut total = 0.0;
        let mut tail = 0.0;
        for axis in 0..self.grid.dim() {
            let n = self.grid.n[axis];
            let mut work = self.values.clone();
            fft.forward_along(&self.grid, axis, &mut work);
            let stride = self.grid.stride(axis);
            for (i, v) in work.iter().enumerate() {
                let q = (i / stride) % n;
                let r = q.min(n - q);
                total += v.norm_sqr();
                if 8 * r >= 3 * n {
                    tail += v.norm_sqr();
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// CSV dump: coordinate columns, then `re`, `im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in 0..self.grid.dim() {
            let _ = write!(s, "x{},", k + 1);
        }
        s.push_str("re,im\n");
        for (x, v) in self.grid.points().iter().zip(&self.values) {
            for xi in x {
                let _ = write!(s, "{xi:.12e},");
            }
            let _ = writeln!(s, "{:.12e},{:.12e}", v.re, v.im);
        }
        s
    }
}

/// Cached FFT plans for lines of a grid.
pub struct Spectral {
    planner: FftPlanner<f64>,
    plans: Vec<(usize, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl Default for Spectral {
    fn default() -> Self {
        Spectral {
            planner: FftPlanner::new(),
            plans: Vec::new(),
        }
    }
}

impl Spectral {
    pub fn new() -> Self {
        Self::default()
    }

    fn plans(&mut self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        if let Some((_, f, b)) = self.plans.iter().find(|(m, _, _)| *m == n) {
            return (f.clone(), b.clone());
        }
        let f = self.planner.plan_fft_forward(n);
        let b = self.planner.plan_fft_inverse(n);
        self.plans.push((n, f.clone(), b.clone()));
        (f, b)
    }

    /// Forward transform along `axis` in place (unnormalized).
    pub fn forward_along(&mut self, grid: &Grid, axis: usize, data: &mut [Complex64]) {
        let (f, _) = self.plans(grid.n[axis]);
        self.lines(grid, axis, data, |line| f.process(line));
    }

    /// Transform along `axis`, multiply mode `q` by `op`, transform back.
    pub fn apply_along(
        &mut self,
        grid: &Grid,
        axis: usize,
        data: &mut [Complex64],
        op: impl Fn(usize, &mut Complex64),
    ) {
        let n = grid.n[axis];
        let (f, b) = self.plans(n);
        let inv = 1.0 / n as f64;
        self.lines(grid, axis, data, |line| {
            f.process(line);
            for (q, v) in line.iter_mut().enumerate() {
                op(q, v);
                *v *= inv;
            }
            b.process(line);
        });
    }

    fn lines(
        &mut self,
        grid: &Grid,
        axis: usize,
        data: &mut [Complex64],
        mut f: impl FnMut(&mut [Complex64]),
    ) {
        let n = grid.n[axis];
        let stride = grid.stride(axis);
        if stride == 1 {
            for line in data.chunks_exact_mut(n) {
                f(line);
            }
            return;
        }
        let block = n * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for (q, v) in line.iter_mut().enumerate() {
                    *v = data[base + off + q * stride];
                }
                f(&mut line);
                for (q, v) in line.iter().enumerate() {
                    data[base + off + q * stride] = *v;
                }
            }
        }
    }
}
