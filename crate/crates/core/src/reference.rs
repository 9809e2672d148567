//! Strang split-step Fourier reference solver for `d <= 2`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::{Grid, GridFunction, Spectral};
use crate::potential::PotentialModel;

/// Squared boundary mass allowed at reported times.
pub const TAIL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GridState {
    pub psi: GridFunction,
    pub t: f64,
    pub hbar: f64,
    pub steps: usize,
    /// `‖ψ_T‖ − ‖ψ_0‖` accumulated by roundoff before the final rescaling.
    pub norm_drift: f64,
}

fn edge_cells(grid: &Grid) -> usize {
    (grid.shape().iter().min().copied().unwrap_or(16) / 32).max(2)
}

fn check_tail(psi: &GridFunction) -> Result<()> {
    let tail = psi.edge_mass(edge_cells(psi.grid()));
    if tail > TAIL_TOL {
        let ext = psi.grid().extent();
        let widest = ext.iter().copied().fold(0.0, f64::max);
        return Err(Error::BoxBreach {
            tail_mass: tail,
            suggested_half_width: widest,
        });
    }
    Ok(())
}

/// Unitary Strang stepping `e^{−iVτ/2ħ} e^{−iTτ/ħ} e^{−iVτ/2ħ}` with `n`
/// steps of size `t_final / n`.
pub fn propagate_grid(model: &PotentialModel, psi0: &GridFunction, hbar: f64, t_final: f64, steps: usize) -> Result<GridState> {
    let grid = psi0.grid().clone();
    let d = grid.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!(
            "reference solver supports d <= 2, got d = {d}"
        )));
    }
    if model.dim() != d {
        return Err(Error::Config("model and grid dimensions differ".into()));
    }
    let steps = steps.max(1);
    let dt = t_final / steps as f64;
    let points = grid.points();
    let v: Vec<f64> = points.iter().map(|x| model.value(x)).collect();
    if v.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("potential is not finite on the reference grid".into()));
    }
    let half: Vec<Complex64> = v.iter().map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * hbar))).collect();
    let full: Vec<Complex64> = half.iter().map(|z| z * z).collect();
    let kin: Vec<Vec<Complex64>> = (0..d)
        .map(|axis| {
            grid.wavenumbers(axis)
                .iter()
                .map(|k| Complex64::from_polar(1.0, -hbar * k * k * dt / 2.0))
                .collect()
        })
        .collect();
    let mut fft = Spectral::new();
    let mut psi = psi0.values().to_vec();
    mul(&mut psi, &half);
    for s in 0..steps {
        for (axis, phase) in kin.iter().enumerate() {
            fft.apply_along(&grid, axis, &mut psi, |q, z| *z *= phase[q]);
        }
        mul(&mut psi, if s + 1 == steps { &half } else { &full });
    }
    let mut psi = GridFunction::new(grid, psi);
    check_tail(&psi)?;
    // FFT roundoff inflates the norm by about ε per step, identically at every
    // dt level, so the halving study cannot see it
    let n0 = psi0.norm();
    let norm_drift = psi.norm() - n0;
    if n0 > 0.0 {
        psi.scale(Complex64::new(n0 / psi.norm(), 0.0));
    }
    Ok(GridState {
        psi,
        t: t_final,
        hbar,
        steps,
        norm_drift,
    })
}

fn mul(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x *= y;
    }
}

/// Reference state with a dt-halving self-convergence estimate.
#[derive(Clone, Debug)]
pub struct ConvergedState {
    pub state: GridState,
    /// Richardson estimate `‖ψ_{τ} − ψ_{τ/2}‖ / 3` of the error of the
    /// returned (finer) solution.
    pub estimate: f64,
    /// Pairs `(steps, estimate)` along the halving study.
    pub study: Vec<(usize, f64)>,
}

/// Halve the step until the estimate is at most `target`, the estimate
/// stalls, or `max_steps` would be exceeded.
pub fn converge_grid(
    model: &PotentialModel,
    psi0: &GridFunction,
    hbar: f64,
    t_final: f64,
    initial_steps: usize,
    target: f64,
    max_steps: usize,
) -> Result<ConvergedState> {
    let mut steps = initial_steps.max(1);
    let mut coarse = propagate_grid(model, psi0, hbar, t_final, steps)?;
    let mut study = Vec::new();
    loop {
        if 2 * steps > max_steps {
            let estimate = study.last().map(|&(_, e)| e).unwrap_or(f64::INFINITY);
            return Ok(ConvergedState {
                state: coarse,
                estimate,
                study,
            });
        }
        steps *= 2;
        let fine = propagate_grid(model, psi0, hbar, t_final, steps)?;
        let estimate = fine.psi.distance(&coarse.psi)? / 3.0;
        study.push((steps, estimate));
        // a stagnating estimate means the finer level is roundoff-bound, so
        // the level before it is kept
        let n = study.len();
        if n >= 3 && estimate > 0.5 * study[n - 2].1 {
            return Ok(ConvergedState {
                state: coarse,
                estimate: study[n - 2].1,
                study,
            });
        }
        coarse = fine;
        if estimate <= target {
            return Ok(ConvergedState {
                state: coarse,
                estimate,
                study,
            });
        }
    }
}

/// Periodic box around the trajectory. Along each axis it covers the turning
/// point `√(2ħ(N+1/2)) ‖A‖` of the widest occupied grade `N` plus twelve
/// ground-state widths `√ħ ‖A‖`, and the spacing resolves the same reach in
/// momentum around `η(t)`.
pub fn box_for_trajectory(traj: &Trajectory, widest_grade: usize, samples: usize) -> Result<Grid> {
    let d = traj.frames()[0].dim();
    let hbar = traj.frames()[0].hbar;
    let t_end = traj.t_final();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut kmax = vec![0.0f64; d];
    let reach = (2.0 * hbar * (widest_grade as f64 + 0.5)).sqrt() + 12.0 * hbar.sqrt();
    for s in 0..=samples {
        let f = traj.frame_at(t_end * s as f64 / samples as f64)?;
        let (na, nb) = f.matrix_norms();
        for k in 0..d {
            lo[k] = lo[k].min(f.a[k] - reach * na);
            hi[k] = hi[k].max(f.a[k] + reach * na);
            kmax[k] = kmax[k].max((f.eta[k].abs() + reach * nb) / hbar);
        }
    }
    let mut n = Vec::with_capacity(d);
    let mut h = Vec::with_capacity(d);
    for k in 0..d {
        let width = hi[k] - lo[k];
        let pts = ((width * kmax[k] / std::f64::consts::PI).ceil() as usize).max(32);
        let pts = pts.next_power_of_two();
        n.push(pts);
        h.push(width / pts as f64);
    }
    if n.iter().map(|&v| v as f64).product::<f64>() > 1.6e7 {
        return Err(Error::Resource(format!("reference grid {n:?}")));
    }
    Grid::new(lo, h, n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMeasure {
    pub distance: f64,
    pub overlap: f64,
    /// `| ‖ψ−Ψ‖² − (‖ψ‖² + ‖Ψ‖² − 2 Re⟨ψ,Ψ⟩) |`
    pub identity_gap: f64,
}

pub fn measure_error(approx: &GridFunction, reference: &GridFunction) -> Result<ErrorMeasure> {
    let distance = approx.distance(reference)?;
    let ip = approx.inner(reference)?;
    let na = approx.norm();
    let nr = reference.norm();
    let identity_gap = (distance * distance - (na * na + nr * nr - 2.0 * ip.re)).abs();
    Ok(ErrorMeasure {
        distance,
        overlap: ip.norm(),
        identity_gap,
    })
}

/// Convenience for tests and tools: sample a closure on a shared grid.
pub fn sample(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> Complex64) -> GridFunction {
    GridFunction::from_fn(grid.clone(), f)
}
