//! Certified propagation checked against the grid reference, and the
//! decay fits used by sweeps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reference::{box_for_trajectory, converge_grid, measure_error, ConvergedState, ErrorMeasure};
use crate::stats::{linear_fit, LinearFit};
use crate::truncation::{choose_l, propagate, Problem, Propagation, RunSettings};
use crate::wavepacket::wavefunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceOptions {
    /// Requested self-convergence estimate as a fraction of `E(T)`.
    pub relative_target: f64,
    /// Floor for the requested estimate.
    pub absolute_target: f64,
    pub max_steps: usize,
    /// Replaces the trajectory-sized box when set.
    pub grid: Option<GridOverride>,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            relative_target: 1e-3,
            absolute_target: 1e-13,
            max_steps: 1 << 21,
            grid: None,
        }
    }
}

/// Fixed reference box: `points` per axis on `c ± half_width`, with `c` the
/// midpoint of the range swept by the centre `a(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOverride {
    pub points: usize,
    pub half_width: f64,
}

fn override_grid(traj: &crate::flow::Trajectory, g: GridOverride) -> Result<Grid> {
    if g.points < 16 || !(g.half_width > 0.0) {
        return Err(Error::Config(format!(
            "reference grid override needs at least 16 points and a positive half-width, got {} and {}",
            g.points, g.half_width
        )));
    }
    let d = traj.final_frame().dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for f in traj.frames() {
        for k in 0..d {
            lo[k] = lo[k].min(f.a[k]);
            hi[k] = hi[k].max(f.a[k]);
        }
    }
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    Grid::centered(&centre, &vec![g.half_width; d], &vec![g.points; d])
}

pub struct Comparison {
    pub propagation: Propagation,
    pub reference: ConvergedState,
    pub error: ErrorMeasure,
}

impl Comparison {
    pub fn bound(&self) -> f64 {
        self.propagation.certificate.final_bound()
    }

    pub fn measured(&self) -> f64 {
        self.error.distance
    }

    /// Reference estimate within `fraction` of the certificate.
    pub fn reference_resolves(&self, fraction: f64) -> bool {
        self.reference.estimate <= fraction * self.bound()
    }
}

pub fn compare(problem: &Problem, settings: &RunSettings, options: &ReferenceOptions) -> Result<Comparison> {
    let propagation = propagate(problem, settings)?;
    let widest = propagation.widest_grade().max(problem.j);
    let grid = Arc::new(match options.grid {
        Some(g) => override_grid(&propagation.trajectory, g)?,
        None => box_for_trajectory(&propagation.trajectory, widest, 64)?,
    });
    let frame0 = problem.frame(settings.hbar)?;
    let basis0 = Arc::new(crate::multiindex::BasisIndexSet::enumerate_upto(frame0.dim(), problem.j));
    let psi0 = wavefunction(&frame0, &basis0, &problem.c0, &grid)?;
    let target = (options.relative_target * propagation.certificate.final_bound()).max(options.absolute_target);
    let t = settings.t_final;
    let initial_steps = ((t.abs() / (0.05 * settings.hbar)).ceil() as usize).max(16);
    let reference = converge_grid(
        &problem.model,
        &psi0,
        settings.hbar,
        t,
        initial_steps,
        target,
        options.max_steps,
    )?;
    let approx = propagation.final_wavefunction(&grid)?;
    let error = measure_error(&approx, &reference.state.psi)?;
    Ok(Comparison {
        propagation,
        reference,
        error,
    })
}

/// Fit of `log y` against `x`; `None` when fewer than two finite positive
/// values remain.
pub fn log_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(a, v)| (*a, v.ln()))
        .unzip();
    (xs.len() >= 2).then(|| linear_fit(&xs, &ys))
}

/// Best `σ` on `{0.1, …, 1.0}` for `log y ≈ c − γ / ħ^σ`, by `R²`.
pub fn sigma_search(hbars: &[f64], y: &[f64]) -> Option<(f64, LinearFit)> {
    (1..=10)
        .filter_map(|k| {
            let sigma = k as f64 / 10.0;
            let x: Vec<f64> = hbars.iter().map(|h| h.powf(-sigma)).collect();
            log_fit(&x, y).map(|f| (sigma, f))
        })
        .filter(|(_, f)| f.r2.is_finite())
        .max_by(|a, b| a.1.r2.total_cmp(&b.1.r2))
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Largest structural defects of one propagation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Invariants {
    pub norm_drift: f64,
    pub symplectic: f64,
    pub energy_drift: f64,
    pub time_reversal: f64,
}

impl Invariants {
    pub fn of(p: &Propagation) -> Result<Self> {
        let diag = p.trajectory.diagnostics();
        Ok(Invariants {
            norm_drift: p.coefficients.max_norm_drift,
            symplectic: diag.max_symplectic,
            energy_drift: diag.energy_drift,
            time_reversal: p.trajectory.time_reversal_error()?,
        })
    }

    /// Norm drift `<= 1e-10`, the other three `<= 1e-8`.
    pub fn within_limits(&self) -> bool {
        self.norm_drift <= 1e-10 && self.symplectic <= 1e-8 && self.energy_drift <= 1e-8 && self.time_reversal <= 1e-8
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrderRule {
    Fixed(usize),
    /// `l = ⌊g/ħ⌋`
    Optimal(f64),
}

impl OrderRule {
    pub fn order(&self, hbar: f64) -> Result<usize> {
        match *self {
            OrderRule::Fixed(l) => Ok(l),
            OrderRule::Optimal(g) => choose_l(hbar, g),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Fixed(f64),
    /// `T(ħ) = T′ |ln ħ|`
    LogTime(f64),
}

impl Horizon {
    pub fn at(&self, hbar: f64) -> f64 {
        match *self {
            Horizon::Fixed(t) => t,
            Horizon::LogTime(tp) => tp * hbar.ln().abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub hbar: f64,
    pub l: usize,
    pub t_final: f64,
    pub bound: f64,
    pub measured: Option<f64>,
    pub reference_estimate: Option<f64>,
    pub reference_steps: Option<usize>,
    pub invariants: Invariants,
}

impl SweepPoint {
    /// Measured error within `1 + slack` of the certificate.
    pub fn sound(&self, slack: f64) -> Option<bool> {
        self.measured.map(|m| m <= (1.0 + slack) * self.bound)
    }

    /// Reference estimate at most `fraction` of the certificate.
    pub fn resolved(&self, fraction: f64) -> Option<bool> {
        self.reference_estimate.map(|e| e <= fraction * self.bound)
    }
}

/// One point of an ħ sweep; `reference = None` skips the grid comparison.
pub fn sweep_point(
    problem: &Problem,
    template: &RunSettings,
    order: OrderRule,
    horizon: Horizon,
    hbar: f64,
    reference: Option<&ReferenceOptions>,
) -> Result<SweepPoint> {
    let settings = RunSettings {
        hbar,
        l: order.order(hbar)?,
        t_final: horizon.at(hbar),
        ..template.clone()
    };
    let (propagation, measured, estimate, steps) = match reference {
        Some(opts) => {
            let c = compare(problem, &settings, opts)?;
            let (m, e, s) = (c.measured(), c.reference.estimate, c.reference.state.steps);
            (c.propagation, Some(m), Some(e), Some(s))
        }
        None => (propagate(problem, &settings)?, None, None, None),
    };
    Ok(SweepPoint {
        hbar,
        l: settings.l,
        t_final: settings.t_final,
        bound: propagation.certificate.final_bound(),
        measured,
        reference_estimate: estimate,
        reference_steps: steps,
        invariants: Invariants::of(&propagation)?,
    })
}

/// Fits attached to a finished sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFits {
    /// `log y` against `1/ħ`.
    pub exponential: Option<LinearFit>,
    /// `log y` against `log ħ`.
    pub power: Option<LinearFit>,
    /// Best `σ` for `log y` against `ħ^{-σ}`.
    pub sigma: Option<(f64, LinearFit)>,
}

impl SweepFits {
    pub fn of(hbars: &[f64], y: &[f64]) -> Self {
        let inv: Vec<f64> = hbars.iter().map(|h| 1.0 / h).collect();
        let logs: Vec<f64> = hbars.iter().map(|h| h.ln()).collect();
        SweepFits {
            exponential: log_fit(&inv, y),
            power: log_fit(&logs, y),
            sigma: sigma_search(hbars, y),
        }
    }
}

/// Problem for the analytic acceptance sweeps: `V = cos x`, `a₀ = 0.2`,
/// `η₀ = 0`, `A₀ = B₀ = 1`, `J = 0`.
pub fn cosine_problem() -> Result<Problem> {
    let v = crate::potential::PotentialModel::parse(1, "cos(x)")?;
    Ok(Problem::coherent(Arc::new(v), &[0.2], &[0.0]))
}

/// `V = e^{-1/x^u} 1_{x>0}` entered from the left: `a₀ = −0.5`, `η₀ = 1`.
pub fn gevrey_problem(u: f64) -> Result<Problem> {
    if !(u > 0.0) {
        return Err(Error::Config(format!("Gevrey exponent must be positive, got {u}")));
    }
    let v = crate::potential::PotentialModel::gevrey(u);
    Ok(Problem::coherent(Arc::new(v), &[-0.5], &[1.0]))
}
