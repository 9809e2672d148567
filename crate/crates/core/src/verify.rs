//! Property suites for the combinatorial, Hermite and ladder estimates,
//! run on fixed grids and seeded random samples.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ladder::{build_power, magnitude_envelope};
use crate::multiindex::{
    binomial, composition_root_envelope, count_f, count_g, g_upper_bound, BasisIndexSet, MultiIndex,
};
use crate::wavepacket::{hermite_bound_check, BasisEvaluator, Frame};

pub const DEFAULT_SEED: u64 = 20_240_611;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Combinatorics,
    Hermite,
    Ladder,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Combinatorics, Suite::Hermite, Suite::Ladder];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Combinatorics => "combinatorics",
            Suite::Hermite => "hermite",
            Suite::Ladder => "ladder",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}` (expected combinatorics, hermite or ladder)")))
    }
}

/// One failed comparison, with enough context to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub check: &'static str,
    pub inputs: String,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub check: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest `observed / bound` seen; the largest defect for equality
    /// checks and the largest `ln observed − ln bound` for log comparisons.
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<CheckSummary>,
    /// First failures in evaluation order, at most [`KEPT_FAILURES`].
    pub failures: Vec<Failure>,
}

pub const KEPT_FAILURES: usize = 32;

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }

    pub fn cases(&self) -> usize {
        self.checks.iter().map(|c| c.cases).sum()
    }
}

struct Tally {
    suite: Suite,
    seed: u64,
    checks: Vec<CheckSummary>,
    failures: Vec<Failure>,
}

impl Tally {
    fn new(suite: Suite, seed: u64) -> Self {
        Tally {
            suite,
            seed,
            checks: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn slot(&mut self, check: &'static str) -> &mut CheckSummary {
        if let Some(i) = self.checks.iter().position(|c| c.check == check) {
            return &mut self.checks[i];
        }
        self.checks.push(CheckSummary {
            check,
            cases: 0,
            failures: 0,
            worst: 0.0,
        });
        self.checks.last_mut().expect("just pushed")
    }

    /// `observed <= bound`.
    fn le(&mut self, check: &'static str, observed: f64, bound: f64, inputs: impl FnOnce() -> String) {
        let ratio = if bound > 0.0 { observed / bound } else { observed };
        self.record(check, observed <= bound, ratio, observed, bound, inputs);
    }

    /// `ln observed <= ln bound`, tracking the largest log margin.
    fn le_log(&mut self, check: &'static str, log_observed: f64, log_bound: f64, inputs: impl FnOnce() -> String) {
        let slack = 1e-12 * (1.0 + log_bound.abs());
        let ok = log_observed <= log_bound + slack;
        self.record(check, ok, log_observed - log_bound, log_observed, log_bound, inputs);
    }

    /// Exact integer equality.
    fn eq(&mut self, check: &'static str, observed: u128, expected: u128, inputs: impl FnOnce() -> String) {
        let defect = observed.abs_diff(expected) as f64;
        self.record(check, defect == 0.0, defect, observed as f64, expected as f64, inputs);
    }

    fn record(
        &mut self,
        check: &'static str,
        ok: bool,
        worst: f64,
        observed: f64,
        bound: f64,
        inputs: impl FnOnce() -> String,
    ) {
        let slot = self.slot(check);
        slot.cases += 1;
        slot.worst = slot.worst.max(worst);
        if !ok {
            slot.failures += 1;
            if self.failures.len() < KEPT_FAILURES {
                self.failures.push(Failure {
                    check,
                    inputs: inputs(),
                    observed,
                    bound,
                });
            }
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            suite: self.suite,
            seed: self.seed,
            checks: self.checks,
            failures: self.failures,
        }
    }
}

pub fn run(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Combinatorics => combinatorics(),
        Suite::Hermite => Ok(hermite(seed)),
        Suite::Ladder => ladder(seed),
    }
}

/// Direct enumeration of `q`-tuples in `1..=p`, histogrammed by sum.
pub fn brute_force_g(p: usize, q: usize) -> Vec<u128> {
    let mut counts = vec![0u128; q * p + 1];
    let mut parts = vec![1usize; q];
    loop {
        counts[parts.iter().sum::<usize>()] += 1;
        let mut i = 0;
        while i < q && parts[i] == p {
            parts[i] = 1;
            i += 1;
        }
        if i == q {
            return counts;
        }
        parts[i] += 1;
    }
}

fn combinatorics() -> Result<SuiteReport> {
    let mut t = Tally::new(Suite::Combinatorics, 0);
    for p in 1..=6 {
        for q in 1..=6 {
            let brute = brute_force_g(p, q);
            for n in q..=q * p {
                let g = count_g(p, n, q)?;
                t.eq("composition count vs enumeration", g, brute[n], || format!("p={p} n={n} q={q}"));
                let bound = g_upper_bound(p, n, q)?.expect("n within q..=qp");
                t.le("two-sided composition bound", g as f64, bound as f64, || format!("p={p} n={n} q={q}"));
                let mirror = count_g(p, q * (p + 1) - n, q)?;
                t.eq("reflection symmetry", g, mirror, || format!("p={p} n={n} q={q}"));
            }
        }
    }
    for n in 1..=30 {
        for q in 1..=n {
            let exact = binomial((n - 1) as u64, (q - 1) as u64)?;
            for p in [n, n + 3] {
                let g = count_g(p, n, q)?;
                t.eq("unconstrained closed form", g, exact, || format!("p={p} n={n} q={q}"));
            }
        }
    }
    let envelope = composition_root_envelope();
    for p in 1..=10 {
        for n in 1..=60 {
            for q in 1..=n {
                let g = count_g(p, n, q)?;
                if g > 0 {
                    let root = (g as f64).powf(1.0 / n as f64);
                    t.le("n-th root envelope", root, envelope, || format!("p={p} n={n} q={q}"));
                }
            }
        }
    }
    for d in 1..=3 {
        for p in 1..=6 {
            for q in 1..=6 {
                for n in q..=q * p {
                    let f = count_f(d, p, n, q)?;
                    let g = count_g(p + 1, n + q * d, q * d)?;
                    t.le("multi-index shift bound", f as f64, g as f64, || {
                        format!("d={d} p={p} n={n} q={q}")
                    });
                }
            }
        }
    }
    Ok(t.finish())
}

fn hermite(seed: u64) -> SuiteReport {
    let mut t = Tally::new(Suite::Hermite, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check = |t: &mut Tally, k: u32, y: f64| {
        let r = hermite_bound_check(k, y);
        let inputs = || format!("k={k} y={y:e}");
        let kf = k as f64;
        if r.power_applies {
            t.le_log("power bound beyond the turning point", r.log_abs, kf * (2.0 * y.abs()).ln(), inputs);
        }
        let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
        let cramer = crate::wavepacket::KAPPA.ln() + 0.5 * kf * 2f64.ln() + 0.5 * log_fact + 0.5 * y * y;
        t.le_log("Cramér bound", r.log_abs, cramer, inputs);
    };
    for _ in 0..4000 {
        let k = rng.gen_range(0..=40u32);
        let y = rng.gen_range(-15.0..=15.0);
        check(&mut t, k, y);
    }
    // just past the turning point, where the power bound is tightest
    for k in 0..=40u32 {
        let edge = (2.0 * k as f64 + 1.0).sqrt();
        for _ in 0..20 {
            let y = edge * (1.0 + rng.gen_range(1e-9..0.05));
            check(&mut t, k, if rng.gen_bool(0.5) { y } else { -y });
        }
    }
    t.finish()
}

/// Random frame satisfying both symplectic-pair conditions:
/// `A = Y^{-1/2} U`, `B = −i (X + iY) A` with `X` symmetric, `Y` positive
/// definite and `U` unitary.
pub fn random_frame(rng: &mut impl Rng, d: usize) -> Result<Frame> {
    let hbar = rng.gen_range(0.05..1.0);
    let mut x = DMatrix::<f64>::zeros(d, d);
    let mut l = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            x[(i, j)] = v;
            x[(j, i)] = v;
            l[(i, j)] = rng.gen_range(-0.8..0.8);
        }
    }
    let y = &l * l.transpose() + DMatrix::identity(d, d) * rng.gen_range(0.3..2.0);
    let eig = y.clone().symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let raw = DMatrix::<Complex64>::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let u = raw.qr().q();
    let a_mat = inv_sqrt.map(Complex64::from) * u;
    let z = DMatrix::<Complex64>::from_fn(d, d, |i, j| Complex64::new(x[(i, j)], y[(i, j)]));
    let b_mat = (z * &a_mat).map(|v| v * Complex64::new(0.0, -1.0));
    let a = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let eta = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    Frame::new(hbar, a, eta, a_mat, b_mat)
}

fn ladder(seed: u64) -> Result<SuiteReport> {
    let mut t = Tally::new(Suite::Ladder, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // exhaustive band check for d = 1, caps 12 and |m| <= 4
    let f = Frame::standard(0.1, &[0.0], &[0.0])?;
    for n in 1..=4u32 {
        let m = MultiIndex::new(vec![n]);
        let x = build_power(&f, &m, 12, 12)?;
        band_check(&mut t, &x, &m, "unit frame");
    }
    for d in [1usize, 2] {
        let cap = if d == 1 { 10 } else { 6 };
        let powers: Vec<MultiIndex> = BasisIndexSet::enumerate_upto(d, 4)
            .indices()
            .iter()
            .filter(|m| m.order() >= 1)
            .cloned()
            .collect();
        for sample in 0..50 {
            let frame = random_frame(&mut rng, d)?;
            let report = frame.validate(1e-10)?;
            t.le("random frame is symplectic", report.max_residual(), 1e-10, || {
                format!("d={d} sample={sample}")
            });
            for m in &powers {
                let x = build_power(&frame, m, cap, cap)?;
                let label = format!("d={d} sample={sample} m={:?}", m.entries());
                band_check(&mut t, &x, m, &label);
                for k in 0..x.cols().len() {
                    let kg = x.cols().get(k).order();
                    let env = magnitude_envelope(&frame, m, kg);
                    let worst = x.matrix().column(k).map(|(_, v)| v.norm()).fold(0.0, f64::max);
                    t.le("magnitude envelope", worst, env, || format!("{label} k={k}"));
                }
            }
        }
    }
    for sample in 0..4 {
        let frame = random_frame(&mut rng, 1)?;
        quadrature_check(&mut t, &frame, 6, 4, sample)?;
    }
    Ok(t.finish())
}

fn band_check(t: &mut Tally, x: &crate::ladder::LadderMatrix, m: &MultiIndex, label: &str) {
    let order = m.order() as i64;
    let mut off_band = 0.0f64;
    for k in 0..x.cols().len() {
        let kg = x.cols().get(k).order() as i64;
        for (r, v) in x.matrix().column(k) {
            let rg = x.rows().get(r).order() as i64;
            if (rg - kg).abs() > order {
                off_band = off_band.max(v.norm());
            }
        }
    }
    t.le("band structure", off_band, 0.0, || format!("{label} m={:?}", m.entries()));
}

/// `⟨φ_j, (x−a)^m φ_k⟩` by grid quadrature against the ladder matrix, 1-D.
fn quadrature_check(t: &mut Tally, frame: &Frame, cap: usize, max_power: u32, sample: usize) -> Result<()> {
    let basis = Arc::new(BasisIndexSet::enumerate_upto(1, cap));
    let grid = Arc::new(frame.auto_grid(cap + max_power as usize)?);
    let phis = BasisEvaluator::new(frame, basis.clone())?.eval_grid(&grid);
    let a = frame.a[0];
    for n in 1..=max_power {
        let m = MultiIndex::new(vec![n]);
        let x = build_power(frame, &m, cap, cap)?;
        let mut defect = 0.0f64;
        for k in 0..basis.len() {
            let moved = phis[k].mul_real(|p| (p[0] - a).powi(n as i32));
            for j in 0..basis.len() {
                let q = phis[j].inner(&moved)?;
                defect = defect.max((q - x.matrix().get(j, k)).norm());
            }
        }
        t.le("quadrature agreement", defect, 1e-7, || format!("sample={sample} m={n} cap={cap}"));
    }
    Ok(())
}
