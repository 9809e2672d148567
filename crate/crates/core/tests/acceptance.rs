//! Acceptance run: one PASS/FAIL (or REPORT) line per criterion.
//!
//! Failures are reported, not raised, so that the workspace test run stays
//! green while the printed lines carry the verdicts. Set
//! `ACCEPTANCE_STRICT=1` to exit with status 1 when any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use semiclassical::experiment::{
    cosine_problem, gevrey_problem, strictly_decreasing, sweep_point, Horizon, OrderRule, ReferenceOptions,
    SweepFits, SweepPoint,
};
use semiclassical::flow::FlowOptions;
use semiclassical::potential::PotentialModel;
use semiclassical::truncation::{autotune_g, Problem, RunSettings};
use semiclassical::verify::{self, Suite};
use semiclassical::Result;

const SWEEP_HBARS: [f64; 5] = [0.1, 0.05, 0.0333, 0.025, 0.02];
const ORDER_HBARS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
const G_CANDIDATES: [f64; 5] = [0.30, 0.35, 0.40, 0.45, 0.50];
const HBAR_TUNE: f64 = 0.05;
const SOUND_SLACK: f64 = 0.05;
const RESOLVED_FRACTION: f64 = 0.01;
const GEVREY_U: f64 = 1.0;
/// The Gevrey packet starts at `x = −0.5` with unit speed; by this time its
/// centre is still in the flat region, where every jet vanishes.
const GEVREY_T: f64 = 0.4;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Report,
}

struct Outcome {
    id: usize,
    title: &'static str,
    verdict: Verdict,
    detail: String,
    elapsed: Duration,
}

impl Outcome {
    fn print(&self) {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Report => "REPORT",
        };
        println!(
            "criterion {}: {tag} {} [{:.1} s] {}",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        );
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn template() -> RunSettings {
    let mut s = RunSettings::new(HBAR_TUNE, 3, 1.0);
    s.flow = FlowOptions::with_tol(1e-13);
    s.coeff.tol = 1e-13;
    s
}

fn row(tag: &str, p: &SweepPoint) {
    println!(
        "  {tag} hbar={:<7} l={:<3} T={:.4} E={:.3e} measured={} ref_est={} ref_steps={} norm={:.1e} sympl={:.1e} energy={:.1e} reversal={:.1e}",
        p.hbar,
        p.l,
        p.t_final,
        p.bound,
        p.measured.map_or("-".into(), |m| format!("{m:.3e}")),
        p.reference_estimate.map_or("-".into(), |m| format!("{m:.3e}")),
        p.reference_steps.map_or("-".into(), |m| m.to_string()),
        p.invariants.norm_drift,
        p.invariants.symplectic,
        p.invariants.energy_drift,
        p.invariants.time_reversal,
    );
}

fn sweep(
    tag: &str,
    problem: &Problem,
    order: OrderRule,
    horizon: Horizon,
    hbars: &[f64],
    reference: Option<&ReferenceOptions>,
) -> Result<Vec<SweepPoint>> {
    let template = template();
    hbars
        .iter()
        .map(|&h| {
            let p = sweep_point(problem, &template, order, horizon, h, reference)?;
            row(tag, &p);
            Ok(p)
        })
        .collect()
}

fn measured(points: &[SweepPoint]) -> Vec<f64> {
    points.iter().map(|p| p.measured.unwrap_or(f64::NAN)).collect()
}

fn fit_text(fit: Option<semiclassical::stats::LinearFit>) -> String {
    fit.map_or("no fit".into(), |f| format!("slope={:.4} R²={:.4}", f.slope, f.r2))
}

struct State {
    /// Runs of criteria 1–3 that were compared against the reference.
    compared: Vec<(usize, SweepPoint)>,
    /// Every propagation, for the invariant criterion.
    all: Vec<SweepPoint>,
    g: Option<f64>,
}

fn criterion_1(state: &mut State) -> Result<Outcome> {
    let start = Instant::now();
    let problem = Problem::coherent(Arc::new(PotentialModel::harmonic(&[1.0])), &[1.0], &[0.0]);
    let period = 2.0 * std::f64::consts::PI;
    let p = sweep(
        "c1",
        &problem,
        OrderRule::Fixed(3),
        Horizon::Fixed(period),
        &[0.05],
        Some(&ReferenceOptions::default()),
    )?
    .remove(0);
    let elapsed = start.elapsed();
    let err = p.measured.unwrap_or(f64::NAN);
    let ok = err <= 1e-7 && p.bound <= 1e-10 && elapsed < Duration::from_secs(60);
    state.compared.push((1, p.clone()));
    state.all.push(p.clone());
    Ok(Outcome {
        id: 1,
        title: "quadratic exactness",
        verdict: verdict(ok),
        detail: format!("measured={err:.3e} (<= 1e-7) E={:.3e} (<= 1e-10) runtime < 60 s", p.bound),
        elapsed,
    })
}

fn criterion_2(state: &mut State) -> Result<Outcome> {
    let start = Instant::now();
    let problem = cosine_problem()?;
    let tune = autotune_g(&problem, &template(), HBAR_TUNE, &G_CANDIDATES)?;
    for (g, entry) in &tune.table {
        match entry {
            Some((l, e)) => println!("  autotune g={g:.2} l={l} E={e:.3e}"),
            None => println!("  autotune g={g:.2} out of regime"),
        }
    }
    state.g = Some(tune.g);
    let points = sweep(
        "c2",
        &problem,
        OrderRule::Optimal(tune.g),
        Horizon::Fixed(1.0),
        &SWEEP_HBARS,
        Some(&ReferenceOptions::default()),
    )?;
    let elapsed = start.elapsed();
    let errs = measured(&points);
    let monotone = strictly_decreasing(&errs);
    let fits = SweepFits::of(&SWEEP_HBARS, &errs);
    let shape = fits.exponential.is_some_and(|f| f.slope < 0.0 && f.r2 >= 0.9);
    let ok = monotone && shape && elapsed < Duration::from_secs(20 * 60);
    for p in &points {
        state.compared.push((2, p.clone()));
        state.all.push(p.clone());
    }
    Ok(Outcome {
        id: 2,
        title: "exponential decay",
        verdict: verdict(ok),
        detail: format!(
            "g={:.2} monotone={monotone} log(err) vs 1/hbar {} (slope < 0, R² >= 0.9) runtime < 20 min",
            tune.g,
            fit_text(fits.exponential)
        ),
        elapsed,
    })
}

/// The same sweep at the smallest candidate, printed for comparison only.
fn criterion_2_diagnostic() -> Result<()> {
    let start = Instant::now();
    let g = G_CANDIDATES[0];
    let points = sweep(
        "c2-diag",
        &cosine_problem()?,
        OrderRule::Optimal(g),
        Horizon::Fixed(1.0),
        &SWEEP_HBARS,
        Some(&ReferenceOptions::default()),
    )?;
    let errs = measured(&points);
    let fits = SweepFits::of(&SWEEP_HBARS, &errs);
    println!(
        "  diagnostic (not a verdict): g={g:.2} monotone={} log(err) vs 1/hbar {} [{:.1} s]",
        strictly_decreasing(&errs),
        fit_text(fits.exponential),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn criterion_3(state: &mut State) -> Result<Outcome> {
    let start = Instant::now();
    let problem = cosine_problem()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for l in [2usize, 3] {
        let points = sweep(
            &format!("c3 l={l}"),
            &problem,
            OrderRule::Fixed(l),
            Horizon::Fixed(1.0),
            &ORDER_HBARS,
            Some(&ReferenceOptions::default()),
        )?;
        let fits = SweepFits::of(&ORDER_HBARS, &measured(&points));
        let slope = fits.power.map_or(f64::NAN, |f| f.slope);
        let target = l as f64 / 2.0;
        let within = (slope - target).abs() <= 0.5;
        ok &= within;
        parts.push(format!("l={l} slope={slope:.3} (target {target} ± 0.5)"));
        for p in points {
            state.compared.push((3, p.clone()));
            state.all.push(p);
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10 * 60);
    Ok(Outcome {
        id: 3,
        title: "fixed-l order",
        verdict: verdict(ok),
        detail: format!("{} runtime < 10 min", parts.join(", ")),
        elapsed,
    })
}

fn criterion_4(state: &State) -> Outcome {
    let start = Instant::now();
    let mut sound = 0;
    let mut unsound = Vec::new();
    let mut unresolved = Vec::new();
    for (c, p) in &state.compared {
        let label = format!("c{c}@hbar={}{}", p.hbar, if *c == 3 { format!(",l={}", p.l) } else { String::new() });
        if p.sound(SOUND_SLACK) != Some(true) {
            unsound.push(label.clone());
        }
        if p.resolved(RESOLVED_FRACTION) != Some(true) {
            unresolved.push(label);
        } else if p.sound(SOUND_SLACK) == Some(true) {
            sound += 1;
        }
    }
    let ok = unsound.is_empty() && unresolved.is_empty();
    Outcome {
        id: 4,
        title: "certificate soundness",
        verdict: verdict(ok),
        detail: format!(
            "{} runs: {sound} resolved and sound; measured > 1.05 E on [{}]; reference estimate > 1% of E on [{}]",
            state.compared.len(),
            unsound.join(" "),
            unresolved.join(" ")
        ),
        elapsed: start.elapsed(),
    }
}

fn criterion_5() -> Result<Outcome> {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for suite in Suite::ALL {
        let report = verify::run(suite, verify::DEFAULT_SEED)?;
        for check in &report.checks {
            println!(
                "  c5 {suite}/{} cases={} failures={} worst={:.3e}",
                check.check, check.cases, check.failures, check.worst
            );
        }
        ok &= report.pass();
        parts.push(format!("{suite}: {} cases, pass={}", report.cases(), report.pass()));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(5 * 60);
    Ok(Outcome {
        id: 5,
        title: "property suites",
        verdict: verdict(ok),
        detail: format!("seed {} {} runtime < 5 min", verify::DEFAULT_SEED, parts.join("; ")),
        elapsed,
    })
}

fn criterion_7(state: &mut State) -> Result<Outcome> {
    let start = Instant::now();
    let g = state.g.unwrap_or(G_CANDIDATES[0]);
    let points = sweep(
        "c7",
        &cosine_problem()?,
        OrderRule::Optimal(g),
        Horizon::LogTime(0.25),
        &SWEEP_HBARS,
        None,
    )?;
    let bounds: Vec<f64> = points.iter().map(|p| p.bound).collect();
    let monotone = strictly_decreasing(&bounds);
    let sigma = SweepFits::of(&SWEEP_HBARS, &bounds).sigma;
    state.all.extend(points);
    Ok(Outcome {
        id: 7,
        title: "log-time mode",
        verdict: verdict(monotone),
        detail: format!(
            "T = 0.25|ln hbar|, g={g:.2}, E monotone={monotone}, best sigma={}",
            sigma.map_or("none".into(), |(s, f)| format!("{s:.1} (R²={:.4}, slope={:.4})", f.r2, f.slope))
        ),
        elapsed: start.elapsed(),
    })
}

fn criterion_8(state: &mut State) -> Result<Outcome> {
    let start = Instant::now();
    let g = state.g.unwrap_or(G_CANDIDATES[0]);
    let points = sweep(
        "c8",
        &gevrey_problem(GEVREY_U)?,
        OrderRule::Optimal(g),
        Horizon::Fixed(GEVREY_T),
        &SWEEP_HBARS,
        None,
    )?;
    let bounds: Vec<f64> = points.iter().map(|p| p.bound).collect();
    let sigma = SweepFits::of(&SWEEP_HBARS, &bounds).sigma;
    state.all.extend(points);
    Ok(Outcome {
        id: 8,
        title: "Gevrey experiment (not certified)",
        verdict: Verdict::Report,
        detail: format!(
            "u={GEVREY_U}, T={GEVREY_T}, fitted sigma for log E vs hbar^-sigma = {}, u/(1+u) = {:.3}",
            sigma.map_or("none".into(), |(s, f)| format!("{s:.1} (R²={:.4})", f.r2)),
            GEVREY_U / (1.0 + GEVREY_U)
        ),
        elapsed: start.elapsed(),
    })
}

fn criterion_6(state: &State) -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 4];
    let mut bad = 0;
    for p in &state.all {
        let i = p.invariants;
        for (w, v) in worst.iter_mut().zip([i.norm_drift, i.symplectic, i.energy_drift, i.time_reversal]) {
            *w = w.max(v);
        }
        if !i.within_limits() {
            bad += 1;
        }
    }
    Outcome {
        id: 6,
        title: "structural invariants",
        verdict: verdict(bad == 0 && !state.all.is_empty()),
        detail: format!(
            "{} propagations, {bad} out of limits; worst norm={:.2e} (<= 1e-10) sympl={:.2e} energy={:.2e} reversal={:.2e} (<= 1e-8)",
            state.all.len(),
            worst[0],
            worst[1],
            worst[2],
            worst[3]
        ),
        elapsed: start.elapsed(),
    }
}

fn errored(id: usize, title: &'static str, start: Instant, e: semiclassical::Error) -> Outcome {
    Outcome {
        id,
        title,
        verdict: Verdict::Fail,
        detail: format!("error: {e}"),
        elapsed: start.elapsed(),
    }
}

fn main() {
    let mut state = State {
        compared: Vec::new(),
        all: Vec::new(),
        g: None,
    };
    let mut outcomes = Vec::new();
    type Step = fn(&mut State) -> Result<Outcome>;
    let steps: [(usize, &'static str, Step); 3] = [
        (1, "quadratic exactness", criterion_1),
        (2, "exponential decay", criterion_2),
        (3, "fixed-l order", criterion_3),
    ];
    for (id, title, f) in steps {
        let start = Instant::now();
        let o = f(&mut state).unwrap_or_else(|e| errored(id, title, start, e));
        o.print();
        outcomes.push(o);
        if id == 2 {
            if let Err(e) = criterion_2_diagnostic() {
                println!("  diagnostic failed: {e}");
            }
        }
    }
    let o = criterion_4(&state);
    o.print();
    outcomes.push(o);
    let start = Instant::now();
    let o = criterion_5().unwrap_or_else(|e| errored(5, "property suites", start, e));
    o.print();
    outcomes.push(o);
    let start = Instant::now();
    let o7 = criterion_7(&mut state).unwrap_or_else(|e| errored(7, "log-time mode", start, e));
    let start = Instant::now();
    let o8 = criterion_8(&mut state).unwrap_or_else(|e| errored(8, "Gevrey experiment (not certified)", start, e));
    let o6 = criterion_6(&state);
    for o in [o6, o7, o8] {
        o.print();
        outcomes.push(o);
    }

    outcomes.sort_by_key(|o| o.id);
    println!("summary:");
    for o in &outcomes {
        o.print();
    }
    let failed = outcomes.iter().filter(|o| o.verdict == Verdict::Fail).count();
    println!("acceptance: {failed} of {} criteria failed", outcomes.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
