use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use semiclassical::experiment::{compare, sweep_point, Comparison, OrderRule, SweepFits, SweepPoint};
use semiclassical::galerkin::tilde_cap;
use semiclassical::grid::GridFunction;
use semiclassical::truncation::{autotune_g, propagate as run_propagation, Problem, Propagation, RunSettings};
use semiclassical::verify;
use semiclassical::Error;

use crate::config::RunConfig;
use crate::failure::CliError;
use crate::output::{gnuplot_script, num, opt, OutputDir, Plot, Table};

/// Values below this are treated as solver noise by the fits.
const NOISE_LEVEL: f64 = 1e-10;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub hash: &'a str,
    pub out: OutputDir,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a RunConfig, hash: &'a str) -> Result<Self, CliError> {
        Ok(Context {
            config,
            hash,
            out: OutputDir::create(&config.output.dir)?,
        })
    }
}

fn checked_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let problem = cfg.problem()?;
    for &h in cfg.hbars()? {
        problem.check(h, cfg.tolerances.frame)?;
    }
    Ok(problem)
}

/// The configured order rule, or `l = ⌊g/ħ⌋` with `g` tuned at
/// `run.hbar_tune`; the tuning table goes to `tune.csv`.
fn order_rule(ctx: &Context, problem: &Problem, template: &RunSettings) -> Result<OrderRule, CliError> {
    if let Some(rule) = ctx.config.order_rule()? {
        return Ok(rule);
    }
    let run = &ctx.config.run;
    let tune_template = RunSettings {
        t_final: ctx.config.horizon()?.at(run.hbar_tune),
        ..template.clone()
    };
    let tuned = autotune_g(problem, &tune_template, run.hbar_tune, &run.g_candidates)?;
    let mut t = Table::new(["hbar", "g", "l", "bound", "chosen"]);
    for (g, entry) in &tuned.table {
        let (l, e) = match entry {
            Some((l, e)) => (l.to_string(), num(*e)),
            None => (String::new(), String::new()),
        };
        t.push(
            ctx.hash,
            vec![num(run.hbar_tune), num(*g), l, e, (*g == tuned.g).to_string()],
        );
    }
    t.write(&ctx.out.path("tune.csv"))?;
    Ok(OrderRule::Optimal(tuned.g))
}

pub fn propagate(ctx: &Context, force_reference: bool) -> Result<Value, CliError> {
    let cfg = ctx.config;
    let hbars = cfg.hbars()?;
    if hbars.len() != 1 {
        return Err(CliError::Config(format!(
            "this command takes exactly one run.hbar value, got {}; use sweep for several",
            hbars.len()
        )));
    }
    let hbar = hbars[0];
    let problem = checked_problem(cfg)?;
    let template = cfg.template()?;
    let rule = order_rule(ctx, &problem, &template)?;
    let settings = RunSettings {
        hbar,
        l: rule.order(hbar)?,
        t_final: cfg.horizon()?.at(hbar),
        ..template
    };
    let with_reference = force_reference || cfg.reference.enabled;
    let (propagation, comparison) = if with_reference {
        let c = compare(&problem, &settings, &cfg.reference_options()?)?;
        let Comparison {
            propagation,
            reference,
            error,
        } = c;
        (propagation, Some((reference, error)))
    } else {
        (run_propagation(&problem, &settings)?, None)
    };

    write_trajectory(ctx, &propagation)?;
    write_coefficients(ctx, &propagation)?;
    let cert = write_certificate(ctx, &propagation)?;
    let mut artifacts = vec!["trajectory.csv", "coefficients.csv", "certificate.csv"];
    let bound = propagation.certificate.final_bound();
    let mut summary = json!({
        "status": "ok",
        "config_hash": ctx.hash,
        "hbar": hbar,
        "l": settings.l,
        "t_final": settings.t_final,
        "bound": bound,
        "norm_drift": propagation.coefficients.max_norm_drift,
        "symplectic": propagation.trajectory.diagnostics().max_symplectic,
        "energy_drift": propagation.trajectory.diagnostics().energy_drift,
    });

    let mut plots = vec![Plot {
        file: "certificate.csv",
        x: cert.column("t").unwrap(),
        y: &[(5, "mu"), (6, "E")],
        xlabel: "t",
        ylabel: "residual, certificate",
    }];
    let study_table;
    if let Some((reference, error)) = &comparison {
        let mut e = Table::new([
            "hbar",
            "l",
            "t_final",
            "bound",
            "measured",
            "measured_over_bound",
            "overlap",
            "identity_gap",
            "reference_estimate",
            "reference_steps",
            "reference_norm_drift",
        ]);
        e.push(
            ctx.hash,
            vec![
                num(hbar),
                settings.l.to_string(),
                num(settings.t_final),
                num(bound),
                num(error.distance),
                if bound > 0.0 { num(error.distance / bound) } else { String::new() },
                num(error.overlap),
                num(error.identity_gap),
                num(reference.estimate),
                reference.state.steps.to_string(),
                num(reference.state.norm_drift),
            ],
        );
        e.write(&ctx.out.path("error.csv"))?;
        let mut s = Table::new(["steps", "estimate"]);
        for (steps, est) in &reference.study {
            s.push(ctx.hash, vec![steps.to_string(), num(*est)]);
        }
        s.write(&ctx.out.path("reference_study.csv"))?;
        artifacts.extend(["error.csv", "reference_study.csv"]);
        if cfg.reference.dump_state {
            state_table(ctx.hash, &reference.state.psi).write(&ctx.out.path("reference_state.csv"))?;
            artifacts.push("reference_state.csv");
        }
        summary["measured"] = json!(error.distance);
        summary["reference_estimate"] = json!(reference.estimate);
        summary["reference_steps"] = json!(reference.state.steps);
        study_table = s;
        plots.push(Plot {
            file: "reference_study.csv",
            x: study_table.column("steps").unwrap(),
            y: &[(3, "estimate")],
            xlabel: "Strang steps",
            ylabel: "self-convergence estimate",
        });
    }
    ctx.out
        .write_text("plot.gp", &gnuplot_script("certified propagation", &plots))?;
    artifacts.push("plot.gp");
    summary["artifacts"] = json!(artifacts);
    Ok(summary)
}

fn write_trajectory(ctx: &Context, p: &Propagation) -> Result<(), CliError> {
    let (header, rows) = p.trajectory.to_csv_rows();
    let mut t = Table::new(header.split(','));
    for row in rows {
        t.push(ctx.hash, row.into_iter().map(num).collect());
    }
    t.write(&ctx.out.path("trajectory.csv"))
}

fn write_coefficients(ctx: &Context, p: &Propagation) -> Result<(), CliError> {
    let basis = p.space.basis();
    let mut t = Table::new(["t", "ordinal", "grade", "index", "re", "im"]);
    for (time, c) in p.coefficients.times.iter().zip(&p.coefficients.coeffs) {
        for (k, z) in c.iter().enumerate() {
            let index: Vec<String> = basis.get(k).entries().iter().map(u32::to_string).collect();
            t.push(
                ctx.hash,
                vec![
                    num(*time),
                    k.to_string(),
                    basis.grade_of(k).to_string(),
                    index.join(";"),
                    num(z.re),
                    num(z.im),
                ],
            );
        }
    }
    t.write(&ctx.out.path("coefficients.csv"))
}

fn write_certificate(ctx: &Context, p: &Propagation) -> Result<Table, CliError> {
    let c = &p.certificate;
    let mut t = Table::new(["t", "xi1", "xi2", "mu", "E"]);
    for k in 0..c.times.len() {
        t.push(
            ctx.hash,
            vec![num(c.times[k]), num(c.xi1[k]), num(c.xi2[k]), num(c.mu[k]), num(c.e[k])],
        );
    }
    t.write(&ctx.out.path("certificate.csv"))?;
    Ok(t)
}

fn state_table(hash: &str, psi: &GridFunction) -> Table {
    let d = psi.grid().dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend(["re".to_string(), "im".to_string()]);
    let mut t = Table::new(header);
    for (x, v) in psi.grid().points().iter().zip(psi.values()) {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(v.re));
        row.push(num(v.im));
        t.push(hash, row);
    }
    t
}

const SWEEP_COLUMNS: [&str; 14] = [
    "hbar",
    "inv_hbar",
    "l",
    "j_tilde",
    "t_final",
    "bound",
    "measured",
    "reference_estimate",
    "reference_steps",
    "norm_drift",
    "symplectic",
    "energy_drift",
    "time_reversal",
    "within_limits",
];

fn sweep_row(hash: &str, problem: &Problem, p: &SweepPoint) -> Result<Table, CliError> {
    let mut t = Table::new(SWEEP_COLUMNS);
    let inv = &p.invariants;
    t.push(
        hash,
        vec![
            num(p.hbar),
            num(1.0 / p.hbar),
            p.l.to_string(),
            tilde_cap(problem.j, p.l)?.to_string(),
            num(p.t_final),
            num(p.bound),
            opt(p.measured),
            opt(p.reference_estimate),
            p.reference_steps.map(|s| s.to_string()).unwrap_or_default(),
            num(inv.norm_drift),
            num(inv.symplectic),
            num(inv.energy_drift),
            num(inv.time_reversal),
            inv.within_limits().to_string(),
        ],
    );
    Ok(t)
}

pub fn sweep(ctx: &Context) -> Result<Value, CliError> {
    let cfg = ctx.config;
    let hbars = cfg.hbars()?.to_vec();
    if hbars.len() < 4 {
        return Err(CliError::Config(format!(
            "sweep needs at least 4 run.hbar values, got {}",
            hbars.len()
        )));
    }
    let problem = checked_problem(cfg)?;
    let template = cfg.template()?;
    let horizon = cfg.horizon()?;
    let rule = order_rule(ctx, &problem, &template)?;
    for &h in &hbars {
        tilde_cap(problem.j, rule.order(h)?)?;
    }
    let reference = if cfg.reference.enabled {
        Some(cfg.reference_options()?)
    } else {
        None
    };
    let points_dir = ctx.out.subdir("points")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers.max(1))
        .build()
        .map_err(|e| Error::Resource(format!("worker pool: {e}")))?;
    let names: Vec<String> = (0..hbars.len()).map(|k| format!("point_{k}.csv")).collect();
    pool.install(|| {
        hbars
            .par_iter()
            .zip(&names)
            .map(|(&h, name)| -> Result<(), CliError> {
                let p = sweep_point(&problem, &template, rule, horizon, h, reference.as_ref())?;
                sweep_row(ctx.hash, &problem, &p)?.write(&points_dir.path(name))
            })
            .collect::<Result<Vec<()>, CliError>>()
    })?;

    let mut merged = Table::new(SWEEP_COLUMNS);
    for name in &names {
        merged.extend(Table::read(&points_dir.path(name))?);
    }
    merged.write(&ctx.out.path("sweep.csv"))?;
    let column = if reference.is_some() { "measured" } else { "bound" };
    let fits = write_fits(ctx, &merged, column)?;
    let inv = merged.column("inv_hbar").unwrap();
    let y: &[(usize, &str)] = if reference.is_some() {
        &[(7, "bound E(T)"), (8, "measured")]
    } else {
        &[(7, "bound E(T)")]
    };
    ctx.out.write_text(
        "plot.gp",
        &gnuplot_script(
            "decay in 1/hbar",
            &[Plot {
                file: "sweep.csv",
                x: inv,
                y,
                xlabel: "1/hbar",
                ylabel: "error",
            }],
        ),
    )?;
    let mut points = Vec::new();
    let bounds = merged.floats("bound")?;
    let measured = merged.floats("measured")?;
    for (k, h) in hbars.iter().enumerate() {
        points.push(json!({ "hbar": h, "bound": bounds[k], "measured": measured[k] }));
    }
    Ok(json!({
        "status": "ok",
        "config_hash": ctx.hash,
        "rule": format!("{rule:?}"),
        "points": points,
        "fit": fits,
        "artifacts": ["sweep.csv", "fit.csv", "points/", "plot.gp"],
    }))
}

/// Fits of `column` against `1/ħ`, `ln ħ` and the best `ħ^{-σ}`, written to
/// `fit.csv`. A fit is degenerate when fewer than two positive values
/// remain, `R²` is undefined, or every value is below the noise level.
fn write_fits(ctx: &Context, table: &Table, column: &str) -> Result<Value, CliError> {
    let hbars: Vec<f64> = table
        .floats("hbar")?
        .into_iter()
        .map(|h| h.ok_or_else(|| CliError::Config("sweep table has an empty hbar cell".into())))
        .collect::<Result<_, _>>()?;
    let y: Vec<f64> = table.floats(column)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let usable = y.iter().filter(|v| **v > 0.0 && v.is_finite()).count();
    let noisy = y.iter().all(|v| !(*v >= NOISE_LEVEL));
    let fits = SweepFits::of(&hbars, &y);
    let mut t = Table::new(["column", "model", "sigma", "slope", "intercept", "r2", "points", "degenerate"]);
    let mut summary = Vec::new();
    let rows = [
        ("exponential", fits.exponential.map(|f| (1.0, f))),
        ("power", fits.power.map(|f| (f64::NAN, f))),
        ("sigma", fits.sigma),
    ];
    for (model, fit) in rows {
        let degenerate = fit.is_none_or(|(_, f)| !f.r2.is_finite()) || usable < 2 || noisy;
        let cells = match fit {
            Some((sigma, f)) => vec![
                if sigma.is_nan() { String::new() } else { num(sigma) },
                num(f.slope),
                num(f.intercept),
                num(f.r2),
            ],
            None => vec![String::new(); 4],
        };
        let mut row = vec![column.to_string(), model.to_string()];
        row.extend(cells);
        row.push(usable.to_string());
        row.push(degenerate.to_string());
        t.push(ctx.hash, row);
        summary.push(json!({
            "model": model,
            "slope": fit.map(|(_, f)| f.slope),
            "r2": fit.map(|(_, f)| f.r2).filter(|r| r.is_finite()),
            "sigma": fit.map(|(s, _)| s).filter(|s| s.is_finite()),
            "degenerate": degenerate,
        }));
    }
    t.write(&ctx.out.path("fit.csv"))?;
    Ok(Value::Array(summary))
}

pub fn fit(ctx: &Context) -> Result<Value, CliError> {
    let cfg = ctx.config;
    let input = cfg.fit.input.clone().unwrap_or_else(|| ctx.out.path("sweep.csv"));
    let table = Table::read(Path::new(&input))?;
    let column = match cfg.fit.column.as_deref() {
        Some(c @ ("measured" | "bound")) => c,
        Some(other) => {
            return Err(CliError::Config(format!("fit.column `{other}` is not measured or bound")))
        }
        None if table.floats("measured")?.iter().any(Option::is_some) => "measured",
        None => "bound",
    };
    let fits = write_fits(ctx, &table, column)?;
    Ok(json!({
        "status": "ok",
        "config_hash": ctx.hash,
        "input": input.display().to_string(),
        "column": column,
        "fit": fits,
        "artifacts": ["fit.csv"],
    }))
}

pub fn verify(ctx: &Context) -> Result<Value, CliError> {
    let cfg = ctx.config;
    let suites = cfg.suites()?;
    let mut checks = Table::new(["suite", "seed", "check", "cases", "failures", "worst"]);
    let mut failures = Table::new(["suite", "check", "inputs", "observed", "bound"]);
    let mut summary = Vec::new();
    let mut failed = 0;
    for suite in suites {
        let report = verify::run(suite, cfg.verify.seed)?;
        for c in &report.checks {
            println!(
                "{:<14} {:<36} cases {:>7}  failures {:>4}  worst {:.3e}",
                suite.name(),
                c.check,
                c.cases,
                c.failures,
                c.worst
            );
            checks.push(
                ctx.hash,
                vec![
                    suite.name().into(),
                    report.seed.to_string(),
                    c.check.into(),
                    c.cases.to_string(),
                    c.failures.to_string(),
                    num(c.worst),
                ],
            );
            failed += c.failures;
        }
        for f in &report.failures {
            failures.push(
                ctx.hash,
                vec![suite.name().into(), f.check.into(), f.inputs.clone(), num(f.observed), num(f.bound)],
            );
        }
        summary.push(json!({
            "suite": suite.name(),
            "cases": report.cases(),
            "pass": report.pass(),
        }));
    }
    checks.write(&ctx.out.path("verify.csv"))?;
    failures.write(&ctx.out.path("failures.csv"))?;
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(json!({
        "status": "ok",
        "config_hash": ctx.hash,
        "seed": cfg.verify.seed,
        "suites": summary,
        "artifacts": ["verify.csv", "failures.csv"],
    }))
}
