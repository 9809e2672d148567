//! Run configuration: a TOML file with fixed sections, plus `section.key=value`
//! overrides from the command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semiclassical::experiment::{GridOverride, Horizon, OrderRule, ReferenceOptions};
use semiclassical::flow::FlowOptions;
use semiclassical::galerkin::{CoefficientOptions, Integrator};
use semiclassical::potential::PotentialModel;
use semiclassical::truncation::{Problem, RunSettings};
use semiclassical::verify::{Suite, DEFAULT_SEED};

use crate::failure::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub run: RunSection,
    pub tolerances: Tolerances,
    pub reference: ReferenceSection,
    pub sweep: SweepSection,
    pub verify: VerifySection,
    pub fit: FitSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub dim: usize,
    /// Expression in `x`, `y` (or `x1`, `x2`, …).
    pub potential: Option<String>,
    /// `harmonic`, `morse`, `trigonometric` or `gevrey`, used with `params`.
    pub family: Option<String>,
    pub params: Vec<f64>,
    pub a0: Vec<f64>,
    pub eta0: Vec<f64>,
    /// Rows of `A₀` and `B₀`; the identity when omitted.
    pub a_re: Option<Vec<Vec<f64>>>,
    pub a_im: Option<Vec<Vec<f64>>>,
    pub b_re: Option<Vec<Vec<f64>>>,
    pub b_im: Option<Vec<Vec<f64>>>,
    pub j: usize,
    /// Coefficients in graded order over `|j| <= J`; `δ_{j0}` when omitted.
    pub c_re: Option<Vec<f64>>,
    pub c_im: Option<Vec<f64>>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            dim: 1,
            potential: None,
            family: None,
            params: Vec::new(),
            a0: vec![0.0],
            eta0: vec![0.0],
            a_re: None,
            a_im: None,
            b_re: None,
            b_im: None,
            j: 0,
            c_re: None,
            c_im: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub hbar: Vec<f64>,
    pub l: Option<usize>,
    pub g: Option<f64>,
    pub g_candidates: Vec<f64>,
    pub hbar_tune: f64,
    pub t_final: f64,
    /// `T′` of the horizon `T(ħ) = T′ |ln ħ|`; replaces `t_final` when set.
    pub log_time: Option<f64>,
    pub cert_points: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            hbar: vec![0.05],
            l: None,
            g: None,
            g_candidates: vec![0.30, 0.35, 0.40, 0.45, 0.50],
            hbar_tune: 0.05,
            t_final: 1.0,
            log_time: None,
            cert_points: 33,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub flow: f64,
    pub coeff: f64,
    /// `magnus4` or `midpoint`.
    pub integrator: String,
    pub renormalize: bool,
    /// Pair-condition tolerance for the initial frame.
    pub frame: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            flow: 1e-10,
            coeff: 1e-12,
            integrator: "magnus4".into(),
            renormalize: false,
            frame: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub enabled: bool,
    pub relative_target: f64,
    pub absolute_target: f64,
    pub max_steps: usize,
    /// Fixed grid: both `points` and `half_width` or neither.
    pub points: Option<usize>,
    pub half_width: Option<f64>,
    /// Also dump the final reference state.
    pub dump_state: bool,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        let d = ReferenceOptions::default();
        ReferenceSection {
            enabled: false,
            relative_target: d.relative_target,
            absolute_target: d.absolute_target,
            max_steps: d.max_steps,
            points: None,
            half_width: None,
            dump_state: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { workers: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suites: Vec<String>,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suites: Suite::ALL.iter().map(|s| s.name().to_string()).collect(),
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Sweep table to fit; `<output.dir>/sweep.csv` when omitted.
    pub input: Option<PathBuf>,
    /// `measured` or `bound`; `measured` when that column has values.
    pub column: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Reads `path` (if any), applies the overrides and deserializes.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

/// Sets `section.key` from `section.key=value`; the value is read as TOML
/// and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form section.key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` must be section.key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let section = table
        .entry(path[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match section {
        toml::Value::Table(t) => {
            t.insert(path[1].to_string(), value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("`{}` is not a section", path[0]))),
    }
}

impl RunConfig {
    /// First 16 hex digits of the SHA-256 of the physics-relevant fields.
    /// The output directory and the worker count do not enter.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        c.sweep = SweepSection::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    pub fn model(&self) -> Result<PotentialModel, CliError> {
        let p = &self.problem;
        let model = match (&p.potential, &p.family) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either problem.potential or problem.family, not both".into()))
            }
            (None, None) => return Err(CliError::Config("problem.potential or problem.family is required".into())),
            (Some(src), None) => PotentialModel::parse(p.dim, src)?,
            (None, Some(f)) => family(f, p.dim, &p.params)?,
        };
        if model.dim() != p.dim {
            return Err(CliError::Config(format!(
                "potential has dimension {} but problem.dim = {}",
                model.dim(),
                p.dim
            )));
        }
        Ok(model)
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let p = &self.problem;
        let d = p.dim;
        if d == 0 {
            return Err(CliError::Config("problem.dim must be at least 1".into()));
        }
        for (name, v) in [("a0", &p.a0), ("eta0", &p.eta0)] {
            if v.len() != d {
                return Err(CliError::Config(format!("problem.{name} has {} entries, expected {d}", v.len())));
            }
        }
        let model = self.model()?;
        let lo: Vec<f64> = p.a0.iter().map(|a| a - 4.0).collect();
        let hi: Vec<f64> = p.a0.iter().map(|a| a + 4.0).collect();
        model.check_bounded_below(&lo, &hi, if d <= 2 { 101 } else { 11 })?;
        let a_mat0 = matrix(d, "a", p.a_re.as_ref(), p.a_im.as_ref())?;
        let b_mat0 = matrix(d, "b", p.b_re.as_ref(), p.b_im.as_ref())?;
        let c0 = match (&p.c_re, &p.c_im) {
            (None, None) => vec![Complex64::new(1.0, 0.0)],
            (re, im) => {
                let n = re.as_ref().map_or(0, Vec::len).max(im.as_ref().map_or(0, Vec::len));
                let at = |v: &Option<Vec<f64>>, k: usize| v.as_ref().and_then(|v| v.get(k)).copied().unwrap_or(0.0);
                (0..n).map(|k| Complex64::new(at(re, k), at(im, k))).collect()
            }
        };
        Ok(Problem {
            model: Arc::new(model),
            a0: DVector::from_column_slice(&p.a0),
            eta0: DVector::from_column_slice(&p.eta0),
            a_mat0,
            b_mat0,
            j: p.j,
            c0,
        })
    }

    pub fn order_rule(&self) -> Result<Option<OrderRule>, CliError> {
        match (self.run.l, self.run.g) {
            (Some(_), Some(_)) => Err(CliError::Config("give either run.l or run.g, not both".into())),
            (Some(l), None) => Ok(Some(OrderRule::Fixed(l))),
            (None, Some(g)) => Ok(Some(OrderRule::Optimal(g))),
            (None, None) => Ok(None),
        }
    }

    pub fn horizon(&self) -> Result<Horizon, CliError> {
        match self.run.log_time {
            Some(tp) if tp > 0.0 => Ok(Horizon::LogTime(tp)),
            Some(tp) => Err(CliError::Config(format!("run.log_time must be positive, got {tp}"))),
            None if self.run.t_final.is_finite() && self.run.t_final != 0.0 => Ok(Horizon::Fixed(self.run.t_final)),
            None => Err(CliError::Config(format!("run.t_final must be finite and nonzero, got {}", self.run.t_final))),
        }
    }

    pub fn hbars(&self) -> Result<&[f64], CliError> {
        let h = &self.run.hbar;
        if h.is_empty() {
            return Err(CliError::Config("run.hbar is empty".into()));
        }
        if let Some(bad) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(CliError::Config(format!("run.hbar contains {bad}, which is not positive")));
        }
        Ok(h)
    }

    /// Settings with `hbar`, `l` and `t_final` still to be filled in.
    pub fn template(&self) -> Result<RunSettings, CliError> {
        let t = &self.tolerances;
        let integrator = match t.integrator.as_str() {
            "magnus4" => Integrator::Magnus4,
            "midpoint" => Integrator::ExponentialMidpoint,
            other => {
                return Err(CliError::Config(format!(
                    "tolerances.integrator `{other}` is not magnus4 or midpoint"
                )))
            }
        };
        for (name, v) in [("flow", t.flow), ("coeff", t.coeff), ("frame", t.frame)] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("tolerances.{name} must be positive, got {v}")));
            }
        }
        if self.run.cert_points < 2 {
            return Err(CliError::Config("run.cert_points must be at least 2".into()));
        }
        let mut s = RunSettings::new(self.run.hbar_tune, 3, self.run.t_final);
        s.flow = FlowOptions {
            tol: t.flow,
            renormalize: t.renormalize,
            ..FlowOptions::default()
        };
        s.coeff = CoefficientOptions {
            integrator,
            tol: t.coeff,
            ..CoefficientOptions::default()
        };
        s.cert_points = self.run.cert_points;
        Ok(s)
    }

    pub fn reference_options(&self) -> Result<ReferenceOptions, CliError> {
        let r = &self.reference;
        let grid = match (r.points, r.half_width) {
            (Some(points), Some(half_width)) => Some(GridOverride { points, half_width }),
            (None, None) => None,
            _ => {
                return Err(CliError::Config(
                    "reference.points and reference.half_width must be given together".into(),
                ))
            }
        };
        Ok(ReferenceOptions {
            relative_target: r.relative_target,
            absolute_target: r.absolute_target,
            max_steps: r.max_steps,
            grid,
        })
    }

    pub fn suites(&self) -> Result<Vec<Suite>, CliError> {
        self.verify.suites.iter().map(|s| s.parse().map_err(CliError::from)).collect()
    }
}

fn family(name: &str, dim: usize, params: &[f64]) -> Result<PotentialModel, CliError> {
    let want = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "family `{name}` takes {n} parameters, got {}",
                params.len()
            )))
        }
    };
    Ok(match name {
        "harmonic" => {
            want(dim)?;
            PotentialModel::harmonic(params)
        }
        "morse" => {
            want(3)?;
            PotentialModel::morse(params[0], params[1], params[2])
        }
        "trigonometric" => {
            want(dim + 2)?;
            PotentialModel::trigonometric(params[0], &params[1..=dim], params[dim + 1])
        }
        "gevrey" => {
            want(1)?;
            if !(params[0] > 0.0) {
                return Err(CliError::Config(format!("Gevrey exponent must be positive, got {}", params[0])));
            }
            PotentialModel::gevrey(params[0])
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown family `{other}` (expected harmonic, morse, trigonometric or gevrey)"
            )))
        }
    })
}

fn matrix(
    d: usize,
    name: &str,
    re: Option<&Vec<Vec<f64>>>,
    im: Option<&Vec<Vec<f64>>>,
) -> Result<DMatrix<Complex64>, CliError> {
    let read = |rows: Option<&Vec<Vec<f64>>>, part: &str, identity: bool| -> Result<DMatrix<f64>, CliError> {
        match rows {
            None if identity => Ok(DMatrix::identity(d, d)),
            None => Ok(DMatrix::zeros(d, d)),
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(CliError::Config(format!("problem.{name}_{part} must be a {d}×{d} array of rows")));
                }
                Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
            }
        }
    };
    let identity = re.is_none() && im.is_none();
    let r = read(re, "re", identity)?;
    let i = read(im, "im", false)?;
    Ok(DMatrix::from_fn(d, d, |p, q| Complex64::new(r[(p, q)], i[(p, q)])))
}
