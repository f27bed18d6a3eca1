//! Configuration, run orchestration and output artifacts.
//!
//! A configuration is a flat list of `key = value` lines with dotted keys;
//! `#` starts a comment. Values are numbers, booleans, bare or quoted words,
//! or bracketed lists of words. Every key is validated and unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use crate::continuation::{AutomaticParams, SchemeConfig, SteppedParams};
use crate::error::{Error, Result};
use crate::optimize::{run_optimization, OptimizerKind, RunLimits, RunOutcome, Termination};
use crate::problems::{cantilever_linear, compressed_column, mbb, ColumnVariant, ProblemSpec};

/// Process exit status for a converged run.
pub const EXIT_CONVERGED: i32 = 0;
/// Process exit status for an error.
pub const EXIT_ERROR: i32 = 1;
/// Process exit status when the iteration cap ended a run.
pub const EXIT_CAPPED: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemConfig {
    Mbb { nelx: usize, nely: usize, volfrac: f64, rmin: f64 },
    CompressedColumn { scale: usize, rmin: f64, variant: ColumnVariant },
    Cantilever { nelx: usize, nely: usize, load: f64, stability: bool },
}

/// Optional adjustments applied on top of a problem's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemOverrides {
    pub eta: Option<f64>,
    pub penal: Option<f64>,
    pub modes: Option<usize>,
    pub ks_rho: Option<f64>,
    pub optimizer: Option<String>,
    pub move_limit: Option<f64>,
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emit {
    pub pgm: bool,
    pub csv: bool,
    pub summary: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self { pgm: true, csv: true, summary: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub overrides: ProblemOverrides,
    /// Named schemes in run order; more than one selects comparison mode.
    pub schemes: Vec<(String, SchemeConfig)>,
    pub limits: RunLimits,
    pub output_dir: Option<PathBuf>,
    pub emit: Emit,
}

impl RunConfig {
    pub fn build_problem(&self) -> Result<ProblemSpec> {
        let mut p = match self.problem {
            ProblemConfig::Mbb { nelx, nely, volfrac, rmin } => mbb(nelx, nely, volfrac, rmin)?,
            ProblemConfig::CompressedColumn { scale, rmin, variant } => compressed_column(scale, rmin, variant)?,
            ProblemConfig::Cantilever { nelx, nely, load, stability } => {
                cantilever_linear(nelx, nely, load, stability)?
            }
        };
        let o = &self.overrides;
        if let Some(eta) = o.eta {
            p.eta = eta;
        }
        if let Some(penal) = o.penal {
            p.material.penal = penal;
        }
        if let Some(modes) = o.modes {
            p.modes = modes;
        }
        if let Some(rho) = o.ks_rho {
            p.ks_rho = rho;
        }
        match o.optimizer.as_deref() {
            Some("oc") if !matches!(p.optimizer, OptimizerKind::Oc(_)) => {
                p.optimizer = OptimizerKind::Oc(Default::default())
            }
            Some("mma") if !matches!(p.optimizer, OptimizerKind::Mma(_)) => {
                p.optimizer = OptimizerKind::Mma(Default::default())
            }
            _ => {}
        }
        match &mut p.optimizer {
            OptimizerKind::Oc(params) => {
                if let Some(m) = o.move_limit {
                    params.move_limit = m;
                }
                if let Some(d) = o.damping {
                    params.damping = d;
                }
                params.validate()?;
            }
            OptimizerKind::Mma(params) => {
                if o.damping.is_some() {
                    return Err(Error::Config("optimizer.damping applies to oc only".into()));
                }
                if let Some(m) = o.move_limit {
                    params.move_limit = m;
                }
                params.validate()?;
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Replaces the scheme list with a single named scheme.
    pub fn with_scheme(mut self, name: &str) -> Result<Self> {
        let base = self.schemes.first().map(|(_, s)| *s).unwrap_or_default();
        self.schemes = vec![(canonical_scheme_name(name)?.to_string(), scheme_by_name(name, &base)?)];
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(String),
    List(Vec<String>),
}

struct Entries {
    map: BTreeMap<String, (usize, Value)>,
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].to_string();
        }
    }
    s.to_string()
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(Error::Config(format!("line {line_no}: invalid key `{key}`")));
            }
            let value = value.trim();
            let parsed = if let Some(inner) = value.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("{key}: unterminated list")))?;
                let items: Vec<String> =
                    inner.split(',').map(unquote).filter(|s| !s.is_empty()).collect();
                Value::List(items)
            } else {
                Value::Scalar(unquote(value))
            };
            if map.insert(key.to_string(), (line_no, parsed)).is_some() {
                return Err(Error::Config(format!("{key}: given more than once")));
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key).map(|(_, v)| v)
    }

    fn scalar(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => Ok(Some(s)),
            Some(Value::List(_)) => Err(Error::Config(format!("{key}: expected a single value, found a list"))),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.scalar(key)?
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("{key}: expected a finite number, found `{s}`")))
            })
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.scalar(key)?
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, found `{s}`")))
            })
            .transpose()
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.scalar(key)?
            .map(|s| match s.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected true or false, found `{s}`"))),
            })
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::List(v)) => Ok(Some(v)),
            Some(Value::Scalar(s)) => Ok(Some(vec![s])),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
        }
        Ok(())
    }
}

fn check(key: &str, ok: bool, requirement: &str, value: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: {requirement}, found {value}")))
    }
}

fn canonical_scheme_name(name: &str) -> Result<&'static str> {
    Ok(match name {
        "automatic" => "automatic",
        "default" | "stepped-default" => "default",
        "modified" | "stepped-modified" => "modified",
        "constant" => "constant",
        other => {
            return Err(Error::Config(format!(
                "unknown scheme `{other}` (automatic, default, modified, constant)"
            )))
        }
    })
}

/// Scheme for `name`, taking tuning parameters from `base` where it is of
/// the same kind.
fn scheme_by_name(name: &str, base: &SchemeConfig) -> Result<SchemeConfig> {
    Ok(match canonical_scheme_name(name)? {
        "automatic" => match base {
            SchemeConfig::Automatic(p) => SchemeConfig::Automatic(*p),
            _ => SchemeConfig::default(),
        },
        "default" => SchemeConfig::stepped_default(),
        "modified" => SchemeConfig::stepped_modified(),
        _ => match base {
            SchemeConfig::Constant { beta } => SchemeConfig::Constant { beta: *beta },
            _ => SchemeConfig::Constant { beta: 1.0 },
        },
    })
}

fn parse_automatic(e: &mut Entries) -> Result<AutomaticParams> {
    let mut p = AutomaticParams::default();
    if let Some(v) = e.f64("continuation.gamma")? {
        check("continuation.gamma", v > 0.0, "must be positive", v)?;
        p.gamma = v;
    }
    if let Some(v) = e.f64("continuation.cap_fraction")? {
        check("continuation.cap_fraction", v > 0.0, "must be positive", v)?;
        p.cap_fraction = v;
    }
    if let Some(v) = e.f64("continuation.epsilon")? {
        check("continuation.epsilon", (0.0..1.0).contains(&v), "must lie in [0, 1)", v)?;
        p.epsilon = v;
    }
    if let Some(v) = e.bool("continuation.abs_numerator")? {
        p.abs_numerator = v;
    }
    Ok(p)
}

fn parse_stepped(e: &mut Entries, mut p: SteppedParams) -> Result<SteppedParams> {
    if let Some(v) = e.usize("scheme.hold")? {
        p.hold_iters = v;
    }
    if let Some(v) = e.f64("scheme.step")? {
        check("scheme.step", v > 0.0, "must be positive", v)?;
        p.step = v;
    }
    if let Some(v) = e.usize("scheme.interval")? {
        check("scheme.interval", v >= 1, "must be at least 1", v)?;
        p.interval = v;
    }
    if let Some(v) = e.f64("scheme.cap")? {
        check("scheme.cap", v >= 1.0, "must be at least 1", v)?;
        p.beta_cap = v;
    }
    if let Some(v) = e.bool("scheme.freeze_on_gray")? {
        p.freeze_on_gray = v;
    }
    if let Some(v) = e.f64("continuation.epsilon")? {
        check("continuation.epsilon", (0.0..1.0).contains(&v), "must lie in [0, 1)", v)?;
        p.epsilon = v;
    }
    Ok(p)
}

fn parse_problem(e: &mut Entries) -> Result<ProblemConfig> {
    let name = e.scalar("problem.name")?.ok_or_else(|| Error::Config("problem.name is required".into()))?;
    let positive = |key: &str, v: f64| check(key, v > 0.0, "must be positive", v);
    Ok(match name.as_str() {
        "mbb" => {
            let nelx = e.usize("problem.nelx")?.unwrap_or(60);
            let nely = e.usize("problem.nely")?.unwrap_or(20);
            check("problem.nelx", nelx >= 1, "must be at least 1", nelx)?;
            check("problem.nely", nely >= 1, "must be at least 1", nely)?;
            let volfrac = e.f64("problem.volfrac")?.unwrap_or(0.5);
            check("problem.volfrac", volfrac > 0.0 && volfrac <= 1.0, "must lie in (0, 1]", volfrac)?;
            let rmin = e.f64("problem.rmin")?.unwrap_or(2.4);
            positive("problem.rmin", rmin)?;
            ProblemConfig::Mbb { nelx, nely, volfrac, rmin }
        }
        "compressed_column" => {
            let scale = e.usize("problem.scale")?.unwrap_or(4);
            check("problem.scale", [1, 2, 4].contains(&scale), "must be 1, 2 or 4", scale)?;
            let rmin = e.f64("problem.rmin")?.unwrap_or(4.0);
            positive("problem.rmin", rmin)?;
            let variant = match e.scalar("problem.variant")?.as_deref() {
                None | Some("max-buckling") => ColumnVariant::MaxBuckling,
                Some("min-volume") => ColumnVariant::MinVolume,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "problem.variant: expected max-buckling or min-volume, found `{other}`"
                    )))
                }
            };
            ProblemConfig::CompressedColumn { scale, rmin, variant }
        }
        "cantilever" => {
            let nelx = e.usize("problem.nelx")?.unwrap_or(80);
            let nely = e.usize("problem.nely")?.unwrap_or(20);
            let load = e.f64("problem.load")?.unwrap_or(2e5);
            positive("problem.load", load)?;
            let stability = e.bool("problem.stability")?.unwrap_or(false);
            ProblemConfig::Cantilever { nelx, nely, load, stability }
        }
        other => {
            return Err(Error::Config(format!(
                "problem.name: unknown problem `{other}` (mbb, compressed_column, cantilever)"
            )))
        }
    })
}

fn parse_overrides(e: &mut Entries) -> Result<ProblemOverrides> {
    let mut o = ProblemOverrides::default();
    if let Some(v) = e.f64("projection.eta")? {
        check("projection.eta", v > 0.0 && v < 1.0, "must lie in (0, 1)", v)?;
        o.eta = Some(v);
    }
    if let Some(v) = e.f64("material.penal")? {
        check("material.penal", v >= 1.0, "must be at least 1", v)?;
        o.penal = Some(v);
    }
    if let Some(v) = e.usize("problem.modes")? {
        check("problem.modes", v >= 1, "must be at least 1", v)?;
        o.modes = Some(v);
    }
    if let Some(v) = e.f64("problem.ks_rho")? {
        check("problem.ks_rho", v > 0.0, "must be positive", v)?;
        o.ks_rho = Some(v);
    }
    if let Some(v) = e.scalar("optimizer.type")? {
        check("optimizer.type", v == "oc" || v == "mma", "must be oc or mma", &v)?;
        o.optimizer = Some(v);
    }
    if let Some(v) = e.f64("optimizer.move")? {
        check("optimizer.move", v > 0.0 && v <= 1.0, "must lie in (0, 1]", v)?;
        o.move_limit = Some(v);
    }
    if let Some(v) = e.f64("optimizer.damping")? {
        check("optimizer.damping", v > 0.0 && v <= 1.0, "must lie in (0, 1]", v)?;
        o.damping = Some(v);
    }
    Ok(o)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut e = Entries::parse(text)?;
    let problem = parse_problem(&mut e)?;
    let overrides = parse_overrides(&mut e)?;

    let comparison = e.list("schemes")?;
    let scheme_type = e.scalar("scheme.type")?;
    if comparison.is_some() && scheme_type.is_some() {
        return Err(Error::Config("schemes: cannot be combined with scheme.type".into()));
    }
    let automatic = parse_automatic(&mut e)?;
    let build = |name: &str, e: &mut Entries| -> Result<SchemeConfig> {
        Ok(match canonical_scheme_name(name)? {
            "automatic" => SchemeConfig::Automatic(automatic),
            "default" => SchemeConfig::Stepped(parse_stepped(e, SteppedParams::default_scheme())?),
            "modified" => SchemeConfig::Stepped(parse_stepped(e, SteppedParams::modified_scheme())?),
            _ => {
                let beta = e.f64("scheme.beta")?.unwrap_or(1.0);
                check("scheme.beta", beta >= 0.0, "must be non-negative", beta)?;
                SchemeConfig::Constant { beta }
            }
        })
    };
    let schemes = match comparison {
        Some(names) => {
            check("schemes", !names.is_empty(), "must name at least one scheme", "[]")?;
            // stepped tuning keys would be ambiguous across several stepped schemes
            let mut out = Vec::new();
            for n in &names {
                let canonical = canonical_scheme_name(n)?;
                if out.iter().any(|(c, _): &(String, SchemeConfig)| c == canonical) {
                    return Err(Error::Config(format!("schemes: `{canonical}` listed twice")));
                }
                let scheme = match canonical {
                    "default" => SchemeConfig::stepped_default(),
                    "modified" => SchemeConfig::stepped_modified(),
                    _ => build(n, &mut e)?,
                };
                out.push((canonical.to_string(), scheme));
            }
            out
        }
        None => {
            let name = scheme_type.unwrap_or_else(|| "automatic".to_string());
            vec![(canonical_scheme_name(&name)?.to_string(), build(&name, &mut e)?)]
        }
    };

    let mut limits = RunLimits::default();
    if let Some(v) = e.usize("run.max_iters")? {
        check("run.max_iters", v >= 1, "must be at least 1", v)?;
        limits.max_iterations = v;
    }
    if let Some(v) = e.f64("continuation.beta_max")? {
        check("continuation.beta_max", v >= 1.0, "must be at least 1", v)?;
        limits.beta_total_max = v;
    }
    if let Some(v) = e.f64("stop.gray")? {
        check("stop.gray", v > 0.0 && v <= 1.0, "must lie in (0, 1]", v)?;
        limits.stop.gray = v;
    }
    if let Some(v) = e.f64("stop.rel_change")? {
        check("stop.rel_change", v > 0.0, "must be positive", v)?;
        limits.stop.rel_change = v;
    }
    if let Some(v) = e.f64("stop.constraint_tol")? {
        check("stop.constraint_tol", v >= 0.0, "must be non-negative", v)?;
        limits.stop.constraint_tol = v;
    }
    let output_dir = e.scalar("output.dir")?.map(PathBuf::from);
    let mut emit = Emit::default();
    if let Some(v) = e.bool("output.pgm")? {
        emit.pgm = v;
    }
    if let Some(v) = e.bool("output.csv")? {
        emit.csv = v;
    }
    if let Some(v) = e.bool("output.summary")? {
        emit.summary = v;
    }
    e.finish()?;
    Ok(RunConfig { problem, overrides, schemes, limits, output_dir, emit })
}

/// Final state of one run, as reported in `summary.txt` and comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub problem: String,
    pub scheme: String,
    pub termination: Termination,
    pub iterations: usize,
    pub objective: f64,
    pub beta: f64,
    pub gray: f64,
    pub volume: f64,
    pub lambda_1: Option<f64>,
    pub lambda_ks: Option<f64>,
}

impl RunSummary {
    pub fn from_outcome(problem: &ProblemSpec, scheme: &str, outcome: &RunOutcome) -> Self {
        let last = outcome.last();
        Self {
            problem: problem.name.clone(),
            scheme: scheme.to_string(),
            termination: outcome.termination,
            iterations: last.iter,
            objective: last.objective,
            beta: last.beta,
            gray: last.gray,
            volume: last.volume,
            lambda_1: last.lambda_1,
            lambda_ks: last.lambda_ks,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem: {}", self.problem);
        let _ = writeln!(s, "scheme: {}", self.scheme);
        let _ = writeln!(s, "termination: {}", self.termination.as_str());
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let _ = writeln!(s, "objective: {:e}", self.objective);
        let _ = writeln!(s, "beta: {}", self.beta);
        let _ = writeln!(s, "gray: {:.2e}", self.gray);
        let _ = writeln!(s, "volume: {:e}", self.volume);
        if let Some(l) = self.lambda_1 {
            let _ = writeln!(s, "lambda_1: {l:e}");
        }
        if let Some(l) = self.lambda_ks {
            let _ = writeln!(s, "lambda_ks: {l:e}");
        }
        s
    }
}

/// Aligned comparison table of runs of the same problem, in the given order.
pub fn compare_report(summaries: &[RunSummary]) -> Result<String> {
    if summaries.len() < 2 {
        return Err(Error::Config("a comparison needs at least two runs".into()));
    }
    if let Some(other) = summaries.iter().find(|s| s.problem != summaries[0].problem) {
        return Err(Error::MismatchedProblems(summaries[0].problem.clone(), other.problem.clone()));
    }
    let header = ["scheme", "objective", "iterations", "beta", "gray"];
    let rows: Vec<[String; 5]> = summaries
        .iter()
        .map(|s| {
            [
                s.scheme.clone(),
                format!("{:.6e}", s.objective),
                s.iterations.to_string(),
                format!("{:.4}", s.beta),
                format!("{:.2e}", s.gray),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = format!("problem: {}\n", summaries[0].problem);
    let line = |cells: &[&str]| {
        let mut l = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(l, "{c:<w$}");
            } else {
                let _ = write!(l, "  {c:>w$}");
            }
        }
        l + "\n"
    };
    out += &line(&header);
    for r in &rows {
        out += &line(&r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    Ok(out)
}

/// `history.csv`: one row per iteration, floats in shortest round-trip form.
pub fn history_csv(outcome: &RunOutcome) -> String {
    let k = outcome.history.first().map_or(0, |r| r.constraints.len());
    let mut s = String::from("iter,objective,volume,gray,beta,change");
    for j in 1..=k {
        let _ = write!(s, ",constraint_{j}");
    }
    s.push('\n');
    for r in &outcome.history {
        let _ = write!(s, "{},{:e},{:e},{:e},{:e},{:e}", r.iter, r.objective, r.volume, r.gray, r.beta, r.change);
        for c in &r.constraints {
            let _ = write!(s, ",{c:e}");
        }
        s.push('\n');
    }
    s
}

/// Plain PGM of the physical field, solid black, top row first.
pub fn density_pgm(nelx: usize, nely: usize, xphys: &[f64]) -> String {
    let mut s = format!("P2\n{nelx} {nely}\n255\n");
    for ey in 0..nely {
        let row: Vec<String> = (0..nelx)
            .map(|ex| {
                let x = xphys[ex * nely + ey].clamp(0.0, 1.0);
                ((255.0 * (1.0 - x)).round() as u8).to_string()
            })
            .collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Runs one scheme and writes its artifacts into `dir`.
pub fn run_single(problem: &ProblemSpec, scheme_name: &str, scheme: SchemeConfig, limits: &RunLimits, emit: Emit, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    info!("running {} with scheme {scheme_name}", problem.name);
    let outcome = run_optimization(problem, scheme, limits)?;
    let summary = RunSummary::from_outcome(problem, scheme_name, &outcome);
    if emit.csv {
        write_file(&dir.join("history.csv"), &history_csv(&outcome))?;
    }
    if emit.pgm {
        let pgm = density_pgm(problem.mesh.nelx(), problem.mesh.nely(), &outcome.design.x_phys);
        write_file(&dir.join("density_final.pgm"), &pgm)?;
    }
    if emit.summary {
        write_file(&dir.join("summary.txt"), &summary.render())?;
    }
    Ok(summary)
}

/// Executes a configuration. A single scheme writes into `out`; several
/// schemes run concurrently, each into `out/<scheme>`, and a comparison table
/// is written to `out/comparison.txt`.
pub fn execute(config: &RunConfig, out: &Path) -> Result<Vec<RunSummary>> {
    let problem = config.build_problem()?;
    if let [(name, scheme)] = config.schemes.as_slice() {
        return Ok(vec![run_single(&problem, name, *scheme, &config.limits, config.emit, out)?]);
    }
    fs::create_dir_all(out)?;
    let results: Vec<Result<RunSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .schemes
            .iter()
            .map(|(name, scheme)| {
                let problem = &problem;
                let dir = out.join(name);
                scope.spawn(move || run_single(problem, name, *scheme, &config.limits, config.emit, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("a scheme run panicked".into()))))
            .collect()
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    if summaries.len() >= 2 {
        write_file(&out.join("comparison.txt"), &compare_report(&summaries)?)?;
    }
    Ok(summaries)
}

/// Exit status for a set of finished runs: capped if any run hit the cap.
pub fn exit_status(summaries: &[RunSummary]) -> i32 {
    if summaries.iter().any(|s| s.termination == Termination::IterationCap) {
        EXIT_CAPPED
    } else {
        EXIT_CONVERGED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let c = parse_config("problem.name = mbb\n").unwrap();
        assert_eq!(c.schemes, vec![("automatic".to_string(), SchemeConfig::Automatic(AutomaticParams::default()))]);
        assert_eq!(c.problem, ProblemConfig::Mbb { nelx: 60, nely: 20, volfrac: 0.5, rmin: 2.4 });
        assert_eq!(c.limits.max_iterations, 2000);
        assert_eq!(c.limits.stop.rel_change, 1e-5);
        let p = c.build_problem().unwrap();
        assert_eq!((p.eta, p.material.penal), (0.5, 3.0));
    }

    #[test]
    fn stepped_default_scheme() {
        let c = parse_config("problem.name = mbb\nscheme.type = stepped-default\n").unwrap();
        let SchemeConfig::Stepped(s) = c.schemes[0].1 else { panic!("not stepped") };
        assert_eq!((s.hold_iters, s.step, s.interval, s.beta_cap), (400, 2.0, 25, 25.0));
    }

    #[test]
    fn range_errors_name_the_key() {
        let err = parse_config("problem.name = mbb\ncontinuation.gamma = -1\n").unwrap_err();
        assert!(err.to_string().contains("continuation.gamma"), "{err}");
        let err = parse_config("problem.name = mbb\nproblem.volfrac = abc\n").unwrap_err();
        assert!(err.to_string().contains("problem.volfrac"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config("problem.name = mbb\nproblem.scale = 2\n").unwrap_err();
        assert!(err.to_string().contains("problem.scale"), "{err}");
        assert!(parse_config("problem.name = mbb\nfoo = 1\n").is_err());
    }

    #[test]
    fn comparison_list_keeps_order() {
        let text = "# three-way\nproblem.name = mbb\nschemes = [default, modified, automatic]\n";
        let c = parse_config(text).unwrap();
        let names: Vec<_> = c.schemes.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["default", "modified", "automatic"]);
    }

    #[test]
    fn scheme_override() {
        let c = parse_config("problem.name = mbb\n").unwrap().with_scheme("modified").unwrap();
        assert_eq!(c.schemes, vec![("modified".to_string(), SchemeConfig::stepped_modified())]);
        assert!(parse_config("problem.name = mbb\n").unwrap().with_scheme("fast").is_err());
    }

    #[test]
    fn pgm_mapping() {
        let s = density_pgm(2, 1, &[1.0, 0.0]);
        assert_eq!(s, "P2\n2 1\n255\n0 255\n");
        // element e = ex * nely + ey, rows printed top first
        let s = density_pgm(2, 2, &[1.0, 0.5, 0.0, 0.25]);
        assert_eq!(s, "P2\n2 2\n255\n0 255\n128 191\n");
    }

    fn summary(problem: &str, scheme: &str, gray: f64) -> RunSummary {
        RunSummary {
            problem: problem.into(),
            scheme: scheme.into(),
            termination: Termination::Converged,
            iterations: 728,
            objective: 0.0598,
            beta: 229.7,
            gray,
            volume: 0.35,
            lambda_1: None,
            lambda_ks: None,
        }
    }

    #[test]
    fn comparison_table() {
        let a = summary("col", "default", 3.68e-2);
        let b = summary("col", "automatic", 9.1e-3);
        let t = compare_report(&[a.clone(), b]).unwrap();
        assert!(t.contains("9.10e-3"), "{t}");
        assert!(t.contains("3.68e-2"));
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[2].starts_with("default") && lines[3].starts_with("automatic"));
        let same = compare_report(&[a.clone(), a.clone()]).unwrap();
        let rows: Vec<&str> = same.lines().skip(2).collect();
        assert_eq!(rows[0], rows[1]);
        assert!(matches!(
            compare_report(&[a, summary("other", "x", 0.1)]),
            Err(Error::MismatchedProblems(..))
        ));
    }
}
