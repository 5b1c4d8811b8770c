//! Argument parsing, the canonical run configuration and the subcommand
//! drivers.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use robust_lmoments_core::estimate::{self, FamilyTemplate};
use robust_lmoments_core::moments::{self, Mode, Sample};
use robust_lmoments_core::{asymcov, special, CovMatrix, CovMethod, DistributionModel, HTransform, MomentSpec};

use crate::audit::{self, AuditReport};
use crate::io;
use crate::simulate::{self, SimulationConfig, SimulationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SEED: u64 = 42;
const DEFAULT_SIM_TOLERANCE: f64 = 0.1;

#[derive(Parser, Debug)]
#[command(
    name = "robust-lmoments",
    version,
    about = "Trimmed (MTM) and winsorized (MWM) moment estimation with asymptotic covariance formulas",
    long_about = "Trimmed (MTM) and winsorized (MWM) moment estimation with asymptotic covariance formulas.\n\n\
        Distributions are written family(p1,p2), case-insensitive: uniform(lo,hi), exponential(scale), \
        pareto(shape,scale) with F(x) = 1 - (scale/x)^shape, lognormal(mu,sigma), normal(mu,sigma). \
        Transforms h are identity, log, power(k) and shifted(c)."
)]
struct Cli {
    /// Emit CSV instead of plain text.
    #[arg(long, global = true)]
    csv: bool,
    /// Write the output to this file (atomically) instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Distribution, e.g. "exponential(1)"; a bare family name uses its defaults.
    #[arg(long, value_name = "FAMILY(P1,P2)")]
    family: String,
    /// Comma-separated transforms h, one per moment coordinate.
    #[arg(long, value_name = "LIST", default_value = "identity")]
    transforms: String,
    /// Trimming proportions a,b; repeat once per coordinate or give once for all.
    #[arg(long, value_name = "A,B", value_parser = parse_trim, default_value = "0,0")]
    trim: Vec<(f64, f64)>,
    /// mtm (trimmed) or mwm (winsorized).
    #[arg(long, value_parser = parse_mode, default_value = "mtm")]
    mode: Mode,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Population moments at the model and, with --data, sample moments.
    ///
    /// Trimmed: the mean of h(X_(i)) over i = floor(na)+1 .. n-floor(nb); population
    /// value (1-a-b)^-1 times the integral of H = h∘F^-1 over [a, 1-b].
    /// Winsorized: the floor(na) lowest and floor(nb) highest order statistics are
    /// replaced by the nearest retained ones; population value
    /// a·H(a) + integral of H over [a, 1-b] + b·H(1-b).
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        /// Sample file: numbers separated by whitespace or commas.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Asymptotic covariance matrix of sqrt(n)(mu_hat - mu).
    ///
    /// Methods: alpha (integral of alpha_i·alpha_j over (0,1), any mode and
    /// placement); kernel (Gamma times the double integral of
    /// K(v,w) = min(v,w) - vw against H_j'(v) H_i'(w), trimmed only); closed
    /// (ten-term closed form for interleaved windows a_i <= a_j < 1-b_i <= 1-b_j,
    /// trimmed only); equal-props (shortcut for common proportions, both modes);
    /// mwm-decomposition (nine window/atom terms, winsorized only); auto picks
    /// the fastest applicable one per entry and falls back to quadrature.
    Asymcov {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = parse_method, default_value = "auto")]
        method: CovMethod,
    },
    /// Audit that the covariance routes agree on a seeded corpus.
    ///
    /// Trimmed: alpha form, kernel form and (for interleaved windows) the closed
    /// form must agree within 1e-6 relative or 1e-10 absolute. Winsorized: the
    /// nine-term decomposition against the alpha form, and the equal-proportion
    /// formula against the decomposition within 1e-10.
    Equivalence {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Restrict to one mode; both are audited by default.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Fit free parameters by matching sample and population moments.
    ///
    /// Solves mu_j(theta) = mu_hat_j by damped Newton (bisection for a single
    /// parameter). Standard errors are sqrt(diag(Sigma_theta)/n) with
    /// Sigma_theta = D^-1 Sigma_mu D^-T, D = d mu / d theta; intervals are normal 95%.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Comma-separated parameter names held at the values given in --family.
        #[arg(long, value_name = "NAMES")]
        fixed: Option<String>,
    },
    /// Monte Carlo comparison of empirical and formula covariances.
    ///
    /// The config file holds key=value lines ('#' comments): family, params,
    /// transforms, trims (a,b;a,b...), mode, n, r, seed, targets
    /// (moments[,parameters]), fixed, tolerance, confidence. Replication r uses
    /// the stream seeded by splitmix(seed, r).
    Simulate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Maximum relative deviation for PASS (overrides the file).
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

fn parse_trim(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b, got '{s}'"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    let (a, b) = (num(a)?, num(b)?);
    if !(a >= 0.0 && b >= 0.0) {
        return Err("proportions must be >= 0".into());
    }
    if !(a + b < 1.0) {
        return Err("a+b must be < 1".into());
    }
    Ok((a, b))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: robust_lmoments_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<CovMethod, String> {
    s.parse().map_err(|e: robust_lmoments_core::Error| e.to_string())
}

/// Split on commas that are not inside parentheses.
pub fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

pub fn parse_transforms(s: &str) -> Result<Vec<HTransform>, String> {
    let parts = split_top_level(s);
    if parts.is_empty() {
        return Err("at least one transform is required".into());
    }
    parts
        .iter()
        .map(|p| p.parse::<HTransform>().map_err(|e| e.to_string()))
        .collect()
}

/// `a,b;a,b;…`
pub fn parse_trims(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(parse_trim).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Moments,
    Asymcov,
    Equivalence,
    Fit,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Moments => "moments",
            Command::Asymcov => "asymcov",
            Command::Equivalence => "equivalence",
            Command::Fit => "fit",
            Command::Simulate => "simulate",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Command::Moments,
            Command::Asymcov,
            Command::Equivalence,
            Command::Fit,
            Command::Simulate,
        ]
        .into_iter()
        .find(|c| c.name() == s.trim())
        .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

/// A validated invocation. Its canonical form is `key=value` lines, the same
/// format as config files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: Option<DistributionModel>,
    pub transforms: Vec<HTransform>,
    /// One pair per transform.
    pub trims: Vec<(f64, f64)>,
    pub mode: Option<Mode>,
    pub method: CovMethod,
    pub data: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub fixed: Vec<String>,
    pub csv: bool,
}

impl RunConfig {
    fn empty(command: Command) -> Self {
        RunConfig {
            command,
            model: None,
            transforms: Vec::new(),
            trims: Vec::new(),
            mode: None,
            method: CovMethod::Auto,
            data: None,
            config: None,
            output: None,
            seed: DEFAULT_SEED,
            tolerance: None,
            fixed: Vec::new(),
            csv: false,
        }
    }

    /// The moment specs, one per transform.
    pub fn specs(&self) -> anyhow::Result<Vec<MomentSpec>> {
        let mode = self.mode.unwrap_or(Mode::Mtm);
        self.transforms
            .iter()
            .zip(&self.trims)
            .map(|(t, &(a, b))| Ok(MomentSpec::new(t.clone(), a, b, mode)?))
            .collect()
    }

    pub fn to_canonical(&self) -> String {
        self.to_string()
    }

    pub fn from_canonical(text: &str) -> Result<Self, String> {
        let mut map = io::parse_config(text).map_err(|e| e.to_string())?;
        let mut take = |k: &str| map.remove(k);
        let command: Command = take("command").ok_or("missing command")?.parse()?;
        let mut c = RunConfig::empty(command);
        if let Some(v) = take("family") {
            c.model = Some(v.parse().map_err(|e: robust_lmoments_core::Error| e.to_string())?);
        }
        if let Some(v) = take("transforms") {
            c.transforms = parse_transforms(&v)?;
        }
        if let Some(v) = take("trims") {
            c.trims = parse_trims(&v)?;
        }
        if let Some(v) = take("mode") {
            c.mode = Some(parse_mode(&v)?);
        }
        if let Some(v) = take("method") {
            c.method = parse_method(&v)?;
        }
        c.data = take("data").map(PathBuf::from);
        c.config = take("config").map(PathBuf::from);
        c.output = take("output").map(PathBuf::from);
        if let Some(v) = take("seed") {
            c.seed = v.parse().map_err(|_| format!("bad seed '{v}'"))?;
        }
        if let Some(v) = take("tolerance") {
            c.tolerance = Some(v.parse().map_err(|_| format!("bad tolerance '{v}'"))?);
        }
        if let Some(v) = take("fixed") {
            c.fixed = split_top_level(&v);
        }
        if let Some(v) = take("csv") {
            c.csv = v.parse().map_err(|_| format!("bad csv flag '{v}'"))?;
        }
        if let Some(k) = map.keys().next() {
            return Err(format!("unknown key '{k}'"));
        }
        Ok(c)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command={}", self.command.name())?;
        if let Some(m) = &self.model {
            writeln!(f, "family={m}")?;
        }
        if !self.transforms.is_empty() {
            let t: Vec<String> = self.transforms.iter().map(|t| t.to_string()).collect();
            writeln!(f, "transforms={}", t.join(","))?;
        }
        if !self.trims.is_empty() {
            let t: Vec<String> = self.trims.iter().map(|(a, b)| format!("{a},{b}")).collect();
            writeln!(f, "trims={}", t.join(";"))?;
        }
        if let Some(m) = self.mode {
            writeln!(f, "mode={m}")?;
        }
        writeln!(f, "method={}", self.method)?;
        for (k, v) in [("data", &self.data), ("config", &self.config), ("output", &self.output)] {
            if let Some(p) = v {
                writeln!(f, "{k}={}", p.display())?;
            }
        }
        writeln!(f, "seed={}", self.seed)?;
        if let Some(t) = self.tolerance {
            writeln!(f, "tolerance={t}")?;
        }
        if !self.fixed.is_empty() {
            writeln!(f, "fixed={}", self.fixed.join(","))?;
        }
        writeln!(f, "csv={}", self.csv)
    }
}

fn usage(kind: ErrorKind, msg: impl fmt::Display) -> clap::Error {
    Cli::command().error(kind, msg)
}

fn apply_model_args(c: &mut RunConfig, m: ModelArgs) -> Result<(), clap::Error> {
    let model = m
        .family
        .parse::<DistributionModel>()
        .map_err(|e| usage(ErrorKind::ValueValidation, format!("--family: {e}")))?;
    let transforms =
        parse_transforms(&m.transforms).map_err(|e| usage(ErrorKind::ValueValidation, format!("--transforms: {e}")))?;
    let trims = match m.trim.len() {
        1 => vec![m.trim[0]; transforms.len()],
        k if k == transforms.len() => m.trim,
        k => {
            return Err(usage(
                ErrorKind::ValueValidation,
                format!("--trim given {k} times for {} transforms", transforms.len()),
            ))
        }
    };
    c.model = Some(model);
    c.transforms = transforms;
    c.trims = trims;
    c.mode = Some(m.mode);
    Ok(())
}

/// Parse and validate a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let mut c = match cli.command {
        Cmd::Moments { model, data } => {
            let mut c = RunConfig::empty(Command::Moments);
            apply_model_args(&mut c, model)?;
            c.data = data;
            c
        }
        Cmd::Asymcov { model, method } => {
            let mut c = RunConfig::empty(Command::Asymcov);
            apply_model_args(&mut c, model)?;
            c.method = method;
            c
        }
        Cmd::Equivalence { seed, mode } => {
            let mut c = RunConfig::empty(Command::Equivalence);
            c.seed = seed;
            c.mode = mode;
            c
        }
        Cmd::Fit { model, data, fixed } => {
            let mut c = RunConfig::empty(Command::Fit);
            apply_model_args(&mut c, model)?;
            c.data = Some(data);
            c.fixed = fixed.map(|f| split_top_level(&f)).unwrap_or_default();
            let template = fit_template(&c).map_err(|e| usage(ErrorKind::ValueValidation, format!("--fixed: {e}")))?;
            if template.free_count() != c.transforms.len() {
                return Err(usage(
                    ErrorKind::ValueValidation,
                    format!(
                        "{} transforms for {} free parameters (use --fixed to hold some)",
                        c.transforms.len(),
                        template.free_count()
                    ),
                ));
            }
            c
        }
        Cmd::Simulate { config, tolerance } => {
            let mut c = RunConfig::empty(Command::Simulate);
            c.config = Some(config);
            c.tolerance = tolerance;
            c
        }
    };
    c.csv = cli.csv;
    c.output = cli.output;
    Ok(c)
}

fn fit_template(c: &RunConfig) -> anyhow::Result<FamilyTemplate> {
    let model = c.model.ok_or_else(|| anyhow!("missing --family"))?;
    let mut t = FamilyTemplate::new(model);
    for name in &c.fixed {
        t = t.fix_named(name)?;
    }
    Ok(t)
}

/// What a subcommand produced, and whether it counts as a pass.
pub struct Outcome {
    pub text: String,
    pub success: bool,
}

/// Run a validated config, writing output to stdout or `--output`.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(out) => {
            let written = match &config.output {
                Some(p) => io::write_atomic(p, &out.text).map_err(anyhow::Error::from),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            match written {
                Ok(()) if out.success => EXIT_OK,
                Ok(()) => EXIT_FAILURE,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_FAILURE
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(config: &RunConfig) -> anyhow::Result<Outcome> {
    match config.command {
        Command::Moments => run_moments(config),
        Command::Asymcov => run_asymcov(config),
        Command::Equivalence => run_equivalence(config),
        Command::Fit => run_fit(config),
        Command::Simulate => run_simulate(config),
    }
}

fn require_model(c: &RunConfig) -> anyhow::Result<DistributionModel> {
    c.model.ok_or_else(|| anyhow!("missing --family"))
}

fn load_sample(path: &PathBuf) -> anyhow::Result<Sample> {
    let values = io::read_sample(path)?;
    Ok(Sample::new(values)?)
}

fn ok(text: String) -> anyhow::Result<Outcome> {
    Ok(Outcome { text, success: true })
}

fn run_moments(c: &RunConfig) -> anyhow::Result<Outcome> {
    let model = require_model(c)?;
    let specs = c.specs()?;
    let sample = c.data.as_ref().map(load_sample).transpose()?;
    let mut out = String::new();
    if c.csv {
        out.push_str("coordinate,transform,a,b,mode,population,sample\n");
    } else {
        writeln!(out, "model: {model}")?;
        if let Some(s) = &sample {
            writeln!(out, "n: {}", s.len())?;
        }
    }
    for (j, spec) in specs.iter().enumerate() {
        let pop = moments::population_moment(&model, spec).with_context(|| format!("coordinate {}", j + 1))?;
        let smp = sample.as_ref().map(|s| moments::sample_moment(s, spec)).transpose()?;
        let smp_s = smp.map(|v| v.to_string()).unwrap_or_default();
        if c.csv {
            writeln!(out, "{},{},{},{},{},{pop},{smp_s}", j + 1, spec.transform, spec.a(), spec.b(), spec.mode)?;
        } else {
            write!(out, "{}: {} a={} b={} {}  population={pop}", j + 1, spec.transform, spec.a(), spec.b(), spec.mode)?;
            if smp.is_some() {
                write!(out, "  sample={smp_s}")?;
            }
            out.push('\n');
        }
    }
    ok(out)
}

fn format_matrix(out: &mut String, m: &CovMatrix, csv: bool) -> fmt::Result {
    let k = m.dim();
    if csv {
        out.push_str("row,col,value,method\n");
        for i in 0..k {
            for j in 0..k {
                writeln!(out, "{},{},{},{}", i + 1, j + 1, m.get(i, j), m.method(i, j))?;
            }
        }
    } else {
        out.push_str("matrix:\n");
        for i in 0..k {
            let row: Vec<String> = (0..k).map(|j| format!("{:>22}", m.get(i, j))).collect();
            writeln!(out, "  {}", row.join(" "))?;
        }
        out.push_str("methods:\n");
        for i in 0..k {
            let row: Vec<String> = (0..k).map(|j| format!("{:>18}", m.method(i, j).name())).collect();
            writeln!(out, "  {}", row.join(" "))?;
        }
    }
    Ok(())
}

fn run_asymcov(c: &RunConfig) -> anyhow::Result<Outcome> {
    let model = require_model(c)?;
    let specs = c.specs()?;
    let m = asymcov::cov_matrix(&specs, &model, c.method)?;
    let mut out = String::new();
    if !c.csv {
        writeln!(out, "model: {model}")?;
        for (j, s) in specs.iter().enumerate() {
            writeln!(out, "coordinate {}: {} a={} b={} {}", j + 1, s.transform, s.a(), s.b(), s.mode)?;
        }
    }
    format_matrix(&mut out, &m, c.csv)?;
    ok(out)
}

fn audit_table(out: &mut String, label: &str, report: &AuditReport, csv: bool) -> fmt::Result {
    for (idx, row) in report.rows.iter().enumerate() {
        let values: Vec<String> = row.values.iter().map(|(m, v)| format!("{}={v}", m.name())).collect();
        let status = if row.passed { "PASS" } else { "FAIL" };
        let err = row.error.as_deref().unwrap_or("");
        if csv {
            writeln!(
                out,
                "{label},{},{},\"{}\",\"{}\",{:e},{status},\"{err}\"",
                idx + 1,
                audit::scenario_name(row.case.scenario),
                row.case.label(),
                values.join(" "),
                row.max_rel_dev
            )?;
        } else {
            writeln!(
                out,
                "{label} {:>4} {:<4} {:<70} {:>10.2e} {status} {} {err}",
                idx + 1,
                audit::scenario_name(row.case.scenario),
                row.case.label(),
                row.max_rel_dev,
                values.join(" ")
            )?;
        }
    }
    Ok(())
}

fn audit_summary(out: &mut String, label: &str, report: &AuditReport) -> fmt::Result {
    let counts = report.scenario_counts();
    let per: Vec<String> = audit::SCENARIOS
        .iter()
        .zip(counts)
        .map(|(s, n)| format!("{}:{n}", audit::scenario_name(*s)))
        .collect();
    writeln!(
        out,
        "# {label}: {} configs ({}), {} failed, max rel dev {:.3e}, {} ms: {}",
        report.rows.len(),
        per.join(" "),
        report.failures(),
        report.max_rel_dev(),
        report.runtime_ms,
        if report.passed() { "PASS" } else { "FAIL" }
    )
}

fn run_equivalence(c: &RunConfig) -> anyhow::Result<Outcome> {
    let cases = audit::corpus(c.seed);
    let mut reports = Vec::new();
    if c.mode != Some(Mode::Mwm) {
        reports.push(("mtm", audit::equivalence_audit(&cases)));
    }
    if c.mode != Some(Mode::Mtm) {
        reports.push(("mwm", audit::mwm_audit(&cases)));
    }
    let mut out = String::new();
    if c.csv {
        out.push_str("mode,index,scenario,config,values,max_rel_dev,status,error\n");
    }
    for (label, r) in &reports {
        audit_table(&mut out, label, r, c.csv)?;
    }
    if !c.csv {
        for (label, r) in &reports {
            audit_summary(&mut out, label, r)?;
        }
    }
    let success = reports.iter().all(|(_, r)| r.passed());
    Ok(Outcome { text: out, success })
}

fn run_fit(c: &RunConfig) -> anyhow::Result<Outcome> {
    let template = fit_template(c)?;
    let specs = c.specs()?;
    let path = c.data.as_ref().ok_or_else(|| anyhow!("missing --data"))?;
    let sample = load_sample(path)?;
    let fit = estimate::fit(&template, &sample, &specs)?;
    let n = sample.len() as f64;
    let z = special::normal_quantile(0.975);
    let names: Vec<&str> = template
        .model()
        .family()
        .param_names()
        .iter()
        .enumerate()
        .filter(|(i, _)| template.is_free(*i))
        .map(|(_, n)| *n)
        .collect();

    let mut out = String::new();
    if c.csv {
        out.push_str("parameter,estimate,std_error,ci95_lower,ci95_upper\n");
    } else {
        writeln!(out, "model: {}", fit.model)?;
        writeln!(out, "n: {}", sample.len())?;
        writeln!(out, "iterations: {}", fit.iterations)?;
        writeln!(out, "residual_norm: {:e}", fit.residual_norm)?;
        writeln!(out, "{:<10} {:>20} {:>20} {:>20} {:>20}", "parameter", "estimate", "std_error", "ci95_lower", "ci95_upper")?;
    }
    for (j, name) in names.iter().enumerate() {
        let est = fit.theta_hat[j];
        let se = (fit.cov_theta.get(j, j) / n).sqrt();
        let (lo, hi) = (est - z * se, est + z * se);
        if c.csv {
            writeln!(out, "{name},{est},{se},{lo},{hi}")?;
        } else {
            writeln!(out, "{name:<10} {est:>20.12} {se:>20.12} {lo:>20.12} {hi:>20.12}")?;
        }
    }
    if !c.csv {
        let fitted = estimate::moment_map(&fit.model, &specs)?;
        out.push_str("moments:\n");
        for (j, s) in specs.iter().enumerate() {
            writeln!(
                out,
                "  {}: {} a={} b={} {}  sample={}  fitted={}  residual={:e}",
                j + 1,
                s.transform,
                s.a(),
                s.b(),
                s.mode,
                fit.mu_hat[j],
                fitted[j],
                fitted[j] - fit.mu_hat[j]
            )?;
        }
        if let Some(alt) = &fit.alternate_root {
            writeln!(out, "warning: a second start converged to a different root {alt:?}")?;
        }
    }
    ok(out)
}

/// A simulation as described by a config file.
#[derive(Debug, Clone)]
pub struct SimulationFile {
    pub config: SimulationConfig,
    pub tolerance: f64,
    pub confidence: Option<f64>,
}

impl SimulationFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut map: BTreeMap<String, String> = io::parse_config(text)?;
        let mut take = |k: &str| map.remove(k);
        let family = take("family").ok_or_else(|| anyhow!("missing key 'family'"))?;
        let model: DistributionModel = match take("params") {
            Some(p) => format!("{family}({p})").parse()?,
            None => family.parse()?,
        };
        let transforms = parse_transforms(&take("transforms").unwrap_or_else(|| "identity".into())).map_err(|e| anyhow!(e))?;
        let mut trims = parse_trims(&take("trims").unwrap_or_else(|| "0,0".into())).map_err(|e| anyhow!("trims: {e}"))?;
        if trims.len() == 1 {
            trims = vec![trims[0]; transforms.len()];
        }
        if trims.len() != transforms.len() {
            bail!("{} trims for {} transforms", trims.len(), transforms.len());
        }
        let mode = match take("mode") {
            Some(m) => parse_mode(&m).map_err(|e| anyhow!(e))?,
            None => Mode::Mtm,
        };
        let specs = transforms
            .into_iter()
            .zip(trims)
            .map(|(t, (a, b))| MomentSpec::new(t, a, b, mode))
            .collect::<Result<Vec<_>, _>>()?;
        let num = |v: Option<String>, key: &str| -> anyhow::Result<Option<f64>> {
            v.map(|s| s.parse::<f64>().with_context(|| format!("bad {key} '{s}'"))).transpose()
        };
        let n: usize = take("n").ok_or_else(|| anyhow!("missing key 'n'"))?.parse().context("bad n")?;
        let r: usize = take("r")
            .or_else(|| take("replications"))
            .ok_or_else(|| anyhow!("missing key 'r'"))?
            .parse()
            .context("bad r")?;
        let seed: u64 = take("seed").map(|s| s.parse()).transpose().context("bad seed")?.unwrap_or(DEFAULT_SEED);
        let mut config = SimulationConfig::new(model, specs, n, r, seed);
        let targets = take("targets").unwrap_or_else(|| "moments".into());
        let mut template = FamilyTemplate::new(model);
        if let Some(f) = take("fixed") {
            for name in split_top_level(&f) {
                template = template.fix_named(&name)?;
            }
        }
        for t in split_top_level(&targets) {
            match t.to_ascii_lowercase().as_str() {
                "moments" => {}
                "parameters" => config = config.with_parameters(template),
                other => bail!("unknown target '{other}'"),
            }
        }
        let tolerance = num(take("tolerance"), "tolerance")?.unwrap_or(DEFAULT_SIM_TOLERANCE);
        let confidence = num(take("confidence"), "confidence")?;
        if let Some(k) = map.keys().next() {
            bail!("unknown key '{k}'");
        }
        Ok(SimulationFile {
            config,
            tolerance,
            confidence,
        })
    }
}

fn simulation_table(out: &mut String, block: &str, s: &simulate::Summary, csv: bool) -> fmt::Result {
    let k = s.theoretical_cov.dim();
    for i in 0..k {
        for j in 0..k {
            let (e, t, d) = (s.empirical_cov.get(i, j), s.theoretical_cov.get(i, j), s.per_entry_dev[(i, j)]);
            if csv {
                writeln!(out, "{block},{},{},{e},{t},{d}", i + 1, j + 1)?;
            } else {
                writeln!(out, "{block:<10} ({},{})  empirical={e:<22} theoretical={t:<22} rel_dev={d:.4}", i + 1, j + 1)?;
            }
        }
    }
    for j in 0..k {
        if csv {
            writeln!(out, "{block}-skewness,{},,{},,", j + 1, s.skewness[j])?;
            writeln!(out, "{block}-excess-kurtosis,{},,{},,", j + 1, s.excess_kurtosis[j])?;
        } else {
            writeln!(
                out,
                "{block:<10} coordinate {}  skewness={:.4} excess_kurtosis={:.4}",
                j + 1,
                s.skewness[j],
                s.excess_kurtosis[j]
            )?;
        }
    }
    Ok(())
}

pub fn format_report(report: &SimulationReport, csv: bool) -> String {
    let mut out = String::new();
    if csv {
        out.push_str("block,row,col,empirical,theoretical,rel_dev\n");
    } else {
        let _ = writeln!(
            out,
            "replications: {} used, {} failed, {} ms",
            report.replications, report.failures, report.runtime_ms
        );
    }
    let _ = simulation_table(&mut out, "moments", &report.moments, csv);
    if let Some(p) = &report.parameters {
        let _ = simulation_table(&mut out, "parameters", p, csv);
    }
    out
}

fn run_simulate(c: &RunConfig) -> anyhow::Result<Outcome> {
    let path = c.config.as_ref().ok_or_else(|| anyhow!("missing --config"))?;
    let text = io::read_to_string(path)?;
    let file = SimulationFile::parse(&text).with_context(|| path.display().to_string())?;
    let tolerance = c.tolerance.unwrap_or(file.tolerance);
    let report = simulate::run_mc(&file.config)?;
    let mut out = format_report(&report, c.csv);
    if let Some(conf) = file.confidence {
        let cov = simulate::coverage_check(&file.config, conf)?;
        if c.csv {
            writeln!(out, "coverage,{conf},,{cov},,")?;
        } else {
            writeln!(out, "coverage at {conf}: {cov}")?;
        }
    }
    let dev = report.max_rel_dev();
    let success = dev <= tolerance;
    writeln!(
        out,
        "{} max_rel_dev={dev:.6} tolerance={tolerance}",
        if success { "PASS" } else { "FAIL" }
    )?;
    Ok(Outcome { text: out, success })
}
