//! Batch front-end: run configuration, command pipelines and artifacts.
//!
//! Every command reads a JSON [`RunConfig`], writes its CSV/JSON artifacts
//! atomically into the output directory and finishes with `manifest.json`.
//! Floats in CSV files carry 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{DataSpec, InitialData, Packet, XGrid};
use crate::dispersion::{self, DispersionTable};
use crate::error::{Error, Result};
use crate::kernels::{self, Kernels};
use crate::oracle::{Oracle, OracleOptions};
use crate::profile::{ProfileSpec, VelocityProfile};
use crate::solution::{Solver, SolverOptions};
use crate::spectrum::{self, Verdict};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    ValidationFailure = 1,
    ConfigError = 2,
    Unstable = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Spectrum,
    Solve,
    Validate,
    Decompose,
    Growth,
}

/// Command-line arguments.
#[derive(Debug, Parser)]
#[command(
    name = "ductwave",
    version,
    about = "Thin-duct shear-flow acoustics: spectra, kernels and quasi-explicit solutions"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated output times; an empty string clears the list.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub times: Option<Vec<String>>,
    #[arg(long)]
    pub tmax: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { extent: 40.0, n: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative gap between coarse and fine memory quadratures.
    pub history: f64,
    /// Relative `L²` gap to the reference solver.
    pub oracle: f64,
    /// Line-contour against pole-plus-cut kernels.
    pub contour: f64,
    /// Boundary values against off-cut limits.
    pub plemelj: f64,
    /// Initial-time consistency.
    pub time_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            history: 1e-5,
            oracle: 1e-3,
            contour: 1e-6,
            plemelj: 1e-5,
            time_zero: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthConfig {
    pub t_max: f64,
    pub fit_from: f64,
    pub y_nodes: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            t_max: 50.0,
            fit_from: 8.0,
            y_nodes: 256,
        }
    }
}

fn default_y_nodes() -> usize {
    64
}

fn default_cut_nodes() -> usize {
    dispersion::DEFAULT_CUT_NODES
}

/// JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_y_nodes")]
    pub y_nodes: usize,
    #[serde(default = "default_cut_nodes")]
    pub cut_nodes: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub growth: GrowthConfig,
    /// Sample speeds of the decomposition; empty picks three inside the cut.
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

fn config_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err("<config>", e.to_string()))
    }

    /// Field-level checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        if !(self.grid.extent.is_finite() && self.grid.extent > 0.0) {
            return Err(config_err("grid.extent", "must be positive"));
        }
        if self.grid.n < 4 || !self.grid.n.is_power_of_two() {
            return Err(config_err("grid.n", "must be a power of two ≥ 4"));
        }
        if self.y_nodes < 2 || !self.y_nodes.is_power_of_two() {
            return Err(config_err("y_nodes", "must be a power of two ≥ 2"));
        }
        if self.growth.y_nodes < 2 || !self.growth.y_nodes.is_power_of_two() {
            return Err(config_err("growth.y_nodes", "must be a power of two ≥ 2"));
        }
        if self.cut_nodes < 2 {
            return Err(config_err("cut_nodes", "must be at least 2"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.history", t.history),
            ("tolerances.oracle", t.oracle),
            ("tolerances.contour", t.contour),
            ("tolerances.plemelj", t.plemelj),
            ("tolerances.time_zero", t.time_zero),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(name, "must be positive"));
            }
        }
        check_times("times", &self.times)?;
        if !(self.growth.t_max > 0.0 && self.growth.fit_from > 0.0 && self.growth.fit_from < self.growth.t_max) {
            return Err(config_err("growth", "need 0 < fit_from < t_max"));
        }
        self.profile.build().map_err(|e| config_err("profile", e.to_string()))?;
        Ok(())
    }
}

fn check_times(path: &str, times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(config_err(path, "times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err(path, "times must be strictly ascending"));
    }
    Ok(())
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Outcome of one named check of `validate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            pass: value <= tol,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    config: &'a RunConfig,
    artifacts: Vec<String>,
    wall_seconds: BTreeMap<String, f64>,
    status: i32,
}

/// One command run bound to a validated configuration.
pub struct Run {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    base: PathBuf,
    artifacts: Vec<String>,
    wall: BTreeMap<String, f64>,
}

impl Run {
    pub fn new(cli: &Cli) -> Result<Self> {
        let text = std::fs::read_to_string(&cli.config)
            .map_err(|e| config_err(&cli.config.display().to_string(), e.to_string()))?;
        let mut config = RunConfig::from_json(&text).map_err(|e| match e {
            Error::Config { msg, .. } => config_err(&cli.config.display().to_string(), msg),
            other => other,
        })?;
        if let Some(ts) = &cli.times {
            let parsed: std::result::Result<Vec<f64>, _> = ts
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            config.times = parsed.map_err(|e| config_err("--times", e.to_string()))?;
        }
        if let Some(t) = cli.tmax {
            config.growth.t_max = t;
        }
        if let Some(o) = &cli.out {
            config.out = Some(o.clone());
        }
        config.validate()?;
        let base = cli
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Run {
            command: cli.command,
            config,
            out,
            base,
            artifacts: Vec::new(),
            wall: BTreeMap::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.out.join(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f(self);
        self.wall.insert(stage.to_string(), start.elapsed().as_secs_f64());
        r
    }

    fn profile(&self) -> Result<VelocityProfile> {
        self.config.profile.build()
    }

    fn grid(&self) -> Result<XGrid> {
        XGrid::new(self.config.grid.extent, self.config.grid.n)
    }

    fn data(&self) -> Result<InitialData> {
        InitialData::from_spec(&self.config.data, &self.base)
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            y_nodes: self.config.y_nodes,
            history_tol: self.config.tolerances.history,
            ..SolverOptions::default()
        }
    }

    /// Kernels for a stable profile; otherwise prints the certified roots.
    fn stable_kernels(&self, profile: &VelocityProfile) -> Result<Kernels> {
        let spec = spectrum::analyze(profile)?;
        if let Verdict::Unstable { roots, count } = &spec.verdict {
            let list: Vec<String> = roots.iter().map(|(re, im)| format!("{re:+.12} {im:+.12}i")).collect();
            eprintln!("profile is unstable: {count} non-real root(s) {}", list.join(", "));
        }
        Kernels::from_spectrum(profile, spec)
    }

    /// Executes the command and writes the manifest.
    pub fn execute(&mut self) -> Result<Status> {
        std::fs::create_dir_all(&self.out)?;
        let status = match self.command {
            Command::Analyze => self.timed("analyze", |r| r.analyze()),
            Command::Spectrum => self.timed("spectrum", |r| r.spectrum()),
            Command::Solve => self.timed("solve", |r| r.solve()),
            Command::Validate => self.timed("validate", |r| r.validate()),
            Command::Decompose => self.timed("decompose", |r| r.decompose()),
            Command::Growth => self.timed("growth", |r| r.growth()),
        }?;
        let manifest = Manifest {
            tool: "ductwave",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: &self.config,
            artifacts: self.artifacts.clone(),
            wall_seconds: self.wall.clone(),
            status: status as i32,
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        write_atomic(&self.out.join("manifest.json"), &bytes)?;
        Ok(status)
    }

    fn analyze(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let report = profile.validate()?;
        let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        self.emit("classification.json", &json)?;
        let table = DispersionTable::build(&profile, self.config.cut_nodes)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        self.emit("dispersion.csv", &buf)?;
        Ok(if report.violations.is_empty() {
            Status::Ok
        } else {
            Status::ValidationFailure
        })
    }

    fn spectrum(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let spec = spectrum::analyze(&profile)?;
        let mut buf = Vec::new();
        spec.write_json(&mut buf)?;
        self.emit("spectrum.json", &buf)?;
        Ok(Status::Ok)
    }

    fn solve(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let kernels = self.stable_kernels(&profile)?;
        let solver = Solver::from_kernels(kernels, self.solver_options());
        let grid = self.grid()?;
        let data = self.data()?;
        for t in self.config.times.clone() {
            let snap = solver.full_field(&data, &grid, t, true)?;
            let mut mean = String::from("x,a_u,p\n");
            for i in 0..grid.n {
                let _ = writeln!(
                    mean,
                    "{},{},{}",
                    fmt(snap.x[i]),
                    fmt(snap.mean[i]),
                    fmt(snap.pressure[i])
                );
            }
            self.emit(&format!("mean_t{t}.csv"), mean.as_bytes())?;
            let mut field = String::from("x,y,u\n");
            for (j, row) in snap.u.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    let _ = writeln!(field, "{},{},{}", fmt(snap.x[i]), fmt(snap.y[j]), fmt(*v));
                }
            }
            self.emit(&format!("field_t{t}.csv"), field.as_bytes())?;
        }
        Ok(Status::Ok)
    }

    fn validate(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let kernels = self.stable_kernels(&profile)?;
        let tol = self.config.tolerances;
        let mut checks = Vec::new();
        // Contour deformation at a few (kt, y).
        let mut worst = 0.0f64;
        for &kt in &[0.5, 2.0, 8.0] {
            for &y in &[-0.5, 0.1, 0.7] {
                for l in 0..=1 {
                    let a = kernels.kernel(l, kt, y)?;
                    let b = kernels::line_kernel(&profile, l, kt, y, kernels::line_height(kt))?;
                    worst = worst.max((a - b).norm() / b.norm().max(1.0));
                }
            }
        }
        checks.push(Check::new("contour_deformation", worst, tol.contour));
        // Boundary values against off-cut limits.
        let (lo, hi) = profile.range();
        let mut worst = 0.0f64;
        for f in [0.2, 0.45, 0.8] {
            let l = lo + f * (hi - lo);
            let b = dispersion::boundary_value(&profile, l)?;
            let off = dispersion::eval_n(&profile, Complex64::new(l, 1e-7))?;
            worst = worst.max((b.n - off).norm());
        }
        checks.push(Check::new("plemelj_limit", worst, tol.plemelj));
        let solver = Solver::from_kernels(kernels, self.solver_options());
        let grid = self.grid()?;
        let data = self.data()?;
        // Initial-time consistency.
        let snap0 = solver.full_field(&data, &grid, 0.0, true)?;
        let oracle = Oracle::new(
            &profile,
            OracleOptions {
                y_nodes: self.config.y_nodes,
                ..OracleOptions::default()
            },
        );
        let ref0 = oracle.solve_reference(&data, &grid, 0.0)?;
        checks.push(Check::new(
            "time_zero_mean",
            max_diff(&snap0.mean, &ref0.mean),
            tol.time_zero,
        ));
        let du = snap0
            .u
            .iter()
            .zip(&ref0.u)
            .map(|(a, b)| max_diff(a, b))
            .fold(0.0, f64::max);
        checks.push(Check::new("time_zero_field", du, tol.time_zero));
        // Reference-solver equivalence.
        let times: Vec<f64> = if self.config.times.is_empty() {
            vec![0.5, 1.0, 2.0]
        } else {
            self.config.times.clone()
        };
        let refs = oracle.solve_many(&data, &grid, &times)?;
        for (r, &t) in refs.iter().zip(&times) {
            let s = solver.full_field(&data, &grid, t, true)?;
            checks.push(Check::new(
                format!("oracle_mean_t{t}"),
                rel_l2(&s.mean, &r.mean),
                tol.oracle,
            ));
            checks.push(Check::new(
                format!("oracle_field_t{t}"),
                rel_l2_rows(&s.u, &r.u),
                tol.oracle,
            ));
        }
        for c in &checks {
            println!(
                "{} {}: {:.3e} (tol {:.1e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tol
            );
        }
        let json = serde_json::to_vec_pretty(&checks).map_err(|e| Error::Io(e.to_string()))?;
        self.emit("validate.json", &json)?;
        Ok(if checks.iter().all(|c| c.pass) {
            Status::Ok
        } else {
            Status::ValidationFailure
        })
    }

    fn decompose(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let kernels = self.stable_kernels(&profile)?;
        let solver = Solver::from_kernels(kernels, self.solver_options());
        let grid = self.grid()?;
        let data = self.data()?;
        let (lo, hi) = profile.range();
        let lambdas = if self.config.lambdas.is_empty() {
            vec![lo + 0.25 * (hi - lo), lo + 0.5 * (hi - lo), lo + 0.75 * (hi - lo)]
        } else {
            self.config.lambdas.clone()
        };
        for t in self.config.times.clone() {
            let dec = solver
                .transport_decomposition(&data, &grid, t, &lambdas)
                .map_err(|e| match e {
                    Error::UnsupportedDecomposition(m) => config_err("data.u1", m),
                    other => other,
                })?;
            let mut parts: Vec<(String, &Vec<f64>)> = vec![
                ("pole".into(), &dec.pole),
                ("spread".into(), &dec.spread),
                ("local".into(), &dec.local),
            ];
            for (c, v) in &dec.samples {
                parts.push((c.label(), v));
            }
            for (label, v) in parts {
                let mut s = String::from("x,value\n");
                for (x, a) in dec.x.iter().zip(v) {
                    let _ = writeln!(s, "{},{}", fmt(*x), fmt(*a));
                }
                self.emit(&format!("decompose_t{t}_{label}.csv"), s.as_bytes())?;
            }
        }
        Ok(Status::Ok)
    }

    fn growth(&mut self) -> Result<Status> {
        let profile = self.profile()?;
        let grid = self.grid()?;
        let data = self.data()?;
        let g = self.config.growth;
        let oracle = Oracle::new(
            &profile,
            OracleOptions {
                y_nodes: g.y_nodes,
                ..OracleOptions::default()
            },
        );
        let report = oracle.growth_probe(&data, &grid, g.t_max, g.fit_from)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        self.emit("norms.csv", &buf)?;
        let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        self.emit("growth.json", &json)?;
        Ok(Status::Ok)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖a − b‖/‖b‖` in discrete `L²`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

/// Relative `L²` gap over all rows.
pub fn rel_l2_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut d = 0.0;
    let mut n = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            d += (x - y).powi(2);
            n += y * y;
        }
    }
    (d / n).sqrt()
}

/// Exit status for an error.
pub fn status_of(e: &Error) -> Status {
    match e {
        Error::Config { .. } | Error::InvalidProfile(_) | Error::UnsupportedDecomposition(_) => Status::ConfigError,
        Error::NotStable(_) => Status::Unstable,
        _ => Status::ValidationFailure,
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with(cli: Cli) -> i32 {
    let status = Run::new(&cli).and_then(|mut r| r.execute());
    match status {
        Ok(s) => s as i32,
        Err(e) => {
            eprintln!("error: {e}");
            status_of(&e) as i32
        }
    }
}

/// Default configuration used by examples and tests: `M(y) = e^y` and a
/// unit Gaussian packet.
pub fn example_config() -> RunConfig {
    RunConfig {
        profile: ProfileSpec::Exp { a: 1.0, b: 0.0 },
        grid: GridConfig::default(),
        y_nodes: default_y_nodes(),
        cut_nodes: default_cut_nodes(),
        tolerances: Tolerances::default(),
        data: DataSpec::Packets(crate::data::AnalyticFamily {
            u0: vec![Packet::gaussian(1.0, 0.0, 1.0)],
            u1: vec![],
        }),
        times: vec![],
        out: None,
        growth: GrowthConfig::default(),
        lambdas: vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_fields() {
        let c = RunConfig::from_json(r#"{"profile":{"type":"exp","a":1.0}}"#).unwrap();
        assert_eq!(c.grid.n, 1024);
        assert_eq!(c.y_nodes, 64);
        c.validate().unwrap();
        let e = RunConfig::from_json(r#"{"profile":{"type":"exp","a":1.0},"gird":{}}"#).unwrap_err();
        assert!(e.to_string().contains("gird"), "{e}");
    }

    #[test]
    fn config_field_paths() {
        let mut c = example_config();
        c.grid.n = 1000;
        assert!(c.validate().unwrap_err().to_string().contains("grid.n"));
        let mut c = example_config();
        c.times = vec![1.0, 0.5];
        assert!(c.validate().unwrap_err().to_string().contains("times"));
        let mut c = example_config();
        c.tolerances.oracle = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("tolerances.oracle"));
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"x\n").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"x\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        let s = fmt(1.0 / 3.0);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }
}
