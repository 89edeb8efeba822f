//! Command-line driver: JSON run configuration, per-volume commands and
//! deterministic CSV/JSON output.

use crate::canonical::build_canonical_with;
use crate::error::Error;
use crate::grandcanonical::{
    critical_density, gc_density, gc_laplace_finite, gc_laplace_limit, gc_occupation_limit,
    limiting_mu_bar, mean_occupation, solve_mu_with, GcLimitModel, SolverOptions,
};
use crate::kac::{decomposition_check, kac_table, kac_weights, limiting_kac_laplace};
use crate::limits::{
    canonical_laplace_typeiii, canonical_typei_laplace, canonical_typei_mean, canonical_typeiii_mean,
    fluctuation_convergence_check, g_function, typeii_ladder_laplace, typeii_ladder_occupation,
};
use crate::numeric::fmt_sci;
use crate::spectrum::{
    enumerate_below, ids, ids_bounds, ids_bounds_threshold, ids_limit, spectrum_for_tolerance,
    BoxGeometry, Mode, RegimeLabel, SpectrumTable,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "bosebox", version, about = "Ideal Bose gas in anisotropic boxes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and integrated density of states.
    Spectrum(SpectrumArgs),
    /// Grand-canonical chemical potential, occupations and transforms.
    Gc(CommonArgs),
    /// Canonical occupations at n = round(ρV).
    Canonical(CommonArgs),
    /// Kac weights and the ensemble decomposition check.
    Kac(CommonArgs),
    /// Infinite-volume limit laws of both ensembles.
    Limits(CommonArgs),
    /// Ground-state fluctuation transforms against their limit law.
    Fluct(CommonArgs),
    /// Run `sweep.command` over the volume grid.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (written atomically); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// key=value, with dotted keys into the configuration.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// List every mode with energy at most this value.
    #[arg(long)]
    pub emax: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoScale {
    /// `rho` is the density itself.
    #[default]
    Absolute,
    /// `rho` is a multiple of ρ_c(β).
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepCommand {
    Spectrum,
    Gc,
    #[default]
    Canonical,
    Kac,
    Fluct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub alphas: [f64; 3],
    #[serde(default)]
    pub volume: Option<f64>,
    #[serde(default)]
    pub volume_sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub geometric_sweep: Option<GeometricGrid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cutoffs {
    pub energy_tail_tol: f64,
    #[serde(alias = "series_M")]
    pub series_m: usize,
    pub n_max: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            energy_tail_tol: 1e-12,
            series_m: 1000,
            n_max: 50_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub emax: Option<f64>,
    /// Number of lowest modes listed when no emax is given.
    pub modes: usize,
    pub eta_grid: Vec<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            emax: None,
            modes: 10,
            eta_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KacConfig {
    /// Decomposition checked for the lowest `modes` modes.
    pub modes: usize,
    pub tail_tol: f64,
}

impl Default for KacConfig {
    fn default() -> Self {
        Self {
            modes: 5,
            tail_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    /// Ladder modes (n,1,1), n = 1..=ladder.
    pub ladder: u32,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { ladder: 3 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub command: SweepCommand,
}

fn one() -> f64 {
    1.0
}

fn ground() -> [u32; 3] {
    [1, 1, 1]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.1, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "one")]
    pub beta: f64,
    pub rho: f64,
    #[serde(default)]
    pub rho_scale: RhoScale,
    #[serde(default = "ground")]
    pub mode: [u32; 3],
    #[serde(default = "default_lambdas")]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub kac: KacConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(e) if e.is_numerical() => 3,
            CliError::Numeric(_) => 2,
            CliError::NonFinite(_) => 3,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// One output line. Absent inputs are empty cells (null in JSON).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub command: &'static str,
    pub alphas: [f64; 3],
    pub volume: Option<f64>,
    pub beta: f64,
    pub rho: f64,
    pub mode: Option<Mode>,
    pub lambda: Option<f64>,
    pub n: Option<usize>,
    /// Abscissa for tabulated functions (η for the IDS).
    pub x: Option<f64>,
    pub quantity: String,
    pub value: f64,
    pub error_budget: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "command",
    "alphas",
    "volume",
    "beta",
    "rho",
    "mode",
    "lambda",
    "n",
    "x",
    "quantity",
    "value",
    "error_budget",
];

impl ResultRow {
    fn cells(&self) -> [Option<String>; 12] {
        let alphas = self.alphas.iter().map(|a| fmt_sci(*a)).collect::<Vec<_>>().join(";");
        [
            Some(self.command.to_string()),
            Some(alphas),
            self.volume.map(fmt_sci),
            Some(fmt_sci(self.beta)),
            Some(fmt_sci(self.rho)),
            self.mode.map(|m| m.to_string()),
            self.lambda.map(fmt_sci),
            self.n.map(|n| n.to_string()),
            self.x.map(fmt_sci),
            Some(self.quantity.clone()),
            Some(fmt_sci(self.value)),
            Some(fmt_sci(self.error_budget)),
        ]
    }
}

pub fn to_csv(rows: &[ResultRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.cells().iter().map(|c| c.as_deref().unwrap_or("")))
            .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

pub fn to_json(rows: &[ResultRow]) -> Vec<u8> {
    // numbers keep the CSV formatting; strings go through serde_json for escaping
    let numeric = [2, 3, 4, 6, 7, 8, 10, 11];
    let mut out = String::from("[");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
        for (j, (name, cell)) in CSV_HEADER.iter().zip(r.cells()).enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let v = match cell {
                None => "null".to_string(),
                Some(c) if numeric.contains(&j) => c,
                Some(c) => serde_json::to_string(&c).expect("string serialization"),
            };
            out.push_str(&format!("\"{name}\": {v}"));
        }
        out.push('}');
    }
    out.push_str(if rows.is_empty() { "]\n" } else { "\n]\n" });
    out.into_bytes()
}

fn set_path(root: &mut serde_json::Value, key: &str, value: serde_json::Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        if p.is_empty() {
            return Err(CliError::Config(format!("override key '{key}' has an empty segment")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{p}' is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(p.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Reads the configuration file (if any) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let cfg = if overrides.is_empty() {
        serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        let mut v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            let (k, val) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override '{o}' is not key=value")))?;
            let parsed = serde_json::from_str(val).unwrap_or_else(|_| serde_json::Value::String(val.into()));
            set_path(&mut v, k.trim(), parsed)?;
        }
        serde_json::from_value::<RunConfig>(v).map_err(|e| CliError::Config(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta: must be positive, got {}", self.beta));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho: must be positive, got {}", self.rho));
        }
        if !(self.cutoffs.energy_tail_tol > 0.0) {
            return bad("cutoffs.energy_tail_tol: must be positive".into());
        }
        if self.cutoffs.series_m < 2 || self.cutoffs.n_max < 1 {
            return bad("cutoffs.series_m and cutoffs.n_max must be positive".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver.tol and solver.max_iter must be positive".into());
        }
        if !(self.kac.tail_tol > 0.0) {
            return bad("kac.tail_tol: must be positive".into());
        }
        if self.lambda_grid.iter().any(|l| !l.is_finite()) {
            return bad("lambda_grid: entries must be finite".into());
        }
        Mode::new(self.mode).map_err(|e| CliError::Config(format!("mode: {e}")))?;
        for v in self.volumes()? {
            BoxGeometry::new(self.geometry.alphas, v)
                .map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        }
        Ok(())
    }

    pub fn volumes(&self) -> CliResult<Vec<f64>> {
        let g = &self.geometry;
        let given = [g.volume.is_some(), g.volume_sweep.is_some(), g.geometric_sweep.is_some()];
        if given.iter().filter(|&&b| b).count() != 1 {
            return Err(CliError::Config(
                "geometry: give exactly one of volume, volume_sweep, geometric_sweep".into(),
            ));
        }
        let vs = if let Some(v) = g.volume {
            vec![v]
        } else if let Some(vs) = &g.volume_sweep {
            vs.clone()
        } else {
            let s = g.geometric_sweep.as_ref().expect("checked above");
            if s.points == 0 || !(s.from > 0.0 && s.to > 0.0) {
                return Err(CliError::Config("geometry.geometric_sweep: need positive from, to, points".into()));
            }
            if s.points == 1 {
                vec![s.from]
            } else {
                let r = (s.to / s.from).ln() / (s.points - 1) as f64;
                (0..s.points).map(|i| s.from * (r * i as f64).exp()).collect()
            }
        };
        if vs.is_empty() || vs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Config("geometry: volumes must be positive".into()));
        }
        Ok(vs)
    }

    /// The density in absolute units.
    pub fn rho_abs(&self) -> CliResult<f64> {
        Ok(match self.rho_scale {
            RhoScale::Absolute => self.rho,
            RhoScale::Critical => self.rho * critical_density(self.beta)?.value,
        })
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }
}

/// Shared per-run inputs.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    rho: f64,
    emax: Option<f64>,
}

impl Ctx<'_> {
    fn row(&self, command: &'static str, volume: Option<f64>, quantity: &str, value: f64, budget: f64) -> ResultRow {
        ResultRow {
            command,
            alphas: self.cfg.geometry.alphas,
            volume,
            beta: self.cfg.beta,
            rho: self.rho,
            mode: None,
            lambda: None,
            n: None,
            x: None,
            quantity: quantity.to_string(),
            value,
            error_budget: budget,
        }
    }

    fn geometry(&self, v: f64) -> CliResult<BoxGeometry> {
        BoxGeometry::new(self.cfg.geometry.alphas, v).map_err(|e| CliError::Config(format!("geometry: {e}")))
    }

    fn mode(&self) -> Mode {
        Mode(self.cfg.mode)
    }
}

fn with<F: FnOnce(&mut ResultRow)>(mut r: ResultRow, f: F) -> ResultRow {
    f(&mut r);
    r
}

fn mode_index(table: &SpectrumTable, mode: Mode) -> CliResult<usize> {
    table.index_of(mode).ok_or_else(|| {
        CliError::Config(format!("mode {mode} lies above the spectral cutoff; lower it or raise the tolerance"))
    })
}

/// V for types I/II, V^{2(1−α₁)} for type III.
fn occupation_scale(g: &BoxGeometry) -> f64 {
    match g.regime() {
        RegimeLabel::TypeIII => g.volume().powf(2.0 * (1.0 - g.alpha()[0])),
        _ => g.volume(),
    }
}

/// Modes with energy ≤ e, or the `count` lowest modes.
fn lowest_modes(g: &BoxGeometry, count: usize) -> CliResult<SpectrumTable> {
    let mut e = 2.0 * g.ground_energy();
    loop {
        let t = enumerate_below(g, e)?;
        if t.len() >= count {
            return Ok(t);
        }
        e *= 1.5;
    }
}

fn cmd_spectrum(ctx: &Ctx, v: f64) -> CliResult<Vec<ResultRow>> {
    const C: &str = "spectrum";
    let g = ctx.geometry(v)?;
    let mut rows = Vec::new();
    let emax = ctx.emax.or(ctx.cfg.spectrum.emax);
    let (table, take) = match emax {
        Some(e) if e < g.ground_energy() => {
            eprintln!(
                "warning: emax = {e} lies below the ground energy {} at V = {v}; no modes listed",
                g.ground_energy()
            );
            (None, 0)
        }
        Some(e) => {
            let t = enumerate_below(&g, e)?;
            let n = t.len();
            (Some(t), n)
        }
        None => (Some(lowest_modes(&g, ctx.cfg.spectrum.modes)?), ctx.cfg.spectrum.modes),
    };
    if let Some(t) = table {
        for i in 0..take.min(t.len()) {
            let e = t.energy(i);
            rows.push(with(ctx.row(C, Some(v), "eigenvalue", e, 4.0 * f64::EPSILON * e), |r| {
                r.mode = t.mode(i)
            }));
        }
    }
    let th = ids_bounds_threshold(&g);
    rows.push(ctx.row(C, Some(v), "ids_bounds_threshold", th, 0.0));
    for &eta in &ctx.cfg.spectrum.eta_grid {
        if eta < 0.0 {
            return Err(CliError::Config(format!("spectrum.eta_grid: negative entry {eta}")));
        }
        let b = ids_bounds(&g, eta);
        let at = |q: &str, val: f64| with(ctx.row(C, Some(v), q, val, 0.0), |r| r.x = Some(eta));
        rows.push(at("ids", ids(&g, eta)));
        rows.push(at("ids_lower", b.lower));
        rows.push(at("ids_upper", b.upper));
        rows.push(at("ids_limit", ids_limit(eta)?));
    }
    Ok(rows)
}

fn cmd_gc(ctx: &Ctx, v: f64) -> CliResult<Vec<ResultRow>> {
    const C: &str = "gc";
    let cfg = ctx.cfg;
    let g = ctx.geometry(v)?;
    let regime = g.regime();
    let beta = cfg.beta;
    let rho = ctx.rho;
    let table = spectrum_for_tolerance(&g, beta, cfg.cutoffs.energy_tail_tol)?;
    let sol = solve_mu_with(&table, rho, beta, cfg.solver_options())?;
    let rc = critical_density(beta)?;
    let k = mode_index(&table, ctx.mode())?;
    let scale = occupation_scale(&g);
    // the mode cannot move by more than the total particle number
    let rel = sol.residual + sol.tail_bound / rho;
    let occ_budget = rel * rho * v / scale;
    // density error pushed through the slope dρ/dμ̄
    let h = 1e-6 * sol.mu_bar.abs();
    let slope = (gc_density(&table, sol.mu_bar + 0.5 * h, beta)? - gc_density(&table, sol.mu_bar - 0.5 * h, beta)?) / h;
    let mu_budget = rel * rho / slope.abs() + 4.0 * f64::EPSILON * sol.mu_bar.abs();
    let mut rows = vec![
        ctx.row(C, Some(v), "rho_c", rc.value, rc.quadrature_error),
        ctx.row(C, Some(v), "mu_bar", sol.mu_bar, mu_budget),
        ctx.row(C, Some(v), "mu", sol.mu, mu_budget + 4.0 * f64::EPSILON * sol.mu.abs()),
        ctx.row(C, Some(v), "gc_density", gc_density(&table, sol.mu_bar, beta)?, rel * rho),
    ];
    let lim_mu = if rho >= rc.value { 0.0 } else { limiting_mu_bar(rho, beta)? };
    rows.push(ctx.row(C, Some(v), "limiting_mu_bar", lim_mu, rc.quadrature_error));
    let occ = mean_occupation(&table, sol.mu_bar, k, beta)? / scale;
    let m = ctx.mode();
    rows.push(with(ctx.row(C, Some(v), "occupation_scaled", occ, occ_budget), |r| r.mode = Some(m)));
    let model = GcLimitModel::new(rho, beta, regime)?;
    let a_budget = model.a.map_or(0.0, |a| a.residual + a.tail_bound);
    rows.push(with(
        ctx.row(C, Some(v), "occupation_limit", gc_occupation_limit(&model, regime, m)?, a_budget),
        |r| r.mode = Some(m),
    ));
    for &lam in &cfg.lambda_grid {
        let f = gc_laplace_finite(&table, sol.mu_bar, k, lam / scale, beta)?;
        rows.push(with(ctx.row(C, Some(v), "laplace_scaled", f, lam.abs() * occ_budget), |r| {
            r.mode = Some(m);
            r.lambda = Some(lam);
        }));
        if model.condensed() {
            let l = gc_laplace_limit(&model, regime, m, lam)?;
            rows.push(with(ctx.row(C, Some(v), "laplace_limit", l, lam.abs() * a_budget), |r| {
                r.mode = Some(m);
                r.lambda = Some(lam);
            }));
        }
    }
    Ok(rows)
}

fn particle_number(ctx: &Ctx, v: f64) -> CliResult<usize> {
    let n = (ctx.rho * v).round();
    if n < 1.0 {
        return Err(CliError::Config(format!("rho*V = {} rounds to zero particles", ctx.rho * v)));
    }
    let n = n as usize;
    if n > ctx.cfg.cutoffs.n_max {
        return Err(CliError::Config(format!(
            "cutoffs.n_max = {} is below n = round(rho*V) = {n} at V = {v}",
            ctx.cfg.cutoffs.n_max
        )));
    }
    Ok(n)
}

/// Canonical limit of the scaled occupation of `m` and its budget.
fn canonical_limit(ctx: &Ctx, model: &GcLimitModel, regime: RegimeLabel, m: Mode) -> CliResult<(f64, f64)> {
    Ok(match regime {
        RegimeLabel::TypeI => (canonical_typei_mean(model, m), 0.0),
        RegimeLabel::TypeIII => (canonical_typeiii_mean(model, m), 0.0),
        RegimeLabel::TypeII => {
            if !model.condensed() || !m.is_ladder() {
                (0.0, 0.0)
            } else {
                let l = typeii_ladder_occupation(m.0[0] as usize, model.rho, model.rho_c, model.beta, ctx.cfg.cutoffs.series_m)?;
                (l.value, l.truncation)
            }
        }
    })
}

fn canonical_laplace_limit(ctx: &Ctx, model: &GcLimitModel, regime: RegimeLabel, m: Mode, lam: f64) -> CliResult<(f64, f64)> {
    Ok(match regime {
        RegimeLabel::TypeI => (canonical_typei_laplace(model, m, lam), 0.0),
        RegimeLabel::TypeIII => (canonical_laplace_typeiii(model, m, lam)?, 0.0),
        RegimeLabel::TypeII => {
            if !model.condensed() || !m.is_ladder() {
                (1.0, 0.0)
            } else {
                let l = typeii_ladder_laplace(m.0[0] as usize, lam, model.rho, model.rho_c, model.beta, ctx.cfg.cutoffs.series_m)?;
                (l.value, l.truncation)
            }
        }
    })
}

fn cmd_canonical(ctx: &Ctx, v: f64) -> CliResult<Vec<ResultRow>> {
    const C: &str = "canonical";
    let cfg = ctx.cfg;
    let g = ctx.geometry(v)?;
    let regime = g.regime();
    let beta = cfg.beta;
    let n = particle_number(ctx, v)?;
    let table = Arc::new(spectrum_for_tolerance(&g, beta, cfg.cutoffs.energy_tail_tol)?);
    let k = mode_index(&table, ctx.mode())?;
    let ct = build_canonical_with(table, beta, n, cfg.cutoffs.energy_tail_tol)?;
    let scale = occupation_scale(&g);
    let m = ctx.mode();
    let budget = ct.s1_tail() * n as f64 / scale;
    let at = |q: &str, val: f64, b: f64| {
        with(ctx.row(C, Some(v), q, val, b), |r| {
            r.mode = Some(m);
            r.n = Some(n);
        })
    };
    let mut rows = vec![
        at("occupation_scaled", ct.mean_occupation(k, n)? / scale, budget),
        at("second_moment_scaled", ct.occupation_moment(k, n, 2)? / (scale * scale), budget * n as f64 / scale),
        with(ctx.row(C, Some(v), "ground_occupation_density", ct.mean_occupation(0, n)? / v, ct.s1_tail() * n as f64 / v), |r| {
            r.mode = Some(Mode::GROUND);
            r.n = Some(n);
        }),
    ];
    let model = GcLimitModel::new(ctx.rho, beta, regime)?;
    let (lim, lb) = canonical_limit(ctx, &model, regime, m)?;
    rows.push(at("occupation_limit", lim, lb));
    for &lam in &cfg.lambda_grid {
        let f = ct.occupation_laplace(k, n, lam / scale)?;
        rows.push(with(at("laplace_scaled", f, lam.abs() * budget), |r| r.lambda = Some(lam)));
        if model.condensed() {
            let (l, b) = canonical_laplace_limit(ctx, &model, regime, m, lam)?;
            rows.push(with(at("laplace_limit", l, b), |r| r.lambda = Some(lam)));
        }
    }
    Ok(rows)
}

fn cmd_kac(ctx: &Ctx, v: f64) -> CliResult<Vec<ResultRow>> {
    const C: &str = "kac";
    let cfg = ctx.cfg;
    let g = ctx.geometry(v)?;
    let regime = g.regime();
    let beta = cfg.beta;
    let (ct, mu_bar) = kac_table(&g, ctx.rho, beta, cfg.cutoffs.energy_tail_tol, cfg.kac.tail_tol, cfg.cutoffs.n_max)?;
    let kw = kac_weights(&ct, mu_bar, cfg.kac.tail_tol)?;
    let tail = kw.tail_bound;
    let mut rows = vec![
        with(ctx.row(C, Some(v), "kac_mass", kw.mass(), tail), |r| r.n = Some(kw.n_cut())),
        with(ctx.row(C, Some(v), "kac_mean_density", kw.mean_density(), kw.tail_bound_weighted(1e-3) / 1e-3 / v), |r| {
            r.n = Some(kw.n_cut())
        }),
        ctx.row(C, Some(v), "gc_density", gc_density(ct.spectrum(), mu_bar, beta)?, 0.0),
    ];
    let modes = cfg.kac.modes.min(ct.spectrum().len());
    for k in 0..modes {
        let m = ct.spectrum().mode(k);
        for &lam in &cfg.lambda_grid {
            let c = decomposition_check(&ct, &kw, k, lam)?;
            let b = 1e-10 + c.tail_bound;
            for (q, val) in [("decomposition_lhs", c.lhs), ("decomposition_rhs", c.rhs)] {
                rows.push(with(ctx.row(C, Some(v), q, val, b), |r| {
                    r.mode = m;
                    r.lambda = Some(lam);
                }));
            }
        }
    }
    let model = GcLimitModel::new(ctx.rho, beta, regime)?;
    for &lam in &cfg.lambda_grid {
        let f = kw.laplace(lam);
        rows.push(with(ctx.row(C, Some(v), "kac_laplace", f, kw.tail_bound_weighted((-lam / v).max(0.0))), |r| {
            r.lambda = Some(lam)
        }));
        rows.push(with(ctx.row(C, Some(v), "kac_laplace_limit", limiting_kac_laplace(&model, regime, lam)?, 0.0), |r| {
            r.lambda = Some(lam)
        }));
    }
    Ok(rows)
}

fn cmd_limits(ctx: &Ctx) -> CliResult<Vec<ResultRow>> {
    const C: &str = "limits";
    let cfg = ctx.cfg;
    let regime = RegimeLabel::from_alpha(cfg.geometry.alphas);
    let beta = cfg.beta;
    let rc = critical_density(beta)?;
    let model = GcLimitModel::new(ctx.rho, beta, regime)?;
    let mut rows = vec![ctx.row(C, None, "rho_c", rc.value, rc.quadrature_error)];
    let a_budget = model.a.map_or(0.0, |a| a.residual + a.tail_bound);
    if let Some(a) = model.a {
        rows.push(ctx.row(C, None, "A", a.value, a_budget));
    }
    for n1 in 1..=cfg.limits.ladder.max(1) {
        let m = Mode::ladder(n1);
        let (cv, cb) = canonical_limit(ctx, &model, regime, m)?;
        rows.push(with(ctx.row(C, None, "canonical_occupation_limit", cv, cb), |r| r.mode = Some(m)));
        let gv = gc_occupation_limit(&model, regime, m)?;
        rows.push(with(ctx.row(C, None, "gc_occupation_limit", gv, a_budget), |r| r.mode = Some(m)));
        if model.condensed() {
            for &lam in &cfg.lambda_grid {
                let (cl, clb) = canonical_laplace_limit(ctx, &model, regime, m, lam)?;
                rows.push(with(ctx.row(C, None, "canonical_laplace_limit", cl, clb), |r| {
                    r.mode = Some(m);
                    r.lambda = Some(lam);
                }));
                let gl = gc_laplace_limit(&model, regime, m, lam)?;
                rows.push(with(ctx.row(C, None, "gc_laplace_limit", gl, lam.abs() * a_budget), |r| {
                    r.mode = Some(m);
                    r.lambda = Some(lam);
                }));
            }
        }
    }
    for &lam in &cfg.lambda_grid {
        let k = limiting_kac_laplace(&model, regime, lam)?;
        rows.push(with(ctx.row(C, None, "kac_laplace_limit", k, 0.0), |r| r.lambda = Some(lam)));
    }
    Ok(rows)
}

fn cmd_fluct(ctx: &Ctx, v: f64) -> CliResult<Vec<ResultRow>> {
    const C: &str = "fluct";
    let cfg = ctx.cfg;
    let g = ctx.geometry(v)?;
    if !(g.alpha()[0] < 0.5) {
        return Err(CliError::Config("fluct: needs alphas[0] < 1/2".into()));
    }
    let n = particle_number(ctx, v)?;
    let rows_in = fluctuation_convergence_check(&[g], ctx.rho, &cfg.lambda_grid, cfg.beta, cfg.cutoffs.energy_tail_tol)?;
    let mut rows = Vec::new();
    if let Some(first) = rows_in.first() {
        rows.push(with(ctx.row(C, Some(v), "rho_c_finite", first.rho_c_finite, first.rho_c_tail), |r| {
            r.n = Some(n)
        }));
        rows.push(with(ctx.row(C, Some(v), "centered_mean", first.centered_mean, 0.0), |r| {
            r.mode = Some(Mode::GROUND);
            r.n = Some(n);
        }));
    }
    for fr in &rows_in {
        let at = |q: &str, val: f64, b: f64| {
            with(ctx.row(C, Some(v), q, val, b), |r| {
                r.mode = Some(Mode::GROUND);
                r.lambda = Some(fr.lambda);
                r.n = Some(fr.n);
            })
        };
        rows.push(at("fluct_finite", fr.finite, 0.0));
        rows.push(at("fluct_law", fr.law, fr.law_tail));
        rows.push(at("fluct_gap", fr.gap, fr.law_tail));
    }
    for &lam in &cfg.lambda_grid {
        for d in 1..=3 {
            let gv = g_function(d, lam, cfg.beta)?;
            rows.push(with(ctx.row(C, Some(v), &format!("g{d}"), gv.value, gv.tail_bound), |r| {
                r.lambda = Some(lam)
            }));
        }
    }
    Ok(rows)
}

/// Runs a per-volume command over the configured volumes, in parallel,
/// keeping volume order.
fn per_volume(ctx: &Ctx, f: fn(&Ctx, f64) -> CliResult<Vec<ResultRow>>) -> CliResult<Vec<ResultRow>> {
    let vs = ctx.cfg.volumes()?;
    let parts: Vec<CliResult<Vec<ResultRow>>> = vs.par_iter().map(|&v| f(ctx, v)).collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

/// Rows for a subcommand with an already-loaded configuration.
pub fn run(command: &Command, cfg: &RunConfig) -> CliResult<Vec<ResultRow>> {
    let emax = match command {
        Command::Spectrum(a) => a.emax,
        _ => None,
    };
    let ctx = Ctx {
        cfg,
        rho: cfg.rho_abs()?,
        emax,
    };
    let rows = match command {
        Command::Spectrum(_) => per_volume(&ctx, cmd_spectrum)?,
        Command::Gc(_) => per_volume(&ctx, cmd_gc)?,
        Command::Canonical(_) => per_volume(&ctx, cmd_canonical)?,
        Command::Kac(_) => per_volume(&ctx, cmd_kac)?,
        Command::Limits(_) => cmd_limits(&ctx)?,
        Command::Fluct(_) => per_volume(&ctx, cmd_fluct)?,
        Command::Sweep(_) => per_volume(
            &ctx,
            match cfg.sweep.command {
                SweepCommand::Spectrum => cmd_spectrum,
                SweepCommand::Gc => cmd_gc,
                SweepCommand::Canonical => cmd_canonical,
                SweepCommand::Kac => cmd_kac,
                SweepCommand::Fluct => cmd_fluct,
            },
        )?,
    };
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite() || !r.error_budget.is_finite()) {
        return Err(CliError::NonFinite(r.quantity.clone()));
    }
    Ok(rows)
}

fn common(command: &Command) -> &CommonArgs {
    match command {
        Command::Spectrum(a) => &a.common,
        Command::Gc(a)
        | Command::Canonical(a)
        | Command::Kac(a)
        | Command::Limits(a)
        | Command::Fluct(a)
        | Command::Sweep(a) => a,
    }
}

/// Writes via a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let args = common(&cli.command);
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let rows = run(&cli.command, &cfg)?;
    let format = args.format.unwrap_or(cfg.output.format);
    let bytes = match format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows),
    };
    match args.out.as_ref().or(cfg.output.path.as_ref()) {
        Some(p) => write_atomic(p, &bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
