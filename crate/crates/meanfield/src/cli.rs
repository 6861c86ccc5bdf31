//! Command-line surface: every module exposed as a subcommand with a flat
//! key=value config file, flag overrides (flags win), JSON summaries on
//! stdout and CSV/binary artifacts in an optional output directory.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure. Output
//! directories are only created after validation and computation succeed
//! (partial run directories would poison reproducibility), with one
//! deliberate exception: a stuck continuation still writes the states it
//! converged, because those are the valuable part of the run.
//!
//! Intensities for the torus commands are given in units of π
//! (`--rho1-over-pi 12`): the thresholds of interest are rational multiples
//! of π and configs should not carry transcendental literals. The limit
//! profile commands `shoot` and `sweep` take plain values instead — their
//! equation has no π-quantized structure, and the natural normalizations
//! there (ρ₁ + ρ₂ = 2) would turn into transcendental ratios.

use crate::bubble::{
    build_bubble, fit_log_slope, geometric_ladder, separated_barycenter,
    verify_gradient_estimate, verify_volume_estimates, BubbleError, BubbleSpec,
};
use crate::field::{FieldError, TorusField, TorusGrid};
use crate::functional::{
    improved_mt_family_test, ladder_totals, write_family_csv, FunctionalError, Weights,
};
use crate::mass::{
    admissible_eta_interval, classify_local_mass, min_mass_rho2, pohozaev_residual,
    sharp_threshold, solve_gamma_m, Atom, AtomicIntensity, BlowupType, IntensityParam, MassError,
    MassPair, RhoPair,
};
use crate::shooting::{
    limit_mass, shoot, sweep_eta, verify_pohozaev, ShootError, ShootParams, SweepStatus,
};
use crate::solver::{
    blowup_diagnostics, classify_blowup, continuation_run, newton_solve, persist_run,
    write_diagnostics_csv, SolutionRecord, SolveConfig, SolverError,
};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<MassError> for CliError {
    fn from(e: MassError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BubbleError> for CliError {
    fn from(e: BubbleError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FunctionalError> for CliError {
    fn from(e: FunctionalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ShootError> for CliError {
    fn from(e: ShootError) -> Self {
        match e {
            ShootError::InvalidParam { .. } | ShootError::WindowOutOfRange { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::ResidualTol(_) | SolverError::BallRadius { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("io: {e}"))
    }
}

/// Flat key=value config file. Blank lines and `#` comments are skipped,
/// whitespace around keys and values is trimmed, later duplicates win.
/// Keys a subcommand does not know are rejected (typos must not silently
/// change a run).
struct ConfigMap {
    values: HashMap<String, String>,
}

impl ConfigMap {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Validation(format!("config {}: {e}", path.display()))
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::Validation(format!(
                        "config {}:{}: expected key=value, got `{line}`",
                        path.display(),
                        lineno + 1
                    )));
                };
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Validation(format!("config key `{key}` = `{raw}`: {e}"))
            }),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<(), CliError> {
        let mut unknown: Vec<&str> =
            self.values.keys().map(String::as_str).filter(|k| !known.contains(k)).collect();
        if unknown.is_empty() {
            return Ok(());
        }
        unknown.sort_unstable();
        Err(CliError::Validation(format!("unknown config keys: {}", unknown.join(", "))))
    }
}

/// Flag value if present, else config value, else default; error when a
/// required parameter is absent everywhere.
fn pick<T: FromStr>(
    flag: Option<T>,
    cfg: &ConfigMap,
    key: &str,
    default: Option<T>,
) -> Result<T, CliError>
where
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(v) = cfg.get(key)? {
        return Ok(v);
    }
    default.ok_or_else(|| CliError::Validation(format!("missing required parameter `{key}`")))
}

fn intensity(a: f64) -> Result<IntensityParam, CliError> {
    Ok(IntensityParam::new(a)?)
}

fn parse_grid_n(n: usize) -> Result<TorusGrid, CliError> {
    Ok(TorusGrid::new(n)?)
}

/// "lo:hi:count" geometric λ ladder.
fn parse_ladder(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(CliError::Validation(format!("ladder `{spec}`: expected lo:hi:count")));
    };
    let bad = |what: &str| CliError::Validation(format!("ladder `{spec}`: bad {what}"));
    let lo: f64 = lo.parse().map_err(|_| bad("lo"))?;
    let hi: f64 = hi.parse().map_err(|_| bad("hi"))?;
    let count: usize = count.parse().map_err(|_| bad("count"))?;
    if !(lo.is_finite() && hi.is_finite() && lo > 1.0 && hi > lo && count >= 2) {
        return Err(CliError::Validation(format!(
            "ladder `{spec}`: need 1 < lo < hi and count >= 2"
        )));
    }
    Ok(geometric_ladder(lo, hi, count))
}

/// Comma-separated finite floats.
fn parse_list(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(CliError::Validation(format!("{what} `{spec}`: expected comma-separated reals"))),
    }
}

/// "σ1,σ2" mass pair.
fn parse_pair(spec: &str) -> Result<(f64, f64), CliError> {
    let v = parse_list(spec, "mass pair")?;
    if v.len() != 2 {
        return Err(CliError::Validation(format!("mass pair `{spec}`: expected two values")));
    }
    Ok((v[0], v[1]))
}

/// "α:w,α:w,…" atomic intensity distribution.
fn parse_atoms(spec: &str) -> Result<AtomicIntensity, CliError> {
    let mut atoms = Vec::new();
    for part in spec.split(',') {
        let Some((alpha, weight)) = part.split_once(':') else {
            return Err(CliError::Validation(format!(
                "atoms `{spec}`: expected alpha:weight pairs"
            )));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("atoms `{spec}`: bad number `{s}`")))
        };
        atoms.push(Atom { alpha: parse(alpha)?, weight: parse(weight)? });
    }
    Ok(AtomicIntensity::new(atoms)?)
}

fn blowup_json(t: &BlowupType) -> Value {
    match t {
        BlowupType::Pure1 => json!({"type": "Pure1"}),
        BlowupType::Pure2 => json!({"type": "Pure2"}),
        BlowupType::Threshold => json!({"type": "Threshold"}),
        BlowupType::FullLimit { alpha, beta } => {
            json!({"type": "FullLimit", "alpha": alpha, "beta": beta})
        }
        BlowupType::MultiBubble { m, gamma } => {
            json!({"type": "MultiBubble", "m": m, "gamma": gamma})
        }
        BlowupType::NotAdmissible => json!({"type": "NotAdmissible"}),
    }
}

#[derive(Parser)]
#[command(name = "meanfield", version, about = "Two-intensity mean field laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mass algebra: tower roots, classification, sharp thresholds.
    Masses(MassesArgs),
    /// Integrate one radial limit profile and extract its mass.
    Shoot(ShootArgs),
    /// Shoot a (c0, ratio) grid and tabulate limit masses.
    Sweep(SweepArgs),
    /// Bubble ladder statistics: energy, volume, J slope.
    Bubble(BubbleArgs),
    /// Damped-Newton solve of the mean field equation on the torus.
    Solve(SolveArgs),
    /// Continuation along a ρ₁ path with warm starts.
    Continue(ContinueArgs),
    /// Concentration diagnostics of a stored or synthetic field.
    Diagnose(DiagnoseArgs),
    /// Improved Moser–Trudinger family test (J slope sign).
    Mtcheck(MtcheckArgs),
}

#[derive(Args)]
struct MassesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative intensity a ∈ (0,1).
    #[arg(long)]
    a: Option<f64>,
    /// Print the tower-mass roots for m first-component bubbles.
    #[arg(long, value_name = "M")]
    gamma_m: Option<u32>,
    /// Classify a local mass pair "σ1,σ2" (2π units).
    #[arg(long, value_name = "S1,S2")]
    classify: Option<String>,
    /// Sharp threshold of an atomic intensity "α:w,α:w,…".
    #[arg(long)]
    atoms: Option<String>,
    /// Print the admissible η interval and the ρ₂ deficit threshold.
    #[arg(long)]
    interval: bool,
    /// Absolute tolerance for classification (σ units).
    #[arg(long)]
    tol: Option<f64>,
}

fn cmd_masses(args: MassesArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&["a", "gamma_m", "classify", "atoms", "tol"])?;
    let gamma_m: Option<u32> = match args.gamma_m {
        Some(m) => Some(m),
        None => cfg.get("gamma_m")?,
    };
    let classify: Option<String> = match args.classify {
        Some(s) => Some(s),
        None => cfg.get("classify")?,
    };
    let atoms: Option<String> = match args.atoms {
        Some(s) => Some(s),
        None => cfg.get("atoms")?,
    };
    if gamma_m.is_none() && classify.is_none() && atoms.is_none() && !args.interval {
        return Err(CliError::Validation(
            "choose at least one of --gamma-m, --classify, --atoms, --interval".into(),
        ));
    }
    let mut out = serde_json::Map::new();
    let a = match (gamma_m.is_some() || classify.is_some() || args.interval, args.a) {
        (false, None) => None,
        _ => {
            let a = intensity(pick(args.a, &cfg, "a", None)?)?;
            out.insert("a".into(), json!(a.value()));
            Some(a)
        }
    };
    let need_a = || CliError::Validation("missing required parameter `a`".into());
    if let Some(m) = gamma_m {
        if m == 0 {
            return Err(CliError::Validation("gamma_m needs m >= 1".into()));
        }
        let roots = solve_gamma_m(m, a.ok_or_else(need_a)?);
        out.insert("gamma_m".into(), json!({"m": m, "roots": roots.roots, "double": roots.double}));
    }
    if let Some(spec) = classify {
        let a = a.ok_or_else(need_a)?;
        let (s1, s2) = parse_pair(&spec)?;
        let mp = MassPair::new(s1, s2);
        let tol = pick(args.tol, &cfg, "tol", Some(0.01))?;
        let mut entry = blowup_json(&classify_local_mass(mp, a, tol));
        let obj = entry.as_object_mut().expect("blowup_json builds an object");
        obj.insert("sigma1".into(), json!(s1));
        obj.insert("sigma2".into(), json!(s2));
        obj.insert("eta".into(), json!(mp.eta(a)));
        obj.insert("pohozaev_residual".into(), json!(pohozaev_residual(mp, a)));
        out.insert("classify".into(), entry);
    }
    if let Some(spec) = atoms {
        let p = parse_atoms(&spec)?;
        let threshold = sharp_threshold(&p)?;
        out.insert(
            "sharp_threshold".into(),
            json!({
                "atoms": p.atoms().len(),
                "threshold": threshold,
                "threshold_over_pi": threshold / PI,
            }),
        );
    }
    if args.interval {
        let a = a.ok_or_else(need_a)?;
        let (lo, hi) = admissible_eta_interval(a);
        out.insert(
            "interval".into(),
            json!({
                "eta_interval": [lo, hi],
                "min_mass_rho2": min_mass_rho2(a),
                "min_mass_rho2_over_pi": min_mass_rho2(a) / PI,
            }),
        );
    }
    Ok(Value::Object(out))
}

#[derive(Args)]
struct ShootArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// First intensity of the limit equation (plain units).
    #[arg(long)]
    rho1: Option<f64>,
    /// Second intensity of the limit equation (plain units).
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Second-component normalization offset.
    #[arg(long)]
    c0: Option<f64>,
    /// Center value v(0).
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    /// Fit window lower edge (default r_max/10).
    #[arg(long)]
    fit_lo: Option<f64>,
    /// Fit window upper edge (default r_max).
    #[arg(long)]
    fit_hi: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn cmd_shoot(args: ShootArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&[
        "rho1", "rho2", "a", "c0", "v0", "r_max", "rtol", "atol", "fit_lo", "fit_hi",
        "output_dir",
    ])?;
    let a = intensity(pick(args.a, &cfg, "a", None)?)?;
    let mut params = ShootParams::new(
        pick(args.rho1, &cfg, "rho1", None)?,
        pick(args.rho2, &cfg, "rho2", None)?,
        a,
        pick(args.c0, &cfg, "c0", Some(0.0))?,
        pick(args.v0, &cfg, "v0", Some(0.0))?,
    );
    params.r_max = pick(args.r_max, &cfg, "r_max", Some(params.r_max))?;
    params.rtol = pick(args.rtol, &cfg, "rtol", Some(params.rtol))?;
    params.atol = pick(args.atol, &cfg, "atol", Some(params.atol))?;
    let explicit_window = args.fit_lo.is_some()
        || args.fit_hi.is_some()
        || cfg.get::<f64>("fit_lo")?.is_some()
        || cfg.get::<f64>("fit_hi")?.is_some();
    let window = (
        pick(args.fit_lo, &cfg, "fit_lo", Some(params.r_max / 10.0))?,
        pick(args.fit_hi, &cfg, "fit_hi", Some(params.r_max))?,
    );
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let profile = shoot(&params)?;
    let (fitted_eta, fit_status) = match limit_mass(&profile, window) {
        Ok(eta) => (Some(eta), "converged".to_string()),
        // A window the caller chose badly is their validation error; the
        // default window failing means the far field has not settled.
        Err(e @ ShootError::WindowOutOfRange { .. }) if explicit_window => return Err(e.into()),
        Err(e) => (None, format!("nonconverged: {e}")),
    };
    let masses = profile.masses_at_rmax();
    let csv = write_artifact(output_dir.as_deref(), "profile.csv", |w| profile.write_csv(w))?;
    Ok(json!({
        "eta_at_rmax": profile.eta_at_rmax(),
        "sigma1": masses.sigma1,
        "sigma2": masses.sigma2,
        "pohozaev_residual": verify_pohozaev(&profile),
        "fitted_eta": fitted_eta,
        "fit_status": fit_status,
        "points": profile.len(),
        "profile_csv": csv,
    }))
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    a: Option<f64>,
    /// Comma-separated c0 values.
    #[arg(long)]
    c0_grid: Option<String>,
    /// Comma-separated ρ₂/ρ₁ ratios.
    #[arg(long)]
    ratio_grid: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn cmd_sweep(args: SweepArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&["a", "c0_grid", "ratio_grid", "output_dir"])?;
    let a = intensity(pick(args.a, &cfg, "a", None)?)?;
    let c0_grid = parse_list(&pick(args.c0_grid, &cfg, "c0_grid", None)?, "c0 grid")?;
    let ratio_grid = parse_list(&pick(args.ratio_grid, &cfg, "ratio_grid", None)?, "ratio grid")?;
    if ratio_grid.iter().any(|&r| r < 0.0) {
        return Err(CliError::Validation("ratio grid entries must be >= 0".into()));
    }
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let table = sweep_eta(a, &c0_grid, &ratio_grid);
    let count = |status: fn(&SweepStatus) -> bool| {
        table.rows.iter().filter(|r| status(&r.status)).count()
    };
    let converged = count(|s| matches!(s, SweepStatus::Converged));
    let failed = count(|s| matches!(s, SweepStatus::Failed(_)));
    if failed == table.rows.len() {
        return Err(CliError::Numerical("every sweep cell failed to integrate".into()));
    }
    let (lo, hi) = admissible_eta_interval(a);
    let csv = write_artifact(output_dir.as_deref(), "sweep.csv", |w| table.write_csv(w))?;
    Ok(json!({
        "rows": table.rows.len(),
        "converged": converged,
        "nonconverged": table.rows.len() - converged - failed,
        "failed": failed,
        "eta_interval": [lo, hi],
        "interval_violations": table.interval_violations(a).len(),
        "sweep_csv": csv,
    }))
}

#[derive(Args)]
struct BubbleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of concentration atoms (1..=5, separated layout).
    #[arg(long)]
    k: Option<usize>,
    /// λ ladder "lo:hi:count" (geometric).
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho1_over_pi: Option<f64>,
    #[arg(long)]
    rho2_over_pi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn cmd_bubble(args: BubbleArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&["k", "lambda", "n", "rho1_over_pi", "rho2_over_pi", "a", "output_dir"])?;
    let k = pick(args.k, &cfg, "k", Some(1))?;
    let lambdas = parse_ladder(&pick(args.lambda, &cfg, "lambda", Some("8:64:7".into()))?)?;
    let grid = parse_grid_n(pick(args.n, &cfg, "n", Some(256))?)?;
    let rho = RhoPair::new(
        PI * pick(args.rho1_over_pi, &cfg, "rho1_over_pi", Some(0.0))?,
        PI * pick(args.rho2_over_pi, &cfg, "rho2_over_pi", Some(0.0))?,
    );
    let a = intensity(pick(args.a, &cfg, "a", Some(0.5))?)?;
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let sigma = separated_barycenter(k)?;
    let gradient = verify_gradient_estimate(&sigma, &lambdas, grid)?;
    let volume = verify_volume_estimates(&sigma, &lambdas, grid)?;
    let totals = ladder_totals(&gradient.rows, &sigma, rho, a, grid)?;
    let j_slope = fit_log_slope(&lambdas, &totals);
    let csv = write_artifact(output_dir.as_deref(), "ladder.csv", |w| {
        crate::bubble::write_ladder_csv(&gradient.rows, &totals, w)
    })?;
    Ok(json!({
        "k": k,
        "n": grid.n(),
        "rungs": lambdas.len(),
        "energy_slope": gradient.energy_slope,
        "energy_expected": 16.0 * k as f64 * PI,
        "max_gradient_ratio": gradient.max_gradient_ratio,
        "log_int_coeff": volume.log_int_coeff,
        "avg_coeff": volume.avg_coeff,
        "j_slope": j_slope,
        "j_slope_expected": 16.0 * k as f64 * PI - 2.0 * rho.rho1,
        "ladder_csv": csv,
    }))
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho1_over_pi: Option<f64>,
    #[arg(long)]
    rho2_over_pi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// h₁ = 1 + amp·cos(2πx).
    #[arg(long)]
    h1_amp: Option<f64>,
    /// h₂ = 1 + amp·cos(2πy).
    #[arg(long)]
    h2_amp: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<u32>,
    /// Sup-norm bound of the random initial field (0 = start from zero).
    #[arg(long)]
    u0_amp: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ball_radius: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Preset: ρ₁ = 4π, ρ₂ = 2π, a = 0.25, n = 256, h1-amp = 0.5.
    #[arg(long)]
    coercive_demo: bool,
}

struct ResolvedSolve {
    cfg: SolveConfig,
    n: usize,
    h1_amp: f64,
    h2_amp: f64,
    u0_amp: f64,
    seed: u64,
    ball_radius: f64,
}

fn resolve_solve(args: &SolveArgs, cfg: &ConfigMap) -> Result<ResolvedSolve, CliError> {
    let demo = args.coercive_demo;
    let pi_default = |d: Option<f64>| if demo { d } else { None };
    let rho = RhoPair::new(
        PI * pick(args.rho1_over_pi, cfg, "rho1_over_pi", pi_default(Some(4.0)))?,
        PI * pick(args.rho2_over_pi, cfg, "rho2_over_pi", pi_default(Some(2.0)))?,
    );
    let a = intensity(pick(args.a, cfg, "a", if demo { Some(0.25) } else { None })?)?;
    let n = pick(args.n, cfg, "n", Some(256))?;
    let grid = parse_grid_n(n)?;
    let h1_amp = pick(args.h1_amp, cfg, "h1_amp", Some(if demo { 0.5 } else { 0.0 }))?;
    let h2_amp = pick(args.h2_amp, cfg, "h2_amp", Some(0.0))?;
    let h = Weights::new(
        TorusField::from_fn(grid, |x, _| 1.0 + h1_amp * (2.0 * PI * x).cos()),
        TorusField::from_fn(grid, |_, y| 1.0 + h2_amp * (2.0 * PI * y).cos()),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut solve_cfg = SolveConfig::new(rho, a, h);
    solve_cfg.residual_tol = pick(args.tol, cfg, "tol", Some(solve_cfg.residual_tol))?;
    solve_cfg.max_iter = pick(args.max_iter, cfg, "max_iter", Some(solve_cfg.max_iter))?;
    if !(1e-12..=1e-6).contains(&solve_cfg.residual_tol) {
        return Err(CliError::Validation(format!(
            "tol {:e} outside [1e-12, 1e-6]",
            solve_cfg.residual_tol
        )));
    }
    Ok(ResolvedSolve {
        cfg: solve_cfg,
        n,
        h1_amp,
        h2_amp,
        u0_amp: pick(args.u0_amp, cfg, "u0_amp", Some(0.0))?,
        seed: pick(args.seed, cfg, "seed", Some(0))?,
        ball_radius: pick(args.ball_radius, cfg, "ball_radius", Some(0.2))?,
    })
}

/// Seeded uniform noise in [-amp, amp], projected mean-zero.
fn seeded_initial(grid: TorusGrid, seed: u64, amp: f64) -> TorusField {
    if amp == 0.0 {
        return TorusField::zeros(grid);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.cells()).map(|_| rng.gen_range(-amp..=amp)).collect();
    TorusField::from_values(grid, values).expect("cell count matches").mean_zero()
}

fn solve_snapshot(r: &ResolvedSolve) -> String {
    let c = &r.cfg;
    format!(
        "a={}\nball_radius={}\nh1_amp={}\nh2_amp={}\nmax_iter={}\nn={}\n\
         rho1_over_pi={}\nrho2_over_pi={}\nseed={}\ntol={:e}\nu0_amp={}\n",
        c.a.value(),
        r.ball_radius,
        r.h1_amp,
        r.h2_amp,
        c.max_iter,
        r.n,
        c.rho.rho1 / PI,
        c.rho.rho2 / PI,
        r.seed,
        c.residual_tol,
        r.u0_amp,
    )
}

fn cmd_solve(args: SolveArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&[
        "rho1_over_pi", "rho2_over_pi", "a", "n", "h1_amp", "h2_amp", "tol", "max_iter",
        "u0_amp", "seed", "ball_radius", "output_dir",
    ])?;
    let resolved = resolve_solve(&args, &cfg)?;
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;
    let grid = resolved.cfg.h.grid();
    if !(resolved.ball_radius > 2.0 / grid.n() as f64 && resolved.ball_radius < 0.25) {
        return Err(CliError::Validation(format!(
            "ball_radius {} outside (2/n, 0.25)",
            resolved.ball_radius
        )));
    }

    let u0 = seeded_initial(grid, resolved.seed, resolved.u0_amp);
    let record = newton_solve(&resolved.cfg, &u0)?;
    let report = blowup_diagnostics(
        &record.u,
        record.rho,
        resolved.cfg.a,
        &resolved.cfg.h,
        resolved.ball_radius,
    )?;
    if let Some(dir) = &output_dir {
        persist_run(dir, &solve_snapshot(&resolved), &record, Some(&report))?;
    }
    Ok(json!({
        "converged": true,
        "iterations": record.iterations,
        "residual_norm": record.residual_norm,
        "j_total": record.j_value.total,
        "sup_norm": record.u.sup_norm(),
        "peaks": report.peaks.len(),
        "run_dir": output_dir.as_ref().map(|d| d.display().to_string()),
    }))
}

#[derive(Args)]
struct ContinueArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated ρ₁ waypoints in units of π.
    #[arg(long)]
    rho1_path: Option<String>,
    #[arg(long)]
    rho2_over_pi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    h1_amp: Option<f64>,
    #[arg(long)]
    h2_amp: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<u32>,
    #[arg(long)]
    max_backtracks: Option<u32>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn write_records_csv(records: &[SolutionRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "rho1,rho2,iterations,residual_norm,J_total,sup_norm")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.rho.rho1,
            r.rho.rho2,
            r.iterations,
            r.residual_norm,
            r.j_value.total,
            r.u.sup_norm()
        )?;
    }
    Ok(())
}

/// States whose ρ₁ sits within 0.5 of a multiple of 8π — the quantized
/// levels where blow-up may occur; recorded, never asserted.
fn quantization_events(records: &[SolutionRecord]) -> Vec<Value> {
    records
        .iter()
        .filter_map(|r| {
            let j = (r.rho.rho1 / (8.0 * PI)).round();
            let distance = (r.rho.rho1 - 8.0 * PI * j).abs();
            (j >= 1.0 && distance < 0.5).then(|| {
                json!({
                    "rho1_over_pi": r.rho.rho1 / PI,
                    "nearest_multiple": 8.0 * j,
                    "distance": distance,
                    "sup_norm": r.u.sup_norm(),
                })
            })
        })
        .collect()
}

fn cmd_continue(args: ContinueArgs, out: &mut impl Write) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&[
        "rho1_path", "rho2_over_pi", "a", "n", "h1_amp", "h2_amp", "tol", "max_iter",
        "max_backtracks", "output_dir",
    ])?;
    let waypoints = parse_list(&pick(args.rho1_path, &cfg, "rho1_path", None)?, "rho1 path")?;
    let rho2 = PI * pick(args.rho2_over_pi, &cfg, "rho2_over_pi", Some(0.0))?;
    let a = intensity(pick(args.a, &cfg, "a", None)?)?;
    let grid = parse_grid_n(pick(args.n, &cfg, "n", Some(256))?)?;
    let h1_amp = pick(args.h1_amp, &cfg, "h1_amp", Some(0.0))?;
    let h2_amp = pick(args.h2_amp, &cfg, "h2_amp", Some(0.0))?;
    let h = Weights::new(
        TorusField::from_fn(grid, |x, _| 1.0 + h1_amp * (2.0 * PI * x).cos()),
        TorusField::from_fn(grid, |_, y| 1.0 + h2_amp * (2.0 * PI * y).cos()),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let path: Vec<RhoPair> = waypoints.iter().map(|&w| RhoPair::new(PI * w, rho2)).collect();
    let mut solve_cfg = SolveConfig::new(path.first().copied().unwrap_or(RhoPair::new(PI, 0.0)), a, h);
    solve_cfg.residual_tol = pick(args.tol, &cfg, "tol", Some(solve_cfg.residual_tol))?;
    solve_cfg.max_iter = pick(args.max_iter, &cfg, "max_iter", Some(solve_cfg.max_iter))?;
    let max_backtracks = pick(args.max_backtracks, &cfg, "max_backtracks", Some(8))?;
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let outcome = continuation_run(&solve_cfg, &path, max_backtracks, &TorusField::zeros(grid));
    let (records, stuck, last_sup_norm) = match outcome {
        Ok(records) => (records, false, None),
        Err(SolverError::PathStuck { records, last_sup_norm }) => {
            (records, true, Some(last_sup_norm))
        }
        Err(e) => return Err(e.into()),
    };
    let events = quantization_events(&records);
    let csv =
        write_artifact(output_dir.as_deref(), "continuation.csv", |w| write_records_csv(&records, w))?;
    let summary = json!({
        "records": records.len(),
        "stuck": stuck,
        "last_sup_norm": last_sup_norm,
        "last_rho1_over_pi": records.last().map(|r| r.rho.rho1 / PI),
        "events": events,
        "continuation_csv": csv,
    });
    if stuck {
        // The partial path is the artifact of interest; report it, then
        // signal the numerical failure through the exit code.
        let _ = writeln!(out, "{summary}");
        return Err(CliError::Numerical("continuation path stuck".into()));
    }
    Ok(summary)
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stored field (u.bin of a previous run).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic bubble: number of atoms (alternative to --input).
    #[arg(long)]
    demo_k: Option<usize>,
    /// Synthetic bubble concentration rate.
    #[arg(long)]
    demo_lambda: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho1_over_pi: Option<f64>,
    #[arg(long)]
    rho2_over_pi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    ball_radius: Option<f64>,
    /// Classification tolerance in σ units.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&[
        "input", "demo_k", "demo_lambda", "n", "rho1_over_pi", "rho2_over_pi", "a",
        "ball_radius", "tol", "output_dir",
    ])?;
    let input: Option<PathBuf> = match args.input {
        Some(p) => Some(p),
        None => cfg.get::<String>("input")?.map(PathBuf::from),
    };
    let demo_k: Option<usize> = match args.demo_k {
        Some(k) => Some(k),
        None => cfg.get("demo_k")?,
    };
    let rho = RhoPair::new(
        PI * pick(args.rho1_over_pi, &cfg, "rho1_over_pi", None)?,
        PI * pick(args.rho2_over_pi, &cfg, "rho2_over_pi", Some(0.0))?,
    );
    let a = intensity(pick(args.a, &cfg, "a", None)?)?;
    let ball_radius = pick(args.ball_radius, &cfg, "ball_radius", Some(0.2))?;
    let tol = pick(args.tol, &cfg, "tol", Some(0.5))?;
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let u = match (input, demo_k) {
        (Some(path), None) => {
            let file = std::fs::File::open(&path).map_err(|e| {
                CliError::Validation(format!("input {}: {e}", path.display()))
            })?;
            TorusField::read_binary(std::io::BufReader::new(file))?
        }
        (None, Some(k)) => {
            let lambda = pick(args.demo_lambda, &cfg, "demo_lambda", Some(32.0))?;
            let grid = parse_grid_n(pick(args.n, &cfg, "n", Some(256))?)?;
            let spec = BubbleSpec::new(separated_barycenter(k)?, lambda)?;
            build_bubble(&spec, grid)?.field
        }
        _ => {
            return Err(CliError::Validation(
                "give exactly one of --input or --demo-k".into(),
            ))
        }
    };
    let h = Weights::unit(u.grid());
    let report = blowup_diagnostics(&u, rho, a, &h, ball_radius)?;
    let class = classify_blowup(&report, a, tol);
    let two_pi = 2.0 * PI;
    let peaks: Vec<Value> = report
        .peaks
        .iter()
        .zip(&class.types)
        .map(|(p, t)| {
            let mut v = blowup_json(t);
            let obj = v.as_object_mut().expect("blowup_json builds an object");
            obj.insert("x".into(), json!(p.point.x));
            obj.insert("y".into(), json!(p.point.y));
            obj.insert("height".into(), json!(p.height));
            obj.insert("m1".into(), json!(p.extrapolated.sigma1));
            obj.insert("m2".into(), json!(p.extrapolated.sigma2));
            obj.insert("sigma1".into(), json!(p.extrapolated.sigma1 / two_pi));
            obj.insert("sigma2".into(), json!(p.extrapolated.sigma2 / two_pi));
            v
        })
        .collect();
    let csv = write_artifact(output_dir.as_deref(), "diagnostics.csv", |w| {
        write_diagnostics_csv(&report, w)
    })?;
    Ok(json!({
        "peaks": peaks,
        "residual_masses": [report.residual_masses.0, report.residual_masses.1],
        "sup_norm": report.sup_norm,
        "selection_bound": report.selection_bound,
        "r1_flag": class.r1_flag,
        "diagnostics_csv": csv,
    }))
}

#[derive(Args)]
struct MtcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accumulation-point count k ≥ 1 (the family uses k+1 bubbles).
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    rho1_over_pi: Option<f64>,
    #[arg(long)]
    rho2_over_pi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// λ ladder "lo:hi:count" (entries must be ≥ 10).
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn cmd_mtcheck(args: MtcheckArgs) -> Result<Value, CliError> {
    let cfg = ConfigMap::load(args.config.as_ref())?;
    cfg.reject_unknown(&["k", "rho1_over_pi", "rho2_over_pi", "a", "n", "lambda", "output_dir"])?;
    let k = pick(args.k, &cfg, "k", Some(1))?;
    if k == 0 {
        return Err(CliError::Validation("k must be >= 1".into()));
    }
    let rho1 = PI * pick(args.rho1_over_pi, &cfg, "rho1_over_pi", None)?;
    let rho2 = PI * pick(args.rho2_over_pi, &cfg, "rho2_over_pi", Some(0.0))?;
    let a = intensity(pick(args.a, &cfg, "a", Some(0.5))?)?;
    let grid = parse_grid_n(pick(args.n, &cfg, "n", Some(256))?)?;
    let lambdas = parse_ladder(&pick(args.lambda, &cfg, "lambda", Some("16:64:5".into()))?)?;
    let output_dir = pick_output_dir(args.output_dir, &cfg)?;

    let family = improved_mt_family_test(k, rho1, a, rho2, &lambdas, grid)?;
    let expected = 16.0 * (k as f64 + 1.0) * PI - 2.0 * rho1;
    let csv = write_artifact(output_dir.as_deref(), "family.csv", |w| {
        write_family_csv(&family.rows, w)
    })?;
    Ok(json!({
        "k": k,
        "bubbles": k + 1,
        "slope": family.slope,
        "expected_slope": expected,
        "sign": if family.slope >= 0.0 { "positive" } else { "negative" },
        "boundary_rho1_over_pi": 8.0 * (k as f64 + 1.0),
        "family_csv": csv,
    }))
}

fn pick_output_dir(flag: Option<PathBuf>, cfg: &ConfigMap) -> Result<Option<PathBuf>, CliError> {
    match flag {
        Some(p) => Ok(Some(p)),
        None => Ok(cfg.get::<String>("output_dir")?.map(PathBuf::from)),
    }
}

/// Creates the directory (post-validation) and writes one artifact into it;
/// returns the path written, or None when no directory was requested.
fn write_artifact(
    dir: Option<&Path>,
    name: &str,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<Option<String>, CliError> {
    let Some(dir) = dir else { return Ok(None) };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut buf = Vec::new();
    write(&mut buf)?;
    std::fs::write(&path, buf)?;
    Ok(Some(path.display().to_string()))
}

fn dispatch(command: Command, out: &mut impl Write) -> Result<Value, CliError> {
    match command {
        Command::Masses(args) => cmd_masses(args),
        Command::Shoot(args) => cmd_shoot(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bubble(args) => cmd_bubble(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Continue(args) => cmd_continue(args, out),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Mtcheck(args) => cmd_mtcheck(args),
    }
}

/// Parses `args` (without the program name) and runs the subcommand,
/// printing the JSON summary to `out`. Returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>, out: &mut impl Write) -> i32 {
    let argv = std::iter::once("meanfield".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return 2;
        }
        Err(e) => {
            // --help / --version land here.
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(cli.command, out) {
        Ok(summary) => {
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
