//! Adaptive radial integration of the limit-profile equation
//!
//! ```text
//!     Δv + ρ₁ eᵛ + ρ₂ a₁ e^{av} = 0,    a₁ = a e^{c₀},
//! ```
//!
//! for rotationally symmetric entire profiles v(r) with v(0) = v₀, v'(0) = 0.
//! In the log-radius variable t = log r the system becomes autonomous up to
//! the factor e^{2t}, which tames both the r → 0 start and the power-law
//! far field. The integrated state carries the mass accumulators
//!
//! ```text
//!     σ₁(r) = (1/2π) ∫_{B_r} ρ₁ eᵛ,    σ₂(r) = (1/2π) ∫_{B_r} ρ₂ e^{c₀ + a v},
//! ```
//!
//! so the combined mass η(r) = −r v'(r) satisfies η = σ₁ + a σ₂ as an exact
//! linear invariant of the Runge–Kutta map. An entire profile has finite
//! total mass exactly when η(∞) falls in the open interval
//! `admissible_eta_interval`, and the limits obey the Pohozaev relation
//! η² = 4(σ₁ + σ₂).

use crate::mass::{admissible_eta_interval, IntensityParam, MassPair};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

/// Errors from radial integration and limit-mass extraction.
#[derive(Debug, Error)]
pub enum ShootError {
    #[error("parameter {name} = {value} out of range ({require})")]
    InvalidParam { name: &'static str, value: f64, require: &'static str },
    #[error("step size underflow at r = {r:e}")]
    StepFailure { r: f64 },
    #[error("state overflow at r = {r:e}")]
    Overflow { r: f64 },
    #[error("fit window [{lo}, {hi}] not covered by the profile")]
    WindowOutOfRange { lo: f64, hi: f64 },
    #[error("combined mass still drifts {rel_change:e} across the fit window (limit 1%)")]
    WindowDrift { rel_change: f64 },
    #[error("fitted decay rate {fitted} disagrees with eta(r_max) = {at_rmax} beyond 5%")]
    NonConverged { fitted: f64, at_rmax: f64 },
}

/// Inputs of one radial shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootParams {
    pub rho1: f64,
    pub rho2: f64,
    pub a: IntensityParam,
    /// Normalization offset of the second component, v₂ = a v + c₀.
    pub c0: f64,
    /// Center value v(0).
    pub v0: f64,
    pub r_max: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl ShootParams {
    /// Defaults: r_max = 1e4, rtol = 1e-10, atol = 1e-12.
    pub fn new(rho1: f64, rho2: f64, a: IntensityParam, c0: f64, v0: f64) -> Self {
        Self { rho1, rho2, a, c0, v0, r_max: 1e4, rtol: 1e-10, atol: 1e-12 }
    }

    fn validate(&self) -> Result<(), ShootError> {
        let checks: [(&'static str, f64, bool, &'static str); 7] = [
            ("rho1", self.rho1, self.rho1.is_finite() && self.rho1 >= 0.0, ">= 0"),
            ("rho2", self.rho2, self.rho2.is_finite() && self.rho2 >= 0.0, ">= 0"),
            ("rho1 + rho2", self.rho1 + self.rho2, self.rho1 + self.rho2 > 0.0, "> 0"),
            ("c0", self.c0, self.c0.is_finite() && self.c0.abs() <= 300.0, "|c0| <= 300"),
            ("v0", self.v0, self.v0.is_finite() && self.v0.abs() <= 300.0, "|v0| <= 300"),
            ("r_max", self.r_max, self.r_max > 1.0 && self.r_max.is_finite(), "> 1"),
            ("rtol", self.rtol, self.rtol > 0.0 && self.rtol <= 1e-3, "in (0, 1e-3]"),
        ];
        for (name, value, ok, require) in checks {
            if !ok {
                return Err(ShootError::InvalidParam { name, value, require });
            }
        }
        if !(self.atol > 0.0 && self.atol <= 1e-3) {
            return Err(ShootError::InvalidParam {
                name: "atol",
                value: self.atol,
                require: "in (0, 1e-3]",
            });
        }
        Ok(())
    }
}

/// Radial profile on the integrator's accepted points, starting at r = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub params: ShootParams,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    /// Combined mass η(r) = −r v'(r).
    pub eta: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn eta_at_rmax(&self) -> f64 {
        *self.eta.last().unwrap()
    }

    /// Local masses accumulated up to r_max, in units of 2π.
    pub fn masses_at_rmax(&self) -> MassPair {
        MassPair::new(*self.sigma1.last().unwrap(), *self.sigma2.last().unwrap())
    }

    /// Writes an `r,v,eta,sigma1,sigma2` table.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "r,v,eta,sigma1,sigma2")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.r[i], self.v[i], self.eta[i], self.sigma1[i], self.sigma2[i]
            )?;
        }
        Ok(())
    }
}

/// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 4_000_000;
const H_MAX: f64 = 0.2;
const H_MIN: f64 = 1e-12;

type State = [f64; 4]; // (v, w = dv/dt, sigma1, sigma2)

/// Integrates one radial profile out to r_max.
///
/// The start point r_min is picked so the quadratic series for v is accurate
/// to ~1e-14 there; the state is then advanced adaptively in t = log r.
pub fn shoot(params: &ShootParams) -> Result<RadialProfile, ShootError> {
    params.validate()?;
    let a = params.a.value();
    let (rho1, rho2, c0, v0) = (params.rho1, params.rho2, params.c0, params.v0);
    let a1_rho2 = rho2 * (c0 + a * v0).exp();
    let curvature = rho1 * v0.exp() + a * a1_rho2; // (ρ₁eᵛ + ρ₂a₁e^{av})(0)
    let r_min = (1e-14 / curvature.max(1e-10)).sqrt().clamp(1e-9, 1e-3);

    let rhs = |t: f64, y: &State| -> State {
        let growth = (2.0 * t).exp();
        let d_sigma1 = growth * rho1 * y[0].exp();
        let d_sigma2 = growth * rho2 * (c0 + a * y[0]).exp();
        [y[1], -(d_sigma1 + a * d_sigma2), d_sigma1, d_sigma2]
    };

    let mut t = r_min.ln();
    let t_end = params.r_max.ln();
    let r2 = r_min * r_min;
    let mut y: State = [
        v0 - curvature * r2 / 4.0,
        -curvature * r2 / 2.0,
        rho1 * v0.exp() * r2 / 2.0,
        a1_rho2 * r2 / 2.0,
    ];

    let mut profile = RadialProfile {
        params: *params,
        r: vec![0.0],
        v: vec![v0],
        eta: vec![0.0],
        sigma1: vec![0.0],
        sigma2: vec![0.0],
    };
    let mut push = |t: f64, y: &State| {
        profile.r.push(t.exp());
        profile.v.push(y[0]);
        profile.eta.push(-y[1]);
        profile.sigma1.push(y[2]);
        profile.sigma2.push(y[3]);
    };
    push(t, &y);

    let mut h = 1e-3_f64;
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS || h < H_MIN {
            return Err(ShootError::StepFailure { r: t.exp() });
        }
        h = h.min(t_end - t).min(H_MAX);
        let mut k = [[0.0; 4]; 7];
        k[0] = rhs(t, &y);
        for stage in 0..6 {
            let mut ys = y;
            for (j, yj) in ys.iter_mut().enumerate() {
                for (i, ki) in k.iter().enumerate().take(stage + 1) {
                    *yj += h * DP_A[stage][i] * ki[j];
                }
            }
            k[stage + 1] = rhs(t + DP_C[stage] * h, &ys);
        }
        let mut y_new = y;
        let mut err_sq = 0.0;
        for j in 0..4 {
            let mut err_j = 0.0;
            for i in 0..7 {
                y_new[j] += h * DP_B[i] * k[i][j];
                err_j += h * DP_E[i] * k[i][j];
            }
            let scale = params.atol + params.rtol * y[j].abs().max(y_new[j].abs());
            err_sq += (err_j / scale).powi(2);
        }
        let err = (err_sq / 4.0).sqrt();
        if !y_new.iter().all(|v| v.is_finite()) || y_new[0] > 710.0 {
            return Err(ShootError::Overflow { r: t.exp() });
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            push(t, &y);
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok(profile)
}

/// Extrapolated η(∞) from the far-field decay v ≈ −η log r + c.
///
/// Fits over the profile points with r in `window` (which must be covered by
/// the profile and contain at least 8 points). Errors when η still drifts by
/// ≥ 1% across the window, or when the fitted rate disagrees with η(r_max)
/// by 5% or more.
pub fn limit_mass(profile: &RadialProfile, window: (f64, f64)) -> Result<f64, ShootError> {
    let (lo, hi) = window;
    let r_max = *profile.r.last().unwrap();
    if !(lo > 0.0 && lo < hi && hi <= r_max * (1.0 + 1e-12)) {
        return Err(ShootError::WindowOutOfRange { lo, hi });
    }
    let idx: Vec<usize> = (0..profile.len())
        .filter(|&i| profile.r[i] >= lo && profile.r[i] <= hi)
        .collect();
    if idx.len() < 8 {
        return Err(ShootError::WindowOutOfRange { lo, hi });
    }
    let eta_first = profile.eta[idx[0]];
    let eta_last = profile.eta[*idx.last().unwrap()];
    let rel_change = (eta_last - eta_first).abs() / eta_last.abs().max(1e-300);
    if rel_change >= 0.01 {
        return Err(ShootError::WindowDrift { rel_change });
    }
    // Least squares v = c + s·log r; the decay rate is −s.
    let m = idx.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &i in &idx {
        let x = profile.r[i].ln();
        let y = profile.v[i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let fitted = -slope;
    let at_rmax = profile.eta_at_rmax();
    if (fitted - at_rmax).abs() >= 0.05 * at_rmax.abs() {
        return Err(ShootError::NonConverged { fitted, at_rmax });
    }
    Ok(fitted)
}

/// Pohozaev self-consistency |η² − 4(σ₁+σ₂)| at r_max; near zero only when
/// the profile has essentially saturated its total mass.
pub fn verify_pohozaev(profile: &RadialProfile) -> f64 {
    let eta = profile.eta_at_rmax();
    let mass = profile.masses_at_rmax();
    (eta * eta - 4.0 * (mass.sigma1 + mass.sigma2)).abs()
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepStatus {
    Converged,
    /// Integration succeeded but the far field had not settled.
    NonConverged,
    /// Integration failed (step underflow / overflow).
    Failed(String),
}

/// One row of an η sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub c0: f64,
    /// Intensity ratio ρ₂/ρ₁ (total normalized to ρ₁+ρ₂ = 2).
    pub ratio: f64,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub eta: Option<f64>,
    pub pohozaev_residual: Option<f64>,
    pub status: SweepStatus,
}

/// Table of sweep results, row-major over (c0, ratio).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Writes the sweep CSV (`a,c0,ratio,sigma1,sigma2,eta,pohozaev_residual,status`).
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "a,c0,ratio,sigma1,sigma2,eta,pohozaev_residual,status")?;
        for row in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let status = match &row.status {
                SweepStatus::Converged => "converged".to_string(),
                SweepStatus::NonConverged => "nonconverged".to_string(),
                SweepStatus::Failed(kind) => format!("failed:{kind}"),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.a,
                row.c0,
                row.ratio,
                opt(row.sigma1),
                opt(row.sigma2),
                opt(row.eta),
                opt(row.pohozaev_residual),
                status
            )?;
        }
        Ok(())
    }

    /// Converged rows whose η(r_max) escapes the open admissible interval.
    pub fn interval_violations(&self, a: IntensityParam) -> Vec<&SweepRow> {
        let (lo, hi) = admissible_eta_interval(a);
        self.rows
            .iter()
            .filter(|row| {
                matches!(row.status, SweepStatus::Converged)
                    && row.eta.map(|eta| eta <= lo || eta >= hi).unwrap_or(false)
            })
            .collect()
    }
}

/// Default fit window for limit-mass extraction.
pub const FIT_WINDOW: (f64, f64) = (1e3, 1e4);

/// Shoots a (c0, ratio) grid at fixed intensity ratio a, v₀ = 0.
///
/// Per-cell failures are recorded in the status column, never propagated.
pub fn sweep_eta(a: IntensityParam, c0_grid: &[f64], ratio_grid: &[f64]) -> SweepTable {
    let mut rows = Vec::with_capacity(c0_grid.len() * ratio_grid.len());
    for &c0 in c0_grid {
        for &ratio in ratio_grid {
            let rho1 = 2.0 / (1.0 + ratio);
            let rho2 = 2.0 * ratio / (1.0 + ratio);
            let params = ShootParams::new(rho1, rho2, a, c0, 0.0);
            let mut row = SweepRow {
                a: a.value(),
                c0,
                ratio,
                sigma1: None,
                sigma2: None,
                eta: None,
                pohozaev_residual: None,
                status: SweepStatus::Converged,
            };
            match shoot(&params) {
                Ok(profile) => {
                    let mass = profile.masses_at_rmax();
                    row.sigma1 = Some(mass.sigma1);
                    row.sigma2 = Some(mass.sigma2);
                    row.eta = Some(profile.eta_at_rmax());
                    row.pohozaev_residual = Some(verify_pohozaev(&profile));
                    row.status = match limit_mass(&profile, FIT_WINDOW) {
                        Ok(_) => SweepStatus::Converged,
                        Err(_) => SweepStatus::NonConverged,
                    };
                }
                Err(err) => {
                    row.status = SweepStatus::Failed(match err {
                        ShootError::StepFailure { .. } => "step".into(),
                        ShootError::Overflow { .. } => "overflow".into(),
                        other => format!("{other:?}"),
                    });
                }
            }
            rows.push(row);
        }
    }
    SweepTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(a: f64) -> IntensityParam {
        IntensityParam::new(a).unwrap()
    }

    /// Closed-form single-component profile with v(0) = v0:
    /// v(r) = log(8λ² / (ρ (1+λ²r²)²)), λ² = ρ e^{v0} / 8.
    fn liouville(rho: f64, v0: f64, r: f64) -> f64 {
        let lambda2 = rho * v0.exp() / 8.0;
        (8.0 * lambda2 / (rho * (1.0 + lambda2 * r * r).powi(2))).ln()
    }

    #[test]
    fn pure_first_component_matches_closed_form() {
        let params = ShootParams::new(2.0, 0.0, ip(0.5), 0.0, 0.0);
        let profile = shoot(&params).unwrap();
        let mut max_err = 0.0_f64;
        for i in 0..profile.len() {
            if profile.r[i] <= 100.0 {
                max_err = max_err.max((profile.v[i] - liouville(2.0, 0.0, profile.r[i])).abs());
            }
        }
        assert!(max_err < 1e-6, "profile error {max_err}");
        assert!((profile.eta_at_rmax() - 4.0).abs() < 1e-3);
        let fitted = limit_mass(&profile, FIT_WINDOW).unwrap();
        assert!((fitted - 4.0).abs() < 1e-3);
        // All mass sits in the first component.
        assert_eq!(profile.masses_at_rmax().sigma2, 0.0);
    }

    #[test]
    fn total_mass_is_invariant_under_center_value() {
        for v0 in [-2.0, 0.0, 2.0] {
            let profile = shoot(&ShootParams::new(2.0, 0.0, ip(0.5), 0.0, v0)).unwrap();
            assert!((profile.eta_at_rmax() - 4.0).abs() < 2e-3, "v0 = {v0}");
        }
    }

    #[test]
    fn pure_second_component_mass_quantizes() {
        // v₂ = a v + c₀ solves the single-component equation with intensity
        // a²ρ₂, so σ₂(∞) = 4/a².
        let a = 0.5;
        let profile = shoot(&ShootParams::new(0.0, 2.0, ip(a), 0.0, 0.0)).unwrap();
        let sigma2 = profile.masses_at_rmax().sigma2;
        assert!((sigma2 - 4.0 / (a * a)).abs() < 1e-2 * 16.0, "sigma2 = {sigma2}");
        assert_eq!(profile.masses_at_rmax().sigma1, 0.0);
    }

    #[test]
    fn coupled_shot_lands_in_admissible_interval() {
        let a = ip(0.4);
        let profile = shoot(&ShootParams::new(1.0, 1.0, a, 0.0, 0.0)).unwrap();
        let eta = profile.eta_at_rmax();
        assert!(eta > 6.0 && eta < 10.0, "eta = {eta}");
        assert!(verify_pohozaev(&profile) < 0.05, "residual {}", verify_pohozaev(&profile));
        let fitted = limit_mass(&profile, FIT_WINDOW).unwrap();
        assert!((fitted - eta).abs() < 0.05 * eta);
    }

    #[test]
    fn eta_is_nondecreasing_and_equals_mass_combination() {
        let a = ip(0.35);
        let profile = shoot(&ShootParams::new(1.5, 0.5, a, -0.5, 0.5)).unwrap();
        for i in 1..profile.len() {
            assert!(profile.eta[i] + 1e-12 >= profile.eta[i - 1]);
            let combo = profile.sigma1[i] + a.value() * profile.sigma2[i];
            assert!(
                (profile.eta[i] - combo).abs() < 1e-9 * profile.eta[i].max(1.0),
                "eta {} vs sigma combo {}",
                profile.eta[i],
                combo
            );
        }
    }

    #[test]
    fn tolerance_refinement_is_stable() {
        let mut params = ShootParams::new(1.0, 1.0, ip(0.4), 0.0, 0.0);
        params.rtol = 1e-8;
        let eta_coarse = shoot(&params).unwrap().eta_at_rmax();
        params.rtol = 5e-9;
        let eta_fine = shoot(&params).unwrap().eta_at_rmax();
        assert!((eta_coarse - eta_fine).abs() < 10.0 * 1e-8);
    }

    #[test]
    fn truncated_domain_breaks_pohozaev() {
        let mut params = ShootParams::new(1.0, 1.0, ip(0.4), 0.0, 0.0);
        params.r_max = 5.0;
        let profile = shoot(&params).unwrap();
        assert!(verify_pohozaev(&profile) > 0.5);
    }

    #[test]
    fn premature_window_is_flagged() {
        let profile = shoot(&ShootParams::new(1.0, 1.0, ip(0.4), 0.0, 0.0)).unwrap();
        assert!(matches!(
            limit_mass(&profile, (1.0, 10.0)),
            Err(ShootError::WindowDrift { .. })
        ));
        assert!(matches!(
            limit_mass(&profile, (1e3, 1e6)),
            Err(ShootError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut params = ShootParams::new(0.0, 0.0, ip(0.5), 0.0, 0.0);
        assert!(matches!(shoot(&params), Err(ShootError::InvalidParam { .. })));
        params.rho1 = 1.0;
        params.rtol = 1e-2;
        assert!(matches!(shoot(&params), Err(ShootError::InvalidParam { .. })));
    }

    #[test]
    fn sweep_stays_inside_interval_and_serializes() {
        let a = ip(0.45);
        let table = sweep_eta(a, &[-1.0, 0.0, 1.0], &[0.5, 1.0, 2.0]);
        assert_eq!(table.rows.len(), 9);
        let mut converged = 0;
        for row in &table.rows {
            assert!(
                !matches!(row.status, SweepStatus::Failed(_)),
                "cell (c0={}, ratio={}) status {:?}",
                row.c0,
                row.ratio,
                row.status
            );
            if matches!(row.status, SweepStatus::Converged) {
                converged += 1;
                let eta = row.eta.unwrap();
                assert!(eta > 4.888 && eta < 8.889, "eta = {eta}");
                assert!(row.pohozaev_residual.unwrap() < 0.05);
            }
        }
        // Cells with small aη have slowly decaying second-component tails;
        // those must be reported as nonconverged rather than trusted.
        assert!(converged >= 7, "only {converged} of 9 converged");
        let slow = table.rows.iter().find(|r| r.c0 == -1.0 && r.ratio == 0.5).unwrap();
        assert!(matches!(slow.status, SweepStatus::NonConverged));
        assert!(table.interval_violations(a).is_empty());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a,c0,ratio,sigma1,sigma2,eta,pohozaev_residual,status\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
