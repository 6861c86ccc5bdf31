//! The two-intensity energy functional and its first variation
//!
//! ```text
//!     J_ρ(u) = ½∫|∇u|² − ρ₁ log ∫ h₁ eᵘ − ρ₂ log ∫ h₂ e^{au}        (u mean-zero)
//! ```
//!
//! whose critical points solve the mean field equation
//!
//! ```text
//!     −Δu = ρ₁ (h₁eᵘ/∫h₁eᵘ − 1) + a ρ₂ (h₂e^{au}/∫h₂e^{au} − 1).
//! ```
//!
//! Both log terms are evaluated with explicit ∫u corrections so the computed
//! value is translation-invariant even when a caller hands in a field whose
//! mean has drifted off zero. The module also carries the Moser–Trudinger
//! deficit and the bubble-family slope test that exhibits how the functional
//! loses coercivity exactly when ρ₁ crosses a multiple of 8π.

use crate::bubble::{
    build_bubble, fit_log_slope, separated_barycenter, BubbleError, BubbleSpec, LadderRow,
};
use crate::field::{dirichlet_energy, laplacian, log_mean_exp, TorusField, TorusGrid};
use crate::mass::{min_mass_rho2, IntensityParam, RhoPair};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("weight field value {value} at cell {index} is not strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weight ratio max/min = {ratio:e} exceeds 1e6")]
    WeightRatio { ratio: f64 },
    #[error("weight grids disagree: {0} vs {1}")]
    GridMismatch(usize, usize),
    #[error("family rates must be increasing and at least 10 (got {lambda})")]
    LambdaFloor { lambda: f64 },
    #[error(transparent)]
    Bubble(#[from] BubbleError),
}

/// Strictly positive weight pair (h₁, h₂) on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    h1: TorusField,
    h2: TorusField,
}

impl Weights {
    /// Validates positivity and a max/min ratio of at most 1e6 per field.
    pub fn new(h1: TorusField, h2: TorusField) -> Result<Self, FunctionalError> {
        if h1.grid() != h2.grid() {
            return Err(FunctionalError::GridMismatch(h1.grid().n(), h2.grid().n()));
        }
        for h in [&h1, &h2] {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for (index, &value) in h.values().iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(FunctionalError::NonPositiveWeight { index, value });
                }
                min = min.min(value);
                max = max.max(value);
            }
            if max / min > 1e6 {
                return Err(FunctionalError::WeightRatio { ratio: max / min });
            }
        }
        Ok(Self { h1, h2 })
    }

    /// The default h₁ = h₂ = 1.
    pub fn unit(grid: TorusGrid) -> Self {
        Self { h1: TorusField::constant(grid, 1.0), h2: TorusField::constant(grid, 1.0) }
    }

    pub fn h1(&self) -> &TorusField {
        &self.h1
    }

    pub fn h2(&self) -> &TorusField {
        &self.h2
    }

    pub fn grid(&self) -> TorusGrid {
        self.h1.grid()
    }
}

/// J value split into its three parts; `total = dirichlet − rho1_term −
/// rho2_term` holds exactly (total is assembled from the parts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub total: f64,
    pub dirichlet: f64,
    pub rho1_term: f64,
    pub rho2_term: f64,
}

/// Evaluates J_ρ(u).
///
/// The log-integral terms carry the ∫u corrections (ρ₁(log∫h₁eᵘ − ∫u) and
/// ρ₂(log∫h₂e^{au} − a∫u)), which vanish on mean-zero input but make the
/// value exactly translation-invariant for drifted input.
pub fn evaluate_j(
    u: &TorusField,
    rho: RhoPair,
    a: IntensityParam,
    h: &Weights,
) -> FunctionalValue {
    assert_eq!(u.grid(), h.grid(), "field and weights must share a grid");
    let mean = u.mean();
    let log1 = log_mean_exp(u, h.h1(), 1.0).expect("weights validated positive");
    let log2 = log_mean_exp(u, h.h2(), a.value()).expect("weights validated positive");
    let dirichlet = dirichlet_energy(u);
    let rho1_term = rho.rho1 * (log1 - mean);
    let rho2_term = rho.rho2 * (log2 - a.value() * mean);
    FunctionalValue { total: dirichlet - rho1_term - rho2_term, dirichlet, rho1_term, rho2_term }
}

/// The normalized components u₁ = u − log∫h₁eᵘ and u₂ = au − log∫h₂e^{au},
/// satisfying ∫hᵢe^{uᵢ} = 1 by construction.
pub fn normalize_components(
    u: &TorusField,
    a: IntensityParam,
    h: &Weights,
) -> (TorusField, TorusField) {
    assert_eq!(u.grid(), h.grid(), "field and weights must share a grid");
    let log1 = log_mean_exp(u, h.h1(), 1.0).expect("weights validated positive");
    let log2 = log_mean_exp(u, h.h2(), a.value()).expect("weights validated positive");
    let av = a.value();
    (u.map(|v| v - log1), u.map(|v| av * v - log2))
}

/// Euler–Lagrange residual r = −Δu − ρ₁(g₁ − 1) − aρ₂(g₂ − 1) with
/// gᵢ the hᵢ-weighted normalized densities; the L² gradient of J.
///
/// Both bracket terms integrate to zero, so r is mean-zero identically.
pub fn el_residual(
    u: &TorusField,
    rho: RhoPair,
    a: IntensityParam,
    h: &Weights,
) -> TorusField {
    assert_eq!(u.grid(), h.grid(), "field and weights must share a grid");
    let av = a.value();
    let log1 = log_mean_exp(u, h.h1(), 1.0).expect("weights validated positive");
    let log2 = log_mean_exp(u, h.h2(), av).expect("weights validated positive");
    let lap = laplacian(u);
    let mut residual = lap.map(|v| -v);
    let values = residual.values_mut();
    for i in 0..u.grid().cells() {
        let g1 = h.h1().values()[i] * (u.values()[i] - log1).exp();
        let g2 = h.h2().values()[i] * (av * u.values()[i] - log2).exp();
        values[i] -= rho.rho1 * (g1 - 1.0) + av * rho.rho2 * (g2 - 1.0);
    }
    residual
}

/// Moser–Trudinger deficit D(u) = ½∫|∇u|² − 8π log∫eᵘ − ρ₂ log∫e^{au}
/// (unit weights). Bounded below over mean-zero u exactly while
/// ρ₂ ≤ 8π/a² − 16π/a; exposed for empirical family studies.
///
/// Panics when ρ₂ exceeds that threshold or u is visibly not mean-zero —
/// both are caller contract violations, not data conditions.
pub fn mt_deficit(u: &TorusField, a: IntensityParam, rho2: f64) -> f64 {
    assert!(
        rho2 <= min_mass_rho2(a) * (1.0 + 1e-12),
        "rho2 = {rho2} above the deficit threshold {}",
        min_mass_rho2(a)
    );
    assert!(u.mean().abs() < 1e-8, "deficit defined on mean-zero fields");
    let ones = TorusField::constant(u.grid(), 1.0);
    let log1 = log_mean_exp(u, &ones, 1.0).expect("unit weight");
    let log_a = log_mean_exp(u, &ones, a.value()).expect("unit weight");
    dirichlet_energy(u) - 8.0 * std::f64::consts::PI * log1 - rho2 * log_a
}

/// One rung of a bubble-family evaluation of J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyRow {
    pub lambda: f64,
    pub value: FunctionalValue,
}

/// Result of `improved_mt_family_test`: J along a (k+1)-atom bubble family
/// and its fitted slope against log λ.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTest {
    pub rows: Vec<FamilyRow>,
    /// Contract: ≈ 16(k+1)π − 2ρ₁; positive exactly when ρ₁ < 8(k+1)π.
    pub slope: f64,
}

/// Evaluates J along equal-weight (k+1)-atom bubbles (atoms ≥ 0.3 apart)
/// and fits the growth rate in log λ.
///
/// The slope 16(k+1)π − 2ρ₁ changes sign at ρ₁ = 8(k+1)π: with mass split
/// over k+1 separated concentration points the functional stays unbounded
/// below only above that threshold, which is the computational face of the
/// improved Moser–Trudinger inequality on k-point accumulation.
pub fn improved_mt_family_test(
    k: u32,
    rho1: f64,
    a: IntensityParam,
    rho2: f64,
    lambdas: &[f64],
    grid: TorusGrid,
) -> Result<FamilyTest, FunctionalError> {
    assert!(k >= 1, "family test needs at least one accumulation point");
    if lambdas.len() < 5 {
        return Err(BubbleError::ShortLadder { needed: 5 }.into());
    }
    for (i, &lambda) in lambdas.iter().enumerate() {
        if lambda < 10.0 || (i > 0 && lambda <= lambdas[i - 1]) {
            return Err(FunctionalError::LambdaFloor { lambda });
        }
    }
    let sigma = separated_barycenter(k as usize + 1)?;
    let h = Weights::unit(grid);
    let rho = RhoPair { rho1, rho2 };
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let spec = BubbleSpec::new(sigma.clone(), lambda)?;
        let bubble = build_bubble(&spec, grid)?;
        rows.push(FamilyRow { lambda, value: evaluate_j(&bubble.field, rho, a, &h) });
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.value.total).collect();
    Ok(FamilyTest { slope: fit_log_slope(lambdas, &totals), rows })
}

/// Writes family rows as `lambda,J_total,dirichlet,rho1_term,rho2_term`.
pub fn write_family_csv(rows: &[FamilyRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "lambda,J_total,dirichlet,rho1_term,rho2_term")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.lambda,
            row.value.total,
            row.value.dirichlet,
            row.value.rho1_term,
            row.value.rho2_term
        )?;
    }
    Ok(())
}

/// Per-rung J values for a bubble ladder (used for the ladder CSV).
pub fn ladder_totals(
    rows: &[LadderRow],
    sigma: &crate::transport::Barycenter,
    rho: RhoPair,
    a: IntensityParam,
    grid: TorusGrid,
) -> Result<Vec<f64>, FunctionalError> {
    let h = Weights::unit(grid);
    rows.iter()
        .map(|row| {
            let spec = BubbleSpec::new(sigma.clone(), row.lambda)?;
            let bubble = build_bubble(&spec, grid)?;
            Ok(evaluate_j(&bubble.field, rho, a, &h).total)
        })
        .collect()
}
