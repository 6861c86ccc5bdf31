//! Standard bubble test functions and their asymptotic estimates
//!
//! A bubble concentrated at the barycenter σ = Σᵢ tᵢ δ_{xᵢ} with rate λ is
//!
//! ```text
//!     φ_{λ,σ}(x) = log Σᵢ tᵢ (1 + λ² d(x, xᵢ)²)^{-2},
//! ```
//!
//! with d the torus geodesic distance. Three asymptotics drive everything
//! built on top of these fields:
//!
//! * Dirichlet energy  ½∫|∇φ|² = (16kπ + o(1)) log λ + O(1) for k separated
//!   atoms,
//! * volume            log ∫ e^φ = −2 log λ + O(1), and
//! * average           ∫ φ = −(4 + o(1)) log λ + O(1).
//!
//! The module builds the fields, evaluates analytic gradients, and fits the
//! three coefficients over geometric λ ladders so callers can compare them
//! against the predicted constants.

use crate::field::{dirichlet_energy, log_mean_exp, TorusField, TorusGrid, TorusPoint};
use crate::transport::Barycenter;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BubbleError {
    #[error("concentration rate lambda = {lambda} must exceed 1")]
    LambdaTooSmall { lambda: f64 },
    #[error("lambda = {lambda} unresolvable on an n = {n} grid (need lambda <= n/4)")]
    Underresolved { lambda: f64, n: usize },
    #[error("ladder fits need at least {needed} increasing lambda values")]
    ShortLadder { needed: usize },
    #[error("cannot place {atoms} atoms pairwise at least 0.3 apart")]
    AtomPlacement { atoms: usize },
    #[error("atom index {index} out of range (bubble has {atoms} atoms)")]
    AtomIndex { index: usize, atoms: usize },
}

/// A concentration target: barycenter plus rate.
///
/// Atoms are normally pairwise distinct; coincident atoms are accepted and
/// simply merge by weight (the formula is affine in the weights).
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleSpec {
    sigma: Barycenter,
    lambda: f64,
}

impl BubbleSpec {
    pub fn new(sigma: Barycenter, lambda: f64) -> Result<Self, BubbleError> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(BubbleError::LambdaTooSmall { lambda });
        }
        Ok(Self { sigma, lambda })
    }

    pub fn sigma(&self) -> &Barycenter {
        &self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// A sampled bubble, split into mean-zero part and subtracted mean.
///
/// The raw bubble is `field + subtracted_mean`; since the torus has unit
/// area, `subtracted_mean` is exactly ∫ φ_{λ,σ}.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    pub field: TorusField,
    pub subtracted_mean: f64,
}

impl Bubble {
    /// Reconstructs the unprojected bubble.
    pub fn raw(&self) -> TorusField {
        let mean = self.subtracted_mean;
        self.field.map(|v| v + mean)
    }
}

fn check_resolution(lambda: f64, grid: TorusGrid) -> Result<(), BubbleError> {
    // Keep at least 4 grid cells across the 1/λ core.
    if lambda > grid.n() as f64 / 4.0 {
        return Err(BubbleError::Underresolved { lambda, n: grid.n() });
    }
    Ok(())
}

/// Samples φ_{λ,σ} on the grid and projects out the mean.
pub fn build_bubble(spec: &BubbleSpec, grid: TorusGrid) -> Result<Bubble, BubbleError> {
    check_resolution(spec.lambda, grid)?;
    let l2 = spec.lambda * spec.lambda;
    let raw = TorusField::from_fn(grid, |x, y| {
        let p = TorusPoint::new(x, y);
        let mut sum = 0.0;
        for &(atom, weight) in spec.sigma.atoms() {
            let d = p.distance(atom);
            sum += weight / (1.0 + l2 * d * d).powi(2);
        }
        sum.ln()
    });
    let subtracted_mean = raw.mean();
    Ok(Bubble { field: raw.mean_zero(), subtracted_mean })
}

/// Analytic gradient of φ_{λ,σ} at a point (valid off the atoms' cut loci):
/// ∇φ = −4λ² Σᵢ tᵢ (1+λ²dᵢ²)^{−3} δᵢ / Σⱼ tⱼ (1+λ²dⱼ²)^{−2}, with δᵢ the
/// wrapped displacement x − xᵢ. Each term is bounded by 2λ, so |∇φ| ≤ 2λ
/// everywhere.
pub fn gradient_at(spec: &BubbleSpec, p: TorusPoint) -> (f64, f64) {
    let l2 = spec.lambda * spec.lambda;
    let (mut gx, mut gy, mut denom) = (0.0, 0.0, 0.0);
    for &(atom, weight) in spec.sigma.atoms() {
        let (dx, dy) = p.delta(atom);
        let q = 1.0 + l2 * (dx * dx + dy * dy);
        denom += weight / (q * q);
        let coeff = -4.0 * l2 * weight / (q * q * q);
        gx += coeff * dx;
        gy += coeff * dy;
    }
    (gx / denom, gy / denom)
}

/// Max of |∇φ_{λ,σ}| over the grid points.
pub fn max_gradient(spec: &BubbleSpec, grid: TorusGrid) -> Result<f64, BubbleError> {
    check_resolution(spec.lambda, grid)?;
    let mut max = 0.0_f64;
    for index in 0..grid.cells() {
        let (gx, gy) = gradient_at(spec, grid.point(index));
        max = max.max(gx.hypot(gy));
    }
    Ok(max)
}

/// Fraction of the e^φ volume inside the geodesic ball B_radius(x_atom).
///
/// Converges to the atom's weight as λ → ∞ (concentration to σ).
pub fn concentration_fraction(
    spec: &BubbleSpec,
    grid: TorusGrid,
    radius: f64,
    atom: usize,
) -> Result<f64, BubbleError> {
    let atoms = spec.sigma.atoms();
    if atom >= atoms.len() {
        return Err(BubbleError::AtomIndex { index: atom, atoms: atoms.len() });
    }
    let bubble = build_bubble(spec, grid)?;
    let center = atoms[atom].0;
    let raw = bubble.raw();
    // Shift by the max for overflow safety; the fraction is shift-invariant.
    let shift = raw.sup_norm();
    let (mut inside, mut total) = (0.0, 0.0);
    for index in 0..grid.cells() {
        let mass = (raw.values()[index] - shift).exp();
        total += mass;
        if grid.point(index).distance(center) <= radius {
            inside += mass;
        }
    }
    Ok(inside / total)
}

/// Up to five points pairwise ≥ 0.3 apart in torus distance.
const SEPARATED_LAYOUT: [(f64, f64); 5] =
    [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75), (0.5, 0.5)];

/// Standard layout of `count` atoms pairwise at least 0.3 apart.
pub fn separated_atoms(count: usize) -> Result<Vec<TorusPoint>, BubbleError> {
    if count == 0 || count > SEPARATED_LAYOUT.len() {
        return Err(BubbleError::AtomPlacement { atoms: count });
    }
    Ok(SEPARATED_LAYOUT[..count]
        .iter()
        .map(|&(x, y)| TorusPoint::new(x, y))
        .collect())
}

/// Equal-weight barycenter on the standard separated layout.
pub fn separated_barycenter(count: usize) -> Result<Barycenter, BubbleError> {
    let atoms = separated_atoms(count)?;
    let w = 1.0 / count as f64;
    Ok(Barycenter::new(atoms.into_iter().map(|p| (p, w)).collect())
        .expect("layout weights are uniform"))
}

/// One ladder rung: energy plus the two volume statistics of the raw bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderRow {
    pub lambda: f64,
    /// Dirichlet energy ½∫|∇φ|².
    pub energy: f64,
    /// log ∫ e^φ (raw, unprojected bubble).
    pub log_int: f64,
    /// ∫ φ, equal to the subtracted mean.
    pub avg: f64,
}

/// Geometric ladder of `count` rates from lo to hi inclusive.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 1.0 && hi > lo, "degenerate ladder");
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    let mut rungs: Vec<f64> = (0..count).map(|i| lo * ratio.powi(i as i32)).collect();
    rungs[count - 1] = hi; // pin the endpoint against rounding overshoot
    rungs
}

fn check_ladder(lambdas: &[f64]) -> Result<(), BubbleError> {
    if lambdas.len() < 5 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BubbleError::ShortLadder { needed: 5 });
    }
    Ok(())
}

/// Evaluates the three ladder statistics for every λ.
pub fn energy_ladder(
    sigma: &Barycenter,
    lambdas: &[f64],
    grid: TorusGrid,
) -> Result<Vec<LadderRow>, BubbleError> {
    let ones = TorusField::constant(grid, 1.0);
    lambdas
        .iter()
        .map(|&lambda| {
            let spec = BubbleSpec::new(sigma.clone(), lambda)?;
            let bubble = build_bubble(&spec, grid)?;
            let raw = bubble.raw();
            Ok(LadderRow {
                lambda,
                energy: dirichlet_energy(&bubble.field),
                log_int: log_mean_exp(&raw, &ones, 1.0).expect("unit weight is positive"),
                avg: bubble.subtracted_mean,
            })
        })
        .collect()
}

/// Least-squares slope of y against log λ.
pub fn fit_log_slope(lambdas: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(lambdas.len(), ys.len());
    let m = lambdas.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&l, &y) in lambdas.iter().zip(ys) {
        let x = l.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// Energy growth along a λ ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub rows: Vec<LadderRow>,
    /// Fitted c in energy = c log λ + d; contract c ≈ 16kπ.
    pub energy_slope: f64,
    /// Max over the ladder of max|∇φ| / λ; contract ≤ 10 (in fact ≤ 2).
    pub max_gradient_ratio: f64,
}

/// Fits the Dirichlet-energy coefficient and checks the pointwise gradient
/// bound along the ladder.
pub fn verify_gradient_estimate(
    sigma: &Barycenter,
    lambdas: &[f64],
    grid: TorusGrid,
) -> Result<GradientEstimate, BubbleError> {
    check_ladder(lambdas)?;
    let rows = energy_ladder(sigma, lambdas, grid)?;
    let energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let energy_slope = fit_log_slope(lambdas, &energies);
    let mut max_gradient_ratio = 0.0_f64;
    for &lambda in lambdas {
        let spec = BubbleSpec::new(sigma.clone(), lambda)?;
        max_gradient_ratio = max_gradient_ratio.max(max_gradient(&spec, grid)? / lambda);
    }
    Ok(GradientEstimate { rows, energy_slope, max_gradient_ratio })
}

/// Volume decay coefficients along a λ ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    pub rows: Vec<LadderRow>,
    /// Fitted p in log∫e^φ = p log λ + const; contract p ≈ −2.
    pub log_int_coeff: f64,
    /// Fitted q in ∫φ = q log λ + const; contract q ≈ −4.
    pub avg_coeff: f64,
}

/// Fits the volume and average decay coefficients.
pub fn verify_volume_estimates(
    sigma: &Barycenter,
    lambdas: &[f64],
    grid: TorusGrid,
) -> Result<VolumeEstimate, BubbleError> {
    check_ladder(lambdas)?;
    let rows = energy_ladder(sigma, lambdas, grid)?;
    let log_ints: Vec<f64> = rows.iter().map(|r| r.log_int).collect();
    let avgs: Vec<f64> = rows.iter().map(|r| r.avg).collect();
    Ok(VolumeEstimate {
        log_int_coeff: fit_log_slope(lambdas, &log_ints),
        avg_coeff: fit_log_slope(lambdas, &avgs),
        rows,
    })
}

/// Slope of log ∫ e^{aφ} against log λ; ≈ −4a while a < 1/2 (the a-scaled
/// volume stays dominated by the far field, which is why the second
/// intensity term of the energy functional remains O(1) along bubbles).
pub fn scaled_volume_slope(
    sigma: &Barycenter,
    lambdas: &[f64],
    grid: TorusGrid,
    a: f64,
) -> Result<f64, BubbleError> {
    check_ladder(lambdas)?;
    let ones = TorusField::constant(grid, 1.0);
    let mut values = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let spec = BubbleSpec::new(sigma.clone(), lambda)?;
        let raw = build_bubble(&spec, grid)?.raw();
        values.push(log_mean_exp(&raw, &ones, a).expect("unit weight is positive"));
    }
    Ok(fit_log_slope(lambdas, &values))
}

/// Writes ladder rows with per-rung functional totals as
/// `lambda,energy,log_int,avg,J_total`.
pub fn write_ladder_csv(
    rows: &[LadderRow],
    j_total: &[f64],
    mut w: impl Write,
) -> std::io::Result<()> {
    assert_eq!(rows.len(), j_total.len(), "one J value per rung");
    writeln!(w, "lambda,energy,log_int,avg,J_total")?;
    for (row, j) in rows.iter().zip(j_total) {
        writeln!(w, "{},{},{},{},{}", row.lambda, row.energy, row.log_int, row.avg, j)?;
    }
    Ok(())
}
