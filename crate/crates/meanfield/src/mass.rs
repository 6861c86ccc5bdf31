//! Local mass algebra at blow-up points.
//!
//! When a sequence of solutions concentrates, the limit measure of each
//! component carries a local mass at every blow-up point. Writing the pair in
//! units of 2π as (σ₁, σ₂), the masses are constrained by the Pohozaev
//! identity
//!
//! ```text
//!     4 (σ₁ + σ₂) = (σ₁ + a σ₂)²
//! ```
//!
//! and by interval bounds depending on the intensity ratio `a`. This module
//! implements the admissible catalogue exactly: classification of mass pairs,
//! the quadratic for multi-bubble tower masses, the admissible range of the
//! combined mass η = σ₁ + a σ₂, and the concentration thresholds
//! (`min_mass_rho2`, `sharp_threshold`, `coercive_region`) for the torus
//! problem.
//!
//! Unit convention: `MassPair` and everything derived from it (γ roots, η
//! intervals) are in units of 2π. Thresholds that parametrize the torus
//! equation itself are in absolute units, so they carry explicit factors of π.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from constructing or classifying mass-algebra inputs.
#[derive(Debug, Error, PartialEq)]
pub enum MassError {
    #[error("intensity ratio a must lie strictly inside (0,1), got {0}")]
    InvalidIntensity(f64),
    #[error("atom {index}: location alpha = {alpha} outside [-1,1]")]
    AlphaOutOfRange { index: usize, alpha: f64 },
    #[error("atom {index}: weight {weight} must be positive")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("atom weights sum to {sum:e}, expected 1 within 1e-12")]
    WeightSum { sum: f64 },
    #[error("two atoms share the location alpha = {0}")]
    DuplicateAlpha(f64),
    #[error("subset enumeration supports at most {max} atoms, got {got}")]
    TooManyAtoms { max: usize, got: usize },
    #[error("all atoms sit at alpha = 0, the concentration ratio is unbounded")]
    AllAlphaZero,
}

/// Intensity ratio `a` of the second component, restricted to (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityParam(f64);

impl IntensityParam {
    pub fn new(a: f64) -> Result<Self, MassError> {
        if a.is_finite() && a > 0.0 && a < 1.0 {
            Ok(Self(a))
        } else {
            Err(MassError::InvalidIntensity(a))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True in the regime `a < 1/2` where the extra blow-up types
    /// (`Threshold`, `MultiBubble`) become admissible.
    pub fn below_half(self) -> bool {
        self.0 < 0.5
    }
}

/// Pair of local masses (σ₁, σ₂) in units of 2π.
///
/// Admissible masses are nonnegative; negative entries never classify as
/// anything but [`BlowupType::NotAdmissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassPair {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl MassPair {
    pub fn new(sigma1: f64, sigma2: f64) -> Self {
        Self { sigma1, sigma2 }
    }

    /// Combined mass η = σ₁ + a σ₂ seen by the first component.
    pub fn eta(self, a: IntensityParam) -> f64 {
        self.sigma1 + a.value() * self.sigma2
    }
}

/// Intensity pair (ρ₁, ρ₂) of the torus equation, absolute units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoPair {
    pub rho1: f64,
    pub rho2: f64,
}

impl RhoPair {
    pub fn new(rho1: f64, rho2: f64) -> Self {
        Self { rho1, rho2 }
    }
}

/// Catalogue of admissible local mass pairs at a blow-up point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BlowupType {
    /// Only the first component concentrates: (4, 0).
    Pure1,
    /// Only the second component concentrates: (0, 4/a²).
    Pure2,
    /// Endpoint pair (4, 4/a² − 8/a); present only for a < 1/2, where it is
    /// the α → 4 limit of the `FullLimit` branch.
    Threshold,
    /// Both components keep a nontrivial limit profile: α ∈ (0,4) with β the
    /// unique positive root of the Pohozaev constraint.
    FullLimit { alpha: f64, beta: f64 },
    /// Tower of m ≥ 2 first-component bubbles with second-component mass γ, a
    /// root of the tower quadratic; admissible for a < 1/2 only. The mass
    /// algebra admits these pairs but no construction realizing them is
    /// known, so diagnostics should treat this verdict as a red flag rather
    /// than a certainty.
    MultiBubble { m: u32, gamma: f64 },
    /// No catalogue entry matches within tolerance.
    NotAdmissible,
}

/// Signed residual of the Pohozaev constraint, `4(σ₁+σ₂) − (σ₁+aσ₂)²`.
///
/// Zero (up to rounding) for every admissible mass pair.
pub fn pohozaev_residual(mp: MassPair, a: IntensityParam) -> f64 {
    let s = mp.eta(a);
    4.0 * (mp.sigma1 + mp.sigma2) - s * s
}

/// Real roots of the tower-mass quadratic `a²x² + (8ma−4)x + 16m(m−1) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRoots {
    /// Ascending real roots; empty when the discriminant is negative, one
    /// entry (with `double = true`) when it vanishes.
    pub roots: Vec<f64>,
    /// True when the quadratic has a double root.
    pub double: bool,
}

impl GammaRoots {
    fn empty() -> Self {
        Self { roots: Vec::new(), double: false }
    }
}

/// Solves the tower-mass quadratic for m bubbles in the first component.
///
/// All real roots are returned, negative ones included. The discriminant is
/// `16 + 64 m a (a − 1)`, so roots exist iff `m ≤ 1/(4a(1−a))`. For m = 1 the
/// roots are exactly {0, (4−8a)/a²}. For m ≥ 2 the real-root region splits in
/// two: below a = ½(1−√(1−1/m)) both roots are positive (admissible tower
/// masses), above a = ½(1+√(1−1/m)) both are negative and no admissible mass
/// corresponds to them.
///
/// Panics if `m == 0`.
pub fn solve_gamma_m(m: u32, a: IntensityParam) -> GammaRoots {
    assert!(m >= 1, "tower index m must be at least 1");
    let a_ = a.value();
    if m == 1 {
        // a²x² + (8a−4)x = 0 factors exactly.
        let nonzero = (4.0 - 8.0 * a_) / (a_ * a_);
        if nonzero == 0.0 {
            return GammaRoots { roots: vec![0.0], double: true };
        }
        let mut roots = vec![0.0, nonzero];
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        return GammaRoots { roots, double: false };
    }
    let mf = f64::from(m);
    let disc = 16.0 + 64.0 * mf * a_ * (a_ - 1.0);
    if disc < 0.0 {
        return GammaRoots::empty();
    }
    let a2 = a_ * a_;
    let b = 8.0 * mf * a_ - 4.0;
    if disc == 0.0 {
        return GammaRoots { roots: vec![-b / (2.0 * a2)], double: true };
    }
    // Stable quadratic formula: avoid cancellation in the root nearer zero.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let c = 16.0 * mf * (mf - 1.0);
    let mut roots = vec![q / a2, c / q];
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    GammaRoots { roots, double: false }
}

/// Lower bound on ρ₂ below which second-component concentration is excluded,
/// `8π/a² − 16π/a` (absolute units; positive only for a < 1/2).
pub fn min_mass_rho2(a: IntensityParam) -> f64 {
    let a_ = a.value();
    8.0 * PI / (a_ * a_) - 16.0 * PI / a_
}

/// Open interval of combined masses η = σ₁ + a σ₂ attainable by entire limit
/// profiles: `(max{4, 4/a − 4}, 4/a)`, in units of 2π.
pub fn admissible_eta_interval(a: IntensityParam) -> (f64, f64) {
    let a_ = a.value();
    (f64::max(4.0, 4.0 / a_ - 4.0), 4.0 / a_)
}

/// Unique positive second-component mass β paired with α ∈ (0,4) by the
/// Pohozaev constraint.
///
/// The constraint is quadratic in the combined mass S = α + aβ with roots
/// `S± = (2 ± 2√(1 − aα(1−a)))/a`; only the larger root yields β > 0, and it
/// sweeps the admissible η interval as α runs over (0,4).
///
/// Panics unless `0 < alpha <= 4` (α = 4 gives the Threshold endpoint).
pub fn full_limit_beta(alpha: f64, a: IntensityParam) -> f64 {
    assert!(
        alpha > 0.0 && alpha <= 4.0,
        "first-component mass must lie in (0,4], got {alpha}"
    );
    let a_ = a.value();
    let s = (2.0 + 2.0 * (1.0 - a_ * alpha * (1.0 - a_)).sqrt()) / a_;
    (s - alpha) / a_
}

/// Splits a combined mass η into the (σ₁, σ₂) pair forced by the Pohozaev
/// constraint: σ₁ = η(4−aη)/(4(1−a)), σ₂ = η(η−4)/(4(1−a)).
///
/// Both entries are positive exactly when η lies in
/// [`admissible_eta_interval`]; outside it the split still satisfies the
/// constraint but stops being a mass pair.
pub fn masses_from_eta(eta: f64, a: IntensityParam) -> MassPair {
    let a_ = a.value();
    let denom = 4.0 * (1.0 - a_);
    MassPair {
        sigma1: eta * (4.0 - a_ * eta) / denom,
        sigma2: eta * (eta - 4.0) / denom,
    }
}

/// Matches a mass pair against the admissible catalogue.
///
/// `tol` is an absolute tolerance in σ units, applied to coordinate matches
/// and to the Pohozaev residual. Exact catalogue points win ties against the
/// `FullLimit` branch (the `Threshold` pair is its α → 4 endpoint), so a pair
/// within `tol` of both reports the endpoint type.
pub fn classify_local_mass(mp: MassPair, a: IntensityParam, tol: f64) -> BlowupType {
    assert!(tol > 0.0 && tol.is_finite(), "tolerance must be positive");
    let a_ = a.value();
    let s1 = mp.sigma1;
    let s2 = mp.sigma2;
    if !(s1.is_finite() && s2.is_finite()) || s1 < -tol || s2 < -tol {
        return BlowupType::NotAdmissible;
    }
    let close = |x: f64, y: f64| (x - y).abs() <= tol;

    // Exact catalogue points first.
    if close(s1, 4.0) && close(s2, 0.0) {
        return BlowupType::Pure1;
    }
    if close(s1, 0.0) && close(s2, 4.0 / (a_ * a_)) {
        return BlowupType::Pure2;
    }
    if a.below_half() && close(s1, 4.0) && close(s2, 4.0 / (a_ * a_) - 8.0 / a_) {
        return BlowupType::Threshold;
    }

    // Interior branch: Pohozaev plus the open interval constraints.
    if pohozaev_residual(mp, a).abs() <= tol {
        let beta_floor = if a.below_half() { 4.0 / (a_ * a_) - 8.0 / a_ } else { 0.0 };
        let eta_floor = if a.below_half() { 4.0 / a_ - 4.0 } else { 4.0 };
        if s1 > 0.0
            && s1 < 4.0
            && s2 > beta_floor
            && s2 < 4.0 / (a_ * a_)
            && mp.eta(a) > eta_floor
        {
            return BlowupType::FullLimit { alpha: s1, beta: s2 };
        }
    }

    // Bubble towers: σ₁ = 4m with m ≥ 2, σ₂ a nonnegative root of the tower
    // quadratic; only admissible below a = 1/2.
    if a.below_half() {
        let m = (s1 / 4.0).round();
        if (2.0..=4096.0).contains(&m) && close(s1, 4.0 * m) {
            let gamma = solve_gamma_m(m as u32, a);
            for &root in &gamma.roots {
                if root >= 0.0 && close(s2, root) {
                    return BlowupType::MultiBubble { m: m as u32, gamma: root };
                }
            }
        }
    }

    BlowupType::NotAdmissible
}

/// Atom of an intensity distribution: location α ∈ [−1,1] with weight w > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub alpha: f64,
    pub weight: f64,
}

/// Purely atomic intensity distribution on [−1,1] with unit total weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicIntensity {
    atoms: Vec<Atom>,
}

impl AtomicIntensity {
    /// Validates locations, positivity and unit total weight (within 1e-12).
    pub fn new(atoms: Vec<Atom>) -> Result<Self, MassError> {
        let mut sum = 0.0;
        for (index, atom) in atoms.iter().enumerate() {
            if !(atom.alpha.is_finite() && atom.alpha.abs() <= 1.0) {
                return Err(MassError::AlphaOutOfRange { index, alpha: atom.alpha });
            }
            if !(atom.weight.is_finite() && atom.weight > 0.0) {
                return Err(MassError::NonPositiveWeight { index, weight: atom.weight });
            }
            sum += atom.weight;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MassError::WeightSum { sum });
        }
        let mut sorted: Vec<f64> = atoms.iter().map(|t| t.alpha).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(MassError::DuplicateAlpha(pair[0]));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
}

/// Largest subset enumeration handled by [`sharp_threshold`].
pub const MAX_THRESHOLD_ATOMS: usize = 20;

/// Sharp concentration threshold of an atomic intensity distribution:
/// `8π · min over same-sign atom subsets K of  P(K) / (Σ_K α w)²`
/// (absolute units).
///
/// Subsets mix only atoms of equal sign of α; subsets whose weighted mean
/// position vanishes impose no constraint and are skipped. Errors with
/// [`MassError::AllAlphaZero`] when every atom sits at α = 0, and with
/// [`MassError::TooManyAtoms`] beyond [`MAX_THRESHOLD_ATOMS`].
pub fn sharp_threshold(p: &AtomicIntensity) -> Result<f64, MassError> {
    let atoms = p.atoms();
    if atoms.len() > MAX_THRESHOLD_ATOMS {
        return Err(MassError::TooManyAtoms { max: MAX_THRESHOLD_ATOMS, got: atoms.len() });
    }
    let plus: Vec<Atom> = atoms.iter().copied().filter(|t| t.alpha >= 0.0).collect();
    let minus: Vec<Atom> = atoms.iter().copied().filter(|t| t.alpha < 0.0).collect();
    let mut best = f64::INFINITY;
    for class in [&plus, &minus] {
        for mask in 1_u32..(1 << class.len()) {
            let mut mass = 0.0;
            let mut moment = 0.0;
            for (i, atom) in class.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    mass += atom.weight;
                    moment += atom.alpha * atom.weight;
                }
            }
            if moment != 0.0 {
                best = best.min(mass / (moment * moment));
            }
        }
    }
    if best.is_finite() {
        Ok(8.0 * PI * best)
    } else {
        Err(MassError::AllAlphaZero)
    }
}

/// Whether the intensity pair lies in the closed region where the variational
/// energy is coercive: ρ₁ ≤ 8π, ρ₂ ≤ 8π/a² and (ρ₁+aρ₂)² ≤ 8π(ρ₁+ρ₂).
pub fn coercive_region(rho: RhoPair, a: IntensityParam) -> bool {
    let a_ = a.value();
    let combined = rho.rho1 + a_ * rho.rho2;
    rho.rho1 <= 8.0 * PI
        && rho.rho2 <= 8.0 * PI / (a_ * a_)
        && combined * combined <= 8.0 * PI * (rho.rho1 + rho.rho2)
}
