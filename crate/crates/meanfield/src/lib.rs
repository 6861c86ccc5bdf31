//! Numerical laboratory for the two-intensity mean field equation
//!
//! ```text
//!     -Δu = ρ₁ (h₁ eᵘ / ∫ h₁ eᵘ - 1) + a ρ₂ (h₂ e^{au} / ∫ h₂ e^{au} - 1)
//! ```
//!
//! on the flat unit torus, with intensity ratio `a ∈ (0,1)`. The crate bundles
//! the pieces needed to study both sides of the existence/blow-up dichotomy:
//!
//! * [`mass`] — exact local-mass algebra at blow-up points: the Pohozaev
//!   constraint, the admissible mass catalogue, multi-bubble mass roots, and
//!   sharp concentration thresholds for atomic intensity distributions.
//! * [`shooting`] — adaptive radial integration of the limit profile ODE
//!   `Δv + ρ₁ eᵛ + ρ₂ a₁ e^{av} = 0`, with mass accumulators and Pohozaev
//!   self-checks.
//! * [`field`] — spectral scalar fields on the torus: FFT Poisson solves,
//!   Dirichlet energies, stable log-mean-exp.
//! * [`transport`] — Kantorovich–Rubinstein (W₁) distances to atomic measures
//!   via an exact transportation solve, and projections onto the space of
//!   k-point barycenters.
//! * [`functional`] — the variational energy, its Euler–Lagrange residual,
//!   Moser–Trudinger deficits, and divergence tests along bubble families.
//! * [`bubble`] — standard concentration profiles and their energy/volume
//!   asymptotics in `log λ`.
//! * [`solver`] — damped Newton iteration with spectral preconditioning,
//!   parameter continuation, and blow-up diagnostics that feed back into
//!   [`mass`].
//! * [`cli`] — the thin command-line front end (`masses`, `shoot`, `sweep`,
//!   `bubble`, `solve`, `continue`, `diagnose`, `mtcheck`).
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod bubble;
pub mod cli;
pub mod field;
pub mod functional;
pub mod mass;
pub mod shooting;
pub mod solver;
pub mod transport;

pub use field::{TorusField, TorusGrid};
pub use mass::{BlowupType, IntensityParam, MassPair, RhoPair};
