//! Damped Newton solver for the torus mean field equation, continuation in
//! the intensities, and blow-up diagnostics
//!
//! The equation is the Euler–Lagrange equation of `functional::evaluate_j`:
//!
//! ```text
//!     −Δu = ρ₁ (h₁eᵘ/∫h₁eᵘ − 1) + a ρ₂ (h₂e^{au}/∫h₂e^{au} − 1),   ∫u = 0.
//! ```
//!
//! Newton linearizes the residual with the exact Fréchet derivative
//!
//! ```text
//!     H[v] = −Δv − ρ₁ g₁ (v − ⟨g₁,v⟩) − a²ρ₂ g₂ (v − ⟨g₂,v⟩),
//! ```
//!
//! gᵢ the normalized densities. The rank-one ⟨gᵢ,v⟩ corrections come from
//! differentiating the normalizing integrals; they keep H symmetric and
//! mean-preserving, and dropping them destroys quadratic convergence. Each
//! Newton system is solved by preconditioned conjugate gradients on the
//! mean-zero subspace with the exact inverse Laplacian as preconditioner, so
//! the preconditioned operator is a compact perturbation of the identity and
//! iteration counts are grid-independent. Negative curvature in CG is the
//! numerical signature of a bifurcation and surfaces as `SingularJacobian`.
//!
//! Blow-up diagnostics mirror the selection process used to prove mass
//! quantization: find the discrete peak set Σ of M = max(u₁, u₂), measure
//! local masses in shrinking balls around each peak, and evaluate the
//! selection bound sup(M(x) + 2 log dist(x, Σ)).

use crate::field::{laplacian, poisson_solve, refine_double, FieldError, TorusField, TorusPoint};
use crate::functional::{el_residual, evaluate_j, normalize_components, FunctionalValue, Weights};
use crate::mass::{classify_local_mass, BlowupType, IntensityParam, MassPair, RhoPair};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// One converged (or last-attempted) Newton state.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    /// Mean-zero solution field.
    pub u: TorusField,
    /// ‖el_residual‖∞, recomputed from the final field.
    pub residual_norm: f64,
    pub rho: RhoPair,
    /// Newton steps taken (0 when the initial guess already met tolerance).
    pub iterations: u32,
    pub j_value: FunctionalValue,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("residual tolerance {0:e} outside [1e-12, 1e-6]")]
    ResidualTol(f64),
    #[error("newton diverged: residual {:e} after {} steps", record.residual_norm, record.iterations)]
    Diverged { record: Box<SolutionRecord> },
    #[error("linearized operator singular (residual {:e} after {} steps)", record.residual_norm, record.iterations)]
    SingularJacobian { record: Box<SolutionRecord> },
    #[error("continuation stuck after {} converged states (last sup-norm {last_sup_norm})", records.len())]
    PathStuck { records: Vec<SolutionRecord>, last_sup_norm: f64 },
    #[error("ball radius {radius} outside (2/n, 0.25) for n = {n}")]
    BallRadius { radius: f64, n: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of one solve: intensities, weights (which carry the grid), and
/// the Newton loop bounds.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub rho: RhoPair,
    pub a: IntensityParam,
    pub h: Weights,
    pub max_iter: u32,
    pub residual_tol: f64,
}

impl SolveConfig {
    /// Defaults: 50 iterations, tolerance 1e-10. The tolerance floor is set
    /// by spectral differentiation noise, ~ε(πn)²‖u‖ (≈3e-11 for an O(1)
    /// field at n = 256); tighter demands stall the line search.
    pub fn new(rho: RhoPair, a: IntensityParam, h: Weights) -> Self {
        Self { rho, a, h, max_iter: 50, residual_tol: 1e-10 }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(1e-12..=1e-6).contains(&self.residual_tol) {
            return Err(SolverError::ResidualTol(self.residual_tol));
        }
        Ok(())
    }
}

const ARMIJO_FACTOR: f64 = 0.5;
const ARMIJO_FLOOR: f64 = 1e-4;
const ARMIJO_DECREASE: f64 = 1e-4;
const CG_REL_TOL: f64 = 1e-8;
const CG_MAX_ITER: usize = 400;

fn l2_norm(f: &TorusField) -> f64 {
    let w = f.grid().weight();
    f.values().iter().map(|v| w * v * v).sum::<f64>().sqrt()
}

fn inner(a: &TorusField, b: &TorusField) -> f64 {
    let w = a.grid().weight();
    a.values().iter().zip(b.values()).map(|(&x, &y)| w * x * y).sum()
}

fn axpy(y: &mut TorusField, alpha: f64, x: &TorusField) {
    for (yv, &xv) in y.values_mut().iter_mut().zip(x.values()) {
        *yv += alpha * xv;
    }
}

/// Normalized densities g₁, g₂ at the current iterate.
struct Densities {
    g1: TorusField,
    g2: TorusField,
}

impl Densities {
    fn at(u: &TorusField, a: IntensityParam, h: &Weights) -> Self {
        let (u1, u2) = normalize_components(u, a, h);
        let g1 = TorusField::from_values(
            u.grid(),
            u1.values().iter().zip(h.h1().values()).map(|(&v, &hv)| hv * v.exp()).collect(),
        )
        .expect("grid sizes match");
        let g2 = TorusField::from_values(
            u.grid(),
            u2.values().iter().zip(h.h2().values()).map(|(&v, &hv)| hv * v.exp()).collect(),
        )
        .expect("grid sizes match");
        Self { g1, g2 }
    }

    /// H[v] with the exact rank-one normalization corrections.
    fn hessian_apply(&self, v: &TorusField, rho: RhoPair, a: IntensityParam) -> TorusField {
        let av = a.value();
        let m1 = inner(&self.g1, v);
        let m2 = inner(&self.g2, v);
        let mut out = laplacian(v).map(|x| -x);
        let values = out.values_mut();
        for i in 0..v.grid().cells() {
            values[i] -= rho.rho1 * self.g1.values()[i] * (v.values()[i] - m1)
                + av * av * rho.rho2 * self.g2.values()[i] * (v.values()[i] - m2);
        }
        out
    }
}

enum CgOutcome {
    Solved(TorusField),
    Breakdown,
}

/// Preconditioned CG for H d = r on the mean-zero subspace, preconditioner
/// (−Δ)⁻¹. Returns Breakdown on non-positive curvature (indefinite Hessian).
///
/// The right-hand side is projected to mean zero first: el_residual is
/// mean-zero only up to summation rounding (~√N ε ρ), and that component
/// lies in the kernel direction CG cannot reduce. The stopping test carries
/// an absolute floor tied to the outer tolerance because near convergence
/// the relative target would drop below machine precision; hitting the
/// iteration cap returns the best direction found and lets the line search
/// judge it.
fn solve_newton_system(
    dens: &Densities,
    rhs: &TorusField,
    rho: RhoPair,
    a: IntensityParam,
    abs_floor: f64,
) -> Result<CgOutcome, SolverError> {
    let mut res = rhs.mean_zero();
    let tol = (CG_REL_TOL * l2_norm(&res)).max(abs_floor);
    let mut d = TorusField::zeros(rhs.grid());
    let mut z = poisson_solve(&res)?;
    let mut p = z.clone();
    let mut rz = inner(&res, &z);
    for _ in 0..CG_MAX_ITER {
        let hp = dens.hessian_apply(&p, rho, a);
        let php = inner(&p, &hp);
        if php <= 1e-14 * inner(&p, &p) {
            return Ok(CgOutcome::Breakdown);
        }
        let alpha = rz / php;
        axpy(&mut d, alpha, &p);
        axpy(&mut res, -alpha, &hp);
        if l2_norm(&res) <= tol {
            break;
        }
        z = poisson_solve(&res.mean_zero())?;
        let rz_next = inner(&res, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        let mut p_next = z.clone();
        axpy(&mut p_next, beta, &p);
        p = p_next;
    }
    Ok(CgOutcome::Solved(d))
}

fn make_record(
    u: TorusField,
    cfg: &SolveConfig,
    iterations: u32,
) -> SolutionRecord {
    let residual_norm = el_residual(&u, cfg.rho, cfg.a, &cfg.h).sup_norm();
    let j_value = evaluate_j(&u, cfg.rho, cfg.a, &cfg.h);
    SolutionRecord { u, residual_norm, rho: cfg.rho, iterations, j_value }
}

/// Damped Newton iteration on the mean-zero subspace.
///
/// Converged means ‖el_residual‖∞ < residual_tol, recomputed on the final
/// field. `Diverged` (iteration cap or line-search floor) and
/// `SingularJacobian` (CG breakdown) both carry the last iterate.
pub fn newton_solve(cfg: &SolveConfig, u0: &TorusField) -> Result<SolutionRecord, SolverError> {
    cfg.validate()?;
    assert_eq!(u0.grid(), cfg.h.grid(), "initial guess and weights must share a grid");
    let mut u = u0.mean_zero();
    let mut iterations = 0u32;
    loop {
        let residual = el_residual(&u, cfg.rho, cfg.a, &cfg.h);
        if residual.sup_norm() < cfg.residual_tol {
            return Ok(make_record(u, cfg, iterations));
        }
        if iterations >= cfg.max_iter {
            return Err(SolverError::Diverged { record: Box::new(make_record(u, cfg, iterations)) });
        }
        let dens = Densities::at(&u, cfg.a, &cfg.h);
        let floor = 0.01 * cfg.residual_tol;
        let direction = match solve_newton_system(&dens, &residual, cfg.rho, cfg.a, floor)? {
            CgOutcome::Solved(d) => d,
            CgOutcome::Breakdown => {
                return Err(SolverError::SingularJacobian {
                    record: Box::new(make_record(u, cfg, iterations)),
                })
            }
        };
        // Armijo backtracking on the residual L² norm.
        let res_norm = l2_norm(&residual);
        let mut t = 1.0;
        loop {
            let mut trial = u.clone();
            axpy(&mut trial, -t, &direction);
            let trial = trial.mean_zero();
            let trial_norm = l2_norm(&el_residual(&trial, cfg.rho, cfg.a, &cfg.h));
            if trial_norm <= (1.0 - ARMIJO_DECREASE * t) * res_norm {
                u = trial;
                break;
            }
            t *= ARMIJO_FACTOR;
            if t < ARMIJO_FLOOR {
                return Err(SolverError::Diverged {
                    record: Box::new(make_record(u, cfg, iterations)),
                });
            }
        }
        iterations += 1;
    }
}

/// Continuation along a ρ path with warm starts and step halving.
///
/// Solves at `path[0]` from `u0`, then walks each segment, halving the step
/// toward the next waypoint on failure. More than `max_backtracks` halvings
/// within one segment aborts with `PathStuck`, carrying everything converged
/// so far and the last converged sup-norm.
pub fn continuation_run(
    cfg: &SolveConfig,
    path: &[RhoPair],
    max_backtracks: u32,
    u0: &TorusField,
) -> Result<Vec<SolutionRecord>, SolverError> {
    let mut records: Vec<SolutionRecord> = Vec::new();
    let Some(&first) = path.first() else {
        return Ok(records);
    };
    let mut stage = SolveConfig { rho: first, ..cfg.clone() };
    let stuck = |records: Vec<SolutionRecord>, u: &TorusField| SolverError::PathStuck {
        last_sup_norm: u.sup_norm(),
        records,
    };
    let mut u = u0.clone();
    match newton_solve(&stage, &u) {
        Ok(rec) => {
            u = rec.u.clone();
            records.push(rec);
        }
        Err(_) => return Err(stuck(records, &u)),
    }
    for &target in &path[1..] {
        let mut current = records.last().expect("first waypoint recorded").rho;
        let mut backtracks = 0;
        let mut fraction = 1.0;
        while current != target {
            let trial = RhoPair {
                rho1: current.rho1 + fraction * (target.rho1 - current.rho1),
                rho2: current.rho2 + fraction * (target.rho2 - current.rho2),
            };
            stage.rho = trial;
            match newton_solve(&stage, &u) {
                Ok(rec) => {
                    u = rec.u.clone();
                    current = trial;
                    records.push(rec);
                    fraction = 1.0;
                }
                Err(SolverError::ResidualTol(t)) => return Err(SolverError::ResidualTol(t)),
                Err(_) => {
                    backtracks += 1;
                    if backtracks > max_backtracks {
                        return Err(stuck(records, &u));
                    }
                    fraction *= 0.5;
                }
            }
        }
    }
    Ok(records)
}

/// Solves the same configuration on the doubled grid, warm-started from the
/// spectral injection of `coarse`; returns the fine record and the sup-norm
/// distance between injection and fine solution (grid-stability measure).
pub fn resolve_refined(
    cfg: &SolveConfig,
    coarse: &SolutionRecord,
    h_fine: Weights,
) -> Result<(SolutionRecord, f64), SolverError> {
    let injected = refine_double(&coarse.u);
    // Doubling n quadruples the spectral noise floor ε(πn)²‖u‖.
    let fine_tol = (cfg.residual_tol * 4.0).min(1e-6);
    let fine_cfg = SolveConfig { h: h_fine, residual_tol: fine_tol, ..cfg.clone() };
    let fine = newton_solve(&fine_cfg, &injected)?;
    let mut diff = fine.u.clone();
    axpy(&mut diff, -1.0, &injected);
    let movement = diff.sup_norm();
    Ok((fine, movement))
}

/// Local masses of one peak measured in shrinking balls.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakMasses {
    pub point: TorusPoint,
    /// Peak height M(p) = max(u₁, u₂)(p).
    pub height: f64,
    /// Absolute-unit (ρᵢ-weighted) masses at radius, radius/2, radius/4.
    pub at_radius: [MassPair; 3],
    /// Richardson extrapolation (4·m(r/2) − m(r/4))/3 of the shrinking-ball
    /// sequence against the c/r² ball-mass deficit of a concentrating
    /// profile (exact for the Liouville tail).
    pub extrapolated: MassPair,
}

/// Snapshot of the concentration structure of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupReport {
    pub peaks: Vec<PeakMasses>,
    /// Mass outside every peak ball at the full radius, per component.
    pub residual_masses: (f64, f64),
    /// sup of M = max(u₁, u₂) over the grid.
    pub sup_norm: f64,
    /// max over cells off Σ of M(x) + 2 log dist(x, Σ); None without peaks.
    pub selection_bound: Option<f64>,
    pub ball_radius: f64,
}

/// Peaks must stand this far above the diffuse level M ≈ 0 (the level of a
/// bounded solution under the ∫hᵢe^{uᵢ} = 1 normalization); e^4 ≈ 55-fold
/// density contrast. Below it a field counts as compact, not concentrating.
pub const PEAK_FLOOR: f64 = 4.0;
const PEAK_BAND: f64 = 2.0;
const MERGE_CELLS: f64 = 4.0;

/// Measures the concentration structure of `u`: discrete peak set of
/// M = max(u₁,u₂) (8-neighbor maxima within `PEAK_BAND` of the sup, above
/// `PEAK_FLOOR`, merged within 4 cells), partition-based ball masses at
/// radius/{1,2,4} with Richardson extrapolation, residual masses, and the
/// selection bound.
///
/// Cells are assigned to the nearest peak within the current radius, so
/// ball masses never double-count and local + residual masses add up to
/// (ρ₁, ρ₂) exactly up to quadrature rounding.
pub fn blowup_diagnostics(
    u: &TorusField,
    rho: RhoPair,
    a: IntensityParam,
    h: &Weights,
    ball_radius: f64,
) -> Result<BlowupReport, SolverError> {
    let grid = u.grid();
    let n = grid.n();
    if !(ball_radius > 2.0 / n as f64 && ball_radius < 0.25) {
        return Err(SolverError::BallRadius { radius: ball_radius, n });
    }
    let (u1, u2) = normalize_components(u, a, h);
    let m: Vec<f64> =
        u1.values().iter().zip(u2.values()).map(|(&x, &y)| x.max(y)).collect();
    let sup = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Candidate peaks: 8-neighbor local maxima in the height band.
    let mut candidates: Vec<usize> = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let idx = grid.index(row, col);
            if m[idx] < sup - PEAK_BAND || m[idx] < PEAK_FLOOR {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in [n - 1, 0, 1] {
                for dc in [n - 1, 0, 1] {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nb = grid.index((row + dr) % n, (col + dc) % n);
                    if m[nb] > m[idx] {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push(idx);
            }
        }
    }
    // Tallest first; greedy merge within 4 cells.
    candidates.sort_by(|&i, &j| m[j].partial_cmp(&m[i]).expect("finite heights"));
    let merge_radius = MERGE_CELLS / n as f64;
    let mut peaks: Vec<usize> = Vec::new();
    for &c in &candidates {
        if peaks.iter().all(|&p| grid.point(p).distance(grid.point(c)) > merge_radius) {
            peaks.push(c);
        }
    }

    // Densities with unit integrals, scaled to absolute masses ρᵢ.
    let w = grid.weight();
    let d1: Vec<f64> = u1
        .values()
        .iter()
        .zip(h.h1().values())
        .map(|(&v, &hv)| rho.rho1 * hv * v.exp())
        .collect();
    let d2: Vec<f64> = u2
        .values()
        .iter()
        .zip(h.h2().values())
        .map(|(&v, &hv)| rho.rho2 * hv * v.exp())
        .collect();

    let radii = [ball_radius, ball_radius / 2.0, ball_radius / 4.0];
    let mut masses = vec![[MassPair::new(0.0, 0.0); 3]; peaks.len()];
    let mut residual = (0.0, 0.0);
    for idx in 0..grid.cells() {
        let p = grid.point(idx);
        let nearest = peaks
            .iter()
            .enumerate()
            .map(|(k, &pk)| (k, p.distance(grid.point(pk))))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"));
        for (ri, &r) in radii.iter().enumerate() {
            let assigned = nearest.filter(|&(_, d)| d <= r);
            if let Some((k, _)) = assigned {
                masses[k][ri].sigma1 += w * d1[idx];
                masses[k][ri].sigma2 += w * d2[idx];
            } else if ri == 0 {
                residual.0 += w * d1[idx];
                residual.1 += w * d2[idx];
            }
        }
    }

    let peak_masses: Vec<PeakMasses> = peaks
        .iter()
        .zip(&masses)
        .map(|(&idx, at)| PeakMasses {
            point: grid.point(idx),
            height: m[idx],
            at_radius: *at,
            extrapolated: MassPair::new(
                (4.0 * at[1].sigma1 - at[2].sigma1) / 3.0,
                (4.0 * at[1].sigma2 - at[2].sigma2) / 3.0,
            ),
        })
        .collect();

    let selection_bound = (!peaks.is_empty()).then(|| {
        let mut bound = f64::NEG_INFINITY;
        for idx in 0..grid.cells() {
            let p = grid.point(idx);
            let dist = peaks
                .iter()
                .map(|&pk| p.distance(grid.point(pk)))
                .fold(f64::INFINITY, f64::min);
            if dist > 0.0 {
                bound = bound.max(m[idx] + 2.0 * dist.ln());
            }
        }
        bound
    });

    Ok(BlowupReport {
        peaks: peak_masses,
        residual_masses: residual,
        sup_norm: sup,
        selection_bound,
        ball_radius,
    })
}

/// Classification of a blow-up report against the admissible mass catalogue.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupClassification {
    /// One verdict per peak, from the extrapolated masses in 2π units.
    pub types: Vec<BlowupType>,
    /// First-component residual mass left outside the peak balls.
    pub residual_r1: f64,
    /// True when some peak carries first-component mass yet substantial
    /// r₁-mass remains diffuse — at a true first-component blow-up the
    /// diffuse part vanishes. Reported, never asserted: finite concentration
    /// rates always leave tails.
    pub r1_flag: bool,
}

/// Converts each peak's extrapolated masses to 2π units and classifies them.
pub fn classify_blowup(
    report: &BlowupReport,
    a: IntensityParam,
    tol: f64,
) -> BlowupClassification {
    let two_pi = 2.0 * std::f64::consts::PI;
    let types: Vec<BlowupType> = report
        .peaks
        .iter()
        .map(|p| {
            classify_local_mass(
                MassPair::new(p.extrapolated.sigma1 / two_pi, p.extrapolated.sigma2 / two_pi),
                a,
                tol,
            )
        })
        .collect();
    let peak_r1: f64 = report.peaks.iter().map(|p| p.extrapolated.sigma1).sum();
    let total_r1 = peak_r1 + report.residual_masses.0;
    let r1_flag = peak_r1 > 0.5 * two_pi && report.residual_masses.0 > 0.05 * total_r1.max(1e-300);
    BlowupClassification { types, residual_r1: report.residual_masses.0, r1_flag }
}

/// Persists a run: `config.txt` (key=value snapshot), `u.bin` (field binary),
/// and `diagnostics.csv` when a report is given. Writes are deterministic:
/// identical inputs produce identical bytes.
pub fn persist_run(
    dir: &Path,
    config_snapshot: &str,
    record: &SolutionRecord,
    report: Option<&BlowupReport>,
) -> Result<(), SolverError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), config_snapshot)?;
    let file = std::fs::File::create(dir.join("u.bin"))?;
    record.u.write_binary(std::io::BufWriter::new(file))?;
    if let Some(report) = report {
        let mut csv = Vec::new();
        write_diagnostics_csv(report, &mut csv)?;
        std::fs::write(dir.join("diagnostics.csv"), csv)?;
    }
    Ok(())
}

/// Writes `kind,peak,x,y,radius,m1,m2` rows: three ball rows and one
/// extrapolated row per peak, then the residual row.
pub fn write_diagnostics_csv(report: &BlowupReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "kind,peak,x,y,radius,m1,m2")?;
    for (k, peak) in report.peaks.iter().enumerate() {
        let radii = [report.ball_radius, report.ball_radius / 2.0, report.ball_radius / 4.0];
        for (r, mass) in radii.iter().zip(&peak.at_radius) {
            writeln!(
                w,
                "ball,{},{},{},{},{},{}",
                k, peak.point.x, peak.point.y, r, mass.sigma1, mass.sigma2
            )?;
        }
        writeln!(
            w,
            "extrapolated,{},{},{},0,{},{}",
            k, peak.point.x, peak.point.y, peak.extrapolated.sigma1, peak.extrapolated.sigma2
        )?;
    }
    writeln!(
        w,
        "residual,,,,{},{},{}",
        report.ball_radius, report.residual_masses.0, report.residual_masses.1
    )?;
    Ok(())
}
