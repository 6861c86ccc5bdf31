//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N (...): PASS|FAIL` line (visible with `--nocapture`; always
//! visible on failure). Tolerances are pinned in the assertions and are not
//! configurable — loosening them is a code change, not a flag.

use meanfield::bubble::{geometric_ladder, separated_barycenter, verify_gradient_estimate, verify_volume_estimates};
use meanfield::field::TorusPoint;
use meanfield::functional::{evaluate_j, improved_mt_family_test, ladder_totals, el_residual, Weights};
use meanfield::mass::{
    admissible_eta_interval, classify_local_mass, coercive_region, full_limit_beta,
    masses_from_eta, min_mass_rho2, pohozaev_residual, sharp_threshold, solve_gamma_m, Atom,
    AtomicIntensity,
};
use meanfield::bubble::fit_log_slope;
use meanfield::shooting::{limit_mass, shoot, sweep_eta, ShootParams, SweepStatus};
use meanfield::solver::{blowup_diagnostics, continuation_run, newton_solve, resolve_refined, SolveConfig, SolverError};
use meanfield::transport::{dist_to_barycenters, kr_distance_coarse, Barycenter, DensityMeasure};
use meanfield::{BlowupType, IntensityParam, MassPair, RhoPair, TorusField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

struct Criterion {
    number: u32,
    label: &'static str,
    budget: f64,
    failures: Vec<String>,
    started: Instant,
}

impl Criterion {
    fn start(number: u32, label: &'static str, budget_secs: f64) -> Self {
        Self { number, label, budget: budget_secs, failures: Vec::new(), started: Instant::now() }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if elapsed > self.budget {
            self.failures.push(format!("runtime {elapsed:.1}s exceeds budget {}s", self.budget));
        }
        if self.failures.is_empty() {
            println!("criterion {} ({}): PASS [{elapsed:.1}s]", self.number, self.label);
        } else {
            println!("criterion {} ({}): FAIL [{elapsed:.1}s]", self.number, self.label);
            for f in &self.failures {
                println!("  - {f}");
            }
            panic!("criterion {} failed: {:?}", self.number, self.failures);
        }
    }
}

fn ip(a: f64) -> IntensityParam {
    IntensityParam::new(a).unwrap()
}

#[test]
fn criterion_1_mass_algebra_identities() {
    let mut c = Criterion::start(1, "mass algebra identity suite", 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let a = ip(rng.gen_range(0.01..0.99));
        let av = a.value();

        // Catalogue pairs, constructed exactly; each must classify and
        // satisfy the Pohozaev identity to 1e-9.
        let mut pairs = vec![MassPair::new(4.0, 0.0), MassPair::new(0.0, 4.0 / (av * av))];
        if a.below_half() {
            pairs.push(MassPair::new(4.0, 4.0 / (av * av) - 8.0 / av));
        }
        let (lo, hi) = admissible_eta_interval(a);
        let eta = lo + rng.gen_range(0.05..0.95) * (hi - lo);
        pairs.push(masses_from_eta(eta, a));
        for m in 1..=4u32 {
            let roots = solve_gamma_m(m, a);
            // Root presence must match the discriminant sign exactly.
            let disc = 16.0 + 64.0 * m as f64 * av * (av - 1.0);
            c.check(roots.roots.is_empty() == (disc < 0.0), || {
                format!("a={av}: gamma_{m} emptiness disagrees with disc={disc}")
            });
            if m == 1 {
                let expect = (4.0 - 8.0 * av) / (av * av);
                // The other root is 0; take the one of largest magnitude.
                let nonzero = roots
                    .roots
                    .iter()
                    .copied()
                    .max_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
                    .unwrap();
                c.check((nonzero - expect).abs() <= 1e-12 * expect.abs().max(1.0), || {
                    format!("a={av}: gamma_1 nonzero root {nonzero} vs closed form {expect}")
                });
            }
            for &gamma in &roots.roots {
                if gamma >= 0.0 {
                    pairs.push(MassPair::new(4.0 * m as f64, gamma));
                }
            }
        }
        for mp in pairs {
            let res = pohozaev_residual(mp, a);
            let class = classify_local_mass(mp, a, 1e-6);
            c.check(!matches!(class, BlowupType::NotAdmissible), || {
                format!("a={av}: catalogue pair ({}, {}) not classified", mp.sigma1, mp.sigma2)
            });
            c.check(res.abs() < 1e-9, || {
                format!("a={av}: pair ({}, {}) residual {res}", mp.sigma1, mp.sigma2)
            });
        }
    }
    // Branch consistency: beta inverts through masses_from_eta.
    let a = ip(0.4);
    let beta = full_limit_beta(2.0, a);
    let mp = masses_from_eta(2.0 + a.value() * beta, a);
    c.check((mp.sigma2 - beta).abs() < 1e-9, || "full-limit branch inversion".into());
    c.finish();
}

#[test]
fn criterion_2_sharp_threshold_closed_form() {
    let mut c = Criterion::start(2, "two-atom sharp threshold", 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let tau = rng.gen_range(0.05..0.95);
        let a = rng.gen_range(0.05..0.95);
        let p = AtomicIntensity::new(vec![
            Atom { alpha: 1.0, weight: tau },
            Atom { alpha: a, weight: 1.0 - tau },
        ])
        .unwrap();
        let got = sharp_threshold(&p).unwrap();
        // Closed form: 8π min{1/τ, 1/(a²(1−τ)), 1/(τ+a(1−τ))²}.
        let joint = tau + a * (1.0 - tau);
        let want = 8.0
            * PI
            * (1.0 / tau).min(1.0 / (a * a * (1.0 - tau))).min(1.0 / (joint * joint));
        c.check((got - want).abs() <= 1e-12 * want, || {
            format!("tau={tau}, a={a}: threshold {got} vs closed form {want}")
        });
    }
    // Below the second-component deficit threshold the first intensity is
    // the binding constraint, at exactly 8π.
    for _ in 0..100 {
        let a = ip(rng.gen_range(0.05..0.49));
        let rho2 = rng.gen_range(0.01..0.99) * min_mass_rho2(a);
        let below = RhoPair::new(8.0 * PI * 0.999, rho2);
        let above = RhoPair::new(8.0 * PI * 1.001, rho2);
        c.check(coercive_region(below, a), || {
            format!("a={}, rho2={rho2}: coercivity lost below 8pi", a.value())
        });
        c.check(!coercive_region(above, a), || {
            format!("a={}, rho2={rho2}: coercivity extends past 8pi", a.value())
        });
    }
    c.finish();
}

#[test]
fn criterion_3_radial_quantization() {
    let mut c = Criterion::start(3, "radial mass quantization", 30.0);

    // Pure Liouville: v(r) = −2 log(1 + ρ₁ r²/8) exactly, η → 4.
    let params = ShootParams::new(2.0, 0.0, ip(0.5), 0.0, 0.0);
    let profile = shoot(&params).unwrap();
    let eta = limit_mass(&profile, (1e3, 1e4)).unwrap();
    c.check((eta - 4.0).abs() < 1e-3, || format!("pure Liouville eta {eta}"));
    let b = params.rho1 / 8.0;
    let max_err = profile
        .r
        .iter()
        .zip(&profile.v)
        .map(|(&r, &v)| (v + 2.0 * (1.0 + b * r * r).ln()).abs())
        .fold(0.0_f64, f64::max);
    c.check(max_err < 1e-5, || format!("pure Liouville profile error {max_err:.2e}"));

    // Pure second component: σ₂ → 4/a² within 1%.
    for &a in &[0.3, 0.5, 0.7] {
        let params = ShootParams::new(0.0, 2.0, ip(a), 0.0, 0.0);
        let profile = shoot(&params).unwrap();
        let sigma2 = profile.masses_at_rmax().sigma2;
        let want = 4.0 / (a * a);
        c.check((sigma2 - want).abs() < 0.01 * want, || {
            format!("a={a}: pure second mass {sigma2} vs {want}")
        });
    }

    // Coupled 5x5 sweep: converged cells live in the open admissible
    // interval and settle the Pohozaev identity to 0.05 by r = 1e4.
    let a = ip(0.45);
    let table = sweep_eta(a, &[-2.0, -1.0, 0.0, 1.0, 2.0], &[0.25, 0.5, 0.75, 1.0, 1.25]);
    let converged: Vec<_> =
        table.rows.iter().filter(|r| matches!(r.status, SweepStatus::Converged)).collect();
    c.check(!converged.is_empty(), || "sweep produced no converged cells".into());
    c.check(table.interval_violations(a).is_empty(), || {
        format!("{} converged cells outside the interval", table.interval_violations(a).len())
    });
    for row in converged {
        let res = row.pohozaev_residual.unwrap().abs();
        c.check(res < 0.05, || {
            format!("c0={}, ratio={}: pohozaev residual {res}", row.c0, row.ratio)
        });
    }
    c.finish();
}

#[test]
fn criterion_4_bubble_asymptotics() {
    let mut c = Criterion::start(4, "bubble energy and volume asymptotics", 120.0);
    let grid = TorusGrid::new(1024).unwrap();
    let lambdas = geometric_ladder(10.0, 200.0, 8);
    let a = ip(0.5);

    for k in 1..=2usize {
        let sigma = separated_barycenter(k).unwrap();
        let grad = verify_gradient_estimate(&sigma, &lambdas, grid).unwrap();
        let vol = verify_volume_estimates(&sigma, &lambdas, grid).unwrap();
        let expect = 16.0 * k as f64 * PI;
        c.check((grad.energy_slope - expect).abs() <= 0.10 * expect, || {
            format!("k={k}: energy slope {} vs {expect}", grad.energy_slope)
        });
        c.check((vol.log_int_coeff + 2.0).abs() <= 0.1, || {
            format!("k={k}: log-volume coefficient {}", vol.log_int_coeff)
        });
        c.check((vol.avg_coeff + 4.0).abs() <= 0.2, || {
            format!("k={k}: average coefficient {}", vol.avg_coeff)
        });

        // J slope sign flips across rho1 = 8k pi.
        for (factor, positive) in [(0.8, true), (1.2, false)] {
            let rho = RhoPair::new(factor * 8.0 * k as f64 * PI, 0.0);
            let totals = ladder_totals(&grad.rows, &sigma, rho, a, grid).unwrap();
            let slope = fit_log_slope(&lambdas, &totals);
            c.check((slope > 0.0) == positive, || {
                format!("k={k}: J slope {slope} at rho1 = {factor} x 8k pi")
            });
        }
    }

    // (k+1)-bubble family slope 16(k+1)π − 2ρ₁ within 10%. The expected
    // slope must stay O(1) relative to its two terms: near the sign-flip
    // boundary the O(1/λ_min) tail-overlap bias dominates any relative
    // comparison (the flip itself is asserted above).
    for (k, rho1_over_pi) in [(1u32, 12.0), (2, 12.0)] {
        let rho1 = rho1_over_pi * PI;
        let family = improved_mt_family_test(k, rho1, a, 0.0, &lambdas, grid).unwrap();
        let expect = 16.0 * (k as f64 + 1.0) * PI - 2.0 * rho1;
        c.check((family.slope - expect).abs() <= 0.10 * expect.abs(), || {
            format!("k={k}, rho1={rho1_over_pi}pi: family slope {} vs {expect}", family.slope)
        });
    }
    c.finish();
}

#[test]
fn criterion_5_solver_correctness() {
    let mut c = Criterion::start(5, "solver exactness, gradient, grid stability", 60.0);

    // Constant weights: the flat state is the exact solution.
    let grid = TorusGrid::new(256).unwrap();
    let cfg = SolveConfig::new(RhoPair::new(4.0 * PI, 2.0 * PI), ip(0.25), Weights::unit(grid));
    let record = newton_solve(&cfg, &TorusField::zeros(grid)).unwrap();
    c.check(record.residual_norm < 1e-13, || {
        format!("flat-state residual {}", record.residual_norm)
    });
    c.check(record.u.sup_norm() == 0.0, || "flat state moved".into());

    // Euler–Lagrange field matches finite differences of J.
    let fd_grid = TorusGrid::new(64).unwrap();
    let rho = RhoPair::new(4.0 * PI, 2.0 * PI);
    let a = ip(0.25);
    let h = Weights::new(
        TorusField::from_fn(fd_grid, |x, _| 1.0 + 0.3 * (2.0 * PI * x).cos()),
        TorusField::from_fn(fd_grid, |_, y| 1.0 + 0.2 * (2.0 * PI * y).sin()),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let smooth = |rng: &mut ChaCha8Rng| {
        let modes: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.gen_range(-3i32..=3) as f64,
                    rng.gen_range(-3i32..=3) as f64,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        TorusField::from_fn(fd_grid, |x, y| {
            0.2 * modes
                .iter()
                .map(|&(kx, ky, amp, ph)| amp * (2.0 * PI * (kx * x + ky * y) + ph).cos())
                .sum::<f64>()
        })
        .mean_zero()
    };
    let eps = 1e-5;
    for trial in 0..20 {
        let u = smooth(&mut rng);
        let v = smooth(&mut rng);
        let grad = el_residual(&u, rho, a, &h);
        let weight = 1.0 / (fd_grid.cells() as f64);
        let directional: f64 = grad
            .values()
            .iter()
            .zip(v.values())
            .map(|(g, w)| g * w * weight)
            .sum();
        let mut up = u.clone();
        up.values_mut().iter_mut().zip(v.values()).for_each(|(a, b)| *a += eps * b);
        let mut dn = u.clone();
        dn.values_mut().iter_mut().zip(v.values()).for_each(|(a, b)| *a -= eps * b);
        let fd = (evaluate_j(&up, rho, a, &h).total - evaluate_j(&dn, rho, a, &h).total)
            / (2.0 * eps);
        c.check((directional - fd).abs() <= 1e-4 * fd.abs().max(1e-8), || {
            format!("trial {trial}: directional {directional} vs finite difference {fd}")
        });
    }

    // Coercive solve with a nontrivial weight, stable under refinement.
    let cos_weights = |g: TorusGrid| {
        Weights::new(
            TorusField::from_fn(g, |x, _| 1.0 + 0.5 * (2.0 * PI * x).cos()),
            TorusField::constant(g, 1.0),
        )
        .unwrap()
    };
    let cfg = SolveConfig::new(rho, a, cos_weights(grid));
    let coarse = newton_solve(&cfg, &TorusField::zeros(grid)).unwrap();
    c.check(coarse.residual_norm < 1e-10, || {
        format!("coercive residual {}", coarse.residual_norm)
    });
    let fine_grid = TorusGrid::new(512).unwrap();
    let (_, movement) = resolve_refined(&cfg, &coarse, cos_weights(fine_grid)).unwrap();
    c.check(movement < 1e-4, || format!("grid movement {movement}"));
    c.finish();
}

/// Exact optimum of the 2-sink transportation LP: order sources by the cost
/// difference and fill the first sink greedily (a one-constraint LP with box
/// constraints, where the greedy exchange argument is tight).
fn two_sink_lp(sources: &[(TorusPoint, f64)], sinks: &[(TorusPoint, f64)]) -> f64 {
    let [(t1, w1), (t2, _)] = sinks else { panic!("two sinks") };
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.sort_by(|&i, &j| {
        let di = sources[i].0.distance(*t1) - sources[i].0.distance(*t2);
        let dj = sources[j].0.distance(*t1) - sources[j].0.distance(*t2);
        di.partial_cmp(&dj).unwrap()
    });
    let mut capacity = *w1;
    let mut cost = 0.0;
    for &i in &order {
        let (p, m) = sources[i];
        let first = m.min(capacity);
        cost += first * p.distance(*t1) + (m - first) * p.distance(*t2);
        capacity -= first;
    }
    assert!(capacity.abs() < 1e-9, "sink capacity not exhausted");
    cost
}

#[test]
fn criterion_6_diagnostics_bookkeeping() {
    let mut c = Criterion::start(6, "diagnostics and transport bookkeeping", 60.0);

    // Synthetic multi-bubble fields: partition + residual masses must
    // reconstruct (ρ₁, ρ₂) to 1e-6 relative.
    let grid = TorusGrid::new(256).unwrap();
    let a = ip(0.3);
    let h = Weights::unit(grid);
    for k in [2usize, 3] {
        let spec = meanfield::bubble::BubbleSpec::new(separated_barycenter(k).unwrap(), 48.0)
            .unwrap();
        let u = meanfield::bubble::build_bubble(&spec, grid).unwrap().field;
        let rho = RhoPair::new(8.0 * k as f64 * PI, 2.0 * PI);
        let report = blowup_diagnostics(&u, rho, a, &h, 0.2).unwrap();
        c.check(report.peaks.len() == k, || {
            format!("k={k}: found {} peaks", report.peaks.len())
        });
        let sum1: f64 = report.peaks.iter().map(|p| p.at_radius[0].sigma1).sum();
        let sum2: f64 = report.peaks.iter().map(|p| p.at_radius[0].sigma2).sum();
        let rel1 = (sum1 + report.residual_masses.0 - rho.rho1).abs() / rho.rho1;
        let rel2 = (sum2 + report.residual_masses.1 - rho.rho2).abs() / rho.rho2;
        c.check(rel1 < 1e-6, || format!("k={k}: first-component bookkeeping off by {rel1:.2e}"));
        c.check(rel2 < 1e-6, || format!("k={k}: second-component bookkeeping off by {rel2:.2e}"));
    }

    // W1 against an independently solved 8x8 transportation LP.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let small = TorusGrid::new(16).unwrap();
    for trial in 0..20 {
        let masses: Vec<f64> = (0..small.cells()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = masses.iter().sum();
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mu = DensityMeasure::from_masses(small, masses).unwrap();
        let nu = Barycenter::new(vec![
            (TorusPoint::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)), 0.4),
            (TorusPoint::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)), 0.6),
        ])
        .unwrap();
        let got = kr_distance_coarse(&mu, &nu, 8).unwrap().value;
        let (sources, _) = mu.downsample(8);
        let want = two_sink_lp(&sources, nu.atoms());
        c.check((got - want).abs() < 1e-6, || {
            format!("trial {trial}: W1 {got} vs LP {want}")
        });
    }

    // Two tight Gaussians project onto two atoms at distance < 0.02.
    let fine = TorusGrid::new(128).unwrap();
    let centers = [TorusPoint::new(0.25, 0.25), TorusPoint::new(0.75, 0.75)];
    let s = 0.01;
    let density = TorusField::from_fn(fine, |x, y| {
        let p = TorusPoint::new(x, y);
        centers.iter().map(|&q| (-p.distance(q).powi(2) / (2.0 * s * s)).exp()).sum()
    });
    let mu = DensityMeasure::from_density_field(&density).unwrap();
    let fit = dist_to_barycenters(&mu, 2).unwrap();
    c.check(fit.distance < 0.02, || format!("two-Gaussian k=2 distance {}", fit.distance));
    c.finish();
}

#[test]
fn criterion_7_quantization_events_logged() {
    // Min-max existence, the compactness constant and the delta-mass limits
    // are not desk-scale reproducible; this run only records continuation
    // behaviour near the quantized levels rho1 in 8 pi N.
    let grid = TorusGrid::new(64).unwrap();
    let a = ip(0.25);
    let h = Weights::new(
        TorusField::from_fn(grid, |x, _| 1.0 + 0.3 * (2.0 * PI * x).cos()),
        TorusField::constant(grid, 1.0),
    )
    .unwrap();
    let path: Vec<RhoPair> =
        [7.0, 7.5, 8.0, 8.5, 9.0].iter().map(|&w| RhoPair::new(w * PI, 0.5 * PI)).collect();
    let cfg = SolveConfig::new(path[0], a, h);
    match continuation_run(&cfg, &path, 4, &TorusField::zeros(grid)) {
        Ok(records) => {
            for r in &records {
                let j = (r.rho.rho1 / (8.0 * PI)).round();
                if j >= 1.0 && (r.rho.rho1 - 8.0 * PI * j).abs() < 0.5 {
                    println!(
                        "  event: rho1 = {:.4} pi near 8 pi x {}, sup |u| = {:.4}, J = {:.4}",
                        r.rho.rho1 / PI,
                        j,
                        r.u.sup_norm(),
                        r.j_value.total
                    );
                }
            }
            println!(
                "criterion 7 (quantization events, log only): PASS [{} states reached]",
                records.len()
            );
        }
        Err(SolverError::PathStuck { records, last_sup_norm }) => {
            println!(
                "criterion 7 (quantization events, log only): PASS [stuck after {} states, sup {last_sup_norm:.3}]",
                records.len()
            );
        }
        Err(e) => panic!("continuation failed outside its contract: {e}"),
    }
}
