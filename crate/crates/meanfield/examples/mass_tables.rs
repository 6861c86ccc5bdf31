//! Blow-up mass algebra in tables: tower roots γ_m, the admissible η
//! interval, the classification of notable local mass pairs, and sharp
//! thresholds of atomic intensity distributions.

use meanfield::mass::{
    admissible_eta_interval, classify_local_mass, full_limit_beta, masses_from_eta,
    min_mass_rho2, pohozaev_residual, sharp_threshold, solve_gamma_m, Atom, AtomicIntensity,
    IntensityParam, MassPair,
};
use std::f64::consts::PI;

fn main() {
    println!("tower roots gamma_m (second-component mass, 2-pi units)");
    println!("{:>6} {:>4} {:>12} {:>12}", "a", "m", "root-", "root+");
    for &a in &[0.2, 0.35, 0.45] {
        let a = IntensityParam::new(a).unwrap();
        for m in 1..=4 {
            let roots = solve_gamma_m(m, a);
            match roots.roots.as_slice() {
                [] => println!("{:>6} {:>4} {:>12} {:>12}", a.value(), m, "-", "-"),
                [x] => println!("{:>6} {:>4} {:>12.6} {:>12}", a.value(), m, x, "(double)"),
                [x, y] => println!("{:>6} {:>4} {:>12.6} {:>12.6}", a.value(), m, x, y),
                _ => unreachable!("a quadratic has at most two roots"),
            }
        }
    }

    println!("\nadmissible eta interval and second-component deficit threshold");
    println!("{:>6} {:>12} {:>12} {:>16}", "a", "eta_lo", "eta_hi", "min rho2 / pi");
    for &a in &[0.2, 0.3, 0.4, 0.45, 0.6, 0.8] {
        let a = IntensityParam::new(a).unwrap();
        let (lo, hi) = admissible_eta_interval(a);
        println!("{:>6} {:>12.6} {:>12.6} {:>16.6}", a.value(), lo, hi, min_mass_rho2(a) / PI);
    }

    let a = IntensityParam::new(0.3).unwrap();
    println!("\nclassification of local mass pairs at a = {}", a.value());
    let (lo, hi) = admissible_eta_interval(a);
    let eta_mid = 0.5 * (lo + hi);
    let interior = masses_from_eta(eta_mid, a);
    let pairs = [
        ("pure first", MassPair::new(4.0, 0.0)),
        ("pure second", MassPair::new(0.0, 4.0 / (a.value() * a.value()))),
        ("threshold", MassPair::new(4.0, 4.0 / (a.value() * a.value()) - 8.0 / a.value())),
        ("interior", interior),
        ("off catalogue", MassPair::new(3.0, 1.0)),
    ];
    for (label, mp) in pairs {
        println!(
            "  {label:<14} sigma = ({:.6}, {:.6})  pohozaev residual {:+.2e}  -> {:?}",
            mp.sigma1,
            mp.sigma2,
            pohozaev_residual(mp, a),
            classify_local_mass(mp, a, 1e-6),
        );
    }
    println!(
        "  full-limit branch at alpha = 2: beta = {:.6}",
        full_limit_beta(2.0, IntensityParam::new(0.4).unwrap())
    );

    println!("\nsharp thresholds of atomic intensities (coercivity bound on rho1)");
    let distributions: &[(&str, Vec<Atom>)] = &[
        ("single unit atom", vec![Atom { alpha: 1.0, weight: 1.0 }]),
        (
            "two atoms 1:0.5, 0.25:0.5",
            vec![Atom { alpha: 1.0, weight: 0.5 }, Atom { alpha: 0.25, weight: 0.5 }],
        ),
        (
            "signed pair +/-1",
            vec![Atom { alpha: 1.0, weight: 0.5 }, Atom { alpha: -1.0, weight: 0.5 }],
        ),
    ];
    for (label, atoms) in distributions {
        let p = AtomicIntensity::new(atoms.clone()).unwrap();
        let t = sharp_threshold(&p).unwrap();
        println!("  {label:<24} threshold = {:.6} = {:.4} pi", t, t / PI);
    }
}
