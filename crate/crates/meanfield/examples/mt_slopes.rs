//! Improved Moser–Trudinger family test: along (k+1)-bubble families the
//! functional grows like (16(k+1)π − 2ρ₁) log λ, so the fitted slope changes
//! sign exactly at ρ₁ = 8(k+1)π. A negative slope certifies that adding one
//! more concentration point lowers the functional — the mechanism behind
//! the improved inequality.

use meanfield::bubble::geometric_ladder;
use meanfield::functional::improved_mt_family_test;
use meanfield::{IntensityParam, TorusGrid};
use std::f64::consts::PI;

fn main() {
    let grid = TorusGrid::new(512).unwrap();
    let lambdas = geometric_ladder(16.0, 128.0, 6);
    let a = IntensityParam::new(0.5).unwrap();
    let k = 1u32;

    println!("family test with k = {k} (two-bubble families), boundary at 16 pi");
    println!("{:>10} {:>12} {:>12} {:>8}", "rho1/pi", "slope", "expected", "sign");
    for &rho1_over_pi in &[12.0, 14.0, 15.5, 16.5, 18.0, 20.0] {
        let rho1 = rho1_over_pi * PI;
        let family = improved_mt_family_test(k, rho1, a, 0.0, &lambdas, grid).unwrap();
        let expected = 16.0 * (k as f64 + 1.0) * PI - 2.0 * rho1;
        println!(
            "{:>10.2} {:>12.4} {:>12.4} {:>8}",
            rho1_over_pi,
            family.slope,
            expected,
            if family.slope >= 0.0 { "+" } else { "-" }
        );
    }
    println!(
        "\nslopes track 32 pi - 2 rho1 with a finite-lambda bias that shrinks as the\n\
         ladder extends; the measured sign flip tightens onto rho1 = 16 pi"
    );
}
