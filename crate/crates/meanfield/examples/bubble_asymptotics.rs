//! Fits the large-λ asymptotics of k-bubble test fields: Dirichlet energy
//! 16kπ·log λ, volume log ∫e^φ ~ −2 log λ, average ∫φ ~ −4 log λ, and the
//! pointwise gradient bound |∇φ| ≤ 2λ.

use meanfield::bubble::{
    geometric_ladder, separated_barycenter, verify_gradient_estimate, verify_volume_estimates,
};
use meanfield::TorusGrid;
use std::f64::consts::PI;

fn main() {
    let grid = TorusGrid::new(256).unwrap();
    let lambdas = geometric_ladder(8.0, 64.0, 7);

    for k in 1..=2usize {
        let sigma = separated_barycenter(k).unwrap();
        let grad = verify_gradient_estimate(&sigma, &lambdas, grid).unwrap();
        let vol = verify_volume_estimates(&sigma, &lambdas, grid).unwrap();

        println!("k = {k} bubbles on a {0}x{0} grid", grid.n());
        println!("{:>10} {:>14} {:>12} {:>12}", "lambda", "energy", "log_int", "avg");
        for row in &grad.rows {
            println!(
                "{:>10.3} {:>14.6} {:>12.6} {:>12.6}",
                row.lambda, row.energy, row.log_int, row.avg
            );
        }
        let expected = 16.0 * k as f64 * PI;
        println!(
            "  energy slope   {:>10.4}  expected 16kpi = {:.4}  ({:+.2}%)",
            grad.energy_slope,
            expected,
            100.0 * (grad.energy_slope - expected) / expected
        );
        println!("  log_int coeff  {:>10.4}  expected -2", vol.log_int_coeff);
        println!("  avg coeff      {:>10.4}  expected -4", vol.avg_coeff);
        println!("  max |grad|/2l  {:>10.4}  bound 1\n", grad.max_gradient_ratio / 2.0);
    }
}
