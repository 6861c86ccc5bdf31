//! Walks the first intensity from deep inside the coercive region up past
//! 8π with warm-started Newton solves, halving the step on failure, and
//! reports each converged state. Depending on the weight profile the branch
//! may fold before the target — both outcomes are informative.

use meanfield::functional::Weights;
use meanfield::solver::{continuation_run, SolveConfig, SolverError};
use meanfield::{IntensityParam, RhoPair, TorusField, TorusGrid};
use std::f64::consts::PI;

fn main() {
    let grid = TorusGrid::new(128).unwrap();
    let a = IntensityParam::new(0.25).unwrap();
    let h = Weights::new(
        TorusField::from_fn(grid, |x, _| 1.0 + 0.3 * (2.0 * PI * x).cos()),
        TorusField::constant(grid, 1.0),
    )
    .unwrap();
    let rho2 = 0.5 * PI;
    let path: Vec<RhoPair> =
        [2.0, 4.0, 6.0, 7.5, 8.0, 8.5, 10.0].iter().map(|&w| RhoPair::new(w * PI, rho2)).collect();

    let cfg = SolveConfig::new(path[0], a, h);
    let print_records = |records: &[meanfield::solver::SolutionRecord]| {
        println!(
            "{:>10} {:>6} {:>12} {:>12} {:>12}",
            "rho1/pi", "iters", "residual", "sup |u|", "J"
        );
        for r in records {
            println!(
                "{:>10.4} {:>6} {:>12.3e} {:>12.6} {:>12.6}",
                r.rho.rho1 / PI,
                r.iterations,
                r.residual_norm,
                r.u.sup_norm(),
                r.j_value.total
            );
            let j = (r.rho.rho1 / (8.0 * PI)).round();
            if j >= 1.0 && (r.rho.rho1 - 8.0 * PI * j).abs() < 0.5 {
                println!("{:>10} near the quantized level 8pi x {}", "^", j);
            }
        }
    };

    match continuation_run(&cfg, &path, 8, &TorusField::zeros(grid)) {
        Ok(records) => {
            print_records(&records);
            println!("\nreached rho1 = {:.4} pi", records.last().unwrap().rho.rho1 / PI);
        }
        Err(SolverError::PathStuck { records, last_sup_norm }) => {
            print_records(&records);
            println!(
                "\npath stuck after {} states (last sup |u| = {:.4}): the warm-started\n\
                 branch folds; larger amplitudes would be needed to continue",
                records.len(),
                last_sup_norm
            );
        }
        Err(e) => panic!("unexpected failure: {e}"),
    }
}
