//! Sweeps the shooting parameters (c0, rho2/rho1) at fixed a and tabulates
//! the limit mass η against its admissible interval.

use meanfield::mass::{admissible_eta_interval, IntensityParam};
use meanfield::shooting::{sweep_eta, SweepStatus};

fn main() {
    let a = IntensityParam::new(0.45).unwrap();
    let c0_grid = [-2.0, 0.0, 2.0];
    let ratio_grid = [0.25, 0.5, 1.0];

    let table = sweep_eta(a, &c0_grid, &ratio_grid);
    let (lo, hi) = admissible_eta_interval(a);
    println!("a = {}   admissible eta in ({lo:.6}, {hi:.6})", a.value());
    println!(
        "{:>6} {:>6} {:>10} {:>10} {:>10} {:>12} {}",
        "c0", "ratio", "sigma1", "sigma2", "eta", "pohozaev", "status"
    );
    for row in &table.rows {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:>10.5}"),
            None => format!("{:>10}", "-"),
        };
        let status = match &row.status {
            SweepStatus::Converged => "converged".to_string(),
            SweepStatus::NonConverged => "nonconverged".to_string(),
            SweepStatus::Failed(e) => format!("failed: {e}"),
        };
        println!(
            "{:>6} {:>6} {} {} {} {:>12} {status}",
            row.c0,
            row.ratio,
            fmt(row.sigma1),
            fmt(row.sigma2),
            fmt(row.eta),
            row.pohozaev_residual.map(|p| format!("{p:+.1e}")).unwrap_or_else(|| "-".into()),
        );
    }

    let violations = table.interval_violations(a);
    if violations.is_empty() {
        println!("\nevery converged cell lies inside the admissible interval");
    } else {
        println!("\n{} converged cells fall outside the interval:", violations.len());
        for row in violations {
            println!("  c0 = {}, ratio = {}, eta = {:?}", row.c0, row.ratio, row.eta);
        }
    }
}
