//! Samples the imaginary-root curve at ω = 1, locates its multiple points and writes the
//! curve and the (β, J) locus at m = 3/2 as CSV files.

use mfh_core::hopf::{curve_samples, curve_self_intersection_check, expected_multiple_points, coupling_locus_samples, write_curve_csv, write_locus_csv};
use std::f64::consts::PI;

fn main() -> mfh_core::Result<()> {
    let omega = 1.0;
    let y_hi = 15.5 * PI;
    let n = (y_hi * 64.0 / omega) as usize + 1;
    let samples = curve_samples(omega, 1e-3, y_hi, n)?;
    let grid: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let points = curve_self_intersection_check(omega, &grid)?;
    println!("expected multiple points: {:?}", expected_multiple_points(omega));
    for p in &points {
        println!("multiple point (beta, delta) = ({:.3e}, {:.10}) visited {} times", p.beta, p.delta, p.ys);
    }
    let dir = std::env::temp_dir().join("mfh_hopf_curve");
    std::fs::create_dir_all(&dir)?;
    write_curve_csv(&dir.join("curve.csv"), &samples)?;
    let locus = coupling_locus_samples(1.5, 0.05, y_hi, 2000);
    write_locus_csv(&dir.join("locus.csv"), &locus)?;
    println!("wrote {} curve and {} (beta, J) samples to {}", samples.len(), locus.len(), dir.display());
    Ok(())
}
