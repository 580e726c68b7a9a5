//! Constructs the toy bifurcation point at ω0 = 1, ε0 = 0.05, prints its checks, compares
//! 𝔷₀′ with a finite-difference root track and extrapolates the small-ε0 asymptotics.

use mfh_core::hopf::{asymptotic_fit, construct_bifurcation_point};

fn main() -> mfh_core::Result<()> {
    let p = construct_bifurcation_point(1.0, 0.05)?;
    println!("{}", mfh_core::io::to_json_string(&p)?);
    let fd = p.z0_prime_fd(1e-5)?;
    println!("Z0' implicit = {:.8} {:+.8}i, tracked root = {:.8} {:+.8}i", p.z0_prime.re, p.z0_prime.im, fd.re, fd.im);
    println!("Re Z0' leading order = {:.8}", p.z0_prime_leading);
    let fit = asymptotic_fit(1.0, &[0.01, 0.02, 0.04])?;
    println!("beta0/eps0 -> {:.6} (expected 1)", fit.beta_slope_limit);
    println!("d0/eps0^2 -> {:.6} (expected {:.6})", fit.d_curvature_limit, fit.d_curvature_expected);
    Ok(())
}
