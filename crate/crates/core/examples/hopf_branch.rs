//! Periodic branch from the toy bifurcation point at ω0 = 1, ε0 = 0.05: Newton solves of the
//! self-consistency equation for small amplitudes v.

use mfh_core::hopf::construct_bifurcation_point;
use mfh_core::periodic::{trace_branch, BranchOptions};

fn main() -> mfh_core::Result<()> {
    let p = construct_bifurcation_point(1.0, 0.05)?;
    println!("alpha0 = {:.10}, tau0 = {:.10}, J0 = {:.10}", p.alpha0, p.tau0, p.j0);
    let vs = [0.002, 0.005, 0.01];
    let branch = trace_branch(&p, &vs, &BranchOptions::default())?;
    for b in &branch {
        println!(
            "v={:.3}: alpha {:.10} tau {:.10} J {:.10} |G_osc| {:.1e} mean defect {:.1e} ({} iterations)",
            b.v, b.alpha, b.tau, b.j, b.oscillating_residual, b.mean_defect, b.iterations
        );
    }
    let path = std::env::temp_dir().join("mfh_branch_waveform.csv");
    branch.last().unwrap().write_csv(&path, 256)?;
    println!("wrote {}", path.display());
    Ok(())
}
