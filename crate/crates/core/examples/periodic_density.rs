//! Periodic density ν_t of the potential under a periodic current: mass and rate checks at
//! several phases, written as CSV.

use mfh_core::periodic::{periodic_density, phase_invariant_measure, ChainOptions};
use mfh_core::{ModelSpec, PeriodicCurrent};

fn main() -> mfh_core::Result<()> {
    let model = ModelSpec::poly(2.0, 2.0, -0.5)?;
    let a = PeriodicCurrent::cosine(1.0, 1.0, 0.3);
    let sol = phase_invariant_measure(&model, &a, &ChainOptions::default())?;
    let dens = periodic_density(&model, &a, &sol, 8, 200)?;
    for k in 0..dens.t.len() {
        println!("t={:.4}: mass {:.10} f-moment {:.8} rho {:.8}", dens.t[k], dens.mass[k], dens.f_moment[k], dens.rho[k]);
    }
    println!("max mass error {:.2e}, max rate error {:.2e}", dens.mass_error(), dens.rate_error());
    let path = std::env::temp_dir().join("mfh_periodic_density.csv");
    dens.write_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
