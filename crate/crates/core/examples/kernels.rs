//! Survival and first-jump kernels: toy closed form against the path integrator, the decay
//! certificate and the periodic kernel grid.

use mfh_core::kernels::{certify_decay, first_jump_density, survival, toy_survival, KernelGrid};
use mfh_core::{ModelSpec, PeriodicCurrent};

fn main() -> mfh_core::Result<()> {
    let (m, beta, alpha) = (1.5, 0.1, 1.0);
    let toy = ModelSpec::toy(m, beta)?;
    let a = PeriodicCurrent::constant(alpha);
    for u in [0.2, 0.6, 1.0, 2.0] {
        let h = survival(&toy, &a, u, 0.0, 0.0)?;
        let k = first_jump_density(&toy, &a, u, 0.0, 0.0)?;
        println!("u={u}: H = {h:.12} closed form {:.12} K = {k:.6}", toy_survival(m, beta, alpha, 0.0, u));
    }
    let pc = PeriodicCurrent::cosine(alpha, 1.0, 0.2);
    let cert = certify_decay(&toy, &pc)?;
    println!("decay certificate: {cert:?}, horizon for 1e-14 = {:.3}", cert.horizon(pc.period(), 1e-14));
    let grid = KernelGrid::build(&toy, &pc, 256)?;
    println!("kernel grid: n={} dt={:.4} half-lags={} tail horizon {:.2} periods", grid.n, grid.dt, grid.half_lags, grid.tail_horizon);
    Ok(())
}
