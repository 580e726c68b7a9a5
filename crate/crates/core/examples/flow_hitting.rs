//! Flows and hitting times: the toy closed form against quadrature, σ_α for the smooth
//! model, and a flow under a periodic current.

use mfh_core::model::{flow, hitting_time, hitting_time_quadrature, sigma_alpha};
use mfh_core::{ModelSpec, PeriodicCurrent, ToyParams};

fn main() -> mfh_core::Result<()> {
    for alpha in [0.2, 1.0, 3.0] {
        let toy = ToyParams::new(0.1, 1.5, alpha)?;
        let closed = hitting_time(&toy, 0.0);
        let quad = hitting_time_quadrature(&toy.model(), alpha, 0.0, 1.0);
        println!("toy alpha={alpha}: t* = {closed:.15} quadrature {quad:.15} gap {:.1e}", (closed - quad).abs());
    }
    let smooth = ModelSpec::poly(10.0, 2.0, -2.0)?;
    for alpha in [0.0, 0.5] {
        let s = sigma_alpha(&smooth, alpha)?;
        println!("b = 2 - 2x, alpha={alpha}: sigma = {:?}", s.value);
    }
    let a = PeriodicCurrent::cosine(0.5, 1.0, 0.3);
    for t in [0.5, 1.0, 2.0, 5.0] {
        println!("flow from 0 under 0.5 + 0.3cos(t): x({t}) = {:.12}", flow(&smooth, &a, t, 0.0, 0.0)?);
    }
    Ok(())
}
