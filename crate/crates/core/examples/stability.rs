//! Spectral stability of constant-current equilibria: zeros of 1 − J Θ̂ for the toy model
//! and for a smooth linear-rate model.

use mfh_core::spectral::{analyze, SpectralOptions};
use mfh_core::{ModelSpec, ToyParams};

fn main() -> mfh_core::Result<()> {
    let toy = ToyParams::new(0.1, 1.5, 1.0)?;
    let smooth = ModelSpec::poly(1.0, 2.0, -0.5)?;
    for (name, model, alpha) in [("toy m=1.5 beta=0.1", toy.model(), 1.0), ("f=x, b=2-0.5x", smooth, 1.0)] {
        let t = std::time::Instant::now();
        let rep = analyze(&model, alpha, &SpectralOptions::default())?;
        println!("{name}: alpha={alpha} J={:.6} verdict={:?} lambda*={:.6} ({:.2}s)", rep.j, rep.verdict, rep.lambda_star, t.elapsed().as_secs_f64());
        for z in rep.roots.iter().take(6) {
            println!("  root {:+.9} {:+.9}i", z.re, z.im);
        }
    }
    Ok(())
}
