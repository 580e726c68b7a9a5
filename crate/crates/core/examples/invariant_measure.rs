//! Invariant measures: γ(α) for the toy model against 1/(t* + β), the density and its mass,
//! every α solving α/γ(α) = J, and the J′ identity.

use mfh_core::invariant::{gamma, j_prime_check, solve_alpha_for_j, InvariantMeasure};
use mfh_core::ToyParams;

fn main() -> mfh_core::Result<()> {
    let toy = ToyParams::new(0.1, 1.5, 1.0)?;
    let model = toy.model();
    let g = gamma(&model, 1.0)?;
    println!("gamma(1) = {g:.15}, closed form {:.15}", toy.gamma());
    let inv = InvariantMeasure::new(&model, 1.0)?;
    println!("{:?}", inv.summary());
    for (x, d) in inv.samples(6) {
        println!("  density({x:.4}) = {d:.8}");
    }
    let j = inv.j;
    println!("alphas with J = {j:.6}: {:?}", solve_alpha_for_j(&model, j, None)?);
    let chk = j_prime_check(&model, 1.0)?;
    println!("J' finite difference {:.10}, identity {:.10}, toy closed form {:.10}", chk.j_prime_fd, chk.j_prime_identity, toy.j_prime());
    Ok(())
}
