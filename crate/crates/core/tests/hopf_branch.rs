//! Bifurcation point and periodic branch properties.

use mfh_core::hopf::construct_bifurcation_point;
use mfh_core::periodic::{solve_selfconsistent_branch, BranchOptions};

#[test]
fn branch_is_odd_under_half_period_shift() {
    // h(θ + π) flips odd harmonics, so −v gives (α, τ) unchanged and c_n → (−1)^n c_n
    let p = construct_bifurcation_point(1.0, 0.05).unwrap();
    let opts = BranchOptions::default();
    let up = solve_selfconsistent_branch(&p, 0.004, None, &opts).unwrap();
    let down = solve_selfconsistent_branch(&p, -0.004, None, &opts).unwrap();
    assert!((up.alpha - down.alpha).abs() < 1e-10, "{} {}", up.alpha, down.alpha);
    assert!((up.tau - down.tau).abs() < 1e-10, "{} {}", up.tau, down.tau);
    for (k, (a, b)) in up.coeffs.iter().zip(&down.coeffs).enumerate() {
        let sign = if (k + 1) % 2 == 1 { -1.0 } else { 1.0 };
        assert!((a * sign - b).norm() < 1e-10, "mode {}: {a} vs {b}", k + 1);
    }
}

#[test]
fn branch_rejects_amplitudes_beyond_the_cap() {
    let p = construct_bifurcation_point(1.0, 0.05).unwrap();
    assert!(solve_selfconsistent_branch(&p, 0.5, None, &BranchOptions::default()).is_err());
}

#[test]
fn bifurcation_point_checks() {
    let p = construct_bifurcation_point(1.0, 0.05).unwrap();
    assert!(p.checks.isolated_marginal_pair && p.checks.nonresonance && p.checks.transversality);
    assert!((p.tau0 * p.y0 - 1.0).abs() < 1e-15);
    // implicit derivative of the marginal root against a finite-difference track
    let fd = p.z0_prime_fd(1e-5).unwrap();
    assert!((fd.re - p.z0_prime.re).abs() < 1e-5 * p.z0_prime.re.abs().max(1.0));
    assert!((fd.im - p.z0_prime.im).abs() < 1e-5 * p.z0_prime.im.abs().max(1.0));
}
