//! Acceptance criteria. Runs sequentially (runtime limits are part of several criteria) and
//! prints one PASS/FAIL line per criterion. Pass criterion numbers as arguments to run a
//! subset.

use mfh_core::hopf::{
    asymptotic_fit, construct_bifurcation_point, curve_denominator, curve_self_intersection_check,
    expected_multiple_points, coupling_locus_samples, imaginary_root_curve, u_eval, write_curve_csv, write_locus_csv,
    CurveSample,
};
use mfh_core::invariant::{gamma, j_prime_check};
use mfh_core::model::hitting_time;
use mfh_core::particle::{detect_oscillation, simulate, InitLaw, SimConfig};
use mfh_core::periodic::{phase_invariant_measure, trace_branch, BranchOptions, ChainMethod, ChainOptions};
use mfh_core::spectral::{analyze, SpectralOptions};
use mfh_core::volterra::solve_constant_current;
use mfh_core::{ModelSpec, PeriodicCurrent, ToyParams};
use num_complex::Complex64 as C;
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_toy_gamma() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in [1.2, 1.5, 3.0] {
        for beta in [0.05, 0.1, 0.5] {
            for alpha in [0.2, 1.0, 3.0] {
                let toy = ToyParams::new(beta, m, alpha).unwrap();
                let g = gamma(&toy.model(), alpha).unwrap();
                let closed = 1.0 / (hitting_time(&toy, 0.0) + beta);
                worst = worst.max((g - closed).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-8 && secs < 1.0, format!("max |gamma - 1/(t*+beta)| = {worst:.2e} (tol 1e-8), {secs:.3}s (limit 1s)"))
}

fn c2_c3_volterra() -> (Outcome, Outcome) {
    let toy = ModelSpec::toy(1.5, 0.1).unwrap();
    let start = Instant::now();
    let sol = solve_constant_current(&toy, 1.0, 20.0, 1e-3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let half = solve_constant_current(&toy, 1.0, 20.0, 5e-4).unwrap();
    let ratio = sol.residual_mass / half.residual_mass;
    let c2 = outcome(
        sol.residual_mass <= 1e-4 && ratio >= 3.5 && secs < 10.0,
        format!(
            "residual {:.3e} (tol 1e-4), halving ratio {ratio:.2} (min 3.5), {secs:.2}s (limit 10s)",
            sol.residual_mass
        ),
    );
    let g = ToyParams::new(0.1, 1.5, 1.0).unwrap().gamma();
    let gap = (sol.r.last().unwrap() - g).abs();
    let c3 = outcome(gap <= 1e-4, format!("|r(20) - gamma| = {gap:.3e} (tol 1e-4)"));
    (c2, c3)
}

fn c4_u_curve() -> Outcome {
    let start = Instant::now();
    let (lo, hi) = (0.1, 15.5 * PI);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 0..200 {
        let y = lo + (hi - lo) * k as f64 / 199.0;
        if curve_denominator(1.0, y).abs() < 1e-9 {
            continue;
        }
        let (b, d) = imaginary_root_curve(1.0, y).unwrap();
        worst = worst.max(u_eval(b, d, 1.0, C::new(0.0, y)).norm());
        count += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 0.1 && count >= 190,
        format!("max |U| = {worst:.2e} over {count} y (tol 1e-12), {secs:.4}s (limit 0.1s)"),
    )
}

fn c5_curve_and_locus() -> Outcome {
    let dir = std::env::temp_dir().join(format!("mfh_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let y_hi = 15.5 * PI;
    let n = (y_hi * 64.0) as usize;
    let samples: Vec<CurveSample> = (0..n)
        .map(|k| 1e-3 + (y_hi - 1e-3) * k as f64 / (n - 1) as f64)
        .filter(|&y| curve_denominator(1.0, y).abs() > 1e-12)
        .map(|y| {
            let (beta0, delta0) = imaginary_root_curve(1.0, y).unwrap();
            CurveSample { y, beta0, delta0 }
        })
        .collect();
    let grid: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let a = dir.join("curve.csv");
    let b = dir.join("locus.csv");
    write_curve_csv(&a, &samples).unwrap();
    write_locus_csv(&b, &coupling_locus_samples(1.5, 0.05, y_hi, 2000)).unwrap();
    let written = std::fs::metadata(&a).map(|m| m.len() > 0).unwrap_or(false)
        && std::fs::metadata(&b).map(|m| m.len() > 0).unwrap_or(false);
    let _ = std::fs::remove_dir_all(&dir);
    match curve_self_intersection_check(1.0, &grid) {
        Err(e) => outcome(false, format!("intersection check failed: {e}")),
        Ok(points) => {
            let expected = expected_multiple_points(1.0);
            let worst = expected
                .iter()
                .map(|&(eb, ed)| {
                    points.iter().map(|p| ((p.beta - eb).powi(2) + (p.delta - ed).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            outcome(
                written && worst <= 1e-8 && points.len() == 2,
                format!("{} multiple points, max distance to (0,0), (0, 2/(1+e^-1)) = {worst:.2e} (tol 1e-8), CSVs written", points.len()),
            )
        }
    }
}

fn c6_transforms() -> Outcome {
    let toy = ToyParams::new(0.1, 1.5, 1.0).unwrap();
    let chk = j_prime_check(&toy.model(), 1.0).unwrap();
    let rel = (chk.gamma_prime_fd - chk.theta_hat_0).abs() / chk.theta_hat_0.abs();
    let jgap = (chk.j_prime_fd - toy.j_prime()).abs();
    outcome(
        rel <= 1e-4 && jgap <= 1e-6,
        format!("gamma' vs Theta(0) relative gap {rel:.2e} (tol 1e-4), toy J' gap {jgap:.2e} (tol 1e-6)"),
    )
}

fn c7_phase_chain() -> Outcome {
    let toy = ModelSpec::toy(1.5, 0.1).unwrap();
    let g = gamma(&toy, 1.0).unwrap();
    let opts = ChainOptions { nodes: 2048, modes: 64, method: Some(ChainMethod::Grid) };
    let start = Instant::now();
    let flat = phase_invariant_measure(&toy, &PeriodicCurrent::constant_with_tau(1.0, 1.0), &opts).unwrap();
    let pert = phase_invariant_measure(&toy, &PeriodicCurrent::cosine(1.0, 1.0, 0.05), &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let uniform = 1.0 / (2.0 * PI);
    let pi_gap = flat.pi.iter().map(|p| (p - uniform).abs()).fold(0.0, f64::max);
    let rho_gap = flat.rho.iter().map(|r| (r - g).abs()).fold(0.0, f64::max);
    let mean_gap = (pert.mean_rate() - g).abs();
    outcome(
        pi_gap <= 1e-6 && rho_gap <= 1e-6 && mean_gap <= 1e-6 && secs < 30.0,
        format!(
            "constant: |pi - 1/2pi| {pi_gap:.2e}, |rho - gamma| {rho_gap:.2e}; alpha+0.05cos: |mean rho - gamma| {mean_gap:.2e} (tol 1e-6 each), {secs:.1}s at 2048 nodes (limit 30s)"
        ),
    )
}

fn c8_marginal_root() -> Outcome {
    let p = construct_bifurcation_point(1.0, 0.05).unwrap();
    let im_max = 40f64.max((3.0 + 2.0 * p.d0) / p.beta0);
    let opts = SpectralOptions { re_lo: Some(-0.05), re_hi: 2.0, im_max, margin: 1e-6 };
    let rep = analyze(&p.toy().model(), p.alpha0, &opts).unwrap();
    let on_axis: Vec<C> = rep.roots.iter().copied().filter(|z| z.re.abs() <= 1e-6).collect();
    let im_gap = on_axis.iter().map(|z| (z.im.abs() - p.y0).abs()).fold(0.0, f64::max);
    let re_gap = on_axis.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let conj = on_axis.len() == 2 && (on_axis[0] + on_axis[1]).im.abs() <= 2e-6;
    outcome(
        conj && im_gap <= 1e-6 && p.checks.nonresonance,
        format!(
            "{} roots on the axis, max |Re| {re_gap:.2e}, max |Im - y0| {im_gap:.2e} (tol 1e-6), verdict {:?}, nonresonance margin {:.3e} over 2<=|n|<=64",
            on_axis.len(),
            rep.verdict,
            p.nonresonance_margin
        ),
    )
}

fn c9_asymptotics() -> Outcome {
    let fit = asymptotic_fit(1.0, &[0.01, 0.02, 0.04]).unwrap();
    let expected = std::f64::consts::E / (2.0 * (std::f64::consts::E - 1.0)) * (1.0 + 4.0 * PI * PI);
    let eb = (fit.beta_slope_limit - 1.0).abs();
    let ed = (fit.d_curvature_limit - expected).abs() / expected;
    outcome(
        eb <= 0.05 && ed <= 0.05,
        format!(
            "beta0/eps0 -> {:.6} (rel err {eb:.2e}), d0/eps0^2 -> {:.6} vs {expected:.6} (rel err {ed:.2e}); tol 5%",
            fit.beta_slope_limit, fit.d_curvature_limit
        ),
    )
}

fn c10_branch() -> Outcome {
    let p = construct_bifurcation_point(1.0, 0.05).unwrap();
    let vs: Vec<f64> = (1..=10).map(|k| 0.002 * k as f64).collect();
    let start = Instant::now();
    let branch = trace_branch(&p, &vs, &BranchOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let n = 512;
    let (mut worst_res, mut worst_osc, mut worst_norm, mut worst_mean): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut dists = Vec::new();
    for b in &branch {
        let a = b.current();
        let samples: Vec<f64> = (0..n).map(|j| a.value(a.period() * j as f64 / n as f64)).collect();
        let (mut cc, mut ss, mut mean) = (0.0, 0.0, 0.0);
        for (j, s) in samples.iter().enumerate() {
            let th = 2.0 * PI * j as f64 / n as f64;
            cc += s * th.cos();
            ss += s * th.sin();
            mean += s;
        }
        let (cc, ss, mean) = (2.0 * cc / n as f64, 2.0 * ss / n as f64, mean / n as f64);
        worst_norm = worst_norm.max((cc - b.v).abs()).max(ss.abs());
        worst_mean = worst_mean.max((mean - b.alpha).abs());
        worst_res = worst_res.max(b.residual);
        worst_osc = worst_osc.max(b.oscillating_residual);
        dists.push(((b.alpha - p.alpha0).powi(2) + (b.tau - p.tau0).powi(2)).sqrt());
    }
    let monotone = dists.windows(2).all(|w| w[0] < w[1]);
    outcome(
        worst_res <= 1e-6 && worst_norm <= 1e-10 && worst_mean <= 1e-8 && monotone && secs < 300.0,
        format!(
            "max ||G|| {worst_res:.2e} (tol 1e-6; oscillating part {worst_osc:.2e}), normalization {worst_norm:.2e} (tol 1e-10), |mean a - alpha| {worst_mean:.2e} (tol 1e-8), distance to (alpha0, tau0) monotone: {monotone} ({:.2e} .. {:.2e}), {secs:.0}s (limit 300s)",
            dists[0],
            dists[dists.len() - 1]
        ),
    )
}

fn c11_particle_mean_field() -> Outcome {
    let toy = ModelSpec::toy(1.5, 0.1).unwrap();
    let g = gamma(&toy, 0.0).unwrap();
    let cfg = SimConfig { n: 100_000, j: 0.0, init: InitLaw::InvariantAt(0.0), t_end: 200.0, seed: 11, ..SimConfig::default() };
    let start = Instant::now();
    let out = simulate(&toy, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (mean, se) = out.batch_mean_rate(0.0, 8);
    let z = (mean - g).abs() / se;
    outcome(
        z <= 3.0 && secs < 120.0,
        format!("rate {mean:.7} vs gamma(0) {g:.7}: {z:.2} SE (SE {se:.2e}, 8 batches; tol 3 SE), {secs:.1}s (limit 120s)"),
    )
}

fn c12_oscillation() -> Outcome {
    let model = ModelSpec::poly(10.0, 2.0, -2.0).unwrap();
    let start = Instant::now();
    let mut reports = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = SimConfig { n: 50_000, j: 0.8, init: InitLaw::Uniform01, t_end: 40.0, seed, ..SimConfig::default() };
        let out = simulate(&model, &cfg).unwrap();
        reports.push(detect_oscillation(&out.rate, cfg.dt_bin, 10.0, 4).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let bins: Vec<usize> = reports.iter().map(|r| r.bin).collect();
    let spread = bins.iter().max().unwrap() - bins.iter().min().unwrap();
    let min_snr = reports.iter().map(|r| r.snr).fold(f64::INFINITY, f64::min);
    let all_osc = reports.iter().all(|r| r.oscillating);
    outcome(
        all_osc && min_snr >= 5.0 && spread <= 1 && secs < 300.0,
        format!(
            "oscillating {all_osc}, min snr {min_snr:.1} (min 5), peak bins {bins:?} at {:.3} Hz (spread <= 1), {secs:.0}s for 3 seeds (limit 300s)",
            reports[0].frequency
        ),
    )
}

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: usize| args.is_empty() || args.contains(&k);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |k: usize, o: Outcome| {
        println!("{} criterion {k:>2}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    if want(1) {
        record(1, c1_toy_gamma());
    }
    if want(2) || want(3) {
        let (c2, c3) = c2_c3_volterra();
        record(2, c2);
        record(3, c3);
    }
    if want(4) {
        record(4, c4_u_curve());
    }
    if want(5) {
        record(5, c5_curve_and_locus());
    }
    if want(6) {
        record(6, c6_transforms());
    }
    if want(7) {
        record(7, c7_phase_chain());
    }
    if want(8) {
        record(8, c8_marginal_root());
    }
    if want(9) {
        record(9, c9_asymptotics());
    }
    if want(10) {
        record(10, c10_branch());
    }
    if want(11) {
        record(11, c11_particle_mean_field());
    }
    if want(12) {
        record(12, c12_oscillation());
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    println!("acceptance: {} passed, {} failed {:?}", results.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
