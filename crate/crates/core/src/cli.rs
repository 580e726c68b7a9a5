//! Command-line surface: JSON configs with flag overrides, CSV/JSON outputs and run manifests.

use crate::error::{MfhError, Result};
use crate::hopf::{
    construct_bifurcation_point, curve_denominator, curve_self_intersection_check, expected_multiple_points,
    coupling_locus_samples, imaginary_root_curve, write_curve_csv, write_locus_csv, CurveSample,
};
use crate::invariant::{j_prime_check, solve_alpha_for_j, InvariantMeasure};
use crate::io::{write_csv, write_json};
use crate::model::{AffineConfig, ModelConfig, ModelSpec};
use crate::particle::{detect_oscillation, simulate, InitLaw, SimConfig};
use crate::periodic::{trace_branch, BranchOptions, ChainOptions};
use crate::spectral::{analyze, SpectralOptions, Verdict};
use crate::volterra::{solve_constant_current, stationary_rate_gap};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "mfh", version, about = "Mean-field integrate-and-fire networks")]
pub struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "MFH_OUT_DIR", default_value = "mfh-out")]
    pub out: PathBuf,
    /// JSON config file, or a manifest from a previous run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Particle system run: rate series, raster and oscillation report.
    Simulate(SimulateArgs),
    /// Invariant measure and rate at a current α or coupling J.
    Invariant(InvariantArgs),
    /// Spectral stability verdicts over an α or J grid.
    Stability(StabilityArgs),
    /// Imaginary-root curve at fixed ω and the (β, J) locus at fixed m.
    HopfCurve(HopfCurveArgs),
    /// Toy bifurcation point at (ω0, ε0).
    BifurcationPoint(BifurcationArgs),
    /// Periodic branch continued from the bifurcation point.
    Branch(BranchArgs),
    /// Volterra rate solve under a constant current.
    VolterraCheck(VolterraArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Invariant(_) => "invariant",
            Command::Stability(_) => "stability",
            Command::HopfCurve(_) => "hopf-curve",
            Command::BifurcationPoint(_) => "bifurcation-point",
            Command::Branch(_) => "branch",
            Command::VolterraCheck(_) => "volterra-check",
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct ModelArgs {
    /// toy | poly | poly10 | zero
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    /// `zero` keeps the drift and switches spiking off.
    #[arg(long)]
    pub rate: Option<String>,
}

fn drift_of(cfg: &ModelConfig) -> [f64; 2] {
    match cfg {
        ModelConfig::Toy { m, .. } => [*m, -1.0],
        ModelConfig::Poly { drift, .. } | ModelConfig::Zero { drift } => drift.affine,
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ModelConfig) -> Result<()> {
        if let Some(kind) = &self.model {
            *cfg = match kind.as_str() {
                "toy" => ModelConfig::Toy { beta: 0.1, m: 1.5 },
                "poly10" => ModelConfig::Poly { p: 10.0, drift: AffineConfig { affine: [2.0, -2.0] } },
                "poly" => ModelConfig::Poly { p: 2.0, drift: AffineConfig { affine: drift_of(cfg) } },
                "zero" => ModelConfig::Zero { drift: AffineConfig { affine: drift_of(cfg) } },
                other => return Err(MfhError::Config(format!("unknown model '{other}'"))),
            };
        }
        match cfg {
            ModelConfig::Toy { beta, m } => {
                set(beta, self.beta);
                set(m, self.m);
                if self.p.is_some() || self.c0.is_some() || self.c1.is_some() {
                    return Err(MfhError::Config("--p/--c0/--c1 do not apply to the toy model".into()));
                }
            }
            ModelConfig::Poly { p, drift } => {
                set(p, self.p);
                set(&mut drift.affine[0], self.c0);
                set(&mut drift.affine[1], self.c1);
            }
            ModelConfig::Zero { drift } => {
                set(&mut drift.affine[0], self.c0);
                set(&mut drift.affine[1], self.c1);
            }
        }
        match self.rate.as_deref() {
            None => {}
            Some("zero") => *cfg = ModelConfig::Zero { drift: AffineConfig { affine: drift_of(cfg) } },
            Some(other) => return Err(MfhError::Config(format!("unknown rate '{other}'"))),
        }
        Ok(())
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn toy_default() -> ModelConfig {
    ModelConfig::Toy { beta: 0.1, m: 1.5 }
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelConfig,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub init: InitLaw,
    pub t_end: f64,
    pub dt_bin: f64,
    pub seed: u64,
    pub dt_max: f64,
    pub hazard_cap: f64,
    pub dt_min: f64,
    pub raster_neurons: usize,
    /// Discarded before rate statistics and oscillation detection.
    pub burn_in: f64,
    /// Bartlett segments for the periodogram.
    pub segments: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            model: ModelConfig::Poly { p: 10.0, drift: AffineConfig { affine: [2.0, -2.0] } },
            n: 50_000,
            j: 0.8,
            init: InitLaw::Uniform01,
            t_end: 40.0,
            dt_bin: s.dt_bin,
            seed: 1,
            dt_max: s.dt_max,
            hazard_cap: s.hazard_cap,
            dt_min: s.dt_min,
            raster_neurons: s.raster_neurons,
            burn_in: 10.0,
            segments: 4,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "J")]
    pub j: Option<f64>,
    /// uniform | point:<x> | invariant:<alpha>
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt_bin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub raster_neurons: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<f64>,
}

fn parse_init(s: &str) -> Result<InitLaw> {
    let bad = || MfhError::Config(format!("bad --init '{s}'"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
    match s.split_once(':') {
        None if s == "uniform" => Ok(InitLaw::Uniform01),
        Some(("point", v)) => Ok(InitLaw::PointMass(num(v)?)),
        Some(("invariant", v)) => Ok(InitLaw::InvariantAt(num(v)?)),
        _ => Err(bad()),
    }
}

impl SimulateArgs {
    fn apply(&self, c: &mut SimulateConfig) -> Result<()> {
        self.model.apply(&mut c.model)?;
        set(&mut c.n, self.n);
        set(&mut c.j, self.j);
        set(&mut c.t_end, self.t_end);
        set(&mut c.dt_bin, self.dt_bin);
        set(&mut c.seed, self.seed);
        set(&mut c.raster_neurons, self.raster_neurons);
        set(&mut c.burn_in, self.burn_in);
        if let Some(s) = &self.init {
            c.init = parse_init(s)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SimulateReport {
    mean_rate: f64,
    standard_error: f64,
    total_spikes: u64,
    steps: u64,
    oscillation: Option<crate::particle::OscillationReport>,
}

fn cmd_simulate(c: &SimulateConfig, out: &Path) -> Result<Vec<String>> {
    let model = ModelSpec::from_config(&c.model)?;
    let sim = SimConfig {
        n: c.n,
        j: c.j,
        init: c.init,
        t_end: c.t_end,
        dt_bin: c.dt_bin,
        seed: c.seed,
        dt_max: c.dt_max,
        hazard_cap: c.hazard_cap,
        dt_min: c.dt_min,
        raster_neurons: c.raster_neurons,
    };
    let res = simulate(&model, &sim)?;
    res.write_rate_csv(&out.join("rate.csv"))?;
    res.write_raster_csv(&out.join("raster.csv"))?;
    let from = if c.burn_in < c.t_end { c.burn_in } else { 0.0 };
    let (mean_rate, standard_error) = res.batch_mean_rate(from, 8);
    let report = SimulateReport {
        mean_rate,
        standard_error,
        total_spikes: res.total_spikes,
        steps: res.steps,
        oscillation: detect_oscillation(&res.rate, c.dt_bin, c.burn_in, c.segments).ok(),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(vec!["rate.csv".into(), "raster.csv".into(), "report.json".into()])
}

// ---------------------------------------------------------------- invariant

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantConfig {
    pub model: ModelConfig,
    pub alpha: Option<f64>,
    /// When set, every α with α/γ(α) = J is reported.
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub samples: usize,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self { model: toy_default(), alpha: None, j: None, samples: 400 }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct InvariantArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "J")]
    pub j: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

fn cmd_invariant(c: &InvariantConfig, out: &Path) -> Result<Vec<String>> {
    let model = ModelSpec::from_config(&c.model)?;
    let alphas = match (c.j, c.alpha) {
        (Some(j), _) => solve_alpha_for_j(&model, j, None)?,
        (None, a) => vec![a.unwrap_or(1.0)],
    };
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for (k, &alpha) in alphas.iter().enumerate() {
        let inv = InvariantMeasure::new(&model, alpha)?;
        let name = format!("invariant_density_{k}.csv");
        write_csv(&out.join(&name), &["x", "density"], inv.samples(c.samples).into_iter().map(|(x, d)| vec![x, d]))?;
        files.push(name);
        let jp = j_prime_check(&model, alpha).ok();
        reports.push(serde_json::json!({ "summary": inv.summary(), "j_prime": jp }));
    }
    write_json(&out.join("invariant.json"), &reports)?;
    files.push("invariant.json".into());
    Ok(files)
}

// ---------------------------------------------------------------- stability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.n - 1).max(1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub model: ModelConfig,
    pub alphas: Vec<f64>,
    pub alpha_grid: Option<Grid>,
    /// Couplings; each is resolved to all α with α/γ(α) = J.
    #[serde(rename = "Js")]
    pub js: Vec<f64>,
    pub im_max: f64,
    pub re_hi: f64,
    pub margin: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let o = SpectralOptions::default();
        Self { model: toy_default(), alphas: vec![], alpha_grid: None, js: vec![], im_max: o.im_max, re_hi: o.re_hi, margin: o.margin }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated α values.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Comma-separated J values.
    #[arg(long = "J", value_delimiter = ',')]
    pub j: Option<Vec<f64>>,
    /// α grid as lo:hi:n.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long)]
    pub im_max: Option<f64>,
}

fn parse_grid(s: &str) -> Result<Grid> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || MfhError::Config(format!("bad grid '{s}', expected lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Grid {
        lo: parts[0].parse().map_err(|_| bad())?,
        hi: parts[1].parse().map_err(|_| bad())?,
        n: parts[2].parse().map_err(|_| bad())?,
    })
}

fn cmd_stability(c: &StabilityConfig, out: &Path) -> Result<Vec<String>> {
    let model = ModelSpec::from_config(&c.model)?;
    let mut alphas = c.alphas.clone();
    if let Some(g) = &c.alpha_grid {
        alphas.extend(g.points());
    }
    for &j in &c.js {
        alphas.extend(solve_alpha_for_j(&model, j, None)?);
    }
    if alphas.is_empty() {
        alphas.push(1.0);
    }
    let opts = SpectralOptions { re_lo: None, re_hi: c.re_hi, im_max: c.im_max, margin: c.margin };
    let reports = alphas.iter().map(|&a| analyze(&model, a, &opts)).collect::<Result<Vec<_>>>()?;
    write_csv(
        &out.join("stability.csv"),
        &["alpha", "J", "verdict", "max_re", "lambda_star"],
        reports.iter().map(|r| {
            let code = match r.verdict {
                Verdict::Stable => -1.0,
                Verdict::Marginal => 0.0,
                Verdict::Unstable => 1.0,
            };
            let max_re = r.roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            vec![r.alpha, r.j, code, max_re, r.lambda_star]
        }),
    )?;
    write_json(&out.join("stability.json"), &reports)?;
    Ok(vec!["stability.csv".into(), "stability.json".into()])
}

// ---------------------------------------------------------------- hopf-curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfCurveConfig {
    pub omega: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    /// Samples per unit of y.
    pub density: f64,
    /// m for the (β, J) locus.
    pub m: f64,
    pub locus_samples: usize,
}

impl Default for HopfCurveConfig {
    fn default() -> Self {
        Self { omega: 1.0, y_lo: 1e-3, y_hi: 15.5 * std::f64::consts::PI, density: 64.0, m: 1.5, locus_samples: 2000 }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct HopfCurveArgs {
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub y_hi: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
}

fn cmd_hopf_curve(c: &HopfCurveConfig, out: &Path) -> Result<Vec<String>> {
    if !(c.omega > 0.0 && c.y_hi > c.y_lo && c.y_lo > 0.0) {
        return Err(MfhError::InvalidParameter("need ω > 0 and 0 < y_lo < y_hi".into()));
    }
    let n = ((c.y_hi - c.y_lo) * c.density) as usize + 2;
    let samples: Vec<CurveSample> = (0..n)
        .map(|k| c.y_lo + (c.y_hi - c.y_lo) * k as f64 / (n - 1) as f64)
        .filter(|&y| curve_denominator(c.omega, y).abs() > 1e-12)
        .map(|y| imaginary_root_curve(c.omega, y).map(|(beta0, delta0)| CurveSample { y, beta0, delta0 }))
        .collect::<Result<_>>()?;
    write_curve_csv(&out.join("hopf_curve.csv"), &samples)?;
    let grid: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let points = curve_self_intersection_check(c.omega, &grid)?;
    let locus = coupling_locus_samples(c.m, c.y_lo.max(0.05), c.y_hi, c.locus_samples);
    write_locus_csv(&out.join("hopf_locus.csv"), &locus)?;
    let expected = expected_multiple_points(c.omega);
    write_json(&out.join("multiple_points.json"), &serde_json::json!({ "found": points, "expected": expected }))?;
    Ok(vec!["hopf_curve.csv".into(), "hopf_locus.csv".into(), "multiple_points.json".into()])
}

// ---------------------------------------------------------------- bifurcation-point

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationConfig {
    pub omega0: f64,
    pub epsilon0: f64,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        Self { omega0: 1.0, epsilon0: 0.05 }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct BifurcationArgs {
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
}

fn cmd_bifurcation_point(c: &BifurcationConfig, out: &Path) -> Result<Vec<String>> {
    let p = construct_bifurcation_point(c.omega0, c.epsilon0)?;
    write_json(&out.join("bifurcation_point.json"), &p)?;
    Ok(vec!["bifurcation_point.json".into()])
}

// ---------------------------------------------------------------- branch

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchConfig {
    pub omega0: f64,
    pub epsilon0: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub count: usize,
    pub modes: usize,
    pub chain_nodes: usize,
    pub chain_modes: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Samples per period in the waveform CSVs.
    pub waveform_samples: usize,
}

impl Default for BranchConfig {
    fn default() -> Self {
        let o = BranchOptions::default();
        Self {
            omega0: 1.0,
            epsilon0: 0.05,
            v_min: 0.002,
            v_max: 0.02,
            count: 10,
            modes: o.modes,
            chain_nodes: o.chain.nodes,
            chain_modes: o.chain.modes,
            tol: o.tol,
            max_iter: o.max_iter,
            waveform_samples: 256,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct BranchArgs {
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    #[arg(long)]
    pub v_min: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
}

fn cmd_branch(c: &BranchConfig, out: &Path) -> Result<Vec<String>> {
    let p = construct_bifurcation_point(c.omega0, c.epsilon0)?;
    let vs = Grid { lo: c.v_min, hi: c.v_max, n: c.count }.points();
    let opts = BranchOptions {
        modes: c.modes,
        chain: ChainOptions { nodes: c.chain_nodes, modes: c.chain_modes, method: None },
        tol: c.tol,
        max_iter: c.max_iter,
        ..BranchOptions::default()
    };
    let branch = trace_branch(&p, &vs, &opts)?;
    write_csv(
        &out.join("branch.csv"),
        &["v", "alpha", "tau", "J", "residual", "oscillating_residual", "mean_defect", "mean_a", "distance"],
        branch.iter().map(|b| {
            let dist = ((b.alpha - p.alpha0).powi(2) + (b.tau - p.tau0).powi(2)).sqrt();
            vec![b.v, b.alpha, b.tau, b.j, b.residual, b.oscillating_residual, b.mean_defect, b.mean_a, dist]
        }),
    )?;
    let mut files = vec!["branch.csv".to_string()];
    for (k, b) in branch.iter().enumerate() {
        let name = format!("branch_waveform_{k}.csv");
        b.write_csv(&out.join(&name), c.waveform_samples)?;
        files.push(name);
    }
    write_json(&out.join("branch.json"), &serde_json::json!({ "point": p, "branch": branch }))?;
    files.push("branch.json".into());
    Ok(files)
}

// ---------------------------------------------------------------- volterra-check

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolterraConfig {
    pub model: ModelConfig,
    pub alpha: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for VolterraConfig {
    fn default() -> Self {
        Self { model: toy_default(), alpha: 1.0, t_end: 20.0, dt: 1e-3 }
    }
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct VolterraArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

fn cmd_volterra(c: &VolterraConfig, out: &Path) -> Result<Vec<String>> {
    let model = ModelSpec::from_config(&c.model)?;
    let sol = solve_constant_current(&model, c.alpha, c.t_end, c.dt)?;
    write_csv(&out.join("volterra.csv"), &["t", "r"], sol.t.iter().zip(&sol.r).map(|(t, r)| vec![*t, *r]))?;
    let gamma = sol.gamma.unwrap_or(f64::NAN);
    let r_end = *sol.r.last().unwrap_or(&f64::NAN);
    let fit = stationary_rate_gap(&sol, gamma).ok();
    write_json(
        &out.join("volterra.json"),
        &serde_json::json!({
            "residual_mass": sol.residual_mass,
            "gamma": gamma,
            "r_end": r_end,
            "gap_end": (r_end - gamma).abs(),
            "decay": fit,
        }),
    )?;
    Ok(vec!["volterra.csv".into(), "volterra.json".into()])
}

// ---------------------------------------------------------------- driver

#[derive(Serialize, Deserialize, Debug)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub config_sha256: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

/// Config layer read from `--config`: a bare config object or a manifest.
fn load_layer(path: &Path, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| MfhError::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| MfhError::Config(format!("{}: {e}", path.display())))?;
    match (v.get("command").and_then(Value::as_str), v.get("config")) {
        (Some(cmd), Some(cfg)) => {
            if cmd != command {
                return Err(MfhError::Config(format!("manifest is for '{cmd}', not '{command}'")));
            }
            Ok(cfg.clone())
        }
        _ => Ok(v),
    }
}

fn resolve<T: DeserializeOwned + Default>(layer: Option<Value>) -> Result<T> {
    match layer {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v).map_err(|e| MfhError::Config(format!("config: {e}"))),
    }
}

pub fn config_hash(config: &Value) -> String {
    let canonical = serde_json::to_string(config).expect("JSON values serialize");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves the config, runs the command and writes the manifest into the output directory.
pub fn run(cli: &Cli) -> Result<Manifest> {
    let start = std::time::Instant::now();
    let name = cli.command.name();
    let layer = cli.config.as_deref().map(|p| load_layer(p, name)).transpose()?;
    let out = cli.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| MfhError::Config(format!("{}: {e}", out.display())))?;
    let (config, outputs) = match &cli.command {
        Command::Simulate(a) => {
            let mut c: SimulateConfig = resolve(layer)?;
            a.apply(&mut c)?;
            (serde_json::to_value(&c)?, cmd_simulate(&c, &out)?)
        }
        Command::Invariant(a) => {
            let mut c: InvariantConfig = resolve(layer)?;
            a.model.apply(&mut c.model)?;
            if a.alpha.is_some() {
                c.alpha = a.alpha;
                c.j = None;
            }
            if a.j.is_some() {
                c.j = a.j;
            }
            set(&mut c.samples, a.samples);
            (serde_json::to_value(&c)?, cmd_invariant(&c, &out)?)
        }
        Command::Stability(a) => {
            let mut c: StabilityConfig = resolve(layer)?;
            a.model.apply(&mut c.model)?;
            if let Some(v) = &a.alpha {
                c.alphas = v.clone();
            }
            if let Some(v) = &a.j {
                c.js = v.clone();
            }
            if let Some(g) = &a.alpha_grid {
                c.alpha_grid = Some(parse_grid(g)?);
            }
            set(&mut c.im_max, a.im_max);
            (serde_json::to_value(&c)?, cmd_stability(&c, &out)?)
        }
        Command::HopfCurve(a) => {
            let mut c: HopfCurveConfig = resolve(layer)?;
            set(&mut c.omega, a.omega);
            set(&mut c.y_hi, a.y_hi);
            set(&mut c.m, a.m);
            (serde_json::to_value(&c)?, cmd_hopf_curve(&c, &out)?)
        }
        Command::BifurcationPoint(a) => {
            let mut c: BifurcationConfig = resolve(layer)?;
            set(&mut c.omega0, a.omega0);
            set(&mut c.epsilon0, a.epsilon0);
            (serde_json::to_value(&c)?, cmd_bifurcation_point(&c, &out)?)
        }
        Command::Branch(a) => {
            let mut c: BranchConfig = resolve(layer)?;
            set(&mut c.omega0, a.omega0);
            set(&mut c.epsilon0, a.epsilon0);
            set(&mut c.v_min, a.v_min);
            set(&mut c.v_max, a.v_max);
            set(&mut c.count, a.count);
            set(&mut c.modes, a.modes);
            (serde_json::to_value(&c)?, cmd_branch(&c, &out)?)
        }
        Command::VolterraCheck(a) => {
            let mut c: VolterraConfig = resolve(layer)?;
            a.model.apply(&mut c.model)?;
            set(&mut c.alpha, a.alpha);
            set(&mut c.t_end, a.t_end);
            set(&mut c.dt, a.dt);
            (serde_json::to_value(&c)?, cmd_volterra(&c, &out)?)
        }
    };
    let manifest = Manifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(&config),
        config,
        threads: rayon::current_num_threads(),
        outputs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Exit code for a failed run: 1 for configuration problems, 2 for numerical failures.
pub fn exit_code(err: &MfhError) -> i32 {
    if err.is_config_error() {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_parsing() {
        assert_eq!(parse_init("uniform").unwrap(), InitLaw::Uniform01);
        assert_eq!(parse_init("point:0.5").unwrap(), InitLaw::PointMass(0.5));
        assert_eq!(parse_init("invariant:0").unwrap(), InitLaw::InvariantAt(0.0));
        assert!(parse_init("gauss").is_err());
    }

    #[test]
    fn model_flags_override() {
        let mut cfg = toy_default();
        ModelArgs { m: Some(3.0), ..Default::default() }.apply(&mut cfg).unwrap();
        assert_eq!(cfg, ModelConfig::Toy { beta: 0.1, m: 3.0 });
        ModelArgs { rate: Some("zero".into()), ..Default::default() }.apply(&mut cfg).unwrap();
        assert_eq!(cfg, ModelConfig::Zero { drift: AffineConfig { affine: [3.0, -1.0] } });
        let err = ModelArgs { model: Some("nope".into()), ..Default::default() }.apply(&mut cfg).unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn hash_is_stable_under_roundtrip() {
        let c = serde_json::to_value(SimulateConfig::default()).unwrap();
        let back: SimulateConfig = serde_json::from_value(c.clone()).unwrap();
        assert_eq!(config_hash(&c), config_hash(&serde_json::to_value(back).unwrap()));
        assert_eq!(config_hash(&c).len(), 64);
    }
}
