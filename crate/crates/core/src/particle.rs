//! N-neuron particle system: between spikes each potential follows the drift; neuron i fires
//! at rate f(X^i), resets to 0 and kicks every other neuron by J/N.
//!
//! Spike times use the time change: neuron i fires when its accumulated hazard ∫ f(X^i)
//! reaches an Exp(1) threshold drawn from a counter-based generator keyed by
//! (seed, neuron key, spike index). Hazards are integrated along the drift over micro-steps
//! Δ ≤ 0.05 / max f; kicks collected during a step are applied at its end.

use crate::error::{MfhError, Result};
use crate::invariant::InvariantMeasure;
use crate::model::{ModelSpec, Rate};
use crate::quadrature::GaussRule;
use rayon::prelude::*;
use rustfft::FftPlanner;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Philox4x32-10 block function.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    const M0: u64 = 0xD251_1F53;
    const M1: u64 = 0xCD9E_8D57;
    const W0: u32 = 0x9E37_79B9;
    const W1: u32 = 0xBB67_AE85;
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let p0 = M0 * c[0] as u64;
        let p1 = M1 * c[2] as u64;
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Counter-based uniform stream: every draw is a pure function of its coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRng {
    pub seed: u64,
}

const STREAM_THRESHOLD: u32 = 0;
const STREAM_INIT: u32 = 1;

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Uniform on (0, 1) with 53 random bits.
    pub fn uniform(&self, id: u64, index: u32, stream: u32) -> f64 {
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        let out = philox4x32([id as u32, (id >> 32) as u32, index, stream], key);
        let bits = ((out[0] as u64) << 21) ^ (out[1] as u64 >> 11);
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn exp1(&self, id: u64, index: u32) -> f64 {
        -self.uniform(id, index, STREAM_THRESHOLD).ln()
    }
}

/// Law of the initial potentials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLaw {
    Uniform01,
    PointMass(f64),
    /// The invariant law ν∞_α of the constant-current dynamics.
    InvariantAt(f64),
}

/// Potentials, coupling, clock and per-neuron generator state.
#[derive(Clone, Debug)]
pub struct ParticleState {
    pub potentials: Vec<f64>,
    pub j: f64,
    pub t: f64,
    pub rng: CounterRng,
    /// Generator key of each neuron; permuting neurons together with their keys permutes
    /// the raster and leaves the rate series unchanged.
    pub keys: Vec<u64>,
    /// Hazard accumulated since the last spike.
    pub hazard: Vec<f64>,
    /// Exp(1) threshold for the next spike.
    pub threshold: Vec<f64>,
    pub spike_index: Vec<u32>,
}

impl ParticleState {
    pub fn new(model: &ModelSpec, n: usize, j: f64, init: InitLaw, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(MfhError::InvalidParameter("N must be at least 1".into()));
        }
        if j < 0.0 {
            return Err(MfhError::InvalidParameter(format!("J = {j} must be nonnegative")));
        }
        let rng = CounterRng::new(seed);
        let keys: Vec<u64> = (0..n as u64).collect();
        let potentials = sample_init(model, init, &rng, &keys)?;
        Ok(Self::from_potentials(potentials, keys, j, rng))
    }

    pub fn from_potentials(potentials: Vec<f64>, keys: Vec<u64>, j: f64, rng: CounterRng) -> Self {
        let threshold = keys.iter().map(|&k| rng.exp1(k, 0)).collect();
        let n = potentials.len();
        Self { potentials, j, t: 0.0, rng, keys, hazard: vec![0.0; n], threshold, spike_index: vec![0; n] }
    }

    pub fn n(&self) -> usize {
        self.potentials.len()
    }

    /// Reorders neurons: position i takes the neuron previously at perm[i].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        Self {
            potentials: pick(&self.potentials),
            j: self.j,
            t: self.t,
            rng: self.rng,
            keys: perm.iter().map(|&p| self.keys[p]).collect(),
            hazard: pick(&self.hazard),
            threshold: pick(&self.threshold),
            spike_index: perm.iter().map(|&p| self.spike_index[p]).collect(),
        }
    }
}

fn sample_init(model: &ModelSpec, init: InitLaw, rng: &CounterRng, keys: &[u64]) -> Result<Vec<f64>> {
    match init {
        InitLaw::Uniform01 => Ok(keys.iter().map(|&k| rng.uniform(k, 0, STREAM_INIT)).collect()),
        InitLaw::PointMass(x) => {
            if x < 0.0 {
                return Err(MfhError::InvalidParameter(format!("initial potential {x} < 0")));
            }
            Ok(vec![x; keys.len()])
        }
        InitLaw::InvariantAt(alpha) => {
            let sampler = AgeSampler::new(model, alpha)?;
            Ok(keys.iter().map(|&k| sampler.sample(rng.uniform(k, 0, STREAM_INIT))).collect())
        }
    }
}

/// Samples ν∞_α as φ_u(0) with the age u drawn from γ H(u) du by tabulated inversion.
struct AgeSampler {
    measure: InvariantMeasure,
    ages: Vec<f64>,
    cdf: Vec<f64>,
}

impl AgeSampler {
    fn new(model: &ModelSpec, alpha: f64) -> Result<Self> {
        let measure = InvariantMeasure::new(model, alpha)?;
        let tr = measure.trajectory();
        let gl = GaussRule::new(8);
        let mut bps = tr.breakpoints();
        bps.retain(|&b| b > 0.0 && b < tr.t_max);
        let mut ages = vec![0.0];
        let n = 4096;
        for i in 1..=n {
            ages.push(tr.t_max * i as f64 / n as f64);
        }
        ages.extend(bps);
        ages.sort_by(f64::total_cmp);
        ages.dedup();
        let mut cdf = vec![0.0];
        for w in ages.windows(2) {
            let inc = measure.gamma * gl.integrate(w[0], w[1], |u| tr.survival(u));
            cdf.push(cdf.last().unwrap() + inc);
        }
        Ok(Self { measure, ages, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let tr = self.measure.trajectory();
        let total = *self.cdf.last().unwrap();
        if u >= total {
            // exponential tail beyond the table
            let extra = -((1.0 - u) / (1.0 - total).max(1e-300)).ln() / tr.kappa;
            return tr.phi(tr.t_max + extra);
        }
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        tr.phi(self.ages[i - 1] + w * (self.ages[i] - self.ages[i - 1]))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub init: InitLaw,
    pub t_end: f64,
    pub dt_bin: f64,
    pub seed: u64,
    /// Upper bound on the micro-step.
    pub dt_max: f64,
    /// Micro-steps satisfy max f · Δ ≤ hazard_cap.
    pub hazard_cap: f64,
    /// Smallest admissible micro-step.
    pub dt_min: f64,
    /// Raster keeps neurons 0..raster_neurons.
    pub raster_neurons: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            j: 0.0,
            init: InitLaw::Uniform01,
            t_end: 10.0,
            dt_bin: 0.05,
            seed: 1,
            dt_max: 0.01,
            hazard_cap: 0.05,
            dt_min: 1e-7,
            raster_neurons: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimOutput {
    /// Bin start times.
    pub t: Vec<f64>,
    /// Spikes per neuron per unit time in each bin.
    pub rate: Vec<f64>,
    pub spike_counts: Vec<u64>,
    /// (neuron, time) for the first `raster_neurons` neurons.
    pub raster: Vec<(usize, f64)>,
    pub total_spikes: u64,
    pub steps: u64,
    pub final_potentials: Vec<f64>,
}

impl SimOutput {
    pub fn write_rate_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(path, &["t", "rate"], self.t.iter().zip(&self.rate).map(|(t, r)| vec![*t, *r]))
    }

    pub fn write_raster_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["neuron", "time"])?;
        for (i, t) in &self.raster {
            w.write_record([i.to_string(), crate::io::fmt_f64(*t)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean rate over [t_from, t_end] with its standard error from `batches` batch means.
    pub fn batch_mean_rate(&self, t_from: f64, batches: usize) -> (f64, f64) {
        let start = self.t.partition_point(|&t| t < t_from - 1e-12);
        let v = &self.rate[start..];
        let per = v.len() / batches;
        let means: Vec<f64> = (0..batches).map(|b| v[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64).collect();
        let mean = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (mean, (var / batches as f64).sqrt())
    }
}

/// Deterministic motion over one micro-step.
enum Propagator {
    /// x(s) = x_eq + (x − x_eq) e^{c1 s}, or x + c0 s when c1 = 0.
    Affine { c0: f64, c1: f64 },
    Rk4,
}

impl Propagator {
    fn of(model: &ModelSpec) -> Self {
        match model.affine() {
            Some((c0, c1)) => Propagator::Affine { c0, c1 },
            None => Propagator::Rk4,
        }
    }

    fn flow(&self, model: &ModelSpec, x: f64, s: f64) -> f64 {
        match *self {
            Propagator::Affine { c0, c1 } => {
                if c1 == 0.0 {
                    x + c0 * s
                } else {
                    let xe = -c0 / c1;
                    xe + (x - xe) * (c1 * s).exp()
                }
            }
            Propagator::Rk4 => {
                let b = |y: f64| model.b(y);
                let k1 = b(x);
                let k2 = b(x + 0.5 * s * k1);
                let k3 = b(x + 0.5 * s * k2);
                let k4 = b(x + s * k3);
                x + s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            }
        }
    }

    /// Hazard accumulated over [0, s] from x, and the time at which it reaches `target`
    /// (when it does).
    fn hazard(&self, model: &ModelSpec, x: f64, s: f64, target: f64) -> (f64, Option<f64>) {
        if s <= 0.0 {
            return (0.0, None);
        }
        if let (Rate::Step { beta, threshold }, Propagator::Affine { c0, c1 }) = (&model.rate, self) {
            let height = 1.0 / beta;
            let (above_from, above_to) = step_window(*c0, *c1, *threshold, x, s);
            let dur = (above_to - above_from).max(0.0);
            let lam = height * dur;
            let hit = (lam >= target).then(|| above_from + target / height);
            return (lam, hit);
        }
        if let Rate::Zero = model.rate {
            return (0.0, None);
        }
        // Simpson on the flow with linear interpolation of the cumulative hazard
        let xm = self.flow(model, x, 0.5 * s);
        let x1 = self.flow(model, x, s);
        let lam = s / 6.0 * (model.f(x) + 4.0 * model.f(xm) + model.f(x1));
        let hit = (lam >= target && lam > 0.0).then(|| s * target / lam);
        (lam, hit)
    }

    fn cache(&self, dt: f64) -> StepCache {
        match *self {
            Propagator::Affine { c1, .. } => StepCache { dt, decay: (c1 * dt).exp(), mid: (0.5 * c1 * dt).exp() },
            Propagator::Rk4 => StepCache { dt, decay: f64::NAN, mid: f64::NAN },
        }
    }

    /// Full micro-step from x: (hazard, hitting time of `target`, end point).
    #[inline]
    fn step(&self, model: &ModelSpec, k: &StepCache, x: f64, target: f64) -> (f64, Option<f64>, f64) {
        let Propagator::Affine { c0, c1 } = *self else {
            let (lam, hit) = self.hazard(model, x, k.dt, target);
            return (lam, hit, self.flow(model, x, k.dt));
        };
        let (x1, xm) = if c1 == 0.0 {
            (x + c0 * k.dt, x + 0.5 * c0 * k.dt)
        } else {
            let xe = -c0 / c1;
            (xe + (x - xe) * k.decay, xe + (x - xe) * k.mid)
        };
        match model.rate {
            Rate::Zero => (0.0, None, x1),
            Rate::Step { beta, threshold } => {
                // affine paths are monotone
                if x < threshold && x1 < threshold {
                    (0.0, None, x1)
                } else if x >= threshold && x1 >= threshold {
                    let lam = k.dt / beta;
                    (lam, (lam >= target).then(|| target * beta), x1)
                } else {
                    let (lam, hit) = self.hazard(model, x, k.dt, target);
                    (lam, hit, x1)
                }
            }
            _ => {
                let lam = k.dt / 6.0 * (model.f(x) + 4.0 * model.f(xm) + model.f(x1));
                let hit = (lam >= target && lam > 0.0).then(|| k.dt * target / lam);
                (lam, hit, x1)
            }
        }
    }
}

struct StepCache {
    dt: f64,
    decay: f64,
    mid: f64,
}

/// Sub-interval of [0, s] on which the affine path from x is at or above the threshold.
fn step_window(c0: f64, c1: f64, thr: f64, x: f64, s: f64) -> (f64, f64) {
    let above = x >= thr;
    if c1 == 0.0 {
        if c0 == 0.0 {
            return if above { (0.0, s) } else { (0.0, 0.0) };
        }
        let tc = (thr - x) / c0;
        return match (above, c0 > 0.0) {
            (true, true) => (0.0, s),
            (true, false) => (0.0, tc.min(s)),
            (false, true) => (tc.min(s), s),
            (false, false) => (0.0, 0.0),
        };
    }
    let xe = -c0 / c1;
    let cross = || ((thr - xe) / (x - xe)).ln() / c1;
    match (above, xe >= thr) {
        (true, true) => (0.0, s),
        (true, false) => (0.0, cross().min(s)),
        (false, true) => {
            if xe == thr {
                (0.0, 0.0)
            } else {
                (cross().min(s), s)
            }
        }
        (false, false) => (0.0, 0.0),
    }
}

/// Runs the particle system from `state` to `cfg.t_end`.
pub fn simulate_state(model: &ModelSpec, state: &mut ParticleState, cfg: &SimConfig) -> Result<SimOutput> {
    if !(cfg.dt_bin > 0.0 && cfg.t_end > state.t) {
        return Err(MfhError::InvalidParameter("need dt_bin > 0 and t_end > t".into()));
    }
    let n = state.n();
    let prop = Propagator::of(model);
    let bins = ((cfg.t_end - state.t) / cfg.dt_bin).round().max(1.0) as usize;
    let t0 = state.t;
    let mut counts = vec![0u64; bins];
    let mut raster = Vec::new();
    let kick = state.j / n as f64;
    let mut pending = 0u64;
    let mut spiked = vec![false; n];
    let mut steps = 0u64;
    let monotone = !matches!(model.rate, Rate::Custom { .. });
    const CHUNK: usize = 4096;
    let mut xmax = state.potentials.iter().cloned().fold(0.0, f64::max);
    for bin in 0..bins {
        let bin_end = t0 + (bin + 1) as f64 * cfg.dt_bin;
        while state.t < bin_end - 1e-12 * bin_end.abs().max(1.0) {
            // pending kicks from the previous step, then the step-size rule
            let kick_total = kick * pending as f64;
            let fmax = if monotone {
                model.f(xmax + kick_total)
            } else {
                state
                    .potentials
                    .par_iter()
                    .zip(spiked.par_iter())
                    .map(|(x, &s)| model.f(x + kick_total - if s { kick } else { 0.0 }))
                    .reduce(|| 0.0, f64::max)
            };
            let mut dt = (bin_end - state.t).min(cfg.dt_max);
            if fmax > 0.0 {
                dt = dt.min(cfg.hazard_cap / fmax);
            }
            if dt < cfg.dt_min {
                dt = cfg.dt_min;
                if fmax * dt > 1.0 {
                    return Err(MfhError::RateExplosion { hazard: fmax * dt });
                }
            }
            let t_step = state.t;
            let rng = state.rng;
            let cache = prop.cache(dt);
            let results: Vec<(u64, f64, Vec<(usize, f64)>)> = state
                .potentials
                .par_chunks_mut(CHUNK)
                .zip(state.hazard.par_chunks_mut(CHUNK))
                .zip(state.threshold.par_chunks_mut(CHUNK))
                .zip(state.spike_index.par_chunks_mut(CHUNK))
                .zip(spiked.par_chunks_mut(CHUNK))
                .zip(state.keys.par_chunks(CHUNK))
                .enumerate()
                .map(|(c, (((((xs, hs), ths), ks), sp), keys))| {
                    let mut count = 0u64;
                    let mut top = 0.0f64;
                    let mut rast = Vec::new();
                    for i in 0..xs.len() {
                        let idx = c * CHUNK + i;
                        let mut x = xs[i] + kick_total - if sp[i] { kick } else { 0.0 };
                        let (lam, hit, x1) = prop.step(model, &cache, x, ths[i] - hs[i]);
                        match hit {
                            Some(ts) => {
                                let ts = ts.clamp(0.0, dt);
                                count += 1;
                                if idx < cfg.raster_neurons {
                                    rast.push((idx, t_step + ts));
                                }
                                ks[i] += 1;
                                ths[i] = rng.exp1(keys[i], ks[i]);
                                let rest = dt - ts;
                                let (l2, _) = prop.hazard(model, 0.0, rest, f64::INFINITY);
                                hs[i] = l2;
                                x = prop.flow(model, 0.0, rest);
                                sp[i] = true;
                            }
                            None => {
                                hs[i] += lam;
                                x = x1;
                                sp[i] = false;
                            }
                        }
                        xs[i] = x.max(0.0);
                        top = top.max(xs[i]);
                    }
                    (count, top, rast)
                })
                .collect();
            pending = 0;
            xmax = 0.0;
            for (c, top, r) in results {
                pending += c;
                xmax = xmax.max(top);
                raster.extend(r);
            }
            counts[bin] += pending;
            state.t = t_step + dt;
            steps += 1;
        }
        state.t = bin_end;
    }
    // apply the last kicks so the state is consistent at t_end
    let kick_total = kick * pending as f64;
    for (x, &s) in state.potentials.iter_mut().zip(&spiked) {
        *x += kick_total - if s { kick } else { 0.0 };
    }
    let total_spikes = counts.iter().sum();
    Ok(SimOutput {
        t: (0..bins).map(|b| t0 + b as f64 * cfg.dt_bin).collect(),
        rate: counts.iter().map(|&c| c as f64 / (n as f64 * cfg.dt_bin)).collect(),
        spike_counts: counts,
        raster,
        total_spikes,
        steps,
        final_potentials: state.potentials.clone(),
    })
}

/// Builds the initial state and runs it.
pub fn simulate(model: &ModelSpec, cfg: &SimConfig) -> Result<SimOutput> {
    let mut state = ParticleState::new(model, cfg.n, cfg.j, cfg.init, cfg.seed)?;
    simulate_state(model, &mut state, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscillationReport {
    /// Dominant nonzero frequency (cycles per unit time).
    pub frequency: f64,
    /// Its index in the segment periodogram.
    pub bin: usize,
    /// Peak power over the median off-peak power.
    pub snr: f64,
    /// snr ≥ SNR_THRESHOLD over at least 16 periods.
    pub oscillating: bool,
    /// Post-burn-in duration times the dominant frequency.
    pub periods_covered: f64,
}

pub const SNR_THRESHOLD: f64 = 5.0;

/// Bartlett periodogram of the centered series after `burn_in` (time units), averaged over
/// `segments` equal segments.
pub fn detect_oscillation(series: &[f64], dt: f64, burn_in: f64, segments: usize) -> Result<OscillationReport> {
    let start = (burn_in / dt).ceil() as usize;
    let segments = segments.max(1);
    let needed = 32 * segments;
    let avail = series.len().saturating_sub(start);
    if avail < needed {
        return Err(MfhError::SeriesTooShort { len: avail, needed });
    }
    let len = avail / segments;
    let post = &series[start..start + len * segments];
    let mean = post.iter().sum::<f64>() / post.len() as f64;
    let fft = FftPlanner::new().plan_fft_forward(len);
    let half = len / 2;
    let mut power = vec![0.0; half + 1];
    for s in 0..segments {
        let mut buf: Vec<C> = post[s * len..(s + 1) * len].iter().map(|&v| C::new(v - mean, 0.0)).collect();
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
    }
    let (bin, peak) = power.iter().enumerate().skip(1).fold((1, -1.0), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
    let mut off: Vec<f64> = power
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(k, _)| (*k as i64 - bin as i64).abs() > 1)
        .map(|(_, &p)| p)
        .collect();
    off.sort_by(f64::total_cmp);
    let median = if off.is_empty() { 0.0 } else { off[off.len() / 2] };
    // rounding residue of a flat series carries no signal
    let flat = post.iter().all(|v| (v - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    let snr = if median > 0.0 && !flat { peak / median } else { 0.0 };
    let frequency = bin as f64 / (len as f64 * dt);
    let periods_covered = frequency * post.len() as f64 * dt;
    Ok(OscillationReport { frequency, bin, snr, oscillating: snr >= SNR_THRESHOLD && periods_covered >= 16.0, periods_covered })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0, 0, 0, 0], [0, 0]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn uniform_moments() {
        let rng = CounterRng::new(7);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let u = rng.uniform(i, 3, 0);
            assert!(u > 0.0 && u < 1.0);
            s += u;
            s2 += u * u;
        }
        let m = s / n as f64;
        assert!((m - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt());
        assert!((s2 / n as f64 - 1.0 / 3.0).abs() < 3e-3);
    }

    #[test]
    fn step_window_cases() {
        // toy drift 1.5 − x, threshold 1
        let (a, b) = step_window(1.5, -1.0, 1.0, 0.0, 2.0);
        assert!((a - 3f64.ln()).abs() < 1e-15 && b == 2.0);
        assert_eq!(step_window(1.5, -1.0, 1.0, 0.0, 0.5), (0.5, 0.5));
        assert_eq!(step_window(0.5, -1.0, 1.0, 2.0, 10.0).0, 0.0);
        let (_, b) = step_window(0.5, -1.0, 1.0, 2.0, 10.0);
        assert!((b - 3f64.ln()).abs() < 1e-15);
    }
}
