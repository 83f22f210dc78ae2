//! Stochastic integration of the two-mode and ring-array equations, the
//! ensemble sampling protocol, and a noiseless RK4 integrator.
//!
//! Noise enters in the Itô sense: `sqrt(D)` is evaluated at the pre-step
//! state and multiplies a complex Wiener increment
//! `dW = (dW1 + i dW2) / sqrt(2)` with `dW1, dW2 ~ N(0, dt)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrayState, ModeState, ModelParams};

/// Time-stepping scheme of the stochastic integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain explicit Euler–Maruyama.
    EulerMaruyama,
    /// Euler–Maruyama noise with a trapezoidal (Heun) drift correction.
    #[default]
    Heun,
}

/// Step size used when [`IntegratorConfig::dt`] is unset, in units of `1/g`.
///
/// The coupling sets the fastest oscillation (`g + g'` for arrays) and the
/// loss mode relaxes at up to `Gamma`; the latter tolerates a ten times
/// coarser resolution with the Heun scheme.
pub fn default_dt(p: &ModelParams) -> f64 {
    DT_SCALE / (p.g + p.gprime).max(0.1 * p.gain).max(p.damping * (1.0 + p.n_th))
}

/// Numerator of [`default_dt`].
pub const DT_SCALE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Time step in units of `1/g`; `None` selects [`default_dt`].
    #[serde(default)]
    pub dt: Option<f64>,
    /// Transient discarded before sampling, in units of `1/gamma`.
    pub warmup: f64,
    /// Sampling window, in units of `1/gamma`.
    pub window: f64,
    pub samples_per_run: usize,
    pub n_runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Variance of the complex Gaussian initial amplitudes; `None` selects
    /// `max(Nth, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic_variance: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: None,
            warmup: 5.0,
            window: 45.0,
            samples_per_run: 4000,
            n_runs: 80,
            seed: 0,
            scheme: Scheme::Heun,
            ic_variance: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_runs(mut self, n_runs: usize, samples_per_run: usize) -> Self {
        self.n_runs = n_runs;
        self.samples_per_run = samples_per_run;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_ic_variance(mut self, var: f64) -> Self {
        self.ic_variance = Some(var);
        self
    }

    /// Per-component standard deviation of the initial amplitudes.
    pub fn ic_scale(&self, p: &ModelParams) -> f64 {
        (self.ic_variance.unwrap_or(p.n_th.max(1.0)) / 2.0).sqrt()
    }

    pub fn effective_dt(&self, p: &ModelParams) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(p))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt must be positive");
            }
        }
        if let Some(v) = self.ic_variance {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("ic_variance must be non-negative");
            }
        }
        if !(self.warmup > 0.0 && self.warmup.is_finite()) {
            return bad("warmup must be positive");
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad("window must be positive");
        }
        if self.samples_per_run == 0 || self.n_runs == 0 {
            return bad("samples_per_run and n_runs must be >= 1");
        }
        Ok(())
    }

    /// Warmup and total step counts for the given parameters.
    pub fn step_counts(&self, p: &ModelParams) -> (u64, u64) {
        let dt = self.effective_dt(p);
        let warm = (self.warmup / p.damping / dt).ceil() as u64;
        let total = warm + ((self.window / p.damping / dt).ceil() as u64).max(1);
        (warm, total)
    }
}

/// Pooled steady-state samples of an ensemble.
///
/// For arrays the cell index runs fastest: sample `i` of cell `c` is at
/// `i * cells + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample {
    pub alphas: Vec<Complex64>,
    pub betas: Vec<Complex64>,
    /// Run index of every sample (not repeated per cell).
    pub runs: Vec<u32>,
    /// Sampling time of every sample, in units of `1/g`.
    pub times: Vec<f64>,
    pub cells: usize,
    pub params: ModelParams,
    pub config: IntegratorConfig,
}

impl EnsembleSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples of one cell, in sample order.
    pub fn cell(&self, c: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.cells;
        (
            self.alphas.iter().skip(c).step_by(n).copied().collect(),
            self.betas.iter().skip(c).step_by(n).copied().collect(),
        )
    }
}

#[inline]
fn complex_increment<R: Rng>(rng: &mut R, scale: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// One Euler–Maruyama step. `noise` holds the complex Wiener increments of
/// the gain and loss modes.
#[inline]
pub fn step(s: &ModeState, p: &ModelParams, dt: f64, noise: [Complex64; 2]) -> ModeState {
    let d = p.drift(s);
    ModeState::new(
        s.alpha + d.alpha * dt + noise[0] * p.diffusion_plus(s.alpha).sqrt(),
        s.beta + d.beta * dt + noise[1] * p.diffusion_minus().sqrt(),
    )
}

/// One Heun step: Euler–Maruyama predictor, trapezoidal drift, same noise.
#[inline]
pub fn step_heun(s: &ModeState, p: &ModelParams, dt: f64, noise: [Complex64; 2]) -> ModeState {
    let d0 = p.drift(s);
    let na = noise[0] * p.diffusion_plus(s.alpha).sqrt();
    let nb = noise[1] * p.diffusion_minus().sqrt();
    let pred = ModeState::new(s.alpha + d0.alpha * dt + na, s.beta + d0.beta * dt + nb);
    let d1 = p.drift(&pred);
    let h = 0.5 * dt;
    ModeState::new(
        s.alpha + (d0.alpha + d1.alpha) * h + na,
        s.beta + (d0.beta + d1.beta) * h + nb,
    )
}

/// Work buffers for array steps.
#[derive(Debug, Clone)]
pub struct ArrayScratch {
    d0: ArrayState,
    d1: ArrayState,
    pred: ArrayState,
    na: Vec<Complex64>,
    nb: Vec<Complex64>,
}

impl ArrayScratch {
    pub fn new(cells: usize) -> Self {
        Self {
            d0: ArrayState::zeros(cells),
            d1: ArrayState::zeros(cells),
            pred: ArrayState::zeros(cells),
            na: vec![Complex64::new(0.0, 0.0); cells],
            nb: vec![Complex64::new(0.0, 0.0); cells],
        }
    }
}

/// Array version of [`step`] / [`step_heun`]; `noise[2c]` and `noise[2c + 1]`
/// drive the gain and loss modes of cell `c`.
pub fn step_array(
    s: &mut ArrayState,
    p: &ModelParams,
    dt: f64,
    noise: &[Complex64],
    scheme: Scheme,
    w: &mut ArrayScratch,
) {
    let n = s.len();
    debug_assert_eq!(noise.len(), 2 * n);
    p.drift_array(s, &mut w.d0);
    let dm = p.diffusion_minus().sqrt();
    for c in 0..n {
        w.na[c] = noise[2 * c] * p.diffusion_plus(s.alpha[c]).sqrt();
        w.nb[c] = noise[2 * c + 1] * dm;
    }
    match scheme {
        Scheme::EulerMaruyama => {
            for c in 0..n {
                s.alpha[c] = s.alpha[c] + w.d0.alpha[c] * dt + w.na[c];
                s.beta[c] = s.beta[c] + w.d0.beta[c] * dt + w.nb[c];
            }
        }
        Scheme::Heun => {
            for c in 0..n {
                w.pred.alpha[c] = s.alpha[c] + w.d0.alpha[c] * dt + w.na[c];
                w.pred.beta[c] = s.beta[c] + w.d0.beta[c] * dt + w.nb[c];
            }
            p.drift_array(&w.pred, &mut w.d1);
            let h = 0.5 * dt;
            for c in 0..n {
                s.alpha[c] = s.alpha[c] + (w.d0.alpha[c] + w.d1.alpha[c]) * h + w.na[c];
                s.beta[c] = s.beta[c] + (w.d0.beta[c] + w.d1.beta[c]) * h + w.nb[c];
            }
        }
    }
}

/// Samples collected by one trajectory.
struct RunSamples {
    alphas: Vec<Complex64>,
    betas: Vec<Complex64>,
    times: Vec<f64>,
}

/// Generator of run `run` of an ensemble with master seed `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Sorted sampling step indices, uniform in `[warm, total)`.
fn sample_steps<R: Rng>(rng: &mut R, warm: u64, total: u64, n: usize) -> Vec<u64> {
    let mut idx: Vec<u64> = (0..n).map(|_| rng.random_range(warm..total)).collect();
    idx.sort_unstable();
    idx
}

fn non_finite(run: usize, cell: usize, time: f64, s: ModeState, p: &ModelParams) -> Error {
    Error::NonFinite {
        run,
        cell,
        time,
        alpha: s.alpha,
        beta: s.beta,
        params: p.to_json_string(),
    }
}

fn run_two_mode(p: &ModelParams, c: &IntegratorConfig, run: usize) -> Result<RunSamples> {
    let mut rng = run_rng(c.seed, run as u64);
    let dt = c.effective_dt(p);
    let (warm, total) = c.step_counts(p);
    let times = sample_steps(&mut rng, warm, total, c.samples_per_run);
    let ic = c.ic_scale(p);
    let mut s = ModeState::new(complex_increment(&mut rng, ic), complex_increment(&mut rng, ic));
    let scale = (dt / 2.0).sqrt();
    let mut out = RunSamples {
        alphas: Vec::with_capacity(times.len()),
        betas: Vec::with_capacity(times.len()),
        times: Vec::with_capacity(times.len()),
    };
    let mut next = 0;
    for k in 0..total {
        while next < times.len() && times[next] == k {
            out.alphas.push(s.alpha);
            out.betas.push(s.beta);
            out.times.push(k as f64 * dt);
            next += 1;
        }
        if next == times.len() {
            break;
        }
        let noise = [complex_increment(&mut rng, scale), complex_increment(&mut rng, scale)];
        s = match c.scheme {
            Scheme::EulerMaruyama => step(&s, p, dt, noise),
            Scheme::Heun => step_heun(&s, p, dt, noise),
        };
        if !s.is_finite() {
            return Err(non_finite(run, 0, (k + 1) as f64 * dt, s, p));
        }
    }
    Ok(out)
}

fn run_array(p: &ModelParams, c: &IntegratorConfig, run: usize) -> Result<RunSamples> {
    let n = p.cells;
    let mut rng = run_rng(c.seed, run as u64);
    let dt = c.effective_dt(p);
    let (warm, total) = c.step_counts(p);
    let times = sample_steps(&mut rng, warm, total, c.samples_per_run);
    let ic = c.ic_scale(p);
    let mut s = ArrayState::zeros(n);
    for cell in 0..n {
        s.alpha[cell] = complex_increment(&mut rng, ic);
        s.beta[cell] = complex_increment(&mut rng, ic);
    }
    let scale = (dt / 2.0).sqrt();
    let mut noise = vec![Complex64::new(0.0, 0.0); 2 * n];
    let mut w = ArrayScratch::new(n);
    let mut out = RunSamples {
        alphas: Vec::with_capacity(times.len() * n),
        betas: Vec::with_capacity(times.len() * n),
        times: Vec::with_capacity(times.len()),
    };
    let mut next = 0;
    for k in 0..total {
        while next < times.len() && times[next] == k {
            out.alphas.extend_from_slice(&s.alpha);
            out.betas.extend_from_slice(&s.beta);
            out.times.push(k as f64 * dt);
            next += 1;
        }
        if next == times.len() {
            break;
        }
        for x in noise.iter_mut() {
            *x = complex_increment(&mut rng, scale);
        }
        step_array(&mut s, p, dt, &noise, c.scheme, &mut w);
        if let Some(cell) = (0..n).find(|&i| !(s.alpha[i].is_finite() && s.beta[i].is_finite())) {
            return Err(non_finite(run, cell, (k + 1) as f64 * dt, s.cell(cell), p));
        }
    }
    Ok(out)
}

/// Runs the full sampling protocol: `n_runs` independent trajectories from
/// random initial conditions, each sampled at `samples_per_run` random
/// times after the warmup.
///
/// Run `i` draws everything (initial state, sample times, noise) from its own
/// stream of the master seed, so the result does not depend on scheduling.
pub fn run_ensemble(p: &ModelParams, c: &IntegratorConfig) -> Result<EnsembleSample> {
    p.validate()?;
    c.validate()?;
    let array = p.is_array();
    let runs: Vec<RunSamples> = (0..c.n_runs)
        .into_par_iter()
        .map(|run| if array { run_array(p, c, run) } else { run_two_mode(p, c, run) })
        .collect::<Result<_>>()?;
    let cells = if array { p.cells } else { 1 };
    let total = c.n_runs * c.samples_per_run;
    let mut sample = EnsembleSample {
        alphas: Vec::with_capacity(total * cells),
        betas: Vec::with_capacity(total * cells),
        runs: Vec::with_capacity(total),
        times: Vec::with_capacity(total),
        cells,
        params: *p,
        config: *c,
    };
    for (i, r) in runs.into_iter().enumerate() {
        sample.runs.extend(std::iter::repeat_n(i as u32, r.times.len()));
        sample.alphas.extend(r.alphas);
        sample.betas.extend(r.betas);
        sample.times.extend(r.times);
    }
    Ok(sample)
}

/// Noiseless trajectory recorded at a fixed output interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<ModeState>,
}

/// Extrema and mean-crossing frequency of a periodic signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    /// Angular frequency.
    pub omega: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub cycles: usize,
}

impl Trajectory {
    pub fn occupations(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.states.iter().map(|s| s.alpha.norm_sqr()).collect(),
            self.states.iter().map(|s| s.beta.norm_sqr()).collect(),
        )
    }

    pub fn last(&self) -> ModeState {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    /// Oscillation of `|alpha|^2` for `t >= t_from`. `None` when the signal is
    /// flat to relative `1e-6`, shows fewer than three upward mean crossings,
    /// or its swing in the second half of the window has decayed below half
    /// of that in the first half.
    pub fn oscillation(&self, t_from: f64) -> Option<Oscillation> {
        let start = self.t.iter().position(|&t| t >= t_from)?;
        let t = &self.t[start..];
        let x: Vec<f64> = self.states[start..].iter().map(|s| s.alpha.norm_sqr()).collect();
        if x.len() < 4 {
            return None;
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max - min <= 1e-6 * mean.abs().max(1e-300) {
            return None;
        }
        let swing = |v: &[f64]| {
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let half = x.len() / 2;
        if swing(&x[half..]) < 0.5 * swing(&x[..half]) {
            return None;
        }
        let mut crossings = Vec::new();
        for i in 1..x.len() {
            if x[i - 1] < mean && x[i] >= mean {
                let f = (mean - x[i - 1]) / (x[i] - x[i - 1]);
                crossings.push(t[i - 1] + f * (t[i] - t[i - 1]));
            }
        }
        if crossings.len() < 3 {
            return None;
        }
        let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        Some(Oscillation {
            omega: 2.0 * std::f64::consts::PI / period,
            min,
            max,
            mean,
            cycles: crossings.len() - 1,
        })
    }
}

fn rk4(p: &ModelParams, s: &ModeState, h: f64) -> ModeState {
    let k1 = p.drift(s);
    let k2 = p.drift(&(*s + k1 * (0.5 * h)));
    let k3 = p.drift(&(*s + k2 * (0.5 * h)));
    let k4 = p.drift(&(*s + k3 * h));
    *s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates the noiseless two-mode equations with classical RK4, recording
/// the state every `record_every` (units of `1/g`).
pub fn run_deterministic(p: &ModelParams, s0: ModeState, t_end: f64, record_every: f64) -> Result<Trajectory> {
    p.validate()?;
    if !(t_end > 0.0 && record_every > 0.0) {
        return Err(Error::InvalidParameter("t_end and record_every must be positive".to_string()));
    }
    let h_max = 0.02 / p.g.max(p.gain);
    let sub = (record_every / h_max).ceil().max(1.0) as usize;
    let h = record_every / sub as f64;
    let n_rec = (t_end / record_every).ceil() as usize;
    let mut traj = Trajectory {
        t: Vec::with_capacity(n_rec + 1),
        states: Vec::with_capacity(n_rec + 1),
    };
    let mut s = s0;
    traj.t.push(0.0);
    traj.states.push(s);
    for i in 1..=n_rec {
        for _ in 0..sub {
            s = rk4(p, &s, h);
        }
        if !s.is_finite() {
            return Err(non_finite(0, 0, i as f64 * record_every, s, p));
        }
        traj.t.push(i as f64 * record_every);
        traj.states.push(s);
    }
    Ok(traj)
}

/// Random initial condition of the same law the ensembles use by default.
pub fn random_initial_state(p: &ModelParams, seed: u64, index: u64) -> ModeState {
    let mut rng = run_rng(seed, index);
    let ic = IntegratorConfig::default().ic_scale(p);
    ModeState::new(complex_increment(&mut rng, ic), complex_increment(&mut rng, ic))
}

/// Long-time behaviour of the noiseless equations from a small asymmetric
/// initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiselessState {
    /// Window averages of `|alpha|^2` and `|beta|^2`.
    pub alpha2: f64,
    pub beta2: f64,
    pub alpha2_min: f64,
    pub alpha2_max: f64,
    pub oscillation: Option<Oscillation>,
    pub t_end: f64,
}

/// Length of the recorded window at the end of [`settle`], in units of `1/g`.
pub const SETTLE_WINDOW: f64 = 400.0;

/// Integrates from `(alpha, beta) = (0.1, 0.05) sqrt(n0)` for twenty times
/// the slowest relaxation time of the attracting fixed point (or `20/gamma`
/// without one), then averages over a final window of [`SETTLE_WINDOW`].
pub fn settle(p: &ModelParams) -> Result<NoiselessState> {
    let sq = p.n0.sqrt();
    let s0 = ModeState::new(Complex64::new(0.1 * sq, 0.0), Complex64::new(0.0, 0.05 * sq));
    settle_for(p, s0, (20.0 / relaxation_rate(p)?).clamp(SETTLE_WINDOW, 1e5))
}

/// Slowest decay rate of the attracting fixed point, at least `gamma`.
fn relaxation_rate(p: &ModelParams) -> Result<f64> {
    let report = crate::stability::classify_phase(p)?;
    Ok(report
        .attractor
        .map(|f| f.eigs.iter().map(|e| e.re.abs()).fold(f64::INFINITY, f64::min))
        .unwrap_or(p.damping)
        .max(p.damping))
}

/// [`settle`] from a given initial state, which may lie far from the
/// attractor: the transient is at least [`SETTLE_FROM_MIN`].
pub fn settle_from(p: &ModelParams, s0: ModeState) -> Result<NoiselessState> {
    settle_for(p, s0, (20.0 / relaxation_rate(p)?).clamp(SETTLE_FROM_MIN, 1e5))
}

/// Shortest transient of [`settle_from`], in units of `1/g`.
pub const SETTLE_FROM_MIN: f64 = 4000.0;

fn settle_for(p: &ModelParams, s0: ModeState, transient: f64) -> Result<NoiselessState> {
    let head = run_deterministic(p, s0, transient, transient)?;
    let tail = run_deterministic(p, head.last(), SETTLE_WINDOW, 0.05)?;
    let (a2, b2) = tail.occupations();
    let n = a2.len() as f64;
    Ok(NoiselessState {
        alpha2: a2.iter().sum::<f64>() / n,
        beta2: b2.iter().sum::<f64>() / n,
        alpha2_min: a2.iter().copied().fold(f64::INFINITY, f64::min),
        alpha2_max: a2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        oscillation: tail.oscillation(0.0),
        t_end: transient + SETTLE_WINDOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn noiseless_step_is_euler() {
        let p = ModelParams::new(2.0, 1e-3);
        let s = ModeState::new(c(0.3, -0.1), c(0.2, 0.5));
        let d = p.drift(&s);
        let e = step(&s, &p, 0.01, [c(0.7, 0.1), c(-0.4, 0.2)]);
        assert_eq!(e, s + d * 0.01);
        // with diffusion present but zero increments
        let q = p.with_n_th(10.0).with_quantum_noise(true);
        assert_eq!(step(&s, &q, 0.01, [c(0.0, 0.0); 2]), s + q.drift(&s) * 0.01);
    }

    #[test]
    fn wiener_increments_are_normalized() {
        let mut rng = run_rng(7, 0);
        let dt: f64 = 0.01;
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += complex_increment(&mut rng, (dt / 2.0).sqrt()).norm_sqr();
        }
        let ratio = acc / (n as f64 * dt);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn ensemble_is_seed_deterministic_and_sized() {
        let p = ModelParams::new(2.0, 0.05).with_n_th(3.0);
        let cfg = IntegratorConfig::default().with_runs(4, 50).with_seed(11);
        let a = run_ensemble(&p, &cfg).unwrap();
        let b = run_ensemble(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.alphas.len(), 200);
        assert!(a.times.windows(2).filter(|w| w[1] < w[0]).count() <= 3);
        let other = run_ensemble(&p, &cfg.with_seed(12)).unwrap();
        assert_ne!(a.alphas, other.alphas);
    }

    #[test]
    fn single_cell_array_matches_two_mode_exactly() {
        let p = ModelParams::new(2.5, 0.05).with_n_th(4.0);
        let cfg = IntegratorConfig::default().with_runs(2, 100).with_seed(3);
        let two = run_ensemble(&p, &cfg).unwrap();
        for scheme in [Scheme::Heun, Scheme::EulerMaruyama] {
            let cfg = cfg.with_scheme(scheme);
            let two = run_ensemble(&p, &cfg).unwrap();
            let mut rows = Vec::new();
            for run in 0..cfg.n_runs {
                rows.push(run_array(&p, &cfg, run).unwrap());
            }
            let alphas: Vec<Complex64> = rows.iter().flat_map(|r| r.alphas.clone()).collect();
            let betas: Vec<Complex64> = rows.iter().flat_map(|r| r.betas.clone()).collect();
            assert_eq!(alphas, two.alphas);
            assert_eq!(betas, two.betas);
        }
        assert_eq!(two.cells, 1);
    }

    #[test]
    fn divergence_is_reported() {
        let p = ModelParams::new(0.0, 1e-3).with_n_th(1.0);
        let cfg = IntegratorConfig::default().with_dt(10.0).with_runs(1, 10);
        match run_ensemble(&p, &cfg) {
            Err(Error::NonFinite { run, .. }) => assert_eq!(run, 0),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_relaxation_in_phase_i() {
        let p = ModelParams::new(0.5, 0.05);
        let tr = run_deterministic(&p, ModeState::new(c(1.0, 0.0), c(0.0, 0.5)), 400.0, 1.0).unwrap();
        let last = tr.last();
        assert!(last.alpha.norm_sqr() < 1e-10 && last.beta.norm_sqr() < 1e-10);
        assert!(tr.oscillation(200.0).is_none());
    }

    #[test]
    fn rk4_tracks_the_lossless_coupled_oscillator() {
        // Gamma = gamma = 0: alpha(t) = cos t, beta(t) = -i sin t
        let p = ModelParams::new(0.0, 1e-300);
        let tr = run_deterministic(&p, ModeState::new(c(1.0, 0.0), c(0.0, 0.0)), 10.0, 0.5).unwrap();
        let s = tr.last();
        assert!((s.alpha - c(10f64.cos(), 0.0)).norm() < 1e-7);
        assert!((s.beta - c(0.0, -(10f64.sin()))).norm() < 1e-7);
        let osc = tr.oscillation(0.0).unwrap();
        // |alpha|^2 = cos^2 t oscillates at twice the mode frequency
        assert!((osc.omega - 2.0).abs() < 0.05);
    }
}
