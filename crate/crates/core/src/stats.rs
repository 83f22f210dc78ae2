//! Steady-state statistics: radial histograms, displaced-Rayleigh fits, the
//! symmetry parameter `Delta` and transition detection on `Delta` curves.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Histogram resolution cap.
pub const MAX_BINS: usize = 256;

/// Uniform histogram of sample moduli over `[0, 1.05 max|x|]`, normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: f64,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub count: usize,
}

impl Histogram {
    pub fn nbins(&self) -> usize {
        self.centers.len()
    }

    pub fn upper(&self) -> f64 {
        self.width * self.nbins() as f64
    }
}

/// Bins `|x|` of the samples; `nbins = None` picks `ceil(sqrt(n))` capped at [`MAX_BINS`].
pub fn radial_histogram(samples: &[Complex64], nbins: Option<usize>) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("radial_histogram needs samples"));
    }
    let n = samples.len();
    let nb = nbins
        .unwrap_or_else(|| ((n as f64).sqrt().ceil() as usize).min(MAX_BINS))
        .max(1);
    let max = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidParameter("non-finite sample".to_string()));
    }
    let upper = if max > 0.0 { 1.05 * max } else { 1.0 };
    let width = upper / nb as f64;
    let mut counts = vec![0usize; nb];
    for s in samples {
        let i = ((s.norm() / width) as usize).min(nb - 1);
        counts[i] += 1;
    }
    let norm = 1.0 / (n as f64 * width);
    Ok(Histogram {
        width,
        centers: (0..nb).map(|i| (i as f64 + 0.5) * width).collect(),
        density: counts.iter().map(|&c| c as f64 * norm).collect(),
        count: n,
    })
}

/// Unit-mass displaced Rayleigh density `N r exp(-(r - r0)^2 / sigma^2)` on `r >= 0`.
pub fn displaced_rayleigh(r: f64, r0: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let mass = 0.5 * s2 * (-r0 * r0 / s2).exp() + 0.5 * r0 * sigma * PI.sqrt() * (1.0 + erf(r0 / sigma));
    r * (-(r - r0) * (r - r0) / s2).exp() / mass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialFit {
    pub r0: f64,
    pub sigma: f64,
    /// `<|x|^2> - r0^2` from the raw samples; NaN until attached.
    pub fluct: f64,
    pub chi2: f64,
    pub nbins: usize,
    /// The simplex refinement did not converge; `r0`, `sigma` are the best point found.
    pub degraded: bool,
}

struct Chi2<'a> {
    hist: &'a Histogram,
}

impl Chi2<'_> {
    fn eval(&self, r0: f64, sigma: f64) -> f64 {
        let (r0, sigma) = (r0.abs(), sigma.abs());
        if sigma == 0.0 {
            return f64::INFINITY;
        }
        self.hist
            .centers
            .iter()
            .zip(&self.hist.density)
            .map(|(&c, &h)| {
                let d = h - displaced_rayleigh(c, r0, sigma);
                d * d
            })
            .sum()
    }
}

impl CostFunction for Chi2<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(x[0], x[1]))
    }
}

const GRID: usize = 41;

/// Least-squares fit of [`displaced_rayleigh`] to a histogram: a 41 x 41
/// grid over `(r0, sigma)` followed by Nelder–Mead refinement (relative
/// `chi2` change below `1e-8`, at most 500 iterations).
pub fn fit_radial(hist: &Histogram) -> Result<RadialFit> {
    if hist.nbins() == 0 || hist.count == 0 {
        return Err(Error::EmptyInput("fit_radial needs a nonempty histogram"));
    }
    let cost = Chi2 { hist };
    let upper = hist.upper();
    let sig_lo = 0.5 * hist.width;
    let sig_hi = upper;
    let grid: Vec<(f64, f64)> = (0..GRID)
        .flat_map(|i| {
            (0..GRID).map(move |j| {
                let r0 = upper * i as f64 / (GRID - 1) as f64;
                let sigma = sig_lo * (sig_hi / sig_lo).powf(j as f64 / (GRID - 1) as f64);
                (r0, sigma)
            })
        })
        .collect();
    let (best, best_chi2) = grid
        .par_iter()
        .map(|&(r0, s)| ((r0, s), cost.eval(r0, s)))
        .reduce(|| ((0.0, 1.0), f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });

    let (r0, s) = best;
    let dr = 0.5 * upper / (GRID - 1) as f64;
    let simplex = vec![vec![r0, s], vec![r0 + dr, s], vec![r0, s * 1.1]];
    let tol = (1e-8 * best_chi2).max(f64::MIN_POSITIVE);
    let refined = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(|e| Error::NoConvergence(e.to_string()))
        .and_then(|solver| {
            Executor::new(Chi2 { hist }, solver)
                .configure(|st| st.max_iters(500))
                .run()
                .map_err(|e| Error::NoConvergence(e.to_string()))
        });
    let (mut out_r0, mut out_s, mut chi2, mut degraded) = (r0, s, best_chi2, true);
    if let Ok(res) = refined {
        let st = res.state();
        let converged = matches!(
            st.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        if let Some(x) = st.get_best_param() {
            let c = st.get_best_cost();
            if c <= best_chi2 {
                out_r0 = x[0].abs();
                out_s = x[1].abs();
                chi2 = c;
            }
        }
        degraded = !converged;
    }
    if degraded {
        log::warn!("radial fit did not converge; reporting best point (chi2 = {chi2:.3e})");
    }
    Ok(RadialFit { r0: out_r0, sigma: out_s, fluct: f64::NAN, chi2, nbins: hist.nbins(), degraded })
}

/// `<|x|^2>` of the samples.
pub fn mean_occupation(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Histogram, fit and fluctuation measure of one mode's samples.
pub fn fit_samples(samples: &[Complex64]) -> Result<RadialFit> {
    let hist = radial_histogram(samples, None)?;
    let mut fit = fit_radial(&hist)?;
    fit.fluct = mean_occupation(samples) - fit.r0 * fit.r0;
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub delta: f64,
    pub mean_occ_gain: f64,
    pub mean_occ_loss: f64,
    /// Mean net dissipation `<-(Gamma_+(alpha) + Gamma_-(beta))>`.
    pub gamma_bar: f64,
}

/// `Delta = <(|alpha| - |beta|)^2> / (<|alpha|^2> + <|beta|^2>)` over
/// time-paired samples, together with the mean occupations and dissipation.
pub fn symmetry_delta(alphas: &[Complex64], betas: &[Complex64], p: &ModelParams) -> Result<SymmetryReport> {
    if alphas.len() != betas.len() {
        return Err(Error::LengthMismatch(alphas.len(), betas.len()));
    }
    if alphas.is_empty() {
        return Err(Error::EmptyInput("symmetry_delta needs samples"));
    }
    let n = alphas.len() as f64;
    let (mut num, mut occ_a, mut occ_b, mut diss) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in alphas.iter().zip(betas) {
        let (ra, rb) = (a.norm(), b.norm());
        num += (ra - rb) * (ra - rb);
        occ_a += ra * ra;
        occ_b += rb * rb;
        diss -= p.gain_rate(*a) + p.loss_rate(*b);
    }
    let den = occ_a + occ_b;
    let delta = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
    Ok(SymmetryReport {
        delta,
        mean_occ_gain: occ_a / n,
        mean_occ_loss: occ_b / n,
        gamma_bar: diss / n,
    })
}

/// Linearly interpolated abscissa where `y` first crosses `threshold` from below.
pub fn detect_transition(x: &[f64], y: &[f64], threshold: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("detect_transition needs a curve"));
    }
    for i in 0..x.len().saturating_sub(1) {
        if y[i] < threshold && y[i + 1] >= threshold {
            let f = (threshold - y[i]) / (y[i + 1] - y[i]);
            return Ok(x[i] + f * (x[i + 1] - x[i]));
        }
    }
    Err(Error::NoCrossing { threshold })
}
