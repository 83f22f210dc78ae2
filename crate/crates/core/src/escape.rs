//! Effective one-dimensional potential of the loss-mode amplitude with the
//! gain mode frozen at its broken-state value, Kramers escape rates and the
//! resulting noise-driven transition point.
//!
//! ```text
//! U(z) = S(z) - g |alpha_ss| z sin(phi) - (gamma Nth / 2) ln z,
//! S'(z) = Gamma z (1 + z^2/n0)^-nu
//! ```

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::roots::{bisect, logspace};
use crate::stability::{broken_state_nu2, classify_phase, phase_boundaries, PhaseLabel};

/// `U(z)` at frozen gain-mode amplitude `alpha_ss` and relative phase `phi`.
pub fn potential(z: f64, p: &ModelParams, alpha_ss: f64, phi: f64) -> f64 {
    Potential { p: *p, alpha_ss, phi }.u(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub p: ModelParams,
    pub alpha_ss: f64,
    pub phi: f64,
}

impl Potential {
    /// Frozen amplitude from the broken state at `phi = pi/2`: the closed form
    /// for `nu = 2`, the stable broken fixed point otherwise.
    pub fn for_params(p: &ModelParams) -> Result<Self> {
        Ok(Self { p: *p, alpha_ss: broken_gain_amplitude(p)?, phi: FRAC_PI_2 })
    }

    fn thermal(&self) -> f64 {
        0.5 * self.p.damping * self.p.n_th
    }

    /// Saturation part `S(z)`, normalized so that `S'(z) = Gamma z (1 + z^2/n0)^-nu`.
    fn saturation_term(&self, z: f64) -> f64 {
        let p = &self.p;
        let u = 1.0 + z * z / p.n0;
        if p.nu == 1.0 {
            0.5 * p.n0 * p.gain * u.ln()
        } else {
            p.n0 * p.gain / (2.0 * (1.0 - p.nu)) * u.powf(1.0 - p.nu)
        }
    }

    pub fn u(&self, z: f64) -> f64 {
        self.saturation_term(z) - self.p.g * self.alpha_ss * z * self.phi.sin() - self.thermal() * z.ln()
    }

    pub fn du(&self, z: f64) -> f64 {
        let p = &self.p;
        p.gain * z * p.saturation(z * z) - p.g * self.alpha_ss * self.phi.sin() - self.thermal() / z
    }

    pub fn d2u(&self, z: f64) -> f64 {
        let p = &self.p;
        let u = 1.0 + z * z / p.n0;
        p.gain * u.powf(-p.nu) - 2.0 * p.nu * p.gain * (z * z / p.n0) * u.powf(-p.nu - 1.0)
            + self.thermal() / (z * z)
    }

    /// Metastable minimum and barrier top: the first `-` to `+` sign change of
    /// `U'` on a log grid over `[1e-3, 1e2] sqrt(n0)` and the following `+` to `-` one.
    pub fn extrema(&self) -> Result<(f64, f64)> {
        let sq = self.p.n0.sqrt();
        let grid = logspace(1e-3 * sq, 1e2 * sq, 2000);
        let vals: Vec<f64> = grid.iter().map(|&z| self.du(z)).collect();
        let refine = |i: usize| bisect(|z| self.du(z), grid[i], grid[i + 1], 1e-10);
        let no_barrier = || Error::NoBarrier { gamma_over_g: self.p.gain / self.p.g };
        let up = (0..grid.len() - 1)
            .find(|&i| vals[i] < 0.0 && vals[i + 1] >= 0.0)
            .ok_or_else(no_barrier)?;
        let down = (up + 1..grid.len() - 1)
            .find(|&i| vals[i] > 0.0 && vals[i + 1] <= 0.0)
            .ok_or_else(no_barrier)?;
        let z_min = refine(up).ok_or_else(no_barrier)?;
        let z_max = refine(down).ok_or_else(no_barrier)?;
        Ok((z_min, z_max))
    }
}

/// `|alpha_ss|` of the symmetry-broken state used to freeze the gain mode.
pub fn broken_gain_amplitude(p: &ModelParams) -> Result<f64> {
    if p.nu == 2.0 {
        return broken_state_nu2(p).map(|(r, _)| r).ok_or(Error::NoBrokenState(p.gain / p.g));
    }
    let report = classify_phase(&ModelParams { n_th: 0.0, ..*p })?;
    match (report.label, report.attractor) {
        (PhaseLabel::III, Some(f)) => Ok(f.state.r),
        _ => Err(Error::NoBrokenState(p.gain / p.g)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapePrediction {
    pub z_min: f64,
    pub z_max: f64,
    pub d_u: f64,
    /// Attempt rate `sqrt(-U''(z_min) U''(z_max)) / (2 pi)`.
    pub r0: f64,
    pub r_esc: f64,
    /// `r_esc < gamma`.
    pub stable: bool,
}

pub fn find_extrema(p: &ModelParams) -> Result<(f64, f64)> {
    Potential::for_params(p)?.extrema()
}

/// Kramers rate `R0 exp(-2 dU / (gamma Nth))` out of the metastable well.
pub fn escape_rate(p: &ModelParams) -> Result<EscapePrediction> {
    escape_rate_in(&Potential::for_params(p)?)
}

pub fn escape_rate_in(pot: &Potential) -> Result<EscapePrediction> {
    let (z_min, z_max) = pot.extrema()?;
    let d_u = pot.u(z_max) - pot.u(z_min);
    let r0 = (-pot.d2u(z_min) * pot.d2u(z_max)).max(0.0).sqrt() / (2.0 * PI);
    let noise = pot.p.damping * pot.p.n_th;
    let r_esc = if noise > 0.0 { r0 * (-2.0 * d_u / noise).exp() } else { 0.0 };
    Ok(EscapePrediction { z_min, z_max, d_u, r0, r_esc, stable: r_esc < pot.p.damping })
}

/// Upper end of the `Gamma/g` scan in [`predict_transition`].
pub const SCAN_TOP: f64 = 200.0;

/// Noise-driven symmetry-breaking point: the largest `Gamma/g` at which the
/// broken state is not metastable (`R_esc >= gamma`, or no barrier at all).
///
/// The scan starts deep in the broken regime and walks down towards the
/// deterministic boundary; the bracketing interval is refined by bisection.
/// When no instability is met above the boundary, the boundary itself is returned.
pub fn predict_transition(p: &ModelParams) -> Result<f64> {
    let b = phase_boundaries(p.nu)?;
    let floor = b.ii_to_iii.ok_or(Error::NoBrokenState(p.gain / p.g))?;
    let stable_at = |x: f64| -> bool {
        let q = p.with_gain(x * p.g);
        matches!(escape_rate(&q), Ok(e) if e.stable)
    };
    let grid = logspace(floor * (1.0 + 1e-6), SCAN_TOP, 400);
    let top = grid.len() - 1;
    if !stable_at(grid[top]) {
        return Err(Error::NoConvergence(format!(
            "broken state is not metastable even at Gamma/g = {SCAN_TOP}"
        )));
    }
    for i in (0..top).rev() {
        if !stable_at(grid[i]) {
            let f = |x: f64| if stable_at(x) { 1.0 } else { -1.0 };
            return bisect(f, grid[i], grid[i + 1], 1e-10).ok_or(Error::NoCrossing { threshold: 0.0 });
        }
    }
    Ok(floor)
}

/// [`predict_transition`] over a grid of `Nth/n0`, in grid order.
pub fn transition_curve(base: &ModelParams, nth_over_n0: &[f64]) -> Vec<Result<f64>> {
    nth_over_n0
        .par_iter()
        .map(|&x| predict_transition(&base.with_n_th(x * base.n0)))
        .collect()
}
