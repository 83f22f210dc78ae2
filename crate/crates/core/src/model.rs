//! Model parameters, gain/loss rates and diffusion functions of the
//! saturable gain-loss dimer (and its ring-array generalization).
//!
//! All rates are stored in units of the intra-cell coupling `g`; configs
//! loaded from JSON are rescaled so that `g == 1` afterwards.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Physical constants of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Intra-cell coupling rate.
    pub g: f64,
    /// Maximal gain (and loss) rate.
    #[serde(rename = "Gamma")]
    pub gain: f64,
    /// Bare mechanical damping rate.
    #[serde(rename = "gamma")]
    pub damping: f64,
    /// Saturation exponent.
    pub nu: f64,
    /// Saturation occupation number.
    pub n0: f64,
    /// Thermal occupation number.
    #[serde(rename = "Nth")]
    pub n_th: f64,
    /// Include the amplitude-dependent quantum diffusion of the gain mode.
    pub quantum_noise: bool,
    /// Inter-cell coupling for ring arrays.
    pub gprime: f64,
    /// Number of unit cells; 1 is the plain two-mode system.
    #[serde(rename = "Ncells")]
    pub cells: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            gain: 0.0,
            damping: 1e-3,
            nu: 2.0,
            n0: 1.0,
            n_th: 0.0,
            quantum_noise: false,
            gprime: 0.0,
            cells: 1,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "one")]
    g: f64,
    #[serde(rename = "Gamma")]
    gain: f64,
    #[serde(rename = "gamma")]
    damping: f64,
    #[serde(default = "two")]
    nu: f64,
    #[serde(default = "one")]
    n0: f64,
    #[serde(rename = "Nth", default)]
    n_th: f64,
    #[serde(default)]
    quantum_noise: bool,
    #[serde(default)]
    gprime: f64,
    #[serde(rename = "Ncells", default = "one_cell")]
    cells: usize,
}

impl RawConfig {
    fn into_params(self) -> Result<ModelParams> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {}", self.g)));
        }
        let p = ModelParams {
            g: 1.0,
            gain: self.gain / self.g,
            damping: self.damping / self.g,
            nu: self.nu,
            n0: self.n0,
            n_th: self.n_th,
            quantum_noise: self.quantum_noise,
            gprime: self.gprime / self.g,
            cells: self.cells,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Serde adapter that reads a [`ModelParams`] field with the same rules as
/// [`ModelParams::from_json_str`].
pub fn deserialize_config<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<ModelParams, D::Error> {
    RawConfig::deserialize(d)?.into_params().map_err(serde::de::Error::custom)
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_cell() -> usize {
    1
}

impl ModelParams {
    /// Two-mode parameters with `g = 1`, the given `Gamma/g` and `gamma/g`,
    /// and defaults `nu = 2`, `n0 = 1`, `Nth = 0`.
    pub fn new(gain_over_g: f64, damping_over_g: f64) -> Self {
        Self {
            gain: gain_over_g,
            damping: damping_over_g,
            ..Self::default()
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_n0(mut self, n0: f64) -> Self {
        self.n0 = n0;
        self
    }

    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.n_th = n_th;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_quantum_noise(mut self, on: bool) -> Self {
        self.quantum_noise = on;
        self
    }

    pub fn with_array(mut self, cells: usize, gprime: f64) -> Self {
        self.cells = cells;
        self.gprime = gprime;
        self
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    /// Parses a run configuration and rescales every rate to units of `g`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)?;
        let p = raw.into_params()?;
        for w in p.warnings() {
            log::warn!("{w}");
        }
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("ModelParams serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::InvalidParameter(msg)) };
        check(self.g > 0.0 && self.g.is_finite(), format!("g must be positive, got {}", self.g))?;
        check(self.gain >= 0.0 && self.gain.is_finite(), format!("Gamma must be >= 0, got {}", self.gain))?;
        check(
            self.damping > 0.0 && self.damping.is_finite(),
            format!("gamma must be positive, got {}", self.damping),
        )?;
        check(self.nu >= 1.0 && self.nu.is_finite(), format!("nu must be >= 1, got {}", self.nu))?;
        check(self.n0 > 0.0 && self.n0.is_finite(), format!("n0 must be positive, got {}", self.n0))?;
        check(self.n_th >= 0.0 && self.n_th.is_finite(), format!("Nth must be >= 0, got {}", self.n_th))?;
        check(self.gprime >= 0.0 && self.gprime.is_finite(), format!("gprime must be >= 0, got {}", self.gprime))?;
        check(self.cells >= 1, "Ncells must be >= 1".to_string())?;
        Ok(())
    }

    /// Non-fatal consistency notes about the parameter set.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.quantum_noise && (self.nu - 2.0).abs() > 1e-12 {
            out.push(format!(
                "quantum diffusion is defined for the nu = 2 gain mechanism; using it with nu = {}",
                self.nu
            ));
        }
        if self.cells == 1 && self.gprime != 0.0 {
            out.push("gprime on a single cell couples the cell to itself".to_string());
        }
        out
    }

    pub fn is_array(&self) -> bool {
        self.cells > 1 || self.gprime != 0.0
    }

    /// Saturation factor `(1 + occ/n0)^-nu` for an occupation `occ = |a|^2`.
    #[inline]
    pub fn saturation(&self, occ: f64) -> f64 {
        let u = 1.0 + occ / self.n0;
        if self.nu == 2.0 {
            1.0 / (u * u)
        } else if self.nu == 1.0 {
            1.0 / u
        } else {
            u.powf(-self.nu)
        }
    }

    /// Saturated gain `Gamma (1 + x^2/n0)^-nu` of a real amplitude, without damping.
    #[inline]
    pub fn saturated_gain(&self, x: f64) -> f64 {
        self.gain * self.saturation(x * x)
    }

    /// First derivative of [`saturated_gain`](Self::saturated_gain) in `x`.
    pub fn saturated_gain_prime(&self, x: f64) -> f64 {
        let u = 1.0 + x * x / self.n0;
        -2.0 * self.nu * self.gain * x / self.n0 * u.powf(-self.nu - 1.0)
    }

    /// Second derivative of [`saturated_gain`](Self::saturated_gain) in `x`.
    pub fn saturated_gain_second(&self, x: f64) -> f64 {
        let u = 1.0 + x * x / self.n0;
        let nu = self.nu;
        -2.0 * nu * self.gain / self.n0 * u.powf(-nu - 1.0)
            + 4.0 * nu * (nu + 1.0) * self.gain * x * x / (self.n0 * self.n0) * u.powf(-nu - 2.0)
    }

    /// Net gain rate of the pumped mode.
    #[inline]
    pub fn gain_rate(&self, a: Complex64) -> f64 {
        self.gain * self.saturation(a.norm_sqr()) - self.damping
    }

    /// Net (negative) rate of the cooled mode.
    #[inline]
    pub fn loss_rate(&self, b: Complex64) -> f64 {
        -self.gain * self.saturation(b.norm_sqr()) - self.damping
    }

    /// Quantum diffusion of the gain mode, zero unless enabled.
    #[inline]
    pub fn quantum_diffusion(&self, a: Complex64) -> f64 {
        if self.quantum_noise {
            let u = 1.0 + a.norm_sqr() / self.n0;
            2.0 * self.gain / (u * u * u)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn diffusion_plus(&self, a: Complex64) -> f64 {
        self.quantum_diffusion(a) + self.diffusion_minus()
    }

    #[inline]
    pub fn diffusion_minus(&self) -> f64 {
        2.0 * self.damping * self.n_th
    }

    /// Deterministic part of the two-mode equations of motion.
    #[inline]
    pub fn drift(&self, s: &ModeState) -> ModeState {
        let ga = self.gain_rate(s.alpha);
        let gb = self.loss_rate(s.beta);
        ModeState {
            alpha: s.alpha * ga - I * (self.g * s.beta),
            beta: s.beta * gb - I * (self.g * s.alpha),
        }
    }

    /// Deterministic part of the ring-array equations with periodic boundaries.
    ///
    /// Cell `n` couples its gain mode to the loss mode of cell `n - 1` and its
    /// loss mode to the gain mode of cell `n + 1` with strength `gprime`.
    pub fn drift_array(&self, s: &ArrayState, out: &mut ArrayState) {
        let n = s.len();
        debug_assert_eq!(out.len(), n);
        for c in 0..n {
            let d = self.drift(&ModeState::new(s.alpha[c], s.beta[c]));
            out.alpha[c] = d.alpha;
            out.beta[c] = d.beta;
        }
        if self.gprime != 0.0 {
            for c in 0..n {
                let prev = (c + n - 1) % n;
                let next = (c + 1) % n;
                out.alpha[c] -= I * (self.gprime * s.beta[prev]);
                out.beta[c] -= I * (self.gprime * s.alpha[next]);
            }
        }
    }
}

/// Complex amplitudes of the gain (`alpha`) and loss (`beta`) modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeState {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl ModeState {
    pub const ZERO: ModeState = ModeState {
        alpha: Complex64::new(0.0, 0.0),
        beta: Complex64::new(0.0, 0.0),
    };

    pub fn new(alpha: Complex64, beta: Complex64) -> Self {
        Self { alpha, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }

    /// Multiplies both amplitudes by `e^{i theta}`.
    pub fn rotate(&self, theta: f64) -> Self {
        let ph = Complex64::from_polar(1.0, theta);
        Self::new(self.alpha * ph, self.beta * ph)
    }
}

impl Add for ModeState {
    type Output = ModeState;
    #[inline]
    fn add(self, o: ModeState) -> ModeState {
        ModeState::new(self.alpha + o.alpha, self.beta + o.beta)
    }
}

impl Sub for ModeState {
    type Output = ModeState;
    #[inline]
    fn sub(self, o: ModeState) -> ModeState {
        ModeState::new(self.alpha - o.alpha, self.beta - o.beta)
    }
}

impl Mul<f64> for ModeState {
    type Output = ModeState;
    #[inline]
    fn mul(self, k: f64) -> ModeState {
        ModeState::new(self.alpha * k, self.beta * k)
    }
}

/// Gain and loss amplitudes of every cell of a ring array.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrayState {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
}

impl ArrayState {
    pub fn zeros(cells: usize) -> Self {
        Self {
            alpha: vec![Complex64::new(0.0, 0.0); cells],
            beta: vec![Complex64::new(0.0, 0.0); cells],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn cell(&self, n: usize) -> ModeState {
        ModeState::new(self.alpha[n], self.beta[n])
    }
}

/// Constants of the auxiliary three-level system that engineers the gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroscopicParams {
    /// Strain coupling constant.
    pub lambda: f64,
    /// Optical drive amplitude.
    pub omega: f64,
    /// Decay rate of the auxiliary excited states.
    pub gamma_a: f64,
}

/// Maps the auxiliary-system constants onto `(Gamma, n0)`.
///
/// Valid for weak driving; a drive comparable to the decay rate only logs a warning.
pub fn map_microscopic(mp: &MicroscopicParams) -> Result<(f64, f64)> {
    if !(mp.lambda > 0.0 && mp.omega > 0.0 && mp.gamma_a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "microscopic parameters must be positive: {mp:?}"
        )));
    }
    if mp.omega > 0.1 * mp.gamma_a {
        log::warn!(
            "drive Omega = {} is not small against Gamma_a = {}; the mapping assumes weak driving",
            mp.omega,
            mp.gamma_a
        );
    }
    let l2 = mp.lambda * mp.lambda;
    let gain = 2.0 * l2 * mp.omega * mp.omega / mp.gamma_a.powi(3);
    let n0 = mp.gamma_a * mp.gamma_a / (4.0 * l2);
    Ok((gain, n0))
}
