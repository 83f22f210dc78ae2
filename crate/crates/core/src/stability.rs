//! Noiseless analysis in polar coordinates: fixed points, Jacobian
//! classification, closed-form phase boundaries and the plane-wave
//! reduction of ring arrays.
//!
//! With `alpha = r e^{i theta_a}`, `beta = z e^{i theta_b}` and
//! `phi = theta_a - theta_b`, stationary states sit at `phi = pi/2` and solve
//!
//! ```text
//! (G(r) - gamma) r = g z,      (G(z) + gamma) z = g r,
//! ```
//!
//! where `G(x) = Gamma (1 + x^2/n0)^-nu` is the saturated gain.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModeState, ModelParams};
use crate::roots::{all_roots, bisect, logspace};

/// `|tau|` or `|delta|` below this is reported as marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Fixed points closer than `DEDUP_TOL * sqrt(n0)` are merged.
pub const DEDUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r: f64,
    pub z: f64,
    pub phi: f64,
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

impl PolarState {
    pub fn new(r: f64, z: f64, phi: f64) -> Self {
        Self { r, z, phi: wrap_phase(phi) }
    }

    pub fn from_mode(s: &ModeState) -> Self {
        Self::new(s.alpha.norm(), s.beta.norm(), s.alpha.arg() - s.beta.arg())
    }

    /// Cartesian amplitudes with the loss-mode phase set to `theta_b`.
    pub fn to_mode(&self, theta_b: f64) -> ModeState {
        ModeState::new(
            Complex64::from_polar(self.r, theta_b + self.phi),
            Complex64::from_polar(self.z, theta_b),
        )
    }
}

/// Time derivatives `(dr/dt, dz/dt, dphi/dt)`, returned in a [`PolarState`]
/// whose `phi` field holds the (unwrapped) phase velocity.
pub fn polar_rhs(s: &PolarState, p: &ModelParams) -> Result<PolarState> {
    if !(s.r > 0.0 && s.z > 0.0) {
        return Err(Error::SingularPolar { r: s.r, z: s.z });
    }
    let (sin, cos) = s.phi.sin_cos();
    let g = p.g;
    Ok(PolarState {
        r: (p.saturated_gain(s.r) - p.damping) * s.r - g * sin * s.z,
        z: -(p.damping + p.saturated_gain(s.z)) * s.z + g * sin * s.r,
        phi: g * cos * (s.r / s.z - s.z / s.r),
    })
}

/// The two nullclines of the `phi = pi/2` dynamics in the `(r, z)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nullclines {
    pub gain_over_g: f64,
    pub damping_over_g: f64,
    pub nu: f64,
    pub n0: f64,
}

pub fn nullclines(p: &ModelParams) -> Nullclines {
    Nullclines {
        gain_over_g: p.gain / p.g,
        damping_over_g: p.damping / p.g,
        nu: p.nu,
        n0: p.n0,
    }
}

impl Nullclines {
    /// `f(x) = (Gamma/g) x (1 + x^2/n0)^-nu`.
    pub fn f(&self, x: f64) -> f64 {
        self.gain_over_g * x * (1.0 + x * x / self.n0).powf(-self.nu)
    }

    /// `z` on the `dr/dt = 0` curve.
    pub fn gain_branch(&self, r: f64) -> f64 {
        self.f(r) - self.damping_over_g * r
    }

    /// `r` on the `dz/dt = 0` curve.
    pub fn loss_branch(&self, z: f64) -> f64 {
        self.f(z) + self.damping_over_g * z
    }

    pub fn argmax(&self) -> f64 {
        (self.n0 / (2.0 * self.nu - 1.0)).sqrt()
    }

    pub fn max_value(&self) -> f64 {
        let nu = self.nu;
        self.gain_over_g * self.n0.sqrt() * (2.0 * nu - 1.0).powf(nu - 0.5) * (2.0 * nu).powf(-nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    StableNode,
    StableSpiral,
    UnstableNode,
    UnstableSpiral,
    Saddle,
    CenterMarginal,
}

impl FixedPointKind {
    pub fn classify(tau: f64, delta: f64) -> Self {
        if tau.abs() < MARGINAL_TOL || delta.abs() < MARGINAL_TOL {
            return FixedPointKind::CenterMarginal;
        }
        if delta < 0.0 {
            return FixedPointKind::Saddle;
        }
        let spiral = tau * tau - 4.0 * delta < 0.0;
        match (tau < 0.0, spiral) {
            (true, true) => FixedPointKind::StableSpiral,
            (true, false) => FixedPointKind::StableNode,
            (false, true) => FixedPointKind::UnstableSpiral,
            (false, false) => FixedPointKind::UnstableNode,
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, FixedPointKind::StableNode | FixedPointKind::StableSpiral)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FixedPointKind::StableNode => "stable_node",
            FixedPointKind::StableSpiral => "stable_spiral",
            FixedPointKind::UnstableNode => "unstable_node",
            FixedPointKind::UnstableSpiral => "unstable_spiral",
            FixedPointKind::Saddle => "saddle",
            FixedPointKind::CenterMarginal => "center_marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub state: PolarState,
    pub tau: f64,
    pub delta: f64,
    pub eigs: [Complex64; 2],
    pub kind: FixedPointKind,
    /// `r < z`: the pinned phase `pi/2` is itself unstable here, so the
    /// classification only describes the `(r, z)` subsystem.
    pub phase_unstable: bool,
}

impl FixedPoint {
    pub fn is_origin(&self) -> bool {
        self.state.r == 0.0 && self.state.z == 0.0
    }
}

/// `d/dx [G(x) x]`.
fn flux_prime(p: &ModelParams, x: f64) -> f64 {
    p.saturated_gain_prime(x) * x + p.saturated_gain(x)
}

/// Jacobian of `(dr/dt, dz/dt)` at `phi = pi/2`.
pub fn jacobian(p: &ModelParams, r: f64, z: f64) -> [[f64; 2]; 2] {
    [
        [flux_prime(p, r) - p.damping, -p.g],
        [p.g, -flux_prime(p, z) - p.damping],
    ]
}

/// Eigenvalues `(tau +- sqrt(tau^2 - 4 delta)) / 2`.
pub fn eigenvalues(tau: f64, delta: f64) -> [Complex64; 2] {
    let root = Complex64::new(tau * tau - 4.0 * delta, 0.0).sqrt();
    [(tau + root) * 0.5, (tau - root) * 0.5]
}

/// Builds the fixed-point record for a stationary `(r, z)`.
pub fn fixed_point_at(p: &ModelParams, r: f64, z: f64) -> FixedPoint {
    let (tau, delta) = if r == 0.0 && z == 0.0 {
        // exact: tau = (Gamma - gamma) - (Gamma + gamma)
        (-2.0 * p.damping, p.g * p.g - p.gain * p.gain + p.damping * p.damping)
    } else {
        let j = jacobian(p, r, z);
        (j[0][0] + j[1][1], j[0][0] * j[1][1] - j[0][1] * j[1][0])
    };
    FixedPoint {
        state: PolarState::new(r, z, FRAC_PI_2),
        tau,
        delta,
        eigs: eigenvalues(tau, delta),
        kind: FixedPointKind::classify(tau, delta),
        phase_unstable: r < z,
    }
}

/// Residual of the stationarity system at `(r, z)`.
pub fn stationarity_residual(p: &ModelParams, r: f64, z: f64) -> [f64; 2] {
    [
        (p.saturated_gain(r) - p.damping) * r - p.g * z,
        p.g * r - (p.saturated_gain(z) + p.damping) * z,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub r: f64,
    pub z: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// Origin first, then by increasing `r`.
    pub points: Vec<FixedPoint>,
    /// Seeds whose Newton iteration did not end on a valid root.
    pub seed_failures: Vec<SeedFailure>,
}

impl FixedPointReport {
    pub fn non_origin(&self) -> impl Iterator<Item = &FixedPoint> {
        self.points.iter().filter(|f| !f.is_origin())
    }
}

enum NewtonOutcome {
    Root(f64, f64),
    Origin,
}

/// Damped Newton iteration on the stationarity system.
fn newton(p: &ModelParams, mut r: f64, mut z: f64) -> std::result::Result<NewtonOutcome, String> {
    let scale = p.g.max(p.gain) * p.n0.sqrt();
    let norm = |f: [f64; 2]| f[0].abs().max(f[1].abs());
    let mut res = stationarity_residual(p, r, z);
    for _ in 0..200 {
        let size = scale * (1.0 + (r.abs() + z.abs()) / p.n0.sqrt());
        if norm(res) <= 1e-14 * size {
            break;
        }
        let j = jacobian(p, r, z);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(format!("singular Jacobian at r = {r}, z = {z}"));
        }
        let dr = (-res[0] * j[1][1] + res[1] * j[0][1]) / det;
        let dz = (-res[1] * j[0][0] + res[0] * j[1][0]) / det;
        let mut lambda = 1.0;
        let current = norm(res);
        loop {
            let (rn, zn) = (r + lambda * dr, z + lambda * dz);
            let rn_res = stationarity_residual(p, rn, zn);
            if norm(rn_res) < current || lambda < 1e-10 {
                if !(rn.is_finite() && zn.is_finite()) {
                    return Err("iterate left the finite range".to_string());
                }
                r = rn;
                z = zn;
                res = rn_res;
                break;
            }
            lambda *= 0.5;
        }
        if lambda < 1e-10 && norm(res) >= current {
            return Err(format!("line search stalled at r = {r}, z = {z}"));
        }
    }
    let size = scale * (1.0 + (r.abs() + z.abs()) / p.n0.sqrt());
    if norm(res) > 1e-11 * size {
        return Err(format!("no convergence from the seed (residual {:.3e})", norm(res)));
    }
    let tiny = DEDUP_TOL * p.n0.sqrt();
    if r.abs() < tiny && z.abs() < tiny {
        return Ok(NewtonOutcome::Origin);
    }
    // (r, z) -> (-r, -z) is a symmetry of the stationarity system
    if r < 0.0 && z < 0.0 {
        r = -r;
        z = -z;
    }
    if r <= 0.0 || z <= 0.0 {
        return Err(format!("root r = {r}, z = {z} lies outside the phi = pi/2 quadrant"));
    }
    Ok(NewtonOutcome::Root(r, z))
}

/// Amplitudes of the symmetry-broken state of the `nu = 2` model in the
/// `gamma -> 0` limit, `None` below `Gamma = 4g`.
pub fn broken_state_nu2(p: &ModelParams) -> Option<(f64, f64)> {
    let (g, gain) = (p.g, p.gain);
    let disc = gain * (gain - 4.0 * g);
    if disc < 0.0 {
        return None;
    }
    let r2 = p.n0 * ((gain + disc.sqrt()) / (2.0 * g) - 1.0);
    let z2 = p.n0 * ((gain - disc.sqrt()) / (2.0 * g) - 1.0);
    if z2 < 0.0 {
        return None;
    }
    Some((r2.sqrt(), z2.sqrt()))
}

/// Roots of the stationarity system found by scanning one nullcline against the other.
fn nullcline_roots(p: &ModelParams) -> Vec<(f64, f64)> {
    if p.gain <= p.damping {
        return Vec::new();
    }
    let sq = p.n0.sqrt();
    // gain nullcline has z > 0 only while G(r) > gamma
    let r_max = (sq * ((p.gain / p.damping).powf(1.0 / p.nu) - 1.0).sqrt()).min(1e6 * sq);
    let lo = 1e-6 * sq;
    if r_max.is_nan() || r_max <= lo {
        return Vec::new();
    }
    let z_of = |r: f64| (p.saturated_gain(r) - p.damping) * r / p.g;
    let h = |r: f64| {
        let z = z_of(r);
        p.g * r - (p.saturated_gain(z) + p.damping) * z
    };
    let grid = logspace(lo, r_max * (1.0 - 1e-12), 4000);
    all_roots(h, &grid, 1e-15).into_iter().map(|r| (r, z_of(r))).collect()
}

/// Deterministic Newton seeds: a log-spaced `(r, z)` grid plus the analytic predictions.
fn newton_seeds(p: &ModelParams) -> Vec<(f64, f64)> {
    let sq = p.n0.sqrt();
    let mut seeds = Vec::with_capacity(40);
    for r in logspace(1e-2 * sq, 1e1 * sq, 8) {
        for ratio in [0.3, 0.7, 1.0, 1.5] {
            seeds.push((r, r * ratio));
        }
    }
    if let Ok((r, z)) = phase_ii_correction(p) {
        seeds.push((r, z));
    }
    if let Some((r, z)) = broken_state_nu2(p) {
        seeds.push((r, z));
        seeds.push((z, r));
    }
    seeds
}

/// All stationary states on the `phi = pi/2` manifold with Jacobian data.
pub fn find_fixed_points(p: &ModelParams) -> Result<FixedPointReport> {
    p.validate()?;
    let tol = DEDUP_TOL * p.n0.sqrt();
    let mut roots: Vec<(f64, f64)> = Vec::new();
    let mut failures = Vec::new();
    let push = |r: f64, z: f64, roots: &mut Vec<(f64, f64)>| {
        if !roots.iter().any(|&(a, b)| (a - r).abs() < tol && (b - z).abs() < tol) {
            roots.push((r, z));
        }
    };
    for (r, z) in nullcline_roots(p).into_iter().chain(newton_seeds(p)) {
        match newton(p, r, z) {
            Ok(NewtonOutcome::Root(r, z)) => push(r, z, &mut roots),
            Ok(NewtonOutcome::Origin) => {}
            Err(reason) => failures.push(SeedFailure { r, z, reason }),
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![fixed_point_at(p, 0.0, 0.0)];
    points.extend(roots.into_iter().map(|(r, z)| fixed_point_at(p, r, z)));
    if !failures.is_empty() {
        log::debug!("{} fixed-point seeds failed at Gamma/g = {}", failures.len(), p.gain / p.g);
    }
    Ok(FixedPointReport { points, seed_failures: failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    I,
    II,
    IIIw,
    III,
    #[serde(rename = "INTERMEDIATE")]
    Intermediate,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::I => "I",
            PhaseLabel::II => "II",
            PhaseLabel::IIIw => "IIIw",
            PhaseLabel::III => "III",
            PhaseLabel::Intermediate => "INTERMEDIATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub label: PhaseLabel,
    pub fixed_points: FixedPointReport,
    /// The attracting fixed point, absent for limit cycles and the intermediate regime.
    pub attractor: Option<FixedPoint>,
    /// Limit-cycle frequency estimate for `IIIw`.
    pub omega_osc: Option<f64>,
}

impl PhaseReport {
    /// Steady occupations `(|alpha_ss|^2, |beta_ss|^2)`, NaN without a fixed attractor.
    pub fn occupations(&self) -> (f64, f64) {
        match self.attractor {
            Some(f) => (f.state.r * f.state.r, f.state.z * f.state.z),
            None => (f64::NAN, f64::NAN),
        }
    }
}

/// Labels the deterministic phase from the fixed-point structure.
pub fn classify_phase(p: &ModelParams) -> Result<PhaseReport> {
    let report = find_fixed_points(p)?;
    let origin = report.points[0];
    let others: Vec<FixedPoint> = report.non_origin().copied().collect();
    let stable: Vec<FixedPoint> = others
        .iter()
        .filter(|f| f.kind.is_stable() && !f.phase_unstable)
        .copied()
        .collect();
    // the symmetric branch is the non-origin point with the smallest imbalance
    let symmetric = others
        .iter()
        .min_by(|a, b| (a.state.r - a.state.z).abs().total_cmp(&(b.state.r - b.state.z).abs()))
        .copied();
    let broken = stable
        .iter()
        .filter(|f| Some(**f) != symmetric)
        .max_by(|a, b| (a.state.r - a.state.z).total_cmp(&(b.state.r - b.state.z)))
        .copied();
    let (label, attractor, omega) = match (others.len(), stable.first()) {
        (0, _) => (PhaseLabel::I, Some(origin), None),
        (1, Some(&f)) => (PhaseLabel::II, Some(f), None),
        (1, None) => (PhaseLabel::IIIw, None, omega_osc(p)),
        _ => match broken {
            Some(f) => (PhaseLabel::III, Some(f), None),
            None if !stable.is_empty() => (PhaseLabel::II, Some(stable[0]), None),
            None => (PhaseLabel::Intermediate, None, None),
        },
    };
    Ok(PhaseReport { label, fixed_points: report, attractor, omega_osc: omega })
}

/// Classifies every point of a `Gamma/g` grid in parallel; results keep grid order.
pub fn scan_phases(base: &ModelParams, gamma_over_g: &[f64]) -> Vec<Result<PhaseReport>> {
    gamma_over_g
        .par_iter()
        .map(|&x| classify_phase(&base.with_gain(x * base.g)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    pub nu: f64,
    pub i_to_ii: f64,
    /// Hopf point of the symmetric state; absent for `nu >= 2`.
    pub ii_to_iiiw: Option<f64>,
    /// Saddle-node point of the symmetric state; absent for `nu = 1`.
    pub ii_to_iii: Option<f64>,
}

/// Closed-form `Gamma/g` values of the deterministic phase transitions.
pub fn phase_boundaries(nu: f64) -> Result<PhaseBoundaries> {
    if !(nu >= 1.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu must be >= 1, got {nu}")));
    }
    let iiiw = if nu < 2.0 {
        let num = nu + 2.0 * nu * nu + (2.0 * nu + 3.0 * nu * nu).sqrt();
        Some((num / (2.0 * nu * nu - 1.0)).powf(nu))
    } else {
        None
    };
    let iii = if nu > 1.0 { Some((nu / (nu - 1.0)).powf(nu)) } else { None };
    Ok(PhaseBoundaries { nu, i_to_ii: 1.0, ii_to_iiiw: iiiw, ii_to_iii: iii })
}

/// Symmetric-state amplitudes to first order in `gamma`: `r0 + gamma r1`, `r0 - gamma r1`.
pub fn phase_ii_correction(p: &ModelParams) -> Result<(f64, f64)> {
    let x = p.gain / p.g;
    if x < 1.0 {
        return Err(Error::InvalidParameter(format!("no symmetric state below Gamma/g = 1 (got {x})")));
    }
    let r0 = p.n0.sqrt() * (x.powf(1.0 / p.nu) - 1.0).sqrt();
    let denom = flux_prime(p, r0) + p.g;
    let r1 = if denom != 0.0 { r0 / denom } else { 0.0 };
    Ok((r0 + p.damping * r1, r0 - p.damping * r1))
}

/// The symmetric-branch fixed point at the run's damping, polished from the
/// first-order prediction.
pub fn symmetric_branch_point(p: &ModelParams) -> Result<FixedPoint> {
    let (r, z) = phase_ii_correction(p)?;
    match newton(p, r, z) {
        Ok(NewtonOutcome::Root(r, z)) => Ok(fixed_point_at(p, r, z)),
        Ok(NewtonOutcome::Origin) => Ok(fixed_point_at(p, 0.0, 0.0)),
        Err(e) => Err(Error::NoConvergence(e)),
    }
}

/// Approximate limit-cycle frequency `2 sqrt(g^3 (Gamma - g)) / Gamma`.
pub fn omega_osc(p: &ModelParams) -> Option<f64> {
    (p.gain > p.g).then(|| 2.0 * (p.g.powi(3) * (p.gain - p.g)).sqrt() / p.gain)
}

fn boundary_scan<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> Option<f64> {
    all_roots(&f, grid, 1e-14).into_iter().next()
}

fn boundary_grid() -> Vec<f64> {
    logspace(1.0 + 1e-4, 60.0, 800)
}

/// `Gamma/g` where `delta` of the lossless symmetric state changes sign,
/// found without the closed form (the amplitude comes from bisection on `G(a) = g`).
pub fn numeric_saddle_node(nu: f64, n0: f64) -> Result<f64> {
    let delta = |x: f64| {
        let p = ModelParams::new(x, 0.0).with_nu(nu).with_n0(n0);
        let Some(a) = bisect(|a| p.saturated_gain(a) - p.g, 0.0, 1e4 * n0.sqrt(), 1e-16) else {
            return f64::NAN;
        };
        let j = jacobian(&p, a, a);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    };
    boundary_scan(delta, &boundary_grid()).ok_or(Error::NoCrossing { threshold: 0.0 })
}

/// `Gamma/g` where the trace of the symmetric state changes sign in the
/// `gamma -> 0` limit: `tau / gamma` is Richardson-extrapolated from two small dampings.
pub fn numeric_hopf(nu: f64, n0: f64) -> Result<f64> {
    let (g1, g2) = (1e-5, 5e-6);
    let t = |x: f64, gam: f64| -> f64 {
        let p = ModelParams::new(x, gam).with_nu(nu).with_n0(n0);
        symmetric_branch_point(&p).map(|f| f.tau / gam).unwrap_or(f64::NAN)
    };
    let extrapolated = |x: f64| 2.0 * t(x, g2) - t(x, g1);
    boundary_scan(extrapolated, &boundary_grid()).ok_or(Error::NoCrossing { threshold: 0.0 })
}

/// Bisects the sign change of the symmetric-state trace at the run's own damping.
pub fn trace_crossing(base: &ModelParams, lo: f64, hi: f64) -> Result<f64> {
    let t = |x: f64| symmetric_branch_point(&base.with_gain(x * base.g)).map(|f| f.tau).unwrap_or(f64::NAN);
    bisect(t, lo, hi, 1e-12).ok_or(Error::NoCrossing { threshold: 0.0 })
}

/// Wavenumbers `2 pi j / Ncells` of a ring with `Ncells` cells (`4 pi j / N` in resonators).
pub fn allowed_modes(cells: usize) -> Vec<f64> {
    (0..cells).map(|j| 2.0 * PI * j as f64 / cells as f64).collect()
}

/// Effective coupling `|g + g' e^{ik}|` of the plane-wave mode `k`.
pub fn coupling_for_mode(p: &ModelParams, k: f64) -> f64 {
    (Complex64::new(p.g, 0.0) + Complex64::from_polar(p.gprime, k)).norm()
}

/// Two-mode parameters governing the plane-wave mode `k`.
pub fn bloch_reduce(p: &ModelParams, k: f64) -> Result<ModelParams> {
    let gk = coupling_for_mode(p, k);
    if gk <= 1e-12 * (p.g + p.gprime) {
        return Err(Error::Decoupled { k });
    }
    Ok(ModelParams { g: gk, gprime: 0.0, cells: 1, ..*p })
}

/// The allowed mode with the smallest effective coupling, i.e. the largest `Gamma/g_k`.
pub fn most_unstable_mode(p: &ModelParams) -> f64 {
    allowed_modes(p.cells.max(1))
        .into_iter()
        .min_by(|&a, &b| coupling_for_mode(p, a).total_cmp(&coupling_for_mode(p, b)))
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn symmetric_pinned_state_balances() {
        let p = ModelParams::new(3.0, 0.0);
        let d = polar_rhs(&PolarState::new(0.8, 0.8, FRAC_PI_2), &p).unwrap();
        assert_abs_diff_eq!(d.r, -d.z, epsilon = 1e-15);
        let d = polar_rhs(&PolarState::new(0.8, 0.4, 0.0), &ModelParams::new(3.0, 1e-3)).unwrap();
        assert_abs_diff_eq!(d.phi, 2.0 - 0.5, epsilon = 1e-15);
        assert!(matches!(
            polar_rhs(&PolarState::new(0.0, 1.0, 0.3), &p),
            Err(Error::SingularPolar { .. })
        ));
    }

    #[test]
    fn nullcline_maximum() {
        let n = nullclines(&ModelParams::new(1.0, 1e-3));
        assert_abs_diff_eq!(n.argmax(), 3f64.powf(-0.5), epsilon = 1e-15);
        // brute-force maximization of f
        for nu in [1.0, 1.5, 2.0, 3.0] {
            let n = nullclines(&ModelParams::new(2.0, 0.0).with_nu(nu).with_n0(4.0));
            let (mut best, mut arg) = (0.0, 0.0);
            for i in 1..200_000 {
                let x = i as f64 * 1e-4;
                if n.f(x) > best {
                    best = n.f(x);
                    arg = x;
                }
            }
            assert_abs_diff_eq!(arg, n.argmax(), epsilon = 2e-4);
            assert!((best - n.max_value()).abs() < 1e-8 * best);
        }
        let n = nullclines(&ModelParams::new(1.0, 0.0).with_nu(1.0));
        assert_abs_diff_eq!(n.max_value(), 0.5, epsilon = 1e-15);
        assert!((1..1000).all(|i| n.f(i as f64 * 0.05) > 0.0));
        assert_eq!(n.f(0.0), 0.0);
    }

    #[test]
    fn fixed_points_phase_ii() {
        let rep = find_fixed_points(&ModelParams::new(2.0, 1e-3)).unwrap();
        assert_eq!(rep.points.len(), 2);
        assert_eq!(rep.points[0].kind, FixedPointKind::Saddle);
        let f = rep.points[1];
        assert_eq!(f.kind, FixedPointKind::StableSpiral);
        assert!((f.state.r * f.state.r - (2f64.sqrt() - 1.0)).abs() < 2e-3);
        assert!(f.state.r > f.state.z);
    }

    #[test]
    fn fixed_points_phase_iii() {
        let p = ModelParams::new(6.0, 1e-6);
        let rep = find_fixed_points(&p).unwrap();
        assert_eq!(rep.points.len(), 4);
        let stable: Vec<_> = rep.points.iter().filter(|f| f.kind.is_stable() && !f.phase_unstable).collect();
        assert_eq!(stable.len(), 1);
        let s = stable[0].state;
        assert!((s.r * s.r - ((6.0 + 12f64.sqrt()) / 2.0 - 1.0)).abs() < 1e-4);
        assert!((s.z * s.z - ((6.0 - 12f64.sqrt()) / 2.0 - 1.0)).abs() < 1e-4);
        for f in &rep.points {
            let res = stationarity_residual(&p, f.state.r, f.state.z);
            assert!(res[0].abs() < 1e-10 && res[1].abs() < 1e-10);
        }
        // the mirrored broken state and the symmetric saddle (r1 < 0 past the pitchfork)
        assert_eq!(rep.points.iter().filter(|f| f.phase_unstable).count(), 2);
    }

    #[test]
    fn phase_i_has_only_a_stable_origin() {
        let rep = find_fixed_points(&ModelParams::new(0.5, 1e-3)).unwrap();
        assert_eq!(rep.points.len(), 1);
        assert!(rep.points[0].kind.is_stable());
        assert_eq!(classify_phase(&ModelParams::new(0.5, 1e-3)).unwrap().label, PhaseLabel::I);
    }

    #[test]
    fn eigenvalue_identity() {
        for x in [0.3, 1.5, 2.0, 4.5, 6.0, 10.0] {
            for nu in [1.0, 1.5, 2.0] {
                let p = ModelParams::new(x, 1e-3).with_nu(nu);
                for f in find_fixed_points(&p).unwrap().points {
                    let j = if f.is_origin() {
                        [[p.gain - p.damping, -p.g], [p.g, -p.gain - p.damping]]
                    } else {
                        jacobian(&p, f.state.r, f.state.z)
                    };
                    // eigenvalues of the explicit 2x2 matrix via its characteristic polynomial
                    let tr = j[0][0] + j[1][1];
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
                    let mut want = [(tr + disc) / 2.0, (tr - disc) / 2.0];
                    want.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                    let mut got = f.eigs;
                    got.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                    for k in 0..2 {
                        assert!((got[k] - want[k]).norm() < 1e-12, "{x} {nu}");
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_values() {
        let b = phase_boundaries(2.0).unwrap();
        assert_eq!(b.ii_to_iii, Some(4.0));
        assert!(b.ii_to_iiiw.is_none());
        let b = phase_boundaries(1.0).unwrap();
        assert!((b.ii_to_iiiw.unwrap() - (3.0 + 5f64.sqrt())).abs() < 1e-12);
        assert!(b.ii_to_iii.is_none());
        let b = phase_boundaries(1.5).unwrap();
        let (w, t) = (b.ii_to_iiiw.unwrap(), b.ii_to_iii.unwrap());
        assert!((w - 4.208).abs() < 1e-3 && (t - 5.196).abs() < 1e-3);
        assert!(1.0 < w && w < t);
        assert!(phase_boundaries(0.5).is_err());
    }

    #[test]
    fn classification_examples() {
        let r = classify_phase(&ModelParams::new(2.0, 1e-3)).unwrap();
        assert_eq!(r.label, PhaseLabel::II);
        assert!((r.occupations().0 - (2f64.sqrt() - 1.0)).abs() < 2e-3);

        let r = classify_phase(&ModelParams::new(6.0, 1e-3).with_nu(1.0)).unwrap();
        assert_eq!(r.label, PhaseLabel::IIIw);
        assert!((r.omega_osc.unwrap() - 2.0 * 5f64.sqrt() / 6.0).abs() < 1e-12);
        assert!(r.occupations().0.is_nan());

        assert_eq!(classify_phase(&ModelParams::new(6.0, 1e-3)).unwrap().label, PhaseLabel::III);
        assert_eq!(classify_phase(&ModelParams::new(4.7, 1e-3).with_nu(1.5)).unwrap().label, PhaseLabel::IIIw);
    }

    #[test]
    fn first_order_correction() {
        let (r, z) = phase_ii_correction(&ModelParams::new(2.0, 0.0)).unwrap();
        assert_eq!(r, z);
        assert_abs_diff_eq!(r, (2f64.sqrt() - 1.0).sqrt(), epsilon = 1e-15);
        let (r, _) = phase_ii_correction(&ModelParams::new(1.0, 1e-3)).unwrap();
        assert_eq!(r, 0.0);
        let p = ModelParams::new(2.0, 1e-3);
        let (r, z) = phase_ii_correction(&p).unwrap();
        let exact = symmetric_branch_point(&p).unwrap().state;
        assert!(r > z);
        assert!(((r - z) - (exact.r - exact.z)).abs() < 0.01 * (exact.r - exact.z));
    }

    #[test]
    fn numeric_boundaries_match_closed_forms() {
        for nu in [1.25, 1.5, 2.0] {
            let b = phase_boundaries(nu).unwrap();
            let sn = numeric_saddle_node(nu, 1.0).unwrap();
            assert!((sn - b.ii_to_iii.unwrap()).abs() < 1e-6 * sn, "{nu}: {sn}");
        }
        for nu in [1.0, 1.5] {
            let b = phase_boundaries(nu).unwrap();
            let h = numeric_hopf(nu, 1.0).unwrap();
            assert!((h - b.ii_to_iiiw.unwrap()).abs() < 1e-6 * h, "{nu}: {h}");
        }
        assert!(numeric_saddle_node(1.0, 1.0).is_err());
    }

    #[test]
    fn bloch_examples() {
        let p = ModelParams::new(2.0, 1e-3).with_array(6, 1.0);
        assert!(coupling_for_mode(&p, PI) < 1e-15);
        assert!(matches!(bloch_reduce(&p, PI), Err(Error::Decoupled { .. })));
        assert_abs_diff_eq!(coupling_for_mode(&p, 0.0), 2.0, epsilon = 1e-15);
        let q = ModelParams::new(2.0, 1e-3).with_array(6, 0.0);
        for k in allowed_modes(6) {
            assert_abs_diff_eq!(coupling_for_mode(&q, k), 1.0, epsilon = 1e-15);
        }
        let p = ModelParams::new(2.0, 1e-3).with_array(6, 0.4);
        assert_abs_diff_eq!(most_unstable_mode(&p), PI, epsilon = 1e-12);
        let r = bloch_reduce(&p, PI).unwrap();
        assert_abs_diff_eq!(r.g, 0.6, epsilon = 1e-15);
        assert_eq!(r.cells, 1);
    }

    proptest! {
        #[test]
        fn polar_rhs_matches_cartesian_drift(r in 0.05..4.0f64, z in 0.05..4.0f64, phi in -3.0..3.0f64,
                                              tb in -3.0..3.0f64, gain in 0.0..12.0f64, nu in 1.0..3.0f64) {
            let p = ModelParams::new(gain, 1e-3).with_nu(nu);
            let s = PolarState::new(r, z, phi);
            let m = s.to_mode(tb);
            let d = p.drift(&m);
            // chain rule for alpha = r e^{i theta_a}: dr = Re(conj(alpha) dalpha)/r, dtheta = Im(...)/r^2
            let dr = (m.alpha.conj() * d.alpha).re / r;
            let dz = (m.beta.conj() * d.beta).re / z;
            let dphi = (m.alpha.conj() * d.alpha).im / (r * r) - (m.beta.conj() * d.beta).im / (z * z);
            let q = polar_rhs(&s, &p).unwrap();
            prop_assert!((q.r - dr).abs() < 1e-12);
            prop_assert!((q.z - dz).abs() < 1e-12);
            prop_assert!((q.phi - dphi).abs() < 1e-12 * (1.0 + r / z + z / r));
        }

        #[test]
        fn wrap_phase_range(x in -100.0..100.0f64) {
            let w = wrap_phase(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn polar_round_trip() {
        let m = ModeState::new(c(0.3, 0.4), c(-1.0, 0.2));
        let s = PolarState::from_mode(&m);
        let back = s.to_mode(m.beta.arg());
        assert!((back.alpha - m.alpha).norm() < 1e-15 && (back.beta - m.beta).norm() < 1e-15);
    }
}
