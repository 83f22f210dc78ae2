//! Spectrum of the linearized two-mode generator `H = [[iΓ, g], [g, -iΓ]]`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

/// `|Gamma - g| < EXCEPTIONAL_TOL * g` counts as the exceptional point.
pub const EXCEPTIONAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PtSymmetric,
    Exceptional,
    PtBroken,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::PtSymmetric => "PT_symmetric",
            Regime::Exceptional => "exceptional",
            Regime::PtBroken => "PT_broken",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumResult {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    /// Unnormalized eigenvectors `(e^{iθ/2}, e^{-iθ/2})` and `(i e^{-iθ/2}, -i e^{iθ/2})`.
    pub psi_plus: [Complex64; 2],
    pub psi_minus: [Complex64; 2],
    /// Mixing angle, `sin θ = Γ/g`; complex once the symmetry is broken.
    pub theta: Complex64,
    pub regime: Regime,
}

/// Eigenvalues and eigenvectors of the linear generator. The damping `gamma`
/// plays no role here.
///
/// In the broken regime the branch is chosen so that `lambda_plus` has a
/// positive imaginary part, i.e. it is the amplified eigenmode of
/// `dψ/dt = -iHψ`.
pub fn spectrum(p: &ModelParams) -> SpectrumResult {
    let g = p.g;
    let x = p.gain / g;
    // θ = asin(x); for x > 1 pick θ = π/2 - i·acosh(x) so that cos θ = +i·sqrt(x²-1).
    let theta = if x <= 1.0 {
        Complex64::new(x.asin(), 0.0)
    } else {
        Complex64::new(FRAC_PI_2, -x.acosh())
    };
    let lambda_plus = if x <= 1.0 {
        Complex64::new((g * g - p.gain * p.gain).max(0.0).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (p.gain * p.gain - g * g).sqrt())
    };
    let i = Complex64::i();
    let half = (i * theta * 0.5).exp();
    let half_conj = (-i * theta * 0.5).exp();
    let regime = if (p.gain - g).abs() < EXCEPTIONAL_TOL * g {
        Regime::Exceptional
    } else if p.gain < g {
        Regime::PtSymmetric
    } else {
        Regime::PtBroken
    };
    SpectrumResult {
        lambda_plus,
        lambda_minus: -lambda_plus,
        psi_plus: [half, half_conj],
        psi_minus: [i * half_conj, -i * half],
        theta,
        regime,
    }
}

/// Applies the `PT` operator: swap the two modes and complex-conjugate.
pub fn pt_apply(v: &[Complex64; 2]) -> [Complex64; 2] {
    [v[1].conj(), v[0].conj()]
}

/// Distance between `PT v` and the ray through `v`: `1 - |<v, PT v>| / |v|^2`.
///
/// Zero exactly when `PT v = e^{iθ} v` for some real `θ`, one when the two
/// are orthogonal. Returns `None` for the zero vector.
pub fn pt_eigenstate_check(v: &[Complex64; 2]) -> Option<f64> {
    let norm2 = v[0].norm_sqr() + v[1].norm_sqr();
    if norm2 == 0.0 || !norm2.is_finite() {
        return None;
    }
    let w = pt_apply(v);
    let overlap = v[0].conj() * w[0] + v[1].conj() * w[1];
    Some((1.0 - overlap.norm() / norm2).clamp(0.0, 1.0))
}

/// Scales `v` to unit Euclidean norm.
pub fn normalize(v: &[Complex64; 2]) -> [Complex64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(gain: f64) -> ModelParams {
        ModelParams::new(gain, 1e-3)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Residual |H psi - lambda psi| with H = [[iΓ, g], [g, -iΓ]].
    fn residual(p: &ModelParams, lambda: Complex64, psi: &[Complex64; 2]) -> f64 {
        let gi = c(0.0, p.gain);
        let r0 = gi * psi[0] + p.g * psi[1] - lambda * psi[0];
        let r1 = p.g * psi[0] - gi * psi[1] - lambda * psi[1];
        (r0.norm_sqr() + r1.norm_sqr()).sqrt()
    }

    #[test]
    fn hermitian_limit() {
        let s = spectrum(&params(0.0));
        assert_abs_diff_eq!((s.lambda_plus - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((s.lambda_minus - c(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(s.regime, Regime::PtSymmetric);
    }

    #[test]
    fn exceptional_point() {
        let s = spectrum(&params(1.0));
        assert_eq!(s.lambda_plus.norm(), 0.0);
        assert_eq!(s.regime, Regime::Exceptional);
        // eigenvectors coalesce
        let d = pt_eigenstate_check(&s.psi_plus).unwrap();
        assert!(d < 1e-12);
        let overlap = s.psi_plus[0].conj() * s.psi_minus[0] + s.psi_plus[1].conj() * s.psi_minus[1];
        assert_abs_diff_eq!(overlap.norm(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn broken_regime_matches_characteristic_polynomial() {
        // det(H - λ) = λ² - (g² - Γ²) = 0  ->  λ = ±i·sqrt(3) at Γ = 2g
        let p = params(2.0);
        let s = spectrum(&p);
        assert_abs_diff_eq!((s.lambda_plus - c(0.0, 3f64.sqrt())).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(s.lambda_minus, -s.lambda_plus);
        assert_eq!(s.regime, Regime::PtBroken);
        assert!(residual(&p, s.lambda_plus, &s.psi_plus) < 1e-13);
        assert!(residual(&p, s.lambda_minus, &s.psi_minus) < 1e-13);
    }

    #[test]
    fn eigenvectors_solve_the_eigenproblem_on_a_grid() {
        for k in 0..=40 {
            let p = params(k as f64 * 0.05);
            let s = spectrum(&p);
            assert!(residual(&p, s.lambda_plus, &s.psi_plus) < 1e-12, "Γ = {}", p.gain);
            assert!(residual(&p, s.lambda_minus, &s.psi_minus) < 1e-12, "Γ = {}", p.gain);
            assert_eq!(s.lambda_plus, -s.lambda_minus);
            assert!((s.theta.sin() - c(p.gain, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn pt_check_examples() {
        assert_eq!(pt_eigenstate_check(&[c(1.0, 0.0), c(1.0, 0.0)]), Some(0.0));
        assert_eq!(pt_eigenstate_check(&[c(1.0, 0.0), c(0.0, 0.0)]), Some(1.0));
        assert_eq!(pt_eigenstate_check(&[c(0.0, 0.0), c(0.0, 0.0)]), None);
        let s = spectrum(&params(0.5));
        assert!(pt_eigenstate_check(&s.psi_plus).unwrap() < 1e-12);
    }

    #[test]
    fn unbroken_eigenvectors_are_pt_symmetric_and_broken_ones_are_not() {
        for k in 1..1000 {
            let s = spectrum(&params(k as f64 / 1000.0));
            assert!(s.lambda_plus.im == 0.0 && s.lambda_minus.im == 0.0);
            assert!(pt_eigenstate_check(&s.psi_plus).unwrap() < 1e-12);
            assert!(pt_eigenstate_check(&s.psi_minus).unwrap() < 1e-12);
        }
        for k in 1..200 {
            let s = spectrum(&params(1.0 + k as f64 / 20.0));
            assert!(s.lambda_plus.re == 0.0 && s.lambda_plus.im > 0.0);
            assert!(pt_eigenstate_check(&s.psi_plus).unwrap() > 0.0);
            assert!(pt_eigenstate_check(&s.psi_minus).unwrap() > 0.0);
        }
    }

    #[test]
    fn square_root_scaling_near_exceptional_point() {
        let eps: Vec<f64> = (0..8).map(|k| 1e-2 * 0.5f64.powi(k)).collect();
        for side in [-1.0, 1.0] {
            let logs: Vec<(f64, f64)> = eps
                .iter()
                .map(|&e| (e.ln(), spectrum(&params(1.0 + side * e)).lambda_plus.norm().ln()))
                .collect();
            let n = logs.len() as f64;
            let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
            let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
            let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
                / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            assert!((slope - 0.5).abs() < 0.05, "slope {slope}");
        }
    }

    #[test]
    fn normalize_gives_unit_vectors() {
        let v = normalize(&spectrum(&params(3.0)).psi_minus);
        assert_abs_diff_eq!(v[0].norm_sqr() + v[1].norm_sqr(), 1.0, epsilon = 1e-14);
    }
}
