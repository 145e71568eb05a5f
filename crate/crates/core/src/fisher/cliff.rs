use std::f64::consts::PI;

use serde::Serialize;

use super::StateFamily;
use crate::error::{Error, Result};
use crate::models::{sech2, CliffParameters, IlluminationProfile};
use crate::numerics::{integrate_real, QuadratureSpec};

/// Dimensionless overlaps of the Gaussian intensity with powers of `tanh`
/// and `sech` across the cliff:
///
/// ```text
/// N1 = k  ∫|f|² x tanh(αx) sech²(αx)     N4 = k² ∫|f|² x² tanh sech²
/// N2 = k² ∫|f|² x² sech⁴(αx)             N5 = k³ ∫|f|² x³ tanh sech⁴
/// N3 =    ∫|f|² sech²(αx)                N6 = k² ∫|f|² x² tanh² sech²
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CliffIntegrals {
    pub w_alpha: f64,
    /// Whether `n1..n6` came from quadrature (`true`) or the constant-field
    /// closed forms.
    pub exact: bool,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub n5: f64,
    pub n6: f64,
    pub first_order: FirstOrderIntegrals,
    /// `(wα)⁻² < 0.01`: the constant-field approximation applies.
    pub valid: bool,
}

/// Closed forms obtained by freezing `|f|²` at its peak over the cliff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderIntegrals {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub n5: f64,
    pub n6: f64,
}

// ∫ y^m T(y) dy over the real line for each kernel T.
const J1: f64 = 1.0;
const J3: f64 = 2.0;
fn j2() -> f64 {
    (PI * PI - 6.0) / 9.0
}
fn j5() -> f64 {
    (PI * PI - 6.0) / 12.0
}
fn j6() -> f64 {
    (PI * PI + 12.0) / 18.0
}

impl CliffIntegrals {
    /// Warning text when closed forms were requested outside their regime.
    pub fn warning(&self) -> Option<String> {
        (!self.exact && !self.valid).then(|| {
            format!(
                "constant-field approximation invalid: (w·alpha)^-2 = {:.3e} is not below 0.01",
                self.w_alpha.powi(-2)
            )
        })
    }

    /// `(exact − first order)/first order` for N1, N2, N3.
    pub fn first_order_relative_error(&self) -> [f64; 3] {
        let f = &self.first_order;
        [
            (self.n1 - f.n1) / f.n1,
            (self.n2 - f.n2) / f.n2,
            (self.n3 - f.n3) / f.n3,
        ]
    }
}

pub fn first_order_integrals(p: &CliffParameters, width: f64) -> FirstOrderIntegrals {
    let wa = width * p.alpha;
    let r = p.k / p.alpha;
    let rho0 = (2.0 / PI).sqrt() / wa;
    FirstOrderIntegrals {
        n1: rho0 * r * J1,
        n2: rho0 * r * r * j2(),
        n3: rho0 * J3,
        n4: 0.0,
        n5: rho0 * r * r * r * j5(),
        n6: rho0 * r * r * j6(),
    }
}

/// Evaluate N1..N6 for a Gaussian beam, by quadrature (`exact`) or by the
/// constant-field closed forms.
///
/// Quadrature runs in `y = αx` over `|y| ≤ max(6wα, 30)`.
pub fn cliff_integrals(
    p: &CliffParameters,
    profile: &IlluminationProfile,
    exact: bool,
) -> Result<CliffIntegrals> {
    let width = profile.gaussian_width().ok_or(Error::RequiresGaussian)?;
    let wa = width * p.alpha;
    let first_order = first_order_integrals(p, width);
    let valid = wa.powi(-2) < 0.01;

    let (n1, n2, n3, n4, n5, n6) = if exact {
        let rho = |y: f64| profile.intensity(y / p.alpha) / p.alpha;
        let rho0 = (2.0 / PI).sqrt() / wa;
        let spec = QuadratureSpec::new((6.0 * wa).max(30.0))?.with_tolerances(1e-14 * rho0, 1e-12)?;
        let moment = |m: i32, kernel: &dyn Fn(f64) -> f64| {
            integrate_real(|y| rho(y) * y.powi(m) * kernel(y), &spec)
        };
        let r = p.k / p.alpha;
        (
            r * moment(1, &|y| y.tanh() * sech2(y))?,
            r * r * moment(2, &|y| sech2(y) * sech2(y))?,
            moment(0, &sech2)?,
            r * r * moment(2, &|y| y.tanh() * sech2(y))?,
            r * r * r * moment(3, &|y| y.tanh() * sech2(y) * sech2(y))?,
            r * r * moment(2, &|y| y.tanh() * y.tanh() * sech2(y))?,
        )
    } else {
        let f = first_order;
        (f.n1, f.n2, f.n3, f.n4, f.n5, f.n6)
    };

    Ok(CliffIntegrals {
        w_alpha: wa,
        exact,
        n1,
        n2,
        n3,
        n4,
        n5,
        n6,
        first_order,
        valid,
    })
}

/// `½·√(9√π / (√2(π² − 6)))`, the prefactor of the steepness bound.
pub fn sigma_alpha_coefficient() -> f64 {
    0.5 * (9.0 * PI.sqrt() / (2f64.sqrt() * (PI * PI - 6.0))).sqrt()
}

/// Cramér–Rao bounds for the cliff height and steepness.
///
/// `relative_*` fields are `σ/h` and `σ/α`. The closed forms neglect the
/// `F₁₂` correlation and use first-order integrals; `exact_*` recompute the
/// same diagonal bound with quadrature integrals, and `full_inverse_*` use
/// `[F⁻¹]ᵢᵢ` including the correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionBounds {
    pub family: StateFamily,
    pub photons: f64,
    pub kh: f64,
    pub w_alpha: f64,
    pub inverse_square_w_alpha: f64,
    pub coefficient: f64,
    pub relative_sigma_h: f64,
    pub relative_sigma_alpha: f64,
    pub sigma_h: f64,
    pub sigma_alpha: f64,
    pub exact_relative_sigma_h: f64,
    pub exact_relative_sigma_alpha: f64,
    pub full_inverse_relative_sigma_h: f64,
    pub full_inverse_relative_sigma_alpha: f64,
    /// `F₁₁F₂₂/F₁₂²`.
    pub cross_ratio: f64,
    /// `cross_ratio ≥ 100`.
    pub cross_term_negligible: bool,
}

pub fn precision_bounds_cliff(
    p: &CliffParameters,
    profile: &IlluminationProfile,
    photons: f64,
    family: StateFamily,
) -> Result<PrecisionBounds> {
    if !(photons.is_finite() && photons > 0.0) {
        return Err(Error::InvalidSimulation(format!(
            "photon number must be positive, got {photons}"
        )));
    }
    let n = cliff_integrals(p, profile, true)?;
    let inverse_square = n.w_alpha.powi(-2);
    if !n.valid {
        return Err(Error::RegimeViolation {
            inverse_square,
        });
    }
    let kh = p.kh();
    let coefficient = sigma_alpha_coefficient();
    let rel_alpha = coefficient / kh * (n.w_alpha / photons).sqrt();
    let rel_h = match family {
        StateFamily::SinglePhoton => 1.0 / (2.0 * kh * photons.sqrt()),
        StateFamily::Coherent => 1.0 / (2.0 * 2f64.sqrt() * kh * photons.sqrt()),
    };

    let g_hh = match family {
        StateFamily::SinglePhoton => 1.0 - n.n3,
        StateFamily::Coherent => 2.0 - n.n3,
    };
    let f11 = 4.0 * photons * p.k * p.k * g_hh;
    let f12 = 4.0 * photons * kh * n.n1;
    let f22 = 4.0 * photons * p.h * p.h * n.n2;
    let det = f11 * f22 - f12 * f12;

    Ok(PrecisionBounds {
        family,
        photons,
        kh,
        w_alpha: n.w_alpha,
        inverse_square_w_alpha: inverse_square,
        coefficient,
        relative_sigma_h: rel_h,
        relative_sigma_alpha: rel_alpha,
        sigma_h: rel_h * p.h,
        sigma_alpha: rel_alpha * p.alpha,
        exact_relative_sigma_h: 1.0 / (p.h * f11.sqrt()),
        exact_relative_sigma_alpha: 1.0 / (p.alpha * f22.sqrt()),
        full_inverse_relative_sigma_h: (f22 / det).sqrt() / p.h,
        full_inverse_relative_sigma_alpha: (f11 / det).sqrt() / p.alpha,
        cross_ratio: f11 * f22 / (f12 * f12),
        cross_term_negligible: f11 * f22 >= 100.0 * f12 * f12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gaussian_profile;
    use approx::assert_relative_eq;

    fn fig2() -> CliffParameters {
        let lambda = 633e-9;
        CliffParameters::from_wavelength_and_angle(lambda, lambda / 4.0, 80f64.to_radians()).unwrap()
    }

    fn at(w_alpha: f64, exact: bool) -> CliffIntegrals {
        let p = fig2();
        cliff_integrals(&p, &gaussian_profile(w_alpha / p.alpha).unwrap(), exact).unwrap()
    }

    #[test]
    fn first_order_n3_value() {
        let n = at(20.0, false);
        assert_relative_eq!(n.n3, (8.0 / PI).sqrt() / 20.0, max_relative = 1e-15);
        assert!((n.n3 - 0.0798).abs() < 1e-4);
        assert!(n.valid);
        assert!(n.warning().is_none());
    }

    #[test]
    fn exact_n3_against_trapezoid_oracle() {
        let n = at(20.0, true);
        // plain trapezoid, 10^6 points over |y| ≤ 120
        let w = 20.0;
        let steps = 1_000_000;
        let l = 120.0;
        let h = 2.0 * l / steps as f64;
        let rho = |y: f64| (2.0 / PI).sqrt() / w * (-2.0 * y * y / (w * w)).exp();
        let oracle: f64 = (0..=steps)
            .map(|i| {
                let y = -l + i as f64 * h;
                let wt = if i == 0 || i == steps { 0.5 } else { 1.0 };
                wt * rho(y) * sech2(y)
            })
            .sum::<f64>()
            * h;
        assert_relative_eq!(n.n3, oracle, max_relative = 1e-11);
    }

    #[test]
    fn first_order_error_is_order_inverse_square() {
        // The leading correction is (π²/6)(wα)⁻², so allow twice (wα)⁻².
        let mut previous: Option<f64> = None;
        for wa in [20.0_f64, 40.0, 80.0] {
            let n = at(wa, true);
            let err = n.first_order_relative_error()[2].abs();
            assert!(err <= 2.0 * wa.powi(-2), "wα = {wa}: {err}");
            if let Some(prev) = previous {
                let shrink: f64 = err / prev;
                assert!((shrink - 0.25).abs() < 0.02, "shrink {shrink}");
            }
            previous = Some(err);
        }
    }

    #[test]
    fn all_integrals_vanish_for_steep_cliff() {
        let p = fig2();
        let f = gaussian_profile(20.0 / p.alpha).unwrap();
        let steep = CliffParameters::new(p.k, p.h, p.alpha * 1e4).unwrap();
        let n = cliff_integrals(&steep, &f, true).unwrap();
        let base = cliff_integrals(&p, &f, true).unwrap();
        assert!(n.n1 < 1e-7 * base.n1);
        assert!(n.n2 < 1e-10 * base.n2);
        assert!(n.n3 < 1e-3 * base.n3);
    }

    #[test]
    fn exact_integrals_approach_closed_forms() {
        let n = at(400.0, true);
        let f = n.first_order;
        assert_relative_eq!(n.n1, f.n1, max_relative = 1e-4);
        assert_relative_eq!(n.n2, f.n2, max_relative = 1e-4);
        assert_relative_eq!(n.n3, f.n3, max_relative = 1e-4);
        assert_relative_eq!(n.n5, f.n5, max_relative = 1e-4);
        assert_relative_eq!(n.n6, f.n6, max_relative = 1e-4);
        assert!(n.n4.abs() < 1e-12 * n.n6);
    }

    #[test]
    fn signs_and_ranges() {
        let n = at(20.0, true);
        assert!(n.n1 > 0.0 && n.n2 > 0.0 && n.n5 > 0.0 && n.n6 > 0.0);
        assert!(n.n3 > 0.0 && n.n3 <= 1.0);
    }

    #[test]
    fn invalid_regime_flagged() {
        let n = at(2.0, false);
        assert!(!n.valid);
        assert!(n.warning().is_some());
        let p = fig2();
        let f = gaussian_profile(2.0 / p.alpha).unwrap();
        assert!(matches!(
            precision_bounds_cliff(&p, &f, 1.0, StateFamily::SinglePhoton),
            Err(Error::RegimeViolation { .. })
        ));
    }

    #[test]
    fn requires_gaussian() {
        use crate::models::TabulatedProfile;
        use num_complex::Complex64;
        let x = [-1.0, 0.0, 1.0];
        let amp = [Complex64::new(0.5, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)];
        let f = IlluminationProfile::Tabulated(TabulatedProfile::new(&x, &amp).unwrap());
        assert_eq!(cliff_integrals(&fig2(), &f, true), Err(Error::RequiresGaussian));
    }

    #[test]
    fn coefficient_radical() {
        assert!((sigma_alpha_coefficient() - 0.8537).abs() < 5e-4);
        assert_relative_eq!(sigma_alpha_coefficient(), 0.853_666, max_relative = 1e-6);
    }

    #[test]
    fn bound_scalings() {
        let p = fig2();
        let f = gaussian_profile(50.0 / p.alpha).unwrap();
        let s = precision_bounds_cliff(&p, &f, 1e4, StateFamily::SinglePhoton).unwrap();
        let c = precision_bounds_cliff(&p, &f, 1e4, StateFamily::Coherent).unwrap();
        assert_relative_eq!(c.relative_sigma_h / s.relative_sigma_h, 1.0 / 2f64.sqrt(), max_relative = 1e-12);
        assert_eq!(c.relative_sigma_alpha, s.relative_sigma_alpha);
        let s4 = precision_bounds_cliff(&p, &f, 4e4, StateFamily::SinglePhoton).unwrap();
        assert_relative_eq!(s4.relative_sigma_h, s.relative_sigma_h / 2.0, max_relative = 1e-12);
        assert_relative_eq!(s4.relative_sigma_alpha, s.relative_sigma_alpha / 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.exact_relative_sigma_alpha, s.relative_sigma_alpha, max_relative = 2e-3);
        assert!(s.full_inverse_relative_sigma_alpha > s.exact_relative_sigma_alpha);
        assert!(!s.cross_term_negligible);
        assert!(s.cross_ratio > 20.0 && s.cross_ratio < 35.0);
    }
}
