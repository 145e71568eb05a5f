use std::f64::consts::PI;

use super::PhaseModel;
use crate::error::{Error, Result};

/// Wavenumber, height and steepness of a cliff-like step, plus the sidewall
/// angle when it was supplied or derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffParameters {
    pub k: f64,
    pub h: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
}

impl CliffParameters {
    pub fn new(k: f64, h: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("k", k), ("h", h), ("alpha", alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidCliffParameters(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            k,
            h,
            alpha,
            beta: None,
        })
    }

    /// Attach a sidewall angle, checking `tan β = αh/2`.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        let expected = self.alpha * self.h / 2.0;
        let got = beta.tan();
        if !(beta > 0.0 && beta < PI / 2.0) || (got - expected).abs() > 1e-12 * expected.max(1.0) {
            return Err(Error::InvalidCliffParameters(format!(
                "tan(beta) = {got} does not match alpha*h/2 = {expected}"
            )));
        }
        self.beta = Some(beta);
        Ok(self)
    }

    /// `k = 2π/λ`, `α = 2 tan β / h`.
    pub fn from_wavelength_and_angle(wavelength: f64, h: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < PI / 2.0) {
            return Err(Error::InvalidCliffParameters(format!(
                "sidewall angle must lie in (0, pi/2), got {beta}"
            )));
        }
        let k = 2.0 * PI / wavelength;
        Self::new(k, h, 2.0 * beta.tan() / h)?.with_beta(beta)
    }

    pub fn from_wavelength(wavelength: f64, h: f64, alpha: f64) -> Result<Self> {
        let p = Self::new(2.0 * PI / wavelength, h, alpha)?;
        let beta = p.tan_beta().atan();
        Ok(Self {
            beta: Some(beta),
            ..p
        })
    }

    pub fn tan_beta(&self) -> f64 {
        self.alpha * self.h / 2.0
    }

    pub fn kh(&self) -> f64 {
        self.k * self.h
    }
}

/// `sech²(y)` without overflow for large `|y|`.
pub fn sech2(y: f64) -> f64 {
    let e = (-2.0 * y.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Surface profile `S(x) = (h/2)(1 + tanh αx)`.
pub fn slope_height(p: &CliffParameters, x: f64) -> f64 {
    0.5 * p.h * (1.0 + (p.alpha * x).tanh())
}

/// Phase `φ = kh(1 − tanh αx)` picked up in reflection from the step.
///
/// With `height_only` the steepness is held at its reference value and the
/// model has the single parameter `h`; otherwise `θ = (h, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffModel {
    reference: CliffParameters,
    estimate_alpha: bool,
}

impl CliffModel {
    pub fn new(reference: CliffParameters) -> Self {
        Self {
            reference,
            estimate_alpha: true,
        }
    }

    pub fn height_only(reference: CliffParameters) -> Self {
        Self {
            reference,
            estimate_alpha: false,
        }
    }

    pub fn parameters(&self) -> &CliffParameters {
        &self.reference
    }

    fn unpack(&self, theta: &[f64]) -> (f64, f64) {
        let h = theta[0];
        let alpha = if self.estimate_alpha {
            theta[1]
        } else {
            self.reference.alpha
        };
        (h, alpha)
    }
}

impl PhaseModel for CliffModel {
    fn parameter_names(&self) -> Vec<String> {
        if self.estimate_alpha {
            vec!["h".into(), "alpha".into()]
        } else {
            vec!["h".into()]
        }
    }

    fn reference(&self) -> Vec<f64> {
        if self.estimate_alpha {
            vec![self.reference.h, self.reference.alpha]
        } else {
            vec![self.reference.h]
        }
    }

    fn phase(&self, x: f64, theta: &[f64]) -> f64 {
        let (h, alpha) = self.unpack(theta);
        self.reference.k * h * (1.0 - (alpha * x).tanh())
    }

    fn partial(&self, i: usize, x: f64, theta: &[f64]) -> f64 {
        let (h, alpha) = self.unpack(theta);
        let k = self.reference.k;
        match i {
            0 => k * (1.0 - (alpha * x).tanh()),
            1 => -k * h * x * sech2(alpha * x),
            _ => panic!("cliff model has no parameter {i}"),
        }
    }

    fn parameter_scales(&self) -> Vec<f64> {
        if self.estimate_alpha {
            vec![self.reference.h, self.reference.alpha]
        } else {
            vec![self.reference.h]
        }
    }

    fn length_scale(&self) -> f64 {
        1.0 / self.reference.alpha
    }

    fn feature_half_width(&self) -> f64 {
        30.0 / self.reference.alpha
    }
}
