use std::f64::consts::PI;

use num_complex::Complex64;

use super::spline::CubicSpline;
use crate::error::{Error, Result};
use crate::numerics::{integrate_real, QuadratureSpec};

/// Transverse amplitude `f(x)` of the illuminating light, normalised so that
/// `∫|f|² dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum IlluminationProfile {
    Gaussian { width: f64 },
    Tabulated(TabulatedProfile),
}

/// Complex amplitude samples, interpolated by natural cubic splines of the
/// real and imaginary parts and zero outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    re: CubicSpline,
    im: CubicSpline,
    scale: f64,
}

pub fn gaussian_profile(width: f64) -> Result<IlluminationProfile> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidWidth(width));
    }
    Ok(IlluminationProfile::Gaussian { width })
}

impl TabulatedProfile {
    pub fn new(x: &[f64], amplitude: &[Complex64]) -> Result<Self> {
        let re: Vec<f64> = amplitude.iter().map(|c| c.re).collect();
        let im: Vec<f64> = amplitude.iter().map(|c| c.im).collect();
        let mut profile = Self {
            re: CubicSpline::new(x, &re)?,
            im: CubicSpline::new(x, &im)?,
            scale: 1.0,
        };
        let spec = QuadratureSpec::new(profile.half_span())?.with_tolerances(1e-300, 1e-11)?;
        let norm = integrate_real(|t| profile.raw(t).norm_sqr(), &spec)?;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidTable(
                "amplitude samples have zero power".into(),
            ));
        }
        profile.scale = norm.sqrt().recip();
        Ok(profile)
    }

    fn raw(&self, x: f64) -> Complex64 {
        if x < self.re.x_min() || x > self.re.x_max() {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(self.re.eval(x), self.im.eval(x))
        }
    }

    fn half_span(&self) -> f64 {
        self.re.x_min().abs().max(self.re.x_max().abs())
    }
}

impl IlluminationProfile {
    pub fn amplitude(&self, x: f64) -> Complex64 {
        match self {
            Self::Gaussian { width } => {
                let a = (2.0 / (PI * width * width)).powf(0.25);
                Complex64::new(a * (-(x * x) / (width * width)).exp(), 0.0)
            }
            Self::Tabulated(t) => t.raw(x) * t.scale,
        }
    }

    pub fn intensity(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { width } => {
                let w2 = width * width;
                (2.0 / (PI * w2)).sqrt() * (-2.0 * x * x / w2).exp()
            }
            Self::Tabulated(_) => self.amplitude(x).norm_sqr(),
        }
    }

    /// Half-width of the window holding essentially all of the power.
    pub fn support_half_width(&self) -> f64 {
        match self {
            Self::Gaussian { width } => 6.0 * width,
            Self::Tabulated(t) => t.half_span(),
        }
    }

    pub fn gaussian_width(&self) -> Option<f64> {
        match self {
            Self::Gaussian { width } => Some(*width),
            Self::Tabulated(_) => None,
        }
    }
}
