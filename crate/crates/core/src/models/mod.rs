//! Illumination profiles and phase-object models.

mod cliff;
mod profile;
mod spline;
mod tabulated;

pub use cliff::{sech2, slope_height, CliffModel, CliffParameters};
pub use profile::{gaussian_profile, IlluminationProfile, TabulatedProfile};
pub use spline::CubicSpline;
pub use tabulated::{load_phase_table, PhaseTable, TabulatedModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// A sample that imprints a parameter-dependent phase `φ(x, θ)`.
///
/// All quantities are SI: `x` in metres, `φ` in radians, partials in radians
/// per parameter unit.
pub trait PhaseModel: Send + Sync {
    fn parameter_names(&self) -> Vec<String>;

    fn dim(&self) -> usize {
        self.parameter_names().len()
    }

    /// Reference point `θ₀` the measurement is designed around.
    fn reference(&self) -> Vec<f64>;

    fn phase(&self, x: f64, theta: &[f64]) -> f64;

    /// `∂φ/∂θᵢ` at `(x, θ)`.
    fn partial(&self, i: usize, x: f64, theta: &[f64]) -> f64;

    /// Natural magnitude of each parameter, used for finite-difference steps.
    fn parameter_scales(&self) -> Vec<f64>;

    /// Length over which the phase varies; defines the dimensionless
    /// coordinate `y = x / length_scale`.
    fn length_scale(&self) -> f64;

    /// Half-width outside which the partials are constant.
    fn feature_half_width(&self) -> f64;

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::ParameterCount {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

impl<M: PhaseModel + ?Sized> PhaseModel for Box<M> {
    fn parameter_names(&self) -> Vec<String> {
        (**self).parameter_names()
    }
    fn reference(&self) -> Vec<f64> {
        (**self).reference()
    }
    fn phase(&self, x: f64, theta: &[f64]) -> f64 {
        (**self).phase(x, theta)
    }
    fn partial(&self, i: usize, x: f64, theta: &[f64]) -> f64 {
        (**self).partial(i, x, theta)
    }
    fn parameter_scales(&self) -> Vec<f64> {
        (**self).parameter_scales()
    }
    fn length_scale(&self) -> f64 {
        (**self).length_scale()
    }
    fn feature_half_width(&self) -> f64 {
        (**self).feature_half_width()
    }
}

/// Wraps a model and multiplies one analytic partial by a constant while
/// leaving the phase untouched. Used as a negative control for
/// [`validate_partials`].
#[derive(Debug, Clone)]
pub struct ScaledPartial<M> {
    pub inner: M,
    pub parameter: usize,
    pub factor: f64,
}

impl<M: PhaseModel> PhaseModel for ScaledPartial<M> {
    fn parameter_names(&self) -> Vec<String> {
        self.inner.parameter_names()
    }
    fn reference(&self) -> Vec<f64> {
        self.inner.reference()
    }
    fn phase(&self, x: f64, theta: &[f64]) -> f64 {
        self.inner.phase(x, theta)
    }
    fn partial(&self, i: usize, x: f64, theta: &[f64]) -> f64 {
        let d = self.inner.partial(i, x, theta);
        if i == self.parameter {
            d * self.factor
        } else {
            d
        }
    }
    fn parameter_scales(&self) -> Vec<f64> {
        self.inner.parameter_scales()
    }
    fn length_scale(&self) -> f64 {
        self.inner.length_scale()
    }
    fn feature_half_width(&self) -> f64 {
        self.inner.feature_half_width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialCheck {
    pub parameter: String,
    /// Largest `|analytic − finite difference|` over the probes, divided by
    /// the largest `|analytic|` seen.
    pub max_deviation: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialsReport {
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub checks: Vec<PartialCheck>,
    pub passes: bool,
}

/// Compare analytic partials with central finite differences of the phase at
/// random probes.
///
/// Probes draw `x` uniformly from ±5 length scales and each `θᵢ` from
/// `θ₀ᵢ ± 0.2·scaleᵢ`. The difference step is `1e-5·scaleᵢ`.
pub fn validate_partials(
    model: &dyn PhaseModel,
    probes: usize,
    seed: u64,
    tolerance: f64,
) -> Result<PartialsReport> {
    if probes == 0 {
        return Err(Error::InvalidSimulation("probes must be at least 1".into()));
    }
    let m = model.dim();
    let theta0 = model.reference();
    let scales = model.parameter_scales();
    let ell = model.length_scale();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut worst = vec![0.0_f64; m];
    let mut largest = vec![0.0_f64; m];
    for _ in 0..probes {
        let x = rng.random_range(-5.0..5.0) * ell;
        let theta: Vec<f64> = theta0
            .iter()
            .zip(&scales)
            .map(|(&t, &s)| t + s * rng.random_range(-0.2..0.2))
            .collect();
        for i in 0..m {
            let step = 1e-5 * scales[i];
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += step;
            minus[i] -= step;
            let fd = (model.phase(x, &plus) - model.phase(x, &minus)) / (2.0 * step);
            let analytic = model.partial(i, x, &theta);
            let dev = (analytic - fd).abs();
            worst[i] = if dev.is_finite() { worst[i].max(dev) } else { f64::INFINITY };
            largest[i] = largest[i].max(analytic.abs());
        }
    }

    let names = model.parameter_names();
    let checks: Vec<PartialCheck> = (0..m)
        .map(|i| {
            let max_deviation = if largest[i] > 0.0 {
                worst[i] / largest[i]
            } else {
                worst[i]
            };
            PartialCheck {
                parameter: names[i].clone(),
                max_deviation,
                passes: max_deviation < tolerance,
            }
        })
        .collect();
    let passes = checks.iter().all(|c| c.passes);
    Ok(PartialsReport {
        probes,
        seed,
        tolerance,
        checks,
        passes,
    })
}
