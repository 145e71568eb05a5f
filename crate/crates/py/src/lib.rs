//! Python bindings for `phasebound`.

use phasebound::estimation::{monte_carlo, MonteCarloSpec};
use phasebound::fisher::{cliff_integrals, inner_products, precision_bounds_cliff, qfim, sigma_alpha_coefficient as coefficient};
use phasebound::models::gaussian_profile;
use phasebound::modes::{analytic_probabilities_cliff, saturation_report, Measurement};
use phasebound::{CliffModel, CliffParameters, Error, IlluminationProfile, ModeBasis, StateFamily};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(name: &str) -> PyResult<StateFamily> {
    match name {
        "single_photon" => Ok(StateFamily::SinglePhoton),
        "coherent" => Ok(StateFamily::Coherent),
        _ => Err(PyValueError::new_err(format!(
            "family must be 'single_photon' or 'coherent', got '{name}'"
        ))),
    }
}

/// Cliff `S(x) = (h/2)(1 + tanh αx)` under a Gaussian beam of width `w`.
#[pyclass(frozen)]
struct Cliff {
    params: CliffParameters,
    profile: IlluminationProfile,
}

impl Cliff {
    fn model(&self, steepness: bool) -> CliffModel {
        if steepness {
            CliffModel::new(self.params)
        } else {
            CliffModel::height_only(self.params)
        }
    }

    fn theta0(&self, steepness: bool) -> Vec<f64> {
        if steepness {
            vec![self.params.h, self.params.alpha]
        } else {
            vec![self.params.h]
        }
    }

    fn delta(&self, delta_h: f64, delta_alpha: Option<f64>) -> Vec<f64> {
        match delta_alpha {
            Some(da) => vec![delta_h, da],
            None => vec![delta_h],
        }
    }
}

#[pymethods]
impl Cliff {
    /// Give exactly one of `beta_deg` and `alpha` (1/m). Lengths in metres.
    #[new]
    #[pyo3(signature = (wavelength, h, beam_width, beta_deg=None, alpha=None))]
    fn new(wavelength: f64, h: f64, beam_width: f64, beta_deg: Option<f64>, alpha: Option<f64>) -> PyResult<Self> {
        let params = match (beta_deg, alpha) {
            (Some(b), None) => CliffParameters::from_wavelength_and_angle(wavelength, h, b.to_radians()),
            (None, Some(a)) => CliffParameters::from_wavelength(wavelength, h, a),
            _ => return Err(PyValueError::new_err("give exactly one of beta_deg and alpha")),
        }
        .map_err(to_py)?;
        let profile = gaussian_profile(beam_width).map_err(to_py)?;
        Ok(Self { params, profile })
    }

    #[getter]
    fn k(&self) -> f64 {
        self.params.k
    }

    #[getter]
    fn h(&self) -> f64 {
        self.params.h
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.params.alpha
    }

    #[getter]
    fn w_alpha(&self) -> f64 {
        self.profile.gaussian_width().unwrap_or(f64::NAN) * self.params.alpha
    }

    /// `N1..N6` as a dict; `exact=False` gives the constant-field forms.
    #[pyo3(signature = (exact=true))]
    fn integrals<'py>(&self, py: Python<'py>, exact: bool) -> PyResult<Bound<'py, PyDict>> {
        let n = cliff_integrals(&self.params, &self.profile, exact).map_err(to_py)?;
        let d = PyDict::new(py);
        for (k, v) in [("n1", n.n1), ("n2", n.n2), ("n3", n.n3), ("n4", n.n4), ("n5", n.n5), ("n6", n.n6)] {
            d.set_item(k, v)?;
        }
        d.set_item("w_alpha", n.w_alpha)?;
        d.set_item("valid", n.valid)?;
        Ok(d)
    }

    /// Quantum Fisher matrix for `photons` copies.
    #[pyo3(signature = (photons, family="single_photon", steepness=true))]
    fn qfim(&self, photons: f64, family: &str, steepness: bool) -> PyResult<Vec<Vec<f64>>> {
        let ip = inner_products(&self.model(steepness), &self.profile, &self.theta0(steepness)).map_err(to_py)?;
        Ok(qfim(&ip, photons, self::family(family)?).map_err(to_py)?.to_rows())
    }

    /// Closed-form and quadrature Cramér–Rao bounds.
    #[pyo3(signature = (photons, family="single_photon"))]
    fn bounds<'py>(&self, py: Python<'py>, photons: f64, family: &str) -> PyResult<Bound<'py, PyDict>> {
        let b = precision_bounds_cliff(&self.params, &self.profile, photons, self::family(family)?).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("sigma_h", b.sigma_h)?;
        d.set_item("sigma_alpha", b.sigma_alpha)?;
        d.set_item("relative_sigma_h", b.relative_sigma_h)?;
        d.set_item("relative_sigma_alpha", b.relative_sigma_alpha)?;
        d.set_item("exact_relative_sigma_h", b.exact_relative_sigma_h)?;
        d.set_item("exact_relative_sigma_alpha", b.exact_relative_sigma_alpha)?;
        d.set_item("cross_ratio", b.cross_ratio)?;
        Ok(d)
    }

    /// Outcome probabilities of the optimal modes at the given offsets.
    #[pyo3(signature = (delta_h, delta_alpha=None, analytic=false))]
    fn probabilities(&self, delta_h: f64, delta_alpha: Option<f64>, analytic: bool) -> PyResult<Vec<f64>> {
        let steep = delta_alpha.is_some();
        let delta = self.delta(delta_h, delta_alpha);
        let p = if analytic {
            let n = cliff_integrals(&self.params, &self.profile, true).map_err(to_py)?;
            analytic_probabilities_cliff(&self.params, &n, &delta).map_err(to_py)?
        } else {
            let model = self.model(steep);
            let theta0 = self.theta0(steep);
            let basis = ModeBasis::build(&model, &self.profile, &theta0).map_err(to_py)?;
            let theta: Vec<f64> = theta0.iter().zip(&delta).map(|(a, b)| a + b).collect();
            basis.probabilities(&model, &theta).map_err(to_py)?
        };
        Ok(p.p)
    }

    /// Largest relative gap between the classical and quantum Fisher matrices.
    #[pyo3(signature = (steepness=true, projector=false))]
    fn saturation_gap(&self, steepness: bool, projector: bool) -> PyResult<f64> {
        let m = if projector {
            Measurement::DerivativeProjector
        } else {
            Measurement::Gamma
        };
        let r = saturation_report(&self.model(steepness), &self.profile, &self.theta0(steepness), m).map_err(to_py)?;
        Ok(r.max_discrepancy)
    }

    /// Monte Carlo maximum-likelihood run; returns the report as a dict.
    #[pyo3(signature = (delta_h, photons, trials, seed, delta_alpha=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        delta_h: f64,
        photons: u64,
        trials: usize,
        seed: u64,
        delta_alpha: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let model = self.model(delta_alpha.is_some());
        let spec = MonteCarloSpec::new(self.delta(delta_h, delta_alpha), photons, trials, seed);
        let profile = &self.profile;
        let r = py.detach(|| monte_carlo(&model, profile, Some(&model), &spec)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("parameters", r.parameters)?;
        d.set_item("estimates", r.estimates)?;
        d.set_item("sample_mean", r.sample_mean)?;
        d.set_item("sample_covariance", r.sample_covariance)?;
        d.set_item("crb", r.crb)?;
        d.set_item("efficiency", r.efficiency)?;
        d.set_item("trial_seeds", r.trial_seeds)?;
        d.set_item("rng", r.rng)?;
        Ok(d)
    }
}

/// `½·√(9√π / (√2(π² − 6)))`.
#[pyfunction]
fn sigma_alpha_coefficient() -> f64 {
    coefficient()
}

/// Run the command-line interface with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    phasebound::cli::run(std::iter::once("phasebound".to_string()).chain(args))
}

#[pymodule]
fn phasebound_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cliff>()?;
    m.add_function(wrap_pyfunction!(sigma_alpha_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
