//! Quantum Fisher information for single-photon and coherent illumination.
//!
//! Everything derives from two overlaps of the phase derivatives with the
//! beam intensity:
//!
//! ```text
//! G_ij = ∫ |f|² ∂ᵢφ ∂ⱼφ dx        g_i = ∫ |f|² ∂ᵢφ dx
//! ```
//!
//! For N photons the single-photon QFIM is `4N(G − g gᵀ)` and the coherent
//! one is `4N·G`.

mod cliff;
mod optimality;

pub use cliff::{
    cliff_integrals, first_order_integrals, precision_bounds_cliff, sigma_alpha_coefficient,
    CliffIntegrals, FirstOrderIntegrals, PrecisionBounds,
};
pub use optimality::{
    displaced_gaussian_coefficients, mode_expansion_optimality, OptimalityOptions, OptimalityReport,
};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{IlluminationProfile, PhaseModel};
use crate::numerics::{integrate_real, ComplexMatrix, QuadratureSpec};

/// Illumination state family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFamily {
    SinglePhoton,
    Coherent,
}

impl StateFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SinglePhoton => "single_photon",
            Self::Coherent => "coherent",
        }
    }
}

impl std::str::FromStr for StateFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_photon" | "single-photon" | "single" => Ok(Self::SinglePhoton),
            "coherent" => Ok(Self::Coherent),
            other => Err(Error::Config(format!(
                "unknown state family '{other}' (expected single_photon or coherent)"
            ))),
        }
    }
}

/// Overlaps `G` (M×M) and `g` (M) at one parameter point, per photon.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProducts {
    pub gram: DMatrix<f64>,
    pub mean: Vec<f64>,
}

impl InnerProducts {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `Ω = G − g gᵀ`, the overlap matrix of the derivative states once the
    /// reference component is removed.
    pub fn omega(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| self.gram[(i, j)] - self.mean[i] * self.mean[j])
    }
}

/// Quadrature window wide enough for both the beam and the phase feature.
pub fn default_quadrature(model: &dyn PhaseModel, profile: &IlluminationProfile) -> Result<QuadratureSpec> {
    QuadratureSpec::new(profile.support_half_width().max(model.feature_half_width()))
}

pub fn inner_products(
    model: &dyn PhaseModel,
    profile: &IlluminationProfile,
    theta: &[f64],
) -> Result<InnerProducts> {
    inner_products_with(model, profile, theta, &default_quadrature(model, profile)?)
}

/// Overlaps by adaptive quadrature in the scaled coordinate `u = x/ℓ`.
///
/// Diagonal entries use `spec`'s tolerances directly; off-diagonal entries and
/// `g` get an absolute tolerance from the Cauchy–Schwarz bound so odd
/// integrands that vanish do not chase a relative target.
pub fn inner_products_with(
    model: &dyn PhaseModel,
    profile: &IlluminationProfile,
    theta: &[f64],
    spec: &QuadratureSpec,
) -> Result<InnerProducts> {
    model.check_theta(theta)?;
    let m = model.dim();
    let ell = model.length_scale();
    let scaled = spec.with_half_width(spec.half_width / ell)?;
    let overlap = |a: Option<usize>, b: Option<usize>, s: &QuadratureSpec| {
        integrate_real(
            |u| {
                let x = u * ell;
                let da = a.map_or(1.0, |i| model.partial(i, x, theta));
                let db = b.map_or(1.0, |j| model.partial(j, x, theta));
                ell * profile.intensity(x) * da * db
            },
            s,
        )
    };

    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        gram[(i, i)] = overlap(Some(i), Some(i), &scaled)?;
    }
    for i in 0..m {
        for j in i + 1..m {
            let bound = (gram[(i, i)] * gram[(j, j)]).sqrt();
            let s = scaled.with_tolerances(spec.rel_tol * bound.max(f64::MIN_POSITIVE), spec.rel_tol)?;
            let v = overlap(Some(i), Some(j), &s)?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let mut mean = vec![0.0; m];
    for (i, g) in mean.iter_mut().enumerate() {
        let s = scaled.with_tolerances(spec.rel_tol * gram[(i, i)].sqrt().max(f64::MIN_POSITIVE), spec.rel_tol)?;
        *g = overlap(Some(i), None, &s)?;
    }
    Ok(InnerProducts { gram, mean })
}

/// `Iᵢ = ∫|f|² ∂ᵢφ`. The two QFIMs agree in row and column `i` iff `Iᵢ = 0`.
pub fn symmetry_integrals(
    model: &dyn PhaseModel,
    profile: &IlluminationProfile,
    theta: &[f64],
) -> Result<Vec<f64>> {
    Ok(inner_products(model, profile, theta)?.mean)
}

/// QFIM with its inverse and Cramér–Rao diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherResult {
    pub family: StateFamily,
    pub photons: f64,
    pub matrix: ComplexMatrix,
    /// `None` when the matrix is singular.
    pub inverse: Option<ComplexMatrix>,
    pub symmetry_integrals: Vec<f64>,
    /// `[F⁻¹]ᵢᵢ`; infinite when `F` is singular.
    pub crb_diag: Vec<f64>,
}

impl FisherResult {
    fn build(family: StateFamily, photons: f64, f: DMatrix<f64>, ip: &InnerProducts) -> Result<Self> {
        if !(photons.is_finite() && photons > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "photon number must be positive, got {photons}"
            )));
        }
        let matrix = ComplexMatrix::from_real(&f)?;
        let eig = matrix.hermitian_eigenvalues(1e-10)?;
        let largest = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // Roundoff in G − g gᵀ is relative to G, so the PSD floor is too.
        let gram_scale = 4.0 * photons * ip.gram.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if eig[0] < -1e-10 * largest.max(gram_scale) {
            return Err(Error::NotPsd {
                min_eigenvalue: eig[0],
            });
        }
        let inverse = matrix.invert().ok();
        let crb_diag = match &inverse {
            Some(inv) => (0..f.nrows()).map(|i| inv.get(i, i).re).collect(),
            None => vec![f64::INFINITY; f.nrows()],
        };
        Ok(Self {
            family,
            photons,
            matrix,
            inverse,
            symmetry_integrals: ip.mean.clone(),
            crb_diag,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j).re
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix.to_real_rows()
    }
}

/// `F = 4N(G − g gᵀ)` for N independent single photons.
pub fn qfim_single_photon(ip: &InnerProducts, photons: f64) -> Result<FisherResult> {
    let f = ip.omega() * (4.0 * photons);
    FisherResult::build(StateFamily::SinglePhoton, photons, f, ip)
}

/// `F = 4N·G` for a coherent state with mean photon number N.
pub fn qfim_coherent(ip: &InnerProducts, photons: f64) -> Result<FisherResult> {
    let f = &ip.gram * (4.0 * photons);
    FisherResult::build(StateFamily::Coherent, photons, f, ip)
}

pub fn qfim(ip: &InnerProducts, photons: f64, family: StateFamily) -> Result<FisherResult> {
    match family {
        StateFamily::SinglePhoton => qfim_single_photon(ip, photons),
        StateFamily::Coherent => qfim_coherent(ip, photons),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaussian_profile, CliffModel, CliffParameters, TabulatedModel};
    use approx::assert_relative_eq;

    fn setup(w_alpha: f64) -> (CliffParameters, IlluminationProfile) {
        let lambda = 633e-9;
        let p = CliffParameters::from_wavelength_and_angle(lambda, lambda / 4.0, 80f64.to_radians()).unwrap();
        (p, gaussian_profile(w_alpha / p.alpha).unwrap())
    }

    #[test]
    fn cliff_overlaps_match_integral_identities() {
        let (p, f) = setup(20.0);
        let model = CliffModel::new(p);
        let ip = inner_products(&model, &f, &model.reference()).unwrap();
        let n = cliff_integrals(&p, &f, true).unwrap();
        assert_relative_eq!(ip.mean[0], p.k, max_relative = 1e-12);
        assert!(ip.mean[1].abs() < 1e-10 * ip.gram[(1, 1)].sqrt());
        assert_relative_eq!(ip.gram[(0, 0)], p.k * p.k * (2.0 - n.n3), max_relative = 1e-11);
        assert_relative_eq!(ip.gram[(0, 1)], p.k * p.h * n.n1, max_relative = 1e-10);
        assert_relative_eq!(ip.gram[(1, 1)], p.h * p.h * n.n2, max_relative = 1e-10);
    }

    #[test]
    fn height_only_qfim() {
        let (p, f) = setup(20.0);
        let model = CliffModel::height_only(p);
        let ip = inner_products(&model, &f, &model.reference()).unwrap();
        let n3 = cliff_integrals(&p, &f, true).unwrap().n3;
        let s = qfim_single_photon(&ip, 1000.0).unwrap();
        let c = qfim_coherent(&ip, 1000.0).unwrap();
        assert_relative_eq!(s.get(0, 0), 4000.0 * p.k * p.k * (1.0 - n3), max_relative = 1e-11);
        assert_relative_eq!(c.get(0, 0), 4000.0 * p.k * p.k * (2.0 - n3), max_relative = 1e-11);
        assert_relative_eq!(s.crb_diag[0], 1.0 / s.get(0, 0), max_relative = 1e-12);
    }

    #[test]
    fn two_by_two_inverse_matches_cofactor_formula() {
        let (p, f) = setup(20.0);
        let model = CliffModel::new(p);
        let ip = inner_products(&model, &f, &model.reference()).unwrap();
        let r = qfim_single_photon(&ip, 1.0).unwrap();
        let (a, b, d) = (r.get(0, 0), r.get(0, 1), r.get(1, 1));
        let det = a * d - b * b;
        assert!(det > 0.0);
        assert_relative_eq!(r.crb_diag[0], d / det, max_relative = 1e-9);
        assert_relative_eq!(r.crb_diag[1], a / det, max_relative = 1e-9);
        let inv = r.inverse.as_ref().unwrap();
        let prod = r.matrix.mul(inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j).re - e).abs() < 1e-10);
            }
        }
        assert!(r.crb_diag[0] >= 1.0 / a && r.crb_diag[1] >= 1.0 / d);
    }

    #[test]
    fn alpha_column_is_family_independent() {
        let (p, f) = setup(50.0);
        let model = CliffModel::new(p);
        let ip = inner_products(&model, &f, &model.reference()).unwrap();
        let s = qfim_single_photon(&ip, 1.0).unwrap();
        let c = qfim_coherent(&ip, 1.0).unwrap();
        assert_relative_eq!(s.get(1, 1), c.get(1, 1), max_relative = 1e-12);
        assert_relative_eq!(s.get(0, 1), c.get(0, 1), max_relative = 1e-9);
        assert_relative_eq!(s.get(0, 1), 4.0 * p.kh() * cliff_integrals(&p, &f, true).unwrap().n1, max_relative = 1e-9);
    }

    #[test]
    fn global_phase_carries_no_information() {
        let x: Vec<f64> = (0..41).map(|i| (i as f64 - 20.0) * 1e-7).collect();
        let model = TabulatedModel::from_fn(&x, |_| 0.7).unwrap();
        let f = gaussian_profile(1e-6).unwrap();
        let ip = inner_products(&model, &f, &model.reference()).unwrap();
        let s = qfim_single_photon(&ip, 1.0).unwrap();
        assert!(s.get(0, 0).abs() < 1e-12);
        assert!(s.crb_diag.iter().all(|v| v.is_infinite()));
        // a symmetric derivative has a non-zero symmetry integral
        assert_relative_eq!(ip.mean[0], 0.7, max_relative = 1e-10);
    }

    #[test]
    fn not_psd_is_rejected() {
        let ip = InnerProducts {
            gram: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            mean: vec![0.0, 0.0],
        };
        assert!(matches!(qfim_coherent(&ip, 1.0), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn wrong_parameter_count() {
        let (p, f) = setup(20.0);
        let model = CliffModel::new(p);
        assert!(matches!(
            inner_products(&model, &f, &[p.h]),
            Err(Error::ParameterCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("coherent".parse::<StateFamily>().unwrap(), StateFamily::Coherent);
        assert!("thermal".parse::<StateFamily>().is_err());
    }

    #[test]
    fn doubling_window_leaves_overlaps_unchanged() {
        let (p, f) = setup(20.0);
        let model = CliffModel::new(p);
        let spec = default_quadrature(&model, &f).unwrap();
        let a = inner_products_with(&model, &f, &model.reference(), &spec).unwrap();
        let wide = spec.with_half_width(2.0 * spec.half_width).unwrap();
        let b = inner_products_with(&model, &f, &model.reference(), &wide).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(a.gram[(i, j)], b.gram[(i, j)], max_relative = 1e-11);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn coherent_minus_single_is_outer_product(w_alpha in 10.0f64..200.0, n in 1.0f64..1e6) {
                let (p, f) = setup(w_alpha);
                let model = CliffModel::new(p);
                let ip = inner_products(&model, &f, &model.reference()).unwrap();
                let s = qfim_single_photon(&ip, n).unwrap();
                let c = qfim_coherent(&ip, n).unwrap();
                for i in 0..2 { for j in 0..2 {
                    let expected = 4.0 * n * ip.mean[i] * ip.mean[j];
                    let diff = c.get(i, j) - s.get(i, j);
                    prop_assert!((diff - expected).abs() <= 1e-9 * c.get(i, j).abs().max(expected.abs()).max(1e-300) + 1e-9 * (c.get(i,i)*c.get(j,j)).sqrt());
                }}
                let det = s.get(0, 0) * s.get(1, 1) - s.get(0, 1).powi(2);
                prop_assert!(det >= 0.0);
                for i in 0..2 {
                    prop_assert!(s.crb_diag[i] >= 1.0 / s.get(i, i) * (1.0 - 1e-12));
                }
            }
        }
    }
}
