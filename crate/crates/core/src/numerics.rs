//! Real-line quadrature for complex integrands and small dense complex
//! matrix helpers.
//!
//! Integrals are evaluated over a truncated window `[-L, L]` with adaptive
//! Gauss–Kronrod (7/15) panels. The window is split into an even number of
//! initial panels so `x = 0` is always a panel edge; every feature in this
//! crate is centred there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Truncation window and tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Half-width `L` of the integration window, in the integrand's units.
    pub half_width: f64,
    pub max_subdivisions: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of equal panels the window starts with. Rounded up to even.
    pub initial_panels: usize,
}

impl QuadratureSpec {
    pub fn new(half_width: f64) -> Result<Self> {
        let spec = Self {
            half_width,
            max_subdivisions: 4000,
            abs_tol: 1e-300,
            rel_tol: 1e-12,
            initial_panels: 64,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Window covering both decay scales of a cliff problem: `max(6w, 30/alpha)`.
    pub fn for_cliff(beam_width: f64, alpha: f64) -> Result<Self> {
        Self::new((6.0 * beam_width).max(30.0 / alpha))
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Result<Self> {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_half_width(mut self, half_width: f64) -> Result<Self> {
        self.half_width = half_width;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.half_width) {
            return Err(Error::InvalidQuadrature(format!(
                "half-width must be positive, got {}",
                self.half_width
            )));
        }
        if !ok(self.abs_tol) || !ok(self.rel_tol) {
            return Err(Error::InvalidQuadrature(
                "tolerances must be positive".into(),
            ));
        }
        if self.initial_panels == 0 || self.max_subdivisions == 0 {
            return Err(Error::InvalidQuadrature(
                "panel counts must be non-zero".into(),
            ));
        }
        Ok(())
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub subdivisions: usize,
}

// Gauss–Kronrod 7/15 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F>(f: &F, a: f64, b: f64) -> Result<Panel>
where
    F: Fn(f64) -> Complex64,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<Complex64> {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { x })
        }
    };

    let fc = eval(centre)?;
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = fc.norm() * WGK[7];
    let mut fv1 = [Complex64::new(0.0, 0.0); 7];
    let mut fv2 = [Complex64::new(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += (f1 + f2) * WGK[j];
        res_abs += WGK[j] * (f1.norm() + f2.norm());
        if j % 2 == 1 {
            res_g += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).norm();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
    }
    let scale = half.abs();
    let value = res_k * half;
    res_abs *= scale;
    res_asc *= scale;
    let mut error = ((res_k - res_g) * half).norm();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel {
        a,
        b,
        value,
        error,
        abs: res_abs,
    })
}

/// Integrate `integrand` over `[-L, L]` by adaptive Gauss–Kronrod panels.
///
/// Converged when the summed error estimate is at most
/// `max(abs_tol, rel_tol·|value|, 100 ε ∫|f|)`; otherwise [`Error::NonConvergence`] once
/// `max_subdivisions` bisections have been spent.
pub fn integrate<F>(integrand: F, spec: &QuadratureSpec) -> Result<Integral>
where
    F: Fn(f64) -> Complex64,
{
    spec.validate()?;
    let panels = spec.initial_panels.div_ceil(2) * 2;
    let l = spec.half_width;
    let width = 2.0 * l / panels as f64;

    let mut heap = BinaryHeap::with_capacity(panels + spec.max_subdivisions);
    for i in 0..panels {
        let a = -l + i as f64 * width;
        let b = if i + 1 == panels { l } else { a + width };
        heap.push(kronrod15(&integrand, a, b)?);
    }

    let totals = |heap: &BinaryHeap<Panel>| {
        heap.iter().fold((Complex64::new(0.0, 0.0), 0.0, 0.0), |(v, e, m), p| {
            (v + p.value, e + p.error, m + p.abs)
        })
    };

    let mut subdivisions = 0;
    loop {
        let (value, error, magnitude) = totals(&heap);
        // below 100 ulp of ∫|f| the estimate is roundoff, not truncation
        let target = spec
            .abs_tol
            .max(spec.rel_tol * value.norm())
            .max(100.0 * f64::EPSILON * magnitude);
        if error <= target {
            return Ok(Integral {
                value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if subdivisions >= spec.max_subdivisions || !(worst.a < mid && mid < worst.b) {
            return Err(Error::NonConvergence {
                value: value.re,
                error,
                subdivisions,
            });
        }
        heap.push(kronrod15(&integrand, worst.a, mid)?);
        heap.push(kronrod15(&integrand, mid, worst.b)?);
        subdivisions += 1;
    }
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F>(integrand: F, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(integrand(x), 0.0), spec).map(|r| r.value.re)
}

/// Square complex matrix. Fisher and Omega matrices are real in content but
/// share this type so Hermiticity can be checked uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    /// Build from row-major entries.
    pub fn new(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::NotSquare {
                rows: dim,
                cols: if dim == 0 { 0 } else { entries.len() / dim },
            });
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(m.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<Complex64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&v| Complex64::new(v, 0.0)))
            .collect();
        Self::new(dim, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.0.map(|c| c.re)
    }

    pub fn to_real_rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)].re).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self(&self.0 * &other.0))
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self(&self.0 - &other.0))
    }

    pub fn determinant(&self) -> Complex64 {
        self.0.clone().lu().determinant()
    }

    /// Inverse via LU. Fails with [`Error::Singular`] when the determinant
    /// of the row- then column-equilibrated matrix is below 1e-12, so
    /// rescaling individual parameters does not change the verdict.
    pub fn invert(&self) -> Result<ComplexMatrix> {
        let lu = self.0.clone().lu();
        let det = lu.determinant().norm();
        let norm = |v: f64| if v > 0.0 { v } else { 1.0 };
        let rows: Vec<f64> = self
            .0
            .row_iter()
            .map(|r| norm(r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()))
            .collect();
        let cols: Vec<f64> = self
            .0
            .column_iter()
            .map(|c| {
                norm(
                    c.iter()
                        .zip(&rows)
                        .map(|(v, r)| (v / r).norm_sqr())
                        .sum::<f64>()
                        .sqrt(),
                )
            })
            .collect();
        let threshold = 1e-12 * rows.iter().product::<f64>() * cols.iter().product::<f64>();
        if !(det >= threshold) || det == 0.0 {
            return Err(Error::Singular { det, threshold });
        }
        lu.try_inverse()
            .map(Self)
            .ok_or(Error::Singular { det, threshold })
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending. Errors when the matrix
    /// is not Hermitian within `tol` relative to its largest entry.
    pub fn hermitian_eigenvalues(&self, tol: f64) -> Result<Vec<f64>> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let asymmetry = self.hermitian_asymmetry();
        if asymmetry > tol * scale {
            return Err(Error::NotHermitian { asymmetry, tol });
        }
        let hermitian = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let mut values: Vec<f64> = SymmetricEigen::new(hermitian).eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }

    /// True iff every eigenvalue is at least `-tol·max|eigenvalue|`.
    pub fn is_positive_semidefinite(&self, tol: f64) -> Result<bool> {
        let values = self.hermitian_eigenvalues(tol)?;
        let largest = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(values.iter().all(|&v| v >= -tol * largest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian_intensity(w: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| (2.0 / (std::f64::consts::PI * w * w)).sqrt() * (-2.0 * x * x / (w * w)).exp()
    }

    fn sech2(y: f64) -> f64 {
        let e = (-2.0 * y.abs()).exp();
        4.0 * e / ((1.0 + e) * (1.0 + e))
    }

    #[test]
    fn gaussian_normalisation() {
        let w = 1e-6;
        let spec = QuadratureSpec::new(6.0 * w).unwrap();
        let v = integrate_real(gaussian_intensity(w), &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn odd_integrand_vanishes() {
        let w = 1e-6;
        let f = gaussian_intensity(w);
        let spec = QuadratureSpec::new(6.0 * w)
            .unwrap()
            .with_tolerances(1e-12, 1e-12)
            .unwrap();
        let r = integrate(|x| Complex64::new(x * f(x), 0.0), &spec).unwrap();
        assert!(r.value.norm() < 1e-12);
    }

    /// Independent oracle: plain trapezoid with 10^6 points over the same window.
    fn trapezoid(f: impl Fn(f64) -> f64, l: f64, n: usize) -> f64 {
        let h = 2.0 * l / (n - 1) as f64;
        let mut s = 0.5 * (f(-l) + f(l));
        for i in 1..n - 1 {
            s += f(-l + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn sech_squared_overlap_matches_trapezoid_oracle() {
        // w·alpha = 20 in units where alpha = 1.
        let w = 20.0;
        let f = gaussian_intensity(w);
        let integrand = |y: f64| f(y) * sech2(y);
        let spec = QuadratureSpec::for_cliff(w, 1.0).unwrap();
        let adaptive = integrate_real(integrand, &spec).unwrap();
        let oracle = trapezoid(integrand, spec.half_width, 1_000_001);
        assert_relative_eq!(adaptive, oracle, max_relative = 1e-11);
        // Frozen from the oracle run; first-order prediction sqrt(8/pi)/20 = 0.0797885.
        assert_relative_eq!(adaptive, 0.079_463_136_569_483, max_relative = 1e-10);
        let first_order = (8.0 / std::f64::consts::PI).sqrt() / 20.0;
        assert!((adaptive / first_order - 1.0).abs() < 5e-3);
    }

    #[test]
    fn complex_integrand() {
        // ∫ exp(-x²) e^{ix} dx = sqrt(pi) e^{-1/4}
        let spec = QuadratureSpec::new(12.0).unwrap();
        let r = integrate(|x| Complex64::new(0.0, x).exp() * (-x * x).exp(), &spec).unwrap();
        let expected = std::f64::consts::PI.sqrt() * (-0.25_f64).exp();
        assert_relative_eq!(r.value.re, expected, max_relative = 1e-12);
        assert!(r.value.im.abs() < 1e-13);
    }

    #[test]
    fn subdivision_budget_exhaustion() {
        let mut spec = QuadratureSpec::new(1.0).unwrap();
        spec.max_subdivisions = 2;
        spec.initial_panels = 2;
        spec.rel_tol = 1e-15;
        let err = integrate(|x| Complex64::new((50.0 * x).sin().abs().sqrt(), 0.0), &spec).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let spec = QuadratureSpec::new(1.0).unwrap();
        let err = integrate(|_| Complex64::new(f64::NAN, 0.0), &spec).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { .. }));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(QuadratureSpec::new(0.0).is_err());
        assert!(QuadratureSpec::new(1.0).unwrap().with_tolerances(0.0, 1e-9).is_err());
    }

    #[test]
    fn invert_identity_and_diagonal() {
        let id = ComplexMatrix::identity(2);
        assert_eq!(id.invert().unwrap(), id);
        let inv = ComplexMatrix::diag(&[4.0, 9.0]).invert().unwrap();
        assert_relative_eq!(inv.get(0, 0).re, 0.25, max_relative = 1e-15);
        assert_relative_eq!(inv.get(1, 1).re, 1.0 / 9.0, max_relative = 1e-15);
        assert_eq!(inv.get(0, 1).norm(), 0.0);
    }

    #[test]
    fn invert_matches_cofactor_formula() {
        let (a, b, d) = (4.3e14, -2.1e3, 7.7e-6);
        let m = ComplexMatrix::from_real_rows(&[vec![a, b], vec![b, d]]).unwrap();
        let inv = m.invert().unwrap();
        let det = a * d - b * b;
        assert_relative_eq!(inv.get(0, 0).re, d / det, max_relative = 1e-12);
        assert_relative_eq!(inv.get(1, 1).re, a / det, max_relative = 1e-12);
        assert_relative_eq!(inv.get(0, 1).re, -b / det, max_relative = 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(m.invert(), Err(Error::Singular { .. })));
        let nearly = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-14]]).unwrap();
        assert!(matches!(nearly.invert(), Err(Error::Singular { .. })));
    }

    #[test]
    fn psd_checks() {
        assert!(ComplexMatrix::diag(&[1.0, 0.0]).is_positive_semidefinite(1e-12).unwrap());
        let indefinite = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(!indefinite.is_positive_semidefinite(1e-12).unwrap());
        let vals = indefinite.hermitian_eigenvalues(1e-12).unwrap();
        assert_relative_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 3.0, epsilon = 1e-12);
        let skew = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            skew.is_positive_semidefinite(1e-9),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn complex_hermitian_psd() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let m = ComplexMatrix::new(2, &[one, i, -i, one]).unwrap();
        assert!(m.is_positive_semidefinite(1e-12).unwrap());
    }

    #[test]
    fn not_square_rejected() {
        assert!(matches!(
            ComplexMatrix::new(2, &[Complex64::new(1.0, 0.0); 3]),
            Err(Error::NotSquare { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn double_inversion_is_identity(a in 0.5f64..5.0, d in 0.5f64..5.0, b in -0.4f64..0.4, c in -0.4f64..0.4) {
                let m = ComplexMatrix::new(2, &[
                    Complex64::new(a, 0.1), Complex64::new(b, c),
                    Complex64::new(c, -b), Complex64::new(d, 0.0),
                ]).unwrap();
                let back = m.invert().unwrap().invert().unwrap();
                for i in 0..2 { for j in 0..2 {
                    prop_assert!((back.get(i, j) - m.get(i, j)).norm() < 1e-9);
                }}
                let prod = m.mul(&m.invert().unwrap()).unwrap();
                for i in 0..2 { for j in 0..2 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod.get(i, j) - Complex64::new(expected, 0.0)).norm() < 1e-10);
                }}
            }

            #[test]
            fn odd_times_gaussian_vanishes(p in 1u32..4, shift in 0.1f64..3.0) {
                let w = 1.0;
                let f = gaussian_intensity(w);
                let spec = QuadratureSpec::new(6.0).unwrap().with_tolerances(1e-13, 1e-12).unwrap();
                let odd = move |x: f64| x.powi(2 * p as i32 - 1) * (shift * x).cos();
                let v = integrate_real(|x| odd(x) * f(x), &spec).unwrap();
                prop_assert!(v.abs() < 1e-13);
            }
        }
    }
}
