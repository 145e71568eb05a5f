//! Projection-mode basis that saturates the quantum Cramér–Rao bound.
//!
//! From the reference state `Φ₀ = f e^{iφ₀}` and its parameter derivatives
//! `Φᵢ = i ∂ᵢφ f e^{iφ₀}` the derivative states are made orthogonal to `Φ₀`,
//!
//! ```text
//! ωᵢ = Φᵢ + ⟨Φᵢ|Φ₀⟩Φ₀ = i f (∂ᵢφ − gᵢ) e^{iφ₀},     ⟨ωᵢ|ωⱼ⟩ = Ωᵢⱼ = Gᵢⱼ − gᵢgⱼ,
//! ```
//!
//! and then orthonormalised by modified Gram–Schmidt in the Ω metric. The
//! resulting modes are `γ₀ = Φ₀` and `γₖ = Σⱼ Tₖⱼ ωⱼ` with `T` lower
//! triangular. Each mode is stored through its envelope `gₖ = γₖ / (f e^{iφ₀})`
//! sampled on a uniform grid.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::{
    default_quadrature, inner_products_with, qfim_single_photon, CliffIntegrals, InnerProducts,
};
use crate::models::{CliffParameters, IlluminationProfile, PhaseModel};
use crate::numerics::{integrate, ComplexMatrix, QuadratureSpec};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Uniform sampling grid over `[-L, L]` with trapezoid weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 4096;

    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        if points < 3 {
            return Err(Error::InvalidQuadrature(format!(
                "grid needs at least 3 points, got {points}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidQuadrature(format!(
                "grid half-width must be positive, got {half_width}"
            )));
        }
        Ok(Self { points, half_width })
    }

    /// Window covering the beam and the phase feature, default point count.
    pub fn for_problem(model: &dyn PhaseModel, profile: &IlluminationProfile) -> Result<Self> {
        Self::new(
            Self::DEFAULT_POINTS,
            profile.support_half_width().max(model.feature_half_width()),
        )
    }

    pub fn with_points(self, points: usize) -> Result<Self> {
        Self::new(points, self.half_width)
    }

    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.points;
        let h = 2.0 * self.half_width / (n - 1) as f64;
        let x = (0..n).map(|j| -self.half_width + j as f64 * h).collect();
        let w = (0..n)
            .map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h })
            .collect();
        (x, w)
    }
}

/// Detection probabilities over the listed outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
    /// `1 − Σp`: probability of leaving the listed modes.
    pub residual: f64,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Self {
        let residual = 1.0 - p.iter().sum::<f64>();
        Self { p, residual }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Which projective measurement is performed on the light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// Project onto `γ₀..γ_M`.
    Gamma,
    /// Two outcomes: the normalised derivative state `Φ₁/‖Φ₁‖` of the first
    /// parameter, and its complement. Not orthogonal to `Φ₀`.
    DerivativeProjector,
}

/// Orthonormal modes `γ₀..γ_M` around a reference point.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    reference: Vec<f64>,
    inner: InnerProducts,
    omega: DMatrix<f64>,
    transform: DMatrix<f64>,
    normalized_det: f64,
    length_scale: f64,
    x: Vec<f64>,
    weights: Vec<f64>,
    carrier: Vec<Complex64>,
    phase0: Vec<f64>,
    envelopes: Vec<Vec<Complex64>>,
    // wⱼ·conj(gₖ(xⱼ))·|f(xⱼ)|², so ⟨γₖ|Φ⟩ = Σⱼ kernelₖ(xⱼ) e^{i(φ−φ₀)(xⱼ)}
    kernels: Vec<Vec<Complex64>>,
    derivative_kernel: Vec<Complex64>,
}

/// Modified Gram–Schmidt on the unit vectors under the inner product `aᵀΩb`,
/// with one re-orthogonalisation pass. Row `k` of the result holds the
/// coefficients of `γₖ₊₁` in terms of `ω₁..ω_M`.
fn gram_schmidt(omega: &DMatrix<f64>) -> DMatrix<f64> {
    let m = omega.nrows();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        let mut v = nalgebra::DVector::<f64>::zeros(m);
        v[k] = 1.0;
        for _ in 0..2 {
            for j in 0..k {
                let tj = t.row(j).transpose();
                let proj = (tj.transpose() * omega * &v)[(0, 0)];
                v -= tj * proj;
            }
        }
        let norm = (v.transpose() * omega * &v)[(0, 0)].sqrt();
        t.set_row(k, &(v / norm).transpose());
    }
    t
}

impl ModeBasis {
    /// Build the basis at `theta0` on the default grid.
    pub fn build(
        model: &dyn PhaseModel,
        profile: &IlluminationProfile,
        theta0: &[f64],
    ) -> Result<Self> {
        let grid = GridSpec::for_problem(model, profile)?;
        let quad = default_quadrature(model, profile)?;
        Self::build_with(model, profile, theta0, &grid, &quad)
    }

    /// Build with explicit grid and quadrature. `Ω` comes from adaptive
    /// quadrature; the grid only samples the resulting modes.
    pub fn build_with(
        model: &dyn PhaseModel,
        profile: &IlluminationProfile,
        theta0: &[f64],
        grid: &GridSpec,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        let inner = inner_products_with(model, profile, theta0, quad)?;
        let omega = inner.omega();
        let m = omega.nrows();
        let diag: f64 = (0..m).map(|i| omega[(i, i)]).product();
        let normalized_det = if diag > 0.0 {
            omega.determinant() / diag
        } else {
            0.0
        };
        if !(normalized_det >= 1e-10) {
            return Err(Error::DegenerateOmega { normalized_det });
        }
        let transform = gram_schmidt(&omega);

        let (x, weights) = grid.nodes();
        let n = x.len();
        let mut carrier = Vec::with_capacity(n);
        let mut phase0 = Vec::with_capacity(n);
        let mut intensity = Vec::with_capacity(n);
        let mut envelopes = vec![vec![Complex64::new(1.0, 0.0); n]];
        envelopes.extend((0..m).map(|_| Vec::with_capacity(n)));
        let mut derivative_kernel = Vec::with_capacity(n);
        let g00 = inner.gram[(0, 0)];
        for (j, &xj) in x.iter().enumerate() {
            let ph = model.phase(xj, theta0);
            let amp = profile.amplitude(xj);
            carrier.push(amp * Complex64::from_polar(1.0, ph));
            phase0.push(ph);
            intensity.push(amp.norm_sqr());
            let centred: Vec<f64> = (0..m)
                .map(|i| model.partial(i, xj, theta0) - inner.mean[i])
                .collect();
            for k in 0..m {
                let s: f64 = (0..m).map(|i| transform[(k, i)] * centred[i]).sum();
                envelopes[k + 1].push(I * s);
            }
            let d0 = model.partial(0, xj, theta0);
            derivative_kernel.push((I * d0).conj() * (weights[j] * intensity[j] / g00.sqrt()));
        }
        let kernels = envelopes
            .iter()
            .map(|g| {
                g.iter()
                    .enumerate()
                    .map(|(j, gk)| gk.conj() * (weights[j] * intensity[j]))
                    .collect()
            })
            .collect();

        Ok(Self {
            reference: theta0.to_vec(),
            inner,
            omega,
            transform,
            normalized_det,
            length_scale: model.length_scale(),
            x,
            weights,
            carrier,
            phase0,
            envelopes,
            kernels,
            derivative_kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// `Ω` from adaptive quadrature.
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn inner_products(&self) -> &InnerProducts {
        &self.inner
    }

    /// Lower-triangular `T` with `γₖ = Σⱼ Tₖⱼ ωⱼ` (rows are modes 1..M).
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    /// `det Ω / Πᵢ Ωᵢᵢ`.
    pub fn normalized_det(&self) -> f64 {
        self.normalized_det
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Envelope `gₖ = γₖ/(f e^{iφ₀})` on the grid; `g₀ = 1`.
    pub fn envelope(&self, k: usize) -> &[Complex64] {
        &self.envelopes[k]
    }

    /// Envelope at an arbitrary position.
    pub fn envelope_at(&self, model: &dyn PhaseModel, k: usize, x: f64) -> Complex64 {
        if k == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let m = self.dim();
        let s: f64 = (0..m)
            .map(|i| self.transform[(k - 1, i)] * (model.partial(i, x, &self.reference) - self.inner.mean[i]))
            .sum();
        I * s
    }

    /// Mode profile `γₖ(x)` on the grid, including `f e^{iφ₀}`.
    pub fn gamma(&self, k: usize) -> Vec<Complex64> {
        self.envelopes[k]
            .iter()
            .zip(&self.carrier)
            .map(|(g, c)| g * c)
            .collect()
    }

    /// `⟨γₐ|γ_b⟩` by the grid rule.
    pub fn gram_matrix(&self) -> DMatrix<Complex64> {
        let n = self.dim() + 1;
        let gammas: Vec<Vec<Complex64>> = (0..n).map(|k| self.gamma(k)).collect();
        DMatrix::from_fn(n, n, |a, b| {
            gammas[a]
                .iter()
                .zip(&gammas[b])
                .zip(&self.weights)
                .map(|((u, v), w)| u.conj() * v * *w)
                .sum()
        })
    }

    /// `max |⟨γₐ|γ_b⟩ − δₐ_b|`.
    pub fn gram_error(&self) -> f64 {
        let g = self.gram_matrix();
        let n = g.nrows();
        let mut worst = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                let e = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g[(a, b)] - e).norm());
            }
        }
        worst
    }

    fn phase_factors(&self, model: &dyn PhaseModel, theta: &[f64]) -> Result<Vec<Complex64>> {
        model.check_theta(theta)?;
        Ok(self
            .x
            .iter()
            .zip(&self.phase0)
            .map(|(&x, &p0)| Complex64::from_polar(1.0, model.phase(x, theta) - p0))
            .collect())
    }

    /// Amplitudes `⟨γₖ|Φ(θ)⟩`, `k = 0..M`, by the grid rule.
    pub fn project(&self, model: &dyn PhaseModel, theta: &[f64]) -> Result<Vec<Complex64>> {
        let e = self.phase_factors(model, theta)?;
        Ok(self
            .kernels
            .iter()
            .map(|kern| kern.iter().zip(&e).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Amplitudes `⟨γₖ|Φ(θ)⟩` by adaptive quadrature with the analytic
    /// envelopes, independent of the grid.
    pub fn project_adaptive(
        &self,
        model: &dyn PhaseModel,
        profile: &IlluminationProfile,
        theta: &[f64],
        spec: &QuadratureSpec,
    ) -> Result<Vec<Complex64>> {
        model.check_theta(theta)?;
        (0..=self.dim())
            .map(|k| {
                integrate(
                    |x| {
                        let dphi = model.phase(x, theta) - model.phase(x, &self.reference);
                        self.envelope_at(model, k, x).conj()
                            * profile.intensity(x)
                            * Complex64::from_polar(1.0, dphi)
                    },
                    spec,
                )
                .map(|r| r.value)
            })
            .collect()
    }

    /// `pₖ = |⟨γₖ|Φ(θ)⟩|²`.
    pub fn probabilities(&self, model: &dyn PhaseModel, theta: &[f64]) -> Result<ProbabilityVector> {
        let a = self.project(model, theta)?;
        Ok(ProbabilityVector::new(a.iter().map(|z| z.norm_sqr()).collect()))
    }

    /// Probabilities of `measurement` at `θ`.
    pub fn probabilities_for(
        &self,
        measurement: Measurement,
        model: &dyn PhaseModel,
        theta: &[f64],
    ) -> Result<ProbabilityVector> {
        match measurement {
            Measurement::Gamma => self.probabilities(model, theta),
            Measurement::DerivativeProjector => {
                let e = self.phase_factors(model, theta)?;
                let a: Complex64 = self.derivative_kernel.iter().zip(&e).map(|(k, v)| k * v).sum();
                let p = a.norm_sqr();
                Ok(ProbabilityVector::new(vec![p, 1.0 - p]))
            }
        }
    }

    /// Write envelope `k` sampled at `y = x/ℓ` for `y ∈ [-y_max, y_max]`.
    ///
    /// Columns: `y [1]`, `x [m]`, `Re g [1]`, `Im g [1]`, `|g| [1]`.
    pub fn write_mode_csv(
        &self,
        model: &dyn PhaseModel,
        k: usize,
        y_max: f64,
        points: usize,
        path: &Path,
    ) -> Result<()> {
        if k > self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mode {k} requested from a basis with {} modes",
                self.dim() + 1
            )));
        }
        let file = std::fs::File::create(path)?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(["y [1]", "x [m]", "Re g [1]", "Im g [1]", "|g| [1]"])?;
        let points = points.max(2);
        for j in 0..points {
            let y = -y_max + 2.0 * y_max * j as f64 / (points - 1) as f64;
            let x = y * self.length_scale;
            let g = self.envelope_at(model, k, x);
            w.write_record(&[
                format!("{y:.10e}"),
                format!("{x:.10e}"),
                format!("{:.15e}", g.re),
                format!("{:.15e}", g.im),
                format!("{:.15e}", g.norm()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Second-order detection probabilities for the cliff in the γ basis.
///
/// `delta` is `(Δh)` or `(Δh, Δα)` in SI units. With both parameters:
///
/// ```text
/// p₀ = 1 − k²(2−N₃)Δh² − N₂(h₀Δα)² − 2kh₀N₁ΔhΔα + (kΔh)²
/// p₁ = k²(1−N₃)Δh² + N₁²/(1−N₃)(h₀Δα)² + 2kh₀N₁ΔhΔα
/// p₂ = (N₂ − N₁²/(1−N₃))(h₀Δα)²
/// ```
pub fn analytic_probabilities_cliff(
    p: &CliffParameters,
    n: &CliffIntegrals,
    delta: &[f64],
) -> Result<ProbabilityVector> {
    let (dh, da, two) = match *delta {
        [dh] => (dh, 0.0, false),
        [dh, da] => (dh, da, true),
        _ => {
            return Err(Error::ParameterCount {
                expected: 2,
                got: delta.len(),
            })
        }
    };
    let kdh = p.k * dh;
    let hda = p.h * da;
    let one_minus = 1.0 - n.n3;
    let p1 = one_minus * kdh * kdh + n.n1 * n.n1 / one_minus * hda * hda + 2.0 * n.n1 * kdh * hda;
    let probs = if two {
        let p0 = 1.0 - (2.0 - n.n3) * kdh * kdh - n.n2 * hda * hda - 2.0 * n.n1 * kdh * hda + kdh * kdh;
        let p2 = (n.n2 - n.n1 * n.n1 / one_minus) * hda * hda;
        vec![p0, p1, p2]
    } else {
        vec![1.0 - (2.0 - n.n3) * kdh * kdh + kdh * kdh, p1]
    };
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &v)| v < -1e-12) {
        return Err(Error::NegativeProbability { index, value });
    }
    Ok(ProbabilityVector::new(probs))
}

/// Options for [`classical_fim`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalFimOptions {
    /// Outcomes with `p` at or below this are treated as vanishing.
    pub floor: f64,
    /// Largest tolerated relative change between steps `s` and `s/2`.
    pub richardson_tol: f64,
    /// Largest tolerated smallest eigenvalue of a vanishing outcome's
    /// step-scaled Hessian, relative to the largest eigenvalue of the
    /// step-scaled total Fisher matrix.
    pub rank_tol: f64,
}

impl Default for ClassicalFimOptions {
    fn default() -> Self {
        Self {
            floor: 1e-10,
            richardson_tol: 1e-2,
            rank_tol: 1e-6,
        }
    }
}

struct Derivatives {
    p: Vec<f64>,
    grad: Vec<Vec<f64>>,
    hess: Vec<DMatrix<f64>>,
}

fn finite_differences(
    prob_fn: &dyn Fn(&[f64]) -> Result<ProbabilityVector>,
    delta0: &[f64],
    steps: &[f64],
) -> Result<Derivatives> {
    let m = delta0.len();
    let eval = |offsets: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut d = delta0.to_vec();
        for &(i, s) in offsets {
            d[i] += s;
        }
        Ok(prob_fn(&d)?.p)
    };
    let centre = eval(&[])?;
    let n_out = centre.len();
    let mut grad = vec![vec![0.0; m]; n_out];
    let mut hess = vec![DMatrix::zeros(m, m); n_out];
    for i in 0..m {
        let si = steps[i];
        let plus = eval(&[(i, si)])?;
        let minus = eval(&[(i, -si)])?;
        for n in 0..n_out {
            grad[n][i] = (plus[n] - minus[n]) / (2.0 * si);
            hess[n][(i, i)] = (plus[n] - 2.0 * centre[n] + minus[n]) / (si * si);
        }
        for j in 0..i {
            let sj = steps[j];
            let pp = eval(&[(i, si), (j, sj)])?;
            let pm = eval(&[(i, si), (j, -sj)])?;
            let mp = eval(&[(i, -si), (j, sj)])?;
            let mm = eval(&[(i, -si), (j, -sj)])?;
            for n in 0..n_out {
                let v = (pp[n] - pm[n] - mp[n] + mm[n]) / (4.0 * si * sj);
                hess[n][(i, j)] = v;
                hess[n][(j, i)] = v;
            }
        }
    }
    Ok(Derivatives {
        p: centre,
        grad,
        hess,
    })
}

/// Classical Fisher information of an outcome distribution at `delta0`.
///
/// Regular outcomes contribute `∇p ∇pᵀ / p` with Richardson-extrapolated
/// central differences. Outcomes that vanish at `delta0` contribute their
/// `Δ → 0` limit `2·∇²p`, which is direction independent only when the
/// Hessian has rank one; otherwise [`Error::AmbiguousLimit`].
pub fn classical_fim(
    prob_fn: &dyn Fn(&[f64]) -> Result<ProbabilityVector>,
    delta0: &[f64],
    steps: &[f64],
    options: ClassicalFimOptions,
) -> Result<ComplexMatrix> {
    let m = delta0.len();
    if steps.len() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} steps for {m} parameters",
            steps.len()
        )));
    }
    let half: Vec<f64> = steps.iter().map(|s| s / 2.0).collect();
    let coarse = finite_differences(prob_fn, delta0, steps)?;
    let fine = finite_differences(prob_fn, delta0, &half)?;

    let mut f_coarse = DMatrix::<f64>::zeros(m, m);
    let mut f_fine = DMatrix::<f64>::zeros(m, m);
    let mut f_extrap = DMatrix::<f64>::zeros(m, m);
    let mut curvature = 0.0_f64;
    let mut vanishing = Vec::new();
    for n in 0..coarse.p.len() {
        let p = coarse.p[n];
        let extrap = |a: f64, b: f64| (4.0 * b - a) / 3.0;
        let h_ext = DMatrix::from_fn(m, m, |i, j| extrap(coarse.hess[n][(i, j)], fine.hess[n][(i, j)]));
        curvature = curvature.max(h_ext.amax());
        if p > options.floor {
            let g_ext: Vec<f64> = (0..m).map(|i| extrap(coarse.grad[n][i], fine.grad[n][i])).collect();
            for i in 0..m {
                for j in 0..m {
                    f_coarse[(i, j)] += coarse.grad[n][i] * coarse.grad[n][j] / p;
                    f_fine[(i, j)] += fine.grad[n][i] * fine.grad[n][j] / p;
                    f_extrap[(i, j)] += g_ext[i] * g_ext[j] / p;
                }
            }
        } else {
            if m > 1 {
                let scaled = DMatrix::from_fn(m, m, |i, j| h_ext[(i, j)] * steps[i] * steps[j]);
                let eig = scaled.symmetric_eigen().eigenvalues;
                let smallest = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
                vanishing.push((n, smallest));
            }
            f_coarse += &coarse.hess[n] * 2.0;
            f_fine += &fine.hess[n] * 2.0;
            f_extrap += &h_ext * 2.0;
        }
    }
    // A vanishing outcome's limit is direction independent when its Hessian
    // has rank one; the residual eigenvalue is judged against the total
    // step-scaled information so quadrature leakage does not count.
    let total = DMatrix::from_fn(m, m, |i, j| f_extrap[(i, j)] * steps[i] * steps[j]);
    let total_scale = total.symmetric_eigen().eigenvalues.amax();
    for (n, smallest) in vanishing {
        if smallest > options.rank_tol * total_scale {
            return Err(Error::AmbiguousLimit { outcome: n });
        }
    }
    let scale = f_extrap.amax().max(curvature);
    let disagreement = if scale > 0.0 {
        (&f_coarse - &f_fine).amax() / scale
    } else {
        0.0
    };
    if disagreement > options.richardson_tol {
        return Err(Error::StepTooLarge {
            disagreement,
            tol: options.richardson_tol,
        });
    }
    ComplexMatrix::from_real(&f_extrap)
}

/// `Im[⟨Φ₁|Φ₁⟩⟨Φ₁|Φ₀⟩]` against `|⟨Φ₀|Φ₁⟩|²·Im⟨Φ₁|Φ₀⟩`: equal iff projecting
/// onto `Φ₁` (which need not be orthogonal to `Φ₀`) is an optimal
/// single-parameter measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonorthogonalCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs` when `rhs ≠ 0`.
    pub ratio: Option<f64>,
    pub equal: bool,
}

/// Evaluate the non-orthogonal projector condition for parameter `i`.
///
/// With `⟨Φᵢ|Φᵢ⟩ = Gᵢᵢ` and `⟨Φᵢ|Φ₀⟩ = −i gᵢ` the two sides are `−Gᵢᵢgᵢ`
/// and `−gᵢ³`.
pub fn nonorthogonal_condition_check(ip: &InnerProducts, i: usize, tol: f64) -> NonorthogonalCheck {
    let g_ii = ip.gram[(i, i)];
    let g = ip.mean[i];
    let phi_i_phi_0 = Complex64::new(0.0, -g);
    let lhs = (Complex64::new(g_ii, 0.0) * phi_i_phi_0).im;
    let rhs = phi_i_phi_0.norm_sqr() * phi_i_phi_0.im;
    let natural = g_ii.powf(1.5);
    let equal = (lhs - rhs).abs() <= tol * lhs.abs().max(rhs.abs()).max(natural);
    NonorthogonalCheck {
        lhs,
        rhs,
        ratio: (rhs != 0.0).then(|| lhs / rhs),
        equal,
    }
}

/// Quantum against classical Fisher information at the reference point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationReport {
    pub measurement: Measurement,
    pub parameters: Vec<String>,
    /// Per photon.
    pub quantum: Vec<Vec<f64>>,
    /// Per photon, in the `Δθ → 0` limit.
    pub classical: Vec<Vec<f64>>,
    /// `|F^Q − F^C|ᵢⱼ / √(F^Q_ii F^Q_jj)`.
    pub discrepancy: Vec<Vec<f64>>,
    pub max_discrepancy: f64,
    pub nonorthogonal: Option<NonorthogonalCheck>,
    pub passes: bool,
}

/// Finite-difference steps used by [`saturation_report`]: `1e-3` of each
/// parameter's natural scale.
pub fn default_steps(model: &dyn PhaseModel) -> Vec<f64> {
    model.parameter_scales().iter().map(|s| 1e-3 * s).collect()
}

pub fn saturation_report(
    model: &dyn PhaseModel,
    profile: &IlluminationProfile,
    theta0: &[f64],
    measurement: Measurement,
) -> Result<SaturationReport> {
    let basis = ModeBasis::build(model, profile, theta0)?;
    let quantum = qfim_single_photon(basis.inner_products(), 1.0)?;
    let m = quantum.dim();
    let prob_fn = |d: &[f64]| {
        let theta: Vec<f64> = theta0.iter().zip(d).map(|(a, b)| a + b).collect();
        basis.probabilities_for(measurement, model, &theta)
    };
    let classical = classical_fim(&prob_fn, &vec![0.0; m], &default_steps(model), ClassicalFimOptions::default())?;

    let mut discrepancy = vec![vec![0.0; m]; m];
    let mut max_discrepancy = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            let norm = (quantum.get(i, i) * quantum.get(j, j)).sqrt();
            let d = (quantum.get(i, j) - classical.get(i, j).re).abs() / norm;
            discrepancy[i][j] = d;
            max_discrepancy = max_discrepancy.max(d);
        }
    }
    let nonorthogonal = match measurement {
        Measurement::Gamma => None,
        Measurement::DerivativeProjector => Some(nonorthogonal_condition_check(basis.inner_products(), 0, 1e-6)),
    };
    let passes = max_discrepancy < 1e-4 && nonorthogonal.map_or(true, |c| c.equal);
    Ok(SaturationReport {
        measurement,
        parameters: model.parameter_names(),
        quantum: quantum.to_rows(),
        classical: classical.to_real_rows(),
        discrepancy,
        max_discrepancy,
        nonorthogonal,
        passes,
    })
}
