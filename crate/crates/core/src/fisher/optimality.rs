use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityOptions {
    /// Modes with population below this are degenerate (phase undefined).
    pub population_threshold: f64,
    pub phase_tolerance: f64,
    pub fisher_tolerance: f64,
}

impl Default for OptimalityOptions {
    fn default() -> Self {
        Self {
            population_threshold: 1e-12,
            phase_tolerance: 1e-9,
            fisher_tolerance: 1e-6,
        }
    }
}

/// Whether measuring the populations `ρₙ = |Cₙ|²` of a mode expansion
/// extracts all the quantum Fisher information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    /// `∂ arg Cₙ / ∂θᵢ` per mode and parameter; `None` for degenerate modes.
    pub phase_derivatives: Vec<Vec<Option<f64>>>,
    /// Population-weighted mean phase rate per parameter.
    pub common_phase_rate: Vec<f64>,
    /// Largest `|∂ arg Cₙ/∂θᵢ|` over non-degenerate modes.
    pub max_phase_derivative: f64,
    /// Largest `|Cₙ|·|∂ arg Cₙ/∂θᵢ − common rate|`; a global phase does not
    /// count, and weighting by `|Cₙ|` keeps finite-difference noise in
    /// sparsely populated modes from dominating.
    pub max_relative_phase_derivative: f64,
    pub degenerate_modes: Vec<usize>,
    pub quantum_fisher: Vec<Vec<f64>>,
    pub classical_fisher: Vec<Vec<f64>>,
    /// `|F^Q − F^C|ᵢⱼ / √(F^Q_ii F^Q_jj)`.
    pub max_discrepancy: f64,
    pub phases_constant: bool,
    pub fisher_equal: bool,
    pub optimal: bool,
}

/// Fourth-order central difference of the coefficient vector.
fn derivative(
    coeffs: &dyn Fn(&[f64]) -> Vec<Complex64>,
    theta: &[f64],
    i: usize,
    step: f64,
) -> Vec<Complex64> {
    let at = |k: f64| {
        let mut t = theta.to_vec();
        t[i] += k * step;
        coeffs(&t)
    };
    let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
    (0..p1.len())
        .map(|n| (-p2[n] + 8.0 * p1[n] - 8.0 * m1[n] + m2[n]) / (12.0 * step))
        .collect()
}

/// Check the mode-expansion optimality criterion at `θ₀`.
///
/// `F^Q = 4 Re[Σ ∂ᵢC̄ ∂ⱼC − (Σ C̄∂ᵢC)* (Σ C̄∂ⱼC)]` and
/// `F^C = Σ ∂ᵢρ ∂ⱼρ / ρ`, with degenerate modes entering `F^C` through their
/// `ρ → 0` limit `4 Re(∂ᵢC̄ ∂ⱼC)`.
pub fn mode_expansion_optimality(
    coeffs: &dyn Fn(&[f64]) -> Vec<Complex64>,
    theta0: &[f64],
    steps: &[f64],
    options: OptimalityOptions,
) -> Result<OptimalityReport> {
    let m = theta0.len();
    if steps.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} steps for {m} parameters",
            steps.len()
        )));
    }
    let c = coeffs(theta0);
    let d: Vec<Vec<Complex64>> = (0..m).map(|i| derivative(coeffs, theta0, i, steps[i])).collect();
    if d.iter().any(|v| v.len() != c.len()) {
        return Err(Error::DimensionMismatch(
            "coefficient vector length changed with theta".into(),
        ));
    }

    let rho: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let degenerate: Vec<usize> = (0..c.len())
        .filter(|&n| rho[n] < options.population_threshold)
        .collect();

    let mut phase_derivatives = Vec::with_capacity(c.len());
    for n in 0..c.len() {
        if rho[n] < options.population_threshold {
            phase_derivatives.push(vec![None; m]);
        } else {
            phase_derivatives.push((0..m).map(|i| Some((c[n].conj() * d[i][n]).im / rho[n])).collect());
        }
    }
    let total: f64 = rho.iter().sum();
    let common_phase_rate: Vec<f64> = (0..m)
        .map(|i| c.iter().zip(&d[i]).map(|(a, b)| (a.conj() * b).im).sum::<f64>() / total)
        .collect();
    let mut max_phase = 0.0_f64;
    let mut max_relative = 0.0_f64;
    for (row, r) in phase_derivatives.iter().zip(&rho) {
        for (i, v) in row.iter().enumerate() {
            if let Some(v) = v {
                max_phase = max_phase.max(v.abs());
                max_relative = max_relative.max(r.sqrt() * (v - common_phase_rate[i]).abs());
            }
        }
    }

    let mut fq = vec![vec![0.0; m]; m];
    let mut fc = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let overlap: Complex64 = d[i].iter().zip(&d[j]).map(|(a, b)| a.conj() * b).sum();
            let ai: Complex64 = c.iter().zip(&d[i]).map(|(a, b)| a.conj() * b).sum();
            let aj: Complex64 = c.iter().zip(&d[j]).map(|(a, b)| a.conj() * b).sum();
            fq[i][j] = 4.0 * (overlap - ai.conj() * aj).re;
            fc[i][j] = (0..c.len())
                .map(|n| {
                    if rho[n] < options.population_threshold {
                        4.0 * (d[i][n].conj() * d[j][n]).re
                    } else {
                        let di = 2.0 * (c[n].conj() * d[i][n]).re;
                        let dj = 2.0 * (c[n].conj() * d[j][n]).re;
                        di * dj / rho[n]
                    }
                })
                .sum();
        }
    }
    let mut max_discrepancy = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            let norm = (fq[i][i] * fq[j][j]).sqrt();
            let diff = (fq[i][j] - fc[i][j]).abs();
            max_discrepancy = max_discrepancy.max(if norm > 0.0 { diff / norm } else { diff });
        }
    }
    let phases_constant = max_relative <= options.phase_tolerance;
    let fisher_equal = max_discrepancy <= options.fisher_tolerance;
    Ok(OptimalityReport {
        phase_derivatives,
        common_phase_rate,
        max_phase_derivative: max_phase,
        max_relative_phase_derivative: max_relative,
        degenerate_modes: degenerate,
        quantum_fisher: fq,
        classical_fisher: fc,
        max_discrepancy,
        phases_constant,
        fisher_equal,
        optimal: phases_constant && fisher_equal,
    })
}

/// Hermite–Gauss amplitudes of a Gaussian displaced by `d` (beam radius
/// `w0`): `Cₙ = (d/w0)ⁿ e^{−d²/2w0²} / √n!`, for `n < modes`.
pub fn displaced_gaussian_coefficients(d: f64, w0: f64, modes: usize) -> Vec<Complex64> {
    let r = d / w0;
    let mut out = Vec::with_capacity(modes);
    let mut term = (-0.5 * r * r).exp();
    for n in 0..modes {
        if n > 0 {
            term *= r / (n as f64).sqrt();
        }
        out.push(Complex64::new(term, 0.0));
    }
    out
}
