//! Photon counting and maximum-likelihood estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::{cliff_integrals, inner_products, qfim_single_photon};
use crate::models::{CliffModel, IlluminationProfile, PhaseModel};
use crate::modes::{analytic_probabilities_cliff, Measurement, ModeBasis, ProbabilityVector};
use crate::numerics::ComplexMatrix;

/// Residuals above this are kept as an explicit unobserved outcome.
pub const RESIDUAL_OUTCOME_THRESHOLD: f64 = 1e-6;

pub const RNG_ALGORITHM: &str =
    "ChaCha20 (rand_chacha); trial seed = splitmix64(master + (t + 1) * 0x9E3779B97F4A7C15)";

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t` derived from the master seed.
pub fn trial_seed(master: u64, t: u64) -> u64 {
    splitmix64(master.wrapping_add((t + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Photon counts per outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountRecord {
    pub counts: Vec<u64>,
    /// Photons that left the listed modes; `None` when the residual
    /// probability was folded into outcome 0.
    pub unobserved: Option<u64>,
    pub n_photons: u64,
    pub seed: u64,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unobserved.unwrap_or(0)
    }
}

fn outcome_probabilities(p: &ProbabilityVector) -> Result<(Vec<f64>, bool)> {
    if let Some((i, &v)) = p.p.iter().enumerate().find(|(_, &v)| v < -1e-12 || !v.is_finite()) {
        return Err(Error::InvalidProbabilities(format!("p[{i}] = {v}")));
    }
    if p.residual < -1e-10 {
        return Err(Error::InvalidProbabilities(format!(
            "probabilities sum to {} > 1",
            1.0 - p.residual
        )));
    }
    let mut q: Vec<f64> = p.p.iter().map(|v| v.max(0.0)).collect();
    let explicit = p.residual > RESIDUAL_OUTCOME_THRESHOLD;
    if explicit {
        q.push(p.residual);
    } else {
        q[0] = (q[0] + p.residual).max(0.0);
    }
    Ok((q, explicit))
}

/// Multinomial draw of `n_photons` over the outcomes of `p`.
///
/// A residual `1 − Σp` above 1e-6 becomes an extra unobserved outcome;
/// smaller residuals are folded into outcome 0.
pub fn sample_counts(p: &ProbabilityVector, n_photons: u64, seed: u64) -> Result<CountRecord> {
    let (q, explicit) = outcome_probabilities(p)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut remaining = n_photons;
    let mut mass = q.iter().sum::<f64>();
    let mut counts = Vec::with_capacity(q.len());
    for (i, &qi) in q.iter().enumerate() {
        let c = if i + 1 == q.len() || remaining == 0 {
            remaining
        } else {
            let frac = if mass > 0.0 { (qi / mass).clamp(0.0, 1.0) } else { 0.0 };
            Binomial::new(remaining, frac)
                .map_err(|e| Error::InvalidProbabilities(e.to_string()))?
                .sample(&mut rng)
        };
        counts.push(c);
        remaining -= c;
        mass -= qi;
    }
    let unobserved = if explicit { counts.pop() } else { None };
    Ok(CountRecord {
        counts,
        unobserved,
        n_photons,
        seed,
    })
}

/// Deterministic counts `n·p` (rounded), used as an infinite-sample proxy.
pub fn expected_counts(p: &ProbabilityVector, n_photons: u64) -> Result<CountRecord> {
    let (q, explicit) = outcome_probabilities(p)?;
    let mut counts: Vec<u64> = q.iter().map(|v| (v * n_photons as f64).round() as u64).collect();
    let unobserved = if explicit { counts.pop() } else { None };
    Ok(CountRecord {
        counts,
        unobserved,
        n_photons,
        seed: 0,
    })
}

/// `Σₖ nₖ log pₖ(Δθ)`, using the same residual convention as the record.
pub fn log_likelihood(record: &CountRecord, p: &ProbabilityVector) -> f64 {
    if p.len() != record.counts.len() {
        return f64::NEG_INFINITY;
    }
    let term = |n: u64, q: f64| {
        if n == 0 {
            0.0
        } else if q > 0.0 {
            n as f64 * q.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut ll = 0.0;
    for (k, (&n, &q)) in record.counts.iter().zip(&p.p).enumerate() {
        let q = if k == 0 && record.unobserved.is_none() {
            q + p.residual
        } else {
            q
        };
        ll += term(n, q);
    }
    if let Some(n) = record.unobserved {
        ll += term(n, p.residual);
    }
    ll
}

/// Rectangular search region for the offsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch("bounds of different lengths".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidSimulation("lower bound must be below upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn to_point(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &t)| self.lower[i] + t * (self.upper[i] - self.lower[i]))
            .collect()
    }

    /// Whether `x` lies inside, inclusive.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

/// Minimise `f` over the unit cube by Nelder–Mead, points clamped to the cube.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64) -> Vec<f64> {
    let m = start.len();
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|t| t.clamp(0.0, 1.0)).collect() };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..m {
        let mut v = start.to_vec();
        v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
        let v = clamp(v);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..2000 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if size < 1e-11 {
            break;
        }
        let centroid: Vec<f64> = (0..m)
            .map(|i| simplex[..m].iter().map(|(v, _)| v[i]).sum::<f64>() / m as f64)
            .collect();
        let worst = simplex[m].clone();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let t = if fr < worst.1 { 0.5 } else { -0.5 };
            let xc = along(t);
            let fc = f(&xc);
            if fc < worst.1.min(fr) {
                simplex[m] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = entry.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let fv = f(&v);
                    *entry = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

/// Maximum-likelihood offsets for one count record.
///
/// A coarse grid (21 points for one parameter, 11 per axis otherwise) picks
/// the start, ties going to the smallest scaled offset; Nelder–Mead then
/// refines in the unit-cube coordinate of `bounds`. Fails with
/// [`Error::BoundaryMaximum`] if the optimum sits on the boundary.
pub fn mle_fit(
    record: &CountRecord,
    prob_model: &dyn Fn(&[f64]) -> Result<ProbabilityVector>,
    bounds: &Bounds,
) -> Result<Vec<f64>> {
    let m = bounds.dim();
    let per_axis: usize = if m == 1 { 21 } else { 11 };
    let objective = |u: &[f64]| -> f64 {
        match prob_model(&bounds.to_point(u)) {
            Ok(p) => {
                let ll = log_likelihood(record, &p);
                if ll.is_nan() {
                    f64::INFINITY
                } else {
                    -ll
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let scaled_norm = |u: &[f64]| -> f64 {
        bounds
            .to_point(u)
            .iter()
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .map(|(v, (a, b))| (v / (b - a)).powi(2))
            .sum()
    };

    let total = per_axis.pow(m as u32);
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for idx in 0..total {
        let mut rem = idx;
        let u: Vec<f64> = (0..m)
            .map(|_| {
                let k = rem % per_axis;
                rem /= per_axis;
                k as f64 / (per_axis - 1) as f64
            })
            .collect();
        let val = objective(&u);
        let norm = scaled_norm(&u);
        let better = match &best {
            None => true,
            Some((_, bv, bn)) => val < *bv || (val == *bv && norm < *bn),
        };
        if better {
            best = Some((u, val, norm));
        }
    }
    let (start, start_val, _) = best.expect("grid is non-empty");
    if !start_val.is_finite() {
        return Err(Error::InvalidProbabilities(
            "likelihood is zero everywhere on the search grid".into(),
        ));
    }
    let step = 1.0 / (per_axis - 1) as f64;
    let u = nelder_mead(&objective, &start, step);
    for (i, &t) in u.iter().enumerate() {
        if t <= 1e-6 || t >= 1.0 - 1e-6 {
            return Err(Error::BoundaryMaximum { parameter: i });
        }
    }
    Ok(bounds.to_point(&u))
}

/// Which probability model the likelihood used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityPath {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

/// Outcome of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub parameters: Vec<String>,
    pub trials: usize,
    pub n_photons: u64,
    pub seed: u64,
    pub rng: String,
    pub measurement: Measurement,
    pub probability_path: ProbabilityPath,
    pub reference: Vec<f64>,
    pub true_delta: Vec<f64>,
    pub true_probabilities: ProbabilityVector,
    pub bounds: Bounds,
    pub estimates: Vec<Vec<f64>>,
    pub trial_seeds: Vec<u64>,
    pub failures: Vec<TrialFailure>,
    pub sample_mean: Vec<f64>,
    /// `None` with fewer than two successful trials.
    pub sample_covariance: Option<Vec<Vec<f64>>>,
    /// `F(θ₀ + Δθ)⁻¹ / N` from the single-photon QFIM.
    pub crb: Vec<Vec<f64>>,
    /// Sample variance over CRB variance, per parameter.
    pub efficiency: Option<Vec<f64>>,
}

impl SimulationReport {
    pub fn covariance_defined(&self) -> bool {
        self.sample_covariance.is_some()
    }
}

/// Setup for [`monte_carlo`].
#[derive(Debug, Clone)]
pub struct MonteCarloSpec {
    pub true_delta: Vec<f64>,
    pub n_photons: u64,
    pub trials: usize,
    pub seed: u64,
    pub measurement: Measurement,
    /// Half-width of the search box in units of the CRB standard deviation.
    pub bound_sigmas: f64,
}

impl MonteCarloSpec {
    pub fn new(true_delta: Vec<f64>, n_photons: u64, trials: usize, seed: u64) -> Self {
        Self {
            true_delta,
            n_photons,
            trials,
            seed,
            measurement: Measurement::Gamma,
            bound_sigmas: 10.0,
        }
    }
}

/// Largest `max(|kΔh|, |h₀Δα|)` for which the second-order cliff
/// probabilities are used.
pub const ANALYTIC_TRUST_RADIUS: f64 = 0.02;

/// Sample-and-fit Monte Carlo.
///
/// Each trial draws counts from the probabilities at `θ₀ + Δθ` and fits the
/// offsets by maximum likelihood. When `cliff` is given, the search box lies
/// within the second-order trust region, and the γ basis is measured, the
/// analytic cliff probabilities drive the likelihood; otherwise the
/// numerically projected ones do.
pub fn monte_carlo(
    model: &dyn PhaseModel,
    profile: &IlluminationProfile,
    cliff: Option<&CliffModel>,
    spec: &MonteCarloSpec,
) -> Result<SimulationReport> {
    let m = model.dim();
    if spec.true_delta.len() != m {
        return Err(Error::ParameterCount {
            expected: m,
            got: spec.true_delta.len(),
        });
    }
    if spec.trials == 0 {
        return Err(Error::InvalidSimulation("trials must be at least 1".into()));
    }
    if spec.n_photons == 0 {
        return Err(Error::InvalidSimulation("n_photons must be at least 1".into()));
    }
    let theta0 = model.reference();
    let truth: Vec<f64> = theta0.iter().zip(&spec.true_delta).map(|(a, b)| a + b).collect();

    let ip_true = inner_products(model, profile, &truth)?;
    let per_photon = qfim_single_photon(&ip_true, 1.0)?;
    let inv = per_photon.matrix.invert()?;
    let crb: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| inv.get(i, j).re / spec.n_photons as f64).collect())
        .collect();
    let sigma: Vec<f64> = (0..m).map(|i| crb[i][i].sqrt()).collect();
    let bounds = Bounds::new(
        (0..m).map(|i| spec.true_delta[i] - spec.bound_sigmas * sigma[i]).collect(),
        (0..m).map(|i| spec.true_delta[i] + spec.bound_sigmas * sigma[i]).collect(),
    )?;

    let basis = ModeBasis::build(model, profile, &theta0)?;
    let analytic = match cliff {
        Some(c) if spec.measurement == Measurement::Gamma => {
            let p = c.parameters();
            let inside = (0..m).all(|i| {
                let s = if i == 0 { p.k } else { p.h };
                bounds.lower[i].abs().max(bounds.upper[i].abs()) * s <= ANALYTIC_TRUST_RADIUS
            });
            if inside {
                Some((*p, cliff_integrals(p, profile, true)?))
            } else {
                None
            }
        }
        _ => None,
    };
    let probability_path = if analytic.is_some() {
        ProbabilityPath::Analytic
    } else {
        ProbabilityPath::Numeric
    };
    let prob_model = |d: &[f64]| -> Result<ProbabilityVector> {
        match &analytic {
            Some((p, n)) => analytic_probabilities_cliff(p, n, d),
            None => {
                let theta: Vec<f64> = theta0.iter().zip(d).map(|(a, b)| a + b).collect();
                basis.probabilities_for(spec.measurement, model, &theta)
            }
        }
    };
    let true_probabilities = prob_model(&spec.true_delta)?;

    let seeds: Vec<u64> = (0..spec.trials as u64).map(|t| trial_seed(spec.seed, t)).collect();
    let outcomes: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            let record = sample_counts(&true_probabilities, spec.n_photons, s)?;
            mle_fit(&record, &prob_model, &bounds)
        })
        .collect();

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(TrialFailure {
                trial: t,
                seed: seeds[t],
                error: e.to_string(),
            }),
        }
    }

    let n_ok = estimates.len();
    let sample_mean: Vec<f64> = (0..m)
        .map(|i| estimates.iter().map(|e| e[i]).sum::<f64>() / n_ok.max(1) as f64)
        .collect();
    let sample_covariance = (n_ok >= 2).then(|| {
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        estimates
                            .iter()
                            .map(|e| (e[i] - sample_mean[i]) * (e[j] - sample_mean[j]))
                            .sum::<f64>()
                            / (n_ok - 1) as f64
                    })
                    .collect()
            })
            .collect::<Vec<Vec<f64>>>()
    });
    let efficiency = sample_covariance
        .as_ref()
        .map(|c| (0..m).map(|i| c[i][i] / crb[i][i]).collect());

    Ok(SimulationReport {
        parameters: model.parameter_names(),
        trials: spec.trials,
        n_photons: spec.n_photons,
        seed: spec.seed,
        rng: RNG_ALGORITHM.into(),
        measurement: spec.measurement,
        probability_path,
        reference: theta0,
        true_delta: spec.true_delta.clone(),
        true_probabilities,
        bounds,
        estimates,
        trial_seeds: seeds,
        failures,
        sample_mean,
        sample_covariance,
        crb,
        efficiency,
    })
}

/// Sample covariance must be symmetric PSD; exposed for tests and reports.
pub fn covariance_is_psd(c: &[Vec<f64>]) -> Result<bool> {
    ComplexMatrix::from_real_rows(c)?.is_positive_semidefinite(1e-10)
}
