//! Acceptance suite. Prints one PASS/FAIL line per criterion. Failures make
//! the process exit non-zero only when `PHASEBOUND_ACCEPTANCE_STRICT=1`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use phasebound::estimation::{monte_carlo, MonteCarloSpec};
use phasebound::fisher::{
    cliff_integrals, default_quadrature, displaced_gaussian_coefficients, first_order_integrals,
    inner_products, mode_expansion_optimality, precision_bounds_cliff, qfim_coherent, qfim_single_photon,
    sigma_alpha_coefficient, OptimalityOptions,
};
use phasebound::models::gaussian_profile;
use phasebound::modes::{
    analytic_probabilities_cliff, nonorthogonal_condition_check, saturation_report, GridSpec, Measurement,
};
use phasebound::{CliffModel, CliffParameters, IlluminationProfile, ModeBasis, PhaseModel, StateFamily, TabulatedModel};

type Check = Result<String, String>;

const LAMBDA: f64 = 633e-9;

fn fig2() -> CliffParameters {
    CliffParameters::from_wavelength_and_angle(LAMBDA, LAMBDA / 4.0, 80f64.to_radians()).unwrap()
}

fn beam(p: &CliffParameters, w_alpha: f64) -> IlluminationProfile {
    gaussian_profile(w_alpha / p.alpha).unwrap()
}

fn timed(limit: Duration, detail: &mut String, ok: bool, start: Instant) -> bool {
    let t = start.elapsed();
    detail.push_str(&format!("; runtime {:.3} s (limit {} s)", t.as_secs_f64(), limit.as_secs_f64()));
    ok && t < limit
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sigma_alpha() -> Check {
    let start = Instant::now();
    let p = fig2();
    let photons = 1e6;
    let wa = 50.0;
    let f = beam(&p, wa);
    let fo = first_order_integrals(&p, wa / p.alpha);
    // [F⁻¹]₂₂ with first-order N₂, expressed as σ_α/α·kh·√(N/wα)
    let rel = 1.0 / (p.alpha * (4.0 * photons * p.h * p.h * fo.n2).sqrt());
    let from_n2 = rel * p.kh() * (photons / wa).sqrt();
    let b = precision_bounds_cliff(&p, &f, photons, StateFamily::SinglePhoton).map_err(|e| e.to_string())?;
    let closed = sigma_alpha_coefficient() / p.kh() * (wa / photons).sqrt();
    let gap = (b.exact_relative_sigma_alpha / b.relative_sigma_alpha - 1.0).abs();
    let ok = (from_n2 - 0.8537).abs() <= 5e-4
        && (from_n2 - sigma_alpha_coefficient()).abs() < 1e-12
        && (from_n2 - 0.85).abs() < 5e-3
        && (b.relative_sigma_alpha / closed - 1.0).abs() < 1e-12
        && gap <= 2e-3;
    let mut detail = format!(
        "coefficient from first-order N2 = {from_n2:.6}; exact/closed σ_α at wα=50 differ by {:.3}%",
        100.0 * gap
    );
    let ok = timed(Duration::from_secs(1), &mut detail, ok, start);
    verdict(ok, detail)
}

fn sqrt2_gap() -> Check {
    let start = Instant::now();
    let p = fig2();
    let photons = 1e6;
    let mut worst_first = 0.0_f64;
    let mut worst_exact = 0.0_f64;
    for wa in [20.0, 50.0, 100.0] {
        let f = beam(&p, wa);
        let s = precision_bounds_cliff(&p, &f, photons, StateFamily::SinglePhoton).map_err(|e| e.to_string())?;
        let c = precision_bounds_cliff(&p, &f, photons, StateFamily::Coherent).map_err(|e| e.to_string())?;
        worst_first = worst_first.max((s.relative_sigma_h / c.relative_sigma_h - 2f64.sqrt()).abs());

        let model = CliffModel::height_only(p);
        let ip = inner_products(&model, &f, &[p.h]).map_err(|e| e.to_string())?;
        let fs = qfim_single_photon(&ip, photons).map_err(|e| e.to_string())?;
        let fc = qfim_coherent(&ip, photons).map_err(|e| e.to_string())?;
        let n3 = cliff_integrals(&p, &f, true).map_err(|e| e.to_string())?.n3;
        let expected = (2.0 - n3) / (1.0 - n3);
        worst_exact = worst_exact.max((fc.get(0, 0) / fs.get(0, 0) / expected - 1.0).abs());
    }
    let ok = worst_first <= 1e-9 && worst_exact <= 1e-9;
    let mut detail = format!(
        "first-order |ratio − √2| = {worst_first:.2e}; exact F11c/F11s vs (2−N3)/(1−N3) rel. dev. {worst_exact:.2e} over wα ∈ {{20, 50, 100}}"
    );
    let ok = timed(Duration::from_secs(1), &mut detail, ok, start);
    verdict(ok, detail)
}

fn random_table(rng: &mut ChaCha20Rng, width: f64) -> TabulatedModel {
    let half = 4.0 * width;
    let x: Vec<f64> = (0..=400).map(|j| -half + 2.0 * half * j as f64 / 400.0).collect();
    let steps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0) * width,
                rng.random_range(0.05..0.5) * width,
            )
        })
        .collect();
    let ripple = rng.random_range(-0.3..0.3);
    TabulatedModel::from_fn(&x, |t| {
        steps.iter().map(|(a, c, s)| a * ((t - c) / s).tanh()).sum::<f64>() + ripple * (t / width).sin()
    })
    .unwrap()
}

fn qfim_identity() -> Check {
    let start = Instant::now();
    let photons = 1e5;
    let p = fig2();
    let mut cases: Vec<(String, Box<dyn PhaseModel>, IlluminationProfile)> =
        vec![("cliff".into(), Box::new(CliffModel::new(p)), beam(&p, 20.0))];
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let width = 1e-6;
    for t in 0..3 {
        cases.push((
            format!("table{t}"),
            Box::new(random_table(&mut rng, width)),
            gaussian_profile(width).unwrap(),
        ));
    }
    let mut worst = 0.0_f64;
    for (_, model, f) in &cases {
        let ip = inner_products(model.as_ref(), f, &model.reference()).map_err(|e| e.to_string())?;
        let fs = qfim_single_photon(&ip, photons).map_err(|e| e.to_string())?;
        let fc = qfim_coherent(&ip, photons).map_err(|e| e.to_string())?;
        let m = ip.dim();
        for i in 0..m {
            for j in 0..m {
                let scale = (fc.get(i, i) * fc.get(j, j)).sqrt();
                let d = fc.get(i, j) - fs.get(i, j) - 4.0 * photons * ip.mean[i] * ip.mean[j];
                worst = worst.max(d.abs() / scale);
            }
        }
    }
    let ok = worst <= 1e-9;
    let mut detail = format!("max relative |F^c − F^s − 4N·ggᵀ| = {worst:.2e} over cliff + 3 random tables");
    let ok = timed(Duration::from_secs(5), &mut detail, ok, start);
    verdict(ok, detail)
}

fn saturation() -> Check {
    let start = Instant::now();
    let p = fig2();
    let f = beam(&p, 20.0);
    let one = CliffModel::height_only(p);
    let two = CliffModel::new(p);
    let r1 = saturation_report(&one, &f, &[p.h], Measurement::Gamma).map_err(|e| e.to_string())?;
    let r2 = saturation_report(&two, &f, &[p.h, p.alpha], Measurement::Gamma).map_err(|e| e.to_string())?;
    let ip = inner_products(&one, &f, &[p.h]).map_err(|e| e.to_string())?;
    let check = nonorthogonal_condition_check(&ip, 0, 1e-9);
    let n3 = cliff_integrals(&p, &f, true).map_err(|e| e.to_string())?.n3;
    let ratio = check.ratio.unwrap_or(f64::NAN);
    let ok = r1.max_discrepancy <= 1e-4
        && r2.max_discrepancy <= 1e-4
        && !check.equal
        && (ratio - (2.0 - n3)).abs() <= 1e-6;
    let mut detail = format!(
        "F^C vs F^Q max rel. dev. {:.2e} (Example I), {:.2e} (Example II); projector lhs/rhs = {ratio:.9}, 2−N3 = {:.9}",
        r1.max_discrepancy,
        r2.max_discrepancy,
        2.0 - n3
    );
    let ok = timed(Duration::from_secs(10), &mut detail, ok, start);
    verdict(ok, detail)
}

fn expansions() -> Check {
    let start = Instant::now();
    let p = fig2();
    let f = beam(&p, 20.0);
    let model = CliffModel::new(p);
    let theta0 = [p.h, p.alpha];
    let basis = ModeBasis::build(&model, &f, &theta0).map_err(|e| e.to_string())?;
    let ints = cliff_integrals(&p, &f, true).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    let directions = [("kΔh", 1.0, 0.0), ("h0Δα", 0.0, 1.0), ("diagonal", 0.5f64.sqrt(), 0.5f64.sqrt())];
    for (name, uh, ua) in directions {
        let mut cs = Vec::new();
        for d in [1e-2, 5e-3, 2.5e-3] {
            let delta = [d * uh / p.k, d * ua / p.h];
            let theta = [theta0[0] + delta[0], theta0[1] + delta[1]];
            let numeric = basis.probabilities(&model, &theta).map_err(|e| e.to_string())?;
            let analytic = analytic_probabilities_cliff(&p, &ints, &delta).map_err(|e| e.to_string())?;
            let worst = numeric
                .p
                .iter()
                .zip(&analytic.p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            cs.push(worst / d.powi(3));
        }
        let spread = cs.iter().cloned().fold(0.0, f64::max) / cs.iter().cloned().fold(f64::INFINITY, f64::min);
        let stable = spread <= 1.2;
        ok &= stable;
        parts.push(format!(
            "{name}: C = {} ({})",
            cs.iter().map(|c| format!("{c:.3e}")).collect::<Vec<_>>().join(", "),
            if stable { "stable" } else { "not stable" }
        ));
    }
    let mut sum_dev = 0.0_f64;
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..100 {
        let delta = [rng.random_range(-0.05..0.05) / p.k, rng.random_range(-0.05..0.05) / p.h];
        let a = analytic_probabilities_cliff(&p, &ints, &delta).map_err(|e| e.to_string())?;
        sum_dev = sum_dev.max((a.p.iter().sum::<f64>() - 1.0).abs());
    }
    ok &= sum_dev <= 4.0 * f64::EPSILON;
    let mut detail = format!("{}; analytic |Σp − 1| ≤ {sum_dev:.1e}", parts.join("; "));
    let ok = timed(Duration::from_secs(10), &mut detail, ok, start);
    verdict(ok, detail)
}

fn monte_carlo_efficiency() -> Check {
    let start = Instant::now();
    let p = fig2();
    let f = beam(&p, 20.0);
    let one = CliffModel::height_only(p);
    let two = CliffModel::new(p);
    let r1 = monte_carlo(&one, &f, Some(&one), &MonteCarloSpec::new(vec![0.05 / p.k], 100_000, 400, 24301))
        .map_err(|e| e.to_string())?;
    let r2 = monte_carlo(
        &two,
        &f,
        Some(&two),
        &MonteCarloSpec::new(vec![0.05 / p.k, 1.5 / p.h], 100_000, 400, 24301),
    )
    .map_err(|e| e.to_string())?;
    let e1 = r1.efficiency.clone().ok_or("Example I covariance undefined")?;
    let e2 = r2.efficiency.clone().ok_or("Example II covariance undefined")?;
    let ok = (0.85..=1.15).contains(&e1[0])
        && e2.iter().all(|e| (0.8..=1.25).contains(e))
        && r1.failures.is_empty()
        && r2.failures.is_empty();
    let mut detail = format!(
        "Example I efficiency h = {:.4}; Example II h = {:.4}, α = {:.4}",
        e1[0], e2[0], e2[1]
    );
    let ok = timed(Duration::from_secs(120), &mut detail, ok, start);
    verdict(ok, detail)
}

fn gram_errors(wa: f64) -> Result<(f64, f64), String> {
    let p = fig2();
    let f = beam(&p, wa);
    let model = CliffModel::new(p);
    let theta0 = [p.h, p.alpha];
    let quad = default_quadrature(&model, &f).map_err(|e| e.to_string())?;
    let grid = GridSpec::for_problem(&model, &f).map_err(|e| e.to_string())?;
    let fine = grid.with_points(4 * (grid.points - 1) + 1).map_err(|e| e.to_string())?;
    let coarse = ModeBasis::build_with(&model, &f, &theta0, &grid, &quad).map_err(|e| e.to_string())?;
    let refined = ModeBasis::build_with(&model, &f, &theta0, &fine, &quad).map_err(|e| e.to_string())?;
    Ok((coarse.gram_error(), refined.gram_error()))
}

fn basis_quality() -> Check {
    // At wα = 20 the default grid resolves the modes to rounding level, so the
    // refinement gain is measured where grid error dominates (wα = 100).
    let (c20, f20) = gram_errors(20.0)?;
    let (c100, f100) = gram_errors(100.0)?;
    let ok = c20 <= 1e-8 && c100 <= 1e-8 && f100 * 10.0 <= c100;
    verdict(
        ok,
        format!(
            "Gram error wα=20: {c20:.2e} → {f20:.2e} (4× finer); wα=100: {c100:.2e} → {f100:.2e} (gain {:.0}×)",
            c100 / f100
        ),
    )
}

fn hg_optimality() -> Check {
    let start = Instant::now();
    let w0 = 1.0;
    let mut ok = true;
    let mut parts = Vec::new();
    for ratio in [0.1, 0.5] {
        let coeffs = |t: &[f64]| displaced_gaussian_coefficients(t[0], w0, 60);
        let r = mode_expansion_optimality(&coeffs, &[ratio * w0], &[1e-3 * w0], OptimalityOptions::default())
            .map_err(|e| e.to_string())?;
        ok &= r.max_phase_derivative <= 1e-10 && r.max_discrepancy <= 1e-6;
        parts.push(format!(
            "d/w0={ratio}: max phase derivative {:.1e}, |F^C−F^Q|/F^Q {:.1e}",
            r.max_phase_derivative, r.max_discrepancy
        ));
    }
    let mut detail = parts.join("; ");
    let ok = timed(Duration::from_secs(5), &mut detail, ok, start);
    verdict(ok, detail)
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 sigma_alpha coefficient", sigma_alpha),
        ("2 sqrt2 gap", sqrt2_gap),
        ("3 QFIM identity", qfim_identity),
        ("4 saturation", saturation),
        ("5 probability expansions", expansions),
        ("6 Monte Carlo efficiency", monte_carlo_efficiency),
        ("7 basis quality", basis_quality),
        ("8 HG optimality", hg_optimality),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    let strict = std::env::var("PHASEBOUND_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
