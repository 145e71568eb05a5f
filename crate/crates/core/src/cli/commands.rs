use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ParameterSet, ProblemConfig};
use super::{AxisArg, Outcome, EXIT_NUMERICAL, EXIT_VALIDATION};
use crate::error::{Error, Result};
use crate::estimation::{monte_carlo, MonteCarloSpec, SimulationReport};
use crate::fisher::{
    cliff_integrals, default_quadrature, inner_products_with, precision_bounds_cliff, qfim_coherent,
    qfim_single_photon, CliffIntegrals, FisherResult, InnerProducts, PrecisionBounds, StateFamily,
};
use crate::models::{
    gaussian_profile, load_phase_table, validate_partials, CliffModel, CliffParameters, IlluminationProfile,
    PartialsReport, PhaseModel, ScaledPartial,
};
use crate::modes::{analytic_probabilities_cliff, saturation_report, GridSpec, Measurement, ModeBasis};
use crate::numerics::QuadratureSpec;

/// A configured model with its illumination.
pub struct Problem {
    pub config: ProblemConfig,
    pub cliff: CliffParameters,
    /// `None` when the phase comes from a table.
    pub cliff_model: Option<CliffModel>,
    pub model: Box<dyn PhaseModel>,
    pub profile: IlluminationProfile,
}

impl Problem {
    pub fn new(config: &ProblemConfig) -> Result<Self> {
        let cliff = CliffParameters::from_wavelength(config.wavelength, config.h0, config.alpha0)?;
        let (cliff_model, model, profile): (Option<CliffModel>, Box<dyn PhaseModel>, IlluminationProfile) =
            match &config.phase_table {
                Some(path) => {
                    let table = load_phase_table(path)?;
                    let profile = match table.profile {
                        Some(p) => p,
                        None => gaussian_profile(config.beam_width)?,
                    };
                    (None, Box::new(table.model), profile)
                }
                None => {
                    let m = match config.parameters {
                        ParameterSet::H => CliffModel::height_only(cliff),
                        ParameterSet::HAlpha => CliffModel::new(cliff),
                    };
                    (Some(m), Box::new(m), gaussian_profile(config.beam_width)?)
                }
            };
        if let Some(d) = &config.delta {
            model.check_theta(d)?;
        }
        Ok(Self {
            config: config.clone(),
            cliff,
            cliff_model,
            model,
            profile,
        })
    }

    pub fn quadrature(&self) -> Result<QuadratureSpec> {
        let mut q = default_quadrature(self.model.as_ref(), &self.profile)?;
        let c = &self.config;
        if let Some(h) = c.quad_half_width {
            q = q.with_half_width(h)?;
        }
        if c.quad_rel_tol.is_some() || c.quad_abs_tol.is_some() {
            q = q.with_tolerances(c.quad_abs_tol.unwrap_or(q.abs_tol), c.quad_rel_tol.unwrap_or(q.rel_tol))?;
        }
        if let Some(n) = c.quad_max_subdivisions {
            q.max_subdivisions = n;
        }
        Ok(q)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = GridSpec::for_problem(self.model.as_ref(), &self.profile)?;
        match self.config.grid_points {
            Some(n) => g.with_points(n),
            None => Ok(g),
        }
    }

    pub fn reference(&self) -> Vec<f64> {
        self.model.reference()
    }

    /// Configured offset in model units.
    pub fn delta(&self) -> Vec<f64> {
        match &self.config.delta {
            Some(d) => d.clone(),
            None if self.cliff_model.is_some() => self.config.delta(),
            None => vec![0.0; self.model.dim()],
        }
    }

    pub fn inner_products(&self) -> Result<InnerProducts> {
        inner_products_with(self.model.as_ref(), &self.profile, &self.reference(), &self.quadrature()?)
    }

    pub fn basis(&self) -> Result<ModeBasis> {
        ModeBasis::build_with(
            self.model.as_ref(),
            &self.profile,
            &self.reference(),
            &self.grid()?,
            &self.quadrature()?,
        )
    }

    pub fn dimensionless(&self) -> Dimensionless {
        let w_alpha = self.config.beam_width * self.cliff.alpha;
        Dimensionless {
            kh: self.cliff.kh(),
            w_alpha,
            inverse_square_w_alpha: w_alpha.powi(-2),
            constant_field_valid: w_alpha.powi(-2) < 0.01,
        }
    }

    fn units(&self) -> Vec<String> {
        self.model.parameter_names().iter().map(|n| unit_of(n).to_string()).collect()
    }
}

/// Powers of metres carried by each parameter.
fn metre_power(name: &str) -> i32 {
    match name {
        "h" | "shift" => 1,
        "alpha" => -1,
        _ => 0,
    }
}

fn unit_of(name: &str) -> &'static str {
    power_unit(metre_power(name))
}

fn power_unit(p: i32) -> &'static str {
    match p {
        0 => "1",
        1 => "m",
        2 => "m^2",
        -1 => "1/m",
        -2 => "1/m^2",
        _ => "m^?",
    }
}

/// Scale-free numbers echoed in every report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Dimensionless {
    pub kh: f64,
    pub w_alpha: f64,
    pub inverse_square_w_alpha: f64,
    pub constant_field_valid: bool,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_path(dir.join(name))?)
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Serialize)]
struct FisherSummary {
    family: StateFamily,
    matrix: Vec<Vec<f64>>,
    crb_diagonal: Vec<f64>,
    sigma: Vec<f64>,
    relative_sigma: Vec<Option<f64>>,
}

impl FisherSummary {
    fn new(f: &FisherResult, reference: &[f64]) -> Self {
        let sigma: Vec<f64> = f.crb_diag.iter().map(|v| v.sqrt()).collect();
        Self {
            family: f.family,
            matrix: f.to_rows(),
            crb_diagonal: f.crb_diag.clone(),
            relative_sigma: sigma
                .iter()
                .zip(reference)
                .map(|(s, r)| (*r != 0.0).then(|| s / r.abs()))
                .collect(),
            sigma,
        }
    }
}

#[derive(Debug, Serialize)]
struct CliffSummary {
    integrals: CliffIntegrals,
    bounds_single_photon: Option<PrecisionBounds>,
    bounds_coherent: Option<PrecisionBounds>,
    /// σ_h(single photon)/σ_h(coherent) from the reported bounds.
    sigma_h_ratio: Option<f64>,
    /// Headline σ values: closed forms with `--first-order`, otherwise the
    /// same diagonal bounds recomputed with quadrature integrals.
    relative_sigma_h: Option<f64>,
    relative_sigma_alpha: Option<f64>,
    sigma_h: Option<f64>,
    sigma_alpha: Option<f64>,
}

#[derive(Debug, Serialize)]
struct QfimReport {
    parameters: Vec<String>,
    units: Vec<String>,
    reference: Vec<f64>,
    photons: f64,
    family: StateFamily,
    integrals: &'static str,
    dimensionless: Dimensionless,
    gram: Vec<Vec<f64>>,
    symmetry_integrals: Vec<f64>,
    single_photon: FisherSummary,
    coherent: FisherSummary,
    cliff: Option<CliffSummary>,
    warnings: Vec<String>,
}

pub(crate) fn qfim(config: &ProblemConfig, exact: bool) -> Result<Outcome> {
    let problem = Problem::new(config)?;
    let ip = problem.inner_products()?;
    let n = config.photons;
    let fs = qfim_single_photon(&ip, n)?;
    let fc = qfim_coherent(&ip, n)?;
    let reference = problem.reference();
    let mut warnings = Vec::new();

    let cliff = match &problem.cliff_model {
        Some(_) => {
            let integrals = cliff_integrals(&problem.cliff, &problem.profile, exact)?;
            if let Some(w) = integrals.warning() {
                warnings.push(w);
            }
            let bound = |family| match precision_bounds_cliff(&problem.cliff, &problem.profile, n, family) {
                Ok(b) => Ok(Some(b)),
                Err(Error::RegimeViolation { .. }) if exact => Ok(None),
                Err(e) => Err(e),
            };
            let bs = bound(StateFamily::SinglePhoton)?;
            let bc = bound(StateFamily::Coherent)?;
            if bs.is_none() {
                warnings.push("closed-form bounds omitted: (w*alpha)^-2 is not below 0.01".into());
            }
            let chosen = match config.family {
                StateFamily::SinglePhoton => bs,
                StateFamily::Coherent => bc,
            };
            let pick = |closed: f64, quad: f64| if exact { quad } else { closed };
            let rel_h = chosen.map(|b| pick(b.relative_sigma_h, b.exact_relative_sigma_h));
            let rel_alpha = match config.parameters {
                ParameterSet::HAlpha => chosen.map(|b| pick(b.relative_sigma_alpha, b.exact_relative_sigma_alpha)),
                ParameterSet::H => None,
            };
            let ratio = match (bs, bc) {
                (Some(s), Some(c)) if exact => Some(s.exact_relative_sigma_h / c.exact_relative_sigma_h),
                (Some(s), Some(c)) => Some(s.relative_sigma_h / c.relative_sigma_h),
                _ => None,
            };
            Some(CliffSummary {
                integrals,
                bounds_single_photon: bs,
                bounds_coherent: bc,
                sigma_h_ratio: ratio,
                relative_sigma_h: rel_h,
                relative_sigma_alpha: rel_alpha,
                sigma_h: rel_h.map(|r| r * problem.cliff.h),
                sigma_alpha: rel_alpha.map(|r| r * problem.cliff.alpha),
            })
        }
        None => None,
    };

    let report = QfimReport {
        parameters: problem.model.parameter_names(),
        units: problem.units(),
        reference: reference.clone(),
        photons: n,
        family: config.family,
        integrals: if exact { "exact" } else { "first_order" },
        dimensionless: problem.dimensionless(),
        gram: (0..ip.dim()).map(|i| (0..ip.dim()).map(|j| ip.gram[(i, j)]).collect()).collect(),
        symmetry_integrals: ip.mean.clone(),
        single_photon: FisherSummary::new(&fs, &reference),
        coherent: FisherSummary::new(&fc, &reference),
        cliff,
        warnings,
    };
    write_json(&config.output_dir, "qfim.json", &report)?;

    // long-format table: one row per quantity
    let names = problem.model.parameter_names();
    let mut w = csv_writer(&config.output_dir, "qfim.csv")?;
    w.write_record(["quantity", "family", "i", "j", "value", "unit"])?;
    for summary in [&report.single_photon, &report.coherent] {
        let fam = summary.family.as_str();
        for (i, ni) in names.iter().enumerate() {
            for (j, nj) in names.iter().enumerate() {
                let unit = power_unit(-(metre_power(ni) + metre_power(nj)));
                w.write_record(["F", fam, ni, nj, &fmt(summary.matrix[i][j]), unit])?;
            }
            let unit2 = power_unit(2 * metre_power(ni));
            w.write_record(["crb", fam, ni, ni, &fmt(summary.crb_diagonal[i]), unit2])?;
            w.write_record(["sigma", fam, ni, ni, &fmt(summary.sigma[i]), unit_of(ni)])?;
        }
    }
    for (i, ni) in names.iter().enumerate() {
        w.write_record(["g", "", ni, "", &fmt(ip.mean[i]), power_unit(-metre_power(ni))])?;
    }
    let d = report.dimensionless;
    w.write_record(["kh", "", "", "", &fmt(d.kh), "1"])?;
    w.write_record(["w_alpha", "", "", "", &fmt(d.w_alpha), "1"])?;
    w.write_record(["inverse_square_w_alpha", "", "", "", &fmt(d.inverse_square_w_alpha), "1"])?;
    if let Some(c) = &report.cliff {
        let n = &c.integrals;
        for (name, v) in [("N1", n.n1), ("N2", n.n2), ("N3", n.n3), ("N4", n.n4), ("N5", n.n5), ("N6", n.n6)] {
            w.write_record([name, "", "", "", &fmt(v), "1"])?;
        }
        let fam = config.family.as_str();
        if let Some(v) = c.sigma_h {
            w.write_record(["sigma_h_bound", fam, "h", "h", &fmt(v), "m"])?;
        }
        if let Some(v) = c.sigma_alpha {
            w.write_record(["sigma_alpha_bound", fam, "alpha", "alpha", &fmt(v), "1/m"])?;
        }
    }
    w.flush()?;

    println!("parameters: {}", names.join(", "));
    println!("kh = {:.6}  w*alpha = {:.6}  (w*alpha)^-2 = {:.3e}", d.kh, d.w_alpha, d.inverse_square_w_alpha);
    for s in [&report.single_photon, &report.coherent] {
        println!("{}:", s.family.as_str());
        for (i, row) in s.matrix.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
            println!("  F[{}] = {}   sigma = {:.6e} {}", names[i], cells.join(" "), s.sigma[i], unit_of(&names[i]));
        }
    }
    if let Some(c) = &report.cliff {
        if let Some(r) = c.sigma_h_ratio {
            println!("sigma_h single/coherent = {r:.9}");
        }
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(Outcome::ok())
}

#[derive(Debug, Serialize)]
struct ModesManifest {
    parameters: Vec<String>,
    reference: Vec<f64>,
    dimensionless: Dimensionless,
    length_scale_m: f64,
    y_max: f64,
    points: usize,
    files: Vec<String>,
    normalized_det: f64,
    gram_error: f64,
    transform: Vec<Vec<f64>>,
    /// Cliff only: `N3` and the far-field limit `1/√(1−N3)` of `|g₁|`.
    n3: Option<f64>,
    g1_limit: Option<f64>,
}

pub(crate) fn modes(config: &ProblemConfig) -> Result<Outcome> {
    let problem = Problem::new(config)?;
    let basis = problem.basis()?;
    fs::create_dir_all(&config.output_dir)?;
    let mut files = Vec::new();
    for k in 0..=basis.dim() {
        let name = format!("mode_{k}.csv");
        basis.write_mode_csv(
            problem.model.as_ref(),
            k,
            config.mode_y_max,
            config.mode_points,
            &config.output_dir.join(&name),
        )?;
        files.push(name);
    }
    let n3 = match &problem.cliff_model {
        Some(_) => Some(cliff_integrals(&problem.cliff, &problem.profile, true)?.n3),
        None => None,
    };
    let t = basis.transform();
    let manifest = ModesManifest {
        parameters: problem.model.parameter_names(),
        reference: problem.reference(),
        dimensionless: problem.dimensionless(),
        length_scale_m: basis.length_scale(),
        y_max: config.mode_y_max,
        points: config.mode_points,
        files: files.clone(),
        normalized_det: basis.normalized_det(),
        gram_error: basis.gram_error(),
        transform: (0..t.nrows()).map(|i| (0..t.ncols()).map(|j| t[(i, j)]).collect()).collect(),
        n3,
        g1_limit: n3.map(|n| 1.0 / (1.0 - n).sqrt()),
    };
    write_json(&config.output_dir, "modes.json", &manifest)?;
    println!("wrote {} in {}", files.join(", "), config.output_dir.display());
    println!("gram error {:.3e}, normalised det(Omega) {:.6}", manifest.gram_error, manifest.normalized_det);
    Ok(Outcome::ok())
}

pub(crate) fn probs(config: &ProblemConfig) -> Result<Outcome> {
    let problem = Problem::new(config)?;
    let basis = problem.basis()?;
    let delta = problem.delta();
    let theta: Vec<f64> = problem.reference().iter().zip(&delta).map(|(a, b)| a + b).collect();
    let numeric = basis.probabilities_for(config.measurement, problem.model.as_ref(), &theta)?;
    let analytic = match (&problem.cliff_model, config.measurement) {
        (Some(_), Measurement::Gamma) => {
            let n = cliff_integrals(&problem.cliff, &problem.profile, true)?;
            Some(analytic_probabilities_cliff(&problem.cliff, &n, &delta))
        }
        _ => None,
    };
    let mut w = csv_writer(&config.output_dir, "probs.csv")?;
    w.write_record(["outcome", "p_numeric [1]", "p_analytic [1]"])?;
    let analytic_values = match &analytic {
        Some(Ok(p)) => Some(p.clone()),
        _ => None,
    };
    for k in 0..numeric.len() {
        let a = analytic_values.as_ref().map(|p| fmt(p.p[k])).unwrap_or_default();
        w.write_record([k.to_string(), fmt(numeric.p[k]), a])?;
        println!("p{k} = {:.12e}", numeric.p[k]);
    }
    let a = analytic_values.as_ref().map(|p| fmt(p.residual)).unwrap_or_default();
    w.write_record(["unobserved".to_string(), fmt(numeric.residual), a])?;
    w.flush()?;
    if let Some(Err(e)) = analytic {
        println!("analytic probabilities unavailable: {e}");
    }
    Ok(Outcome::ok())
}

#[derive(Debug, Serialize)]
struct SimulateOutput<'a> {
    dimensionless: Dimensionless,
    efficiency_band: [f64; 2],
    covariance_defined: bool,
    within_band: Option<bool>,
    report: &'a SimulationReport,
}

pub(crate) fn simulate(config: &ProblemConfig) -> Result<Outcome> {
    let problem = Problem::new(config)?;
    let n = config.photons;
    if !(n >= 1.0 && n.fract() == 0.0 && n <= u64::MAX as f64) {
        return Err(Error::Config(format!("photons must be a whole number for simulate, got {n}")));
    }
    let mut spec = MonteCarloSpec::new(problem.delta(), n as u64, config.trials, config.seed);
    spec.measurement = config.measurement;
    let report = monte_carlo(problem.model.as_ref(), &problem.profile, problem.cliff_model.as_ref(), &spec)?;

    let band = config.efficiency_band;
    let within = report
        .efficiency
        .as_ref()
        .map(|e| e.iter().all(|v| *v >= band[0] && *v <= band[1]));
    let out = SimulateOutput {
        dimensionless: problem.dimensionless(),
        efficiency_band: band,
        covariance_defined: report.covariance_defined(),
        within_band: within,
        report: &report,
    };
    write_json(&config.output_dir, "simulate.json", &out)?;

    let names = problem.model.parameter_names();
    let mut w = csv_writer(&config.output_dir, "trials.csv")?;
    let mut header = vec!["trial".to_string(), "seed".to_string()];
    header.extend(names.iter().map(|n| format!("delta_{n} [{}]", unit_of(n))));
    header.push("error".into());
    w.write_record(&header)?;
    let mut ok = report.estimates.iter();
    for (t, seed) in report.trial_seeds.iter().enumerate() {
        let mut row = vec![t.to_string(), seed.to_string()];
        match report.failures.iter().find(|f| f.trial == t) {
            Some(f) => {
                row.extend(names.iter().map(|_| String::new()));
                row.push(f.error.clone());
            }
            None => {
                let e = ok.next().expect("one estimate per successful trial");
                row.extend(e.iter().map(|v| fmt(*v)));
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    println!(
        "{} trials, {} failed, probabilities: {:?}",
        report.trials,
        report.failures.len(),
        report.probability_path
    );
    match &report.efficiency {
        Some(e) => {
            for (name, v) in names.iter().zip(e) {
                println!("efficiency[{name}] = {v:.4}");
            }
        }
        None => println!("covariance undefined with fewer than two successful trials"),
    }
    Ok(match within {
        None => Outcome::failed(
            EXIT_NUMERICAL,
            "UndefinedCovariance",
            "sample covariance is undefined with fewer than two successful trials".into(),
        ),
        Some(false) => Outcome::failed(
            EXIT_VALIDATION,
            "EfficiencyOutOfBand",
            format!("efficiency {:?} outside [{}, {}]", report.efficiency, band[0], band[1]),
        ),
        Some(true) => Outcome::ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    BeamWidth,
    Alpha,
    Photons,
    DeltaH,
    DeltaAlpha,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::W => Self::BeamWidth,
            AxisArg::Alpha => Self::Alpha,
            AxisArg::N => Self::Photons,
            AxisArg::Dh => Self::DeltaH,
            AxisArg::Dalpha => Self::DeltaAlpha,
        }
    }
}

impl SweepAxis {
    fn header(&self) -> &'static str {
        match self {
            Self::BeamWidth => "w [m]",
            Self::Alpha => "alpha [1/m]",
            Self::Photons => "N [photons]",
            Self::DeltaH => "delta_h [m]",
            Self::DeltaAlpha => "delta_alpha [1/m]",
        }
    }

    fn file(&self) -> &'static str {
        match self {
            Self::BeamWidth => "sweep_w.csv",
            Self::Alpha => "sweep_alpha.csv",
            Self::Photons => "sweep_N.csv",
            Self::DeltaH => "sweep_dh.csv",
            Self::DeltaAlpha => "sweep_dalpha.csv",
        }
    }

    fn is_offset(&self) -> bool {
        matches!(self, Self::DeltaH | Self::DeltaAlpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub log: bool,
}

impl SweepRange {
    pub fn new(from: f64, to: f64, points: usize, log: bool) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config(format!("sweep needs at least 2 points, got {points}")));
        }
        if !(from.is_finite() && to.is_finite()) || from == to {
            return Err(Error::Config("sweep range must be finite with from != to".into()));
        }
        if log && !(from > 0.0 && to > 0.0) {
            return Err(Error::Config("logarithmic sweep needs positive endpoints".into()));
        }
        Ok(Self { from, to, points, log })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                if i == n {
                    self.to
                } else if self.log {
                    (self.from.ln() + t * (self.to.ln() - self.from.ln())).exp()
                } else {
                    self.from + t * (self.to - self.from)
                }
            })
            .collect()
    }
}

fn fisher_cells(problem: &Problem, exact: bool) -> Result<Vec<String>> {
    let config = &problem.config;
    let ip = problem.inner_products()?;
    let fs = qfim_single_photon(&ip, config.photons)?;
    let fc = qfim_coherent(&ip, config.photons)?;
    let m = ip.dim();
    let mut cells = Vec::new();
    for f in [&fs, &fc] {
        for i in 0..m {
            for j in i..m {
                cells.push(fmt(f.get(i, j)));
            }
        }
        cells.extend(f.crb_diag.iter().map(|v| fmt(v.sqrt())));
    }
    if problem.cliff_model.is_some() {
        let family = config.family;
        match precision_bounds_cliff(&problem.cliff, &problem.profile, config.photons, family) {
            Ok(b) => {
                let (h, a) = if exact {
                    (b.exact_relative_sigma_h, b.exact_relative_sigma_alpha)
                } else {
                    (b.relative_sigma_h, b.relative_sigma_alpha)
                };
                cells.push(fmt(h * problem.cliff.h));
                cells.push(fmt(a * problem.cliff.alpha));
            }
            Err(Error::RegimeViolation { .. }) => cells.extend([String::new(), String::new()]),
            Err(e) => return Err(e),
        }
    }
    Ok(cells)
}

pub(crate) fn sweep(config: &ProblemConfig, axis: SweepAxis, range: &SweepRange, exact: bool) -> Result<Outcome> {
    let base = Problem::new(config)?;
    let names = base.model.parameter_names();
    let m = names.len();
    if axis == SweepAxis::DeltaAlpha && !names.iter().any(|n| n == "alpha") {
        return Err(Error::Config("sweep over dalpha needs parameters = \"h_alpha\"".into()));
    }
    if base.cliff_model.is_none() && axis != SweepAxis::Photons && axis != SweepAxis::BeamWidth {
        return Err(Error::Config("tabulated models can only be swept over w or N".into()));
    }

    let mut header = vec![axis.header().to_string(), "kh [1]".into(), "w*alpha [1]".into(), "(w*alpha)^-2 [1]".into()];
    let basis = if axis.is_offset() {
        for k in 0..=m {
            header.push(format!("p{k}_numeric [1]"));
        }
        for k in 0..=m {
            header.push(format!("p{k}_analytic [1]"));
        }
        Some(base.basis()?)
    } else {
        for fam in ["single_photon", "coherent"] {
            for i in 0..m {
                for j in i..m {
                    let unit = power_unit(-(metre_power(&names[i]) + metre_power(&names[j])));
                    header.push(format!("F_{}_{}{} [{unit}]", fam, names[i], names[j]));
                }
            }
            for n in &names {
                header.push(format!("crb_sigma_{fam}_{n} [{}]", unit_of(n)));
            }
        }
        if base.cliff_model.is_some() {
            let mode = if exact { "exact" } else { "first_order" };
            header.push(format!("sigma_h_{mode} [m]"));
            header.push(format!("sigma_alpha_{mode} [1/m]"));
        }
        None
    };
    header.push("error".into());

    let integrals = match (&base.cliff_model, axis.is_offset()) {
        (Some(_), true) => Some(cliff_integrals(&base.cliff, &base.profile, true)?),
        _ => None,
    };

    let values = range.values();
    let rows: Vec<Vec<String>> = values
        .par_iter()
        .map(|&v| {
            let mut c = config.clone();
            match axis {
                SweepAxis::BeamWidth => c.beam_width = v,
                SweepAxis::Alpha => {
                    c.alpha0 = v;
                    c.beta0 = (v * c.h0 / 2.0).atan();
                }
                SweepAxis::Photons => c.photons = v,
                SweepAxis::DeltaH => {
                    c.delta_h = v;
                    c.delta = None;
                }
                SweepAxis::DeltaAlpha => {
                    c.delta_alpha = v;
                    c.delta = None;
                }
            }
            let point = || -> Result<(Dimensionless, Vec<String>)> {
                let problem = Problem::new(&c)?;
                let cells = match &basis {
                    None => fisher_cells(&problem, exact)?,
                    Some(b) => {
                        let delta = problem.delta();
                        let theta: Vec<f64> = problem.reference().iter().zip(&delta).map(|(a, d)| a + d).collect();
                        let p = b.probabilities(problem.model.as_ref(), &theta)?;
                        let mut cells: Vec<String> = p.p.iter().map(|v| fmt(*v)).collect();
                        match integrals.as_ref().map(|n| analytic_probabilities_cliff(&problem.cliff, n, &delta)) {
                            Some(Ok(a)) => cells.extend(a.p.iter().map(|v| fmt(*v))),
                            _ => cells.extend((0..=m).map(|_| String::new())),
                        }
                        cells
                    }
                };
                Ok((problem.dimensionless(), cells))
            };
            let mut row = vec![fmt(v)];
            match point() {
                Ok((d, cells)) => {
                    row.extend([fmt(d.kh), fmt(d.w_alpha), fmt(d.inverse_square_w_alpha)]);
                    row.extend(cells);
                    row.push(String::new());
                }
                Err(e) => {
                    row.resize(header.len() - 1, String::new());
                    row.push(e.to_string());
                }
            }
            row
        })
        .collect();

    let mut w = csv_writer(&config.output_dir, axis.file())?;
    w.write_record(&header)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    let failed = rows.iter().filter(|r| !r.last().map_or(true, |e| e.is_empty())).count();
    println!(
        "wrote {} points to {} ({failed} failed)",
        rows.len(),
        config.output_dir.join(axis.file()).display()
    );
    Ok(Outcome::ok())
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    /// `None` when the check does not apply to this problem.
    passed: Option<bool>,
    detail: String,
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    parameters: Vec<String>,
    dimensionless: Dimensionless,
    passed: bool,
    checks: Vec<Check>,
    partials: Option<PartialsReport>,
}

fn check(name: &'static str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((passed, detail)) => Check {
            name,
            passed: Some(passed),
            detail,
        },
        Err(e) => Check {
            name,
            passed: Some(false),
            detail: e.to_string(),
        },
    }
}

fn skipped(name: &'static str, why: &str) -> Check {
    Check {
        name,
        passed: None,
        detail: why.into(),
    }
}

pub(crate) fn validate(config: &ProblemConfig) -> Result<Outcome> {
    let problem = Problem::new(config)?;
    let model = problem.model.as_ref();
    let theta0 = problem.reference();
    let mut checks = Vec::new();

    let partials = match config.corrupt_partials {
        Some(factor) => validate_partials(
            &ScaledPartial {
                inner: Problem::new(config)?.model,
                parameter: 0,
                factor,
            },
            256,
            config.seed,
            1e-5,
        ),
        None => validate_partials(model, 256, config.seed, 1e-5),
    };
    checks.push(check(
        "partial_derivatives",
        partials.as_ref().map(|r| {
            let worst = r.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
            (r.passes, format!("max relative deviation {worst:.3e} against tolerance {:.0e}", r.tolerance))
        }).map_err(Clone::clone),
    ));

    let ip = problem.inner_products();
    checks.push(check(
        "qfim_psd",
        ip.clone().and_then(|ip| {
            qfim_single_photon(&ip, config.photons)?;
            qfim_coherent(&ip, config.photons)?;
            Ok((true, "both families positive semidefinite".into()))
        }),
    ));
    checks.push(check(
        "qfim_family_identity",
        ip.clone().and_then(|ip| {
            let n = config.photons;
            let fs = qfim_single_photon(&ip, n)?;
            let fc = qfim_coherent(&ip, n)?;
            let mut worst = 0.0_f64;
            for i in 0..ip.dim() {
                for j in 0..ip.dim() {
                    let expect = fs.get(i, j) + 4.0 * n * ip.mean[i] * ip.mean[j];
                    let scale = (fc.get(i, i) * fc.get(j, j)).sqrt();
                    worst = worst.max((fc.get(i, j) - expect).abs() / scale);
                }
            }
            Ok((worst <= 1e-9, format!("max relative deviation {worst:.3e}")))
        }),
    ));

    let basis = problem.basis();
    checks.push(check(
        "mode_orthonormality",
        basis.as_ref().map(|b| {
            let e = b.gram_error();
            (e <= 1e-8, format!("max |Gram - I| = {e:.3e}"))
        }).map_err(Clone::clone),
    ));
    checks.push(check(
        "saturation",
        saturation_report(model, &problem.profile, &theta0, Measurement::Gamma)
            .map(|r| (r.passes, format!("max |F^Q - F^C| relative {:.3e}", r.max_discrepancy))),
    ));

    match &problem.cliff_model {
        Some(_) => {
            let integrals = cliff_integrals(&problem.cliff, &problem.profile, true);
            checks.push(check(
                "constant_field_regime",
                integrals.as_ref().map(|n| {
                    (n.valid, format!("(w*alpha)^-2 = {:.3e}; closed forms need < 0.01", n.w_alpha.powi(-2)))
                }).map_err(Clone::clone),
            ));
            checks.push(check(
                "first_order_integrals",
                integrals.as_ref().map(|n| {
                    let err = n.first_order_relative_error();
                    let worst = err.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    // leading corrections are -(π²/2, 2.32, π²/6)·(wα)⁻² for N1..N3
                    let allowed = std::f64::consts::PI.powi(2) * n.w_alpha.powi(-2);
                    (
                        worst <= allowed,
                        format!("max relative error of N1..N3 {worst:.3e}, allowed pi^2 (w*alpha)^-2 = {allowed:.3e}"),
                    )
                }).map_err(Clone::clone),
            ));
            let k = problem.cliff.k;
            let small: Vec<f64> = match config.parameters {
                ParameterSet::H => vec![1e-3 / k],
                ParameterSet::HAlpha => vec![1e-3 / k, 1e-3 / problem.cliff.h],
            };
            checks.push(check(
                "probability_sum_rule",
                integrals.clone().and_then(|n| {
                    let p = analytic_probabilities_cliff(&problem.cliff, &n, &small)?;
                    let s: f64 = p.p.iter().sum();
                    let numeric = basis.as_ref().map_err(Clone::clone)?.probabilities(
                        model,
                        &theta0.iter().zip(&small).map(|(a, b)| a + b).collect::<Vec<_>>(),
                    )?;
                    let ns: f64 = numeric.p.iter().sum();
                    Ok((
                        (s - 1.0).abs() <= 1e-12 && ns <= 1.0 + 1e-9,
                        format!("analytic sum - 1 = {:.3e}; numeric sum {ns:.12}", s - 1.0),
                    ))
                }),
            ));
        }
        None => {
            for name in ["constant_field_regime", "first_order_integrals", "probability_sum_rule"] {
                checks.push(skipped(name, "cliff model only"));
            }
        }
    }

    let passed = checks.iter().all(|c| c.passed != Some(false));
    let report = ValidateReport {
        parameters: problem.model.parameter_names(),
        dimensionless: problem.dimensionless(),
        passed,
        checks,
        partials: partials.ok(),
    };
    write_json(&config.output_dir, "validate.json", &report)?;
    for c in &report.checks {
        let status = match c.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("{status} {:<24} {}", c.name, c.detail);
    }
    Ok(if passed {
        Outcome::ok()
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| c.passed == Some(false)).map(|c| c.name).collect();
        Outcome::failed(EXIT_VALIDATION, "ValidationFailed", format!("failed checks: {}", failed.join(", ")))
    })
}
