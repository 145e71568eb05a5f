use std::path::Path;

use num_complex::Complex64;

use super::profile::{IlluminationProfile, TabulatedProfile};
use super::spline::CubicSpline;
use super::PhaseModel;
use crate::error::{Error, Result};

/// Phase `φ(x; s, x₀) = s·ψ(x − x₀)` built from samples of `ψ`.
///
/// `ψ` is a natural cubic spline of the samples, held constant beyond the
/// table. The parameters are an amplitude scale `s` (reference 1) and a
/// lateral shift `x₀` (reference 0, metres).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedModel {
    psi: CubicSpline,
}

impl TabulatedModel {
    pub fn new(x: &[f64], phase: &[f64]) -> Result<Self> {
        Ok(Self {
            psi: CubicSpline::new(x, phase)?,
        })
    }

    pub fn from_fn(x: &[f64], phase: impl Fn(f64) -> f64) -> Result<Self> {
        let y: Vec<f64> = x.iter().map(|&t| phase(t)).collect();
        Self::new(x, &y)
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.psi.x_min(), self.psi.x_max())
    }
}

impl PhaseModel for TabulatedModel {
    fn parameter_names(&self) -> Vec<String> {
        vec!["scale".into(), "shift".into()]
    }

    fn reference(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }

    fn phase(&self, x: f64, theta: &[f64]) -> f64 {
        theta[0] * self.psi.eval(x - theta[1])
    }

    fn partial(&self, i: usize, x: f64, theta: &[f64]) -> f64 {
        match i {
            0 => self.psi.eval(x - theta[1]),
            1 => -theta[0] * self.psi.derivative(x - theta[1]),
            _ => panic!("tabulated model has no parameter {i}"),
        }
    }

    fn parameter_scales(&self) -> Vec<f64> {
        vec![1.0, self.length_scale()]
    }

    /// Mean knot spacing; the finest feature the table can represent.
    fn length_scale(&self) -> f64 {
        let (lo, hi) = self.x_range();
        (hi - lo) / (self.psi.knots().len() - 1) as f64
    }

    fn feature_half_width(&self) -> f64 {
        let (lo, hi) = self.x_range();
        lo.abs().max(hi.abs())
    }
}

/// Contents of a phase table file.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub model: TabulatedModel,
    /// Present for four-column files (x, Re f, Im f, phase).
    pub profile: Option<IlluminationProfile>,
}

/// Read a phase table from CSV.
///
/// Two columns are `x_meters, phase_radians`; four are
/// `x_meters, re_f, im_f, phase_radians`. A header row is required.
pub fn load_phase_table(path: &Path) -> Result<PhaseTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidTable(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::InvalidTable(format!(
            "{}: header row required",
            path.display()
        )));
    }
    let width = headers.len();
    if width != 2 && width != 4 {
        return Err(Error::InvalidTable(format!(
            "{}: expected 2 or 4 columns, found {width}",
            path.display()
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::InvalidTable(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                row + 2,
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidTable(format!(
                    "{}: row {} column {}: '{field}' is not a number",
                    path.display(),
                    row + 2,
                    col + 1
                ))
            })?;
            columns[col].push(v);
        }
    }

    let x = &columns[0];
    let phase = &columns[width - 1];
    let model = TabulatedModel::new(x, phase)?;
    let profile = if width == 4 {
        let amp: Vec<Complex64> = columns[1]
            .iter()
            .zip(&columns[2])
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        Some(IlluminationProfile::Tabulated(TabulatedProfile::new(x, &amp)?))
    } else {
        None
    };
    Ok(PhaseTable { model, profile })
}
