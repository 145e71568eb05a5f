//! Flat key-value problem configuration.
//!
//! ```toml
//! wavelength = 633e-9      # m
//! h0 = 1.5825e-7           # m
//! beta0_deg = 80.0         # or alpha0 (1/m), not both
//! beam_width = 2.1e-6      # m
//! photons = 1e5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Spanned, Value};

use crate::error::{Error, Result};
use crate::fisher::StateFamily;
use crate::modes::Measurement;

/// Which cliff parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSet {
    H,
    HAlpha,
}

impl ParameterSet {
    pub fn dim(&self) -> usize {
        match self {
            ParameterSet::H => 1,
            ParameterSet::HAlpha => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    /// m
    pub wavelength: f64,
    /// m
    pub h0: f64,
    /// rad
    pub beta0: f64,
    /// 1/m
    pub alpha0: f64,
    /// m
    pub beam_width: f64,
    pub photons: f64,
    pub family: StateFamily,
    pub parameters: ParameterSet,
    pub measurement: Measurement,
    /// m
    pub delta_h: f64,
    /// 1/m
    pub delta_alpha: f64,
    /// Offset in model units; overrides `delta_h`/`delta_alpha` and is the
    /// only way to offset a tabulated model.
    pub delta: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    /// m
    pub quad_half_width: Option<f64>,
    pub quad_rel_tol: Option<f64>,
    pub quad_abs_tol: Option<f64>,
    pub quad_max_subdivisions: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub efficiency_band: [f64; 2],
    pub phase_table: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Multiplies the first analytic partial; a negative control for `validate`.
    pub corrupt_partials: Option<f64>,
    pub mode_y_max: f64,
    pub mode_points: usize,
}

const KEYS: &[&str] = &[
    "wavelength",
    "h0",
    "beta0_deg",
    "alpha0",
    "beam_width",
    "photons",
    "family",
    "parameters",
    "measurement",
    "delta_h",
    "delta_alpha",
    "delta",
    "grid_points",
    "quad_half_width",
    "quad_rel_tol",
    "quad_abs_tol",
    "quad_max_subdivisions",
    "trials",
    "seed",
    "efficiency_band",
    "phase_table",
    "output_dir",
    "corrupt_partials",
    "mode_y_max",
    "mode_points",
];

/// Where a value came from, for error messages.
#[derive(Debug, Clone)]
enum Origin {
    Line(String, usize),
    Override,
}

struct Entry {
    value: Value,
    origin: Origin,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn located(origin: &Origin, key: &str, msg: impl std::fmt::Display) -> Error {
    match origin {
        Origin::Line(file, line) => Error::Config(format!("{file}:{line}: `{key}`: {msg}")),
        Origin::Override => Error::Config(format!("--set {key}: {msg}")),
    }
}

struct Entries {
    map: BTreeMap<String, Entry>,
    source: String,
}

impl Entries {
    fn parse(text: &str, source: &str) -> Result<Self> {
        let raw: BTreeMap<Spanned<String>, Spanned<Value>> = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
            Error::Config(format!("{source}:{line}: {}", e.message().trim()))
        })?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let line = line_of(text, k.span().start);
            let key = k.into_inner();
            let origin = Origin::Line(source.to_string(), line);
            if !KEYS.contains(&key.as_str()) {
                return Err(located(&origin, &key, "unknown key"));
            }
            if matches!(v.get_ref(), Value::Table(_)) {
                return Err(located(&origin, &key, "tables are not allowed in a flat config"));
            }
            map.insert(
                key,
                Entry {
                    value: v.into_inner(),
                    origin,
                },
            );
        }
        Ok(Self {
            map,
            source: source.to_string(),
        })
    }

    /// Apply `key=value`; the value is read as TOML, falling back to a bare string.
    fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {assignment}: expected key=value")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(located(&Origin::Override, key, "unknown key"));
        }
        let raw = raw.trim();
        let value = toml::from_str::<BTreeMap<String, Value>>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut m| m.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.map.insert(
            key.to_string(),
            Entry {
                value,
                origin: Origin::Override,
            },
        );
        Ok(())
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("{}: missing required key `{key}`", self.source))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(e) => match &e.value {
                Value::Float(v) => Ok(Some(*v)),
                Value::Integer(v) => Ok(Some(*v as f64)),
                other => Err(located(&e.origin, key, format!("expected a number, got {}", other.type_str()))),
            },
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.f64(key)? {
            Some(v) if !(v.is_finite() && v > 0.0) => {
                Err(located(&self.map[key].origin, key, format!("must be positive and finite, got {v}")))
            }
            v => Ok(v),
        }
    }

    fn required_positive(&self, key: &str) -> Result<f64> {
        self.positive(key)?.ok_or_else(|| self.missing(key))
    }

    fn finite(&self, key: &str) -> Result<Option<f64>> {
        match self.f64(key)? {
            Some(v) if !v.is_finite() => Err(located(&self.map[key].origin, key, "must be finite")),
            v => Ok(v),
        }
    }

    fn integer(&self, key: &str, min: i64) -> Result<Option<i64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(e) => match &e.value {
                Value::Integer(v) if *v >= min => Ok(Some(*v)),
                Value::Integer(v) => Err(located(&e.origin, key, format!("must be at least {min}, got {v}"))),
                other => Err(located(&e.origin, key, format!("expected an integer, got {}", other.type_str()))),
            },
        }
    }

    fn string(&self, key: &str) -> Result<Option<(String, Origin)>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(e) => match &e.value {
                Value::String(s) => Ok(Some((s.clone(), e.origin.clone()))),
                other => Err(located(&e.origin, key, format!("expected a string, got {}", other.type_str()))),
            },
        }
    }

    fn origin(&self, key: &str) -> Origin {
        self.map
            .get(key)
            .map(|e| e.origin.clone())
            .unwrap_or(Origin::Line(self.source.clone(), 1))
    }
}

impl ProblemConfig {
    /// Parse config text. Relative `phase_table` and `output_dir` paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, source: &str, base_dir: &Path, overrides: &[String]) -> Result<Self> {
        let mut e = Entries::parse(text, source)?;
        for o in overrides {
            e.set(o)?;
        }

        let wavelength = e.required_positive("wavelength")?;
        let h0 = e.required_positive("h0")?;
        let beam_width = e.required_positive("beam_width")?;
        let photons = e.required_positive("photons")?;
        let (beta0, alpha0) = match (e.positive("beta0_deg")?, e.positive("alpha0")?) {
            (Some(_), Some(_)) => {
                return Err(located(&e.origin("alpha0"), "alpha0", "give exactly one of beta0_deg and alpha0"))
            }
            (None, None) => return Err(Error::Config(format!("{source}: one of `beta0_deg` or `alpha0` is required"))),
            (Some(deg), None) => {
                if deg >= 90.0 {
                    return Err(located(&e.origin("beta0_deg"), "beta0_deg", "must be below 90 degrees"));
                }
                let b = deg.to_radians();
                (b, 2.0 * b.tan() / h0)
            }
            (None, Some(a)) => ((a * h0 / 2.0).atan(), a),
        };

        let family = match e.string("family")? {
            None => StateFamily::SinglePhoton,
            Some((s, origin)) => s.parse().map_err(|_| {
                located(&origin, "family", format!("expected `single_photon` or `coherent`, got `{s}`"))
            })?,
        };
        let parameters = match e.string("parameters")? {
            None => ParameterSet::HAlpha,
            Some((s, origin)) => match s.as_str() {
                "h" => ParameterSet::H,
                "h_alpha" => ParameterSet::HAlpha,
                _ => return Err(located(&origin, "parameters", format!("expected `h` or `h_alpha`, got `{s}`"))),
            },
        };
        let measurement = match e.string("measurement")? {
            None => Measurement::Gamma,
            Some((s, origin)) => match s.as_str() {
                "gamma" => Measurement::Gamma,
                "derivative_projector" => Measurement::DerivativeProjector,
                _ => {
                    return Err(located(
                        &origin,
                        "measurement",
                        format!("expected `gamma` or `derivative_projector`, got `{s}`"),
                    ))
                }
            },
        };

        let efficiency_band = match e.map.get("efficiency_band") {
            None => match parameters {
                ParameterSet::H => [0.85, 1.15],
                ParameterSet::HAlpha => [0.8, 1.25],
            },
            Some(entry) => {
                let bad = || located(&entry.origin, "efficiency_band", "expected [low, high] with 0 < low < high");
                let arr = entry.value.as_array().ok_or_else(bad)?;
                let nums: Vec<f64> = arr
                    .iter()
                    .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?;
                if nums.len() != 2 || !(0.0 < nums[0] && nums[0] < nums[1] && nums[1].is_finite()) {
                    return Err(bad());
                }
                [nums[0], nums[1]]
            }
        };

        let delta = match e.map.get("delta") {
            None => None,
            Some(entry) => {
                let bad = || located(&entry.origin, "delta", "expected an array of finite numbers");
                let arr = entry.value.as_array().ok_or_else(bad)?;
                let nums: Vec<f64> = arr
                    .iter()
                    .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .collect::<Option<_>>()
                    .ok_or_else(bad)?;
                if nums.is_empty() || nums.iter().any(|v| !v.is_finite()) {
                    return Err(bad());
                }
                Some(nums)
            }
        };

        let path = |key: &str| -> Result<Option<PathBuf>> {
            Ok(e.string(key)?.map(|(s, _)| {
                let p = PathBuf::from(s);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            }))
        };

        let seed = match e.integer("seed", 0)? {
            Some(v) => v as u64,
            None => 0,
        };

        Ok(Self {
            wavelength,
            h0,
            beta0,
            alpha0,
            beam_width,
            photons,
            family,
            parameters,
            measurement,
            delta_h: e.finite("delta_h")?.unwrap_or(0.0),
            delta_alpha: e.finite("delta_alpha")?.unwrap_or(0.0),
            delta,
            grid_points: e.integer("grid_points", 3)?.map(|v| v as usize),
            quad_half_width: e.positive("quad_half_width")?,
            quad_rel_tol: e.positive("quad_rel_tol")?,
            quad_abs_tol: e.positive("quad_abs_tol")?,
            quad_max_subdivisions: e.integer("quad_max_subdivisions", 1)?.map(|v| v as usize),
            trials: e.integer("trials", 1)?.map_or(400, |v| v as usize),
            seed,
            efficiency_band,
            phase_table: path("phase_table")?,
            output_dir: path("output_dir")?.unwrap_or_else(|| base_dir.join("out")),
            corrupt_partials: e.positive("corrupt_partials")?,
            mode_y_max: e.positive("mode_y_max")?.unwrap_or(10.0),
            mode_points: e.integer("mode_points", 2)?.map_or(801, |v| v as usize),
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| Error::Config(format!("{}: {err}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base, overrides)
    }

    pub fn k(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Cliff offset `(Δh)` or `(Δh, Δα)`, unless `delta` was given.
    pub fn delta(&self) -> Vec<f64> {
        if let Some(d) = &self.delta {
            return d.clone();
        }
        match self.parameters {
            ParameterSet::H => vec![self.delta_h],
            ParameterSet::HAlpha => vec![self.delta_h, self.delta_alpha],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const BASE: &str = "wavelength = 633e-9\nh0 = 1.5825e-7\nbeta0_deg = 80.0\nbeam_width = 2.0e-6\nphotons = 1e5\n";

    fn parse(text: &str) -> Result<ProblemConfig> {
        ProblemConfig::parse(text, "test.toml", Path::new("/tmp"), &[])
    }

    #[test]
    fn defaults_and_derived_alpha() {
        let c = parse(BASE).unwrap();
        assert_relative_eq!(c.alpha0, 2.0 * 80f64.to_radians().tan() / 1.5825e-7, max_relative = 1e-14);
        assert_eq!(c.family, StateFamily::SinglePhoton);
        assert_eq!(c.parameters, ParameterSet::HAlpha);
        assert_eq!(c.trials, 400);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn alpha_gives_beta() {
        let text = "wavelength = 633e-9\nh0 = 2.0\nalpha0 = 1.0\nbeam_width = 1.0\nphotons = 1\n";
        let c = parse(text).unwrap();
        assert_relative_eq!(c.beta0.tan(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn both_angle_keys_rejected_with_line() {
        let err = parse(&format!("{BASE}alpha0 = 3.0\n")).unwrap_err().to_string();
        assert!(err.contains("test.toml:6"), "{err}");
    }

    #[test]
    fn negative_width_reports_line() {
        let text = BASE.replace("beam_width = 2.0e-6", "beam_width = -2.0e-6");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("test.toml:4") && err.contains("beam_width"), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse(&format!("{BASE}photons 3\n")).unwrap_err().to_string();
        assert!(err.contains("test.toml:6"), "{err}");
    }

    #[test]
    fn unknown_key_and_missing_key() {
        let err = parse(&format!("{BASE}colour = 1\n")).unwrap_err().to_string();
        assert!(err.contains("test.toml:6") && err.contains("unknown"), "{err}");
        let err = parse(&BASE.replace("photons = 1e5\n", "")).unwrap_err().to_string();
        assert!(err.contains("photons"), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let c = ProblemConfig::parse(
            BASE,
            "t",
            Path::new("."),
            &["photons=42".into(), "family=coherent".into(), "parameters=h".into()],
        )
        .unwrap();
        assert_eq!(c.photons, 42.0);
        assert_eq!(c.family, StateFamily::Coherent);
        assert_eq!(c.delta().len(), 1);
        let err = ProblemConfig::parse(BASE, "t", Path::new("."), &["photons=-1".into()]).unwrap_err();
        assert!(err.to_string().contains("--set photons"));
    }

    #[test]
    fn efficiency_band_validation() {
        assert!(parse(&format!("{BASE}efficiency_band = [1.2, 0.8]\n")).is_err());
        let c = parse(&format!("{BASE}efficiency_band = [0.5, 2]\n")).unwrap();
        assert_eq!(c.efficiency_band, [0.5, 2.0]);
    }
}
