//! Flat `key = value` experiment files with `[section]` headers.
//!
//! Sections only group keys; every key is global and may appear once.
//! Command-line overrides use the same names with a `--` prefix.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::adjoint_error::ErrorGpOptions;
use crate::mesh::Point;
use crate::pipeline::{MeanForcing, ProblemConfig, ProblemKind};
use crate::rom::KrylovCoupling;
use crate::{Error, Result};

/// Raw key/value pairs, sections discarded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(Error::Config(format!("line {}: malformed section header `{line}`", lineno + 1)));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)));
            };
            let key = key.trim().to_owned();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_owned(), value.to_owned());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Applies `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(Error::Config(format!("expected `--key value`, got `{flag}`")));
            };
            if let Some((k, v)) = key.split_once('=') {
                self.set(k, v);
                continue;
            }
            let Some(value) = it.next() else {
                return Err(Error::Config(format!("missing value for `--{key}`")));
            };
            self.set(key, value);
        }
        Ok(())
    }

    fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// One cell of the scattering table: frequency, order and data size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub frequency_hz: f64,
    pub m: usize,
    pub n_sensors: usize,
    pub n_obs: usize,
}

/// Everything a command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Evaluation frequencies in Hz.
    pub frequencies: Vec<f64>,
    /// Orders compared in a sweep.
    pub m_values: Vec<usize>,
    pub m_min: usize,
    pub m_max: usize,
    pub grid: Vec<GridCell>,
    /// Explicit sensor positions; when present they replace `n_sensors`.
    pub sensor_coords: Option<Vec<Point>>,
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "length",
    "elements",
    "ref_elements",
    "side",
    "center_x",
    "center_y",
    "radius",
    "h",
    "data_h",
    "c",
    "beta",
    "kappa_sigma2",
    "kappa_ell",
    "kappa_tau",
    "forcing_mean",
    "forcing_nu",
    "forcing_sigma",
    "forcing_ell",
    "forcing_tau",
    "forcing_complex",
    "misspecified_truth",
    "omega_bar_hz",
    "m",
    "m_min",
    "m_max",
    "m_values",
    "samples",
    "coupling",
    "training_points",
    "gp_jitter",
    "gp_length_factor",
    "raw_adjoint_variance",
    "n_sensors",
    "sensor_coords",
    "n_obs",
    "sigma_e",
    "restarts",
    "seed",
    "frequencies",
    "grid",
    "input",
    "out",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_num(key, s)).collect()
}

/// `a, b, c` or `start:stop:step` (inclusive of `stop` within rounding).
fn parse_frequencies(v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let start: f64 = parse_num("frequencies", parts[0])?;
        let stop: f64 = parse_num("frequencies", parts[1])?;
        let step: f64 = parse_num("frequencies", parts[2])?;
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("`frequencies`: invalid range `{v}`")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..n).map(|i| start + i as f64 * step).collect());
    }
    parse_list("frequencies", v)
}

/// `x y; x y; ...`, with `y` optional in 1D.
fn parse_coords(v: &str) -> Result<Vec<Point>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pt| {
            let xs: Vec<f64> = pt.split_whitespace().map(|c| parse_num("sensor_coords", c)).collect::<Result<_>>()?;
            match xs[..] {
                [x] => Ok([x, 0.0]),
                [x, y] => Ok([x, y]),
                _ => Err(Error::Config(format!("`sensor_coords`: bad point `{pt}`"))),
            }
        })
        .collect()
}

/// `freq@m:sensors/obs` cells separated by commas.
fn parse_grid(v: &str) -> Result<Vec<GridCell>> {
    let bad = || Error::Config(format!("`grid`: expected `freq@m:sensors/obs` cells, got `{v}`"));
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|cell| {
            let (freq, rest) = cell.split_once('@').ok_or_else(bad)?;
            let (m, data) = rest.split_once(':').ok_or_else(bad)?;
            let (ns, no) = data.split_once('/').ok_or_else(bad)?;
            Ok(GridCell {
                frequency_hz: parse_num("grid", freq.trim())?,
                m: parse_num("grid", m.trim())?,
                n_sensors: parse_num("grid", ns.trim())?,
                n_obs: parse_num("grid", no.trim())?,
            })
        })
        .collect()
}

/// Grid of the scattering tables.
pub const DEFAULT_GRID: &str = "360@12:5/20, 360@12:30/50, 360@12:80/200, 300@20:5/20, 300@20:30/50, 300@20:80/200";

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(unknown) = raw.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key `{unknown}`")));
        }
        let kind = match raw.get("problem") {
            Some(p) => ProblemKind::parse(p).ok_or_else(|| Error::Config(format!("unknown problem `{p}`")))?,
            None => ProblemKind::Helmholtz1d,
        };
        let mut p = ProblemConfig::defaults(kind);
        let mut gp = ErrorGpOptions::default();
        for key in raw.keys() {
            let v = raw.get(key).expect("key present");
            match key {
                "length" => p.length = parse_num(key, v)?,
                "elements" => p.n_elements = parse_num(key, v)?,
                "ref_elements" => p.ref_elements = parse_num(key, v)?,
                "side" => p.side = parse_num(key, v)?,
                "center_x" => p.center[0] = parse_num(key, v)?,
                "center_y" => p.center[1] = parse_num(key, v)?,
                "radius" => p.radius = parse_num(key, v)?,
                "h" => p.h = parse_num(key, v)?,
                "data_h" => p.data_h = parse_num(key, v)?,
                "c" => p.c = parse_num(key, v)?,
                "beta" => p.beta = parse_num(key, v)?,
                "kappa_sigma2" => p.kappa_sigma2 = parse_num(key, v)?,
                "kappa_ell" => p.kappa_ell = parse_num(key, v)?,
                "kappa_tau" => p.kappa_tau = parse_num(key, v)?,
                "forcing_mean" => {
                    p.forcing_mean = if v == "plane_wave" {
                        MeanForcing::PlaneWave
                    } else {
                        MeanForcing::Constant(parse_num(key, v)?)
                    }
                }
                "forcing_nu" => p.forcing_nu = parse_num(key, v)?,
                "forcing_sigma" => p.forcing_sigma = parse_num(key, v)?,
                "forcing_ell" => p.forcing_ell = parse_num(key, v)?,
                "forcing_tau" => p.forcing_tau = parse_num(key, v)?,
                "forcing_complex" => p.forcing_complex = parse_bool(key, v)?,
                "misspecified_truth" => p.misspecified_truth = parse_bool(key, v)?,
                "omega_bar_hz" => p.omega_bar_hz = parse_num(key, v)?,
                "m" => p.m = parse_num(key, v)?,
                "samples" => p.samples = parse_num(key, v)?,
                "coupling" => {
                    p.coupling = match v {
                        "taylor" => KrylovCoupling::Taylor,
                        "literal" => KrylovCoupling::Literal,
                        _ => return Err(Error::Config(format!("`coupling`: expected taylor or literal, got `{v}`"))),
                    }
                }
                "training_points" => p.training_points = parse_num(key, v)?,
                "gp_jitter" => gp.jitter = parse_num(key, v)?,
                "gp_length_factor" => gp.length_factor = parse_num(key, v)?,
                "raw_adjoint_variance" => p.raw_adjoint_variance = parse_bool(key, v)?,
                "n_sensors" => p.n_sensors = parse_num(key, v)?,
                "n_obs" => p.n_obs = parse_num(key, v)?,
                "sigma_e" => p.sigma_e = parse_num(key, v)?,
                "restarts" => p.restarts = parse_num(key, v)?,
                "seed" => p.seed = parse_num(key, v)?,
                _ => {}
            }
        }
        p.gp = gp;
        if !(gp.jitter >= 0.0) || !(gp.length_factor > 0.0) {
            return Err(Error::Config("gp_jitter must be non-negative and gp_length_factor positive".into()));
        }
        let frequencies = match raw.get("frequencies") {
            Some(v) => parse_frequencies(v)?,
            None => vec![match kind {
                ProblemKind::Helmholtz1d => 460.0,
                ProblemKind::Scatter2d => 360.0,
            }],
        };
        let m_values = match raw.get("m_values") {
            Some(v) => parse_list("m_values", v)?,
            None => vec![5, 15],
        };
        let m_min = raw.get("m_min").map(|v| parse_num("m_min", v)).transpose()?.unwrap_or(1);
        let m_max = raw.get("m_max").map(|v| parse_num("m_max", v)).transpose()?.unwrap_or(15);
        let grid = parse_grid(raw.get("grid").unwrap_or(DEFAULT_GRID))?;
        let sensor_coords = raw.get("sensor_coords").map(parse_coords).transpose()?;
        if let Some(coords) = &sensor_coords {
            p.n_sensors = coords.len();
        }
        let cfg = ExperimentConfig {
            problem: p,
            frequencies,
            m_values,
            m_min,
            m_max,
            grid,
            sensor_coords,
            input: raw.get("input").map(PathBuf::from),
            out_dir: PathBuf::from(raw.get("out").unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.frequencies.is_empty() {
            return Err(Error::Config("frequency grid is empty".into()));
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("frequencies must be positive, got {f}")));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::Config("m_values must be a non-empty list of positive orders".into()));
        }
        if self.m_min == 0 || self.m_max < self.m_min {
            return Err(Error::Config(format!("need 1 <= m_min <= m_max, got {}..{}", self.m_min, self.m_max)));
        }
        if self.sensor_coords.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("sensor_coords is empty".into()));
        }
        for cell in &self.grid {
            if !(cell.frequency_hz > 0.0) || cell.m == 0 || cell.n_sensors == 0 || cell.n_obs == 0 {
                return Err(Error::Config(format!("invalid grid cell {cell:?}")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        raw.apply_overrides(overrides)?;
        Self::from_raw(&raw)
    }
}
