//! Experiment configuration: a TOML document with a fixed key schema.
//!
//! ```toml
//! equation = "nls"          # nls | kg | toy | toy-hartree
//! p = 5
//! lambda = 1.0
//! output_dir = "out/nls-scatter"
//!
//! [grid]                    # L and N for the PDEs, d (and optionally
//! L = 80.0                  # frequencies) for the toy models
//! N = 2048
//!
//! [horizon]
//! T = 8.0
//! dt = 1e-3
//!
//! [data]
//! profile = "gaussian"      # gaussian | packet | random-seeded
//! amplitude = 0.3
//! width = 1.0
//! seed = 1
//! ```
//!
//! Optional tables `[direction]` and `[direction_b]` share the `[data]`
//! keys and give the perturbation directions; `[series]` holds `K` and
//! `epsilon_list`; `[thresholds]` overrides the scattering thresholds.
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scatter_core::consequences::BornQuadrature;
use scatter_core::nonlinearity::NonlinearityKind;
use scatter_core::profiles::{
    gaussian, gaussian_wave, packet, random_smooth, random_smooth_wave, random_toy,
};
use scatter_core::propagator::{default_toy_frequencies, PropagatorKind};
use scatter_core::{
    ComplexField, GridRef, IntegratorConfig, NonlinearitySpec, PropagatorSpec, ScatterThresholds,
    Scheme, SpatialGrid,
};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Nls,
    Kg,
    Toy,
    ToyHartree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Gaussian,
    Packet,
    RandomSeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Strang,
    Lawson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BornRule {
    Trapezoid,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub length: Option<f64>,
    #[serde(rename = "N")]
    pub points: Option<usize>,
    pub d: Option<usize>,
    pub frequencies: Option<Vec<f64>>,
    /// Row-major `d × d` kernel of the Hartree toy model.
    pub kernel: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Option<SchemeName>,
    pub save_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub profile: Profile,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub center: f64,
    /// Carrier wavenumber of a packet.
    #[serde(default)]
    pub k0: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub tail: Option<f64>,
    pub boundary_mass: Option<f64>,
    pub noise_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub equation: Equation,
    pub p: u32,
    pub lambda: f64,
    /// Klein–Gordon mass.
    #[serde(default = "one")]
    pub mass: f64,
    pub grid: GridConfig,
    pub horizon: HorizonConfig,
    pub data: DataConfig,
    pub direction: Option<DataConfig>,
    pub direction_b: Option<DataConfig>,
    pub series: Option<SeriesConfig>,
    pub thresholds: Option<ThresholdConfig>,
    pub born_rule: Option<BornRule>,
    /// Probe count for the empirical multilinear constant.
    pub probes: Option<usize>,
    pub output_dir: PathBuf,
}

/// A parsed configuration and the sha256 of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// SHA-256 of the canonical TOML after overrides.
    pub hash: String,
}

/// Reads `path`, applies `key=value` overrides and validates.
pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e| err(format!("malformed config: {e}")))?;
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    // where the artifacts go does not change them, so it stays out of the hash
    let mut hashed = doc.clone();
    hashed.remove("output_dir");
    let canonical = toml::to_string(&hashed).map_err(|e| err(e.to_string()))?;
    let config: ExperimentConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| err(format!("config schema: {e}")))?;
    config.validate()?;
    let hash = Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(LoadedConfig { config, hash })
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
fn apply_override(doc: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| err(format!("override `{item}` is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts
        .split_last()
        .ok_or_else(|| err("empty override key"))?;
    let mut table = doc;
    for part in path {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| err(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(err(format!("{name} must be positive, got {v}")))
    }
}

impl DataConfig {
    fn validate(&self, name: &str) -> Result<(), ConfigError> {
        positive(&format!("{name}.width"), self.width)?;
        if !self.amplitude.is_finite() {
            return Err(err(format!("{name}.amplitude must be finite")));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p.is_multiple_of(2) || self.p < 3 {
            return Err(err(format!(
                "p = {} is not allowed: the nonlinearity degree must be an odd integer >= 3",
                self.p
            )));
        }
        if !self.lambda.is_finite() {
            return Err(err("lambda must be finite"));
        }
        positive("horizon.T", self.horizon.horizon)?;
        positive("horizon.dt", self.horizon.dt)?;
        if self.horizon.save_every == Some(0) {
            return Err(err("horizon.save_every must be >= 1"));
        }
        let g = &self.grid;
        match self.equation {
            Equation::Nls | Equation::Kg => {
                let (Some(l), Some(n)) = (g.length, g.points) else {
                    return Err(err("PDE equations need grid.L and grid.N"));
                };
                positive("grid.L", l)?;
                if n < 8 || !n.is_power_of_two() {
                    return Err(err(format!("grid.N = {n} must be a power of two >= 8")));
                }
                if g.d.is_some() || g.frequencies.is_some() || g.kernel.is_some() {
                    return Err(err(
                        "grid.d, grid.frequencies and grid.kernel apply to toy models only",
                    ));
                }
                if self.equation == Equation::Kg {
                    positive("mass", self.mass)?;
                }
            }
            Equation::Toy | Equation::ToyHartree => {
                let Some(d) = g.d else {
                    return Err(err("toy models need grid.d"));
                };
                if d == 0 {
                    return Err(err("grid.d must be >= 1"));
                }
                if g.length.is_some() || g.points.is_some() {
                    return Err(err("grid.L and grid.N apply to the PDEs only"));
                }
                if let Some(f) = &g.frequencies {
                    if f.len() != d {
                        return Err(err(format!(
                            "grid.frequencies has {} entries, expected {d}",
                            f.len()
                        )));
                    }
                }
                if self.equation == Equation::ToyHartree {
                    if self.p != 3 {
                        return Err(err("the Hartree toy model is cubic: p must be 3"));
                    }
                    if let Some(k) = &g.kernel {
                        if k.len() != d * d {
                            return Err(err(format!("grid.kernel needs {} entries", d * d)));
                        }
                    }
                } else if g.kernel.is_some() {
                    return Err(err("grid.kernel applies to the Hartree toy model only"));
                }
            }
        }
        self.data.validate("data")?;
        if let Some(d) = &self.direction {
            d.validate("direction")?;
        }
        if let Some(d) = &self.direction_b {
            d.validate("direction_b")?;
        }
        if let Some(s) = &self.series {
            if s.epsilon_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(err("series.epsilon_list entries must be positive"));
            }
        }
        if let Some(t) = &self.thresholds {
            for (name, v) in [
                ("tail", t.tail),
                ("boundary_mass", t.boundary_mass),
                ("noise_floor", t.noise_floor),
            ] {
                if let Some(v) = v {
                    positive(&format!("thresholds.{name}"), v)?;
                }
            }
        }
        if self.probes == Some(0) {
            return Err(err("probes must be >= 1"));
        }
        Ok(())
    }

    pub fn is_toy(&self) -> bool {
        matches!(self.equation, Equation::Toy | Equation::ToyHartree)
    }

    pub fn grid(&self) -> Result<GridRef, ConfigError> {
        let g = &self.grid;
        let grid = if self.is_toy() {
            SpatialGrid::toy(g.d.unwrap_or(0))
        } else {
            SpatialGrid::periodic(g.length.unwrap_or(0.0), g.points.unwrap_or(0))
        };
        grid.map_err(|e| err(e.to_string()))
    }

    pub fn propagator(&self, grid: &GridRef) -> Result<PropagatorSpec, ConfigError> {
        let prop = match self.equation {
            Equation::Nls => PropagatorSpec::schrodinger(grid.clone()),
            Equation::Kg => PropagatorSpec::klein_gordon(grid.clone(), self.mass),
            Equation::Toy | Equation::ToyHartree => {
                let frequencies = self
                    .grid
                    .frequencies
                    .clone()
                    .unwrap_or_else(|| default_toy_frequencies(grid.len()));
                PropagatorSpec::new(PropagatorKind::ToyDiagonal { frequencies }, grid.clone())
            }
        };
        prop.map_err(|e| err(e.to_string()))
    }

    pub fn nonlinearity(&self, lambda: f64) -> Result<NonlinearitySpec, ConfigError> {
        let nl = match self.equation {
            Equation::Nls => NonlinearitySpec::gauge_power(self.p, lambda),
            Equation::Kg => NonlinearitySpec::real_odd_power(self.p, lambda),
            Equation::Toy => NonlinearitySpec::toy_gauge_power(self.p, lambda),
            Equation::ToyHartree => {
                let d = self.grid.d.unwrap_or(0);
                let kernel = self
                    .grid
                    .kernel
                    .clone()
                    .unwrap_or_else(|| default_kernel(d));
                NonlinearitySpec::new(NonlinearityKind::ToyConvolutionCubic { kernel }, 3, lambda)
            }
        };
        nl.map_err(|e| err(e.to_string()))
    }

    pub fn scheme(&self) -> Scheme {
        match self.horizon.scheme {
            Some(SchemeName::Strang) => Scheme::StrangSplit,
            Some(SchemeName::Lawson) => Scheme::LawsonRk4,
            None if self.equation == Equation::Kg => Scheme::LawsonRk4,
            None => Scheme::StrangSplit,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::new(self.horizon.dt, self.horizon.horizon, self.scheme());
        if let Some(s) = self.horizon.save_every {
            cfg = cfg.with_save_every(s);
        }
        cfg
    }

    pub fn thresholds(&self) -> ScatterThresholds {
        let mut th = ScatterThresholds::default();
        if let Some(t) = &self.thresholds {
            th.tail = t.tail.unwrap_or(th.tail);
            th.boundary_mass = t.boundary_mass.unwrap_or(th.boundary_mass);
            th.noise_floor = t.noise_floor.unwrap_or(th.noise_floor);
        }
        th
    }

    pub fn born_rule(&self) -> BornQuadrature {
        match self.born_rule {
            Some(BornRule::Midpoint) => BornQuadrature::Midpoint,
            Some(BornRule::Trapezoid) => BornQuadrature::Trapezoid,
            // splitting is exact for the toy models; the midpoint rule is its leading term
            None if self.is_toy() => BornQuadrature::Midpoint,
            None => BornQuadrature::Trapezoid,
        }
    }

    /// Builds a state from `[data]`-style keys.
    pub fn state(&self, grid: &GridRef, data: &DataConfig) -> Result<ComplexField, ConfigError> {
        let f = match (self.equation, data.profile) {
            (Equation::Toy | Equation::ToyHartree, Profile::RandomSeeded) => {
                random_toy(grid, data.seed, data.amplitude)
            }
            (Equation::Toy | Equation::ToyHartree, _) => {
                return Err(err("toy models take profile = \"random-seeded\" only"));
            }
            (Equation::Nls, Profile::Gaussian) => {
                gaussian(grid, data.amplitude, data.width, data.center)
            }
            (Equation::Nls, Profile::Packet) => {
                packet(grid, data.amplitude, data.width, data.center, data.k0)
            }
            (Equation::Nls, Profile::RandomSeeded) => {
                random_smooth(grid, data.seed, 3, data.amplitude)
            }
            (Equation::Kg, Profile::Gaussian) => {
                gaussian_wave(grid, data.amplitude, data.width, data.center)
            }
            (Equation::Kg, Profile::Packet) => {
                return Err(err(
                    "Klein-Gordon data take gaussian or random-seeded profiles",
                ));
            }
            (Equation::Kg, Profile::RandomSeeded) => {
                random_smooth_wave(grid, data.seed, 3, data.amplitude)
            }
        };
        f.map_err(|e| err(e.to_string()))
    }

    /// `[direction]`, or a seeded random state derived from the data seed.
    pub fn direction(&self, grid: &GridRef, which: usize) -> Result<ComplexField, ConfigError> {
        let given = if which == 0 {
            &self.direction
        } else {
            &self.direction_b
        };
        let fallback = DataConfig {
            profile: Profile::RandomSeeded,
            amplitude: 1.0,
            width: 1.0,
            center: 0.0,
            k0: 0.0,
            seed: self.data.seed.wrapping_add(1 + which as u64),
        };
        self.state(grid, given.as_ref().unwrap_or(&fallback))
    }

    pub fn seed(&self) -> u64 {
        self.data.seed
    }
}

/// `K_mk = 1 / (1 + |m − k|)`.
pub fn default_kernel(d: usize) -> Vec<f64> {
    (0..d * d)
        .map(|i| 1.0 / (1.0 + (i / d).abs_diff(i % d) as f64))
        .collect()
}
