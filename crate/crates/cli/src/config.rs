//! TOML run configuration.
//!
//! ```toml
//! family = "robertson-walker"   # or "minkowski"
//! a = "crossing"                # "exp(-t)", "exp(t)", "crossing"
//! p = 0.5
//! tau = 0.5
//! t_max = 50.0
//!
//! [grid]
//! n = 1
//! sizes = [64]
//!
//! [u0]
//! kind = "sinusoid"
//! offset = 1.0
//! amplitude = 0.05
//! mode = 1
//!
//! [output]
//! stride = 10
//! dir = "out"
//! ```

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use powerflow::flow::FlowConfig;
use powerflow::{GraphState, Grid, Integrator, ScaleFactor, SpacetimeChart};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Minkowski,
    RobertsonWalker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
}

/// Mode numbers of a sinusoid: one integer for the first axis, or one per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mode {
    Single(i32),
    PerAxis(Vec<i32>),
}

impl Default for Mode {
    fn default() -> Self {
        Mode::Single(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    Const {
        value: f64,
    },
    /// `offset + amplitude * sin(sum_i m_i 2 pi x_i / L_i)`.
    Sinusoid {
        amplitude: f64,
        #[serde(default)]
        mode: Mode,
        #[serde(default)]
        offset: f64,
    },
    /// Random Fourier modes up to `modes`, drawn from the run seed.
    Random {
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: i32,
        #[serde(default)]
        offset: f64,
    },
    /// Node values in grid order, one per line, or a CSV with a `u` column.
    File {
        path: PathBuf,
    },
}

fn default_modes() -> i32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            stride: default_stride(),
            dir: None,
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    pub p: f64,
    #[serde(default)]
    pub tau: f64,
    pub t_max: f64,
    #[serde(default = "defaults::cfl")]
    pub cfl_safety: f64,
    #[serde(default = "defaults::integrator")]
    pub integrator: Integrator,
    #[serde(default = "defaults::eps")]
    pub eps_stationary: f64,
    #[serde(default = "defaults::vtilde_max")]
    pub vtilde_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub grid: GridConfig,
    pub u0: InitialData,
    #[serde(default)]
    pub output: OutputConfig,
}

mod defaults {
    use super::*;

    pub fn cfl() -> f64 {
        FlowConfig::default().cfl_safety
    }
    pub fn integrator() -> Integrator {
        FlowConfig::default().integrator
    }
    pub fn eps() -> f64 {
        FlowConfig::default().eps_stationary
    }
    pub fn vtilde_max() -> f64 {
        FlowConfig::default().vtilde_max
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative u0 files resolve against the config's directory
        if let InitialData::File { path: p } = &mut cfg.u0 {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn flow_config(&self) -> Result<FlowConfig, CliError> {
        let cfg = FlowConfig {
            p: self.p,
            tau: self.tau,
            cfl_safety: self.cfl_safety,
            t_max: self.t_max,
            eps_stationary: self.eps_stationary,
            integrator: self.integrator,
            vtilde_max: self.vtilde_max,
            stride: self.output.stride,
            lambda: self.lambda,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let periods = match &self.grid.periods {
            Some(p) => p.clone(),
            None => vec![TAU; self.grid.n],
        };
        Grid::new(self.grid.n, &self.grid.sizes, &periods).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn chart(&self) -> Result<SpacetimeChart, CliError> {
        let grid = self.grid()?;
        let n = grid.n();
        let chart = match (self.family, &self.a) {
            (FamilyName::Minkowski, None) => SpacetimeChart::minkowski(n),
            (FamilyName::Minkowski, Some(_)) => {
                return Err(CliError::Config("a: the minkowski family takes no scale factor".into()))
            }
            (FamilyName::RobertsonWalker, None) => {
                return Err(CliError::Config("a: robertson-walker needs a scale-factor preset".into()))
            }
            (FamilyName::RobertsonWalker, Some(name)) => {
                let scale = ScaleFactor::preset(name, n).ok_or_else(|| {
                    CliError::Config(format!(
                        "a: unknown preset '{name}' (expected exp(-t), exp(t) or crossing)"
                    ))
                })?;
                SpacetimeChart::robertson_walker(n, scale)
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let mut periods = [TAU; 2];
        periods[..n].copy_from_slice(grid.periods());
        chart.with_periods(periods).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Initial graph; `seed` feeds the `random` preset.
    pub fn initial_state(&self, seed: u64) -> Result<GraphState, CliError> {
        let grid = self.grid()?;
        let chart = Arc::new(self.chart()?);
        let n = grid.n();
        let phase = |x: [f64; 2], m: &[i32]| -> f64 {
            (0..n).map(|a| m[a] as f64 * TAU * x[a] / grid.periods()[a]).sum()
        };
        let u = match &self.u0 {
            InitialData::Const { value } => vec![*value; grid.len()],
            InitialData::Sinusoid {
                amplitude,
                mode,
                offset,
            } => {
                let m = match mode {
                    Mode::Single(k) => vec![*k, 0],
                    Mode::PerAxis(v) if v.len() == n => {
                        let mut m = v.clone();
                        m.resize(2, 0);
                        m
                    }
                    Mode::PerAxis(v) => {
                        return Err(CliError::Config(format!(
                            "u0.mode: expected {n} entries, got {}",
                            v.len()
                        )))
                    }
                };
                grid.sample(|x| offset + amplitude * phase(x, &m).sin())
            }
            InitialData::Random {
                amplitude,
                modes,
                offset,
            } => {
                if *modes < 1 {
                    return Err(CliError::Config("u0.modes: must be at least 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut terms = Vec::new();
                let range = if n == 2 { -*modes..=*modes } else { 0..=0 };
                for m1 in 1..=*modes {
                    for m2 in range.clone() {
                        let c: f64 = rng.gen_range(-1.0..1.0);
                        let s: f64 = rng.gen_range(-1.0..1.0);
                        terms.push(([m1, m2], c, s));
                    }
                }
                let norm = terms.len() as f64;
                grid.sample(|x| {
                    let mut u = *offset;
                    for (m, c, s) in &terms {
                        let th = phase(x, m);
                        u += amplitude * (c * th.cos() + s * th.sin()) / norm;
                    }
                    u
                })
            }
            InitialData::File { path } => read_heights(path, grid.len())?,
        };
        GraphState::new(0.0, u, grid, chart).map_err(|e| CliError::Config(format!("u0: {e}")))
    }

    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        cli_override
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Heights from a plain list or from a CSV with a `u` column in its header.
pub fn read_heights(path: &Path, expected: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("u0.path: cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    let mut column = None;
    if let Some(first) = lines.peek() {
        if first.split(',').next().is_some_and(|c| c.trim().parse::<f64>().is_err()) {
            let header: Vec<&str> = first.split(',').map(str::trim).collect();
            column = Some(header.iter().position(|h| *h == "u").ok_or_else(|| {
                CliError::Config(format!("u0.path: header of {} has no 'u' column", path.display()))
            })?);
            lines.next();
        }
    }
    let mut out = Vec::with_capacity(expected);
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = match column {
            Some(c) => fields.get(c).copied(),
            None => fields.last().copied(),
        };
        let v = cell
            .and_then(|c| c.parse::<f64>().ok())
            .ok_or_else(|| CliError::Config(format!("u0.path: bad value on data row {}", i + 1)))?;
        out.push(v);
    }
    if out.len() != expected {
        return Err(CliError::Config(format!(
            "u0.path: {} values for {expected} grid nodes",
            out.len()
        )));
    }
    Ok(out)
}
