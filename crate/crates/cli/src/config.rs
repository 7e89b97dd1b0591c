//! Scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use fracpot::io::{read_measure_spec, MeasureSpec};
use fracpot::{validate_parameters, Grid, Measure, Parameters};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: usize,
    pub s: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

/// Inline measure or a path to a measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    File(PathBuf),
    Inline(MeasureSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    WeakResidual,
    Representation,
    Sandwich,
    Decay,
    Positivity,
    Distribution,
    Marcinkiewicz,
}

fn default_theta() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub params: ParamsSpec,
    pub grid: GridSpec,
    pub measure: MeasureSource,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(rename = "maxIter", default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub checks: Vec<Check>,
}

/// A config with everything built: parameters, grid and measure.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: Parameters,
    pub grid: Grid,
    pub measure: Measure,
    /// Directory relative paths in the config resolve against.
    pub base: PathBuf,
}

impl ScenarioConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(self, base: &Path) -> Result<Scenario, CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let params = validate_parameters(self.params.n, self.params.s, self.params.q)?;
        if !self.grid.points.is_power_of_two() {
            return Err(CliError::Config(format!("N = {} must be a power of two", self.grid.points)));
        }
        let grid = Grid::new(params.n, self.grid.half_width, self.grid.points)?;
        let (spec, spec_base) = match &self.measure {
            MeasureSource::Inline(m) => (m.clone(), base.to_path_buf()),
            MeasureSource::File(p) => {
                let path = base.join(p);
                let spec = read_measure_spec(&path)?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| base.to_path_buf());
                (spec, dir)
            }
        };
        let measure = spec.build(grid, &spec_base)?;
        if measure.dim() != params.n {
            return Err(CliError::Config("measure dimension differs from n".into()));
        }
        if grid.half_width < 4.0 * measure.support_radius() {
            return Err(CliError::Config(format!(
                "L = {} must be at least 4 times the support radius {}",
                grid.half_width,
                measure.support_radius()
            )));
        }
        Ok(Scenario { config: self, params, grid, measure, base: base.to_path_buf() })
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ScenarioConfig::read(path)?.build(&base)
    }

    /// Output directory: the override if given, else the config's, relative to the config.
    pub fn output_dir(&self, over: Option<&Path>) -> PathBuf {
        match over {
            Some(p) => p.to_path_buf(),
            None => self.base.join(&self.config.outputs),
        }
    }
}
