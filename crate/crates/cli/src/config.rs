//! Experiment configuration, parsed from JSON.

use std::path::{Path, PathBuf};

use heatlab_core::asymptotics::{Tolerance, KS_AMPLITUDE_MIN, KS_DEFAULT_RATIO, KS_EPOCHS};
use heatlab_core::semigroup::Ball;
use heatlab_core::spectral::Thresholds;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub time: TimeSpec,
    pub tasks: Vec<Task>,
    /// Node coordinates; defaults to the origin.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub options: TaskOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Seed for randomized oracles; the pipeline itself is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("heatlab-out")
}

/// Built-in model operators. `drifted_bm_1d` is `dX = b dt + √2 dW`,
/// `ou_1d` is `dX = −rate·X dt + √2 dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    #[serde(rename = "laplacian_1d")]
    Laplacian1d,
    #[serde(rename = "laplacian_2d")]
    Laplacian2d,
    #[serde(rename = "ou_1d")]
    Ou1d {
        #[serde(default = "one")]
        rate: f64,
    },
    #[serde(rename = "drifted_bm_1d")]
    DriftedBm1d {
        #[serde(default = "one")]
        b: f64,
    },
    /// Per-node CSV, `x[,y],a11[,a12,a22],b1[,b2],c`.
    Tabulated { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorSpec::Laplacian1d => "laplacian_1d",
            OperatorSpec::Laplacian2d => "laplacian_2d",
            OperatorSpec::Ou1d { .. } => "ou_1d",
            OperatorSpec::DriftedBm1d { .. } => "drifted_bm_1d",
            OperatorSpec::Tabulated { .. } => "tabulated",
        }
    }

    /// Dimension fixed by the operator, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            OperatorSpec::Laplacian2d => Some(2),
            OperatorSpec::Tabulated { .. } => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Explicit sample times; otherwise each task picks its own ladder up to
    /// `t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

fn default_step() -> f64 {
    0.005
}

fn default_t_max() -> f64 {
    10.0
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            step: default_step(),
            t_max: default_t_max(),
            samples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Limit,
    Abelian,
    Varadhan,
    HeatContent,
    Capacitory,
    Cesaro,
    ExteriorMass,
    Ks,
    ProductCheck,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Limit => "limit",
            Task::Abelian => "abelian",
            Task::Varadhan => "varadhan",
            Task::HeatContent => "heat_content",
            Task::Capacitory => "capacitory",
            Task::Cesaro => "cesaro",
            Task::ExteriorMass => "exterior_mass",
            Task::Ks => "ks",
            Task::ProductCheck => "product_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub limit: Tolerance,
    /// Relative agreement of the Abelian and large-time limits, with
    /// `ABELIAN_FLOOR` as absolute floor.
    pub abelian_agreement: f64,
    pub exterior_mass: f64,
    /// `s(t_max)` bound as a fraction of the oscillation of the data.
    pub varadhan: f64,
    pub varadhan_slack: f64,
    pub product_defect: f64,
    pub eigen_additivity: f64,
    pub ks_amplitude: f64,
    pub classification: Thresholds,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            limit: Tolerance::default(),
            abelian_agreement: 0.05,
            exterior_mass: 0.05,
            varadhan: 0.005,
            varadhan_slack: 1e-3,
            product_defect: 1e-2,
            eigen_additivity: 1e-8,
            ks_amplitude: KS_AMPLITUDE_MIN,
            classification: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskOptions {
    /// Ball for heat content and capacitory potential; centered at the
    /// origin with radius 1 when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<Ball>,
    pub abelian_first_offset: f64,
    pub abelian_offsets: usize,
    pub varadhan_data: VaradhanData,
    /// Half-width of the compact set `K`.
    pub varadhan_k: f64,
    pub cesaro_t_first: f64,
    pub exterior_level: usize,
    pub ks_ratio: f64,
    pub ks_epochs: usize,
    pub product_t: f64,
}

impl Default for TaskOptions {
    fn default() -> Self {
        TaskOptions {
            ball: None,
            abelian_first_offset: 0.2,
            abelian_offsets: 7,
            varadhan_data: VaradhanData::ClippedSign,
            varadhan_k: 1.0,
            cesaro_t_first: 0.1,
            exterior_level: 0,
            ks_ratio: KS_DEFAULT_RATIO,
            ks_epochs: KS_EPOCHS,
            product_t: 1.0,
        }
    }
}

/// Bounded initial data for the Varadhan diagnostic, a function of the first
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaradhanData {
    /// `sign(x)` on `|x| ≤ 1`, 0 outside.
    ClippedSign,
    Constant(f64),
    Cosine(f64),
}

impl VaradhanData {
    pub fn at(&self, x: &[f64]) -> f64 {
        let x = x[0];
        match *self {
            VaradhanData::ClippedSign if x.abs() <= 1.0 && x != 0.0 => x.signum(),
            VaradhanData::ClippedSign => 0.0,
            VaradhanData::Constant(c) => c,
            VaradhanData::Cosine(k) => (k * x).cos(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors name the JSON path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative tabulated path is resolved against
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let OperatorSpec::Tabulated { path: table } = &mut cfg.operator {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    *table = dir.join(&*table);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |path: &str, message: String| {
            Err(CliError::Config {
                path: path.into(),
                message,
            })
        };
        if self.tasks.is_empty() {
            return err("tasks", "at least one task is required".into());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(t) {
                return err(&format!("tasks[{i}]"), format!("task {} listed twice", t.as_str()));
            }
        }
        if let Some(d) = self.operator.dim() {
            if d != self.grid.dim {
                return err(
                    "grid.dim",
                    format!("{} needs dim {d}, got {}", self.operator.name(), self.grid.dim),
                );
            }
        }
        if let OperatorSpec::Tabulated { path } = &self.operator {
            if path.is_absolute() && !path.exists() {
                return err("operator.path", format!("{} does not exist", path.display()));
            }
        }
        for (i, p) in self.probes.iter().enumerate() {
            if p.len() != self.grid.dim {
                return err(
                    &format!("probes[{i}]"),
                    format!("probe has {} coordinates, grid has dim {}", p.len(), self.grid.dim),
                );
            }
            let r1 = self.grid.radii.first().copied().unwrap_or(0.0);
            if p.iter().any(|c| c.abs() >= r1) {
                return err(&format!("probes[{i}]"), format!("probe {p:?} is not inside M_1 (radius {r1})"));
            }
        }
        if !(self.time.step > 0.0) || !(self.time.t_max > 0.0) {
            return err("time", "step and t_max must be positive".into());
        }
        Ok(())
    }

    pub fn probes(&self) -> Vec<Vec<f64>> {
        if self.probes.is_empty() {
            vec![vec![0.0; self.grid.dim]]
        } else {
            self.probes.clone()
        }
    }

    pub fn ball(&self) -> Ball {
        self.options.ball.clone().unwrap_or(Ball {
            center: vec![0.0; self.grid.dim],
            radius: 1.0,
        })
    }

    /// Applies `key=value` with `key` a dotted path below `tolerances`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| CliError::Config {
            path: assignment.into(),
            message: "override must look like key=value".into(),
        })?;
        let key = key.trim();
        if !key.starts_with("tolerances.") {
            return Err(CliError::Config {
                path: key.into(),
                message: "only tolerances.* can be overridden".into(),
            });
        }
        let parsed: serde_json::Value = serde_json::from_str(value.trim()).map_err(|e| CliError::Config {
            path: key.into(),
            message: format!("value {value:?} is not JSON: {e}"),
        })?;
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| CliError::Config {
                    path: key.into(),
                    message: format!("no field {part:?}"),
                })?;
        }
        *slot = parsed;
        let text = doc.to_string();
        *self = Self::from_json(&text)?;
        Ok(())
    }
}
