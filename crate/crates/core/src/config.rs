//! Experiment configuration, read from TOML. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{BenchmarkParams, Phase, PlantParam};
use crate::engine::{InitialInput, TrajectoryKind};
use crate::error::{invalid, IlcError, Result};
use crate::fir::FreqGrid;
use crate::law::LawVariant;
use crate::tuner::{CornerBlock, LineSearch, TuneSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub plant: BenchmarkParams,
    /// Hz
    pub sample_rate: f64,
    /// Trajectory length N.
    pub steps: usize,
    #[serde(default = "default_skip")]
    pub skip: usize,
    pub approaches: Vec<LawVariant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub fir: FirConfig,
    #[serde(default)]
    pub circulant: CirculantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationConfig>,
}

fn default_skip() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirConfig {
    /// Tap placed on the first sub-diagonal; defaults to `ceil(n/2) + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Number of taps for the banded layout; defaults to N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_grid_step")]
    pub grid_step_deg: f64,
    #[serde(default)]
    pub include_nyquist: bool,
}

fn default_grid_step() -> f64 {
    1.0
}

impl Default for FirConfig {
    fn default() -> Self {
        Self { m: None, n: None, grid_step_deg: 1.0, include_nyquist: false }
    }
}

impl FirConfig {
    pub fn grid(&self) -> FreqGrid {
        FreqGrid { step_deg: self.grid_step_deg, include_nyquist: self.include_nyquist }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirculantConfig {
    #[serde(default = "default_extension")]
    pub extension_factor: usize,
    /// Keep the extended law at full `N * factor` size instead of reducing it
    /// to the leading `N x N` block.
    #[serde(default)]
    pub full_size: bool,
}

fn default_extension() -> usize {
    10
}

impl Default for CirculantConfig {
    fn default() -> Self {
        Self { extension_factor: 10, full_size: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub target: f64,
    /// Blocks to adjust, keyed by approach name.
    pub blocks: BTreeMap<String, Vec<CornerBlock>>,
    #[serde(default)]
    pub line_search: LineSearch,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_init: Option<f64>,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
}

fn default_max_iters() -> usize {
    5000
}

fn default_grad_tol() -> f64 {
    1e-10
}

fn default_shrink() -> f64 {
    0.5
}

impl TuneConfig {
    pub fn blocks_for(&self, variant: LawVariant) -> Result<&[CornerBlock]> {
        self.blocks
            .get(variant.as_str())
            .map(Vec::as_slice)
            .ok_or_else(|| IlcError::InvalidParameter(format!("[tune.blocks] has no entry for '{variant}'")))
    }

    /// Spec with the blocks resolved against an `nrows x ncols` law.
    pub fn spec(&self, variant: LawVariant, nrows: usize, ncols: usize, seed: u64) -> Result<TuneSpec> {
        let blocks = self
            .blocks_for(variant)?
            .iter()
            .map(|b| b.resolve(nrows, ncols))
            .collect::<Result<Vec<_>>>()?;
        let mut spec = TuneSpec::new(blocks, self.target);
        spec.line_search = self.line_search;
        spec.max_iters = self.max_iters;
        spec.grad_tol = self.grad_tol;
        spec.step_init = self.step_init;
        spec.shrink = self.shrink;
        spec.seed = seed;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryShape {
    Quintic,
    RaisedCosSq,
    Sine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub shape: TrajectoryShape,
    /// Period in seconds of the periodic shapes; `omega = 2 pi / period`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl TrajectoryConfig {
    pub fn kind(&self) -> Result<TrajectoryKind> {
        let omega = || match self.period {
            Some(p) if p > 0.0 && p.is_finite() => Ok(2.0 * PI / p),
            Some(p) => invalid(format!("trajectory period must be positive, got {p}")),
            None => invalid(format!("trajectory shape '{:?}' needs a period", self.shape)),
        };
        Ok(match self.shape {
            TrajectoryShape::Quintic => TrajectoryKind::Quintic,
            TrajectoryShape::RaisedCosSq => TrajectoryKind::RaisedCosSq { omega: omega()? },
            TrajectoryShape::Sine => TrajectoryKind::Sine { omega: omega()? },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub initial_input: InitialInput,
    #[serde(default = "default_window")]
    pub wiggle_window: usize,
    /// Tune each law before simulating (requires `[tune]`).
    #[serde(default)]
    pub tuned: bool,
}

fn default_iterations() -> usize {
    10
}

fn default_window() -> usize {
    10
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { iterations: 10, initial_input: InitialInput::Desired, wiggle_window: 10, tuned: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "all_params")]
    pub params: Vec<PlantParam>,
    #[serde(default = "default_start")]
    pub start: f64,
    #[serde(default = "default_stop")]
    pub stop: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Tune each law at nominal before sweeping (requires `[tune]`).
    #[serde(default = "default_true")]
    pub tuned: bool,
}

fn all_params() -> Vec<PlantParam> {
    PlantParam::ALL.to_vec()
}

fn default_start() -> f64 {
    1.0
}

fn default_stop() -> f64 {
    300.0
}

fn default_step() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Steady-state deviation sweep of the lifted plant matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    /// Lowest and highest frequency in Hz.
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    #[serde(default = "both_phases")]
    pub phases: Vec<Phase>,
}

fn both_phases() -> Vec<Phase> {
    vec![Phase::Sin, Phase::Cos]
}

impl DeviationConfig {
    /// Evenly spaced frequencies in rad/s.
    pub fn omegas(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![2.0 * PI * self.f_min];
        }
        let df = (self.f_max - self.f_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| 2.0 * PI * (self.f_min + i as f64 * df)).collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| IlcError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            IlcError::Parse(msg) => IlcError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolved configuration, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return invalid(format!("sample_rate must be positive, got {}", self.sample_rate));
        }
        if self.steps == 0 {
            return invalid("steps must be at least 1");
        }
        if self.skip >= self.steps {
            return invalid(format!(
                "skip = {} with steps = {} leaves an empty 0x0 iteration matrix",
                self.skip, self.steps
            ));
        }
        if self.approaches.is_empty() {
            return invalid("approaches must list at least one law");
        }
        let uses_fir = self.approaches.iter().any(|a| a.is_fir());
        if uses_fir {
            let n = self.fir.n.unwrap_or(self.steps);
            if n == 0 {
                return invalid("fir.n must be at least 1");
            }
            if let Some(m) = self.fir.m {
                if m == 0 || m > n {
                    return invalid(format!("fir.m = {m} must lie in 1..={n}"));
                }
            }
            if !(self.fir.grid_step_deg > 0.0 && self.fir.grid_step_deg <= 180.0) {
                return invalid("fir.grid_step_deg must lie in (0, 180]");
            }
        }
        if self.circulant.extension_factor == 0 {
            return invalid("circulant.extension_factor must be at least 1");
        }
        if let Some(t) = &self.tune {
            if !(t.target > 0.0 && t.target < 1.0) {
                return invalid(format!("tune.target must lie in (0, 1), got {}", t.target));
            }
            for key in t.blocks.keys() {
                key.parse::<LawVariant>()?;
            }
            for a in &self.approaches {
                t.blocks_for(*a)?;
            }
        }
        if (self.run.tuned || self.sweep.as_ref().is_some_and(|s| s.tuned)) && self.tune.is_none() {
            return invalid("tuned runs and sweeps need a [tune] section");
        }
        if let Some(tr) = &self.trajectory {
            tr.kind()?;
        }
        if let Some(s) = &self.sweep {
            if s.params.is_empty() {
                return invalid("sweep.params is empty");
            }
            crate::analysis::percent_grid(s.start, s.stop, s.step)?;
        }
        if let Some(d) = &self.deviation {
            if d.points == 0 || !(d.f_min >= 0.0 && d.f_max >= d.f_min) {
                return invalid("deviation needs points >= 1 and 0 <= f_min <= f_max");
            }
            if 2.0 * d.f_max > self.sample_rate {
                return invalid(format!("deviation.f_max = {} Hz is above Nyquist", d.f_max));
            }
        }
        Ok(())
    }
}
