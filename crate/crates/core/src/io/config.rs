use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;
use crate::error::IoError;
use crate::geom::PrepConfig;
use crate::model::ScenarioConfig;
use crate::solver::Budget;
use crate::units::Rate;

/// Environment variable that overrides `run.workers`.
pub const WORKERS_ENV: &str = "DOUBLETOPT_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    pub buffer_m: f64,
    pub initial_spacing_m: f64,
    pub spacing_step_m: f64,
    pub max_wells: usize,
    pub min_well_rate_l_s: f64,
}

impl Default for PrepSection {
    fn default() -> Self {
        let p = PrepConfig::default();
        PrepSection {
            buffer_m: p.buffer_m,
            initial_spacing_m: p.initial_spacing,
            spacing_step_m: p.spacing_step,
            max_wells: p.max_wells,
            min_well_rate_l_s: p.min_well_rate.l_per_s(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub delta_min_m: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { delta_min_m: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub q_min_l_s: f64,
    pub r_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_nodes: u64,
    pub max_time_s: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let b = Budget::default();
        SolverSection {
            max_nodes: b.max_nodes,
            max_time_s: b.max_time.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// 0 picks one worker per core.
    pub workers: usize,
    /// Write per-block solve times (makes output non-reproducible).
    pub timings: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub geometry: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// Points farther than this from every sample have no data, m.
    pub max_lookup_distance_m: Option<f64>,
}

/// Contents of a run configuration file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format_version: u32,
    pub prep: PrepSection,
    pub model: ModelSection,
    /// Empty means the six-scenario standard matrix.
    pub scenarios: Vec<ScenarioEntry>,
    pub solver: SolverSection,
    pub run: RunSection,
    pub paths: PathsSection,
    pub field: FieldSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: FORMAT_VERSION,
            prep: PrepSection::default(),
            model: ModelSection::default(),
            scenarios: Vec::new(),
            solver: SolverSection::default(),
            run: RunSection::default(),
            paths: PathsSection::default(),
            field: FieldSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse and validate; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let ctx = e
                .span()
                .map(|s| format!("line {}", text[..s.start].lines().count().max(1)))
                .unwrap_or_else(|| "document".into());
            IoError::parse(path, ctx, e.message())
        })?;
        cfg.validate().map_err(|rule| IoError::Validation {
            path: path.to_path_buf(),
            row: 0,
            rule,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "format_version {} is not supported, expected {FORMAT_VERSION}",
                self.format_version
            ));
        }
        self.prep_config().validate().map_err(|e| e.to_string())?;
        for s in self.scenario_configs()? {
            s.validate().map_err(|e| e.to_string())?;
        }
        if !(self.solver.max_time_s > 0.0 && self.solver.max_time_s.is_finite()) {
            return Err("solver.max_time_s must be > 0".into());
        }
        if self.solver.max_nodes == 0 {
            return Err("solver.max_nodes must be >= 1".into());
        }
        if let Some(d) = self.field.max_lookup_distance_m {
            if !(d > 0.0) {
                return Err("field.max_lookup_distance_m must be > 0".into());
            }
        }
        Ok(())
    }

    pub fn prep_config(&self) -> PrepConfig {
        PrepConfig {
            buffer_m: self.prep.buffer_m,
            initial_spacing: self.prep.initial_spacing_m,
            spacing_step: self.prep.spacing_step_m,
            max_wells: self.prep.max_wells,
            min_well_rate: Rate::from_l_per_s(self.prep.min_well_rate_l_s),
        }
    }

    pub fn scenario_configs(&self) -> Result<Vec<ScenarioConfig>, String> {
        if self.scenarios.is_empty() {
            return Ok(ScenarioConfig::standard_matrix(self.model.delta_min_m));
        }
        self.scenarios
            .iter()
            .map(|s| {
                ScenarioConfig::new(Rate::from_l_per_s(s.q_min_l_s), s.r_delta, self.model.delta_min_m)
                    .map_err(|e| e.to_string())
            })
            .collect()
    }

    pub fn budget(&self) -> Budget {
        Budget {
            max_nodes: self.solver.max_nodes,
            max_time: Duration::from_secs_f64(self.solver.max_time_s),
        }
    }

    /// `run.workers`, unless the environment variable says otherwise.
    pub fn workers(&self) -> Result<usize, String> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| format!("{WORKERS_ENV}={v:?} is not a worker count")),
            Err(_) => Ok(self.run.workers),
        }
    }
}
