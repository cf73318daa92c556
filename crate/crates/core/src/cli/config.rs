use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::experiments::{DataSettings, EvalSettings, ModelSettings, OptimizerSettings, Setup};
use crate::losses::{LossError, LossSpec, LossVariant};
use crate::trainer::TrainError;

/// Config problem located by its JSON field path (`loss.m`, `seeds[2]`).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config at `{path}`: {detail}")]
pub struct ConfigError {
    pub path: String,
    pub detail: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSettings {
    pub variant: LossVariant,
    pub s: f64,
    pub m: f64,
}

impl LossSettings {
    pub fn spec(&self) -> Result<LossSpec, LossError> {
        LossSpec::new(self.variant, self.s, self.m)
    }
}

/// One JSON document describing data, model, loss, optimizer, evaluation,
/// seeds, margin grid and output directory. Keys missing from a file are
/// filled from the command's preset; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSettings,
    pub model: ModelSettings,
    pub loss: LossSettings,
    pub training: OptimizerSettings,
    pub evaluation: EvalSettings,
    pub seeds: Vec<u64>,
    pub m_grid: Vec<f64>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// 8 classes, 2-D features, LMCL with s = 30, m = 0.2, seeds 1-3, margins
    /// 0, 0.1 and 0.2.
    pub fn toy() -> Self {
        let setup = Setup::default();
        Self {
            data: setup.data,
            model: setup.model,
            loss: LossSettings {
                variant: LossVariant::Lmcl,
                s: 30.0,
                m: 0.2,
            },
            training: setup.training,
            evaluation: setup.evaluation,
            seeds: vec![1, 2, 3],
            m_grid: vec![0.0, 0.1, 0.2],
            out: PathBuf::from("runs"),
        }
    }

    /// Toy settings on harder data ([`Setup::verification`]) with margins
    /// from 0 to well past the scope bound.
    pub fn sweep() -> Self {
        let setup = Setup::verification();
        Self {
            data: setup.data,
            m_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.9],
            ..Self::toy()
        }
    }

    /// Parses `text` over `base`: objects merge key by key, everything else
    /// replaces the base value. The result is validated.
    pub fn from_json_over(text: &str, base: &Self) -> Result<Self, ConfigError> {
        let patch: Value = serde_json::from_str(text).map_err(|e| {
            ConfigError::new(
                "",
                format!(
                    "not valid JSON (line {}, column {}): {e}",
                    e.line(),
                    e.column()
                ),
            )
        })?;
        if !patch.is_object() {
            return Err(ConfigError::new("", "config must be a JSON object"));
        }
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge(&mut merged, patch);
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn setup(&self) -> Setup {
        Setup {
            data: self.data.clone(),
            model: self.model.clone(),
            training: self.training.clone(),
            evaluation: self.evaluation.clone(),
        }
    }

    pub fn spec(&self) -> Result<LossSpec, ConfigError> {
        self.loss.spec().map_err(|e| match e {
            LossError::Config { field, detail } => {
                ConfigError::new(format!("loss.{field}"), detail)
            }
            other => ConfigError::new("loss", other.to_string()),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec()?;
        let setup = self.setup();
        setup
            .blob_spec(0)
            .validate()
            .map_err(|e| prefixed("data", e))?;
        setup
            .train_config(LossSpec::softmax(), 0)
            .validate()
            .map_err(|e| prefixed("training", e))?;
        if let Some(i) = self.model.hidden.iter().position(|&w| w == 0) {
            return Err(ConfigError::new(
                format!("model.hidden[{i}]"),
                "layer width must be >= 1",
            ));
        }
        if self.model.feature_dim < 2 {
            return Err(ConfigError::new(
                "model.feature_dim",
                format!("need >= 2, got {}", self.model.feature_dim),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "need at least one seed"));
        }
        for (i, m) in self.m_grid.iter().enumerate() {
            if !(0.0..1.0).contains(m) {
                return Err(ConfigError::new(
                    format!("m_grid[{i}]"),
                    format!("margin must lie in [0, 1), got {m}"),
                ));
            }
        }
        let e = &self.evaluation;
        if e.held_out_per_class < 2 {
            return Err(ConfigError::new(
                "evaluation.held_out_per_class",
                "need >= 2",
            ));
        }
        if e.pairs == 0 {
            return Err(ConfigError::new("evaluation.pairs", "need >= 1"));
        }
        for (i, f) in e.far.iter().enumerate() {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(ConfigError::new(
                    format!("evaluation.far[{i}]"),
                    format!("must lie in (0, 1], got {f}"),
                ));
            }
        }
        Ok(())
    }
}

fn prefixed(section: &str, e: TrainError) -> ConfigError {
    match e {
        TrainError::Config { field, detail } => {
            ConfigError::new(format!("{section}.{field}"), detail)
        }
        other => ConfigError::new(section, other.to_string()),
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
