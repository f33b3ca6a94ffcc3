//! Run configuration shared by the CLI stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dcfm::{Architecture, Parameterization, Schedule, TrainConfig, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::gwot::{AdaptiveOptions, GwotOptions};
use crate::synth::TargetDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// Label indicator `k = 1[l_i = l_j]`.
    #[default]
    Image,
    Rbf,
    Molecule,
    NegSqdist,
    Sqdist,
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| Error::Config {
            field: "kernel",
            message: format!("unknown kernel `{s}` (expected image, rbf, molecule, neg_sqdist or sqdist)"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterizationChoice {
    #[default]
    Velocity,
    Endpoint,
}

impl From<ParameterizationChoice> for Parameterization {
    fn from(p: ParameterizationChoice) -> Self {
        match p {
            ParameterizationChoice::Velocity => Parameterization::Velocity,
            ParameterizationChoice::Endpoint => Parameterization::Endpoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleChoice {
    #[default]
    Linear,
    Trig,
}

impl From<ScheduleChoice> for Schedule {
    fn from(s: ScheduleChoice) -> Self {
        match s {
            ScheduleChoice::Linear => Schedule::Linear,
            ScheduleChoice::Trig => Schedule::Trig,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub epsilon_init: f64,
    pub tau: f64,
    /// Defaults to `epsilon_init / 1024`.
    pub delta: Option<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub mixture_weight: f64,
    pub knn_k: usize,
    #[serde(rename = "steps_T")]
    pub steps_t: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub max_ot_points: usize,
    pub target_dist: TargetDist,
    pub d_y: usize,
    pub deterministic: bool,
    pub kernel: KernelChoice,
    /// Kernel bandwidth; the median heuristic when absent.
    pub sigma: Option<f64>,
    pub hidden: Vec<usize>,
    pub schedule: ScheduleChoice,
    pub parameterization: ParameterizationChoice,
    pub weight_decay: f64,
    pub metric_epsilon: f64,
    /// Independent generation runs aggregated by `eval`.
    pub eval_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon_init: 0.01,
            tau: 1e-6,
            delta: None,
            eta: 0.95,
            alpha: 0.5,
            mixture_weight: 0.5,
            knn_k: 5,
            steps_t: 100,
            lr: 1e-4,
            epochs: 200,
            batch: 128,
            seed: 0,
            max_ot_points: 10_000,
            target_dist: TargetDist::Gaussian,
            d_y: 2,
            deterministic: true,
            kernel: KernelChoice::Image,
            sigma: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            schedule: ScheduleChoice::Linear,
            parameterization: ParameterizationChoice::Velocity,
            weight_decay: 1e-4,
            metric_epsilon: 1e-2,
            eval_runs: 3,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config {
            field,
            message: format!("must be positive and finite, got {v}"),
        })
    }
}

fn open_unit(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config {
            field,
            message: format!("must lie in (0, 1), got {v}"),
        })
    }
}

fn at_least(field: &'static str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::Config {
            field,
            message: format!("must be at least {min}, got {v}"),
        })
    }
}

impl RunConfig {
    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.epsilon_init / 1024.0)
    }

    pub fn validate(&self) -> Result<()> {
        positive("epsilon_init", self.epsilon_init)?;
        positive("tau", self.tau)?;
        positive("delta", self.delta())?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config {
                field: "eta",
                message: format!("must lie in (0, 1], got {}", self.eta),
            });
        }
        open_unit("alpha", self.alpha)?;
        open_unit("mixture_weight", self.mixture_weight)?;
        at_least("knn_k", self.knn_k, 1)?;
        at_least("steps_T", self.steps_t, 1)?;
        positive("lr", self.lr)?;
        at_least("epochs", self.epochs, 1)?;
        at_least("batch", self.batch, 1)?;
        at_least("max_ot_points", self.max_ot_points, 2)?;
        at_least("d_y", self.d_y, 1)?;
        if let Some(s) = self.sigma {
            positive("sigma", s)?;
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config {
                field: "hidden",
                message: "need at least one layer, all widths positive".into(),
            });
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config {
                field: "weight_decay",
                message: format!("must be non-negative, got {}", self.weight_decay),
            });
        }
        positive("metric_epsilon", self.metric_epsilon)?;
        at_least("eval_runs", self.eval_runs, 1)?;
        if self.target_dist == TargetDist::UnitCircle && self.d_y != 2 {
            return Err(Error::Config {
                field: "target_dist",
                message: format!("unit_circle needs d_y = 2, got {}", self.d_y),
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adaptive_options(&self) -> AdaptiveOptions {
        AdaptiveOptions {
            eps_init: self.epsilon_init,
            delta: self.delta(),
            gwot: GwotOptions {
                tau: self.tau,
                ..Default::default()
            },
            fail_below: None,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            steps_per_epoch: None,
        }
    }

    pub fn architecture(&self, d_x: usize) -> Architecture {
        Architecture::new(d_x, self.d_y)
            .with_hidden(self.hidden.clone())
            .with_schedule(self.schedule.into())
            .with_parameterization(self.parameterization.into())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(&text, path)
}
