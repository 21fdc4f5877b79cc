use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::SplitSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::protocols::Scheme;
use crate::ridge::SolveMode;

fn default_ratio() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Standard-normal linear regression, `round(ratio * d)` samples.
    Synthetic {
        d: usize,
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default)]
        noise: f64,
    },
    /// Dataset CSV; relative paths resolve against the config file's directory.
    Csv { path: String },
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSplit {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl Default for EvalSplit {
    fn default() -> Self {
        EvalSplit {
            train_fraction: default_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub mode: SolveMode,
}

/// Grid expanded by `sweep`; empty axes are left at the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Regularization applied to every agent.
    #[serde(default)]
    pub c: Vec<f64>,
    /// Heterogeneity of an `alpha_mix` split.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub seed: Vec<u64>,
}

fn default_verify() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub data: DataSource,
    #[serde(default)]
    pub eval_split: EvalSplit,
    pub split: SplitSpec,
    pub agents: Vec<AgentConfig>,
    pub schemes: Vec<Scheme>,
    /// AKD/EKD passings per chain, or AvgKD/PKD rounds.
    pub rounds: usize,
    #[serde(default)]
    pub start_agent: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Compare each simulated run against its closed form.
    #[serde(default = "default_verify")]
    pub verify: bool,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("at least one scheme is required".into()));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::InvalidConfig(format!("scheme `{s}` listed twice")));
            }
        }
        if self.agents.len() < 2 {
            return Err(Error::InvalidConfig("at least two agents are required".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.start_agent >= self.agents.len() {
            return Err(Error::InvalidConfig(format!(
                "start_agent {} out of range for {} agents",
                self.start_agent,
                self.agents.len()
            )));
        }
        for a in &self.agents {
            a.kernel.validate()?;
            if !(a.c.is_finite() && a.c >= 0.0) {
                return Err(Error::InvalidConfig(format!("agent c must be nonnegative, got {}", a.c)));
            }
        }
        self.split.validate()?;
        let f = self.eval_split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("train_fraction must lie in (0, 1), got {f}")));
        }
        Ok(())
    }
}

/// A parsed config together with the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// The config text exactly as read.
    pub snapshot: String,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
    /// `key=value` overrides applied after parsing, in order.
    pub overrides: Vec<String>,
}

impl LoadedConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            snapshot: text.to_string(),
            base_dir: base_dir.into(),
            overrides: Vec::new(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| e.context(path.display().to_string()))
    }

    /// Applies `key=value` overrides with dotted keys into the config, e.g.
    /// `rounds=50` or `agents.0.c=0.1`. Keys must already exist in the
    /// fully expanded config; values are parsed as JSON, falling back to a
    /// plain string.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut value = serde_json::to_value(&self.config)?;
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{ov}` is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let slot = key
                .split('.')
                .try_fold(&mut value, |v, part| match v {
                    Value::Object(map) => map.get_mut(part),
                    Value::Array(items) => part.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
                    _ => None,
                })
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
            *slot = parsed;
        }
        let config: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("after overrides: {e}")))?;
        config.validate()?;
        self.config = config;
        self.overrides.extend(overrides.iter().cloned());
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
