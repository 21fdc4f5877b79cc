use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{Matrix, Vector};
use crate::ridge::SolveMode;
use crate::spectral::BlockKernelSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Akd,
    Avgkd,
    Pkd,
    Ekd,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Akd, Scheme::Avgkd, Scheme::Pkd, Scheme::Ekd];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Akd => "akd",
            Scheme::Avgkd => "avgkd",
            Scheme::Pkd => "pkd",
            Scheme::Ekd => "ekd",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}` (expected akd, avgkd, pkd or ekd)")))
    }
}

/// One participant: private data, kernel, and fitting rule.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub data: Dataset,
    pub kernel: KernelSpec,
    pub reg: f64,
    pub mode: SolveMode,
}

impl AgentSpec {
    pub fn new(data: Dataset, kernel: KernelSpec, reg: f64) -> Self {
        AgentSpec {
            data,
            kernel,
            reg,
            mode: SolveMode::Regularized,
        }
    }

    pub fn min_norm(data: Dataset, kernel: KernelSpec) -> Self {
        AgentSpec {
            data,
            kernel,
            reg: 0.0,
            mode: SolveMode::MinNorm,
        }
    }

    /// The regularization actually applied (zero in min-norm mode).
    pub fn effective_reg(&self) -> f64 {
        match self.mode {
            SolveMode::Regularized => self.reg,
            SolveMode::MinNorm => 0.0,
        }
    }
}

/// Named query points; `truth` enables error metrics.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub name: String,
    pub inputs: Matrix,
    pub truth: Option<Vector>,
}

impl EvalSet {
    pub fn new(name: impl Into<String>, inputs: Matrix) -> Self {
        EvalSet {
            name: name.into(),
            inputs,
            truth: None,
        }
    }

    pub fn from_dataset(name: impl Into<String>, data: &Dataset) -> Self {
        EvalSet {
            name: name.into(),
            inputs: data.inputs().clone(),
            truth: Some(data.labels().clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub scheme: Scheme,
    pub agents: Vec<AgentSpec>,
    /// Model passings for AKD/EKD, synchronized rounds for AvgKD/PKD.
    pub rounds: usize,
    /// First agent to fit in AKD.
    pub start_agent: usize,
    pub eval_sets: Vec<EvalSet>,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(scheme: Scheme, agents: Vec<AgentSpec>, rounds: usize) -> Self {
        ProtocolConfig {
            scheme,
            agents,
            rounds,
            start_agent: 0,
            eval_sets: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_start_agent(mut self, agent: usize) -> Self {
        self.start_agent = agent;
        self
    }

    pub fn with_eval_set(mut self, set: EvalSet) -> Self {
        self.eval_sets.push(set);
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a protocol needs at least two agents, got {}",
                self.agents.len()
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.start_agent >= self.agents.len() {
            return Err(Error::InvalidConfig(format!(
                "start agent {} out of range for {} agents",
                self.start_agent,
                self.agents.len()
            )));
        }
        let dim = self.agents[0].data.dim();
        for (i, a) in self.agents.iter().enumerate() {
            a.kernel.validate()?;
            if a.data.is_empty() {
                return Err(Error::InvalidConfig(format!("agent {} has no data", i + 1)));
            }
            if a.data.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "ProtocolConfig (agent feature dimension)",
                    expected: dim,
                    found: a.data.dim(),
                });
            }
            if !(a.reg.is_finite() && a.reg >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "agent {} regularization must be nonnegative, got {}",
                    i + 1,
                    a.reg
                )));
            }
        }
        for e in &self.eval_sets {
            if e.inputs.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "ProtocolConfig (eval set feature dimension)",
                    expected: dim,
                    found: e.inputs.ncols(),
                });
            }
        }
        Ok(())
    }

    /// Pooled sample count used for every Gram scaling in the protocol.
    pub fn total_samples(&self) -> usize {
        self.agents.iter().map(|a| a.data.len()).sum()
    }

    /// Shared regularization and mode, required by the algebraic forms.
    pub fn shared_fit(&self) -> Result<(f64, SolveMode)> {
        let first = &self.agents[0];
        for a in &self.agents[1..] {
            if a.mode != first.mode || a.effective_reg() != first.effective_reg() {
                return Err(Error::ConfigMismatch(
                    "closed forms need every agent to share the same regularization and solve mode".into(),
                ));
            }
        }
        Ok((first.effective_reg(), first.mode))
    }

    /// The block kernel system matching this configuration.
    pub fn block_system(&self) -> Result<BlockKernelSystem> {
        self.validate()?;
        let (c, mode) = self.shared_fit()?;
        let data: Vec<&Dataset> = self.agents.iter().map(|a| &a.data).collect();
        let kernels: Vec<KernelSpec> = self.agents.iter().map(|a| a.kernel).collect();
        Ok(BlockKernelSystem::assemble(&data, &kernels, c)?.with_mode(mode))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(n: usize) -> AgentSpec {
        let d = Dataset::new("a", Matrix::from_fn(n, 2, |i, j| (i + j) as f64), Vector::zeros(n)).unwrap();
        AgentSpec::new(d, KernelSpec::rbf(1.0), 0.1)
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("fedavg".parse::<Scheme>().is_err());
    }

    #[test]
    fn validation_rules() {
        assert!(ProtocolConfig::new(Scheme::Akd, vec![agent(2)], 3).validate().is_err());
        assert!(ProtocolConfig::new(Scheme::Akd, vec![agent(2), agent(3)], 0).validate().is_err());
        let cfg = ProtocolConfig::new(Scheme::Akd, vec![agent(2), agent(3)], 3).with_start_agent(2);
        assert!(cfg.validate().is_err());
        let cfg = ProtocolConfig::new(Scheme::Akd, vec![agent(2), agent(3)], 3)
            .with_eval_set(EvalSet::new("bad", Matrix::zeros(1, 3)));
        assert!(matches!(cfg.validate(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mixed_regularization_has_no_block_system() {
        let mut b = agent(3);
        b.reg = 0.2;
        let cfg = ProtocolConfig::new(Scheme::Akd, vec![agent(2), b], 3);
        assert!(matches!(cfg.block_system(), Err(Error::ConfigMismatch(_))));
    }
}
