use std::io::Write;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{sup_norm, Vector};
use crate::protocols::config::Scheme;
use crate::ridge::{RidgeModel, SolveMode};

/// One model fitted during a run.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub agent: usize,
    /// Labels the model was fitted on (true or distilled).
    pub labels: Vector,
    pub model: RidgeModel,
    /// Predictions on every agent's training inputs, by agent.
    pub on_agents: Vec<Vector>,
    /// Predictions on each configured eval set, in configuration order.
    pub on_eval: Vec<Vector>,
}

/// Everything fitted in one step of a protocol.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// Synchronized round (AvgKD/PKD) or completed cycles over all agents (AKD).
    pub round: usize,
    /// Model passings before this record (AKD: the passing index itself).
    pub passing: usize,
    pub fits: Vec<FittedModel>,
}

impl RoundRecord {
    pub fn fit_of(&self, agent: usize) -> Option<&FittedModel> {
        self.fits.iter().find(|f| f.agent == agent)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub start_agent: usize,
    pub agent_sizes: Vec<usize>,
    pub kernels: Vec<KernelSpec>,
    pub regs: Vec<f64>,
    pub modes: Vec<SolveMode>,
    pub eval_names: Vec<String>,
    pub records: Vec<RoundRecord>,
    /// Notes attached by the run, e.g. settings outside the analyzed regime.
    pub flags: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.agent_sizes.len()
    }

    /// Name of the block of agent `i`'s training inputs in exports.
    pub fn agent_block_name(i: usize) -> String {
        format!("x{}", i + 1)
    }

    pub fn eval_index(&self, name: &str) -> Result<usize> {
        self.eval_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("no eval set named `{name}`")))
    }

    /// CSV with columns `scheme,round,agent,eval_set,metric,value`; one row per
    /// fitted model, evaluation block and norm (`sup_norm`, `l2_norm`).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "scheme,round,agent,eval_set,metric,value")?;
        for rec in &self.records {
            let step = if self.scheme == Scheme::Akd || self.scheme == Scheme::Ekd {
                rec.passing
            } else {
                rec.round
            };
            for fit in &rec.fits {
                let blocks = fit
                    .on_agents
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (Self::agent_block_name(i), p))
                    .chain(self.eval_names.iter().cloned().zip(fit.on_eval.iter()));
                for (name, pred) in blocks {
                    for (metric, value) in [("sup_norm", sup_norm(pred)), ("l2_norm", pred.norm())] {
                        writeln!(
                            w,
                            "{},{},{},{},{},{:e}",
                            self.scheme,
                            step,
                            fit.agent + 1,
                            name,
                            metric,
                            value
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}
