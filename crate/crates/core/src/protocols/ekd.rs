//! Ensembled distillation: the alternating-sign sum of AKD models from one
//! chain per starting agent,
//!
//! ```text
//! S_T(x) = sum_{t <= T} (-1)^t sum_i g_t^i(x).
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::linalg::{sup_norm, Matrix, Vector};
use crate::protocols::config::{ProtocolConfig, Scheme};
use crate::protocols::simulate::run_akd;
use crate::protocols::trajectory::Trajectory;

/// Default truncation: 500 terms.
pub const EKD_MAX_TERMS: usize = 500;
/// Increments below this sup-norm end the series.
pub const EKD_INCREMENT_TOL: f64 = 1e-10;
/// Window over which increments must shrink.
pub const EKD_DIVERGENCE_WINDOW: usize = 10;
/// Relative shrinkage over a window below which increments count as stalled.
const EKD_STALL_RTOL: f64 = 1e-8;

/// Truncated alternating ensemble. Models of the same agent share inputs and
/// kernel, so the sum is stored as one aggregated dual-weight vector per agent.
#[derive(Debug, Clone)]
pub struct EnsemblePredictor {
    kernels: Vec<KernelSpec>,
    inputs: Vec<Arc<Matrix>>,
    scale_count: usize,
    dual_weights: Vec<Vector>,
    /// Number of series terms summed (`T + 1`).
    pub terms: usize,
    /// Number of member models (`terms` times the number of chains).
    pub members: usize,
    /// Sup-norm of each term over all agents' inputs and eval sets.
    pub increments: Vec<f64>,
    /// Stopped because an increment fell below the tolerance.
    pub converged: bool,
    /// Increments failed to decrease over some window.
    pub divergent: bool,
    /// Partial sums on each agent's inputs, `partial_on_agents[t][agent]`.
    pub partial_on_agents: Vec<Vec<Vector>>,
    /// Partial sums on each eval set, `partial_on_eval[t][set]`.
    pub partial_on_eval: Vec<Vec<Vector>>,
}

impl EnsemblePredictor {
    pub fn predict(&self, query: &Matrix) -> Result<Vector> {
        let mut out = Vector::zeros(query.nrows());
        for ((k, x), a) in self.kernels.iter().zip(&self.inputs).zip(&self.dual_weights) {
            out += gram_matrix(k, query, x, self.scale_count)? * a;
        }
        Ok(out)
    }

    /// Aggregated dual weights per agent.
    pub fn dual_weights(&self) -> &[Vector] {
        &self.dual_weights
    }

    /// `S_T` on each agent's training inputs.
    pub fn on_agents(&self) -> &[Vector] {
        self.partial_on_agents.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// `S_T` on each eval set.
    pub fn on_eval(&self) -> &[Vector] {
        self.partial_on_eval.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn last_increment(&self) -> f64 {
        self.increments.last().copied().unwrap_or(0.0)
    }
}

/// Sums the chains term by term up to `t_max` terms, stopping early once an
/// increment drops below [`EKD_INCREMENT_TOL`]. `chains[i]` must be the AKD
/// trajectory started at agent `i`.
pub fn ekd_ensemble(chains: &[Trajectory], t_max: usize) -> Result<EnsemblePredictor> {
    let m = chains.len();
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidInput("EKD needs one AKD chain per agent".into()))?;
    if m != first.agents() {
        return Err(Error::ConfigMismatch(format!(
            "EKD needs one chain per agent: {} chains for {} agents",
            m,
            first.agents()
        )));
    }
    for (i, c) in chains.iter().enumerate() {
        if !matches!(c.scheme, Scheme::Akd | Scheme::Ekd) || c.start_agent != i {
            return Err(Error::ConfigMismatch(format!(
                "chain {} must be an AKD run started at agent {}",
                i + 1,
                i + 1
            )));
        }
        if c.eval_names != first.eval_names || c.agent_sizes != first.agent_sizes {
            return Err(Error::ConfigMismatch("EKD chains disagree on agents or eval sets".into()));
        }
    }
    let available = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let terms_max = t_max.min(available);
    if terms_max == 0 {
        return Err(Error::InvalidInput("EKD chains are empty".into()));
    }
    let sample = &first.records[0].fits[0];
    let mut dual_weights: Vec<Vector> = first.agent_sizes.iter().map(|&n| Vector::zeros(n)).collect();
    let mut kernels = first.kernels.clone();
    let mut inputs: Vec<Option<Arc<Matrix>>> = vec![None; m];
    let mut on_agents: Vec<Vector> = sample.on_agents.iter().map(|v| Vector::zeros(v.len())).collect();
    let mut on_eval: Vec<Vector> = sample.on_eval.iter().map(|v| Vector::zeros(v.len())).collect();
    let mut out = EnsemblePredictor {
        kernels: Vec::new(),
        inputs: Vec::new(),
        scale_count: sample.model.scale_count,
        dual_weights: Vec::new(),
        terms: 0,
        members: 0,
        increments: Vec::new(),
        converged: false,
        divergent: false,
        partial_on_agents: Vec::new(),
        partial_on_eval: Vec::new(),
    };
    for t in 0..terms_max {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        let mut inc_agents: Vec<Vector> = on_agents.iter().map(|v| Vector::zeros(v.len())).collect();
        let mut inc_eval: Vec<Vector> = on_eval.iter().map(|v| Vector::zeros(v.len())).collect();
        for chain in chains {
            let fit = &chain.records[t].fits[0];
            dual_weights[fit.agent] += &fit.model.dual_weights * sign;
            kernels[fit.agent] = fit.model.kernel;
            inputs[fit.agent].get_or_insert_with(|| Arc::clone(&fit.model.train_inputs));
            for (acc, p) in inc_agents.iter_mut().zip(&fit.on_agents) {
                *acc += p;
            }
            for (acc, p) in inc_eval.iter_mut().zip(&fit.on_eval) {
                *acc += p;
            }
        }
        let inc = inc_agents
            .iter()
            .chain(inc_eval.iter())
            .map(sup_norm)
            .fold(0.0, f64::max);
        for (acc, p) in on_agents.iter_mut().zip(&inc_agents) {
            *acc += p * sign;
        }
        for (acc, p) in on_eval.iter_mut().zip(&inc_eval) {
            *acc += p * sign;
        }
        out.increments.push(inc);
        out.partial_on_agents.push(on_agents.clone());
        out.partial_on_eval.push(on_eval.clone());
        out.terms = t + 1;
        if t >= EKD_DIVERGENCE_WINDOW
            && inc > EKD_INCREMENT_TOL
            && inc >= out.increments[t - EKD_DIVERGENCE_WINDOW] * (1.0 - EKD_STALL_RTOL)
        {
            out.divergent = true;
        }
        if t > 0 && inc < EKD_INCREMENT_TOL {
            out.converged = true;
            break;
        }
    }
    out.members = out.terms * m;
    out.kernels = kernels;
    out.scale_count = sample.model.scale_count;
    // term 0 holds every agent's first model, so each slot is filled
    out.inputs = inputs.into_iter().map(|x| x.expect("agent model present")).collect();
    out.dual_weights = dual_weights;
    Ok(out)
}

/// EKD run: one AKD chain per starting agent plus their truncated ensemble.
#[derive(Debug, Clone)]
pub struct EkdRun {
    pub chains: Vec<Trajectory>,
    pub ensemble: EnsemblePredictor,
}

/// Runs one AKD chain of `config.rounds` passings from every agent (in
/// parallel) and sums them; the series is truncated at `config.rounds` terms.
pub fn run_ekd(config: &ProtocolConfig) -> Result<EkdRun> {
    config.validate()?;
    let chains = (0..config.agents.len())
        .into_par_iter()
        .map(|start| {
            let cfg = ProtocolConfig {
                scheme: Scheme::Akd,
                start_agent: start,
                ..config.clone()
            };
            run_akd(&cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = ekd_ensemble(&chains, config.rounds)?;
    Ok(EkdRun { chains, ensemble })
}
