//! Round-by-round protocol simulation: every step fits real KRR models and
//! exchanges their predictions, nothing is taken from the algebraic forms.

use rayon::prelude::*;

use crate::error::Result;
use crate::kernel::gram_matrix;
use crate::linalg::{Matrix, Vector};
use crate::protocols::config::{ProtocolConfig, Scheme};
use crate::protocols::trajectory::{FittedModel, RoundRecord, Trajectory};
use crate::ridge::{RidgeSolver, SolveMode};

/// Per-agent factorizations and cached prediction kernels for one run.
pub(crate) struct Engine<'a> {
    config: &'a ProtocolConfig,
    solvers: Vec<RidgeSolver>,
    /// `cross[a][j] = k_a(X_j, X_a) / N`.
    cross: Vec<Vec<Matrix>>,
    /// `eval_cross[a][e] = k_a(E_e, X_a) / N`.
    eval_cross: Vec<Vec<Matrix>>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(config: &'a ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let n = config.total_samples();
        let solvers = config
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                RidgeSolver::new(a.data.shared_inputs(), a.kernel, a.effective_reg(), n, a.mode)
                    .map_err(|e| e.context(format!("agent {}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let cross = config
            .agents
            .iter()
            .map(|a| {
                config
                    .agents
                    .iter()
                    .map(|b| gram_matrix(&a.kernel, b.data.inputs(), a.data.inputs(), n))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let eval_cross = config
            .agents
            .iter()
            .map(|a| {
                config
                    .eval_sets
                    .iter()
                    .map(|e| gram_matrix(&a.kernel, &e.inputs, a.data.inputs(), n))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            config,
            solvers,
            cross,
            eval_cross,
        })
    }

    /// Fits agent `agent` on `labels` and evaluates the model everywhere.
    pub(crate) fn fit(&self, agent: usize, labels: Vector) -> Result<FittedModel> {
        let model = self.solvers[agent].fit(&labels)?;
        let alpha = &model.dual_weights;
        let on_agents = self.cross[agent].iter().map(|k| k * alpha).collect();
        let on_eval = self.eval_cross[agent].iter().map(|k| k * alpha).collect();
        Ok(FittedModel {
            agent,
            labels,
            model,
            on_agents,
            on_eval,
        })
    }

    fn fit_all(&self, labels: Vec<Vector>) -> Result<Vec<FittedModel>> {
        labels
            .into_par_iter()
            .enumerate()
            .map(|(i, y)| self.fit(i, y))
            .collect()
    }

    pub(crate) fn empty_trajectory(&self, scheme: Scheme) -> Trajectory {
        let c = self.config;
        Trajectory {
            scheme,
            start_agent: c.start_agent,
            agent_sizes: c.agents.iter().map(|a| a.data.len()).collect(),
            kernels: c.agents.iter().map(|a| a.kernel).collect(),
            regs: c.agents.iter().map(|a| a.effective_reg()).collect(),
            modes: c.agents.iter().map(|a| a.mode).collect(),
            eval_names: c.eval_sets.iter().map(|e| e.name.clone()).collect(),
            records: Vec::new(),
            flags: Vec::new(),
        }
    }

    fn true_labels(&self) -> Vec<Vector> {
        self.config.agents.iter().map(|a| a.data.labels().clone()).collect()
    }
}

/// Runs the configured scheme. EKD runs return the trajectory started at the
/// configured agent; use [`crate::protocols::run_ekd`] for the ensemble.
pub fn run_protocol(config: &ProtocolConfig) -> Result<Trajectory> {
    match config.scheme {
        Scheme::Akd | Scheme::Ekd => run_akd(config),
        Scheme::Avgkd => run_avgkd(config),
        Scheme::Pkd => run_pkd(config),
    }
}

/// Alternating distillation: passing 0 fits the start agent on its true
/// labels; passing `p` fits agent `(start + p) mod M` on the previous model's
/// predictions over its own inputs.
pub fn run_akd(config: &ProtocolConfig) -> Result<Trajectory> {
    let engine = Engine::new(config)?;
    let mut traj = engine.empty_trajectory(config.scheme);
    let m = config.agents.len();
    let mut agent = config.start_agent;
    let mut labels = config.agents[agent].data.labels().clone();
    for p in 0..config.rounds {
        let fit = engine
            .fit(agent, labels)
            .map_err(|e| e.context(format!("AKD passing {p}")))?;
        let next = (agent + 1) % m;
        labels = fit.on_agents[next].clone();
        traj.records.push(RoundRecord {
            round: p / m,
            passing: p,
            fits: vec![fit],
        });
        agent = next;
    }
    Ok(traj)
}

/// Averaged distillation: every agent refits on
/// `(y^i + sum_{j != i} g^j(X^i)) / M`, anchoring each round to the true labels.
pub fn run_avgkd(config: &ProtocolConfig) -> Result<Trajectory> {
    run_synchronized(config, Scheme::Avgkd)
}

/// Parallel distillation: every agent refits on
/// `(yhat^i + sum_{j != i} g^j(X^i)) / M`, a running average of its own
/// previous distilled labels and the peers' predictions.
pub fn run_pkd(config: &ProtocolConfig) -> Result<Trajectory> {
    run_synchronized(config, Scheme::Pkd)
}

fn run_synchronized(config: &ProtocolConfig, scheme: Scheme) -> Result<Trajectory> {
    let engine = Engine::new(config)?;
    let mut traj = engine.empty_trajectory(scheme);
    if scheme == Scheme::Pkd && config.agents.iter().any(|a| a.mode == SolveMode::Regularized) {
        traj.flags
            .push("regularized PKD: outside the analyzed min-norm regime".to_string());
    }
    let m = config.agents.len();
    let truth = engine.true_labels();
    let mut labels = truth.clone();
    for t in 0..config.rounds {
        let fits = engine
            .fit_all(labels)
            .map_err(|e| e.context(format!("{} round {t}", scheme.name().to_uppercase())))?;
        labels = (0..m)
            .map(|i| {
                let anchor = match scheme {
                    Scheme::Avgkd => &truth[i],
                    _ => &fits[i].labels,
                };
                let mut acc = anchor.clone();
                for (j, f) in fits.iter().enumerate() {
                    if j != i {
                        acc += &f.on_agents[i];
                    }
                }
                acc / m as f64
            })
            .collect();
        traj.records.push(RoundRecord {
            round: t,
            passing: t * m,
            fits,
        });
    }
    Ok(traj)
}

