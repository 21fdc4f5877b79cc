//! Reference solutions: the mixed-kernel optimum that EKD converges to and
//! centralized KRR over the pooled data.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{solve_square, Matrix, Vector};
use crate::protocols::config::AgentSpec;
use crate::ridge::{fit_krr, fit_krr_minnorm, RidgeModel, SolveMode};
use crate::spectral::BlockKernelSystem;

/// Solution of the mixed system
///
/// ```text
/// [ L_11 + cI    M_12    ] [b1]   [y1]
/// [ L_21       M_22 + cI ] [b2] = [y2]
/// ```
///
/// (one block row and column per agent in general). The predictor is
/// `g(x) = l_x^T b1 + m_x^T b2`.
#[derive(Debug, Clone)]
pub struct MixedOptimum {
    pub betas: Vec<Vector>,
    pub c: f64,
    /// Predictions on each agent's training inputs.
    pub on_agents: Vec<Vector>,
    /// `||A b - y|| / ||y||` of the solved system.
    pub relative_residual: f64,
    pub condition: f64,
    /// Set when the mixed matrix was singular and a pseudoinverse was used.
    pub used_pinv: bool,
}

impl MixedOptimum {
    pub fn beta1(&self) -> &Vector {
        &self.betas[0]
    }

    pub fn beta2(&self) -> &Vector {
        &self.betas[1]
    }

    /// Mixed-kernel predictor at arbitrary points. Optimality is only
    /// certified on the training inputs.
    pub fn predict(&self, system: &BlockKernelSystem, query: &Matrix) -> Result<Vector> {
        let mut out = Vector::zeros(query.nrows());
        for (a, beta) in self.betas.iter().enumerate() {
            out += system.kernel_rows(a, a, query)? * beta;
        }
        Ok(out)
    }
}

/// The unregularized mixed optimum (`c = 0`).
pub fn solve_mixed_optimum(system: &BlockKernelSystem) -> Result<MixedOptimum> {
    solve_mixed_system(system, 0.0)
}

/// The mixed system with diagonal shift `c`; this is the fixed point of
/// the EKD series for regularized agents.
pub fn solve_mixed_system(system: &BlockKernelSystem, c: f64) -> Result<MixedOptimum> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidInput(format!("regularization must be nonnegative, got {c}")));
    }
    let sizes = system.block_sizes();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let total = system.total();
    let mut a = Matrix::zeros(total, total);
    for (i, &ni) in sizes.iter().enumerate() {
        for (j, &nj) in sizes.iter().enumerate() {
            let mut block = system.block(j, i, j);
            if i == j {
                block += Matrix::identity(ni, ni) * c;
            }
            a.view_mut((offsets[i], offsets[j]), (ni, nj)).copy_from(&block);
        }
    }
    let y = crate::linalg::vcat(&system.labels().iter().collect::<Vec<_>>());
    let rhs = Matrix::from_column_slice(total, 1, y.as_slice());
    let sol = solve_square(&a, &rhs)?;
    let x = Vector::from_column_slice(sol.solution.column(0).as_slice());
    let residual = (&a * &x - &y).norm() / y.norm().max(f64::MIN_POSITIVE);
    let betas: Vec<Vector> = sizes
        .iter()
        .zip(&offsets)
        .map(|(&n, &o)| x.rows(o, n).into_owned())
        .collect();
    let on_agents = (0..sizes.len())
        .map(|i| {
            betas
                .iter()
                .enumerate()
                .fold(Vector::zeros(sizes[i]), |acc, (j, b)| acc + system.block(j, i, j) * b)
        })
        .collect();
    Ok(MixedOptimum {
        betas,
        c,
        on_agents,
        relative_residual: residual,
        condition: sol.condition,
        used_pinv: sol.used_pinv,
    })
}

/// Centralized reference: one model with `agent`'s kernel and fitting rule
/// trained on all datasets together.
pub fn solve_pooled_krr(agent: &AgentSpec, pooled: &[&Dataset]) -> Result<RidgeModel> {
    let data = Dataset::concat("pooled", pooled)?;
    let n = data.len();
    match agent.mode {
        SolveMode::Regularized => fit_krr(&data, None, &agent.kernel, agent.reg, n),
        SolveMode::MinNorm => fit_krr_minnorm(&data, None, &agent.kernel, n),
    }
}

/// Local-only baseline: `agent` fitted on its own data with the pooled scale.
pub fn solve_local_krr(agent: &AgentSpec, scale_count: usize) -> Result<RidgeModel> {
    match agent.mode {
        SolveMode::Regularized => fit_krr(&agent.data, None, &agent.kernel, agent.reg, scale_count),
        SolveMode::MinNorm => fit_krr_minnorm(&agent.data, None, &agent.kernel, scale_count),
    }
}

