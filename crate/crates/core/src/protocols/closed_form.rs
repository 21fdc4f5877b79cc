//! Algebraic counterparts of the simulated protocols.
//!
//! Two independent routes are provided. The block-matrix route works with
//! the fit operators `R_a = (cI + K_aa)^{-1}` (or `K_aa^+`) and the cross
//! kernel blocks directly. The spectral route pushes embedded label vectors
//! through oblique projectors and contractions of `K = V^T D V`.

use crate::error::{Error, Result};
use crate::linalg::{solve_square, Matrix, Vector};
use crate::spectral::{
    eigendecompose, BlockId, BlockKernelSystem, Geometry, SpectralForm, SpectralOperators,
};

/// Predictions of one algebraically constructed model.
#[derive(Debug, Clone)]
pub struct ClosedFormFit {
    pub agent: usize,
    /// Labels the model is fitted on, when the route recovers them.
    pub labels: Option<Vector>,
    /// Predictions on every agent's training inputs, by agent.
    pub on_agents: Vec<Vector>,
}

/// Which half of an AKD round: even passings are fitted by the start agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Spectral operators for a system in its own geometry.
pub fn spectral_operators(system: &BlockKernelSystem) -> Result<SpectralOperators> {
    SpectralOperators::new(eigendecompose(system)?, Geometry::of(system))
}

fn agent_predictions(system: &BlockKernelSystem, agent: usize, alpha: &Vector) -> Vec<Vector> {
    (0..system.agents())
        .map(|j| system.block(agent, j, agent) * alpha)
        .collect()
}

fn fit_from_labels(system: &BlockKernelSystem, agent: usize, labels: Vector, r: &Matrix) -> ClosedFormFit {
    let alpha = r * &labels;
    ClosedFormFit {
        agent,
        on_agents: agent_predictions(system, agent, &alpha),
        labels: Some(labels),
    }
}

fn two_agents(system: &BlockKernelSystem, what: &str) -> Result<()> {
    if system.agents() == 2 {
        Ok(())
    } else {
        Err(Error::ConfigMismatch(format!(
            "{what} is defined for two agents, system has {}",
            system.agents()
        )))
    }
}

/// AKD model after `2t` (even) or `2t + 1` (odd) passings, started at agent 1:
///
/// ```text
/// g_2t(x)   = l_x^T R_1 (M_12 R_2 L_21 R_1)^t y^1
/// g_2t+1(x) = m_x^T R_2 L_21 R_1 (M_12 R_2 L_21 R_1)^t y^1
/// ```
pub fn akd_closed_form(system: &BlockKernelSystem, t: usize, parity: Parity) -> Result<ClosedFormFit> {
    akd_closed_form_from(system, 0, t, parity)
}

/// [`akd_closed_form`] with an arbitrary start agent of a two-agent system.
pub fn akd_closed_form_from(
    system: &BlockKernelSystem,
    start: usize,
    t: usize,
    parity: Parity,
) -> Result<ClosedFormFit> {
    two_agents(system, "the two-agent AKD closed form")?;
    let (a, b) = (start, 1 - start);
    let ra = system.solve_operator(a)?;
    let rb = system.solve_operator(b)?;
    let to_b = system.block(a, b, a) * &ra;
    let round = system.block(b, a, b) * &rb * &to_b;
    let even_labels = round.pow(t as u32) * &system.labels()[a];
    Ok(match parity {
        Parity::Even => fit_from_labels(system, a, even_labels, &ra),
        Parity::Odd => fit_from_labels(system, b, &to_b * even_labels, &rb),
    })
}

/// Block-matrix AKD predictions for passings `0..passings`, for any number
/// of agents: each passing applies the single-hop transfer
/// `T_(b<-a) = K^(a)_ba R_a` to the current labels.
pub fn akd_product_form(system: &BlockKernelSystem, start: usize, passings: usize) -> Result<Vec<ClosedFormFit>> {
    let m = system.agents();
    let ops = (0..m).map(|a| system.solve_operator(a)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(passings);
    let mut agent = start;
    let mut labels = system.labels()[start].clone();
    for _ in 0..passings {
        let fit = fit_from_labels(system, agent, labels, &ops[agent]);
        let next = (agent + 1) % m;
        labels = fit.on_agents[next].clone();
        out.push(fit);
        agent = next;
    }
    Ok(out)
}

/// Two-agent AKD predictions for passings `0..passings` from the power form
/// of [`akd_closed_form`], advancing `(M_12 R_2 L_21 R_1)^t y^1` one factor
/// per round.
pub fn akd_closed_form_series(system: &BlockKernelSystem, start: usize, passings: usize) -> Result<Vec<ClosedFormFit>> {
    two_agents(system, "the two-agent AKD closed form")?;
    let (a, b) = (start, 1 - start);
    let ra = system.solve_operator(a)?;
    let rb = system.solve_operator(b)?;
    let to_b = system.block(a, b, a) * &ra;
    let round = system.block(b, a, b) * &rb * &to_b;
    let mut v = system.labels()[a].clone();
    let mut out = Vec::with_capacity(passings);
    for p in 0..passings {
        if p % 2 == 0 {
            if p > 0 {
                v = &round * v;
            }
            out.push(fit_from_labels(system, a, v.clone(), &ra));
        } else {
            out.push(fit_from_labels(system, b, &to_b * &v, &rb));
        }
    }
    Ok(out)
}

fn spectral_fit(ops: &SpectralOperators, agent: usize, z: &Vector) -> ClosedFormFit {
    ClosedFormFit {
        agent,
        labels: Some(ops.labels(agent, z)),
        on_agents: (0..ops.form.agents())
            .map(|j| ops.predict_block(agent, z, j))
            .collect(),
    }
}

/// Spectral AKD: even passing `2t` reads out `P_1^T B^t z_1`, odd passing
/// `2t + 1` reads out `P̃_2^T C̃_2 P_1^T B^t z_1`, with
/// `B = C_1 P̃_2^T C̃_2 P_1^T`.
pub fn akd_spectral(ops: &SpectralOperators, t: usize, parity: Parity) -> Result<ClosedFormFit> {
    if ops.form.agents() != 2 {
        return Err(Error::ConfigMismatch("spectral AKD power form needs two agents".into()));
    }
    let z = ops.akd_round_operator(0).pow(t as u32) * ops.form.z(0);
    Ok(match parity {
        Parity::Even => spectral_fit(ops, 0, &z),
        Parity::Odd => spectral_fit(ops, 1, &(ops.hop(0, 1) * z)),
    })
}

/// Spectral AKD for passings `0..passings`, any number of agents.
pub fn akd_spectral_series(ops: &SpectralOperators, start: usize, passings: usize) -> Vec<ClosedFormFit> {
    let m = ops.form.agents();
    let mut z = ops.form.z(start);
    let mut agent = start;
    let mut out = Vec::with_capacity(passings);
    for _ in 0..passings {
        out.push(spectral_fit(ops, agent, &z));
        let next = (agent + 1) % m;
        z = ops.hop(agent, next) * z;
        agent = next;
    }
    out
}

/// AvgKD rounds `0..rounds` from the partial-sum expansion. For agent 1 the
/// embedded distilled labels at round `t` are
///
/// ```text
/// u_t = sum_{k<t} 2^{-(k+1)} w_k + 2^{-t} w_t,
/// w_2j = B^j z_1,   w_2j+1 = B^j A z_2,   A = C_1 P̃_2^T,
/// ```
///
/// and symmetrically for agent 2. Each entry holds both agents' fits.
pub fn avgkd_closed_form_series(ops: &SpectralOperators, rounds: usize) -> Result<Vec<[ClosedFormFit; 2]>> {
    if ops.form.agents() != 2 {
        return Err(Error::ConfigMismatch("the AvgKD expansion is defined for two agents".into()));
    }
    let per_agent: Vec<Vec<Vector>> = (0..2)
        .map(|a| {
            let b = 1 - a;
            let cross = ops.hop(b, a);
            let round = &cross * ops.hop(a, b);
            // w_k for k = 0..=rounds, generated two at a time
            let mut w = vec![ops.form.z(a), &cross * ops.form.z(b)];
            while w.len() < rounds + 1 {
                let next = &round * &w[w.len() - 2];
                w.push(next);
            }
            let mut partial = Vector::zeros(w[0].len());
            let mut out = Vec::with_capacity(rounds);
            for t in 0..rounds {
                let half_t = 0.5f64.powi(t as i32);
                out.push(&partial + &w[t] * half_t);
                partial += &w[t] * (half_t * 0.5);
            }
            out
        })
        .collect();
    Ok((0..rounds)
        .map(|t| [spectral_fit(ops, 0, &per_agent[0][t]), spectral_fit(ops, 1, &per_agent[1][t])])
        .collect())
}

/// AvgKD round `t` from the expansion.
pub fn avgkd_closed_form(system: &BlockKernelSystem, t: usize) -> Result<[ClosedFormFit; 2]> {
    let ops = spectral_operators(system)?;
    let mut series = avgkd_closed_form_series(&ops, t + 1)?;
    Ok(series.pop().expect("nonempty series"))
}

/// Fixed point of two-agent AvgKD from the block system
///
/// ```text
/// [ L_11 + cI    M_12 / 2 ] [b1]   [  y1 ]
/// [ L_21 / 2   M_22 + cI  ] [b2] = [ -y2 ]
/// ```
///
/// with limit models `g1(x) = l_x^T b1 / 2` and `g2(x) = -m_x^T b2 / 2`.
#[derive(Debug, Clone)]
pub struct AvgkdLimit {
    pub beta1: Vector,
    pub beta2: Vector,
    /// `[g1(X_1), g1(X_2)]` and `[g2(X_1), g2(X_2)]`.
    pub on_agents: [Vec<Vector>; 2],
    /// Dual weights of the two limit models.
    pub dual_weights: [Vector; 2],
    pub condition: f64,
    /// Set when the system was solved with a pseudoinverse.
    pub used_pinv: bool,
}

pub fn avgkd_limit(system: &BlockKernelSystem) -> Result<AvgkdLimit> {
    two_agents(system, "the AvgKD limit system")?;
    let c = match Geometry::of(system) {
        Geometry::Regularized(c) => c,
        Geometry::MinNorm => 0.0,
    };
    let (n1, n2) = (system.block_sizes()[0], system.block_sizes()[1]);
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1))
        .copy_from(&(system.block(0, 0, 0) + Matrix::identity(n1, n1) * c));
    a.view_mut((0, n1), (n1, n2)).copy_from(&(system.block(1, 0, 1) * 0.5));
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(system.block(0, 1, 0) * 0.5));
    a.view_mut((n1, n1), (n2, n2))
        .copy_from(&(system.block(1, 1, 1) + Matrix::identity(n2, n2) * c));
    let mut rhs = Matrix::zeros(n1 + n2, 1);
    rhs.view_mut((0, 0), (n1, 1)).copy_from(&system.labels()[0]);
    rhs.view_mut((n1, 0), (n2, 1)).copy_from(&(-&system.labels()[1]));
    let sol = solve_square(&a, &rhs)?;
    let beta1 = Vector::from_iterator(n1, sol.solution.column(0).rows(0, n1).iter().copied());
    let beta2 = Vector::from_iterator(n2, sol.solution.column(0).rows(n1, n2).iter().copied());
    let w1 = &beta1 * 0.5;
    let w2 = &beta2 * -0.5;
    Ok(AvgkdLimit {
        on_agents: [agent_predictions(system, 0, &w1), agent_predictions(system, 1, &w2)],
        dual_weights: [w1, w2],
        beta1,
        beta2,
        condition: sol.condition,
        used_pinv: sol.used_pinv,
    })
}

/// PKD with a shared kernel, read from the averaged-projection formula
///
/// ```text
/// state_t^i = 2^{-t} P_i^T (P_1^T + P_2^T)^{t-1} (P_1^T z_1 + P_2^T z_2),  t >= 1,
/// ```
///
/// with both projectors and `z_2 = V_2 y^2` taken in agent 1's kernel section.
pub fn pkd_closed_form(form: &SpectralForm, geometry: Geometry, t: usize) -> Result<[ClosedFormFit; 2]> {
    if form.agents() != 2 {
        return Err(Error::ConfigMismatch("the PKD formula is defined for two agents".into()));
    }
    let blocks = [BlockId::V1, BlockId::V2];
    let pt = blocks
        .iter()
        .map(|&b| crate::spectral::oblique_projector(form, b, geometry).map(|p| p.transpose()))
        .collect::<Result<Vec<_>>>()?;
    let labels = [form.z(0), form.embed(BlockId::V2, &labels_of(form, 1))];
    let states: Vec<Vector> = if t == 0 {
        vec![&pt[0] * &labels[0], &pt[1] * &labels[1]]
    } else {
        let base = &pt[0] * &labels[0] + &pt[1] * &labels[1];
        let sum = &pt[0] + &pt[1];
        let shared = sum.pow((t - 1) as u32) * base * 0.5f64.powi(t as i32);
        vec![&pt[0] * &shared, &pt[1] * &shared]
    };
    let fit = |i: usize| ClosedFormFit {
        agent: i,
        labels: None,
        on_agents: blocks
            .iter()
            .map(|&b| form.readout(geometry, b, &states[i]))
            .collect(),
    };
    Ok([fit(0), fit(1)])
}

fn labels_of(form: &SpectralForm, agent: usize) -> Vector {
    // z(agent) = V_own y, and V_own has orthonormal columns
    form.block(BlockId::own(agent)).transpose() * form.z(agent)
}

/// PKD rounds `0..rounds` for arbitrary kernels and agent counts, from the
/// coupled recursion
///
/// ```text
/// w_{t+1}^i = (w_t^i + sum_{j != i} C_(i<-j) P_j^T w_t^j) / M,   w_0^i = z_i.
/// ```
pub fn pkd_coupled_series(ops: &SpectralOperators, rounds: usize) -> Vec<Vec<ClosedFormFit>> {
    let m = ops.form.agents();
    let hops: Vec<Vec<Option<Matrix>>> = (0..m)
        .map(|i| (0..m).map(|j| (i != j).then(|| ops.hop(j, i))).collect())
        .collect();
    let mut w: Vec<Vector> = (0..m).map(|i| ops.form.z(i)).collect();
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        out.push((0..m).map(|i| spectral_fit(ops, i, &w[i])).collect());
        w = (0..m)
            .map(|i| {
                let mut acc = w[i].clone();
                for (j, h) in hops[i].iter().enumerate() {
                    if let Some(h) = h {
                        acc += h * &w[j];
                    }
                }
                acc / m as f64
            })
            .collect();
    }
    out
}
