//! Spectral picture of the federated kernel system.
//!
//! With pooled inputs `X = (X_1; ...; X_M)` and one Gram matrix per agent
//! kernel (`L` for agent 1, `M` for agent 2, all scaled by `1/N_total`), the
//! block-diagonal operator `K = diag(L, M, ...)` is symmetric PSD and
//! decomposes as `K = V^T D V` with `V` orthogonal. Columns of `V` indexed by
//! the rows of kernel section `s` and data block `i` form `V_(s,i)`, so
//!
//! ```text
//! L_ij = V_(0,i)^T D V_(0,j),   M_ij = V_(1,i)^T D V_(1,j).
//! ```
//!
//! Fitting agent `a` on labels `y` moves the embedded label vector
//! `z = V_(a,a) y` through the oblique projector `P_a^T` (weights `cI + D`,
//! or `D` with a pseudoinverse in the min-norm regime). Handing predictions
//! to agent `b` applies the contraction `C_(b<-a) = V_(b,b) V_(a,b)^T`.
//! Protocol closed forms are products of these operators; they are checked
//! against the round-by-round simulation.

use std::io::Write;

use nalgebra::Cholesky;

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{gram_matrix, gram_square, KernelSpec};
use crate::linalg::{inv_sqrt_psd, pinv, rank, spectral_norm, sym_eigen, Matrix, Vector, PINV_RTOL};
use crate::ridge::SolveMode;

/// Per-agent Gram matrices over the pooled inputs.
#[derive(Debug, Clone)]
pub struct BlockKernelSystem {
    kernels: Vec<KernelSpec>,
    grams: Vec<Matrix>,
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    labels: Vec<Vector>,
    c: f64,
    mode: SolveMode,
    pooled_inputs: Matrix,
}

impl BlockKernelSystem {
    /// Builds one pooled Gram matrix per agent kernel, scaled by the pooled
    /// sample count.
    pub fn assemble(datasets: &[&Dataset], kernels: &[KernelSpec], c: f64) -> Result<Self> {
        if datasets.len() < 2 {
            return Err(Error::InvalidInput("a federated system needs at least two agents".into()));
        }
        check_dim("assemble (one kernel per agent)", datasets.len(), kernels.len())?;
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidInput(format!("regularization must be nonnegative, got {c}")));
        }
        for k in kernels {
            k.validate()?;
        }
        let pooled = Dataset::concat("pooled", datasets)?;
        let total = pooled.len();
        if total == 0 {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let grams = kernels
            .iter()
            .map(|k| gram_square(k, pooled.inputs(), total))
            .collect::<Result<Vec<_>>>()?;
        let block_sizes: Vec<usize> = datasets.iter().map(|d| d.len()).collect();
        let offsets = block_sizes
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect();
        Ok(BlockKernelSystem {
            kernels: kernels.to_vec(),
            grams,
            block_sizes,
            offsets,
            labels: datasets.iter().map(|d| d.labels().clone()).collect(),
            c,
            mode: SolveMode::Regularized,
            pooled_inputs: pooled.inputs().clone(),
        })
    }

    /// Switches the system to min-norm (pseudoinverse) fitting.
    pub fn with_mode(mut self, mode: SolveMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn agents(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn total(&self) -> usize {
        self.pooled_inputs.nrows()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn labels(&self) -> &[Vector] {
        &self.labels
    }

    pub fn pooled_inputs(&self) -> &Matrix {
        &self.pooled_inputs
    }

    /// Gram matrix of agent `section`'s kernel over all pooled inputs.
    pub fn gram(&self, section: usize) -> &Matrix {
        &self.grams[section]
    }

    /// `L`, agent 1's kernel over the pooled inputs.
    pub fn l(&self) -> &Matrix {
        &self.grams[0]
    }

    /// `M`, agent 2's kernel over the pooled inputs.
    pub fn m(&self) -> &Matrix {
        &self.grams[1]
    }

    /// Block `(i, j)` of kernel section `section`, e.g. `block(0, 1, 0) = L_21`.
    pub fn block(&self, section: usize, i: usize, j: usize) -> Matrix {
        self.grams[section]
            .view((self.offsets[i], self.offsets[j]), (self.block_sizes[i], self.block_sizes[j]))
            .into_owned()
    }

    pub fn inputs_of(&self, agent: usize) -> Matrix {
        self.pooled_inputs
            .rows(self.offsets[agent], self.block_sizes[agent])
            .into_owned()
    }

    /// `diag(L, M, ...)`.
    pub fn block_diagonal(&self) -> Matrix {
        let n = self.total();
        let s = self.grams.len();
        let mut k = Matrix::zeros(s * n, s * n);
        for (i, g) in self.grams.iter().enumerate() {
            k.view_mut((i * n, i * n), (n, n)).copy_from(g);
        }
        k
    }

    /// Scaled kernel vectors `k_section(x, X_agent) / N_total` for every query row.
    pub fn kernel_rows(&self, section: usize, agent: usize, query: &Matrix) -> Result<Matrix> {
        gram_matrix(&self.kernels[section], query, &self.inputs_of(agent), self.total())
    }

    /// The fit operator of agent `a` on its own block: `(cI + K_aa)^{-1}` or `K_aa^+`.
    pub fn solve_operator(&self, agent: usize) -> Result<Matrix> {
        let kaa = self.block(agent, agent, agent);
        fit_inverse(&kaa, self.c, self.mode)
    }

    /// Dual weights of agent `a` fitted on `labels`.
    pub fn fit_dual(&self, agent: usize, labels: &Vector) -> Result<Vector> {
        check_dim("fit_dual (labels)", self.block_sizes[agent], labels.len())?;
        Ok(self.solve_operator(agent)? * labels)
    }
}

/// `(cI + A)^{-1}` for symmetric PSD `A`, or `A^+` in min-norm mode.
pub(crate) fn fit_inverse(a: &Matrix, c: f64, mode: SolveMode) -> Result<Matrix> {
    let n = a.nrows();
    match mode {
        SolveMode::MinNorm => Ok(pinv(a).0),
        SolveMode::Regularized => {
            let sys = a + Matrix::identity(n, n) * c;
            let r = rank(&sys);
            if r < n {
                return Err(Error::SingularSystem { c, rank: r, size: n });
            }
            match Cholesky::new(sys.clone()) {
                Some(ch) => Ok(ch.inverse()),
                None => Ok(pinv(&sys).0),
            }
        }
    }
}

/// Two-agent convenience wrapper around [`BlockKernelSystem::assemble`].
pub fn assemble_block_system(
    d1: &Dataset,
    d2: &Dataset,
    k1: &KernelSpec,
    k2: &KernelSpec,
    c: f64,
) -> Result<BlockKernelSystem> {
    BlockKernelSystem::assemble(&[d1, d2], &[*k1, *k2], c)
}

/// Addresses a column block of `V`: kernel `section`, data block `data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub section: usize,
    pub data: usize,
}

impl BlockId {
    /// Agent 1's data under agent 1's kernel.
    pub const V1: BlockId = BlockId { section: 0, data: 0 };
    /// Agent 2's data under agent 1's kernel.
    pub const V2: BlockId = BlockId { section: 0, data: 1 };
    /// Agent 1's data under agent 2's kernel.
    pub const V1_TILDE: BlockId = BlockId { section: 1, data: 0 };
    /// Agent 2's data under agent 2's kernel.
    pub const V2_TILDE: BlockId = BlockId { section: 1, data: 1 };

    /// The block an agent fits on: its own data under its own kernel.
    pub fn own(agent: usize) -> Self {
        BlockId { section: agent, data: agent }
    }
}

/// Inner-product geometry of the projectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// Weights `cI + D`.
    Regularized(f64),
    /// Weights `D`, block Gram inverted with a pseudoinverse.
    MinNorm,
}

impl Geometry {
    pub fn of(system: &BlockKernelSystem) -> Self {
        match system.mode() {
            SolveMode::Regularized => Geometry::Regularized(system.c()),
            SolveMode::MinNorm => Geometry::MinNorm,
        }
    }

    fn shift(&self) -> f64 {
        match *self {
            Geometry::Regularized(c) => c,
            Geometry::MinNorm => 0.0,
        }
    }
}

/// `K = V^T diag(d) V` with block bookkeeping.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    /// Eigenvalues (clipped at zero).
    d: Vector,
    /// Orthogonal; `V = q^T`, so column blocks of `V` are row blocks of `q`.
    q: Matrix,
    sections: usize,
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    labels: Vec<Vector>,
}

impl SpectralForm {
    /// Builds a form from eigenpairs `(d, q)` with `K = q diag(d) q^T`.
    pub fn from_eigenpairs(system: &BlockKernelSystem, d: Vector, q: Matrix) -> Result<Self> {
        let size = system.grams.len() * system.total();
        check_dim("SpectralForm (eigenvalues)", size, d.len())?;
        check_dim("SpectralForm (eigenvectors)", size, q.nrows())?;
        Ok(SpectralForm {
            d,
            q,
            sections: system.grams.len(),
            block_sizes: system.block_sizes.clone(),
            offsets: system.offsets.clone(),
            labels: system.labels.clone(),
        })
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.d
    }

    /// The orthogonal matrix `V` (rows are eigenvectors).
    pub fn v(&self) -> Matrix {
        self.q.transpose()
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn agents(&self) -> usize {
        self.block_sizes.len()
    }

    fn total(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn row_start(&self, id: BlockId) -> usize {
        id.section * self.total() + self.offsets[id.data]
    }

    /// Column block `V_(section, data)` of `V`.
    pub fn block(&self, id: BlockId) -> Matrix {
        self.q
            .rows(self.row_start(id), self.block_sizes[id.data])
            .transpose()
    }

    /// `V_a^T W V_b` for a diagonal weight `W`.
    pub fn weighted_gram(&self, a: BlockId, weights: &Vector, b: BlockId) -> Matrix {
        let qa = self.q.rows(self.row_start(a), self.block_sizes[a.data]);
        let qb = self.q.rows(self.row_start(b), self.block_sizes[b.data]);
        let mut scaled = qb.transpose();
        for (mut row, w) in scaled.row_iter_mut().zip(weights.iter()) {
            row *= *w;
        }
        qa * scaled
    }

    /// `V_a^T D V_b`, which reproduces the corresponding kernel block.
    pub fn kernel_block(&self, a: BlockId, b: BlockId) -> Matrix {
        self.weighted_gram(a, &self.d, b)
    }

    /// `V^T D V`.
    pub fn reconstruct(&self) -> Matrix {
        &self.q * Matrix::from_diagonal(&self.d) * self.q.transpose()
    }

    /// Embedded labels `z = V_own(agent) y_agent`; `z_1 = V_1 y^1`, `z_2 = Ṽ_2 y^2`.
    pub fn z(&self, agent: usize) -> Vector {
        self.embed(BlockId::own(agent), &self.labels[agent])
    }

    pub fn embed(&self, id: BlockId, y: &Vector) -> Vector {
        self.block(id) * y
    }

    /// Same decomposition with eigenpairs reordered; `perm[k]` is the old
    /// index placed at position `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.d.len();
        check_dim("SpectralForm::permuted", n, perm.len())?;
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
        }
        let d = Vector::from_iterator(n, perm.iter().map(|&p| self.d[p]));
        let mut q = Matrix::zeros(n, n);
        for (k, &p) in perm.iter().enumerate() {
            q.set_column(k, &self.q.column(p));
        }
        Ok(SpectralForm { d, q, ..self.clone() })
    }

    /// Diagonal of `D (cI + D)^+`: maps a model state to its in-sample readout.
    fn readout_weights(&self, geometry: Geometry) -> Vector {
        let top = self.d.max().max(0.0);
        let tol = PINV_RTOL * top;
        let c = geometry.shift();
        self.d.map(|v| {
            let g = c + v;
            if v <= tol && c == 0.0 {
                0.0
            } else if g > 0.0 {
                v / g
            } else {
                0.0
            }
        })
    }

    /// Predictions on data block `id` of the model whose state is `state`.
    /// For a block other than the model's own training block this is just
    /// `V_id^T state`.
    pub fn readout(&self, geometry: Geometry, id: BlockId, state: &Vector) -> Vector {
        let w = self.readout_weights(geometry);
        self.block(id).transpose() * state.component_mul(&w)
    }

    /// Debug dump: one row per eigenvalue, then the norms of every kernel block.
    pub fn dump_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "kind,index,value")?;
        for (k, v) in self.d.iter().enumerate() {
            writeln!(w, "eigenvalue,{k},{v:e}")?;
        }
        for s in 0..self.sections {
            for i in 0..self.agents() {
                for j in 0..self.agents() {
                    let b = self.kernel_block(BlockId { section: s, data: i }, BlockId { section: s, data: j });
                    writeln!(w, "block_norm,{s}:{i}{j},{:e}", spectral_norm(&b))?;
                }
            }
        }
        Ok(())
    }
}

/// Eigendecomposition of the full block-diagonal `K`. Eigenvalues down to
/// `-1e-10 * sigma_max` are clipped to zero; anything more negative means the
/// kernels are not PSD and is reported.
pub fn eigendecompose(system: &BlockKernelSystem) -> Result<SpectralForm> {
    let k = system.block_diagonal();
    let (vals, vecs) = sym_eigen(&k)?;
    let d = clip_eigenvalues(vals)?;
    SpectralForm::from_eigenpairs(system, d, vecs)
}

/// A second valid decomposition, built section by section. Eigenvectors
/// never mix kernel sections here, unlike the full decomposition when `L`
/// and `M` share eigenvalues.
pub fn eigendecompose_blockwise(system: &BlockKernelSystem) -> Result<SpectralForm> {
    let n = system.total();
    let s = system.grams.len();
    let mut d = Vector::zeros(s * n);
    let mut q = Matrix::zeros(s * n, s * n);
    for (i, g) in system.grams.iter().enumerate() {
        let (vals, vecs) = sym_eigen(g)?;
        d.rows_mut(i * n, n).copy_from(&vals);
        q.view_mut((i * n, i * n), (n, n)).copy_from(&vecs);
    }
    let d = clip_eigenvalues(d)?;
    SpectralForm::from_eigenpairs(system, d, q)
}

fn clip_eigenvalues(vals: Vector) -> Result<Vector> {
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = -1e-10 * top;
    if let Some(bad) = vals.iter().find(|&&v| v < floor) {
        return Err(Error::Eigen(format!(
            "kernel operator is not PSD: eigenvalue {bad:e} below {floor:e}"
        )));
    }
    Ok(vals.map(|v| v.max(0.0)))
}

/// `P = V_a (V_a^T G V_a)^{-1} V_a^T G`, or with `G = D` and a pseudoinverse
/// in the min-norm geometry.
#[derive(Debug, Clone)]
pub struct ObliqueProjector {
    pub matrix: Matrix,
    pub block: BlockId,
    pub geometry: Geometry,
}

impl ObliqueProjector {
    pub fn transpose(&self) -> Matrix {
        self.matrix.transpose()
    }
}

pub fn oblique_projector(form: &SpectralForm, block: BlockId, geometry: Geometry) -> Result<ObliqueProjector> {
    let weights = match geometry {
        Geometry::Regularized(c) => form.d.map(|v| v + c),
        Geometry::MinNorm => form.d.clone(),
    };
    let gram = form.weighted_gram(block, &weights, block);
    let inner = match geometry {
        Geometry::Regularized(c) => {
            let n = gram.nrows();
            let r = rank(&gram);
            if r < n {
                return Err(Error::SingularSystem { c, rank: r, size: n });
            }
            match Cholesky::new(crate::linalg::symmetrize(&gram)) {
                Some(ch) => ch.inverse(),
                None => pinv(&gram).0,
            }
        }
        Geometry::MinNorm => pinv(&gram).0,
    };
    let va = form.block(block);
    let mut right = va.transpose();
    for (mut col, w) in right.column_iter_mut().zip(weights.iter()) {
        col *= *w;
    }
    Ok(ObliqueProjector {
        matrix: &va * inner * right,
        block,
        geometry,
    })
}

/// The two contractions named in the two-agent analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionPair {
    /// `C_1 = V_1 Ṽ_1^T`: agent 2's readout on `X_1`, re-embedded for agent 1.
    C1,
    /// `C̃_2 = Ṽ_2 V_2^T`: agent 1's readout on `X_2`, re-embedded for agent 2.
    C2Tilde,
}

#[derive(Debug, Clone)]
pub struct Contraction {
    pub matrix: Matrix,
    pub into: BlockId,
    pub from: BlockId,
}

pub fn contraction(form: &SpectralForm, pair: ContractionPair) -> Contraction {
    match pair {
        ContractionPair::C1 => contraction_between(form, BlockId::V1, BlockId::V1_TILDE),
        ContractionPair::C2Tilde => contraction_between(form, BlockId::V2_TILDE, BlockId::V2),
    }
}

/// `V_into V_from^T`; both blocks must cover the same data block.
pub fn contraction_between(form: &SpectralForm, into: BlockId, from: BlockId) -> Contraction {
    debug_assert_eq!(into.data, from.data);
    Contraction {
        matrix: form.block(into) * form.block(from).transpose(),
        into,
        from,
    }
}

/// Cosine of the minimal angle between `span(V_1)` and `span(V_2)` in the
/// `cI + D` geometry:
///
/// ```text
/// cos(phi) = max |v1^T D v2| / sqrt((c + v1^T D v1)(c + v2^T D v2))
/// ```
///
/// which equals the top singular value of
/// `(cI + L_11)^{-1/2} L_12 (cI + L_22)^{-1/2}`.
pub fn min_angle_cos(form: &SpectralForm, c: f64) -> Result<f64> {
    min_angle_cos_between(form, BlockId::V1, BlockId::V2, c)
}

pub fn min_angle_cos_between(form: &SpectralForm, a: BlockId, b: BlockId, c: f64) -> Result<f64> {
    let shifted = form.d.map(|v| v + c);
    let ga = form.weighted_gram(a, &shifted, a);
    let gb = form.weighted_gram(b, &shifted, b);
    let cross = form.kernel_block(a, b);
    let whitened = inv_sqrt_psd(&ga)? * cross * inv_sqrt_psd(&gb)?;
    Ok(spectral_norm(&whitened).clamp(0.0, 1.0))
}

/// Precomputed transposed projectors and hop operators for protocol algebra.
///
/// A "hop" `H_(b<-a) = C_(b<-a) P_a^T` carries agent `a`'s embedded labels to
/// the embedded labels agent `b` fits on next.
#[derive(Debug, Clone)]
pub struct SpectralOperators {
    pub form: SpectralForm,
    pub geometry: Geometry,
    /// `P_a^T` for each agent's own block.
    projectors_t: Vec<Matrix>,
}

impl SpectralOperators {
    pub fn new(form: SpectralForm, geometry: Geometry) -> Result<Self> {
        let projectors_t = (0..form.agents())
            .map(|a| oblique_projector(&form, BlockId::own(a), geometry).map(|p| p.transpose()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralOperators {
            form,
            geometry,
            projectors_t,
        })
    }

    /// `P_a^T` for agent `a`'s own block.
    pub fn projector_t(&self, agent: usize) -> &Matrix {
        &self.projectors_t[agent]
    }

    /// `C_(b<-a) = V_(b,b) V_(a,b)^T`.
    pub fn contraction(&self, from: usize, to: usize) -> Matrix {
        contraction_between(&self.form, BlockId::own(to), BlockId { section: from, data: to }).matrix
    }

    /// `C_(b<-a) P_a^T`.
    pub fn hop(&self, from: usize, to: usize) -> Matrix {
        self.contraction(from, to) * &self.projectors_t[from]
    }

    /// Labels agent `a` fits on, recovered from its embedded label vector.
    pub fn labels(&self, agent: usize, z: &Vector) -> Vector {
        self.form.block(BlockId::own(agent)).transpose() * z
    }

    /// Predictions on `X_target` of agent `a`'s model fitted on embedded labels `z`.
    pub fn predict_block(&self, agent: usize, z: &Vector, target: usize) -> Vector {
        let state = &self.projectors_t[agent] * z;
        self.form
            .readout(self.geometry, BlockId { section: agent, data: target }, &state)
    }

    /// Two-agent round operator `C_1 P̃_2^T C̃_2 P_1^T` (start at agent 1), or
    /// its mirror image when starting at agent 2.
    pub fn akd_round_operator(&self, start: usize) -> Matrix {
        let other = 1 - start;
        self.hop(other, start) * self.hop(start, other)
    }
}

/// `(C_1 P̃_2^T C̃_2 P_1^T)^t`; the identity for `t = 0`.
pub fn akd_operator(form: &SpectralForm, geometry: Geometry, t: usize) -> Result<Matrix> {
    let ops = SpectralOperators::new(form.clone(), geometry)?;
    Ok(ops.akd_round_operator(0).pow(t as u32))
}
