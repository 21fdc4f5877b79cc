//! Simulation-versus-closed-form verification and the seeded equivalence
//! suite run by the `verify` command.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::datagen::stream;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{max_abs_diff, max_abs_diff_mat, spectral_norm, Matrix, Vector};
use crate::protocols::closed_form::{
    akd_closed_form_series, akd_product_form, akd_spectral_series, avgkd_closed_form_series, pkd_closed_form,
    pkd_coupled_series, ClosedFormFit,
};
use crate::protocols::config::{AgentSpec, ProtocolConfig, Scheme};
use crate::protocols::simulate::run_protocol;
use crate::protocols::trajectory::{RoundRecord, Trajectory};
use crate::ridge::SolveMode;
use crate::spectral::{
    contraction, eigendecompose, eigendecompose_blockwise, min_angle_cos, oblique_projector, BlockId,
    BlockKernelSystem, ContractionPair, Geometry, SpectralOperators,
};

/// Tolerance for regularized runs.
pub const TOL_REGULARIZED: f64 = 1e-8;
/// Tolerance for runs with any min-norm agent.
pub const TOL_MIN_NORM: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RoundCheck {
    /// Record index in the trajectory.
    pub step: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub scheme: Scheme,
    /// What was checked; the scheme name unless the caller renames it.
    pub subject: String,
    /// Which closed form the run was compared against.
    pub method: &'static str,
    pub tolerance: f64,
    pub rounds: Vec<RoundCheck>,
    pub max_deviation: f64,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        format!(
            "{} vs {}: max deviation {:.3e} over {} steps (tolerance {:.0e}) {}",
            self.subject,
            self.method,
            self.max_deviation,
            self.rounds.len(),
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn check_matches(traj: &Trajectory, system: &BlockKernelSystem) -> Result<()> {
    if traj.agent_sizes != system.block_sizes() {
        return Err(Error::ConfigMismatch(format!(
            "trajectory agent sizes {:?} differ from system block sizes {:?}",
            traj.agent_sizes,
            system.block_sizes()
        )));
    }
    if traj.kernels != system.kernels() {
        return Err(Error::ConfigMismatch("trajectory kernels differ from the system's".into()));
    }
    for (&mode, &reg) in traj.modes.iter().zip(&traj.regs) {
        let same = match (mode, system.mode()) {
            (SolveMode::MinNorm, SolveMode::MinNorm) => true,
            (SolveMode::Regularized, SolveMode::Regularized) => reg == system.c(),
            _ => false,
        };
        if !same {
            return Err(Error::ConfigMismatch(
                "trajectory regularization or solve mode differs from the system's".into(),
            ));
        }
    }
    Ok(())
}

fn deviation(record: &RoundRecord, closed: &[ClosedFormFit]) -> Result<f64> {
    let mut worst = 0.0f64;
    for cf in closed {
        let fit = record
            .fit_of(cf.agent)
            .ok_or_else(|| Error::ConfigMismatch(format!("no simulated fit for agent {}", cf.agent + 1)))?;
        for (sim, alg) in fit.on_agents.iter().zip(&cf.on_agents) {
            worst = worst.max(max_abs_diff(sim, alg));
        }
    }
    Ok(worst)
}

/// Compares every record of `traj` with the scheme's closed form on the
/// agents' training inputs.
pub fn verify_run(traj: &Trajectory, system: &BlockKernelSystem) -> Result<VerifyReport> {
    check_matches(traj, system)?;
    let m = system.agents();
    let steps = traj.len();
    let two = m == 2;
    let (method, closed): (&'static str, Vec<Vec<ClosedFormFit>>) = match traj.scheme {
        Scheme::Akd | Scheme::Ekd if two => (
            "power form",
            akd_closed_form_series(system, traj.start_agent, steps)?
                .into_iter()
                .map(|f| vec![f])
                .collect(),
        ),
        Scheme::Akd | Scheme::Ekd => (
            "product form",
            akd_product_form(system, traj.start_agent, steps)?
                .into_iter()
                .map(|f| vec![f])
                .collect(),
        ),
        Scheme::Avgkd if two => {
            let ops = crate::protocols::closed_form::spectral_operators(system)?;
            (
                "partial-sum expansion",
                avgkd_closed_form_series(&ops, steps)?.into_iter().map(Vec::from).collect(),
            )
        }
        Scheme::Pkd if two => {
            let form = eigendecompose(system)?;
            let geometry = Geometry::of(system);
            if system.kernels()[0] == system.kernels()[1] {
                let closed = (0..steps)
                    .map(|t| pkd_closed_form(&form, geometry, t).map(Vec::from))
                    .collect::<Result<Vec<_>>>()?;
                ("averaged projections", closed)
            } else {
                let ops = SpectralOperators::new(form, geometry)?;
                ("coupled projections", pkd_coupled_series(&ops, steps))
            }
        }
        scheme => {
            return Err(Error::ConfigMismatch(format!(
                "no closed form for {scheme} with {m} agents"
            )))
        }
    };
    let rounds = traj
        .records
        .iter()
        .zip(&closed)
        .enumerate()
        .map(|(step, (rec, cf))| deviation(rec, cf).map(|deviation| RoundCheck { step, deviation }))
        .collect::<Result<Vec<_>>>()?;
    let tolerance = if traj.modes.contains(&SolveMode::MinNorm) {
        TOL_MIN_NORM
    } else {
        TOL_REGULARIZED
    };
    let max_deviation = rounds.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(VerifyReport {
        scheme: traj.scheme,
        subject: traj.scheme.to_string(),
        method,
        tolerance,
        passed: max_deviation <= tolerance && max_deviation.is_finite(),
        max_deviation,
        rounds,
    })
}

/// A small seeded two-agent instance.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub index: usize,
    pub datasets: [Dataset; 2],
    pub kernels: [KernelSpec; 2],
    pub c: f64,
}

impl RandomInstance {
    pub fn agents(&self, mode: SolveMode) -> Vec<AgentSpec> {
        self.datasets
            .iter()
            .zip(&self.kernels)
            .map(|(d, &k)| match mode {
                SolveMode::Regularized => AgentSpec::new(d.clone(), k, self.c),
                SolveMode::MinNorm => AgentSpec::min_norm(d.clone(), k),
            })
            .collect()
    }

    pub fn config(&self, scheme: Scheme, rounds: usize, mode: SolveMode) -> ProtocolConfig {
        ProtocolConfig::new(scheme, self.agents(mode), rounds)
    }

    pub fn system(&self, mode: SolveMode) -> Result<BlockKernelSystem> {
        self.config(Scheme::Akd, 1, mode).block_system()
    }
}

/// Instance `index` of the suite for `master_seed`: sizes in 3..=8,
/// dimension in 2..=4, each kernel linear or rbf(1), c in {0.1, 1}.
pub fn random_instance(master_seed: u64, index: usize) -> Result<RandomInstance> {
    let mut rng = stream(master_seed, &format!("instance-{index}"));
    let d = rng.random_range(2..=4usize);
    let make = |id: &str, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Dataset> {
        let n = rng.random_range(3..=8usize);
        let x = Matrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Dataset::new(id, x, y)
    };
    let d1 = make("agent1", &mut rng)?;
    let d2 = make("agent2", &mut rng)?;
    let kernel = |rng: &mut rand_chacha::ChaCha8Rng| {
        if rng.random_bool(0.5) {
            KernelSpec::Linear
        } else {
            KernelSpec::rbf(1.0)
        }
    };
    let kernels = [kernel(&mut rng), kernel(&mut rng)];
    let c = if rng.random_bool(0.5) { 0.1 } else { 1.0 };
    Ok(RandomInstance {
        index,
        datasets: [d1, d2],
        kernels,
        c,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub instance: usize,
    pub check: &'static str,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteCheck {
    fn new(instance: usize, check: &'static str, deviation: f64, tolerance: f64) -> Self {
        SuiteCheck {
            instance,
            check,
            deviation,
            tolerance,
            passed: deviation.is_finite() && deviation <= tolerance,
        }
    }
}

/// Rounds compared per scheme: `t <= 10`, i.e. AKD passings up to `2t + 1`.
pub const SUITE_ROUNDS: usize = 11;

/// Simulation/closed-form agreement for AKD, AvgKD and min-norm PKD on one
/// instance, plus spectral AKD against the block-matrix form.
pub fn equivalence_checks(inst: &RandomInstance) -> Result<Vec<SuiteCheck>> {
    let i = inst.index;
    let mut out = Vec::new();
    let reg = SolveMode::Regularized;
    let system = inst.system(reg)?;

    let akd = run_protocol(&inst.config(Scheme::Akd, 2 * SUITE_ROUNDS, reg))?;
    let report = verify_run(&akd, &system)?;
    out.push(SuiteCheck::new(i, "akd simulation = power form", report.max_deviation, report.tolerance));

    let ops = crate::protocols::closed_form::spectral_operators(&system)?;
    let spectral = akd_spectral_series(&ops, 0, 2 * SUITE_ROUNDS);
    let algebra = akd_closed_form_series(&system, 0, 2 * SUITE_ROUNDS)?;
    let dev = spectral
        .iter()
        .zip(&algebra)
        .flat_map(|(s, a)| s.on_agents.iter().zip(&a.on_agents).map(|(x, y)| max_abs_diff(x, y)))
        .fold(0.0, f64::max);
    out.push(SuiteCheck::new(i, "akd spectral = power form", dev, TOL_REGULARIZED));

    let avg = run_protocol(&inst.config(Scheme::Avgkd, SUITE_ROUNDS, reg))?;
    let report = verify_run(&avg, &system)?;
    out.push(SuiteCheck::new(i, "avgkd simulation = expansion", report.max_deviation, report.tolerance));

    let mn = SolveMode::MinNorm;
    let pkd = run_protocol(&inst.config(Scheme::Pkd, SUITE_ROUNDS, mn))?;
    let report = verify_run(&pkd, &inst.system(mn)?)?;
    out.push(SuiteCheck::new(i, "pkd min-norm simulation = projections", report.max_deviation, report.tolerance));
    Ok(out)
}

/// Structural properties of the spectral form on one instance: projector
/// idempotence, contraction bound, orthonormality, reconstruction,
/// monotone cos(phi), and basis invariance of predictions.
pub fn spectral_checks(inst: &RandomInstance, seed: u64) -> Result<Vec<SuiteCheck>> {
    let i = inst.index;
    let mut rng = stream(seed, &format!("spectral-{i}"));
    let system = inst.system(SolveMode::Regularized)?;
    let form = eigendecompose(&system)?;
    let size = form.eigenvalues().len();
    let probes: Vec<Vector> = (0..100)
        .map(|_| {
            let v = Vector::from_fn(size, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            v / n
        })
        .collect();
    let mut out = Vec::new();

    let mut idem = 0.0f64;
    for id in [BlockId::V1, BlockId::V2, BlockId::V1_TILDE, BlockId::V2_TILDE] {
        let p = oblique_projector(&form, id, Geometry::Regularized(inst.c))?;
        for x in &probes {
            let once = &p.matrix * x;
            idem = idem.max(max_abs_diff(&(&p.matrix * &once), &once));
        }
    }
    out.push(SuiteCheck::new(i, "projector idempotence", idem, 1e-8));

    let mut excess = 0.0f64;
    for pair in [ContractionPair::C1, ContractionPair::C2Tilde] {
        let c = contraction(&form, pair).matrix;
        excess = excess.max(spectral_norm(&c) - 1.0);
        for x in &probes {
            excess = excess.max((&c * x).norm() - 1.0);
        }
    }
    out.push(SuiteCheck::new(i, "contraction norm <= 1", excess.max(0.0), 1e-10));

    let v = form.v();
    let ortho = max_abs_diff_mat(&(v.transpose() * &v), &Matrix::identity(size, size));
    let recon = max_abs_diff_mat(&form.reconstruct(), &system.block_diagonal());
    out.push(SuiteCheck::new(i, "V orthonormal, V^T D V = K", ortho.max(recon), 1e-9));

    let cs = [0.0, 0.1, 1.0, 10.0]
        .iter()
        .map(|&c| min_angle_cos(&form, c))
        .collect::<Result<Vec<_>>>()?;
    let rise = cs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    out.push(SuiteCheck::new(i, "cos(phi) nonincreasing in c", rise, 1e-12));

    let mut perm: Vec<usize> = (0..size).collect();
    perm.shuffle(&mut rng);
    let alt = eigendecompose_blockwise(&system)?.permuted(&perm)?;
    let geometry = Geometry::of(&system);
    let a = SpectralOperators::new(form, geometry)?;
    let b = SpectralOperators::new(alt, geometry)?;
    let mut dev = 0.0f64;
    for start in 0..2 {
        let pa = akd_spectral_series(&a, start, 2 * SUITE_ROUNDS);
        let pb = akd_spectral_series(&b, start, 2 * SUITE_ROUNDS);
        for (x, y) in pa.iter().zip(&pb) {
            for (u, w) in x.on_agents.iter().zip(&y.on_agents) {
                dev = dev.max(max_abs_diff(u, w));
            }
        }
    }
    let avg_a = avgkd_closed_form_series(&a, SUITE_ROUNDS)?;
    let avg_b = avgkd_closed_form_series(&b, SUITE_ROUNDS)?;
    for (x, y) in avg_a.iter().flatten().zip(avg_b.iter().flatten()) {
        for (u, w) in x.on_agents.iter().zip(&y.on_agents) {
            dev = dev.max(max_abs_diff(u, w));
        }
    }
    out.push(SuiteCheck::new(i, "predictions basis-invariant", dev, 1e-8));
    Ok(out)
}

/// The full suite over `instances` seeded instances.
pub fn equivalence_suite(master_seed: u64, instances: usize) -> Result<Vec<SuiteCheck>> {
    use rayon::prelude::*;
    let per = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = random_instance(master_seed, i)?;
            let mut checks = equivalence_checks(&inst).map_err(|e| e.context(format!("instance {i}")))?;
            checks.extend(spectral_checks(&inst, master_seed).map_err(|e| e.context(format!("instance {i}")))?);
            Ok(checks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.into_iter().flatten().collect())
}
