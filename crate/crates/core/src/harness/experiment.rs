use std::time::{Duration, Instant};

use crate::datagen::{apply_split, gen_linear_regression, train_test_split, SyntheticRegressionSpec};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::harness::config::{DataSource, ExperimentConfig, LoadedConfig};
use crate::harness::metrics::{agent_label, degradation_curve, metric_mse, zero_mse, MetricSeries};
use crate::protocols::{
    run_akd, run_ekd, run_protocol, solve_local_krr, solve_pooled_krr, verify_run, AgentSpec, EvalSet,
    ProtocolConfig, Scheme, Trajectory, VerifyReport,
};
use crate::spectral::BlockKernelSystem;

/// The data an experiment runs on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// `train` divided between the agents.
    pub parts: Vec<Dataset>,
}

/// Loads or generates the data, holds out the test set and splits the
/// training pool between agents.
pub fn prepare_data(loaded: &LoadedConfig) -> Result<PreparedData> {
    let cfg = &loaded.config;
    let full = match &cfg.data {
        DataSource::Synthetic { d, ratio, noise } => gen_linear_regression(&SyntheticRegressionSpec {
            d: *d,
            ratio: *ratio,
            noise: *noise,
            seed: cfg.seed,
        })?,
        DataSource::Csv { path } => Dataset::load_csv(loaded.resolve(path))?,
    };
    let (train, test) = train_test_split(&full, cfg.eval_split.train_fraction, cfg.seed)?;
    let parts = apply_split(&train, &cfg.split, cfg.agents.len(), cfg.seed)?;
    Ok(PreparedData { train, test, parts })
}

/// Output of one experiment.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Empty for a single run, the grid point for a sweep member.
    pub label: String,
    pub config: ExperimentConfig,
    /// Config text exactly as read.
    pub snapshot: String,
    pub overrides: Vec<String>,
    pub series: Vec<MetricSeries>,
    pub verification: Vec<VerifyReport>,
    /// Skipped verifications and flags raised by the runs.
    pub notes: Vec<String>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn verified(&self) -> bool {
        self.verification.iter().all(|r| r.passed)
    }

    pub fn find(&self, scheme: &str, agent: &str, eval_set: &str) -> Option<&MetricSeries> {
        self.series
            .iter()
            .find(|s| s.scheme == scheme && s.agent == agent && s.eval_set == eval_set)
    }
}

pub const EVAL_SETS: [&str; 2] = ["train", "test"];

fn protocol_config(cfg: &ExperimentConfig, data: &PreparedData, scheme: Scheme) -> ProtocolConfig {
    let agents = data
        .parts
        .iter()
        .zip(&cfg.agents)
        .map(|(d, a)| AgentSpec {
            data: d.clone(),
            kernel: a.kernel,
            reg: a.c,
            mode: a.mode,
        })
        .collect();
    ProtocolConfig::new(scheme, agents, cfg.rounds)
        .with_start_agent(cfg.start_agent)
        .with_eval_set(EvalSet::from_dataset("train", &data.train))
        .with_eval_set(EvalSet::from_dataset("test", &data.test))
}

fn truths(data: &PreparedData) -> [&crate::linalg::Vector; 2] {
    [data.train.labels(), data.test.labels()]
}

struct Verifier {
    system: Option<BlockKernelSystem>,
    reports: Vec<VerifyReport>,
    notes: Vec<String>,
}

impl Verifier {
    fn new(enabled: bool, base: &ProtocolConfig) -> Self {
        let mut notes = Vec::new();
        let system = if enabled {
            match base.block_system() {
                Ok(s) => Some(s),
                Err(e) => {
                    notes.push(format!("verification skipped: {e}"));
                    None
                }
            }
        } else {
            None
        };
        Verifier {
            system,
            reports: Vec::new(),
            notes,
        }
    }

    fn check(&mut self, what: &str, traj: &Trajectory) {
        let Some(system) = &self.system else { return };
        match verify_run(traj, system) {
            Ok(r) => self.reports.push(VerifyReport { subject: what.to_string(), ..r }),
            Err(e) => self.notes.push(format!("{what}: verification skipped: {e}")),
        }
    }
}

/// Runs every configured scheme plus the reference predictors and collects
/// MSE series on the train and test sets.
pub fn run_experiment(loaded: &LoadedConfig) -> Result<RunRecord> {
    let started = Instant::now();
    let cfg = &loaded.config;
    cfg.validate()?;
    let data = prepare_data(loaded)?;
    let base = protocol_config(cfg, &data, Scheme::Akd);
    let mut verifier = Verifier::new(cfg.verify, &base);
    let mut series = Vec::new();
    let mut notes = Vec::new();
    let truth = truths(&data);

    for &scheme in &cfg.schemes {
        let pc = base.clone().with_scheme(scheme);
        match scheme {
            Scheme::Akd => {
                let traj = run_akd(&pc).map_err(|e| e.context("akd"))?;
                verifier.check("akd", &traj);
                for (e, t) in EVAL_SETS.iter().zip(truth) {
                    series.push(degradation_curve(&traj, e, t, cfg.start_agent)?);
                }
            }
            Scheme::Avgkd | Scheme::Pkd => {
                let traj = run_protocol(&pc).map_err(|e| e.context(scheme.name()))?;
                notes.extend(traj.flags.iter().map(|f| format!("{}: {f}", scheme.name())));
                verifier.check(scheme.name(), &traj);
                for (e, t) in EVAL_SETS.iter().zip(truth) {
                    for i in 0..cfg.agents.len() {
                        series.push(degradation_curve(&traj, e, t, i)?);
                    }
                }
            }
            Scheme::Ekd => {
                let run = run_ekd(&pc).map_err(|e| e.context("ekd"))?;
                for chain in &run.chains {
                    verifier.check(&format!("ekd chain from {}", agent_label(chain.start_agent)), chain);
                }
                let ens = &run.ensemble;
                if ens.divergent {
                    notes.push(format!("ekd: series diverging after {} terms", ens.terms));
                }
                for (ei, (e, t)) in EVAL_SETS.iter().zip(truth).enumerate() {
                    let mut values = ens
                        .partial_on_eval
                        .iter()
                        .map(|p| metric_mse(&p[ei], t))
                        .collect::<Result<Vec<_>>>()?;
                    // a converged series stays at its last partial sum
                    if let Some(&last) = values.last() {
                        values.resize(cfg.rounds, last);
                    }
                    series.push(MetricSeries::new("ekd", "ensemble", *e, values));
                }
            }
        }
    }

    series.extend(reference_series(cfg, &base, &data)?);
    let Verifier {
        reports,
        notes: vnotes,
        ..
    } = verifier;
    notes.extend(vnotes);
    Ok(RunRecord {
        label: String::new(),
        config: cfg.clone(),
        snapshot: loaded.snapshot.clone(),
        overrides: loaded.overrides.clone(),
        series,
        verification: reports,
        notes,
        wall_time: started.elapsed(),
    })
}

/// Centralized KRR (one per distinct agent fitting rule), local-only fits
/// and the zero predictor, as constant series over the run length.
fn reference_series(cfg: &ExperimentConfig, base: &ProtocolConfig, data: &PreparedData) -> Result<Vec<MetricSeries>> {
    let n = base.total_samples();
    let parts: Vec<&Dataset> = data.parts.iter().collect();
    let len = cfg.rounds;
    let queries = [&data.train, &data.test];
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for (i, a) in base.agents.iter().enumerate() {
        if seen.contains(&&cfg.agents[i]) {
            continue;
        }
        seen.push(&cfg.agents[i]);
        let model = solve_pooled_krr(a, &parts).map_err(|e| e.context("centralized baseline"))?;
        for (e, q) in EVAL_SETS.iter().zip(queries) {
            let mse = metric_mse(&model.predict(q.inputs())?, q.labels())?;
            out.push(MetricSeries::constant("centralized", &agent_label(i), e, mse, len));
        }
    }
    for (i, a) in base.agents.iter().enumerate() {
        let model = solve_local_krr(a, n).map_err(|e| e.context("local baseline"))?;
        for (e, q) in EVAL_SETS.iter().zip(queries) {
            let mse = metric_mse(&model.predict(q.inputs())?, q.labels())?;
            out.push(MetricSeries::constant("local", &agent_label(i), e, mse, len));
        }
    }
    for (e, q) in EVAL_SETS.iter().zip(queries) {
        out.push(MetricSeries::constant("zero", "all", e, zero_mse(q.labels()), len));
    }
    Ok(out)
}
