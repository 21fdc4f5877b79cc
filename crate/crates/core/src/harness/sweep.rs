use rayon::prelude::*;

use crate::datagen::SplitSpec;
use crate::error::{Error, Result};
use crate::harness::config::{LoadedConfig, SweepGrid};
use crate::harness::experiment::{run_experiment, RunRecord};

/// One grid point: its label and the config to run.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub config: LoadedConfig,
}

/// Cartesian product of the grid axes over the base config, ordered by
/// seed, then alpha, then c. Without a grid the base config is the only point.
pub fn expand_sweep(base: &LoadedConfig) -> Result<Vec<SweepPoint>> {
    let grid = base.config.sweep.clone().unwrap_or_default();
    let SweepGrid { c, alpha, seed } = grid;
    if !alpha.is_empty() && !matches!(base.config.split, SplitSpec::AlphaMix { .. }) {
        return Err(Error::InvalidConfig("sweeping alpha requires an alpha_mix split".into()));
    }
    let axis = |v: Vec<f64>| if v.is_empty() { vec![None] } else { v.into_iter().map(Some).collect() };
    let seeds: Vec<Option<u64>> = if seed.is_empty() { vec![None] } else { seed.into_iter().map(Some).collect() };
    let (cs, alphas) = (axis(c), axis(alpha));
    let mut out = Vec::new();
    for s in &seeds {
        for a in &alphas {
            for cv in &cs {
                let mut point = base.clone();
                let cfg = &mut point.config;
                cfg.sweep = None;
                let mut parts = Vec::new();
                if let Some(s) = s {
                    cfg.seed = *s;
                    parts.push(format!("seed={s}"));
                }
                if let (Some(a), SplitSpec::AlphaMix { alpha, .. }) = (a, &mut cfg.split) {
                    *alpha = *a;
                    parts.push(format!("alpha={a}"));
                }
                if let Some(cv) = cv {
                    for ag in &mut cfg.agents {
                        ag.c = *cv;
                    }
                    parts.push(format!("c={cv}"));
                }
                cfg.validate()?;
                let label = if parts.is_empty() { "base".to_string() } else { parts.join(",") };
                out.push(SweepPoint { label, config: point });
            }
        }
    }
    Ok(out)
}

/// Runs every grid point on at most `jobs` threads (all cores when `None`).
/// Results keep grid order.
pub fn run_sweep(base: &LoadedConfig, jobs: Option<usize>) -> Result<Vec<RunRecord>> {
    let points = expand_sweep(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let mut rec = run_experiment(&p.config).map_err(|e| e.context(p.label.clone()))?;
                rec.label = p.label.clone();
                Ok(rec)
            })
            .collect()
    })
}

/// Directory name for a grid point.
pub fn point_dir_name(label: &str) -> String {
    label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' { ch } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "data": {"source": "synthetic", "d": 6, "ratio": 3.0},
        "split": {"mode": "alpha_mix", "alpha": 0.5},
        "agents": [{"kernel": {"family": "linear"}, "c": 0.1},
                   {"kernel": {"family": "linear"}, "c": 0.1}],
        "schemes": ["akd"],
        "rounds": 3,
        "sweep": {"c": [0.01, 0.1], "alpha": [0.0, 1.0], "seed": [1, 2, 3]}
    }"#;

    #[test]
    fn grid_is_cartesian_and_ordered() {
        let cfg = LoadedConfig::parse(BASE, ".").unwrap();
        let pts = expand_sweep(&cfg).unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0].label, "seed=1,alpha=0,c=0.01");
        assert_eq!(pts[11].label, "seed=3,alpha=1,c=0.1");
        assert!(pts.iter().all(|p| p.config.config.sweep.is_none()));
        assert_eq!(pts[1].config.config.agents[1].c, 0.1);
        assert_eq!(point_dir_name("seed=1,alpha=0,c=0.01"), "seed_1_alpha_0_c_0.01");
    }

    #[test]
    fn alpha_axis_needs_alpha_split() {
        let text = BASE.replace(r#""mode": "alpha_mix", "alpha": 0.5"#, r#""mode": "iid_fraction", "p": 0.5"#);
        let cfg = LoadedConfig::parse(&text, ".").unwrap();
        assert!(expand_sweep(&cfg).is_err());
    }

    #[test]
    fn no_grid_gives_base_point() {
        let text = BASE.replace(r#""sweep": {"c": [0.01, 0.1], "alpha": [0.0, 1.0], "seed": [1, 2, 3]}"#, r#""seed": 5"#);
        let cfg = LoadedConfig::parse(&text, ".").unwrap();
        let pts = expand_sweep(&cfg).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].label, "base");
    }

    #[test]
    fn sweep_runs_in_grid_order() {
        let text = BASE.replace(r#""seed": [1, 2, 3]"#, r#""seed": [4]"#);
        let cfg = LoadedConfig::parse(&text, ".").unwrap();
        let recs = run_sweep(&cfg, Some(2)).unwrap();
        let labels: Vec<_> = recs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            ["seed=4,alpha=0,c=0.01", "seed=4,alpha=0,c=0.1", "seed=4,alpha=1,c=0.01", "seed=4,alpha=1,c=0.1"]
        );
        assert!(recs.iter().all(|r| r.verified()));
    }
}
