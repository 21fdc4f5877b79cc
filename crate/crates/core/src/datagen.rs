//! Synthetic regression problems and heterogeneity-controlled splits.
//!
//! Seeds: a 64-bit master seed is expanded into independent streams by
//! label. The stream seed is `splitmix64(master ^ fnv1a64(label))` and feeds
//! a ChaCha8 generator. Labels used here: `design-matrix`, `coefficients`,
//! `noise`, `split`, `alpha`, `eval-split`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream named `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}

/// Generator for the stream named `label` under `master`.
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

fn default_ratio() -> f64 {
    1.5
}

/// `b = A x* + noise * e` with standard-normal `A`, `x*` and `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRegressionSpec {
    pub d: usize,
    /// Samples per dimension.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticRegressionSpec {
    pub fn new(d: usize, seed: u64) -> Self {
        SyntheticRegressionSpec {
            d,
            ratio: default_ratio(),
            noise: 0.0,
            seed,
        }
    }

    /// `round(ratio * d)`.
    pub fn samples(&self) -> usize {
        (self.ratio * self.d as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("dimension d must be positive".into()));
        }
        if !(self.ratio.is_finite() && self.ratio > 0.0) || self.samples() < 2 {
            return Err(Error::InvalidConfig(format!(
                "ratio {} gives {} samples; need at least 2",
                self.ratio,
                self.samples()
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

pub fn gen_linear_regression(spec: &SyntheticRegressionSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.samples(), spec.d);
    let mut rng = stream(spec.seed, "design-matrix");
    // fill row by row so the stream order does not depend on storage layout
    let mut a = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let mut rng = stream(spec.seed, "coefficients");
    let x_star = Vector::from_fn(d, |_, _| rng.sample(StandardNormal));
    let mut b = &a * x_star;
    if spec.noise > 0.0 {
        let mut rng = stream(spec.seed, "noise");
        for v in b.iter_mut() {
            *v += spec.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Dataset::new("synthetic", a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionMode {
    /// Seeded shuffle, then cut.
    Iid,
    /// Ascending label order, then cut.
    Sorted,
}

fn check_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("split fraction must lie in (0, 1), got {p}")))
    }
}

fn ascending_by_label(data: &Dataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let y = data.labels();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    idx
}

/// Two parts of sizes `floor(p n)` and the rest.
pub fn split_fraction(data: &Dataset, p: f64, mode: FractionMode, seed: u64) -> Result<(Dataset, Dataset)> {
    check_fraction(p)?;
    let n = data.len();
    let cut = (p * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::DegenerateSplit(format!(
            "fraction {p} of {n} samples leaves one side empty"
        )));
    }
    let order = match mode {
        FractionMode::Iid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut stream(seed, "split"));
            idx
        }
        FractionMode::Sorted => ascending_by_label(data),
    };
    Ok((
        data.subset("agent1", &order[..cut])?,
        data.subset("agent2", &order[cut..])?,
    ))
}

/// Group of each sample by label rank: `groups` contiguous quantile bins.
pub fn label_quantile_groups(data: &Dataset, groups: usize) -> Result<Vec<usize>> {
    let n = data.len();
    if groups == 0 || groups > n {
        return Err(Error::DegenerateSplit(format!("cannot form {groups} groups from {n} samples")));
    }
    let mut out = vec![0; n];
    for (rank, &i) in ascending_by_label(data).iter().enumerate() {
        out[i] = rank * groups / n;
    }
    Ok(out)
}

/// Two label groups: the lowest `floor(p n)` labels and the rest.
pub fn label_cut_groups(data: &Dataset, p: f64) -> Result<Vec<usize>> {
    check_fraction(p)?;
    let n = data.len();
    let cut = (p * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::DegenerateSplit(format!(
            "fraction {p} of {n} samples leaves one group empty"
        )));
    }
    let mut out = vec![1; n];
    for &i in &ascending_by_label(data)[..cut] {
        out[i] = 0;
    }
    Ok(out)
}

/// Result of [`split_alpha`].
#[derive(Debug, Clone)]
pub struct AlphaSplit {
    pub parts: Vec<Dataset>,
    /// Group of every sample in each part.
    pub part_groups: Vec<Vec<usize>>,
    /// Home agent of each group.
    pub home: Vec<usize>,
}

impl AlphaSplit {
    /// Fraction of all samples that sit with the home agent of their group:
    /// 1 for a fully disjoint assignment, about `1/M` for an i.i.d. one.
    pub fn disjointness_score(&self) -> f64 {
        let total: usize = self.part_groups.iter().map(|g| g.len()).sum();
        let home: usize = self
            .part_groups
            .iter()
            .enumerate()
            .map(|(a, gs)| gs.iter().filter(|&&g| self.home[g] == a).count())
            .sum();
        home as f64 / total.max(1) as f64
    }
}

/// Heterogeneity-controlled split. Groups are assigned to `agents` in
/// contiguous blocks (group `g` goes to agent `g * M / G`). Each agent then
/// gives up a random `alpha` portion of its samples; the given-up samples
/// are pooled, shuffled and dealt back so every agent keeps its size.
/// `alpha = 0` keeps groups disjoint, `alpha = 1` is an i.i.d. split.
pub fn split_alpha(data: &Dataset, groups: &[usize], alpha: f64, agents: usize, seed: u64) -> Result<AlphaSplit> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    crate::error::check_dim("split_alpha (group per sample)", data.len(), groups.len())?;
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if agents == 0 || n_groups < agents {
        return Err(Error::DegenerateSplit(format!(
            "{n_groups} groups cannot cover {agents} agents"
        )));
    }
    let home: Vec<usize> = (0..n_groups).map(|g| g * agents / n_groups).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); agents];
    for (i, &g) in groups.iter().enumerate() {
        members[home[g]].push(i);
    }
    if let Some(a) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::DegenerateSplit(format!("agent {} receives no samples", a + 1)));
    }
    let mut rng = stream(seed, "alpha");
    let mut pool = Vec::new();
    let mut taken = Vec::with_capacity(agents);
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
        let k = (alpha * m.len() as f64).round() as usize;
        pool.extend(m.drain(..k));
        taken.push(k);
    }
    pool.shuffle(&mut rng);
    let mut pool = pool.into_iter();
    for (m, k) in members.iter_mut().zip(taken) {
        m.extend(pool.by_ref().take(k));
        m.sort_unstable();
    }
    let parts = members
        .iter()
        .enumerate()
        .map(|(a, idx)| data.subset(format!("agent{}", a + 1), idx))
        .collect::<Result<Vec<_>>>()?;
    let part_groups = members
        .iter()
        .map(|idx| idx.iter().map(|&i| groups[i]).collect())
        .collect();
    Ok(AlphaSplit {
        parts,
        part_groups,
        home,
    })
}

/// Seeded i.i.d. train/test split; the train part has `round(f n)` samples.
pub fn train_test_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    check_fraction(train_fraction)?;
    let n = data.len();
    let cut = (train_fraction * n as f64).round() as usize;
    if cut == 0 || cut == n {
        return Err(Error::DegenerateSplit(format!(
            "train fraction {train_fraction} of {n} samples leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, "eval-split"));
    Ok((data.subset("train", &idx[..cut])?, data.subset("test", &idx[cut..])?))
}

/// How the training pool is divided between agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    IidFraction { p: f64 },
    SortedByLabel { p: f64 },
    /// With `p` and two agents, the label groups are the lowest `floor(p n)`
    /// labels and the rest; otherwise `groups` (default: one per agent)
    /// label-quantile bins.
    AlphaMix {
        alpha: f64,
        #[serde(default)]
        groups: Option<usize>,
        #[serde(default)]
        p: Option<f64>,
    },
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SplitSpec::IidFraction { p } | SplitSpec::SortedByLabel { p } => check_fraction(p),
            SplitSpec::AlphaMix { alpha, p, .. } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
                }
                p.map_or(Ok(()), check_fraction)
            }
        }
    }
}

/// Splits `data` into `agents` parts.
pub fn apply_split(data: &Dataset, spec: &SplitSpec, agents: usize, seed: u64) -> Result<Vec<Dataset>> {
    spec.validate()?;
    match *spec {
        SplitSpec::IidFraction { p } | SplitSpec::SortedByLabel { p } => {
            if agents != 2 {
                return Err(Error::InvalidConfig(format!(
                    "fraction splits produce two agents, configuration has {agents}"
                )));
            }
            let mode = if matches!(spec, SplitSpec::IidFraction { .. }) {
                FractionMode::Iid
            } else {
                FractionMode::Sorted
            };
            let (a, b) = split_fraction(data, p, mode, seed)?;
            Ok(vec![a, b])
        }
        SplitSpec::AlphaMix { alpha, groups, p } => {
            let labels = match (p, agents) {
                (Some(p), 2) => label_cut_groups(data, p)?,
                (Some(_), _) => {
                    return Err(Error::InvalidConfig("alpha split with `p` needs exactly two agents".into()))
                }
                (None, _) => label_quantile_groups(data, groups.unwrap_or(agents))?,
            };
            Ok(split_alpha(data, &labels, alpha, agents, seed)?.parts)
        }
    }
}
