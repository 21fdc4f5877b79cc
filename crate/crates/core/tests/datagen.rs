use fedkd_core::datagen::*;
use fedkd_core::linalg::{Matrix, Vector};
use fedkd_core::Dataset;
use proptest::prelude::*;

fn labelled(n: usize, seed: u64) -> Dataset {
    let spec = SyntheticRegressionSpec {
        d: 4,
        ratio: n as f64 / 4.0,
        noise: 0.0,
        seed,
    };
    gen_linear_regression(&spec).unwrap()
}

fn sorted_rows(d: &Dataset) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..d.len())
        .map(|i| {
            let mut r: Vec<u64> = d.inputs().row(i).iter().map(|v| v.to_bits()).collect();
            r.push(d.labels()[i].to_bits());
            r
        })
        .collect();
    rows.sort();
    rows
}

#[test]
fn generator_is_exactly_linear_without_noise() {
    let data = gen_linear_regression(&SyntheticRegressionSpec::new(10, 3)).unwrap();
    assert_eq!(data.len(), 15);
    assert_eq!(data.dim(), 10);
    // 15 equations in 10 unknowns with a consistent solution: least squares residual is zero
    let a = data.inputs().clone();
    let x = a.clone().svd(true, true).solve(data.labels(), 1e-12).unwrap();
    let resid = (&a * x - data.labels()).norm();
    assert!(resid < 1e-9, "residual {resid}");
}

#[test]
fn noise_only_perturbs_labels() {
    let clean = gen_linear_regression(&SyntheticRegressionSpec::new(5, 11)).unwrap();
    let noisy = gen_linear_regression(&SyntheticRegressionSpec {
        noise: 0.5,
        ..SyntheticRegressionSpec::new(5, 11)
    })
    .unwrap();
    assert_eq!(clean.inputs(), noisy.inputs());
    assert!((clean.labels() - noisy.labels()).norm() > 0.0);
}

#[test]
fn alpha_zero_and_one_extremes() {
    let data = labelled(400, 5);
    let groups = label_cut_groups(&data, 0.5).unwrap();
    let disjoint = split_alpha(&data, &groups, 0.0, 2, 9).unwrap();
    assert_eq!(disjoint.disjointness_score(), 1.0);
    let mixed = split_alpha(&data, &groups, 1.0, 2, 9).unwrap();
    let score = mixed.disjointness_score();
    assert!((score - 0.5).abs() < 0.1, "score {score}");
}

#[test]
fn disjointness_falls_as_alpha_grows() {
    let data = labelled(2000, 21);
    let groups = label_quantile_groups(&data, 4).unwrap();
    let scores: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&a| split_alpha(&data, &groups, a, 2, 77).unwrap().disjointness_score())
        .collect();
    for w in scores.windows(2) {
        assert!(w[1] < w[0], "{scores:?}");
    }
}

#[test]
fn alpha_one_looks_iid() {
    // chi-square test of group counts per agent against the pooled proportions
    let data = labelled(1200, 8);
    let groups = label_quantile_groups(&data, 4).unwrap();
    let split = split_alpha(&data, &groups, 1.0, 3, 12).unwrap();
    let n = data.len() as f64;
    let mut chi2 = 0.0;
    for pg in &split.part_groups {
        let size = pg.len() as f64;
        for g in 0..4 {
            let expected = size * groups.iter().filter(|&&x| x == g).count() as f64 / n;
            let observed = pg.iter().filter(|&&x| x == g).count() as f64;
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    // 6 degrees of freedom; 99.9% quantile is 22.46
    assert!(chi2 < 22.46, "chi2 {chi2}");
}

#[test]
fn sorted_fraction_separates_labels() {
    let data = labelled(50, 2);
    let (a, b) = split_fraction(&data, 0.4, FractionMode::Sorted, 0).unwrap();
    assert_eq!(a.len(), 20);
    let max_a = a.labels().max();
    let min_b = b.labels().min();
    assert!(max_a <= min_b);
}

#[test]
fn csv_round_trip_is_exact() {
    let data = labelled(12, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    data.save_csv(&path).unwrap();
    let back = Dataset::load_csv(&path).unwrap();
    assert_eq!(back.inputs(), data.inputs());
    assert_eq!(back.labels(), data.labels());
}

#[test]
fn degenerate_requests_are_rejected() {
    let data = Dataset::new("t", Matrix::from_fn(3, 1, |i, _| i as f64), Vector::from_row_slice(&[1.0, 2.0, 3.0])).unwrap();
    assert!(split_fraction(&data, 0.1, FractionMode::Iid, 0).is_err());
    assert!(split_fraction(&data, 1.0, FractionMode::Iid, 0).is_err());
    assert!(label_quantile_groups(&data, 4).is_err());
    assert!(apply_split(&data, &SplitSpec::IidFraction { p: 0.5 }, 3, 0).is_err());
    assert!(apply_split(&data, &SplitSpec::AlphaMix { alpha: 1.5, groups: None, p: None }, 2, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn alpha_split_conserves_samples(n in 8usize..120, agents in 2usize..5, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let data = labelled(n, seed);
        let groups = label_quantile_groups(&data, agents).unwrap();
        let split = split_alpha(&data, &groups, alpha, agents, seed).unwrap();
        let parts: Vec<&Dataset> = split.parts.iter().collect();
        let pooled = Dataset::concat("pool", &parts).unwrap();
        prop_assert_eq!(sorted_rows(&pooled), sorted_rows(&data));
        // every agent keeps the size of its home groups
        for (a, part) in split.parts.iter().enumerate() {
            let home = groups.iter().filter(|&&g| split.home[g] == a).count();
            prop_assert_eq!(part.len(), home);
        }
    }

    #[test]
    fn fraction_split_conserves_samples(n in 4usize..80, p in 0.2f64..0.8, sorted in any::<bool>(), seed in any::<u64>()) {
        let data = labelled(n, seed);
        let mode = if sorted { FractionMode::Sorted } else { FractionMode::Iid };
        let (a, b) = split_fraction(&data, p, mode, seed).unwrap();
        prop_assert_eq!(a.len(), (p * n as f64).floor() as usize);
        let pooled = Dataset::concat("pool", &[&a, &b]).unwrap();
        prop_assert_eq!(sorted_rows(&pooled), sorted_rows(&data));
    }

    #[test]
    fn seeded_streams_are_reproducible(d in 1usize..12, seed in any::<u64>()) {
        let spec = SyntheticRegressionSpec { d, ratio: 2.0, noise: 0.1, seed };
        let a = gen_linear_regression(&spec).unwrap();
        let b = gen_linear_regression(&spec).unwrap();
        prop_assert_eq!(a.inputs(), b.inputs());
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert_eq!(derive_seed(seed, "split"), derive_seed(seed, "split"));
        prop_assert_ne!(derive_seed(seed, "split"), derive_seed(seed, "alpha"));
    }
}
