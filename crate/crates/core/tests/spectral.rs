use fedkd_core::kernel::KernelSpec;
use fedkd_core::linalg::{max_abs_diff_mat, spectral_norm, Matrix, Vector};
use fedkd_core::ridge::SolveMode;
use fedkd_core::spectral::*;
use fedkd_core::Dataset;
use proptest::prelude::*;

fn grid_data(id: &str, n: usize, d: usize, shift: f64) -> Dataset {
    let x = Matrix::from_fn(n, d, |i, j| ((i * 7 + j * 3) as f64 * 0.37 + shift).sin());
    let y = Vector::from_fn(n, |i, _| (i as f64 * 0.9 + shift).cos());
    Dataset::new(id, x, y).unwrap()
}

fn system(k1: KernelSpec, k2: KernelSpec, c: f64) -> BlockKernelSystem {
    let a = grid_data("a", 5, 2, 0.0);
    let b = grid_data("b", 4, 2, 1.3);
    assemble_block_system(&a, &b, &k1, &k2, c).unwrap()
}

#[test]
fn both_decompositions_reproduce_the_block_operator() {
    let sys = system(KernelSpec::rbf(1.0), KernelSpec::polynomial(2, 1.0), 0.1);
    let k = sys.block_diagonal();
    for form in [eigendecompose(&sys).unwrap(), eigendecompose_blockwise(&sys).unwrap()] {
        assert!(max_abs_diff_mat(&form.reconstruct(), &k) < 1e-12);
        let v = form.v();
        let eye = Matrix::identity(v.nrows(), v.nrows());
        assert!(max_abs_diff_mat(&(&v * v.transpose()), &eye) < 1e-12);
        assert!(form.eigenvalues().iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn kernel_blocks_are_recovered_from_the_form() {
    let sys = system(KernelSpec::rbf(0.7), KernelSpec::Linear, 0.2);
    let form = eigendecompose(&sys).unwrap();
    for s in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let got = form.kernel_block(BlockId { section: s, data: i }, BlockId { section: s, data: j });
                assert!(max_abs_diff_mat(&got, &sys.block(s, i, j)) < 1e-12, "section {s} block {i}{j}");
            }
        }
    }
    let cross = form.kernel_block(BlockId::V1, BlockId::V1_TILDE);
    assert!(cross.amax() < 1e-12, "sections must be orthogonal");
}

#[test]
fn projectors_fix_their_block_and_are_idempotent() {
    let sys = system(KernelSpec::rbf(1.0), KernelSpec::rbf(2.0), 0.3);
    let form = eigendecompose(&sys).unwrap();
    for geometry in [Geometry::Regularized(0.3), Geometry::MinNorm] {
        for id in [BlockId::V1, BlockId::V2_TILDE] {
            let p = oblique_projector(&form, id, geometry).unwrap().matrix;
            assert!(max_abs_diff_mat(&(&p * &p), &p) < 1e-9, "{geometry:?} {id:?}");
            let va = form.block(id);
            if geometry != Geometry::MinNorm {
                assert!(max_abs_diff_mat(&(&p * &va), &va) < 1e-9);
            }
        }
    }
}

#[test]
fn contractions_do_not_expand() {
    let sys = system(KernelSpec::rbf(1.0), KernelSpec::Linear, 0.1);
    let form = eigendecompose(&sys).unwrap();
    for pair in [ContractionPair::C1, ContractionPair::C2Tilde] {
        let c = contraction(&form, pair);
        assert!(spectral_norm(&c.matrix) <= 1.0 + 1e-12);
    }
}

#[test]
fn min_angle_is_basis_independent() {
    let sys = system(KernelSpec::rbf(1.5), KernelSpec::rbf(1.5), 0.05);
    let full = eigendecompose(&sys).unwrap();
    let blockwise = eigendecompose_blockwise(&sys).unwrap();
    let n = full.eigenvalues().len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let reversed = full.permuted(&perm).unwrap();
    for c in [0.0, 0.05, 1.0] {
        let a = min_angle_cos(&full, c).unwrap();
        assert!((a - min_angle_cos(&blockwise, c).unwrap()).abs() < 1e-9);
        assert!((a - min_angle_cos(&reversed, c).unwrap()).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&a));
    }
    // a larger shift can only shrink the cosine
    assert!(min_angle_cos(&full, 1.0).unwrap() <= min_angle_cos(&full, 0.05).unwrap() + 1e-12);
}

#[test]
fn identical_data_has_zero_angle_without_shift() {
    let a = grid_data("a", 4, 3, 0.2);
    let sys = assemble_block_system(&a, &a, &KernelSpec::rbf(1.0), &KernelSpec::rbf(1.0), 0.0)
        .unwrap()
        .with_mode(SolveMode::MinNorm);
    let form = eigendecompose(&sys).unwrap();
    assert!((min_angle_cos(&form, 0.0).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn bad_permutation_is_rejected() {
    let sys = system(KernelSpec::Linear, KernelSpec::Linear, 0.1);
    let form = eigendecompose(&sys).unwrap();
    let n = form.eigenvalues().len();
    assert!(form.permuted(&vec![0; n]).is_err());
    assert!(form.permuted(&[0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regularized_projectors_hold_on_random_inputs(
        xa in prop::collection::vec(-2.0f64..2.0, 8),
        xb in prop::collection::vec(-2.0f64..2.0, 6),
        bw in 0.3f64..3.0,
        c in 0.01f64..2.0,
    ) {
        let a = Dataset::new("a", Matrix::from_row_slice(4, 2, &xa), Vector::from_element(4, 1.0)).unwrap();
        let b = Dataset::new("b", Matrix::from_row_slice(3, 2, &xb), Vector::from_element(3, -1.0)).unwrap();
        let sys = assemble_block_system(&a, &b, &KernelSpec::rbf(bw), &KernelSpec::Linear, c).unwrap();
        let form = eigendecompose(&sys).unwrap();
        prop_assert!(max_abs_diff_mat(&form.reconstruct(), &sys.block_diagonal()) < 1e-10);
        let ops = SpectralOperators::new(form.clone(), Geometry::Regularized(c)).unwrap();
        for agent in 0..2 {
            let pt = ops.projector_t(agent);
            prop_assert!(max_abs_diff_mat(&(pt * pt), pt) < 1e-8);
        }
        let cos = min_angle_cos(&form, c).unwrap();
        prop_assert!((0.0..1.0).contains(&cos));
    }
}
