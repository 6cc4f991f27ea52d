use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blind_ia::numerics::{self, Matrix, RankTolerance};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

fn to_nalgebra(m: &Matrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Generic matrix of prescribed rank: product of random thin factors.
fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    random_matrix(rng, rows, rank).mul(&random_matrix(rng, rank, cols))
}

#[test]
fn singular_values_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let m = random_matrix(&mut rng, rows, cols);
        let ours = numerics::singular_values(&m);
        let mut oracle: Vec<f64> = to_nalgebra(&m).singular_values().iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        // our kernel returns one value per column; the oracle min(rows, cols)
        for (i, s) in oracle.iter().enumerate() {
            assert_relative_eq!(ours[i], *s, epsilon = 1e-12, max_relative = 1e-10);
        }
        for s in &ours[oracle.len()..] {
            assert!(*s <= 1e-12 * ours[0], "{ours:?}");
        }
    }
}

#[test]
fn svd_reconstructs_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let m = random_matrix(&mut rng, rows, cols);
        let svd = numerics::svd(&m);
        let sigma = Matrix::from_fn(cols, cols, |i, j| {
            if i == j {
                svd.singular_values[i].into()
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let back = svd.u.mul(&sigma).mul(&svd.v.adjoint());
        assert!(back.try_sub(&m).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn determinant_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 1..=6 {
        let m = random_matrix(&mut rng, n, n);
        let ours = numerics::determinant(&m).unwrap();
        let oracle = to_nalgebra(&m).determinant();
        assert!((ours - oracle).norm() <= 1e-12 * (1.0 + oracle.norm()));
    }
}

#[test]
fn generic_square_matrices_are_full_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let draws = 10_000;
    let full = (0..draws)
        .filter(|i| {
            let n = 2 + i % 5;
            numerics::rank(&random_matrix(&mut rng, n, n), RankTolerance::DEFAULT) == n
        })
        .count();
    assert!(full as f64 >= 0.9999 * draws as f64, "{full}/{draws}");
}

#[test]
fn random_well_conditioned_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = random_matrix(&mut rng, 4, 4).try_add(&Matrix::identity(4).scale(3.0.into())).unwrap();
    let y = random_matrix(&mut rng, 4, 1);
    let x = numerics::solve(&m, &y, RankTolerance::DEFAULT).unwrap();
    assert!(m.mul(&x).try_sub(&y).unwrap().max_abs() < 1e-10);
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

proptest! {
    #[test]
    fn rank_invariant_under_permutation_and_scaling(
        rows in 1usize..=6,
        cols in 1usize..=6,
        rank_seed in 0usize..6,
        seed in any::<u64>(),
        scale_re in 0.01f64..100.0,
        scale_im in -100.0f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1 + rank_seed % rows.min(cols);
        let m = low_rank(&mut rng, rows, cols, r);
        let tol = RankTolerance::DEFAULT;
        let base = numerics::rank(&m, tol);
        prop_assert_eq!(base, r);
        let permuted = m
            .select_rows(&permutation(rows, seed ^ 1))
            .select_columns(&permutation(cols, seed ^ 2));
        prop_assert_eq!(numerics::rank(&permuted, tol), base);
        let scaled = m.scale(Complex64::new(scale_re, scale_im));
        prop_assert_eq!(numerics::rank(&scaled, tol), base);
    }

    #[test]
    fn solve_round_trip(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n, n);
        let sv = numerics::singular_values(&m);
        prop_assume!(sv[0] / sv[n - 1] < 1e6);
        let y = random_matrix(&mut rng, n, 2);
        let x = numerics::solve(&m, &y, RankTolerance::DEFAULT).unwrap();
        let residual = m.mul(&x).try_sub(&y).unwrap().frobenius_norm();
        prop_assert!(residual / y.frobenius_norm() < 1e-9);
    }

    #[test]
    fn column_space_basis_is_orthonormal(
        rows in 1usize..=6,
        cols in 1usize..=6,
        rank_seed in 0usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1 + rank_seed % rows.min(cols);
        let m = low_rank(&mut rng, rows, cols, r);
        let basis = numerics::column_space_basis(&m, RankTolerance::DEFAULT);
        prop_assert_eq!(basis.cols(), r);
        let gram = basis.adjoint().mul(&basis);
        prop_assert!(gram.try_sub(&Matrix::identity(r)).unwrap().max_abs() < 1e-12);
        // spans the columns of m
        let projected = basis.mul(&basis.adjoint().mul(&m));
        prop_assert!(projected.try_sub(&m).unwrap().max_abs() < 1e-10 * m.max_abs().max(1.0));
    }

    #[test]
    fn left_inverse_inverts_full_column_rank(
        rows in 1usize..=6,
        extra in 0usize..3,
        seed in any::<u64>(),
    ) {
        let cols = rows.saturating_sub(extra).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, rows, cols);
        let pinv = numerics::left_inverse(&a, RankTolerance::DEFAULT).unwrap();
        let prod = pinv.mul(&a);
        prop_assert!(prod.try_sub(&Matrix::identity(cols)).unwrap().max_abs() < 1e-8);
    }
}
