use nalgebra::{DMatrix, SymmetricEigen as NaEigen};
use opmode_core::matrix::Matrix;
use opmode_core::pca::{covariance, eigen_sym, ComponentPolicy, PcaModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let mut c = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = rng.random_range(-1.0..1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

fn to_na(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice())
}

#[test]
fn eigenpairs_agree_with_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let m = rng.random_range(1..=50);
        let c = random_symmetric(&mut rng, m);
        let eig = eigen_sym(&c).unwrap();
        let mut reference: Vec<f64> = NaEigen::new(to_na(&c)).eigenvalues.iter().copied().collect();
        reference.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in eig.values.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-9, "trial {trial}: {a} vs {b}");
        }

        let v = &eig.vectors;
        let cv = c.matmul(v);
        for j in 0..m {
            for i in 0..m {
                let r = (cv[(i, j)] - eig.values[j] * v[(i, j)]).abs();
                assert!(r <= 1e-8, "trial {trial}: residual {r}");
            }
        }
        let gram = v.transpose().matmul(v);
        assert!(gram.max_abs_diff(&Matrix::identity(m)) <= 1e-8, "trial {trial}: not orthonormal");
        let trace: f64 = (0..m).map(|i| c[(i, i)]).sum();
        let sum: f64 = eig.values.iter().sum();
        assert!((trace - sum).abs() <= 1e-9, "trial {trial}: trace {trace} vs {sum}");
    }
}

#[test]
fn covariance_matches_direct_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m) = (40, 9);
    let data: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    let x = Matrix::from_row_major(n, m, data).unwrap();
    let na = to_na(&x);
    let expected = na.transpose() * &na / (n as f64 - 1.0);
    let c = covariance(&x).unwrap();
    for i in 0..m {
        for j in 0..m {
            assert!((c[(i, j)] - expected[(i, j)]).abs() <= 1e-12);
        }
    }
}

#[test]
fn planted_rank_two_subspace_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, m) = (200, 12);
    let basis: Vec<Vec<f64>> = (0..2).map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let mut x = Matrix::zeros(n, m);
    for r in 0..n {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        for j in 0..m {
            x[(r, j)] = a * 3.0 * basis[0][j] + b * basis[1][j];
        }
    }
    // centre columns so XᵀX/(n-1) is a covariance
    for j in 0..m {
        let mean: f64 = (0..n).map(|r| x[(r, j)]).sum::<f64>() / n as f64;
        for r in 0..n {
            x[(r, j)] -= mean;
        }
    }
    let model = PcaModel::fit(&x, ComponentPolicy::Fixed(2)).unwrap();
    assert!(model.eigenvalues[2] <= 1e-9 * model.eigenvalues[0]);
    assert!((model.explained_ratio - 1.0).abs() <= 1e-9);
    let back = model.reconstruct(&model.project(&x).unwrap());
    assert!(back.max_abs_diff(&x) <= 1e-4, "reconstruction error {}", back.max_abs_diff(&x));
}
