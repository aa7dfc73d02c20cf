//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (as columns). The input is symmetrized first.
pub fn eigh(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    assert_eq!(n, s.ncols(), "eigh needs a square matrix");
    let mut a = (s + s.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((vals, vecs))
}

/// Frobenius-nearest positive semidefinite matrix.
pub fn project_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = eigh(s)?;
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let w = l.max(0.0);
        scaled.column_mut(j).scale_mut(w);
    }
    let out = scaled * vecs.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn small_examples() {
        let (vals, _) = eigh(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(vals.as_slice(), &[1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, -2.0]));
        let (vals, vecs) = eigh(&d).unwrap();
        assert_eq!(vals.as_slice(), &[-2.0, 5.0]);
        assert_eq!(vecs[(1, 0)].abs(), 1.0);
        assert_eq!(vecs[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 2, 7, 20] {
            let s = random_sym(&mut rng, n);
            let (vals, v) = eigh(&s).unwrap();
            let rec = &v * DMatrix::from_diagonal(&vals) * v.transpose();
            assert!((&s - rec).norm() <= 1e-9 * (1.0 + s.norm()));
            assert!((v.transpose() * &v - DMatrix::identity(n, n)).norm() <= 1e-9);
            for i in 1..n {
                assert!(vals[i - 1] <= vals[i]);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let p = project_psd(&d).unwrap();
        assert!((p - DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0]))).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let psd = &a * a.transpose();
        assert!((project_psd(&psd).unwrap() - &psd).norm() <= 1e-9);
        let s = random_sym(&mut rng, 9);
        let once = project_psd(&s).unwrap();
        let twice = project_psd(&once).unwrap();
        assert!((once - twice).norm() <= 1e-9);
    }
}
