use super::svd::sorted_svd;
use crate::error::{Error, Result};
use crate::scalar::{lit, real, to_f64, Real, CMat};
use nalgebra::{Complex, DMatrix};

/// Geometric-mean decomposition `input · v1† = q · r` with `r` upper
/// triangular and every diagonal entry of `r` equal to the geometric mean of
/// the singular values of `input`.
#[derive(Debug, Clone)]
pub struct GmdFactorization<T: Real> {
    pub q: CMat<T>,
    pub r: CMat<T>,
    pub v1: CMat<T>,
}

impl<T: Real> GmdFactorization<T> {
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.r.nrows()).map(|i| self.r[(i, i)].re).collect()
    }
}

/// Real Givens pair that maps `diag(d1, d2)` to an upper-triangular block with
/// leading diagonal entry `target` (requires `target` between `d1` and `d2`).
fn equalizing_rotations<T: Real>(d1: T, d2: T, target: T) -> (DMatrix<T>, DMatrix<T>) {
    let denom = d1 * d1 - d2 * d2;
    let c = if denom.abs() <= T::default_epsilon() * d1 * d1 {
        T::one()
    } else {
        ((target * target - d2 * d2) / denom).max(T::zero()).min(T::one()).sqrt()
    };
    let s = (T::one() - c * c).max(T::zero()).sqrt();
    let g1 = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let g2 = DMatrix::from_row_slice(2, 2, &[c * d1, -s * d2, s * d2, c * d1]) / target;
    (g1, g2)
}

fn rotate_columns<T: Real>(m: &mut CMat<T>, i: usize, j: usize, g: &DMatrix<T>) {
    for row in 0..m.nrows() {
        let a = m[(row, i)];
        let b = m[(row, j)];
        m[(row, i)] = a * real(g[(0, 0)]) + b * real(g[(1, 0)]);
        m[(row, j)] = a * real(g[(0, 1)]) + b * real(g[(1, 1)]);
    }
}

fn rotate_rows_transposed<T: Real>(m: &mut CMat<T>, i: usize, j: usize, g: &DMatrix<T>) {
    // m[i..j rows] ← gᵀ · m[i..j rows]
    for col in 0..m.ncols() {
        let a = m[(i, col)];
        let b = m[(j, col)];
        m[(i, col)] = a * real(g[(0, 0)]) + b * real(g[(1, 0)]);
        m[(j, col)] = a * real(g[(0, 1)]) + b * real(g[(1, 1)]);
    }
}

/// GMD of a square full-rank matrix, built from its sorted SVD by a sequence
/// of 2×2 rotations that pin one diagonal entry at a time to the geometric mean.
pub fn gmd<T: Real>(a: &CMat<T>) -> Result<GmdFactorization<T>> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidDimension(format!("GMD needs a square matrix, got {:?}", a.shape())));
    }
    let n = a.nrows();
    let svd = sorted_svd(a)?;
    let largest = svd.singular_values[n - 1];
    let smallest = svd.singular_values[0];
    if !(largest > T::zero()) || smallest <= lit::<T>(1e-12) * largest {
        let ratio = if largest > T::zero() { to_f64(smallest / largest) } else { 0.0 };
        return Err(Error::RankDeficient(ratio));
    }

    // Work largest-first; a = U Σ V†, so with q = U, r = Σ, p = V we have a p = q r.
    let order: Vec<usize> = (0..n).rev().collect();
    let mut q = svd.left.select_columns(&order);
    let mut p = svd.right.select_columns(&order);
    let sigma: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let log_mean = sigma.iter().fold(T::zero(), |acc, &s| acc + s.ln()) / lit::<T>(n as f64);
    let target = log_mean.exp();

    let mut r = CMat::<T>::from_diagonal(&nalgebra::DVector::from_iterator(n, sigma.iter().map(|&s| real(s))));

    let swap = |m: &mut CMat<T>, i: usize, j: usize, rows: bool, cols: bool| {
        if rows {
            m.swap_rows(i, j);
        }
        if cols {
            m.swap_columns(i, j);
        }
    };

    for k in 0..n.saturating_sub(1) {
        let dk = r[(k, k)].re;
        // partner index whose diagonal lies on the other side of the target
        let partner = if dk >= target {
            (k + 1..n).find(|&j| r[(j, j)].re <= target)
        } else {
            (k + 1..n).find(|&j| r[(j, j)].re >= target)
        };
        let Some(j) = partner else { continue };
        if j != k + 1 {
            swap(&mut r, k + 1, j, true, true);
            swap(&mut q, k + 1, j, false, true);
            swap(&mut p, k + 1, j, false, true);
        }
        let d1 = r[(k, k)].re;
        let d2 = r[(k + 1, k + 1)].re;
        if (d1 - target).abs() <= T::default_epsilon() * target && (d2 - target).abs() <= T::default_epsilon() * target {
            continue;
        }
        let (g1, g2) = equalizing_rotations(d1, d2, target);
        rotate_columns(&mut r, k, k + 1, &g1);
        rotate_rows_transposed(&mut r, k, k + 1, &g2);
        rotate_columns(&mut q, k, k + 1, &g2);
        rotate_columns(&mut p, k, k + 1, &g1);
        r[(k + 1, k)] = Complex::new(T::zero(), T::zero());
    }

    Ok(GmdFactorization { q, r, v1: p.adjoint() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::linalg::{diag_real, is_unitary, relative_frobenius_error};
    use crate::testutil::{random_cmat, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check(a: &CMat<f64>, f: &GmdFactorization<f64>) {
        let lhs = &f.q * &f.r;
        let rhs = a * f.v1.adjoint();
        assert!(relative_frobenius_error(&lhs, &rhs) < 1e-10);
        assert!(is_unitary(&f.q, 1e-10));
        assert!(is_unitary(&f.v1, 1e-10));
        let d = f.diagonal();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let spread = d.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean;
        assert!(spread < 1e-8, "diagonal spread {spread}");
        for i in 0..f.r.nrows() {
            for j in 0..i {
                assert!(f.r[(i, j)].norm() < 1e-12 * f.r.norm());
            }
        }
    }

    #[test]
    fn identity_is_trivial() {
        let a = CMat::<f64>::identity(2, 2);
        let f = gmd(&a).unwrap();
        check(&a, &f);
        assert!(f.diagonal().iter().all(|&d| (d - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diag_four_one_gives_two() {
        let a = diag_real(&[4.0, 1.0]);
        let f = gmd(&a).unwrap();
        check(&a, &f);
        assert!(f.diagonal().iter().all(|&d| (d - 2.0).abs() < 1e-12));
    }

    #[test]
    fn prescribed_singular_values_nine_three_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = random_unitary(&mut rng, 3);
        let v = random_unitary(&mut rng, 3);
        let a = &u * diag_real(&[1.0, 3.0, 9.0]) * v.adjoint();
        let f = gmd(&a).unwrap();
        check(&a, &f);
        assert!(f.diagonal().iter().all(|&d| (d - 3.0).abs() < 1e-10));
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = diag_real(&[1.0, 0.0]);
        assert!(matches!(gmd(&a), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn random_matrices_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for trial in 0..100 {
            let n = 1 + trial % 6;
            let a = random_cmat(&mut rng, n, n);
            let f = gmd(&a).unwrap();
            check(&a, &f);
            let det_a = a.determinant().norm();
            let det_r: f64 = f.diagonal().iter().product();
            assert!((det_a - det_r).abs() <= 1e-8 * det_a);
            let geo = det_a.powf(1.0 / n as f64);
            assert!(f.diagonal().iter().all(|&d| (d - geo).abs() < 1e-8 * geo));
        }
    }
}
