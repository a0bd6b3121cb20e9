//! Random fixtures and brute-force oracles for unit tests.

use crate::scalar::CMat;
use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * s, im * s)
    })
}

pub fn random_hpd<R: Rng>(rng: &mut R, n: usize) -> CMat<f64> {
    let a = random_cmat(rng, n, n + 2);
    &a * a.adjoint() + CMat::identity(n, n) * Complex::new(0.1, 0.0)
}

pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> CMat<f64> {
    random_cmat(rng, n, n).qr().q()
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi on its real 2n×2n embedding.
pub fn hermitian_jacobi_eigenvalues(a: &CMat<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(i + n, j + n)] = z.re;
            m[(i, j + n)] = -z.im;
            m[(i + n, j)] = z.im;
        }
    }
    let size = 2 * n;
    for _sweep in 0..100 {
        let off: f64 = (0..size)
            .flat_map(|i| (0..size).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..size {
            for q in (p + 1)..size {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..size {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..size {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..size).map(|i| m[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev.into_iter().step_by(2).collect()
}
