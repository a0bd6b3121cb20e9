//! Small dense helpers shared by the factorizations and designs.

use crate::error::{Error, Result};
use crate::scalar::{lit, real, to_f64, Real, CMat};
use nalgebra::{Complex, DVector};

pub fn relative_frobenius_error<T: Real>(approx: &CMat<T>, exact: &CMat<T>) -> T {
    let denom = exact.norm();
    let diff = (approx - exact).norm();
    if denom > T::zero() {
        diff / denom
    } else {
        diff
    }
}

/// `max |a†a - I|` entry test, scaled to the identity.
pub fn is_unitary<T: Real>(a: &CMat<T>, tol: T) -> bool {
    let n = a.ncols();
    (a.adjoint() * a - CMat::<T>::identity(n, n)).norm() <= tol
}

pub(crate) fn check_finite<T: Real>(a: &CMat<T>) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericInput("matrix contains NaN or infinite entries".into()))
    }
}

pub(crate) fn hermitian_asymmetry<T: Real>(a: &CMat<T>) -> T {
    let scale = T::one().max(a.norm());
    (a - a.adjoint()).norm() / scale
}

pub(crate) fn check_hermitian<T: Real>(a: &CMat<T>, tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::InvalidDimension(format!("{:?} is not square", a.shape())));
    }
    let asym = hermitian_asymmetry(a);
    if to_f64(asym) > tol {
        return Err(Error::NotHermitian(to_f64(asym)));
    }
    Ok(())
}

/// Averages `a` with its adjoint.
pub(crate) fn hermitian_part<T: Real>(a: &CMat<T>) -> CMat<T> {
    (a + a.adjoint()) * real(lit::<T>(0.5))
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
pub(crate) fn solve_hpd<T: Real>(a: &CMat<T>, b: &CMat<T>) -> Result<CMat<T>> {
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Solves `x a = b`, i.e. `x = b a^{-1}`, for Hermitian positive-definite `a`.
pub(crate) fn right_solve_hpd<T: Real>(b: &CMat<T>, a: &CMat<T>) -> Result<CMat<T>> {
    // x a = b  ⇔  a† x† = b†, and a is Hermitian
    Ok(solve_hpd(a, &b.adjoint())?.adjoint())
}

pub(crate) fn inverse_hpd<T: Real>(a: &CMat<T>) -> Result<CMat<T>> {
    let n = a.nrows();
    solve_hpd(a, &CMat::<T>::identity(n, n))
}

/// Determinant of a Hermitian positive-definite matrix through its Cholesky factor.
pub fn det_hpd<T: Real>(a: &CMat<T>) -> Result<T> {
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let l = chol.l();
    Ok((0..l.nrows()).fold(T::one(), |acc, i| {
        let d = l[(i, i)].re;
        acc * d * d
    }))
}

/// Real eigenvalues (ascending) of a Hermitian matrix.
pub(crate) fn hermitian_eigenvalues<T: Real>(a: &CMat<T>) -> DVector<T> {
    let mut ev = hermitian_part(a).symmetric_eigenvalues();
    let mut v: Vec<T> = ev.iter().copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    for (dst, src) in ev.iter_mut().zip(v) {
        *dst = src;
    }
    ev
}

/// Hermitian positive-semidefinite square root `S` with `S S = a`.
pub fn hermitian_sqrt<T: Real>(a: &CMat<T>) -> Result<CMat<T>> {
    check_hermitian(a, 1e-8)?;
    let eig = hermitian_part(a).symmetric_eigen();
    let scale = a.norm().max(T::one());
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < -lit::<T>(1e-10) * scale {
            return Err(Error::Indefinite { index: i, pivot: to_f64(ev) });
        }
        roots.push(real(ev.max(T::zero()).sqrt()));
    }
    let d = CMat::<T>::from_diagonal(&DVector::from_vec(roots));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// 2-norm condition number of a Hermitian positive-definite matrix.
pub(crate) fn condition_hpd<T: Real>(a: &CMat<T>) -> T {
    let ev = hermitian_eigenvalues(a);
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= T::zero() {
        T::max_value().unwrap_or_else(|| lit(f64::MAX))
    } else {
        hi / lo
    }
}

pub(crate) fn diag_real<T: Real>(values: &[T]) -> CMat<T> {
    CMat::<T>::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| real(v))))
}

pub(crate) fn diag_of<T: Real>(a: &CMat<T>) -> Vec<T> {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).collect()
}

pub(crate) fn scale<T: Real>(a: &CMat<T>, s: T) -> CMat<T> {
    a * Complex::new(s, T::zero())
}
