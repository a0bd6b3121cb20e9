use super::linalg::{check_finite, check_hermitian};
use crate::error::{Error, Result};
use crate::scalar::{norm_sqr, real, to_f64, Real, CMat};
use nalgebra::DVector;

/// `a = unit_lower · diag(diag) · unit_lower†` for Hermitian positive-definite `a`.
#[derive(Debug, Clone)]
pub struct LdlFactorization<T: Real> {
    pub unit_lower: CMat<T>,
    pub diag: DVector<T>,
}

impl<T: Real> LdlFactorization<T> {
    pub fn reconstruct(&self) -> CMat<T> {
        let d = CMat::<T>::from_diagonal(&self.diag.map(real));
        &self.unit_lower * d * self.unit_lower.adjoint()
    }
}

pub fn ldl<T: Real>(a: &CMat<T>) -> Result<LdlFactorization<T>> {
    check_finite(a)?;
    check_hermitian(a, 1e-10)?;
    let n = a.nrows();
    let scale = a.norm();
    let mut l = CMat::<T>::identity(n, n);
    let mut d = DVector::<T>::zeros(n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= norm_sqr(l[(j, k)]) * d[k];
        }
        if !(pivot > T::default_epsilon() * scale) {
            return Err(Error::Indefinite { index: j, pivot: to_f64(pivot) });
        }
        d[j] = pivot;
        for i in (j + 1)..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj() * real(d[k]);
            }
            l[(i, j)] = acc / real(pivot);
        }
    }
    Ok(LdlFactorization { unit_lower: l, diag: d })
}
