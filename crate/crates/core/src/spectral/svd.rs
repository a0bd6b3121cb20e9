use super::linalg::check_finite;
use crate::error::{Error, Result};
use crate::scalar::{lit, real, Real, CMat};
use nalgebra::{Complex, DVector};

/// Thin SVD with singular values in ascending order.
///
/// `left · diag(singular_values) · right†` reconstructs the input. Each left
/// singular vector is rotated so its largest-magnitude entry is real and
/// positive; the matching right vector gets the same phase.
#[derive(Debug, Clone)]
pub struct SortedSvd<T: Real> {
    pub left: CMat<T>,
    pub singular_values: DVector<T>,
    pub right: CMat<T>,
}

impl<T: Real> SortedSvd<T> {
    pub fn rank_hint(&self) -> usize {
        self.singular_values.len()
    }

    /// Columns `(left, value, right)` paired with the `m` largest singular
    /// values, largest first.
    pub fn top(&self, m: usize) -> (CMat<T>, Vec<T>, CMat<T>) {
        let r = self.singular_values.len();
        assert!(m <= r, "requested {m} of {r} singular triplets");
        let idx: Vec<usize> = (0..m).map(|i| r - 1 - i).collect();
        let left = self.left.select_columns(&idx);
        let right = self.right.select_columns(&idx);
        let vals = idx.iter().map(|&i| self.singular_values[i]).collect();
        (left, vals, right)
    }

    pub fn reconstruct(&self) -> CMat<T> {
        let d = CMat::<T>::from_diagonal(&self.singular_values.map(real));
        &self.left * d * self.right.adjoint()
    }
}

pub fn sorted_svd<T: Real>(a: &CMat<T>) -> Result<SortedSvd<T>> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension("empty matrix".into()));
    }
    let svd = a
        .clone()
        .try_svd(true, true, T::default_epsilon() * lit(4.0), 0)
        .ok_or_else(|| Error::NoConvergence("SVD iteration".into()))?;
    let u = svd.u.expect("left vectors requested");
    let v = svd.v_t.expect("right vectors requested").adjoint();
    let r = svd.singular_values.len();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .expect("finite singular values")
    });

    let mut left = u.select_columns(&order);
    let mut right = v.select_columns(&order);
    let singular_values = DVector::from_iterator(r, order.iter().map(|&i| svd.singular_values[i]));

    for c in 0..r {
        let (mut best, mut mag) = (0, T::zero());
        for i in 0..rows {
            let m = crate::scalar::abs(left[(i, c)]);
            if m > mag {
                mag = m;
                best = i;
            }
        }
        if mag > T::zero() {
            let z = left[(best, c)];
            let phase = Complex::new(z.re / mag, -z.im / mag);
            for i in 0..rows {
                left[(i, c)] *= phase;
            }
            for i in 0..cols {
                right[(i, c)] *= phase;
            }
        }
    }

    Ok(SortedSvd { left, singular_values, right })
}
