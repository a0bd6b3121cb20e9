//! DFT conventions, block-circulant/tone transforms and the matrix
//! factorizations used throughout the transceiver design.
//!
//! Vectors move between time and frequency with the unitary DFT
//! (`1/sqrt(N)` on both directions). Filter taps map to per-tone matrices with
//! the plain DFT, `X_k = sum_l X_l exp(-j 2 pi k l / N)`, so a block-circulant
//! operator acting on a unitarily transformed block is exactly `X_k` per tone.

mod gmd;
mod ldl;
pub(crate) mod linalg;
mod svd;

pub use gmd::{gmd, GmdFactorization};
pub use ldl::{ldl, LdlFactorization};
pub use linalg::{det_hpd, hermitian_sqrt, is_unitary, relative_frobenius_error};
pub use svd::{sorted_svd, SortedSvd};

use crate::error::{Error, Result};
use crate::scalar::{cis, lit, Real, CMat};
use nalgebra::Complex;

/// Unitary `n x n` DFT matrix with entry `(a, b) = exp(-j 2 pi a b / n) / sqrt(n)`.
pub fn dft_matrix<T: Real>(n: usize) -> Result<CMat<T>> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let scale = T::one() / lit::<T>(n as f64).sqrt();
    let two_pi = T::two_pi();
    Ok(CMat::from_fn(n, n, |a, b| {
        // reduce the exponent mod n before forming the angle to keep it small
        let idx = (a * b) % n;
        let theta = -two_pi * lit::<T>(idx as f64) / lit::<T>(n as f64);
        cis(theta) * scale
    }))
}

/// Precomputed unitary DFT for blocks laid out as `antennas x time` matrices.
///
/// Each row of a block is one antenna stream; columns are symbol instants
/// (time domain) or tones (frequency domain).
#[derive(Debug, Clone)]
pub struct DftPlan<T: Real> {
    forward: CMat<T>,
    inverse: CMat<T>,
}

impl<T: Real> DftPlan<T> {
    pub fn new(n: usize) -> Result<Self> {
        let forward = dft_matrix::<T>(n)?;
        let inverse = forward.map(|z| z.conj());
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time block to tones (unitary).
    pub fn forward(&self, block: &CMat<T>) -> CMat<T> {
        assert_eq!(block.ncols(), self.len(), "block length mismatch");
        block * &self.forward
    }

    /// Tones to time block (unitary).
    pub fn inverse(&self, tones: &CMat<T>) -> CMat<T> {
        assert_eq!(tones.ncols(), self.len(), "block length mismatch");
        tones * &self.inverse
    }
}

fn check_taps<T: Real>(taps: &[CMat<T>]) -> Result<(usize, usize)> {
    let first = taps
        .first()
        .ok_or_else(|| Error::InvalidLength("tap sequence is empty".into()))?;
    let shape = first.shape();
    if taps.iter().any(|t| t.shape() != shape) {
        return Err(Error::InvalidDimension("taps do not share dimensions".into()));
    }
    Ok(shape)
}

/// Per-tone matrices `X_k = sum_l taps[l] exp(-j 2 pi k l / n_c)`.
pub fn taps_to_tones<T: Real>(taps: &[CMat<T>], n_c: usize) -> Result<Vec<CMat<T>>> {
    let (rows, cols) = check_taps(taps)?;
    if n_c == 0 || taps.len() > n_c {
        return Err(Error::InvalidLength(format!(
            "{} taps do not fit in {} tones",
            taps.len(),
            n_c
        )));
    }
    let two_pi = T::two_pi();
    let n = lit::<T>(n_c as f64);
    Ok((0..n_c)
        .map(|k| {
            let mut tone = CMat::<T>::zeros(rows, cols);
            for (l, tap) in taps.iter().enumerate() {
                let w = cis(-two_pi * lit::<T>(((k * l) % n_c) as f64) / n);
                tone += tap * w;
            }
            tone
        })
        .collect())
}

/// Inverse of [`taps_to_tones`]: returns all `n_c` taps (zero-padded beyond the
/// original length).
pub fn tones_to_taps<T: Real>(tones: &[CMat<T>]) -> Result<Vec<CMat<T>>> {
    let (rows, cols) = check_taps(tones)?;
    let n_c = tones.len();
    let two_pi = T::two_pi();
    let n = lit::<T>(n_c as f64);
    Ok((0..n_c)
        .map(|l| {
            let mut tap = CMat::<T>::zeros(rows, cols);
            for (k, tone) in tones.iter().enumerate() {
                let w = cis(two_pi * lit::<T>(((k * l) % n_c) as f64) / n);
                tap += tone * w;
            }
            tap / Complex::new(n, T::zero())
        })
        .collect())
}

/// Dense block-circulant matrix whose block `(i, j)` is `taps[(i - j) mod n_c]`
/// (zero for lags at or beyond the tap count).
pub fn block_circulant<T: Real>(taps: &[CMat<T>], n_c: usize) -> Result<CMat<T>> {
    let (rows, cols) = check_taps(taps)?;
    if taps.len() > n_c {
        return Err(Error::InvalidLength(format!(
            "{} taps exceed block size {}",
            taps.len(),
            n_c
        )));
    }
    let mut out = CMat::<T>::zeros(rows * n_c, cols * n_c);
    for i in 0..n_c {
        for j in 0..n_c {
            let lag = (i + n_c - j) % n_c;
            if let Some(tap) = taps.get(lag) {
                out.view_mut((i * rows, j * cols), (rows, cols)).copy_from(tap);
            }
        }
    }
    Ok(out)
}

/// `dft_matrix(n) ⊗ I_size`: applies the unitary DFT across blocks of a
/// stacked time-major vector.
pub fn block_dft<T: Real>(n: usize, size: usize) -> Result<CMat<T>> {
    let f = dft_matrix::<T>(n)?;
    Ok(f.kronecker(&CMat::<T>::identity(size, size)))
}
