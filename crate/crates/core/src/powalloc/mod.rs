//! Per-tone, per-stream power allocation for the two-hop link.
//!
//! With `X = P_s g²` and `Y = P_r h²` the per-subchannel SINR is
//! `XY / (σ_v² Y + σ_u² (X + σ_v²))`; the solver works on the high-SNR form
//! that drops the `σ_u² σ_v²` term, which makes each side a water-filling
//! problem with a closed-form level.

mod oracle;
mod solver;

pub use oracle::oracle_grid_search;
pub use solver::{
    optimize, optimize_relay, OptimizeError, Side, SolverOptions, StepRule, TraceRow,
};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AMSE")]
    Amse,
    #[serde(rename = "GMSE")]
    Gmse,
    #[serde(rename = "maxMSE")]
    MaxMse,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Amse => "AMSE",
            Criterion::Gmse => "GMSE",
            Criterion::MaxMse => "maxMSE",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "amse" => Ok(Criterion::Amse),
            "gmse" => Ok(Criterion::Gmse),
            "maxmse" => Ok(Criterion::MaxMse),
            _ => Err(Error::InvalidParameter(format!("unknown criterion '{s}'"))),
        }
    }
}

/// Stream gains of both hops plus the noise and symbol variances.
#[derive(Debug, Clone)]
pub struct SubchannelGains<T: Real> {
    /// `N_c × M`, source hop.
    pub g: DMatrix<T>,
    /// `N_c × M`, relay hop.
    pub h: DMatrix<T>,
    pub sigma_v2: T,
    pub sigma_u2: T,
    pub sigma_s2: T,
}

impl<T: Real> SubchannelGains<T> {
    pub fn new(g: DMatrix<T>, h: DMatrix<T>, sigma_v2: T, sigma_u2: T, sigma_s2: T) -> Result<Self> {
        if g.shape() != h.shape() || g.is_empty() {
            return Err(Error::InvalidDimension(format!(
                "gain shapes {:?} and {:?} differ or are empty",
                g.shape(),
                h.shape()
            )));
        }
        let ok = |x: &T| x.is_finite() && *x >= T::zero();
        if !g.iter().chain(h.iter()).all(ok) {
            return Err(Error::Domain("gains must be finite and non-negative".into()));
        }
        if !(sigma_v2 > T::zero() && sigma_u2 > T::zero() && sigma_s2 > T::zero()) {
            return Err(Error::Domain("variances must be positive".into()));
        }
        Ok(Self { g, h, sigma_v2, sigma_u2, sigma_s2 })
    }

    pub fn n_c(&self) -> usize {
        self.g.nrows()
    }

    pub fn streams(&self) -> usize {
        self.g.ncols()
    }
}

/// Allocated powers `P_s,km`, `P_r,km` with the final dual multipliers.
#[derive(Debug, Clone)]
pub struct PowerAllocation<T: Real> {
    pub p_s: DMatrix<T>,
    pub p_r: DMatrix<T>,
    pub lambda: T,
    pub mu: T,
    pub criterion: Criterion,
    pub trace: Vec<TraceRow>,
    pub outer_iterations: usize,
}

impl<T: Real> PowerAllocation<T> {
    pub fn uniform(n_c: usize, m: usize, budgets: (T, T), criterion: Criterion) -> Self {
        let cells = lit::<T>((n_c * m) as f64);
        Self {
            p_s: DMatrix::from_element(n_c, m, budgets.0 / cells),
            p_r: DMatrix::from_element(n_c, m, budgets.1 / cells),
            lambda: T::zero(),
            mu: T::zero(),
            criterion,
            trace: Vec::new(),
            outer_iterations: 0,
        }
    }

    pub fn source_total(&self) -> T {
        self.p_s.sum()
    }

    pub fn relay_total(&self) -> T {
        self.p_r.sum()
    }

    /// Total inner iterations recorded in the trace.
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Exact per-subchannel `Φ = SINR + 1`.
pub fn phi_exact<T: Real>(p_s: T, p_r: T, gains: &SubchannelGains<T>, k: usize, m: usize) -> T {
    let g2 = gains.g[(k, m)] * gains.g[(k, m)];
    let h2 = gains.h[(k, m)] * gains.h[(k, m)];
    let num = p_s * p_r * g2 * h2;
    let den = gains.sigma_v2 * p_r * h2 + gains.sigma_u2 * (p_s * g2 + gains.sigma_v2);
    num / den + T::one()
}

/// High-SNR `Φ̃`; upper-bounds [`phi_exact`].
pub fn phi_highsnr<T: Real>(p_s: T, p_r: T, gains: &SubchannelGains<T>, k: usize, m: usize) -> T {
    let x = p_s * gains.g[(k, m)] * gains.g[(k, m)];
    let y = p_r * gains.h[(k, m)] * gains.h[(k, m)];
    let den = gains.sigma_v2 * y + gains.sigma_u2 * x;
    if den <= T::zero() {
        T::one()
    } else {
        x * y / den + T::one()
    }
}

fn phi_table<T: Real>(
    p_s: &DMatrix<T>,
    p_r: &DMatrix<T>,
    gains: &SubchannelGains<T>,
    f: fn(T, T, &SubchannelGains<T>, usize, usize) -> T,
) -> DMatrix<T> {
    DMatrix::from_fn(gains.n_c(), gains.streams(), |k, m| f(p_s[(k, m)], p_r[(k, m)], gains, k, m))
}

pub fn phi_exact_table<T: Real>(alloc: &PowerAllocation<T>, gains: &SubchannelGains<T>) -> DMatrix<T> {
    phi_table(&alloc.p_s, &alloc.p_r, gains, phi_exact)
}

pub fn phi_highsnr_table<T: Real>(alloc: &PowerAllocation<T>, gains: &SubchannelGains<T>) -> DMatrix<T> {
    phi_table(&alloc.p_s, &alloc.p_r, gains, phi_highsnr)
}

/// `MSE_m = (1/N_c) Σ_k Φ_km⁻¹`.
pub fn stream_mse<T: Real>(phi: &DMatrix<T>) -> Result<Vec<T>> {
    if phi.iter().any(|&p| !(p >= lit::<T>(1.0 - 1e-12))) {
        return Err(Error::Domain("Φ values must be at least 1".into()));
    }
    let n = lit::<T>(phi.nrows() as f64);
    Ok((0..phi.ncols())
        .map(|m| phi.column(m).iter().fold(T::zero(), |acc, &p| acc + T::one() / p) / n)
        .collect())
}

/// Objective from per-stream MSEs.
pub fn objective_from_mse<T: Real>(mse: &[T], criterion: Criterion) -> T {
    match criterion {
        Criterion::Amse => mse.iter().fold(T::zero(), |a, &b| a + b),
        Criterion::Gmse => mse.iter().fold(T::zero(), |a, &b| a + b.log2()),
        Criterion::MaxMse => mse.iter().fold(T::zero(), |a, &b| a.max(b)),
    }
}

pub fn objective<T: Real>(phi: &DMatrix<T>, criterion: Criterion) -> Result<T> {
    Ok(objective_from_mse(&stream_mse(phi)?, criterion))
}

/// High-SNR objective of raw power tables.
pub fn highsnr_objective<T: Real>(
    p_s: &DMatrix<T>,
    p_r: &DMatrix<T>,
    gains: &SubchannelGains<T>,
    criterion: Criterion,
) -> Result<T> {
    objective(&phi_table(p_s, p_r, gains, phi_highsnr), criterion)
}

/// Per-stream stationarity weights: 1 for the arithmetic sum, `ln 2 · MSE_m`
/// for the log-product.
pub(crate) fn stream_weights<T: Real>(
    p_s: &DMatrix<T>,
    p_r: &DMatrix<T>,
    gains: &SubchannelGains<T>,
    criterion: Criterion,
) -> Vec<T> {
    match criterion {
        Criterion::Gmse => {
            let phi = phi_table(p_s, p_r, gains, phi_highsnr);
            stream_mse(&phi)
                .expect("Φ̃ ≥ 1 by construction")
                .into_iter()
                .map(|v| v * T::ln_2())
                .collect()
        }
        _ => vec![T::one(); gains.streams()],
    }
}

fn check_update_args<T: Real>(multiplier: T, b_m: T) -> Result<()> {
    if !(multiplier > T::zero()) {
        return Err(Error::UnboundedUpdate(format!(
            "multiplier {} must be positive",
            to_f64(multiplier)
        )));
    }
    if !(b_m > T::zero()) {
        return Err(Error::Domain("stream weight must be positive".into()));
    }
    Ok(())
}

/// `(α, κ)` with `P = α (√(κ/ν) − 1)⁺` for multiplier `ν`.
pub(crate) fn waterfill_coefficients<T: Real>(
    gain2: T,
    other: T,
    own_noise: T,
    other_noise: T,
    n_c: usize,
    b_m: T,
) -> (T, T) {
    if gain2 <= T::zero() || other <= T::zero() {
        return (T::zero(), T::zero());
    }
    let alpha = own_noise * other / (gain2 * (other + other_noise));
    let kappa = gain2 / (lit::<T>(n_c as f64) * b_m * own_noise);
    (alpha, kappa)
}

fn waterfill<T: Real>(alpha: T, kappa: T, nu: T) -> T {
    if alpha <= T::zero() {
        return T::zero();
    }
    ((kappa / nu).sqrt() - T::one()).max(T::zero()) * alpha
}

/// Source power on subchannel `(k, m)` minimizing the Lagrangian with the
/// relay power held at `p_r`.
pub fn kkt_source_update<T: Real>(
    p_r: T,
    lambda: T,
    b_m: T,
    gains: &SubchannelGains<T>,
    k: usize,
    m: usize,
) -> Result<T> {
    check_update_args(lambda, b_m)?;
    let g2 = gains.g[(k, m)] * gains.g[(k, m)];
    let y = p_r * gains.h[(k, m)] * gains.h[(k, m)];
    let (alpha, kappa) = waterfill_coefficients(g2, y, gains.sigma_v2, gains.sigma_u2, gains.n_c(), b_m);
    Ok(waterfill(alpha, kappa, lambda))
}

/// Relay counterpart of [`kkt_source_update`].
pub fn kkt_relay_update<T: Real>(
    p_s: T,
    mu: T,
    b_m: T,
    gains: &SubchannelGains<T>,
    k: usize,
    m: usize,
) -> Result<T> {
    check_update_args(mu, b_m)?;
    let h2 = gains.h[(k, m)] * gains.h[(k, m)];
    let x = p_s * gains.g[(k, m)] * gains.g[(k, m)];
    let (alpha, kappa) = waterfill_coefficients(h2, x, gains.sigma_u2, gains.sigma_v2, gains.n_c(), b_m);
    Ok(waterfill(alpha, kappa, mu))
}

/// Projected dual ascent: the multiplier rises while the budget is exceeded.
pub fn subgradient_step<T: Real>(multiplier: T, eps: T, consumed: T, budget: T) -> T {
    (multiplier + eps * (consumed - budget)).max(T::zero())
}

#[cfg(test)]
mod tests;
