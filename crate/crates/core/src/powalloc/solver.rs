//! Alternating source/relay dual solver.

use super::{
    highsnr_objective, stream_weights, subgradient_step, waterfill_coefficients, Criterion,
    PowerAllocation, SubchannelGains,
};
use crate::error::Error;
use crate::scalar::{lit, to_f64, Real};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Source,
    Relay,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Relay => "relay",
        })
    }
}

/// One inner iteration of the dual loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub outer: usize,
    pub side: Side,
    pub inner: usize,
    pub lambda: f64,
    pub mu: f64,
    pub objective: f64,
    pub source_residual: f64,
    pub relay_residual: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "iteration,outer,side,inner,lambda,mu,objective,source_residual,relay_residual";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
            self.iteration,
            self.outer,
            self.side,
            self.inner,
            self.lambda,
            self.mu,
            self.objective,
            self.source_residual,
            self.relay_residual
        )
    }
}

/// Multiplier update rule for the inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// Step length chosen so the next multiplier solves the linearized budget
    /// equation in `ν^{-1/2}`, where consumption is piecewise linear.
    Newton,
    /// `ε_n = scale · ν₀ / (budget · √n)`.
    Diminishing { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative tolerance on λ between inner iterations.
    pub eps1: f64,
    /// Relative tolerance on μ between inner iterations.
    pub eps2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative objective change that ends the outer loop.
    pub outer_tol: f64,
    /// Relative multiplier change between outer iterations that ends the outer loop.
    pub outer_multiplier_tol: f64,
    pub step: StepRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eps1: 1e-4, eps2: 1e-4, max_outer: 2000, max_inner: 200, outer_tol: 1e-10, outer_multiplier_tol: 1e-7, step: StepRule::Newton }
    }
}

#[derive(Debug, Clone)]
pub enum OptimizeError<T: Real> {
    Invalid(Error),
    /// Iteration budget exhausted; carries the best feasible iterate.
    NoConvergence { best: Box<PowerAllocation<T>> },
}

impl<T: Real> fmt::Display for OptimizeError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizeError::Invalid(e) => write!(f, "{e}"),
            OptimizeError::NoConvergence { best } => write!(
                f,
                "power allocation did not converge after {} outer iterations",
                best.outer_iterations
            ),
        }
    }
}

impl<T: Real> std::error::Error for OptimizeError<T> {}

impl<T: Real> From<Error> for OptimizeError<T> {
    fn from(e: Error) -> Self {
        OptimizeError::Invalid(e)
    }
}

struct SideState<'a, T: Real> {
    gains: &'a SubchannelGains<T>,
    criterion: Criterion,
    budgets: (T, T),
    opts: &'a SolverOptions,
    trace: Vec<TraceRow>,
}

fn coefficients<T: Real>(
    side: Side,
    p_s: &DMatrix<T>,
    p_r: &DMatrix<T>,
    gains: &SubchannelGains<T>,
    weights: &[T],
) -> Vec<(T, T)> {
    let n_c = gains.n_c();
    let mut out = Vec::with_capacity(n_c * gains.streams());
    for m in 0..gains.streams() {
        for k in 0..n_c {
            let g2 = gains.g[(k, m)] * gains.g[(k, m)];
            let h2 = gains.h[(k, m)] * gains.h[(k, m)];
            out.push(match side {
                Side::Source => waterfill_coefficients(
                    g2,
                    p_r[(k, m)] * h2,
                    gains.sigma_v2,
                    gains.sigma_u2,
                    n_c,
                    weights[m],
                ),
                Side::Relay => waterfill_coefficients(
                    h2,
                    p_s[(k, m)] * g2,
                    gains.sigma_u2,
                    gains.sigma_v2,
                    n_c,
                    weights[m],
                ),
            });
        }
    }
    out
}

fn powers_at<T: Real>(coef: &[(T, T)], nu: T, n_c: usize, m: usize) -> DMatrix<T> {
    DMatrix::from_fn(n_c, m, |k, s| {
        let (alpha, kappa) = coef[s * n_c + k];
        if alpha <= T::zero() {
            T::zero()
        } else {
            ((kappa / nu).sqrt() - T::one()).max(T::zero()) * alpha
        }
    })
}

/// Multiplier that makes the current powers stationary, averaged over live subchannels.
fn stationary_multiplier<T: Real>(coef: &[(T, T)], powers: &DMatrix<T>, n_c: usize) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for (i, &(alpha, kappa)) in coef.iter().enumerate() {
        if alpha > T::zero() {
            let p = powers[(i % n_c, i / n_c)];
            let r = T::one() + p / alpha;
            sum += kappa / (r * r);
            count += 1;
        }
    }
    if count == 0 {
        T::one()
    } else {
        sum / lit(count as f64)
    }
}

fn newton_multiplier<T: Real>(coef: &[(T, T)], nu: T, budget: T) -> T {
    let mut slope = T::zero();
    let mut offset = T::zero();
    for &(alpha, kappa) in coef {
        if alpha > T::zero() && kappa > nu {
            slope += alpha * kappa.sqrt();
            offset += alpha;
        }
    }
    if slope <= T::zero() {
        return nu * lit(1e-2);
    }
    let u = (budget + offset) / slope;
    T::one() / (u * u)
}

impl<T: Real> SideState<'_, T> {
    fn residuals(&self, p_s: &DMatrix<T>, p_r: &DMatrix<T>) -> (f64, f64) {
        (to_f64(p_s.sum() - self.budgets.0), to_f64(p_r.sum() - self.budgets.1))
    }

    /// Runs one inner block, updating the side's powers and multiplier in place.
    fn solve(
        &mut self,
        side: Side,
        outer: usize,
        p_s: &mut DMatrix<T>,
        p_r: &mut DMatrix<T>,
        lambda: &mut T,
        mu: &mut T,
    ) -> Result<bool, Error> {
        let (n_c, m) = (self.gains.n_c(), self.gains.streams());
        let (budget, eps) = match side {
            Side::Source => (self.budgets.0, lit::<T>(self.opts.eps1)),
            Side::Relay => (self.budgets.1, lit::<T>(self.opts.eps2)),
        };
        let mut nu = match side {
            Side::Source => *lambda,
            Side::Relay => *mu,
        };
        if !(nu > T::zero()) {
            let w = stream_weights(p_s, p_r, self.gains, self.criterion);
            let coef = coefficients(side, p_s, p_r, self.gains, &w);
            nu = stationary_multiplier(&coef, if side == Side::Source { p_s } else { p_r }, n_c);
        }
        let nu0 = nu;
        let mut converged = false;
        for inner in 1..=self.opts.max_inner {
            let w = stream_weights(p_s, p_r, self.gains, self.criterion);
            let coef = coefficients(side, p_s, p_r, self.gains, &w);
            if coef.iter().all(|&(a, _)| a <= T::zero()) {
                converged = true;
                break;
            }
            let consumed = powers_at(&coef, nu, n_c, m).sum();
            let next = match self.opts.step {
                StepRule::Newton => {
                    let target = newton_multiplier(&coef, nu, budget);
                    let gap = consumed - budget;
                    if gap == T::zero() {
                        nu
                    } else {
                        subgradient_step(nu, (target - nu) / gap, consumed, budget)
                    }
                }
                StepRule::Diminishing { scale } => {
                    let step = lit::<T>(scale) * nu0 / (budget * lit::<T>(inner as f64).sqrt());
                    let stepped = subgradient_step(nu, step, consumed, budget);
                    if stepped > T::zero() {
                        stepped
                    } else {
                        nu * lit(0.1)
                    }
                }
            };
            let change = (next - nu).abs() / nu;
            nu = next;
            let mut powers = powers_at(&coef, nu, n_c, m);
            let total = powers.sum();
            if total > budget {
                powers *= budget / total;
            }
            match side {
                Side::Source => *p_s = powers,
                Side::Relay => *p_r = powers,
            }
            let (lam_now, mu_now) = match side {
                Side::Source => (nu, *mu),
                Side::Relay => (*lambda, nu),
            };
            let obj = highsnr_objective(p_s, p_r, self.gains, self.criterion)?;
            let (rs, rr) = self.residuals(p_s, p_r);
            self.trace.push(TraceRow {
                iteration: self.trace.len() + 1,
                outer,
                side,
                inner,
                lambda: to_f64(lam_now),
                mu: to_f64(mu_now),
                objective: to_f64(obj),
                source_residual: rs,
                relay_residual: rr,
            });
            if change <= eps {
                converged = true;
                break;
            }
        }
        match side {
            Side::Source => *lambda = nu,
            Side::Relay => *mu = nu,
        }
        Ok(converged)
    }
}

fn validate<T: Real>(budgets: (T, T)) -> Result<(), Error> {
    if !(budgets.0 > T::zero() && budgets.1 > T::zero()) || !budgets.0.is_finite() || !budgets.1.is_finite() {
        return Err(Error::InvalidParameter("power budgets must be positive and finite".into()));
    }
    Ok(())
}

fn solver_criterion(c: Criterion) -> Criterion {
    // the max-MSE design shares the arithmetic-sum allocation
    match c {
        Criterion::MaxMse => Criterion::Amse,
        other => other,
    }
}

/// Jointly allocates source and relay powers under the high-SNR objective.
pub fn optimize<T: Real>(
    gains: &SubchannelGains<T>,
    budgets: (T, T),
    criterion: Criterion,
    opts: &SolverOptions,
) -> Result<PowerAllocation<T>, OptimizeError<T>> {
    validate(budgets)?;
    let internal = solver_criterion(criterion);
    let mut alloc = PowerAllocation::uniform(gains.n_c(), gains.streams(), budgets, criterion);
    let mut state = SideState { gains, criterion: internal, budgets, opts, trace: Vec::new() };
    let (mut p_s, mut p_r) = (alloc.p_s.clone(), alloc.p_r.clone());
    let (mut lambda, mut mu) = (T::zero(), T::zero());
    let mut prev = highsnr_objective(&p_s, &p_r, gains, internal)?;
    let mut best = (prev, p_s.clone(), p_r.clone(), lambda, mu);
    for outer in 1..=opts.max_outer {
        let (lam_prev, mu_prev) = (lambda, mu);
        let src_ok = state.solve(Side::Source, outer, &mut p_s, &mut p_r, &mut lambda, &mut mu)?;
        let rel_ok = state.solve(Side::Relay, outer, &mut p_s, &mut p_r, &mut lambda, &mut mu)?;
        let obj = highsnr_objective(&p_s, &p_r, gains, internal)?;
        if obj <= best.0 {
            best = (obj, p_s.clone(), p_r.clone(), lambda, mu);
        }
        let rel = |a: T, b: T| if b > T::zero() { (a - b).abs() / b } else { T::one() };
        let settled = (obj - prev).abs() <= lit::<T>(opts.outer_tol) * obj.abs().max(T::one())
            && rel(lambda, lam_prev) <= lit(opts.outer_multiplier_tol)
            && rel(mu, mu_prev) <= lit(opts.outer_multiplier_tol);
        prev = obj;
        alloc.outer_iterations = outer;
        if settled && src_ok && rel_ok {
            alloc.p_s = p_s;
            alloc.p_r = p_r;
            alloc.lambda = lambda;
            alloc.mu = mu;
            alloc.trace = state.trace;
            return Ok(alloc);
        }
    }
    alloc.p_s = best.1;
    alloc.p_r = best.2;
    alloc.lambda = best.3;
    alloc.mu = best.4;
    alloc.trace = state.trace;
    Err(OptimizeError::NoConvergence { best: Box::new(alloc) })
}

/// Allocates relay power only, with the source powers frozen at `p_s`.
pub fn optimize_relay<T: Real>(
    gains: &SubchannelGains<T>,
    p_s: &DMatrix<T>,
    relay_budget: T,
    criterion: Criterion,
    opts: &SolverOptions,
) -> Result<PowerAllocation<T>, OptimizeError<T>> {
    if p_s.shape() != gains.g.shape() {
        return Err(Error::InvalidDimension("frozen source powers have the wrong shape".into()).into());
    }
    let source_total = p_s.sum();
    validate((source_total.max(lit(f64::MIN_POSITIVE)), relay_budget))?;
    let internal = solver_criterion(criterion);
    let mut alloc =
        PowerAllocation::uniform(gains.n_c(), gains.streams(), (source_total, relay_budget), criterion);
    alloc.p_s = p_s.clone();
    let mut state =
        SideState { gains, criterion: internal, budgets: (source_total, relay_budget), opts, trace: Vec::new() };
    let (mut ps, mut pr) = (alloc.p_s.clone(), alloc.p_r.clone());
    let (mut lambda, mut mu) = (T::zero(), T::zero());
    // GMSE weights move with the relay powers, so repeat until μ settles
    let mut converged = false;
    for outer in 1..=opts.max_outer {
        let mu_prev = mu;
        let ok = state.solve(Side::Relay, outer, &mut ps, &mut pr, &mut lambda, &mut mu)?;
        alloc.outer_iterations = outer;
        if ok && mu_prev > T::zero() && (mu - mu_prev).abs() <= lit::<T>(opts.outer_multiplier_tol) * mu_prev {
            converged = true;
            break;
        }
        if ok && internal != Criterion::Gmse {
            converged = true;
            break;
        }
    }
    alloc.p_r = pr;
    alloc.mu = mu;
    alloc.trace = state.trace;
    if converged {
        Ok(alloc)
    } else {
        Err(OptimizeError::NoConvergence { best: Box::new(alloc) })
    }
}
