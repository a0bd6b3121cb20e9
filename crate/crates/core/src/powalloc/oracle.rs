//! Brute-force reference allocation on a simplex lattice.

use super::{highsnr_objective, Criterion, PowerAllocation, SubchannelGains};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use nalgebra::DMatrix;

const MAX_CELLS: usize = 8;
const EXHAUSTIVE_LIMIT: f64 = 2e6;

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn lattice_size(total: usize, parts: usize) -> f64 {
    // C(total + parts - 1, parts - 1)
    (1..parts).fold(1.0, |acc, i| acc * (total + i) as f64 / i as f64)
}

struct Lattice<'a, T: Real> {
    gains: &'a SubchannelGains<T>,
    budgets: (T, T),
    criterion: Criterion,
    resolution: usize,
}

impl<T: Real> Lattice<'_, T> {
    fn table(&self, counts: &[usize], budget: T) -> DMatrix<T> {
        let n_c = self.gains.n_c();
        let step = budget / lit::<T>(self.resolution as f64);
        DMatrix::from_fn(n_c, self.gains.streams(), |k, m| step * lit(counts[m * n_c + k] as f64))
    }

    fn eval(&self, s: &[usize], r: &[usize]) -> T {
        highsnr_objective(&self.table(s, self.budgets.0), &self.table(r, self.budgets.1), self.gains, self.criterion)
            .expect("lattice powers are non-negative")
    }

    fn exhaustive(&self, cells: usize) -> (Vec<usize>, Vec<usize>, T) {
        let all = compositions(self.resolution, cells);
        let mut best = (all[0].clone(), all[0].clone(), T::max_value().unwrap_or_else(|| lit(f64::MAX)));
        for s in &all {
            for r in &all {
                let v = self.eval(s, r);
                if v < best.2 {
                    best = (s.clone(), r.clone(), v);
                }
            }
        }
        best
    }

    /// Best-improvement descent over single-quantum transfers between cells.
    fn descend(&self, mut s: Vec<usize>, mut r: Vec<usize>) -> (Vec<usize>, Vec<usize>, T) {
        let cells = s.len();
        let mut value = self.eval(&s, &r);
        loop {
            let mut best: Option<(Vec<usize>, Vec<usize>, T)> = None;
            for i in 0..cells {
                for j in 0..cells {
                    if i == j {
                        continue;
                    }
                    // (source move, relay move): 0 none, 1 i→j, 2 j→i
                    for (ms, mr) in [(1, 0), (0, 1), (1, 1), (1, 2)] {
                        let (mut s2, mut r2) = (s.clone(), r.clone());
                        if !shift(&mut s2, i, j, ms) || !shift(&mut r2, i, j, mr) {
                            continue;
                        }
                        let v = self.eval(&s2, &r2);
                        if v < value && best.as_ref().is_none_or(|b| v < b.2) {
                            best = Some((s2, r2, v));
                        }
                    }
                }
            }
            match best {
                Some((s2, r2, v)) => {
                    s = s2;
                    r = r2;
                    value = v;
                }
                None => return (s, r, value),
            }
        }
    }
}

fn shift(counts: &mut [usize], i: usize, j: usize, mode: u8) -> bool {
    let (from, to) = match mode {
        0 => return true,
        1 => (i, j),
        _ => (j, i),
    };
    if counts[from] == 0 {
        return false;
    }
    counts[from] -= 1;
    counts[to] += 1;
    true
}

/// Rescales lattice counts from `coarse` to `fine` quanta by largest remainder.
fn rescale(counts: &[usize], coarse: usize, fine: usize) -> Vec<usize> {
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * fine as f64 / coarse as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let missing = fine - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

fn search<T: Real>(
    gains: &SubchannelGains<T>,
    budgets: (T, T),
    criterion: Criterion,
    resolution: usize,
) -> (Vec<usize>, Vec<usize>, T) {
    let cells = gains.n_c() * gains.streams();
    let lattice = Lattice { gains, budgets, criterion, resolution };
    let size = lattice_size(resolution, cells);
    if size * size <= EXHAUSTIVE_LIMIT {
        return lattice.exhaustive(cells);
    }
    let half = resolution / 2;
    let (s, r, _) = search(gains, budgets, criterion, half);
    lattice.descend(rescale(&s, half, resolution), rescale(&r, half, resolution))
}

/// Best full-budget allocation on the lattice with step `budget / resolution`
/// per side. Both sides always spend their full budget because the objective
/// decreases in every power. The max-MSE criterion is searched through its
/// arithmetic-sum equivalent. Small lattices are enumerated; larger ones are
/// refined from the half-resolution answer by pairwise transfer descent, so
/// doubling the resolution never worsens the result.
pub fn oracle_grid_search<T: Real>(
    gains: &SubchannelGains<T>,
    budgets: (T, T),
    criterion: Criterion,
    resolution: usize,
) -> Result<PowerAllocation<T>> {
    let cells = gains.n_c() * gains.streams();
    if cells > MAX_CELLS {
        return Err(Error::TooLarge(format!("{cells} subchannels exceed the limit of {MAX_CELLS}")));
    }
    if resolution == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    if !(budgets.0 > T::zero() && budgets.1 > T::zero()) {
        return Err(Error::InvalidParameter("power budgets must be positive".into()));
    }
    let internal = match criterion {
        Criterion::MaxMse => Criterion::Amse,
        c => c,
    };
    let (s, r, _) = search(gains, budgets, internal, resolution);
    let lattice = Lattice { gains, budgets, criterion: internal, resolution };
    let mut alloc = PowerAllocation::uniform(gains.n_c(), gains.streams(), budgets, criterion);
    alloc.p_s = lattice.table(&s, budgets.0);
    alloc.p_r = lattice.table(&r, budgets.1);
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_are_counted_by_binomials() {
        for (total, parts) in [(4, 1), (4, 2), (5, 3), (3, 4)] {
            let got = compositions(total, parts);
            assert_eq!(got.len() as f64, lattice_size(total, parts));
            assert!(got.iter().all(|c| c.iter().sum::<usize>() == total));
        }
    }

    #[test]
    fn rescale_preserves_total() {
        assert_eq!(rescale(&[1, 2, 0], 3, 6), vec![2, 4, 0]);
        assert_eq!(rescale(&[1, 1, 1], 3, 7).iter().sum::<usize>(), 7);
    }
}
