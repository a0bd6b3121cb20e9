//! Named invariant suites over seeded random instances, shared by the CLI
//! `verify` command and the acceptance tests.

use crate::channel::{from_fixture, generate_seeded, to_fixture, FadingProfile, LinkDims};
use crate::equalizer::{psi_from_covariance, ReceiverMode};
use crate::powalloc::{highsnr_objective, Criterion, PowerAllocation};
use crate::precoder::Scheme;
use crate::scalar::CMat;
use crate::simulator::{design_link, trial_rng, transmit_block, BlockNoise, Design, ExperimentConfig, LinkBudget, LinkDesign, TransmitPath};
use crate::spectral::{gmd, is_unitary, ldl, relative_frobenius_error, sorted_svd, taps_to_tones, tones_to_taps};
use nalgebra::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Check = fn(u64) -> Result<(), String>;

pub struct Suite {
    pub name: &'static str,
    pub description: &'static str,
    check: Check,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// `(seed, reason)` of every failing trial.
    pub failures: Vec<(u64, String)>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

impl Suite {
    /// Runs trials `0..trials`; trial `i` uses seed `i`.
    pub fn run(&self, trials: usize) -> SuiteReport {
        let results: Vec<_> = (0..trials as u64).into_par_iter().map(|s| (s, (self.check)(s))).collect();
        let failures: Vec<_> = results.into_iter().filter_map(|(s, r)| r.err().map(|e| (s, e))).collect();
        SuiteReport { name: self.name, passed: trials - failures.len(), failed: failures.len(), failures }
    }
}

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { name: "spectral.svd", description: "sorted SVD reconstructs with unitary factors", check: svd_check },
        Suite { name: "spectral.ldl", description: "LDL† reconstructs with unit lower factor", check: ldl_check },
        Suite { name: "spectral.gmd", description: "GMD has equal diagonal at the geometric mean", check: gmd_check },
        Suite { name: "spectral.dft", description: "taps → tones → taps round trip", check: dft_check },
        Suite { name: "channel.fixture", description: "channel fixture round trip", check: fixture_check },
        Suite { name: "powalloc.budget", description: "optimized allocation meets budgets and beats uniform", check: budget_check },
        Suite { name: "precoder.diagonal", description: "Ψ_k diagonal for AMSE/GMSE linear designs", check: diagonal_check },
        Suite { name: "precoder.maxmse", description: "equal linear error diagonal under V0", check: maxmse_check },
        Suite { name: "precoder.dfe", description: "equal D under V1 for decision feedback", check: dfe_check },
        Suite { name: "simulator.cp", description: "time-domain CP path matches the circular model", check: cp_check },
    ]
}

/// Suites whose name contains `filter`, or all of them.
pub fn run_suites(filter: Option<&str>, trials: usize) -> Vec<SuiteReport> {
    suites()
        .into_iter()
        .filter(|s| filter.is_none_or(|f| s.name.contains(f)))
        .map(|s| s.run(trials))
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat<f64> {
    CMat::from_fn(r, c, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re, im)
    })
}

fn svd_check(seed: u64) -> Result<(), String> {
    let mut rng = trial_rng(seed, 101);
    let (r, c) = (rng.random_range(1..6), rng.random_range(1..6));
    let a = gaussian(&mut rng, r, c);
    let s = sorted_svd(&a).map_err(|e| e.to_string())?;
    let err = relative_frobenius_error(&s.reconstruct(), &a);
    ensure(err < 1e-10, || format!("{r}×{c} reconstruction error {err:e}"))?;
    ensure(s.singular_values.as_slice().windows(2).all(|w| w[0] <= w[1]), || "not ascending".into())?;
    ensure(is_unitary(&s.left, 1e-10) && is_unitary(&s.right, 1e-10), || "factors not unitary".into())
}

fn ldl_check(seed: u64) -> Result<(), String> {
    let mut rng = trial_rng(seed, 102);
    let n = rng.random_range(1..9);
    let b = gaussian(&mut rng, n, n + 2);
    let a = &b * b.adjoint();
    let f = ldl(&a).map_err(|e| e.to_string())?;
    let err = relative_frobenius_error(&f.reconstruct(), &a);
    ensure(err < 1e-10, || format!("n = {n}: reconstruction error {err:e}"))?;
    for i in 0..n {
        ensure((f.unit_lower[(i, i)] - Complex::new(1.0, 0.0)).norm() < 1e-12, || "diagonal of L is not 1".into())?;
        for j in i + 1..n {
            ensure(f.unit_lower[(i, j)].norm() == 0.0, || "L not lower triangular".into())?;
        }
        ensure(f.diag[i] > 0.0, || "non-positive pivot".into())?;
    }
    Ok(())
}

fn gmd_check(seed: u64) -> Result<(), String> {
    let mut rng = trial_rng(seed, 103);
    let n = rng.random_range(1..7);
    let a = gaussian(&mut rng, n, n);
    let f = gmd(&a).map_err(|e| e.to_string())?;
    let err = relative_frobenius_error(&(&f.q * &f.r), &(&a * f.v1.adjoint()));
    ensure(err < 1e-10, || format!("n = {n}: A V† vs QR error {err:e}"))?;
    ensure(is_unitary(&f.q, 1e-10) && is_unitary(&f.v1, 1e-10), || "factors not unitary".into())?;
    let sv = a.singular_values();
    let geo = sv.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
    for (i, d) in f.diagonal().iter().enumerate() {
        ensure((d.ln() - geo).abs() < 1e-9, || format!("diagonal {i} = {d}, geometric mean {}", geo.exp()))?;
        for j in 0..i {
            ensure(f.r[(i, j)].norm() < 1e-10 * sv.max(), || "R not upper triangular".into())?;
        }
    }
    Ok(())
}

fn dft_check(seed: u64) -> Result<(), String> {
    let mut rng = trial_rng(seed, 104);
    let n_c = rng.random_range(1..33);
    let taps: Vec<_> = (0..rng.random_range(1..=n_c)).map(|_| gaussian(&mut rng, 2, 3)).collect();
    let tones = taps_to_tones(&taps, n_c).map_err(|e| e.to_string())?;
    let back = tones_to_taps(&tones).map_err(|e| e.to_string())?;
    for (l, b) in back.iter().enumerate() {
        let want = taps.get(l).cloned().unwrap_or_else(|| CMat::zeros(2, 3));
        ensure((b - &want).norm() < 1e-10 * (1.0 + want.norm()), || format!("tap {l} differs"))?;
    }
    Ok(())
}

fn random_dims(seed: u64) -> (LinkDims, usize) {
    let mut rng = trial_rng(seed, 105);
    let d = LinkDims::new(rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
    (d, rng.random_range(1..=d.max_streams()))
}

fn fixture_check(seed: u64) -> Result<(), String> {
    let (dims, _) = random_dims(seed);
    let p = FadingProfile::exponential(3, 2.0);
    let ch = generate_seeded::<f64>(seed, dims, (p, p), 8).map_err(|e| e.to_string())?;
    let back = from_fixture::<f64>(&to_fixture(&ch)).map_err(|e| e.to_string())?;
    ensure(back.sr_taps == ch.sr_taps && back.rd_taps == ch.rd_taps && back.seed == ch.seed, || "fixture changed".into())
}

fn config_for(seed: u64, criterion: Criterion, receiver: ReceiverMode, scheme: Scheme) -> ExperimentConfig {
    ExperimentConfig { design: Design { scheme, criterion, receiver }, seed, ..Default::default() }
}

fn link_at(config: &ExperimentConfig) -> Result<(LinkDesign<f64>, LinkBudget), String> {
    let mut rng = trial_rng(config.seed, 106);
    let budget = config.link_budget(rng.random_range(4.0..20.0));
    let ch = crate::channel::generate_channel(&mut rng, config.dims, config.profiles(), config.n_c).map_err(|e| e.to_string())?;
    Ok((design_link(ch, config, &budget).map_err(|e| e.to_string())?, budget))
}

fn link(config: &ExperimentConfig) -> Result<LinkDesign<f64>, String> {
    link_at(config).map(|(l, _)| l)
}

fn budget_check(seed: u64) -> Result<(), String> {
    let criterion = if seed % 2 == 0 { Criterion::Amse } else { Criterion::Gmse };
    let config = config_for(seed, criterion, ReceiverMode::Linear, Scheme::Jsr);
    let (l, budget) = link_at(&config)?;
    let set = &l.precoders;
    let alloc = &set.allocation;
    let (ps, pr) = (alloc.source_total(), alloc.relay_total());
    ensure(ps <= budget.p_s * (1.0 + 1e-9) && pr <= budget.p_r * (1.0 + 1e-9), || {
        format!("totals ({ps}, {pr}) exceed budgets ({}, {})", budget.p_s, budget.p_r)
    })?;
    let uniform = PowerAllocation::uniform(set.n_c(), set.streams(), (budget.p_s, budget.p_r), criterion);
    let eval = |a: &PowerAllocation<f64>| highsnr_objective(&a.p_s, &a.p_r, &set.gains, criterion).map_err(|e| e.to_string());
    let (opt, uni) = (eval(alloc)?, eval(&uniform)?);
    ensure(opt <= uni + 1e-9 * uni.abs().max(1.0), || format!("optimized {opt} worse than uniform {uni}"))?;
    let cells = alloc.p_s.iter().chain(alloc.p_r.iter());
    ensure(cells.copied().all(|p| p >= 0.0), || "negative power".into())
}

fn diagonal_check(seed: u64) -> Result<(), String> {
    let criterion = if seed % 2 == 0 { Criterion::Amse } else { Criterion::Gmse };
    let config = config_for(seed, criterion, ReceiverMode::Linear, Scheme::Jsr);
    let l = link(&config)?;
    let noise = config.link_budget(0.0).noise::<f64>();
    let (q, k) = l.precoders.link(&l.channel, &noise).map_err(|e| e.to_string())?;
    let psi = psi_from_covariance(&q, &k, 1.0).map_err(|e| e.to_string())?;
    for (t, p) in psi.psi.iter().enumerate() {
        let m = p.nrows();
        for i in 0..m {
            let want = l.precoders.phi[(t, i)];
            ensure((p[(i, i)].re - want).abs() < 1e-8 * want, || format!("tone {t}: Ψ_ii {} vs Φ {want}", p[(i, i)].re))?;
            for j in 0..m {
                if i != j {
                    ensure(p[(i, j)].norm() < 1e-8 * want, || format!("tone {t}: off-diagonal {:e}", p[(i, j)].norm()))?;
                }
            }
        }
    }
    Ok(())
}

fn equal_entries(v: &[f64], what: &str) -> Result<(), String> {
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    ensure(hi - lo <= 1e-9 * hi, || format!("{what} spread {lo} .. {hi}"))
}

fn maxmse_check(seed: u64) -> Result<(), String> {
    let l = link(&config_for(seed, Criterion::MaxMse, ReceiverMode::Linear, Scheme::Jsr))?;
    equal_entries(&l.equalizer.error_diag, "linear error diagonal")
}

fn dfe_check(seed: u64) -> Result<(), String> {
    let l = link(&config_for(seed, Criterion::Gmse, ReceiverMode::DecisionFeedback, Scheme::Jsr))?;
    equal_entries(&l.equalizer.error_diag, "feedback error diagonal")
}

fn cp_check(seed: u64) -> Result<(), String> {
    let (dims, streams) = random_dims(seed);
    let mut config = config_for(seed, Criterion::Gmse, ReceiverMode::Linear, Scheme::Jsr);
    config.dims = dims;
    config.streams = streams;
    let l = link(&config)?;
    let mut rng = trial_rng(seed, 107);
    let s = gaussian(&mut rng, streams, config.n_c);
    let noise = BlockNoise::draw(&mut rng, dims.n_r, dims.n_d, config.n_c, &config.link_budget(0.0).noise());
    let run = |p| transmit_block(&s, &l.precoders, &l.channel, &noise, p, config.cp).map_err(|e| e.to_string());
    let a = run(TransmitPath::Frequency)?;
    let b = run(TransmitPath::Time)?;
    let worst = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    ensure(worst < 1e-9, || format!("paths differ by {worst:e}"))
}
