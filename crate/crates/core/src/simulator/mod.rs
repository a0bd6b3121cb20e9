//! Seeded Monte-Carlo link simulation.
//!
//! Trial `i` of a run draws everything (channel, data, pilots, noise) from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`, so a point is
//! reproducible regardless of how trials are scheduled across threads. The
//! same trial index sees the same channel at every SNR point.

mod link;

pub use link::{qpsk_decide, qpsk_map, qpsk_slice, transmit_block, BlockNoise, CyclicPrefix, TransmitPath, QPSK_BITS};

use crate::channel::{generate_channel, ChannelRealization, FadingProfile, LinkDims};
use crate::equalizer::{
    apply_fddfe, apply_fdle, build_z, fddfe_design, psi_from_covariance, fdle_design, EqualizerDesign, Feedback, NoiseLevels,
    ReceiverMode,
};
use crate::error::{Error, Result};
use crate::powalloc::{objective, Criterion, SolverOptions, TraceRow};
use crate::precoder::{design_precoders, DesignMode, DesignSpec, PrecoderSet, Scheme};
use crate::scalar::{lit, to_f64, CMat, Real};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Constellation {
    #[default]
    Qpsk,
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        QPSK_BITS
    }
}

/// One transceiver under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub scheme: Scheme,
    pub criterion: Criterion,
    pub receiver: ReceiverMode,
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.scheme, self.criterion, self.receiver)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dims: LinkDims,
    pub streams: usize,
    pub n_c: usize,
    /// Tap counts `L_g`, `L_h`.
    pub taps: (usize, usize),
    pub cp: CyclicPrefix,
    /// Decay constant of the exponential delay profile, in taps.
    pub sigma_t: f64,
    pub n_fb: usize,
    pub constellation: Constellation,
    pub design: Design,
    pub source_snr_db: f64,
    pub relay_snr_db: Vec<f64>,
    pub trials: usize,
    pub blocks_per_trial: usize,
    pub seed: u64,
    pub path: TransmitPath,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: LinkDims::new(2, 2, 2),
            streams: 2,
            n_c: 64,
            taps: (16, 16),
            cp: CyclicPrefix { source: 16, relay: 16 },
            sigma_t: 2.0,
            n_fb: 15,
            constellation: Constellation::Qpsk,
            design: Design { scheme: Scheme::Jsr, criterion: Criterion::Gmse, receiver: ReceiverMode::DecisionFeedback },
            source_snr_db: 16.0,
            relay_snr_db: vec![16.0],
            trials: 100,
            blocks_per_trial: 1,
            seed: 1,
            path: TransmitPath::Frequency,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Configuration(format!("{field}: {why}")));
        let d = self.dims;
        if d.n_s == 0 || d.n_r == 0 || d.n_d == 0 {
            return bad("dims", "antenna counts must be positive".into());
        }
        if self.streams == 0 || self.streams > d.max_streams() {
            return bad("streams", format!("{} not in 1..={}", self.streams, d.max_streams()));
        }
        if self.n_c == 0 {
            return bad("n_c", "must be positive".into());
        }
        for (name, l) in [("l_g", self.taps.0), ("l_h", self.taps.1)] {
            if l == 0 || l > self.n_c {
                return bad(name, format!("{l} not in 1..={}", self.n_c));
            }
        }
        if self.cp.source < self.taps.0 {
            return bad("cp_source", format!("{} is shorter than l_g = {}", self.cp.source, self.taps.0));
        }
        if self.cp.relay < self.taps.1 {
            return bad("cp_relay", format!("{} is shorter than l_h = {}", self.cp.relay, self.taps.1));
        }
        if !(self.sigma_t.is_finite() && self.sigma_t > 0.0) {
            return bad("sigma_t", format!("{} must be positive", self.sigma_t));
        }
        if self.design.receiver == ReceiverMode::DecisionFeedback && self.n_fb >= self.n_c {
            return bad("n_fb", format!("{} must be below n_c = {}", self.n_fb, self.n_c));
        }
        if !self.source_snr_db.is_finite() {
            return bad("source_snr_db", "must be finite".into());
        }
        if self.relay_snr_db.is_empty() || self.relay_snr_db.iter().any(|v| !v.is_finite()) {
            return bad("relay_snr_db", "needs at least one finite value".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be positive".into());
        }
        if self.blocks_per_trial == 0 {
            return bad("blocks_per_trial", "must be positive".into());
        }
        Ok(())
    }

    pub fn profiles(&self) -> (FadingProfile, FadingProfile) {
        (FadingProfile::exponential(self.taps.0, self.sigma_t), FadingProfile::exponential(self.taps.1, self.sigma_t))
    }

    pub fn design_mode(&self) -> DesignMode {
        match self.design.receiver {
            ReceiverMode::Linear => DesignMode::Linear,
            ReceiverMode::DecisionFeedback => DesignMode::DecisionFeedback { n_fb: self.n_fb },
        }
    }

    pub fn link_budget(&self, relay_snr_db: f64) -> LinkBudget {
        snr_to_variance(self.source_snr_db, relay_snr_db, self.dims, self.n_c, self.constellation.bits_per_symbol())
    }
}

/// Noise variances and power budgets of one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub sigma_v2: f64,
    pub sigma_u2: f64,
    pub sigma_s2: f64,
    pub p_s: f64,
    pub p_r: f64,
}

impl LinkBudget {
    pub fn noise<T: Real>(&self) -> NoiseLevels<T> {
        NoiseLevels { sigma_v2: lit(self.sigma_v2), sigma_u2: lit(self.sigma_u2), sigma_s2: lit(self.sigma_s2) }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Unit noise at both receivers; `P_S = N_b N_s N_c 10^{dB/10} σ_u²` and
/// `P_R = N_b N_r N_c 10^{dB/10} σ_u²`.
pub fn snr_to_variance(source_db: f64, relay_db: f64, dims: LinkDims, n_c: usize, bits: usize) -> LinkBudget {
    let (sigma_v2, sigma_u2) = (1.0, 1.0);
    let scale = |ant: usize, db: f64| (bits * ant * n_c) as f64 * db_to_linear(db) * sigma_u2;
    LinkBudget { sigma_v2, sigma_u2, sigma_s2: 1.0, p_s: scale(dims.n_s, source_db), p_r: scale(dims.n_r, relay_db) }
}

/// Per-stream empirical MSE with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMse {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

fn mean_and_se(units: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = units.len() as f64;
    let mut mean = vec![0.0; m];
    for u in units {
        for (a, v) in mean.iter_mut().zip(u) {
            *a += v / n;
        }
    }
    let se = (0..m)
        .map(|s| {
            if units.len() < 2 {
                return f64::NAN;
            }
            let var = units.iter().map(|u| (u[s] - mean[s]).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub design: Design,
    pub relay_snr_db: f64,
    pub ber: f64,
    /// Standard error of the per-realization BER.
    pub ber_std_err: f64,
    /// Mean designed `error_diag` over realizations.
    pub analytic_mse: Vec<f64>,
    /// Measured with genie feedback; one unit per realization.
    pub empirical_mse: EmpiricalMse,
    /// Mean `Σ_m log₂(1/MSE_m)` in bits per channel use.
    pub capacity: f64,
    /// Mean GMSE objective of the same allocations.
    pub gmse_objective: f64,
    pub mean_solver_iterations: f64,
    /// Solver log of the first realization that converged.
    pub objective_trace: Vec<TraceRow>,
    pub realizations: usize,
    pub skipped: usize,
    pub blocks: usize,
    pub symbols: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub symbol_errors: u64,
}

/// Everything a receiver needs for one channel realization.
#[derive(Debug, Clone)]
pub struct LinkDesign<T: Real> {
    pub channel: ChannelRealization<T>,
    pub precoders: PrecoderSet<T>,
    pub equalizer: EqualizerDesign<T>,
}

/// Allocation, precoders and equalizer for one realization; the equalizer is
/// built from `Q_k`, `K_k` of the actual link.
pub fn design_link<T: Real>(
    channel: ChannelRealization<T>,
    config: &ExperimentConfig,
    budget: &LinkBudget,
) -> Result<LinkDesign<T>> {
    let noise = budget.noise::<T>();
    let spec = DesignSpec {
        scheme: config.design.scheme,
        criterion: config.design.criterion,
        mode: config.design_mode(),
        budgets: (lit(budget.p_s), lit(budget.p_r)),
        streams: config.streams,
    };
    let precoders = design_precoders(&channel, &spec, &noise, &config.solver)?;
    let (q, k) = precoders.link(&channel, &noise)?;
    let psi = psi_from_covariance(&q, &k, noise.sigma_s2)?;
    let equalizer = match config.design.receiver {
        ReceiverMode::Linear => fdle_design(&psi, &q, &k, noise.sigma_s2)?,
        ReceiverMode::DecisionFeedback => {
            let z = build_z(&psi, config.n_fb)?;
            fddfe_design(&z, &psi, &q, &k, noise.sigma_s2)?
        }
    };
    Ok(LinkDesign { channel, precoders, equalizer })
}

/// Outcome of one block.
#[derive(Debug, Clone, Default)]
pub struct BlockResult {
    pub bits: u64,
    pub bit_errors: u64,
    pub symbols: u64,
    pub symbol_errors: u64,
    /// Per-stream mean `|ȳ − s|²` under genie feedback.
    pub sq_error: Vec<f64>,
}

fn random_bits<R: Rng>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

/// Draws data, pilots and noise, transmits and detects one block. In
/// decision-feedback mode the last `N_fb` columns are pilots and are not
/// counted.
pub fn simulate_block<T: Real, R: Rng>(
    rng: &mut R,
    link: &LinkDesign<T>,
    config: &ExperimentConfig,
    noise: &NoiseLevels<T>,
) -> Result<BlockResult> {
    let (m, n_c) = (config.streams, config.n_c);
    let bits = random_bits(rng, m * n_c * QPSK_BITS);
    let syms = qpsk_map::<T>(&bits)?;
    // Column-major: symbol (s, n) sits at n * m + s.
    let s = CMat::from_fn(m, n_c, |r, c| syms[c * m + r]);
    let w = BlockNoise::draw(rng, link.channel.dims.n_r, link.channel.dims.n_d, n_c, noise);
    let y = transmit_block(&s, &link.precoders, &link.channel, &w, config.path, config.cp)?;
    let eq = &link.equalizer;
    let (decisions, genie_soft, data_cols) = match eq.mode {
        ReceiverMode::Linear => {
            let soft = apply_fdle(&y, eq)?;
            (soft.map(qpsk_decide), soft, n_c)
        }
        ReceiverMode::DecisionFeedback => {
            let n_fb = eq.n_fb;
            let pilots = s.columns(n_c - n_fb, n_fb).into_owned();
            let sliced = apply_fddfe(&y, eq, qpsk_decide, Feedback::Sliced { bootstrap: Some(&pilots) })?;
            let genie = apply_fddfe(&y, eq, qpsk_decide, Feedback::Genie { symbols: &s })?;
            (sliced.decisions, genie.soft, n_c - n_fb)
        }
    };
    let mut out = BlockResult { sq_error: vec![0.0; m], ..Default::default() };
    for c in 0..data_cols {
        for r in 0..m {
            let got = qpsk_slice(&[decisions[(r, c)]]);
            let sent = &bits[(c * m + r) * QPSK_BITS..(c * m + r + 1) * QPSK_BITS];
            let wrong = got.iter().zip(sent).filter(|(a, b)| a != b).count() as u64;
            out.bit_errors += wrong;
            out.symbol_errors += u64::from(wrong > 0);
        }
    }
    out.bits = (data_cols * m * QPSK_BITS) as u64;
    out.symbols = (data_cols * m) as u64;
    for r in 0..m {
        let e: f64 = (0..n_c).map(|c| to_f64((genie_soft[(r, c)] - s[(r, c)]).norm_sqr())).sum();
        out.sq_error[r] = e / n_c as f64;
    }
    Ok(out)
}

/// Empirical per-stream MSE on a fixed link; each block is one unit.
pub fn measure_mse<T: Real, R: Rng>(
    rng: &mut R,
    link: &LinkDesign<T>,
    config: &ExperimentConfig,
    noise: &NoiseLevels<T>,
    blocks: usize,
) -> Result<EmpiricalMse> {
    let units = (0..blocks)
        .map(|_| simulate_block(rng, link, config, noise).map(|b| b.sq_error))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std_err) = mean_and_se(&units, config.streams);
    Ok(EmpiricalMse { mean, std_err, samples: blocks * config.n_c })
}

/// Generator of trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

struct TrialOutcome {
    blocks: Vec<BlockResult>,
    error_diag: Vec<f64>,
    gmse: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
}

/// The channel trial `trial` of `config` sees.
pub fn generate_channel_for_trial<T: Real>(config: &ExperimentConfig, trial: u64) -> Result<ChannelRealization<T>> {
    generate_channel(&mut trial_rng(config.seed, trial), config.dims, config.profiles(), config.n_c)
}

fn run_trial<T: Real>(config: &ExperimentConfig, budget: &LinkBudget, trial: u64) -> Result<Option<TrialOutcome>> {
    let mut rng = trial_rng(config.seed, trial);
    let channel = generate_channel::<T, _>(&mut rng, config.dims, config.profiles(), config.n_c)?;
    let link = match design_link(channel, config, budget) {
        Ok(l) => l,
        Err(Error::NoConvergence(_) | Error::IllConditioned(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let noise = budget.noise::<T>();
    let blocks = (0..config.blocks_per_trial)
        .map(|_| simulate_block(&mut rng, &link, config, &noise))
        .collect::<Result<Vec<_>>>()?;
    let gmse = to_f64(objective(&link.precoders.phi, Criterion::Gmse)?);
    let alloc = &link.precoders.allocation;
    Ok(Some(TrialOutcome {
        blocks,
        error_diag: link.equalizer.error_diag.iter().map(|&v| to_f64(v)).collect(),
        gmse,
        iterations: alloc.iterations(),
        trace: alloc.trace.clone(),
    }))
}

/// Monte-Carlo estimate at one relay SNR. Trials run in parallel on the
/// current rayon pool and are reduced in trial order.
pub fn run_point<T: Real>(config: &ExperimentConfig, relay_snr_db: f64) -> Result<MetricsRecord> {
    config.validate()?;
    let budget = config.link_budget(relay_snr_db);
    let outcomes = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial::<T>(config, &budget, t))
        .collect::<Result<Vec<_>>>()?;
    let m = config.streams;
    let mut rec = MetricsRecord {
        design: config.design,
        relay_snr_db,
        ber: f64::NAN,
        ber_std_err: f64::NAN,
        analytic_mse: vec![0.0; m],
        empirical_mse: EmpiricalMse { mean: vec![f64::NAN; m], std_err: vec![f64::NAN; m], samples: 0 },
        capacity: f64::NAN,
        gmse_objective: f64::NAN,
        mean_solver_iterations: f64::NAN,
        objective_trace: Vec::new(),
        realizations: 0,
        skipped: 0,
        blocks: 0,
        symbols: 0,
        bits: 0,
        bit_errors: 0,
        symbol_errors: 0,
    };
    let mut ber_units = Vec::new();
    let mut mse_units = Vec::new();
    let (mut gmse_sum, mut iter_sum) = (0.0, 0usize);
    for o in outcomes {
        let Some(o) = o else {
            rec.skipped += 1;
            continue;
        };
        if rec.realizations == 0 {
            rec.objective_trace = o.trace;
        }
        rec.realizations += 1;
        let (mut bits, mut errs) = (0u64, 0u64);
        let mut unit = vec![0.0; m];
        for b in &o.blocks {
            bits += b.bits;
            errs += b.bit_errors;
            rec.symbols += b.symbols;
            rec.symbol_errors += b.symbol_errors;
            for (u, e) in unit.iter_mut().zip(&b.sq_error) {
                *u += e / o.blocks.len() as f64;
            }
        }
        rec.blocks += o.blocks.len();
        rec.bits += bits;
        rec.bit_errors += errs;
        ber_units.push(vec![errs as f64 / bits as f64]);
        mse_units.push(unit);
        for (a, e) in rec.analytic_mse.iter_mut().zip(&o.error_diag) {
            *a += e;
        }
        gmse_sum += o.gmse;
        iter_sum += o.iterations;
    }
    if rec.realizations > 0 {
        let n = rec.realizations as f64;
        rec.ber = rec.bit_errors as f64 / rec.bits as f64;
        rec.ber_std_err = mean_and_se(&ber_units, 1).1[0];
        rec.analytic_mse.iter_mut().for_each(|a| *a /= n);
        let (mean, std_err) = mean_and_se(&mse_units, m);
        rec.empirical_mse = EmpiricalMse { mean, std_err, samples: rec.blocks * config.n_c };
        rec.gmse_objective = gmse_sum / n;
        rec.capacity = -rec.gmse_objective;
        rec.mean_solver_iterations = iter_sum as f64 / n;
    } else {
        rec.analytic_mse.iter_mut().for_each(|a| *a = f64::NAN);
    }
    Ok(rec)
}

/// [`run_point`] for every relay SNR of the sweep.
pub fn run_sweep<T: Real>(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.relay_snr_db.iter().map(|&snr| run_point::<T>(config, snr)).collect()
}

#[cfg(test)]
mod tests;
