//! Source and relay precoders built from per-tone channel SVDs.
//!
//! Every construction here makes the end-to-end tone `Q_k` equal to
//! `Ū_H diag(·) B_k†` for a unitary stream basis `B_k`, so
//! `Ψ_k = B_k Φ_k B_k†` with `Φ_k` the diagonal per-stream SINR + 1.

use crate::channel::{tone_gains, ChannelRealization};
use crate::equalizer::{build_z, noise_covariance, NoiseLevels, PsiSet, ReceiverMode};
use crate::error::{Error, Result};
use crate::powalloc::{
    optimize, optimize_relay, phi_exact, phi_highsnr, Criterion, OptimizeError, PowerAllocation,
    SolverOptions, SubchannelGains,
};
use crate::scalar::{lit, real, CMat, Real};
use crate::spectral::linalg::{diag_real, scale};
use crate::spectral::{dft_matrix, gmd, hermitian_sqrt, sorted_svd};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Joint source and relay design.
    #[serde(rename = "JSR")]
    Jsr,
    /// Equal source powers along optimal directions; relay optimized.
    #[serde(rename = "EPA-S")]
    EpaS,
    /// Relay-only precoding.
    #[serde(rename = "ROP")]
    Rop,
    /// Relay-only precoding plus a unitary source rotation.
    #[serde(rename = "UPS")]
    Ups,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Jsr => "JSR",
            Scheme::EpaS => "EPA-S",
            Scheme::Rop => "ROP",
            Scheme::Ups => "UPS",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "JSR" => Ok(Scheme::Jsr),
            "EPA-S" | "EPAS" => Ok(Scheme::EpaS),
            "ROP" => Ok(Scheme::Rop),
            "UPS" => Ok(Scheme::Ups),
            _ => Err(Error::InvalidParameter(format!("unknown scheme '{s}'"))),
        }
    }
}

/// Receiver the precoders are designed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignMode {
    Linear,
    DecisionFeedback { n_fb: usize },
}

impl DesignMode {
    pub fn receiver(&self) -> ReceiverMode {
        match self {
            DesignMode::Linear => ReceiverMode::Linear,
            DesignMode::DecisionFeedback { .. } => ReceiverMode::DecisionFeedback,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrecoderSet<T: Real> {
    /// `P_k`, each `N_s × M`.
    pub source_tones: Vec<CMat<T>>,
    /// `A_k`, each `N_r × N_r`.
    pub relay_tones: Vec<CMat<T>>,
    /// `p_km`.
    pub lambda_p: DMatrix<T>,
    /// `a_km`.
    pub lambda_a: DMatrix<T>,
    /// Unitary right factor of every source precoder.
    pub rotation: CMat<T>,
    /// `B_k` with `Ψ_k = B_k Φ_k B_k†`.
    pub stream_basis: Vec<CMat<T>>,
    /// Exact `Φ_km`.
    pub phi: DMatrix<T>,
    /// High-SNR `Φ̃_km`.
    pub phi_highsnr: DMatrix<T>,
    /// Stream gains the allocation was computed for.
    pub gains: SubchannelGains<T>,
    pub allocation: PowerAllocation<T>,
    pub scheme: Scheme,
    pub criterion: Criterion,
    pub mode: DesignMode,
}

impl<T: Real> PrecoderSet<T> {
    pub fn streams(&self) -> usize {
        self.rotation.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.source_tones.len()
    }

    fn psi_from(&self, phi: &DMatrix<T>) -> Result<PsiSet<T>> {
        PsiSet::from_psi(
            self.stream_basis
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let d = diag_real(&phi.row(k).iter().copied().collect::<Vec<_>>());
                    b * d * b.adjoint()
                })
                .collect(),
        )
    }

    /// `Ψ_k` from the diagonal factorization.
    pub fn psi(&self) -> Result<PsiSet<T>> {
        self.psi_from(&self.phi)
    }

    /// End-to-end tones `Q_k = H_k A_k G_k P_k` and destination noise
    /// covariances `K_k`.
    pub fn link(&self, ch: &ChannelRealization<T>, noise: &NoiseLevels<T>) -> Result<(Vec<CMat<T>>, Vec<CMat<T>>)> {
        let q = (0..self.n_c())
            .map(|k| &ch.rd_tones[k] * &self.relay_tones[k] * &ch.sr_tones[k] * &self.source_tones[k])
            .collect();
        let kf = noise_covariance(&ch.rd_tones, &self.relay_tones, noise)?;
        Ok((q, kf))
    }

    /// Per-stream MSEs `(1/N_c) diag Σ_k B_k Φ_k⁻¹ B_k†` (unit symbol variance).
    pub fn stream_mse(&self, high_snr: bool) -> Vec<T> {
        let phi = if high_snr { &self.phi_highsnr } else { &self.phi };
        let m = self.streams();
        let n = lit::<T>(self.n_c() as f64);
        let mut out = vec![T::zero(); m];
        for (k, b) in self.stream_basis.iter().enumerate() {
            for (s, o) in out.iter_mut().enumerate() {
                for j in 0..m {
                    let w = b[(s, j)];
                    *o += (w.re * w.re + w.im * w.im) / phi[(k, j)];
                }
            }
        }
        out.into_iter().map(|v| v / n).collect()
    }

    /// Design objective on the per-stream MSEs.
    pub fn objective(&self, criterion: Criterion, high_snr: bool) -> T {
        crate::powalloc::objective_from_mse(&self.stream_mse(high_snr), criterion)
    }
}

/// `V₀`: Hadamard/√M when M is a power of two, otherwise the unitary DFT.
pub fn v0_matrix<T: Real>(m: usize) -> Result<CMat<T>> {
    if m == 0 {
        return Err(Error::InvalidDimension("rotation size must be positive".into()));
    }
    if !m.is_power_of_two() {
        return dft_matrix(m);
    }
    let s = T::one() / lit::<T>(m as f64).sqrt();
    Ok(CMat::from_fn(m, m, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            real(s)
        } else {
            real(-s)
        }
    }))
}

/// `p_km = √(P_s/σ_s²)`, `a_km = √(P_r / (P_s g² + σ_v²))`.
pub fn scalars_from_powers<T: Real>(
    alloc: &PowerAllocation<T>,
    gains: &SubchannelGains<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if alloc.p_s.shape() != gains.g.shape() || alloc.p_r.shape() != gains.g.shape() {
        return Err(Error::InvalidDimension("allocation and gains disagree".into()));
    }
    if alloc.p_s.iter().chain(alloc.p_r.iter()).any(|&v| !(v >= T::zero())) {
        return Err(Error::Domain("powers must be non-negative".into()));
    }
    let p = alloc.p_s.map(|v| (v / gains.sigma_s2).sqrt());
    let a = DMatrix::from_fn(p.nrows(), p.ncols(), |k, m| {
        let g = gains.g[(k, m)];
        (alloc.p_r[(k, m)] / (alloc.p_s[(k, m)] * g * g + gains.sigma_v2)).sqrt()
    });
    Ok((p, a))
}

fn phi_tables<T: Real>(alloc: &PowerAllocation<T>, gains: &SubchannelGains<T>) -> (DMatrix<T>, DMatrix<T>) {
    let f = |which: fn(T, T, &SubchannelGains<T>, usize, usize) -> T| {
        DMatrix::from_fn(gains.n_c(), gains.streams(), |k, m| which(alloc.p_s[(k, m)], alloc.p_r[(k, m)], gains, k, m))
    };
    (f(phi_exact), f(phi_highsnr))
}

fn check_noise<T: Real>(noise: &NoiseLevels<T>, gains: &SubchannelGains<T>) -> Result<()> {
    if noise.sigma_v2 != gains.sigma_v2 || noise.sigma_u2 != gains.sigma_u2 || noise.sigma_s2 != gains.sigma_s2 {
        return Err(Error::InvalidParameter("noise levels differ from the gains' variances".into()));
    }
    Ok(())
}

/// Stream gains of a channel for the SVD-aligned directions.
pub fn channel_gains<T: Real>(
    ch: &ChannelRealization<T>,
    m: usize,
    noise: &NoiseLevels<T>,
) -> Result<SubchannelGains<T>> {
    let (g, h) = tone_gains(ch, m)?;
    SubchannelGains::new(g, h, noise.sigma_v2, noise.sigma_u2, noise.sigma_s2)
}

/// Source-side directions: `(V̄_G, Ū_G)` per tone, or for relay-only schemes
/// `(E, Ū_{GE}, V_{GE})` where `E = [I_M; 0]`.
struct Directions<T: Real> {
    source: Vec<CMat<T>>,
    relay_in: Vec<CMat<T>>,
    relay_out: Vec<CMat<T>>,
    /// Unitary mixing seen by the streams before any rotation.
    mixing: Vec<CMat<T>>,
    gains: SubchannelGains<T>,
}

fn svd_directions<T: Real>(ch: &ChannelRealization<T>, m: usize, noise: &NoiseLevels<T>) -> Result<Directions<T>> {
    let mut dirs = Directions {
        source: Vec::new(),
        relay_in: Vec::new(),
        relay_out: Vec::new(),
        mixing: Vec::new(),
        gains: channel_gains(ch, m, noise)?,
    };
    for k in 0..ch.n_c {
        let (u_g, _, v_g) = sorted_svd(&ch.sr_tones[k])?.top(m);
        let (_, _, v_h) = sorted_svd(&ch.rd_tones[k])?.top(m);
        dirs.source.push(v_g);
        dirs.relay_in.push(u_g);
        dirs.relay_out.push(v_h);
        dirs.mixing.push(CMat::identity(m, m));
    }
    Ok(dirs)
}

fn relay_only_directions<T: Real>(
    ch: &ChannelRealization<T>,
    m: usize,
    noise: &NoiseLevels<T>,
) -> Result<Directions<T>> {
    let n_s = ch.dims.n_s;
    let e = CMat::<T>::identity(n_s, m);
    let (_, h) = tone_gains(ch, m)?;
    let mut g = DMatrix::zeros(ch.n_c, m);
    let mut dirs = Directions {
        source: Vec::new(),
        relay_in: Vec::new(),
        relay_out: Vec::new(),
        mixing: Vec::new(),
        gains: SubchannelGains::new(g.clone(), h.clone(), noise.sigma_v2, noise.sigma_u2, noise.sigma_s2)?,
    };
    for k in 0..ch.n_c {
        let ge = &ch.sr_tones[k] * &e;
        let (u, vals, v) = sorted_svd(&ge)?.top(m);
        for (j, val) in vals.iter().enumerate() {
            g[(k, j)] = *val;
        }
        let (_, _, v_h) = sorted_svd(&ch.rd_tones[k])?.top(m);
        dirs.source.push(e.clone());
        dirs.relay_in.push(u);
        dirs.relay_out.push(v_h);
        dirs.mixing.push(v);
    }
    dirs.gains = SubchannelGains::new(g, h, noise.sigma_v2, noise.sigma_u2, noise.sigma_s2)?;
    Ok(dirs)
}

/// Rotation that equalizes the feedback-design error diagonal: the right
/// factor of the GMD of `(U₁₁⁻¹)^{1/2}` built from the unrotated `Ψ_k`.
fn gmd_rotation<T: Real>(psi: &PsiSet<T>, n_fb: usize) -> Result<CMat<T>> {
    let z = build_z(psi, n_fb)?;
    let root = hermitian_sqrt(&z.u11_inv)?;
    Ok(gmd(&root)?.v1.adjoint())
}

fn unrotated_psi<T: Real>(mixing: &[CMat<T>], phi: &DMatrix<T>) -> Result<PsiSet<T>> {
    PsiSet::from_psi(
        mixing
            .iter()
            .enumerate()
            .map(|(k, b)| b * diag_real(&phi.row(k).iter().copied().collect::<Vec<_>>()) * b.adjoint())
            .collect(),
    )
}

fn choose_rotation<T: Real>(
    criterion: Criterion,
    mode: DesignMode,
    mixing: &[CMat<T>],
    phi: &DMatrix<T>,
) -> Result<CMat<T>> {
    let m = phi.ncols();
    match mode {
        DesignMode::DecisionFeedback { n_fb } => gmd_rotation(&unrotated_psi(mixing, phi)?, n_fb),
        DesignMode::Linear if criterion == Criterion::MaxMse => v0_matrix(m),
        DesignMode::Linear => Ok(CMat::identity(m, m)),
    }
}

fn assemble<T: Real>(
    dirs: Directions<T>,
    alloc: PowerAllocation<T>,
    source_scale: Option<T>,
    rotate: bool,
    spec: &DesignSpec<T>,
    n_r: usize,
) -> Result<PrecoderSet<T>> {
    let (p, a) = scalars_from_powers(&alloc, &dirs.gains)?;
    let (phi, phi_hi) = phi_tables(&alloc, &dirs.gains);
    let rotation = if rotate {
        choose_rotation(spec.criterion, spec.mode, &dirs.mixing, &phi)?
    } else {
        CMat::identity(spec.streams, spec.streams)
    };
    let n_c = dirs.source.len();
    let mut source_tones = Vec::with_capacity(n_c);
    let mut relay_tones = Vec::with_capacity(n_c);
    let mut stream_basis = Vec::with_capacity(n_c);
    for k in 0..n_c {
        let pk: Vec<T> = p.row(k).iter().copied().collect();
        let ak: Vec<T> = a.row(k).iter().copied().collect();
        let src = match source_scale {
            Some(c) => scale(&dirs.source[k], c),
            None => &dirs.source[k] * diag_real(&pk),
        };
        source_tones.push(src * &rotation);
        let relay = &dirs.relay_out[k] * diag_real(&ak) * dirs.relay_in[k].adjoint();
        debug_assert_eq!(relay.shape(), (n_r, n_r));
        relay_tones.push(relay);
        stream_basis.push(rotation.adjoint() * &dirs.mixing[k]);
    }
    Ok(PrecoderSet {
        source_tones,
        relay_tones,
        lambda_p: p,
        lambda_a: a,
        rotation,
        stream_basis,
        phi,
        phi_highsnr: phi_hi,
        gains: dirs.gains,
        allocation: alloc,
        scheme: spec.scheme,
        criterion: spec.criterion,
        mode: spec.mode,
    })
}

/// Optimal structure for a given allocation (computed on the same channel's
/// SVD-aligned gains).
pub fn build_jsr<T: Real>(
    ch: &ChannelRealization<T>,
    alloc: &PowerAllocation<T>,
    criterion: Criterion,
    mode: DesignMode,
    noise: &NoiseLevels<T>,
) -> Result<PrecoderSet<T>> {
    let m = alloc.p_s.ncols();
    let dirs = svd_directions(ch, m, noise)?;
    check_noise(noise, &dirs.gains)?;
    if alloc.p_s.nrows() != ch.n_c {
        return Err(Error::InvalidDimension("allocation tone count differs from the channel".into()));
    }
    let spec = DesignSpec { scheme: Scheme::Jsr, criterion, mode, budgets: (alloc.source_total(), alloc.relay_total()), streams: m };
    assemble(dirs, alloc.clone(), None, true, &spec, ch.dims.n_r)
}

fn solver_error<T: Real>(e: OptimizeError<T>) -> Error {
    match e {
        OptimizeError::Invalid(e) => e,
        OptimizeError::NoConvergence { best } => Error::NoConvergence(format!(
            "power allocation stopped after {} outer iterations",
            best.outer_iterations
        )),
    }
}

/// What to design: scheme, criterion, receiver, power budgets `(P_S, P_R)`
/// and stream count `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec<T> {
    pub scheme: Scheme,
    pub criterion: Criterion,
    pub mode: DesignMode,
    pub budgets: (T, T),
    pub streams: usize,
}

/// Suboptimal schemes: source powers frozen at `P_S / (N_c M)`, relay powers
/// optimized for those.
pub fn build_suboptimal<T: Real>(
    ch: &ChannelRealization<T>,
    spec: &DesignSpec<T>,
    noise: &NoiseLevels<T>,
    opts: &SolverOptions,
) -> Result<PrecoderSet<T>> {
    let m = spec.streams;
    let dirs = match spec.scheme {
        Scheme::Jsr => return Err(Error::InvalidParameter("JSR is not a suboptimal scheme".into())),
        Scheme::EpaS => svd_directions(ch, m, noise)?,
        Scheme::Rop | Scheme::Ups => relay_only_directions(ch, m, noise)?,
    };
    let cells = lit::<T>((ch.n_c * m) as f64);
    let p_s = DMatrix::from_element(ch.n_c, m, spec.budgets.0 / cells);
    let alloc = optimize_relay(&dirs.gains, &p_s, spec.budgets.1, spec.criterion, opts).map_err(solver_error)?;
    let flat = Some((spec.budgets.0 / (cells * noise.sigma_s2)).sqrt());
    let (source_scale, rotate) = match spec.scheme {
        Scheme::Rop => (flat, false),
        Scheme::Ups => (flat, true),
        _ => (None, true),
    };
    assemble(dirs, alloc, source_scale, rotate, spec, ch.dims.n_r)
}

/// Allocation plus construction for any scheme.
pub fn design_precoders<T: Real>(
    ch: &ChannelRealization<T>,
    spec: &DesignSpec<T>,
    noise: &NoiseLevels<T>,
    opts: &SolverOptions,
) -> Result<PrecoderSet<T>> {
    match spec.scheme {
        Scheme::Jsr => {
            let gains = channel_gains(ch, spec.streams, noise)?;
            let alloc = optimize(&gains, spec.budgets, spec.criterion, opts).map_err(solver_error)?;
            build_jsr(ch, &alloc, spec.criterion, spec.mode, noise)
        }
        _ => build_suboptimal(ch, spec, noise, opts),
    }
}
