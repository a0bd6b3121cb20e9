//! MMSE frequency-domain equalizers: linear (FD-LE) and decision feedback
//! (FD-DFE) with a time-domain feedback filter.

mod fixture;

pub use fixture::{design_from_fixture, design_to_fixture};

use crate::error::{Error, Result};
use crate::scalar::{cis, lit, real, to_f64, CMat, Real};
use crate::spectral::linalg::{
    condition_hpd, diag_of, hermitian_part, inverse_hpd, right_solve_hpd, scale, solve_hpd,
};
use crate::spectral::{ldl, DftPlan};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiverMode {
    #[serde(rename = "FD-LE")]
    Linear,
    #[serde(rename = "FD-DFE")]
    DecisionFeedback,
}

impl fmt::Display for ReceiverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReceiverMode::Linear => "FD-LE",
            ReceiverMode::DecisionFeedback => "FD-DFE",
        })
    }
}

impl FromStr for ReceiverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FD-LE" | "LE" => Ok(ReceiverMode::Linear),
            "FD-DFE" | "DFE" => Ok(ReceiverMode::DecisionFeedback),
            _ => Err(Error::InvalidParameter(format!("unknown receiver '{s}'"))),
        }
    }
}

/// Relay noise `σ_v²`, destination noise `σ_u²` and symbol variance `σ_s²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels<T> {
    pub sigma_v2: T,
    pub sigma_u2: T,
    pub sigma_s2: T,
}

impl<T: Real> NoiseLevels<T> {
    pub fn unit() -> Self {
        Self { sigma_v2: T::one(), sigma_u2: T::one(), sigma_s2: T::one() }
    }
}

#[derive(Debug, Clone)]
pub struct PsiSet<T: Real> {
    pub psi: Vec<CMat<T>>,
    pub psi_inv: Vec<CMat<T>>,
}

impl<T: Real> PsiSet<T> {
    pub fn n_c(&self) -> usize {
        self.psi.len()
    }

    pub fn streams(&self) -> usize {
        self.psi[0].nrows()
    }

    pub fn from_psi(psi: Vec<CMat<T>>) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::InvalidLength("no tones".into()));
        }
        let psi: Vec<_> = psi.iter().map(hermitian_part).collect();
        let psi_inv = psi.iter().map(inverse_hpd).collect::<Result<Vec<_>>>()?;
        Ok(Self { psi, psi_inv })
    }
}

/// `K_k = σ_v² H_k A_k A_k† H_k† + σ_u² I`.
pub fn noise_covariance<T: Real>(h: &[CMat<T>], a: &[CMat<T>], noise: &NoiseLevels<T>) -> Result<Vec<CMat<T>>> {
    if h.len() != a.len() {
        return Err(Error::InvalidDimension("tone counts differ".into()));
    }
    h.iter()
        .zip(a)
        .map(|(h, a)| {
            if h.ncols() != a.nrows() {
                return Err(Error::InvalidDimension(format!("H {:?} and A {:?}", h.shape(), a.shape())));
            }
            let ha = h * a;
            let n_d = h.nrows();
            Ok(hermitian_part(
                &(scale(&(&ha * ha.adjoint()), noise.sigma_v2)
                    + CMat::<T>::identity(n_d, n_d) * real(noise.sigma_u2)),
            ))
        })
        .collect()
}

/// `Ψ_k = σ_s² Q_k† K_k⁻¹ Q_k + I`.
pub fn compute_psi<T: Real>(
    h: &[CMat<T>],
    a: &[CMat<T>],
    q: &[CMat<T>],
    noise: &NoiseLevels<T>,
) -> Result<PsiSet<T>> {
    if q.len() != h.len() {
        return Err(Error::InvalidDimension("tone counts differ".into()));
    }
    let k = noise_covariance(h, a, noise)?;
    psi_from_covariance(q, &k, noise.sigma_s2)
}

pub fn psi_from_covariance<T: Real>(q: &[CMat<T>], k: &[CMat<T>], sigma_s2: T) -> Result<PsiSet<T>> {
    let psi = q
        .iter()
        .zip(k)
        .map(|(q, k)| {
            let kq = solve_hpd(k, q)
                .map_err(|_| Error::Singular("noise covariance at the destination is singular".into()))?;
            let m = q.ncols();
            Ok(hermitian_part(&(scale(&(q.adjoint() * kq), sigma_s2) + CMat::<T>::identity(m, m))))
        })
        .collect::<Result<Vec<_>>>()?;
    PsiSet::from_psi(psi)
}

/// Synthesized receiver filters.
#[derive(Debug, Clone)]
pub struct EqualizerDesign<T: Real> {
    /// `W_k`, each `M × N_d`.
    pub fff_tones: Vec<CMat<T>>,
    /// `C_{t,0..N_fb}`; tap 0 is unit lower triangular.
    pub fbf_taps: Vec<CMat<T>>,
    pub n_fb: usize,
    pub error_diag: Vec<T>,
    pub mode: ReceiverMode,
}

impl<T: Real> EqualizerDesign<T> {
    pub fn streams(&self) -> usize {
        self.fbf_taps[0].nrows()
    }

    pub fn n_c(&self) -> usize {
        self.fff_tones.len()
    }

    /// `B_{t,l} = C_{t,l} − δ_l I`.
    pub fn feedback_taps(&self) -> Vec<CMat<T>> {
        let m = self.streams();
        self.fbf_taps
            .iter()
            .enumerate()
            .map(|(l, c)| if l == 0 { c - CMat::<T>::identity(m, m) } else { c.clone() })
            .collect()
    }
}

fn check_system<T: Real>(psi: &PsiSet<T>, q: &[CMat<T>], k: &[CMat<T>]) -> Result<()> {
    if q.len() != psi.n_c() || k.len() != psi.n_c() {
        return Err(Error::InvalidDimension("tone counts differ".into()));
    }
    Ok(())
}

/// Wiener filters `σ_s² Q_k† (σ_s² Q_k Q_k† + K_k)⁻¹`.
fn wiener<T: Real>(q: &[CMat<T>], k: &[CMat<T>], sigma_s2: T) -> Result<Vec<CMat<T>>> {
    q.iter()
        .zip(k)
        .map(|(q, k)| {
            let ry = scale(&(q * q.adjoint()), sigma_s2) + k;
            right_solve_hpd(&scale(&q.adjoint(), sigma_s2), &ry)
        })
        .collect()
}

/// Per-stream error of the linear design, `(σ_s²/N_c) Σ_k Ψ_k⁻¹`.
pub fn linear_error_covariance<T: Real>(psi: &PsiSet<T>, sigma_s2: T) -> CMat<T> {
    let m = psi.streams();
    let sum = psi.psi_inv.iter().fold(CMat::<T>::zeros(m, m), |acc, p| acc + p);
    scale(&sum, sigma_s2 / lit(psi.n_c() as f64))
}

pub fn fdle_design<T: Real>(psi: &PsiSet<T>, q: &[CMat<T>], k: &[CMat<T>], sigma_s2: T) -> Result<EqualizerDesign<T>> {
    check_system(psi, q, k)?;
    let m = psi.streams();
    Ok(EqualizerDesign {
        fff_tones: wiener(q, k, sigma_s2)?,
        fbf_taps: vec![CMat::<T>::identity(m, m)],
        n_fb: 0,
        error_diag: diag_of(&linear_error_covariance(psi, sigma_s2)),
        mode: ReceiverMode::Linear,
    })
}

/// Block Toeplitz-Hermitian system of the feedback design.
#[derive(Debug, Clone)]
pub struct ZSystem<T: Real> {
    /// `z_0 .. z_{N_fb}`.
    pub z_blocks: Vec<CMat<T>>,
    pub z_matrix: CMat<T>,
    /// Top-left `M × M` block of `Z⁻¹`.
    pub u11: CMat<T>,
    /// `U₁₁⁻¹ = Z₁₁ − Z₁₂ Z₂₂⁻¹ Z₁₂†`.
    pub u11_inv: CMat<T>,
}

impl<T: Real> ZSystem<T> {
    pub fn streams(&self) -> usize {
        self.z_blocks[0].nrows()
    }

    pub fn n_fb(&self) -> usize {
        self.z_blocks.len() - 1
    }

    pub fn z11(&self) -> &CMat<T> {
        &self.z_blocks[0]
    }
}

/// `z_n = Σ_k Ψ_k⁻¹ e^{j2πkn/N_c}`.
pub fn z_block<T: Real>(psi_inv: &[CMat<T>], n: usize) -> CMat<T> {
    let n_c = psi_inv.len();
    let m = psi_inv[0].nrows();
    let two_pi = lit::<T>(std::f64::consts::TAU);
    psi_inv.iter().enumerate().fold(CMat::<T>::zeros(m, m), |acc, (k, p)| {
        let phase = two_pi * lit(((k * n) % n_c) as f64) / lit(n_c as f64);
        acc + p * cis(phase)
    })
}

pub fn build_z<T: Real>(psi: &PsiSet<T>, n_fb: usize) -> Result<ZSystem<T>> {
    let n_c = psi.n_c();
    if n_fb >= n_c {
        return Err(Error::InvalidParameter(format!("feedback length {n_fb} must be below {n_c}")));
    }
    let m = psi.streams();
    let z_blocks: Vec<CMat<T>> = (0..=n_fb).map(|n| hermitian_fix(z_block(&psi.psi_inv, n), n)).collect();
    let size = (n_fb + 1) * m;
    let mut z = CMat::<T>::zeros(size, size);
    for i in 0..=n_fb {
        for j in 0..=n_fb {
            let block = if j >= i { z_blocks[j - i].clone() } else { z_blocks[i - j].adjoint() };
            z.view_mut((i * m, j * m), (m, m)).copy_from(&block);
        }
    }
    let u11_inv = if n_fb == 0 {
        z_blocks[0].clone()
    } else {
        let z12 = z.view((0, m), (m, n_fb * m)).into_owned();
        let z22 = z.view((m, m), (n_fb * m, n_fb * m)).into_owned();
        hermitian_part(&(&z_blocks[0] - &z12 * solve_hpd(&z22, &z12.adjoint())?))
    };
    let u11 = inverse_hpd(&u11_inv)?;
    Ok(ZSystem { z_blocks, z_matrix: z, u11, u11_inv })
}

fn hermitian_fix<T: Real>(z: CMat<T>, n: usize) -> CMat<T> {
    if n == 0 {
        hermitian_part(&z)
    } else {
        z
    }
}

/// MMSE FD-DFE: unit-lower `C_{t,0} = L⁻¹` from `U₁₁⁻¹ = L D L†`, remaining
/// taps `−C_{t,0} Z₁₂ Z₂₂⁻¹`, per-stream error `(σ_s²/N_c) D`.
pub fn fddfe_design<T: Real>(
    z: &ZSystem<T>,
    psi: &PsiSet<T>,
    q: &[CMat<T>],
    k: &[CMat<T>],
    sigma_s2: T,
) -> Result<EqualizerDesign<T>> {
    check_system(psi, q, k)?;
    let m = z.streams();
    let n_fb = z.n_fb();
    let n_c = psi.n_c();
    let fact = ldl(&z.u11_inv)?;
    let c0 = fact
        .unit_lower
        .clone()
        .solve_lower_triangular(&CMat::<T>::identity(m, m))
        .ok_or_else(|| Error::Singular("unit lower factor".into()))?;
    let mut taps = vec![c0.clone()];
    if n_fb > 0 {
        let z12 = z.z_matrix.view((0, m), (m, n_fb * m)).into_owned();
        let z22 = z.z_matrix.view((m, m), (n_fb * m, n_fb * m)).into_owned();
        let cond = condition_hpd(&z22);
        if to_f64(cond) > 1e12 {
            return Err(Error::IllConditioned(to_f64(cond)));
        }
        // Z₁₂ Z₂₂⁻¹ = (Z₂₂⁻¹ Z₁₂†)†
        let rest = -(&c0 * solve_hpd(&z22, &z12.adjoint())?.adjoint());
        for n in 0..n_fb {
            taps.push(rest.view((0, n * m), (m, m)).into_owned());
        }
    }
    let c_tones = taps_spectrum(&taps, n_c);
    let lin = wiener(q, k, sigma_s2)?;
    let fff = c_tones.iter().zip(&lin).map(|(c, w)| c * w).collect();
    let factor = sigma_s2 / lit(n_c as f64);
    Ok(EqualizerDesign {
        fff_tones: fff,
        fbf_taps: taps,
        n_fb,
        error_diag: fact.diag.iter().map(|&d| d * factor).collect(),
        mode: ReceiverMode::DecisionFeedback,
    })
}

/// `C_k = Σ_n C_{t,n} e^{-j2πnk/N_c}`.
pub fn taps_spectrum<T: Real>(taps: &[CMat<T>], n_c: usize) -> Vec<CMat<T>> {
    let two_pi = lit::<T>(std::f64::consts::TAU);
    let (r, c) = taps[0].shape();
    (0..n_c)
        .map(|k| {
            taps.iter().enumerate().fold(CMat::<T>::zeros(r, c), |acc, (n, t)| {
                let phase = -two_pi * lit(((n * k) % n_c) as f64) / lit(n_c as f64);
                acc + t * cis(phase)
            })
        })
        .collect()
}

/// `(σ_s²/N_c) Σ_k C_k Ψ_k⁻¹ C_k†` for arbitrary feedback taps with the
/// matching MMSE feedforward filter.
pub fn error_covariance_for_taps<T: Real>(psi: &PsiSet<T>, taps: &[CMat<T>], sigma_s2: T) -> CMat<T> {
    let m = psi.streams();
    let spectrum = taps_spectrum(taps, psi.n_c());
    let sum = spectrum
        .iter()
        .zip(&psi.psi_inv)
        .fold(CMat::<T>::zeros(m, m), |acc, (c, p)| acc + c * p * c.adjoint());
    scale(&sum, sigma_s2 / lit(psi.n_c() as f64))
}

fn check_block<T: Real>(y: &CMat<T>, design: &EqualizerDesign<T>) -> Result<()> {
    let n_d = design.fff_tones[0].ncols();
    if y.shape() != (n_d, design.n_c()) {
        return Err(Error::InvalidDimension(format!(
            "received block {:?} does not match {}×{}",
            y.shape(),
            n_d,
            design.n_c()
        )));
    }
    Ok(())
}

/// Feedforward filtering: per-tone multiply, back to the time domain.
/// Input `N_d × N_c`, output `M × N_c`.
pub fn apply_fff<T: Real>(y: &CMat<T>, design: &EqualizerDesign<T>, plan: &DftPlan<T>) -> Result<CMat<T>> {
    check_block(y, design)?;
    let yf = plan.forward(y);
    let m = design.streams();
    let mut out = CMat::<T>::zeros(m, design.n_c());
    for (k, w) in design.fff_tones.iter().enumerate() {
        out.set_column(k, &(w * yf.column(k)));
    }
    Ok(plan.inverse(&out))
}

/// Linear equalization; soft symbol estimates `M × N_c`.
pub fn apply_fdle<T: Real>(y: &CMat<T>, design: &EqualizerDesign<T>) -> Result<CMat<T>> {
    let plan = DftPlan::new(design.n_c())?;
    apply_fff(y, design, &plan)
}

/// Source of the fed-back symbols.
#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a, T: Real> {
    /// Own decisions; the last `N_fb` vectors of the previous wrap come from
    /// the known bootstrap symbols (`M × N_fb`).
    Sliced { bootstrap: Option<&'a CMat<T>> },
    /// Transmitted symbols (`M × N_c`) replace every decision.
    Genie { symbols: &'a CMat<T> },
}

#[derive(Debug, Clone)]
pub struct DfeOutput<T: Real> {
    /// Feedback-corrected soft values `ȳ_n(m)`.
    pub soft: CMat<T>,
    pub decisions: CMat<T>,
}

/// Decision-feedback detection of one block, symbol by symbol and stream by
/// stream within each instant.
pub fn apply_fddfe<T: Real, S: Fn(Complex<T>) -> Complex<T>>(
    y: &CMat<T>,
    design: &EqualizerDesign<T>,
    slicer: S,
    feedback: Feedback<'_, T>,
) -> Result<DfeOutput<T>> {
    let plan = DftPlan::new(design.n_c())?;
    let yhat = apply_fff(y, design, &plan)?;
    let (m, n_c, n_fb) = (design.streams(), design.n_c(), design.n_fb);
    let mut fed = CMat::<T>::zeros(m, n_c);
    match feedback {
        Feedback::Sliced { bootstrap } => {
            if n_fb > 0 {
                let boot = bootstrap.ok_or_else(|| {
                    Error::Configuration("bootstrap symbols are required when feedback taps exist".into())
                })?;
                if boot.shape() != (m, n_fb) {
                    return Err(Error::InvalidDimension(format!("bootstrap must be {m}×{n_fb}")));
                }
                fed.view_mut((0, n_c - n_fb), (m, n_fb)).copy_from(boot);
            }
        }
        Feedback::Genie { symbols } => {
            if symbols.shape() != (m, n_c) {
                return Err(Error::InvalidDimension("genie symbols have the wrong shape".into()));
            }
            fed.copy_from(symbols);
        }
    }
    let genie = matches!(feedback, Feedback::Genie { .. });
    let b = design.feedback_taps();
    let mut soft = CMat::<T>::zeros(m, n_c);
    let mut decisions = CMat::<T>::zeros(m, n_c);
    let pilot_start = n_c - n_fb;
    for n in 0..n_c {
        for s in 0..m {
            let mut v = yhat[(s, n)];
            for j in 0..s {
                v -= b[0][(s, j)] * fed[(j, n)];
            }
            for (l, bl) in b.iter().enumerate().skip(1) {
                let idx = (n + n_c - l) % n_c;
                for j in 0..m {
                    v -= bl[(s, j)] * fed[(j, idx)];
                }
            }
            soft[(s, n)] = v;
            let d = slicer(v);
            decisions[(s, n)] = d;
            if !genie && n < pilot_start {
                fed[(s, n)] = d;
            }
        }
    }
    Ok(DfeOutput { soft, decisions })
}
