use crate::channel::ChannelRealization;
use crate::equalizer::NoiseLevels;
use crate::error::{Error, Result};
use crate::precoder::PrecoderSet;
use crate::scalar::{lit, CMat, Real};
use crate::spectral::{tones_to_taps, DftPlan};
use nalgebra::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const QPSK_BITS: usize = 2;

/// Gray-mapped unit-energy QPSK: the first bit of a pair picks the sign of the
/// real part, the second the sign of the imaginary part, `0 → +`.
pub fn qpsk_map<T: Real>(bits: &[u8]) -> Result<Vec<Complex<T>>> {
    if bits.len() % QPSK_BITS != 0 {
        return Err(Error::InvalidLength(format!("{} bits is not a whole number of symbols", bits.len())));
    }
    let a = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let level = |b: u8| if b == 0 { a } else { -a };
    Ok(bits.chunks(QPSK_BITS).map(|p| Complex::new(level(p[0]), level(p[1]))).collect())
}

/// Nearest constellation point. A zero coordinate goes to the negative level.
pub fn qpsk_decide<T: Real>(z: Complex<T>) -> Complex<T> {
    let a = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let pick = |v: T| if v > T::zero() { a } else { -a };
    Complex::new(pick(z.re), pick(z.im))
}

pub fn qpsk_slice<T: Real>(soft: &[Complex<T>]) -> Vec<u8> {
    soft.iter()
        .flat_map(|z| [u8::from(z.re <= T::zero()), u8::from(z.im <= T::zero())])
        .collect()
}

/// Time-domain noise of one block, drawn once and shared by both transmit paths.
#[derive(Debug, Clone)]
pub struct BlockNoise<T: Real> {
    /// `v`, `N_r × N_c`.
    pub relay: CMat<T>,
    /// `u`, `N_d × N_c`.
    pub dest: CMat<T>,
}

pub(crate) fn complex_gaussian<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat<T> {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(lit(re * s), lit(im * s))
    })
}

impl<T: Real> BlockNoise<T> {
    pub fn draw<R: Rng>(rng: &mut R, n_r: usize, n_d: usize, n_c: usize, noise: &NoiseLevels<T>) -> Self {
        let relay = complex_gaussian(rng, n_r, n_c, crate::scalar::to_f64(noise.sigma_v2));
        let dest = complex_gaussian(rng, n_d, n_c, crate::scalar::to_f64(noise.sigma_u2));
        Self { relay, dest }
    }

    pub fn zero(n_r: usize, n_d: usize, n_c: usize) -> Self {
        Self { relay: CMat::zeros(n_r, n_c), dest: CMat::zeros(n_d, n_c) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransmitPath {
    /// Per-tone circular model.
    #[default]
    Frequency,
    /// Cyclic prefixes, linear convolution with the channel taps, prefix removal.
    Time,
}

/// Cyclic prefix lengths `(N_g,s, N_g,r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CyclicPrefix {
    pub source: usize,
    pub relay: usize,
}

fn check_shapes<T: Real>(s: &CMat<T>, set: &PrecoderSet<T>, ch: &ChannelRealization<T>, noise: &BlockNoise<T>) -> Result<()> {
    let n_c = ch.n_c;
    if set.n_c() != n_c || s.shape() != (set.streams(), n_c) {
        return Err(Error::InvalidDimension(format!(
            "symbol block {:?} does not fit {} streams on {} tones",
            s.shape(),
            set.streams(),
            n_c
        )));
    }
    if noise.relay.shape() != (ch.dims.n_r, n_c) || noise.dest.shape() != (ch.dims.n_d, n_c) {
        return Err(Error::InvalidDimension("noise block shapes disagree with the link".into()));
    }
    Ok(())
}

/// Sends one `M × N_c` block over both hops; returns the `N_d × N_c`
/// destination block after prefix removal.
pub fn transmit_block<T: Real>(
    s: &CMat<T>,
    set: &PrecoderSet<T>,
    ch: &ChannelRealization<T>,
    noise: &BlockNoise<T>,
    path: TransmitPath,
    cp: CyclicPrefix,
) -> Result<CMat<T>> {
    check_shapes(s, set, ch, noise)?;
    match path {
        TransmitPath::Frequency => transmit_frequency(s, set, ch, noise),
        TransmitPath::Time => {
            if cp.source + 1 < ch.sr_taps.len() || cp.relay + 1 < ch.rd_taps.len() {
                return Err(Error::InvalidLength("cyclic prefix shorter than the channel memory".into()));
            }
            transmit_time(s, set, ch, noise, cp)
        }
    }
}

fn transmit_frequency<T: Real>(s: &CMat<T>, set: &PrecoderSet<T>, ch: &ChannelRealization<T>, noise: &BlockNoise<T>) -> Result<CMat<T>> {
    let plan = DftPlan::new(ch.n_c)?;
    let sf = plan.forward(s);
    let vf = plan.forward(&noise.relay);
    let uf = plan.forward(&noise.dest);
    let mut yf = CMat::<T>::zeros(ch.dims.n_d, ch.n_c);
    for k in 0..ch.n_c {
        let r = &ch.sr_tones[k] * (&set.source_tones[k] * sf.column(k)) + vf.column(k);
        let y = &ch.rd_tones[k] * (&set.relay_tones[k] * r) + uf.column(k);
        yf.set_column(k, &y);
    }
    Ok(plan.inverse(&yf))
}

fn circular<T: Real>(taps: &[CMat<T>], x: &CMat<T>) -> CMat<T> {
    let n = x.ncols();
    let mut out = CMat::<T>::zeros(taps[0].nrows(), n);
    for i in 0..n {
        let mut acc = out.column(i).into_owned();
        for (l, t) in taps.iter().enumerate() {
            acc += t * x.column((i + n - l % n) % n);
        }
        out.set_column(i, &acc);
    }
    out
}

fn with_prefix<T: Real>(x: &CMat<T>, cp: usize) -> CMat<T> {
    let n = x.ncols();
    CMat::from_fn(x.nrows(), n + cp, |r, c| x[(r, (c + n - cp % n) % n)])
}

/// Linear convolution of the prefixed stream, keeping the `n` samples after the prefix.
fn linear_strip<T: Real>(taps: &[CMat<T>], x: &CMat<T>, cp: usize, n: usize) -> CMat<T> {
    let mut out = CMat::<T>::zeros(taps[0].nrows(), n);
    for i in 0..n {
        let t_abs = i + cp;
        let mut acc = out.column(i).into_owned();
        for (l, t) in taps.iter().enumerate().take(t_abs + 1) {
            acc += t * x.column(t_abs - l);
        }
        out.set_column(i, &acc);
    }
    out
}

fn transmit_time<T: Real>(
    s: &CMat<T>,
    set: &PrecoderSet<T>,
    ch: &ChannelRealization<T>,
    noise: &BlockNoise<T>,
    cp: CyclicPrefix,
) -> Result<CMat<T>> {
    let n = ch.n_c;
    let p_taps = tones_to_taps(&set.source_tones)?;
    let a_taps = tones_to_taps(&set.relay_tones)?;
    let x = with_prefix(&circular(&p_taps, s), cp.source);
    let r = linear_strip(&ch.sr_taps, &x, cp.source, n) + &noise.relay;
    let t = with_prefix(&circular(&a_taps, &r), cp.relay);
    Ok(linear_strip(&ch.rd_taps, &t, cp.relay, n) + &noise.dest)
}
