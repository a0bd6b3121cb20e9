//! Frequency-selective Rayleigh block-fading channels for the two hops.
//!
//! Taps follow an exponential power-delay profile normalized to unit total
//! power per antenna pair, so `E[‖tone_k‖²_F] = rows · cols` on every tone.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real, CMat};
use crate::spectral::{sorted_svd, taps_to_tones};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Antenna counts `(N_s, N_r, N_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDims {
    pub n_s: usize,
    pub n_r: usize,
    pub n_d: usize,
}

impl LinkDims {
    pub fn new(n_s: usize, n_r: usize, n_d: usize) -> Self {
        Self { n_s, n_r, n_d }
    }

    pub fn max_streams(&self) -> usize {
        self.n_s.min(self.n_r).min(self.n_d)
    }
}

/// Exponential power-delay profile: tap `l` carries power proportional to
/// `exp(-l / decay)`, scaled so the taps sum to `normalization`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingProfile {
    pub length: usize,
    pub decay: f64,
    pub normalization: f64,
}

impl FadingProfile {
    pub fn exponential(length: usize, decay: f64) -> Self {
        Self { length, decay, normalization: 1.0 }
    }

    pub fn tap_powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.length).map(|l| (-(l as f64) / self.decay).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| self.normalization * p / total).collect()
    }
}

/// One block-fading realization of the source→relay and relay→destination hops.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T: Real> {
    pub dims: LinkDims,
    pub n_c: usize,
    pub seed: Option<u64>,
    /// `G_{t,l}`, each `N_r × N_s`.
    pub sr_taps: Vec<CMat<T>>,
    /// `H_{t,l}`, each `N_d × N_r`.
    pub rd_taps: Vec<CMat<T>>,
    pub sr_tones: Vec<CMat<T>>,
    pub rd_tones: Vec<CMat<T>>,
    /// Per-tone singular values of `G_k`, ascending.
    pub sr_singulars: Vec<Vec<T>>,
    /// Per-tone singular values of `H_k`, ascending.
    pub rd_singulars: Vec<Vec<T>>,
}

fn singular_values<T: Real>(tones: &[CMat<T>]) -> Result<Vec<Vec<T>>> {
    tones
        .iter()
        .map(|t| sorted_svd(t).map(|s| s.singular_values.iter().copied().collect()))
        .collect()
}

impl<T: Real> ChannelRealization<T> {
    /// Builds the tone-domain view from time-domain taps.
    pub fn from_taps(
        dims: LinkDims,
        n_c: usize,
        sr_taps: Vec<CMat<T>>,
        rd_taps: Vec<CMat<T>>,
    ) -> Result<Self> {
        if sr_taps.iter().any(|t| t.shape() != (dims.n_r, dims.n_s))
            || rd_taps.iter().any(|t| t.shape() != (dims.n_d, dims.n_r))
        {
            return Err(Error::InvalidDimension("tap shapes disagree with antenna counts".into()));
        }
        let sr_tones = taps_to_tones(&sr_taps, n_c)?;
        let rd_tones = taps_to_tones(&rd_taps, n_c)?;
        let sr_singulars = singular_values(&sr_tones)?;
        let rd_singulars = singular_values(&rd_tones)?;
        Ok(Self { dims, n_c, seed: None, sr_taps, rd_taps, sr_tones, rd_tones, sr_singulars, rd_singulars })
    }

    /// Flat channel with identical tones on both hops.
    pub fn flat(dims: LinkDims, n_c: usize, g: CMat<T>, h: CMat<T>) -> Result<Self> {
        Self::from_taps(dims, n_c, vec![g], vec![h])
    }
}

fn draw_taps<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, profile: &FadingProfile) -> Vec<CMat<T>> {
    profile
        .tap_powers()
        .into_iter()
        .map(|p| {
            let s = (p / 2.0).sqrt();
            CMat::from_fn(rows, cols, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(lit(re * s), lit(im * s))
            })
        })
        .collect()
}

/// Draws both hops; tap entries are independent `CN(0, p_l)`.
pub fn generate_channel<T: Real, R: Rng>(
    rng: &mut R,
    dims: LinkDims,
    profiles: (FadingProfile, FadingProfile),
    n_c: usize,
) -> Result<ChannelRealization<T>> {
    if dims.n_s == 0 || dims.n_r == 0 || dims.n_d == 0 {
        return Err(Error::InvalidDimension("antenna counts must be at least 1".into()));
    }
    let (sr, rd) = profiles;
    if sr.length == 0 || rd.length == 0 || sr.length > n_c || rd.length > n_c {
        return Err(Error::InvalidLength(format!(
            "profile lengths ({}, {}) must be in 1..={}",
            sr.length, rd.length, n_c
        )));
    }
    let sr_taps = draw_taps(rng, dims.n_r, dims.n_s, &sr);
    let rd_taps = draw_taps(rng, dims.n_d, dims.n_r, &rd);
    ChannelRealization::from_taps(dims, n_c, sr_taps, rd_taps)
}

/// [`generate_channel`] from a fresh ChaCha8 stream; records the seed.
pub fn generate_seeded<T: Real>(
    seed: u64,
    dims: LinkDims,
    profiles: (FadingProfile, FadingProfile),
    n_c: usize,
) -> Result<ChannelRealization<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ch = generate_channel(&mut rng, dims, profiles, n_c)?;
    ch.seed = Some(seed);
    Ok(ch)
}

/// Per-tone stream gains `(g_km, h_km)`, shape `N_c × M`; stream 0 holds the
/// largest singular value of each tone.
pub fn tone_gains<T: Real>(ch: &ChannelRealization<T>, m_streams: usize) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if m_streams == 0 || m_streams > ch.dims.max_streams() {
        return Err(Error::InvalidDimension(format!(
            "{} streams exceed min antenna count {}",
            m_streams,
            ch.dims.max_streams()
        )));
    }
    let pick = |sv: &[Vec<T>]| {
        DMatrix::from_fn(ch.n_c, m_streams, |k, m| {
            let s = &sv[k];
            s[s.len() - 1 - m]
        })
    };
    Ok((pick(&ch.sr_singulars), pick(&ch.rd_singulars)))
}

const FIXTURE_MAGIC: &str = "# scfde channel v1";

fn write_matrix<T: Real>(out: &mut String, m: &CMat<T>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{} {}", to_f64(z.re), to_f64(z.im));
        }
    }
}

/// Textual fixture: a header with dims, tone count, seed and tap counts, then
/// one `re im` pair per line (source taps first, row-major within each tap).
pub fn to_fixture<T: Real>(ch: &ChannelRealization<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FIXTURE_MAGIC}");
    let _ = writeln!(out, "dims {} {} {}", ch.dims.n_s, ch.dims.n_r, ch.dims.n_d);
    let _ = writeln!(out, "n_c {}", ch.n_c);
    match ch.seed {
        Some(s) => {
            let _ = writeln!(out, "seed {s}");
        }
        None => {
            let _ = writeln!(out, "seed none");
        }
    }
    let _ = writeln!(out, "sr_taps {}", ch.sr_taps.len());
    let _ = writeln!(out, "rd_taps {}", ch.rd_taps.len());
    for t in ch.sr_taps.iter().chain(&ch.rd_taps) {
        write_matrix(&mut out, t);
    }
    out
}

pub(crate) struct FixtureReader<'a> {
    lines: std::iter::Filter<std::str::Lines<'a>, fn(&&str) -> bool>,
}

impl<'a> FixtureReader<'a> {
    pub(crate) fn new(text: &'a str, magic: &str) -> Result<Self> {
        fn keep(l: &&str) -> bool {
            !l.trim().is_empty()
        }
        let mut lines = text.lines().filter(keep as fn(&&str) -> bool);
        match lines.next() {
            Some(l) if l.trim() == magic => Ok(Self { lines }),
            other => Err(Error::Format(format!("expected '{magic}', found {other:?}"))),
        }
    }

    pub(crate) fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.lines.next().ok_or_else(|| Error::Format(format!("missing '{key}'")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Format(format!("expected '{key}', found '{line}'")));
        }
        Ok(parts.collect())
    }

    pub(crate) fn usizes(&mut self, key: &str, count: usize) -> Result<Vec<usize>> {
        let parts = self.field(key)?;
        if parts.len() != count {
            return Err(Error::Format(format!("'{key}' expects {count} values")));
        }
        parts
            .iter()
            .map(|p| p.parse().map_err(|_| Error::Format(format!("bad integer '{p}'"))))
            .collect()
    }

    pub(crate) fn reals<T: Real>(&mut self, key: &str) -> Result<Vec<T>> {
        self.field(key)?
            .iter()
            .map(|p| p.parse::<f64>().map(lit).map_err(|_| Error::Format(format!("bad number '{p}'"))))
            .collect()
    }

    pub(crate) fn complex<T: Real>(&mut self) -> Result<Complex<T>> {
        let line = self.lines.next().ok_or_else(|| Error::Format("truncated entries".into()))?;
        let mut it = line.split_whitespace().map(|p| p.parse::<f64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(re)), Some(Ok(im)), None) => Ok(Complex::new(lit(re), lit(im))),
            _ => Err(Error::Format(format!("bad complex entry '{line}'"))),
        }
    }

    pub(crate) fn matrix<T: Real>(&mut self, rows: usize, cols: usize) -> Result<CMat<T>> {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.complex()?;
            }
        }
        Ok(m)
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some(l) => Err(Error::Format(format!("trailing content '{l}'"))),
        }
    }
}

pub fn from_fixture<T: Real>(text: &str) -> Result<ChannelRealization<T>> {
    let mut r = FixtureReader::new(text, FIXTURE_MAGIC)?;
    let d = r.usizes("dims", 3)?;
    let dims = LinkDims::new(d[0], d[1], d[2]);
    let n_c = r.usizes("n_c", 1)?[0];
    let seed_field = r.field("seed")?;
    let seed = match seed_field.as_slice() {
        ["none"] => None,
        [s] => Some(s.parse().map_err(|_| Error::Format(format!("bad seed '{s}'")))?),
        _ => return Err(Error::Format("bad seed line".into())),
    };
    let lg = r.usizes("sr_taps", 1)?[0];
    let lh = r.usizes("rd_taps", 1)?[0];
    let sr = (0..lg).map(|_| r.matrix(dims.n_r, dims.n_s)).collect::<Result<Vec<_>>>()?;
    let rd = (0..lh).map(|_| r.matrix(dims.n_d, dims.n_r)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let mut ch = ChannelRealization::from_taps(dims, n_c, sr, rd)?;
    ch.seed = seed;
    Ok(ch)
}
