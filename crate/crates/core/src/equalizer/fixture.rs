use super::{EqualizerDesign, ReceiverMode};
use crate::channel::FixtureReader;
use crate::error::{Error, Result};
use crate::scalar::{to_f64, CMat, Real};
use std::fmt::Write as _;

const MAGIC: &str = "# scfde equalizer v1";

/// Same line-oriented layout as channel fixtures: header fields, then one
/// `re im` pair per line (feedforward tones, then feedback taps).
pub fn design_to_fixture<T: Real>(d: &EqualizerDesign<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "mode {}", d.mode);
    let _ = writeln!(out, "dims {} {} {} {}", d.streams(), d.fff_tones[0].ncols(), d.n_c(), d.n_fb);
    let diag: Vec<String> = d.error_diag.iter().map(|v| format!("{:e}", to_f64(*v))).collect();
    let _ = writeln!(out, "error_diag {}", diag.join(" "));
    for m in d.fff_tones.iter().chain(&d.fbf_taps) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = writeln!(out, "{:e} {:e}", to_f64(m[(i, j)].re), to_f64(m[(i, j)].im));
            }
        }
    }
    out
}

pub fn design_from_fixture<T: Real>(text: &str) -> Result<EqualizerDesign<T>> {
    let mut r = FixtureReader::new(text, MAGIC)?;
    let mode = match r.field("mode")?.as_slice() {
        [m] => m.parse::<ReceiverMode>().map_err(|e| Error::Format(e.to_string()))?,
        _ => return Err(Error::Format("bad mode line".into())),
    };
    let d = r.usizes("dims", 4)?;
    let (m, n_d, n_c, n_fb) = (d[0], d[1], d[2], d[3]);
    let error_diag = r.reals::<T>("error_diag")?;
    if error_diag.len() != m {
        return Err(Error::Format(format!("error_diag needs {m} values")));
    }
    let fff_tones = (0..n_c).map(|_| r.matrix(m, n_d)).collect::<Result<Vec<CMat<T>>>>()?;
    let fbf_taps = (0..=n_fb).map(|_| r.matrix(m, m)).collect::<Result<Vec<CMat<T>>>>()?;
    r.finish()?;
    Ok(EqualizerDesign { fff_tones, fbf_taps, n_fb, error_diag, mode })
}
