use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::complex::ComplexTensor;
use crate::error::Result;
use crate::tensor::Tensor;

/// `20·log10(max(|x|, 1e-10))` per bin, T×F.
pub fn magnitude_db(x: &ComplexTensor) -> Tensor {
    let data = x
        .re
        .data()
        .iter()
        .zip(x.im.data())
        .map(|(r, i)| 20.0 * r.hypot(*i).max(1e-10).log10())
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// CSV with header `t,f,magnitude_db`, one row per bin, t-major.
pub fn spectrogram_csv(x: &ComplexTensor) -> Result<String> {
    let db = magnitude_db(x);
    let (t, f) = db.dims2()?;
    let mut s = String::from("t,f,magnitude_db\n");
    for ti in 0..t {
        for fi in 0..f {
            writeln!(s, "{ti},{fi},{:.6}", db.at2(ti, fi)).expect("string write");
        }
    }
    Ok(s)
}

/// Binary PGM (P5) of width T and height F. Frequency increases upward; the
/// top `range_db` decibels map linearly onto 0..=255.
pub fn spectrogram_pgm(x: &ComplexTensor, range_db: f64) -> Result<Vec<u8>> {
    let db = magnitude_db(x);
    let (t, f) = db.dims2()?;
    let top = db.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{t} {f}\n255\n").into_bytes();
    for row in 0..f {
        let fi = f - 1 - row;
        for ti in 0..t {
            let v = ((db.at2(ti, fi) - (top - range_db)) / range_db).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_spectrogram_csv(path: &Path, x: &ComplexTensor) -> Result<()> {
    Ok(fs::write(path, spectrogram_csv(x)?)?)
}

pub fn write_spectrogram_pgm(path: &Path, x: &ComplexTensor) -> Result<()> {
    Ok(fs::write(path, spectrogram_pgm(x, 80.0)?)?)
}
