//! Waveforms, short-time Fourier analysis and synthesis, and the log-Mel
//! feature front end.

mod export;
mod io;
mod mel;
mod norm;

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::autodiff::complex::{CVar, ComplexTensor};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use export::{magnitude_db, spectrogram_csv, spectrogram_pgm, write_spectrogram_csv, write_spectrogram_pgm};
pub use io::{read_audio, read_raw, read_wav, write_raw, write_wav, SampleFormat};
pub use mel::MelFilterbank;
pub use norm::Normalizer;

/// Planar multichannel audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidArgument("waveform has no channels".into()));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("channels differ in length".into()));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Channels reordered (or subset) by index.
    pub fn select(&self, order: &[usize]) -> Result<Self> {
        let chans = order
            .iter()
            .map(|&c| {
                self.channels
                    .get(c)
                    .cloned()
                    .ok_or(Error::ChannelMismatch {
                        expected: self.channels.len(),
                        got: c + 1,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.sample_rate, chans)
    }
}

/// Framing and transform sizes, in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftParams {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub shift: usize,
    pub fft_size: usize,
}

impl StftParams {
    pub fn new(sample_rate: u32, frame_len: usize, shift: usize, fft_size: usize) -> Result<Self> {
        if frame_len == 0 || shift == 0 || fft_size < frame_len {
            return Err(Error::InvalidArgument(format!(
                "invalid STFT framing: frame {frame_len}, shift {shift}, fft {fft_size}"
            )));
        }
        Ok(Self {
            sample_rate,
            frame_len,
            shift,
            fft_size,
        })
    }

    /// Framing from durations in milliseconds.
    pub fn from_ms(sample_rate: u32, frame_ms: f64, shift_ms: f64, fft_size: usize) -> Result<Self> {
        let samples = |ms: f64| (ms * sample_rate as f64 / 1000.0).round() as usize;
        Self::new(sample_rate, samples(frame_ms), samples(shift_ms), fft_size)
    }

    /// 16 kHz, 25 ms Hamming window, 10 ms shift, 512-point FFT.
    pub fn full() -> Self {
        Self::from_ms(16_000, 25.0, 10.0, 512).expect("valid")
    }

    /// 8 kHz, 8 ms window, 4 ms shift, 64-point FFT.
    pub fn tiny() -> Self {
        Self::new(8_000, 64, 32, 64).expect("valid")
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `1 + ⌊(N − frame)/shift⌋`; signals shorter than a frame are zero-padded to one.
    pub fn num_frames(&self, n: usize) -> usize {
        1 + n.saturating_sub(self.frame_len) / self.shift
    }

    /// Number of samples [`istft`] reconstructs from `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        (frames - 1) * self.shift + self.frame_len
    }

    pub fn bin_hz(&self, f: usize) -> f64 {
        f as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn window(&self) -> Vec<f64> {
        hamming(self.frame_len)
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Multichannel STFT, T×F×C.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelStft {
    pub coeffs: ComplexTensor,
    pub params: StftParams,
}

impl MultichannelStft {
    pub fn frames(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.coeffs.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.coeffs.shape()[2]
    }

    /// The T×F spectrogram of channel `c`.
    pub fn channel(&self, c: usize) -> ComplexTensor {
        let (t, f, nc) = (self.frames(), self.bins(), self.channels());
        let pick = |x: &Tensor| Tensor::from_fn(&[t, f], |i| x.data()[i * nc + c]);
        ComplexTensor {
            re: pick(&self.coeffs.re),
            im: pick(&self.coeffs.im),
        }
    }

    /// Builds T×F×C from per-channel T×F spectrograms.
    pub fn from_channels(chans: &[ComplexTensor], params: StftParams) -> Result<Self> {
        let first = chans
            .first()
            .ok_or_else(|| Error::InvalidArgument("no channels".into()))?;
        let shape = first.shape().to_vec();
        if chans.iter().any(|c| c.shape() != shape.as_slice()) || shape.len() != 2 {
            return Err(Error::InvalidArgument("channel spectrograms differ in shape".into()));
        }
        let nc = chans.len();
        let n = first.len();
        let build = |part: fn(&ComplexTensor) -> &Tensor| {
            let mut data = vec![0.0; n * nc];
            for (c, ch) in chans.iter().enumerate() {
                for (i, &v) in part(ch).data().iter().enumerate() {
                    data[i * nc + c] = v;
                }
            }
            Tensor::new(vec![shape[0], shape[1], nc], data)
        };
        Ok(Self {
            coeffs: ComplexTensor::new(build(|c| &c.re)?, build(|c| &c.im)?)?,
            params,
        })
    }

    /// Channels reordered (or subset) by index.
    pub fn select(&self, order: &[usize]) -> Result<Self> {
        let chans = order
            .iter()
            .map(|&c| {
                if c < self.channels() {
                    Ok(self.channel(c))
                } else {
                    Err(Error::ChannelMismatch {
                        expected: self.channels(),
                        got: c + 1,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(&chans, self.params)
    }
}

struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Transforms {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// One-sided STFT of a single channel, T×F.
pub fn stft_channel(samples: &[f64], params: &StftParams) -> Result<ComplexTensor> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty waveform".into()));
    }
    let fft = Transforms::new(params.fft_size).forward;
    let win = params.window();
    let t = params.num_frames(samples.len());
    let f = params.num_bins();
    let mut re = Vec::with_capacity(t * f);
    let mut im = Vec::with_capacity(t * f);
    let mut buf = vec![Complex::new(0.0, 0.0); params.fft_size];
    for frame in 0..t {
        let start = frame * params.shift;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = if i < params.frame_len {
                samples.get(start + i).copied().unwrap_or(0.0) * win[i]
            } else {
                0.0
            };
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for b in &buf[..f] {
            re.push(b.re);
            im.push(b.im);
        }
    }
    ComplexTensor::new(Tensor::new(vec![t, f], re)?, Tensor::new(vec![t, f], im)?)
}

/// Multichannel STFT of `w`.
pub fn stft(w: &Waveform, params: &StftParams) -> Result<MultichannelStft> {
    let chans = w
        .channels()
        .iter()
        .map(|c| stft_channel(c, params))
        .collect::<Result<Vec<_>>>()?;
    MultichannelStft::from_channels(&chans, *params)
}

/// Weighted overlap-add inverse of [`stft_channel`]: each frame is inverse
/// transformed, windowed again, summed, and divided by `Σ w²`.
pub fn istft(x: &ComplexTensor, params: &StftParams) -> Result<Vec<f64>> {
    let (t, f) = x.re.dims2()?;
    if f != params.num_bins() {
        return Err(Error::InvalidArgument(format!(
            "spectrogram has {f} bins, framing expects {}",
            params.num_bins()
        )));
    }
    let n = params.fft_size;
    let ifft = Transforms::new(n).inverse;
    let win = params.window();
    let len = params.signal_len(t);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for frame in 0..t {
        for k in 0..f {
            buf[k] = Complex::new(x.re.at2(frame, k), x.im.at2(frame, k));
        }
        for k in f..n {
            buf[k] = buf[n - k].conj();
        }
        buf[0].im = 0.0;
        if n % 2 == 0 {
            buf[n / 2].im = 0.0;
        }
        ifft.process(&mut buf);
        let start = frame * params.shift;
        for i in 0..params.frame_len {
            out[start + i] += buf[i].re / n as f64 * win[i];
            norm[start + i] += win[i] * win[i];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-12 {
            *o /= w;
        }
    }
    Ok(out)
}

/// `|x|²` elementwise.
pub fn power_spectrum(x: &ComplexTensor) -> Tensor {
    let data = x
        .re
        .data()
        .iter()
        .zip(x.im.data())
        .map(|(r, i)| r * r + i * i)
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// `log(max(p·melᵀ, floor))` for a T×F power spectrogram node.
pub fn log_mel(g: &mut Graph, power: Var, fb: &MelFilterbank, floor: f64) -> Result<Var> {
    let w = g.constant(fb.weights().transpose2()?);
    let mel = g.matmul(power, w)?;
    let clamped = g.clamp_min(mel, floor);
    Ok(g.log(clamped))
}

/// Normalized log-Mel features of an enhanced T×F spectrogram.
pub fn features(g: &mut Graph, x: CVar, fb: &MelFilterbank, floor: f64, norm: Option<(Var, Var)>) -> Result<Var> {
    let p = g.abs_sq(x)?;
    let feats = log_mel(g, p, fb, floor)?;
    match norm {
        Some((mean, std)) => {
            let centered = g.sub(feats, mean)?;
            g.div(centered, std)
        }
        None => Ok(feats),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn full_profile_has_257_bins() {
        let p = StftParams::full();
        assert_eq!((p.frame_len, p.shift, p.num_bins()), (400, 160, 257));
        assert_eq!(StftParams::tiny().num_bins(), 33);
    }

    #[test]
    fn frame_count_and_padding() {
        let p = StftParams::new(8000, 8, 4, 8).unwrap();
        assert_eq!(p.num_frames(8), 1);
        assert_eq!(p.num_frames(15), 2);
        assert_eq!(p.num_frames(16), 3);
        assert_eq!(p.num_frames(3), 1);
        assert!(stft_channel(&[], &p).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let p = StftParams::tiny();
        let x = stft_channel(&vec![0.0; 300], &p).unwrap();
        assert!(x.re.data().iter().chain(x.im.data()).all(|&v| v == 0.0));
        assert!(istft(&x, &p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn naive_dft_agrees() {
        let p = StftParams::new(8000, 20, 10, 32).unwrap();
        let s: Vec<f64> = (0..60).map(|n| (2.0 * PI * 1000.0 * n as f64 / 8000.0).sin() + 0.1 * n as f64 / 60.0).collect();
        let x = stft_channel(&s, &p).unwrap();
        let w = hamming(20);
        for t in 0..p.num_frames(60) {
            let mut best = (0, 0.0);
            for k in 0..p.num_bins() {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..20 {
                    let ang = -2.0 * PI * (k * n) as f64 / 32.0;
                    re += s[t * 10 + n] * w[n] * ang.cos();
                    im += s[t * 10 + n] * w[n] * ang.sin();
                }
                assert!((x.re.at2(t, k) - re).abs() < 1e-12 && (x.im.at2(t, k) - im).abs() < 1e-12);
                let mag = re * re + im * im;
                if mag > best.1 {
                    best = (k, mag);
                }
            }
            assert_eq!(best.0, 4);
        }
    }

    #[test]
    fn power_of_three_four_i() {
        let x = ComplexTensor::new(Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])).unwrap();
        assert_eq!(power_spectrum(&x).data(), &[25.0]);
    }
}
