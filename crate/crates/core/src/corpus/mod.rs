//! Synthetic multichannel scenes with exact ground truth.
//!
//! Each character of a transcript becomes a short tone at its own frequency,
//! separated by silence. The source reaches every microphone with an integer
//! sample delay and a gain; noise is mixed in at an SNR measured on channel 0.

mod dataset;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::complex::ComplexTensor;
use crate::error::{Error, Result};
use crate::signal::{stft, StftParams, Waveform};
use crate::tensor::Tensor;

pub use dataset::{
    build_corpus, load_corpus_config, load_split, manifest_path, parse_manifest, plan_corpus, regenerate, render_manifest,
    CorpusConfig, LoadedUtterance, ManifestEntry, Split, CORPUS_CONFIG_FILE, MANIFEST_HEADER, VOCAB_FILE,
};

/// Spatial character of the additive noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    /// Independent white noise per channel.
    White,
    /// Sum of random tones, independent per channel.
    Babble,
    /// One white noise source reaching the array with its own delays and gains.
    PointSource,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Babble => "babble",
            NoiseKind::PointSource => "point",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "babble" => Ok(NoiseKind::Babble),
            "point" => Ok(NoiseKind::PointSource),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub sample_rate: u32,
    pub source_delays: Vec<usize>,
    pub source_gains: Vec<f64>,
    pub noise: NoiseKind,
    /// Used by [`NoiseKind::PointSource`] only.
    pub noise_delays: Vec<usize>,
    pub noise_gains: Vec<f64>,
    /// Channel-0 SNR in dB; `+∞` means no noise.
    pub snr_db: f64,
    pub seed: u64,
}

pub const MAX_DELAY: usize = 3;

impl SceneSpec {
    /// Draws delays and gains from `seed`. The two sources get distinct
    /// inter-channel delay patterns whenever C ≥ 2.
    pub fn random(seed: u64, channels: usize, sample_rate: u32, noise: NoiseKind, snr_db: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("scene needs at least one channel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7e);
        let draw = |rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<f64>) {
            let d = (0..channels).map(|_| rng.gen_range(0..=MAX_DELAY)).collect();
            let g = (0..channels).map(|_| rng.gen_range(0.7..=1.0)).collect();
            (d, g)
        };
        let (source_delays, source_gains) = draw(&mut rng);
        let (mut noise_delays, noise_gains) = draw(&mut rng);
        if channels >= 2 {
            let rel = |d: &[usize]| -> Vec<isize> { d.iter().map(|&x| x as isize - d[0] as isize).collect() };
            while rel(&noise_delays) == rel(&source_delays) {
                noise_delays = (0..channels).map(|_| rng.gen_range(0..=MAX_DELAY)).collect();
            }
        }
        let spec = Self {
            sample_rate,
            source_delays,
            source_gains,
            noise,
            noise_delays,
            noise_gains,
            snr_db,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn channels(&self) -> usize {
        self.source_delays.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.source_delays.len();
        if c == 0
            || self.source_gains.len() != c
            || self.noise_delays.len() != c
            || self.noise_gains.len() != c
        {
            return Err(Error::InvalidArgument("scene channel lists differ in length".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid SNR {}", self.snr_db)));
        }
        Ok(())
    }
}

/// One synthesized scene and its components.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub transcript: String,
    pub spec: SceneSpec,
    /// The C-channel mixture.
    pub noisy: Waveform,
    /// The dry source.
    pub clean: Waveform,
    /// Delayed and scaled source per channel.
    pub speech: Waveform,
    /// Noise per channel.
    pub noise: Waveform,
}

pub const LEAD_MS: f64 = 32.0;
pub const TONE_MS: f64 = 48.0;
pub const GAP_MS: f64 = 16.0;
const RAMP_MS: f64 = 4.0;

/// Tone frequency of the `k`-th character of an alphabet.
pub fn char_frequency(k: usize) -> f64 {
    437.5 + 375.0 * k as f64
}

/// Dry source for `transcript`; `alphabet` fixes each character's tone.
pub fn synth_source(transcript: &str, alphabet: &[char], sample_rate: u32, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let ms = |v: f64| (v * sample_rate as f64 / 1000.0).round() as usize;
    let ramp = ms(RAMP_MS).max(1);
    let mut out = vec![0.0; ms(LEAD_MS)];
    for ch in transcript.chars() {
        let k = alphabet
            .iter()
            .position(|&a| a == ch)
            .ok_or_else(|| Error::InvalidArgument(format!("character {ch:?} not in alphabet")))?;
        let freq = char_frequency(k) * rng.gen_range(0.99..1.01);
        let amp = rng.gen_range(0.5..1.0);
        let len = (ms(TONE_MS) as f64 * rng.gen_range(0.8..1.2)).round() as usize;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for n in 0..len {
            let env = if n < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * n as f64 / ramp as f64).cos()
            } else if len - n <= ramp {
                0.5 - 0.5 * (std::f64::consts::PI * (len - n) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let t = n as f64 / sample_rate as f64;
            out.push(amp * env * (std::f64::consts::TAU * freq * t + phase).sin());
        }
        out.extend(std::iter::repeat_n(0.0, (ms(GAP_MS) as f64 * rng.gen_range(0.8..1.2)).round() as usize));
    }
    out.extend(std::iter::repeat_n(0.0, ms(LEAD_MS)));
    Ok(out)
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10·log10(Σs² / Σn²)`.
pub fn snr_db(speech: &[f64], noise: &[f64]) -> f64 {
    10.0 * (energy(speech) / energy(noise)).log10()
}

/// Synthesizes the mixture for `spec`. Peaks are kept within ±0.99 by
/// scaling every component together.
pub fn synth_utterance(id: &str, spec: &SceneSpec, transcript: &str, alphabet: &[char]) -> Result<Utterance> {
    spec.validate()?;
    if transcript.is_empty() {
        return Err(Error::InvalidArgument("empty transcript".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clean = synth_source(transcript, alphabet, spec.sample_rate, &mut rng)?;
    let c = spec.channels();
    let n = clean.len() + MAX_DELAY;
    let mut speech = vec![vec![0.0; n]; c];
    for (ch, out) in speech.iter_mut().enumerate() {
        let (d, gain) = (spec.source_delays[ch], spec.source_gains[ch]);
        for (i, v) in clean.iter().enumerate() {
            out[i + d] = gain * v;
        }
    }
    let mut noise = vec![vec![0.0; n]; c];
    if spec.snr_db.is_finite() {
        let gauss = |rng: &mut ChaCha8Rng| -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        match spec.noise {
            NoiseKind::White => {
                for out in noise.iter_mut() {
                    for v in out.iter_mut() {
                        *v = gauss(&mut rng);
                    }
                }
            }
            NoiseKind::Babble => {
                for out in noise.iter_mut() {
                    for _ in 0..8 {
                        let f = rng.gen_range(200.0..(spec.sample_rate as f64 * 0.45));
                        let ph = rng.gen_range(0.0..std::f64::consts::TAU);
                        let rate = rng.gen_range(1.0..6.0);
                        for (i, v) in out.iter_mut().enumerate() {
                            let t = i as f64 / spec.sample_rate as f64;
                            let am = 0.5 + 0.5 * (std::f64::consts::TAU * rate * t).sin();
                            *v += am * (std::f64::consts::TAU * f * t + ph).sin();
                        }
                    }
                }
            }
            NoiseKind::PointSource => {
                let src: Vec<f64> = (0..n + MAX_DELAY).map(|_| gauss(&mut rng)).collect();
                for (ch, out) in noise.iter_mut().enumerate() {
                    let (d, gain) = (spec.noise_delays[ch], spec.noise_gains[ch]);
                    for (i, v) in out.iter_mut().enumerate() {
                        *v = gain * src[i + MAX_DELAY - d];
                    }
                }
            }
        }
        let scale = (energy(&speech[0]) / energy(&noise[0]) / 10f64.powf(spec.snr_db / 10.0)).sqrt();
        for out in noise.iter_mut() {
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    }
    let mut noisy: Vec<Vec<f64>> = speech
        .iter()
        .zip(&noise)
        .map(|(s, nz)| s.iter().zip(nz).map(|(a, b)| a + b).collect())
        .collect();
    let peak = noisy.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut clean = clean;
    if peak > 0.99 {
        let k = 0.99 / peak;
        for v in noisy.iter_mut().chain(speech.iter_mut()).chain(noise.iter_mut()).flatten() {
            *v *= k;
        }
        for v in clean.iter_mut() {
            *v *= k;
        }
    }
    let sr = spec.sample_rate;
    Ok(Utterance {
        id: id.to_string(),
        transcript: transcript.to_string(),
        spec: spec.clone(),
        noisy: Waveform::new(sr, noisy)?,
        clean: Waveform::mono(sr, clean)?,
        speech: Waveform::new(sr, speech)?,
        noise: Waveform::new(sr, noise)?,
    })
}

/// Ideal ratio masks on channel `reference`: `m^S = |S|²/(|S|² + |N|²)` and
/// `m^N = 1 − m^S`. Bins with neither component count as speech.
pub fn oracle_masks(utt: &Utterance, params: &StftParams, reference: usize) -> Result<(Tensor, Tensor)> {
    let s = stft(&utt.speech, params)?.channel(reference);
    let n = stft(&utt.noise, params)?.channel(reference);
    ideal_ratio_masks(&s, &n)
}

pub fn ideal_ratio_masks(s: &ComplexTensor, n: &ComplexTensor) -> Result<(Tensor, Tensor)> {
    let ps = crate::signal::power_spectrum(s);
    let pn = crate::signal::power_spectrum(n);
    let shape = ps.shape().to_vec();
    let ms: Vec<f64> = ps
        .data()
        .iter()
        .zip(pn.data())
        .map(|(&a, &b)| if a + b == 0.0 { 1.0 } else { a / (a + b) })
        .collect();
    let mn: Vec<f64> = ms.iter().map(|m| 1.0 - m).collect();
    Ok((Tensor::new(shape.clone(), ms)?, Tensor::new(shape, mn)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABC: [char; 3] = ['a', 'b', 'c'];

    #[test]
    fn infinite_snr_is_delayed_clean() {
        let spec = SceneSpec::random(3, 2, 8000, NoiseKind::PointSource, f64::INFINITY).unwrap();
        let u = synth_utterance("u", &spec, "abc", &ABC).unwrap();
        assert_eq!(u.noisy, u.speech);
        for c in 0..2 {
            let d = spec.source_delays[c];
            for (i, v) in u.clean.channel(0).iter().enumerate() {
                assert_eq!(u.noisy.channel(c)[i + d], spec.source_gains[c] * v);
            }
        }
    }

    #[test]
    fn single_channel_is_clean_plus_noise() {
        let spec = SceneSpec {
            sample_rate: 8000,
            source_delays: vec![0],
            source_gains: vec![1.0],
            noise: NoiseKind::White,
            noise_delays: vec![0],
            noise_gains: vec![1.0],
            snr_db: 5.0,
            seed: 9,
        };
        let u = synth_utterance("u", &spec, "cab", &ABC).unwrap();
        for (i, v) in u.noisy.channel(0).iter().enumerate() {
            let clean = u.clean.channel(0).get(i).copied().unwrap_or(0.0);
            assert!((v - (clean + u.noise.channel(0)[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn measured_snr_matches_spec() {
        for (kind, snr) in [(NoiseKind::White, -5.0), (NoiseKind::Babble, 0.0), (NoiseKind::PointSource, 7.5)] {
            let spec = SceneSpec::random(11, 3, 8000, kind, snr).unwrap();
            let u = synth_utterance("u", &spec, "abcabc", &ABC).unwrap();
            let got = snr_db(u.speech.channel(0), u.noise.channel(0));
            assert!((got - snr).abs() < 0.1, "{kind:?}: {got}");
            assert!(u.noisy.channels().iter().flatten().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn oracle_masks_edge_cases() {
        let p = StftParams::tiny();
        let quiet = SceneSpec::random(1, 2, 8000, NoiseKind::White, f64::INFINITY).unwrap();
        let u = synth_utterance("u", &quiet, "ab", &ABC).unwrap();
        let (ms, mn) = oracle_masks(&u, &p, 0).unwrap();
        assert!(ms.data().iter().all(|&v| v == 1.0));
        assert!(mn.data().iter().all(|&v| v == 0.0));

        let noisy = SceneSpec::random(2, 2, 8000, NoiseKind::White, 0.0).unwrap();
        let u = synth_utterance("u", &noisy, "ab", &ABC).unwrap();
        let (ms, mn) = oracle_masks(&u, &p, 0).unwrap();
        // the lead-in silence spans the first frames
        assert!(ms.row(0).iter().all(|&v| v == 0.0));
        for (a, b) in ms.data().iter().zip(mn.data()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
