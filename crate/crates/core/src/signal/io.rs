use std::fs;
use std::path::{Path, PathBuf};

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// On-disk WAV sample encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Reads a 16-bit PCM or 32-bit float WAV into planar channels.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let nc = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (HoundFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported WAV encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let mut chans = vec![Vec::with_capacity(interleaved.len() / nc.max(1)); nc];
    for (i, v) in interleaved.into_iter().enumerate() {
        chans[i % nc].push(v);
    }
    Waveform::new(spec.sample_rate, chans)
}

pub fn write_wav(path: &Path, w: &Waveform, format: SampleFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, HoundFormat::Int),
        SampleFormat::Float32 => (32, HoundFormat::Float),
    };
    let spec = WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for i in 0..w.len() {
        for c in 0..w.num_channels() {
            let v = w.channel(c)[i];
            match format {
                SampleFormat::Pcm16 => writer.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
                SampleFormat::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes little-endian f64 samples, channel after channel, plus a
/// `<path>.hdr` text header with `sample_rate`, `channels` and `samples`.
pub fn write_raw(path: &Path, w: &Waveform) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * w.len() * w.num_channels());
    for c in w.channels() {
        for v in c {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    let header = format!(
        "format = f64le-planar\nsample_rate = {}\nchannels = {}\nsamples = {}\n",
        w.sample_rate,
        w.num_channels(),
        w.len()
    );
    fs::write(header_path(path), header)?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Waveform> {
    let header = fs::read_to_string(header_path(path))?;
    let mut rate = None;
    let mut chans = None;
    let mut samples = None;
    for line in header.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let num = || v.parse::<usize>().map_err(|_| Error::Format(format!("bad value for {k}: {v:?}")));
        match k {
            "format" if v == "f64le-planar" => {}
            "format" => return Err(Error::Format(format!("unsupported raw format {v:?}"))),
            "sample_rate" => rate = Some(num()?),
            "channels" => chans = Some(num()?),
            "samples" => samples = Some(num()?),
            _ => return Err(Error::Format(format!("unknown header key {k:?}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header missing {k}"));
    let (rate, nc, n) = (
        rate.ok_or_else(|| missing("sample_rate"))?,
        chans.ok_or_else(|| missing("channels"))?,
        samples.ok_or_else(|| missing("samples"))?,
    );
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * nc * n {
        return Err(Error::Format(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            8 * nc * n,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let channels = values.chunks(n.max(1)).take(nc).map(<[f64]>::to_vec).collect();
    Waveform::new(rate as u32, channels)
}

/// Reads `.wav` files with [`read_wav`] and anything else with [`read_raw`].
pub fn read_audio(path: &Path) -> Result<Waveform> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("wav") => read_wav(path),
        _ => read_raw(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Waveform {
        Waveform::new(8000, vec![vec![0.5, -0.25, 0.125], vec![0.0, 1.0 / 3.0, -1.0]]).unwrap()
    }

    #[test]
    fn float_wav_roundtrip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &sample(), SampleFormat::Float32).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.num_channels(), 2);
        for c in 0..2 {
            for (a, b) in r.channel(c).iter().zip(sample().channel(c)) {
                assert_eq!(*a, *b as f32 as f64);
            }
        }
    }

    #[test]
    fn pcm16_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &sample(), SampleFormat::Pcm16).unwrap();
        let r = read_wav(&p).unwrap();
        for c in 0..2 {
            for (a, b) in r.channel(c).iter().zip(sample().channel(c)) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn raw_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f64");
        write_raw(&p, &sample()).unwrap();
        assert_eq!(read_audio(&p).unwrap(), sample());
    }
}
