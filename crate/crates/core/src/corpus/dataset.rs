use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{synth_utterance, NoiseKind, SceneSpec, Utterance};
use crate::error::{Error, Result};
use crate::recognizer::vocab::Vocabulary;
use crate::signal::{read_wav, write_wav, SampleFormat};
use crate::signal::Waveform;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub eval: usize,
    pub channels: usize,
    pub sample_rate: u32,
    pub alphabet: String,
    pub min_chars: usize,
    pub max_chars: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub noise: NoiseKind,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            train: 200,
            dev: 20,
            eval: 20,
            channels: 2,
            sample_rate: 8000,
            alphabet: "abcdefgh".into(),
            min_chars: 3,
            max_chars: 6,
            snr_min_db: -10.0,
            snr_max_db: -5.0,
            noise: NoiseKind::PointSource,
        }
    }
}

impl CorpusConfig {
    pub fn size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Eval => self.eval,
        }
    }

    pub fn alphabet_chars(&self) -> Vec<char> {
        self.alphabet.chars().collect()
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_chars(&self.alphabet_chars())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.channels == 0 {
            return bad("corpus needs at least one channel");
        }
        if self.min_chars == 0 || self.min_chars > self.max_chars {
            return bad("transcript length bounds must satisfy 1 <= min <= max");
        }
        if self.alphabet.is_empty() {
            return bad("empty alphabet");
        }
        if !(self.snr_min_db <= self.snr_max_db) {
            return bad("SNR range is empty");
        }
        let top = super::char_frequency(self.alphabet.chars().count() - 1);
        if top >= self.sample_rate as f64 / 2.0 {
            return bad("alphabet tones exceed the Nyquist frequency");
        }
        Ok(())
    }

    fn draw_snr(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.snr_min_db == self.snr_max_db {
            self.snr_min_db
        } else {
            rng.gen_range(self.snr_min_db..self.snr_max_db)
        }
    }
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the corpus directory.
    pub wav: PathBuf,
    pub transcript: String,
    pub seed: u64,
    pub channels: usize,
    pub snr_db: f64,
}

pub const MANIFEST_HEADER: &str = "id\twav\ttranscript\tseed\tchannels\tsnr_db";

pub fn render_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    for e in entries {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.id,
            e.wav.display(),
            e.transcript,
            e.seed,
            e.channels,
            e.snr_db
        )
        .expect("string write");
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Format("manifest header missing".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Format(format!("manifest line {}: {what}", i + 2));
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            Ok(ManifestEntry {
                id: f[0].to_string(),
                wav: PathBuf::from(f[1]),
                transcript: f[2].to_string(),
                seed: f[3].parse().map_err(|_| bad("bad seed"))?,
                channels: f[4].parse().map_err(|_| bad("bad channel count"))?,
                snr_db: f[5].parse().map_err(|_| bad("bad SNR"))?,
            })
        })
        .collect()
}

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.tsv", split.name()))
}

pub const CORPUS_CONFIG_FILE: &str = "corpus.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

/// Synthesizes the scene behind a manifest row.
pub fn regenerate(cfg: &CorpusConfig, e: &ManifestEntry) -> Result<Utterance> {
    let spec = SceneSpec::random(e.seed, e.channels, cfg.sample_rate, cfg.noise, e.snr_db)?;
    synth_utterance(&e.id, &spec, &e.transcript, &cfg.alphabet_chars())
}

/// Plans every utterance of the corpus without touching the disk.
pub fn plan_corpus(cfg: &CorpusConfig) -> Result<Vec<(Split, ManifestEntry)>> {
    cfg.validate()?;
    let chars = cfg.alphabet_chars();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for split in Split::ALL {
        for i in 0..cfg.size(split) {
            let id = format!("{}{:04}", split.name(), i);
            let len = rng.gen_range(cfg.min_chars..=cfg.max_chars);
            let transcript: String = (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
            let snr_db = cfg.draw_snr(&mut rng);
            let seed = rng.gen::<u64>();
            out.push((
                split,
                ManifestEntry {
                    wav: PathBuf::from(split.name()).join(format!("{id}.wav")),
                    id,
                    transcript,
                    seed,
                    channels: cfg.channels,
                    snr_db,
                },
            ));
        }
    }
    Ok(out)
}

/// Writes float WAVs, one manifest per split, the vocabulary and the corpus
/// settings under `dir`.
pub fn build_corpus(cfg: &CorpusConfig, dir: &Path) -> Result<()> {
    let plan = plan_corpus(cfg)?;
    fs::create_dir_all(dir)?;
    for split in Split::ALL {
        fs::create_dir_all(dir.join(split.name()))?;
        let entries: Vec<ManifestEntry> = plan.iter().filter(|(s, _)| *s == split).map(|(_, e)| e.clone()).collect();
        for e in &entries {
            let utt = regenerate(cfg, e)?;
            write_wav(&dir.join(&e.wav), &utt.noisy, SampleFormat::Float32)?;
        }
        fs::write(manifest_path(dir, split), render_manifest(&entries))?;
    }
    cfg.vocabulary()?.save(&dir.join(VOCAB_FILE))?;
    fs::write(dir.join(CORPUS_CONFIG_FILE), crate::config::render_corpus(cfg))?;
    Ok(())
}

pub fn load_corpus_config(dir: &Path) -> Result<CorpusConfig> {
    crate::config::parse_corpus(&fs::read_to_string(dir.join(CORPUS_CONFIG_FILE))?)
}

#[derive(Clone, Debug)]
pub struct LoadedUtterance {
    pub entry: ManifestEntry,
    pub audio: Waveform,
}

pub fn load_split(dir: &Path, split: Split) -> Result<Vec<LoadedUtterance>> {
    let entries = parse_manifest(&fs::read_to_string(manifest_path(dir, split))?)?;
    entries
        .into_iter()
        .map(|entry| {
            let audio = read_wav(&dir.join(&entry.wav))?;
            if audio.num_channels() != entry.channels {
                return Err(Error::Format(format!(
                    "{}: manifest says {} channels, file has {}",
                    entry.id,
                    entry.channels,
                    audio.num_channels()
                )));
            }
            Ok(LoadedUtterance { entry, audio })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            train: 3,
            dev: 1,
            eval: 1,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn manifest_roundtrip_keeps_exact_snr() {
        let plan = plan_corpus(&small()).unwrap();
        let entries: Vec<_> = plan.into_iter().map(|(_, e)| e).collect();
        assert_eq!(parse_manifest(&render_manifest(&entries)).unwrap(), entries);
        let inf = ManifestEntry {
            snr_db: f64::INFINITY,
            ..entries[0].clone()
        };
        assert_eq!(parse_manifest(&render_manifest(std::slice::from_ref(&inf))).unwrap()[0], inf);
    }

    #[test]
    fn build_is_deterministic_and_regenerable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_corpus(&small(), a.path()).unwrap();
        build_corpus(&small(), b.path()).unwrap();
        for split in Split::ALL {
            let ma = fs::read(manifest_path(a.path(), split)).unwrap();
            assert_eq!(ma, fs::read(manifest_path(b.path(), split)).unwrap());
        }
        let cfg = load_corpus_config(a.path()).unwrap();
        assert_eq!(cfg, small());
        for u in load_split(a.path(), Split::Train).unwrap() {
            let regen = regenerate(&cfg, &u.entry).unwrap();
            for c in 0..u.audio.num_channels() {
                for (x, y) in u.audio.channel(c).iter().zip(regen.noisy.channel(c)) {
                    assert_eq!(*x, *y as f32 as f64);
                }
            }
        }
    }
}
