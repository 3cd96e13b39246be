//! Run configuration: flat `key = value` text with `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use crate::beamformer::mvdr::DiagLoading;
use crate::beamformer::BeamformerKind;
use crate::corpus::{CorpusConfig, NoiseKind};
use crate::error::{Error, Result};
use crate::signal::StftParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// 8 kHz, fft 64, desk-scale network sizes.
    Tiny,
    /// 16 kHz, fft 512, the published network sizes.
    FullDoc,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Tiny => "tiny",
            Profile::FullDoc => "full-doc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Profile::Tiny),
            "full-doc" => Ok(Profile::FullDoc),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,

    pub variant: BeamformerKind,
    /// Pins the MVDR reference to one channel instead of attending.
    pub mask_ref_fixed: Option<usize>,

    pub sample_rate: u32,
    pub frame_len: usize,
    pub frame_shift: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub log_floor: f64,

    pub mask_layers: usize,
    pub mask_cells: usize,
    pub filter_layers: usize,
    pub filter_cells: usize,
    pub ref_dim: usize,
    pub ref_sharpening: f64,
    pub diag_loading: DiagLoading,

    pub enc_layers: usize,
    pub enc_cells: usize,
    pub enc_subsample: Vec<usize>,
    pub att_dim: usize,
    pub att_filters: usize,
    pub att_width: usize,
    pub att_sharpening: f64,
    pub dec_embedding: usize,
    pub dec_cells: usize,
    pub init_range: f64,
    pub forget_bias: f64,

    pub epochs: usize,
    pub batch: usize,
    pub ctc_weight: f64,
    pub rho: f64,
    pub eps: f64,
    pub eps_decay: f64,
    pub clip_norm: f64,
    /// Share of training utterances fed through the beamformer; the rest
    /// use channel 0 directly.
    pub enhanced_ratio: f64,

    pub beam: usize,
    pub rescore_ctc_weight: f64,
    pub penalty: f64,
    pub length_bounds: Option<(f64, f64)>,

    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Profile::Tiny)
    }
}

pub const SEED_ENV: &str = "BEAMSPEECH_SEED";

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let tiny = Self {
            profile,
            seed: 1,
            variant: BeamformerKind::MaskMvdr,
            mask_ref_fixed: None,
            sample_rate: 8000,
            frame_len: 64,
            frame_shift: 32,
            fft_size: 64,
            n_mels: 16,
            mel_fmin: 0.0,
            mel_fmax: 4000.0,
            log_floor: 1e-10,
            mask_layers: 2,
            mask_cells: 16,
            filter_layers: 2,
            filter_cells: 16,
            ref_dim: 16,
            ref_sharpening: 2.0,
            diag_loading: DiagLoading::default(),
            enc_layers: 2,
            enc_cells: 16,
            enc_subsample: vec![0, 1],
            att_dim: 16,
            att_filters: 4,
            att_width: 11,
            att_sharpening: 2.0,
            dec_embedding: 16,
            dec_cells: 16,
            init_range: 0.1,
            forget_bias: 1.0,
            epochs: 15,
            batch: 1,
            ctc_weight: 0.1,
            rho: 0.95,
            eps: 1e-6,
            eps_decay: 0.01,
            clip_norm: 5.0,
            enhanced_ratio: 0.5,
            beam: 20,
            rescore_ctc_weight: 0.1,
            penalty: 0.3,
            length_bounds: None,
            corpus: CorpusConfig::default(),
        };
        match profile {
            Profile::Tiny => tiny,
            Profile::FullDoc => Self {
                sample_rate: 16000,
                frame_len: 400,
                frame_shift: 160,
                fft_size: 512,
                n_mels: 40,
                mel_fmax: 8000.0,
                mask_layers: 3,
                mask_cells: 320,
                filter_layers: 3,
                filter_cells: 320,
                ref_dim: 320,
                enc_layers: 4,
                enc_cells: 320,
                att_dim: 320,
                att_filters: 10,
                att_width: 100,
                dec_embedding: 320,
                dec_cells: 320,
                forget_bias: 0.0,
                eps: 1e-8,
                corpus: CorpusConfig {
                    sample_rate: 16000,
                    ..CorpusConfig::default()
                },
                ..tiny
            },
        }
    }

    pub fn stft_params(&self) -> Result<StftParams> {
        StftParams::new(self.sample_rate, self.frame_len, self.frame_shift, self.fft_size)
    }

    /// Applies `BEAMSPEECH_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.stft_params()?;
        self.corpus.validate()?;
        if self.corpus.sample_rate != self.sample_rate {
            return bad(format!(
                "corpus sample rate {} differs from model sample rate {}",
                self.corpus.sample_rate, self.sample_rate
            ));
        }
        for (k, v) in [
            ("n_mels", self.n_mels),
            ("mask_layers", self.mask_layers),
            ("mask_cells", self.mask_cells),
            ("filter_layers", self.filter_layers),
            ("filter_cells", self.filter_cells),
            ("ref_dim", self.ref_dim),
            ("enc_layers", self.enc_layers),
            ("enc_cells", self.enc_cells),
            ("att_dim", self.att_dim),
            ("att_filters", self.att_filters),
            ("att_width", self.att_width),
            ("dec_embedding", self.dec_embedding),
            ("dec_cells", self.dec_cells),
            ("batch", self.batch),
            ("beam", self.beam),
        ] {
            if v == 0 {
                return bad(format!("{k} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return bad("ctc_weight must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.enhanced_ratio) {
            return bad("enhanced_ratio must lie in [0, 1]".into());
        }
        if self.enc_subsample.iter().any(|&l| l >= self.enc_layers) {
            return bad("enc_subsample names a layer beyond enc_layers".into());
        }
        if let Some((lo, hi)) = self.length_bounds {
            if !(0.0 <= lo && lo <= hi) {
                return bad("length_bounds must satisfy 0 <= min <= max".into());
            }
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("profile", self.profile.name().to_string()),
            ("seed", self.seed.to_string()),
            ("model.variant", self.variant.name().to_string()),
            ("model.mask_ref_fixed", self.mask_ref_fixed.map_or("none".into(), |c| c.to_string())),
            ("signal.sample_rate", self.sample_rate.to_string()),
            ("signal.frame_len", self.frame_len.to_string()),
            ("signal.frame_shift", self.frame_shift.to_string()),
            ("signal.fft_size", self.fft_size.to_string()),
            ("signal.n_mels", self.n_mels.to_string()),
            ("signal.mel_fmin", self.mel_fmin.to_string()),
            ("signal.mel_fmax", self.mel_fmax.to_string()),
            ("signal.log_floor", self.log_floor.to_string()),
            ("beamformer.mask_layers", self.mask_layers.to_string()),
            ("beamformer.mask_cells", self.mask_cells.to_string()),
            ("beamformer.filter_layers", self.filter_layers.to_string()),
            ("beamformer.filter_cells", self.filter_cells.to_string()),
            ("beamformer.ref_dim", self.ref_dim.to_string()),
            ("beamformer.ref_sharpening", self.ref_sharpening.to_string()),
            ("beamformer.diag_loading", render_loading(self.diag_loading)),
            ("recognizer.enc_layers", self.enc_layers.to_string()),
            ("recognizer.enc_cells", self.enc_cells.to_string()),
            ("recognizer.enc_subsample", render_list(&self.enc_subsample)),
            ("recognizer.att_dim", self.att_dim.to_string()),
            ("recognizer.att_filters", self.att_filters.to_string()),
            ("recognizer.att_width", self.att_width.to_string()),
            ("recognizer.att_sharpening", self.att_sharpening.to_string()),
            ("recognizer.dec_embedding", self.dec_embedding.to_string()),
            ("recognizer.dec_cells", self.dec_cells.to_string()),
            ("init.range", self.init_range.to_string()),
            ("init.forget_bias", self.forget_bias.to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.batch", self.batch.to_string()),
            ("train.ctc_weight", self.ctc_weight.to_string()),
            ("train.rho", self.rho.to_string()),
            ("train.eps", self.eps.to_string()),
            ("train.eps_decay", self.eps_decay.to_string()),
            ("train.clip_norm", self.clip_norm.to_string()),
            ("train.enhanced_ratio", self.enhanced_ratio.to_string()),
            ("decode.beam", self.beam.to_string()),
            ("decode.ctc_weight", self.rescore_ctc_weight.to_string()),
            ("decode.penalty", self.penalty.to_string()),
            (
                "decode.length_bounds",
                self.length_bounds.map_or("none".into(), |(a, b)| format!("{a},{b}")),
            ),
        ];
        v.extend(corpus_entries(&self.corpus));
        v
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        if let Some(k) = key.strip_prefix("corpus.") {
            return set_corpus(&mut self.corpus, k, v);
        }
        match key {
            "profile" => {
                let p = Profile::parse(v)?;
                if p != self.profile {
                    let seed = self.seed;
                    *self = RunConfig::profile(p);
                    self.seed = seed;
                }
            }
            "seed" => self.seed = num(key, v)?,
            "model.variant" => self.variant = BeamformerKind::parse(v)?,
            "model.mask_ref_fixed" => {
                self.mask_ref_fixed = if v == "none" { None } else { Some(num(key, v)?) }
            }
            "signal.sample_rate" => self.sample_rate = num(key, v)?,
            "signal.frame_len" => self.frame_len = num(key, v)?,
            "signal.frame_shift" => self.frame_shift = num(key, v)?,
            "signal.fft_size" => self.fft_size = num(key, v)?,
            "signal.n_mels" => self.n_mels = num(key, v)?,
            "signal.mel_fmin" => self.mel_fmin = num(key, v)?,
            "signal.mel_fmax" => self.mel_fmax = num(key, v)?,
            "signal.log_floor" => self.log_floor = num(key, v)?,
            "beamformer.mask_layers" => self.mask_layers = num(key, v)?,
            "beamformer.mask_cells" => self.mask_cells = num(key, v)?,
            "beamformer.filter_layers" => self.filter_layers = num(key, v)?,
            "beamformer.filter_cells" => self.filter_cells = num(key, v)?,
            "beamformer.ref_dim" => self.ref_dim = num(key, v)?,
            "beamformer.ref_sharpening" => self.ref_sharpening = num(key, v)?,
            "beamformer.diag_loading" => self.diag_loading = parse_loading(v)?,
            "recognizer.enc_layers" => self.enc_layers = num(key, v)?,
            "recognizer.enc_cells" => self.enc_cells = num(key, v)?,
            "recognizer.enc_subsample" => self.enc_subsample = parse_list(key, v)?,
            "recognizer.att_dim" => self.att_dim = num(key, v)?,
            "recognizer.att_filters" => self.att_filters = num(key, v)?,
            "recognizer.att_width" => self.att_width = num(key, v)?,
            "recognizer.att_sharpening" => self.att_sharpening = num(key, v)?,
            "recognizer.dec_embedding" => self.dec_embedding = num(key, v)?,
            "recognizer.dec_cells" => self.dec_cells = num(key, v)?,
            "init.range" => self.init_range = num(key, v)?,
            "init.forget_bias" => self.forget_bias = num(key, v)?,
            "train.epochs" => self.epochs = num(key, v)?,
            "train.batch" => self.batch = num(key, v)?,
            "train.ctc_weight" => self.ctc_weight = num(key, v)?,
            "train.rho" => self.rho = num(key, v)?,
            "train.eps" => self.eps = num(key, v)?,
            "train.eps_decay" => self.eps_decay = num(key, v)?,
            "train.clip_norm" => self.clip_norm = num(key, v)?,
            "train.enhanced_ratio" => self.enhanced_ratio = num(key, v)?,
            "decode.beam" => self.beam = num(key, v)?,
            "decode.ctc_weight" => self.rescore_ctc_weight = num(key, v)?,
            "decode.penalty" => self.penalty = num(key, v)?,
            "decode.length_bounds" => {
                self.length_bounds = if v == "none" {
                    None
                } else {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| Error::Config(format!("{key}: expected `min,max` or `none`")))?;
                    Some((num(key, a.trim())?, num(key, b.trim())?))
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        render_entries(&self.entries())
    }

    /// Starts from the defaults and applies every line. A `profile` line
    /// resets all other keys, so it is expected first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in parse_lines(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.render())?)
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn render_list(v: &[usize]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn render_loading(d: DiagLoading) -> String {
    match d {
        DiagLoading::None => "none".into(),
        DiagLoading::Relative(c) => format!("relative:{c}"),
        DiagLoading::Absolute(c) => format!("absolute:{c}"),
    }
}

fn parse_loading(v: &str) -> Result<DiagLoading> {
    if v == "none" {
        return Ok(DiagLoading::None);
    }
    match v.split_once(':') {
        Some(("relative", c)) => Ok(DiagLoading::Relative(num("diag_loading", c)?)),
        Some(("absolute", c)) => Ok(DiagLoading::Absolute(num("diag_loading", c)?)),
        _ => Err(Error::Config(format!(
            "diag_loading: expected none, relative:<coef> or absolute:<value>, got {v:?}"
        ))),
    }
}

/// Splits `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn render_entries(entries: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        writeln!(s, "{k} = {v}").expect("string write");
    }
    s
}

fn corpus_entries(c: &CorpusConfig) -> Vec<(&'static str, String)> {
    vec![
        ("corpus.seed", c.seed.to_string()),
        ("corpus.train", c.train.to_string()),
        ("corpus.dev", c.dev.to_string()),
        ("corpus.eval", c.eval.to_string()),
        ("corpus.channels", c.channels.to_string()),
        ("corpus.sample_rate", c.sample_rate.to_string()),
        ("corpus.alphabet", c.alphabet.clone()),
        ("corpus.min_chars", c.min_chars.to_string()),
        ("corpus.max_chars", c.max_chars.to_string()),
        ("corpus.snr_min_db", c.snr_min_db.to_string()),
        ("corpus.snr_max_db", c.snr_max_db.to_string()),
        ("corpus.noise", c.noise.name().to_string()),
    ]
}

fn set_corpus(c: &mut CorpusConfig, key: &str, v: &str) -> Result<()> {
    let full = format!("corpus.{key}");
    match key {
        "seed" => c.seed = num(&full, v)?,
        "train" => c.train = num(&full, v)?,
        "dev" => c.dev = num(&full, v)?,
        "eval" => c.eval = num(&full, v)?,
        "channels" => c.channels = num(&full, v)?,
        "sample_rate" => c.sample_rate = num(&full, v)?,
        "alphabet" => {
            if v.contains(['#', '\t']) || v.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("{full}: characters must be printable and not `#`")));
            }
            c.alphabet = v.to_string()
        }
        "min_chars" => c.min_chars = num(&full, v)?,
        "max_chars" => c.max_chars = num(&full, v)?,
        "snr_min_db" => c.snr_min_db = num(&full, v)?,
        "snr_max_db" => c.snr_max_db = num(&full, v)?,
        "noise" => c.noise = NoiseKind::parse(v)?,
        _ => return Err(Error::Config(format!("unknown key {full:?}"))),
    }
    Ok(())
}

pub fn render_corpus(c: &CorpusConfig) -> String {
    render_entries(&corpus_entries(c))
}

pub fn parse_corpus(text: &str) -> Result<CorpusConfig> {
    let mut c = CorpusConfig::default();
    for (k, v) in parse_lines(text)? {
        let key = k
            .strip_prefix("corpus.")
            .ok_or_else(|| Error::Config(format!("unknown key {k:?}")))?;
        set_corpus(&mut c, key, &v)?;
    }
    c.validate()?;
    Ok(c)
}
