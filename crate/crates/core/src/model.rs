//! The joint pipeline: multichannel STFT → beamformer → normalized log-Mel →
//! encoder-decoder, built from a [`RunConfig`].

use rand::Rng;

use crate::autodiff::complex::{CVar, ComplexTensor};
use crate::autodiff::{Graph, Var};
use crate::beamformer::{self, BeamformerKind, BeamformerSpec, Enhanced, ReferenceMode, ReferenceSpec};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{BlstmSpec, InitSpec};
use crate::params::ParameterStore;
use crate::recognizer::attention::AttentionSpec;
use crate::recognizer::beam::{beam_search, AttentionScorer, BeamConfig, BeamResult};
use crate::recognizer::decoder::DecoderSpec;
use crate::recognizer::vocab::Vocabulary;
use crate::recognizer::{self, JointLoss, RecognizerSpec};
use crate::signal::{log_mel, power_spectrum, stft, MelFilterbank, MultichannelStft, Normalizer, StftParams, Waveform};
use crate::tensor::Tensor;

pub const NORM_MEAN: &str = "norm/mean";
pub const NORM_STD: &str = "norm/std";

/// Which input the recognizer sees for one training utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputPath {
    /// Through the configured beamformer.
    Enhanced,
    /// Channel 0, bypassing the beamformer.
    Noisy,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub stft: StftParams,
    pub mel: MelFilterbank,
    pub beamformer: BeamformerSpec,
    pub recognizer: RecognizerSpec,
}

impl Model {
    pub fn new(config: RunConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let stft = config.stft_params()?;
        let mel = MelFilterbank::new(config.n_mels, &stft, config.mel_fmin, config.mel_fmax)?;
        let blstm = |layers, cells| BlstmSpec {
            layers,
            cells,
            projection: cells,
            subsample: Vec::new(),
        };
        let beamformer = BeamformerSpec {
            kind: config.variant,
            bins: stft.num_bins(),
            channels: config.corpus.channels,
            filter_net: blstm(config.filter_layers, config.filter_cells),
            mask_net: blstm(config.mask_layers, config.mask_cells),
            reference: ReferenceSpec {
                dim: config.ref_dim,
                sharpening: config.ref_sharpening,
            },
            reference_mode: config.mask_ref_fixed.map_or(ReferenceMode::Attention, ReferenceMode::Fixed),
            loading: config.diag_loading,
        };
        let recognizer = RecognizerSpec {
            input: config.n_mels,
            encoder: BlstmSpec {
                layers: config.enc_layers,
                cells: config.enc_cells,
                projection: config.enc_cells,
                subsample: config.enc_subsample.clone(),
            },
            attention: AttentionSpec {
                dim: config.att_dim,
                filters: config.att_filters,
                width: config.att_width,
                sharpening: config.att_sharpening,
            },
            decoder: DecoderSpec {
                embedding: config.dec_embedding,
                cells: config.dec_cells,
            },
        };
        Ok(Self {
            config,
            vocab,
            stft,
            mel,
            beamformer,
            recognizer,
        })
    }

    pub fn init_spec(&self) -> InitSpec {
        InitSpec {
            range: self.config.init_range,
            forget_bias: self.config.forget_bias,
        }
    }

    /// Fresh parameters, with an identity normalizer until [`Self::set_normalizer`].
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        let init = self.init_spec();
        beamformer::init_beamformer(&mut store, &self.beamformer, init, rng)?;
        recognizer::init_recognizer(&mut store, &self.recognizer, &self.vocab, init, rng)?;
        let d = self.config.n_mels;
        store.insert_frozen(NORM_MEAN, Tensor::zeros(&[d]))?;
        store.insert_frozen(NORM_STD, Tensor::ones(&[d]))?;
        Ok(store)
    }

    pub fn set_normalizer(&self, store: &mut ParameterStore, norm: &Normalizer) -> Result<()> {
        store.set(NORM_MEAN, norm.mean_tensor())?;
        store.set(NORM_STD, norm.std_tensor())
    }

    pub fn normalizer(&self, store: &ParameterStore) -> Result<Normalizer> {
        let get = |n: &str| store.get(n).ok_or_else(|| Error::UnknownParameter(n.into()));
        Ok(Normalizer {
            mean: get(NORM_MEAN)?.data().to_vec(),
            std: get(NORM_STD)?.data().to_vec(),
        })
    }

    pub fn analyze(&self, w: &Waveform) -> Result<MultichannelStft> {
        if w.sample_rate != self.stft.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "audio is {} Hz, model expects {} Hz",
                w.sample_rate, self.stft.sample_rate
            )));
        }
        stft(w, &self.stft)
    }

    /// Unnormalized log-Mel features of a T×F spectrogram value.
    pub fn raw_features(&self, x: &ComplexTensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = g.constant(power_spectrum(x));
        let f = log_mel(&mut g, p, &self.mel, self.config.log_floor)?;
        Ok(g.value(f).clone())
    }

    /// Global statistics of channel-0 features over `spectrograms`.
    pub fn fit_normalizer<'a>(&self, spectrograms: impl IntoIterator<Item = &'a MultichannelStft>) -> Result<Normalizer> {
        let feats = spectrograms
            .into_iter()
            .map(|x| self.raw_features(&x.channel(0)))
            .collect::<Result<Vec<_>>>()?;
        Normalizer::fit(&feats)
    }

    pub fn front_end(&self, g: &mut Graph, x: CVar, path: InputPath) -> Result<Enhanced> {
        match path {
            InputPath::Enhanced => beamformer::enhance(g, &self.beamformer, x),
            InputPath::Noisy => Ok(Enhanced {
                output: beamformer::channel(g, x, 0)?,
                mvdr: None,
            }),
        }
    }

    /// Normalized features of an enhanced T×F node.
    pub fn features(&self, g: &mut Graph, enhanced: CVar) -> Result<Var> {
        let mean = g.param(NORM_MEAN)?;
        let std = g.param(NORM_STD)?;
        crate::signal::features(g, enhanced, &self.mel, self.config.log_floor, Some((mean, std)))
    }

    /// Joint loss of one utterance; `target` holds token ids.
    pub fn loss(&self, g: &mut Graph, x: CVar, target: &[usize], path: InputPath) -> Result<JointLoss> {
        let enh = self.front_end(g, x, path)?;
        let feats = self.features(g, enh.output)?;
        let enc = recognizer::encode(g, &self.recognizer, feats)?;
        recognizer::joint_loss(g, &self.recognizer, &self.vocab, enc, target, self.config.ctc_weight)
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam: self.config.beam,
            ctc_weight: self.config.rescore_ctc_weight,
            penalty: self.config.penalty,
            length_bounds: self.config.length_bounds,
            max_len: None,
        }
    }

    pub fn recognize(&self, store: &ParameterStore, x: &MultichannelStft) -> Result<BeamResult> {
        let mut g = Graph::with_params(store);
        let xv = g.complex_leaf(&x.coeffs);
        let enh = self.front_end(&mut g, xv, InputPath::Enhanced)?;
        let feats = self.features(&mut g, enh.output)?;
        let enc = recognizer::encode(&mut g, &self.recognizer, feats)?;
        let cfg = self.beam_config();
        let mut scorer = AttentionScorer::new(&mut g, &self.recognizer, &self.vocab, enc)?;
        beam_search(&mut scorer, &cfg)
    }

    /// Teacher-forced `(correct, steps, loss)` for one utterance.
    pub fn evaluate(&self, store: &ParameterStore, x: &MultichannelStft, text: &str) -> Result<(usize, usize, f64)> {
        let target = self.vocab.encode(text)?;
        let mut g = Graph::with_params(store);
        let xv = g.complex_leaf(&x.coeffs);
        let l = self.loss(&mut g, xv, &target, InputPath::Enhanced)?;
        Ok((l.attention.correct, l.attention.steps, g.value(l.loss).item()))
    }

    pub fn enhance(&self, store: &ParameterStore, x: &MultichannelStft) -> Result<ComplexTensor> {
        beamformer::enhance_value(store, &self.beamformer, &x.coeffs)
    }

    pub fn kind(&self) -> BeamformerKind {
        self.beamformer.kind
    }
}
