//! Attention encoder-decoder recognizer with a CTC auxiliary head.
//!
//! Parameter namespaces: `enc/` (BLSTM encoder), `att/` (location-based
//! attention), `dec/` (embedding, LSTM, output layer) and `ctc/` (linear head
//! over blank and characters).

pub mod attention;
pub mod beam;
pub mod ctc;
pub mod decoder;
pub mod metrics;
pub mod vocab;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{blstm_stack, init_blstm, init_linear, linear, BlstmSpec, InitSpec};
use crate::params::ParameterStore;

pub use attention::{AttentionMemory, AttentionSpec};
pub use beam::{beam_search, BeamConfig, BeamResult};
pub use decoder::{decode_step, DecoderSpec, DecoderState};
pub use metrics::{cer, edit_distance};
pub use vocab::{Vocabulary, BLANK, EOS, SOS};

#[derive(Clone, Debug, PartialEq)]
pub struct RecognizerSpec {
    /// Feature dimension D_O.
    pub input: usize,
    pub encoder: BlstmSpec,
    pub attention: AttentionSpec,
    pub decoder: DecoderSpec,
}

impl RecognizerSpec {
    pub fn enc_dim(&self) -> usize {
        self.encoder.projection
    }
}

pub fn init_recognizer(store: &mut ParameterStore, spec: &RecognizerSpec, vocab: &Vocabulary, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    let dh = spec.enc_dim();
    init_blstm(store, "enc", spec.input, &spec.encoder, init, rng)?;
    attention::init_attention(store, &spec.attention, spec.decoder.cells, dh, init, rng)?;
    decoder::init_decoder(store, &spec.decoder, vocab.len(), vocab.num_classes(), dh, init, rng)?;
    init_linear(store, "ctc/out", dh, vocab.num_classes(), init, rng)
}

/// `H = Encoder(O)` for O of shape T×D_O.
pub fn encode(g: &mut Graph, spec: &RecognizerSpec, feats: Var) -> Result<Var> {
    let t = g.shape(feats)[0];
    if spec.encoder.output_len(t) == 0 {
        return Err(Error::InvalidArgument(format!("{t} frames is too short to encode")));
    }
    blstm_stack(g, "enc", &spec.encoder, feats)
}

/// Teacher-forced attention loss and label accuracy.
#[derive(Clone, Copy, Debug)]
pub struct AttentionLoss {
    /// `−Σ_n ln P(y*_n | O, y*_{1:n−1})`, with eos as the final target.
    pub loss: Var,
    pub correct: usize,
    pub steps: usize,
}

/// Attention loss over character tokens `target` (eos appended here).
pub fn attention_loss(g: &mut Graph, spec: &RecognizerSpec, vocab: &Vocabulary, enc: Var, target: &[usize]) -> Result<AttentionLoss> {
    let mem = AttentionMemory::new(g, enc)?;
    let mut state = DecoderState::initial(g, &mem, spec.decoder.cells);
    let mut prev = SOS;
    let mut rows = Vec::with_capacity(target.len() + 1);
    let mut classes = Vec::with_capacity(target.len() + 1);
    for &tok in target.iter().chain(std::iter::once(&EOS)) {
        classes.push(vocab.decoder_class(tok)?);
        let (next, logits) = decode_step(g, &mem, state, prev, spec.attention.sharpening)?;
        rows.push(logits);
        state = next;
        prev = tok;
    }
    let logits = g.concat(&rows, 0)?;
    let logp = g.log_softmax(logits)?;
    let k = vocab.num_classes();
    let lp = g.value(logp);
    let correct = classes
        .iter()
        .enumerate()
        .filter(|&(n, &c)| argmax(&lp.data()[n * k..(n + 1) * k]) == c)
        .count();
    let index: Vec<usize> = classes.iter().enumerate().map(|(n, &c)| n * k + c).collect();
    let picked = g.pick(logp, &index)?;
    let total = g.sum(picked);
    Ok(AttentionLoss {
        loss: g.neg(total),
        correct,
        steps: classes.len(),
    })
}

/// Per-frame CTC log-probabilities, L×K.
pub fn ctc_log_probs(g: &mut Graph, enc: Var) -> Result<Var> {
    let logits = linear(g, "ctc/out", enc)?;
    g.log_softmax(logits)
}

pub fn ctc_loss(g: &mut Graph, vocab: &Vocabulary, enc: Var, target: &[usize]) -> Result<Var> {
    let labels = target.iter().map(|&t| vocab.ctc_class(t)).collect::<Result<Vec<_>>>()?;
    let lp = ctc_log_probs(g, enc)?;
    g.ctc_loss(lp, &labels)
}

/// Losses of one utterance under the multi-task objective.
#[derive(Clone, Copy, Debug)]
pub struct JointLoss {
    /// `(1 − λ)·attention + λ·ctc`.
    pub loss: Var,
    pub attention: AttentionLoss,
    pub ctc: Option<Var>,
}

/// Joint CTC-attention loss; the CTC branch is skipped entirely at λ = 0.
pub fn joint_loss(g: &mut Graph, spec: &RecognizerSpec, vocab: &Vocabulary, enc: Var, target: &[usize], ctc_weight: f64) -> Result<JointLoss> {
    let att = attention_loss(g, spec, vocab, enc, target)?;
    if ctc_weight == 0.0 {
        return Ok(JointLoss {
            loss: att.loss,
            attention: att,
            ctc: None,
        });
    }
    let ctc = ctc_loss(g, vocab, enc, target)?;
    let loss = if ctc_weight == 1.0 {
        ctc
    } else {
        let a = g.scale(att.loss, 1.0 - ctc_weight);
        let c = g.scale(ctc, ctc_weight);
        g.add(a, c)?
    };
    Ok(JointLoss {
        loss,
        attention: att,
        ctc: Some(ctc),
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
