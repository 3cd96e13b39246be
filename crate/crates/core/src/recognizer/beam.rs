//! Beam search over the attention decoder with length penalty and CTC
//! rescoring of terminated hypotheses.
//!
//! A hypothesis with character tokens `y` that emitted eos scores
//! `log P_att(y, eos) + λ·log P_ctc(y) + penalty·|y|`. Live hypotheses are
//! pruned on `log P_att` alone (the penalty is equal across a step). Ties are
//! broken by token sequence, then by the step at which the hypothesis ended.

use std::cmp::Ordering;

use super::ctc::ctc_forward_backward;
use super::decoder::{decode_step, DecoderState};
use super::vocab::{Vocabulary, SOS};
use super::{AttentionMemory, RecognizerSpec};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// Weight λ of the CTC rescoring term.
    pub ctc_weight: f64,
    /// Additive score per emitted character.
    pub penalty: f64,
    /// Optional `(min, max)` hypothesis length as fractions of L.
    pub length_bounds: Option<(f64, f64)>,
    /// Step limit when no bounds are given; defaults to L.
    pub max_len: Option<usize>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 20,
            ctc_weight: 0.1,
            penalty: 0.3,
            length_bounds: None,
            max_len: None,
        }
    }
}

/// Everything the search needs from a model.
pub trait StepScorer {
    type State: Clone;
    fn initial(&mut self) -> Result<Self::State>;
    /// Consumes token `prev`; returns the next state and log-probabilities
    /// over decoder classes (class 0 is eos, class `k` is token `k + 2`).
    fn step(&mut self, state: &Self::State, prev: usize) -> Result<(Self::State, Vec<f64>)>;
    /// CTC log-probability of a character token sequence.
    fn ctc_log_prob(&mut self, tokens: &[usize]) -> Result<f64>;
    /// Encoder length L.
    fn input_len(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    /// Character token ids, without sos or eos.
    pub tokens: Vec<usize>,
    pub score: f64,
    pub attention: f64,
    pub ctc: f64,
    /// False when no hypothesis emitted eos and the best live one was returned.
    pub terminated: bool,
}

/// Final score of a terminated hypothesis with attention log-probability `att`.
pub fn hypothesis_score<S: StepScorer>(scorer: &mut S, tokens: &[usize], att: f64, cfg: &BeamConfig) -> Result<(f64, f64)> {
    let ctc = if cfg.ctc_weight == 0.0 {
        0.0
    } else {
        scorer.ctc_log_prob(tokens)?
    };
    Ok((att + cfg.ctc_weight * ctc + cfg.penalty * tokens.len() as f64, ctc))
}

/// `(min chars before eos, max decoder steps)` for encoder length `l`.
pub fn step_limits(cfg: &BeamConfig, l: usize) -> (usize, usize) {
    match cfg.length_bounds {
        Some((lo, hi)) => ((lo * l as f64).floor() as usize, ((hi * l as f64).floor() as usize).max(1)),
        None => (0, cfg.max_len.unwrap_or(l).max(1)),
    }
}

/// Orders candidates best-first: score descending, then tokens, then age.
pub fn rank(a: (f64, &[usize], usize), b: (f64, &[usize], usize)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2))
}

struct Live<S> {
    tokens: Vec<usize>,
    att: f64,
    state: S,
}

struct Ended {
    tokens: Vec<usize>,
    score: f64,
    att: f64,
    ctc: f64,
    age: usize,
}

pub fn beam_search<S: StepScorer>(scorer: &mut S, cfg: &BeamConfig) -> Result<BeamResult> {
    if cfg.beam == 0 {
        return Err(Error::InvalidArgument("beam must be at least 1".into()));
    }
    let (min_len, max_steps) = step_limits(cfg, scorer.input_len());
    let mut live = vec![Live {
        tokens: Vec::new(),
        att: 0.0,
        state: scorer.initial()?,
    }];
    let mut ended: Vec<Ended> = Vec::new();
    for step in 0..max_steps {
        let mut cands: Vec<Live<S::State>> = Vec::new();
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(SOS);
            let (state, logp) = scorer.step(&hyp.state, prev)?;
            if hyp.tokens.len() >= min_len {
                let att = hyp.att + logp[0];
                let (score, ctc) = hypothesis_score(scorer, &hyp.tokens, att, cfg)?;
                if score.is_finite() {
                    ended.push(Ended {
                        tokens: hyp.tokens.clone(),
                        score,
                        att,
                        ctc,
                        age: step,
                    });
                }
            }
            for (class, &lp) in logp.iter().enumerate().skip(1) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(class + 2);
                cands.push(Live {
                    tokens,
                    att: hyp.att + lp,
                    state: state.clone(),
                });
            }
        }
        cands.sort_by(|a, b| rank((a.att, &a.tokens, 0), (b.att, &b.tokens, 0)));
        cands.truncate(cfg.beam);
        live = cands;
    }
    if let Some(best) = ended
        .iter()
        .min_by(|a, b| rank((a.score, &a.tokens, a.age), (b.score, &b.tokens, b.age)))
    {
        return Ok(BeamResult {
            tokens: best.tokens.clone(),
            score: best.score,
            attention: best.att,
            ctc: best.ctc,
            terminated: true,
        });
    }
    let best = live
        .iter()
        .min_by(|a, b| rank((a.att, &a.tokens, 0), (b.att, &b.tokens, 0)))
        .ok_or_else(|| Error::NonFinite("beam search produced no hypotheses".into()))?;
    let (score, ctc) = hypothesis_score(scorer, &best.tokens, best.att, cfg)?;
    Ok(BeamResult {
        tokens: best.tokens.clone(),
        score,
        attention: best.att,
        ctc,
        terminated: false,
    })
}

/// Scorer backed by a trained recognizer on one utterance's encoder output.
pub struct AttentionScorer<'g, 'p> {
    g: &'g mut Graph<'p>,
    spec: &'g RecognizerSpec,
    vocab: &'g Vocabulary,
    mem: AttentionMemory,
    ctc: Tensor,
}

impl<'g, 'p> AttentionScorer<'g, 'p> {
    pub fn new(g: &'g mut Graph<'p>, spec: &'g RecognizerSpec, vocab: &'g Vocabulary, enc: Var) -> Result<Self> {
        let mem = AttentionMemory::new(g, enc)?;
        let lp = super::ctc_log_probs(g, enc)?;
        let ctc = g.value(lp).clone();
        Ok(Self {
            g,
            spec,
            vocab,
            mem,
            ctc,
        })
    }
}

impl StepScorer for AttentionScorer<'_, '_> {
    type State = DecoderState;

    fn initial(&mut self) -> Result<DecoderState> {
        Ok(DecoderState::initial(self.g, &self.mem, self.spec.decoder.cells))
    }

    fn step(&mut self, state: &DecoderState, prev: usize) -> Result<(DecoderState, Vec<f64>)> {
        let (next, logits) = decode_step(self.g, &self.mem, *state, prev, self.spec.attention.sharpening)?;
        let lp = self.g.log_softmax(logits)?;
        Ok((next, self.g.value(lp).data().to_vec()))
    }

    fn ctc_log_prob(&mut self, tokens: &[usize]) -> Result<f64> {
        let labels = tokens.iter().map(|&t| self.vocab.ctc_class(t)).collect::<Result<Vec<_>>>()?;
        match ctc_forward_backward(&self.ctc, &labels) {
            Ok((loss, _)) => Ok(-loss),
            Err(Error::CtcInadmissible { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    fn input_len(&self) -> usize {
        self.mem.len(self.g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A model whose next-class distribution depends only on the prefix length.
    struct Table {
        rows: Vec<Vec<f64>>,
    }

    impl StepScorer for Table {
        type State = usize;
        fn initial(&mut self) -> Result<usize> {
            Ok(0)
        }
        fn step(&mut self, s: &usize, _prev: usize) -> Result<(usize, Vec<f64>)> {
            Ok((s + 1, self.rows[(*s).min(self.rows.len() - 1)].clone()))
        }
        fn ctc_log_prob(&mut self, _tokens: &[usize]) -> Result<f64> {
            Ok(0.0)
        }
        fn input_len(&self) -> usize {
            6
        }
    }

    fn log(v: &[f64]) -> Vec<f64> {
        v.iter().map(|p| p.ln()).collect()
    }

    #[test]
    fn confident_model_decodes_greedily() {
        let mut t = Table {
            rows: vec![log(&[0.01, 0.98, 0.01]), log(&[0.01, 0.01, 0.98]), log(&[0.98, 0.01, 0.01])],
        };
        let cfg = BeamConfig {
            penalty: 0.0,
            ..BeamConfig::default()
        };
        let r = beam_search(&mut t, &cfg).unwrap();
        assert_eq!(r.tokens, vec![3, 4]);
        assert!(r.terminated);
    }

    #[test]
    fn unterminated_search_is_flagged() {
        let mut t = Table {
            rows: vec![log(&[0.0, 1.0])],
        };
        let cfg = BeamConfig {
            beam: 2,
            ctc_weight: 0.0,
            max_len: Some(3),
            ..BeamConfig::default()
        };
        let r = beam_search(&mut t, &cfg).unwrap();
        assert!(!r.terminated);
        assert_eq!(r.tokens, vec![3, 3, 3]);
    }

    #[test]
    fn length_bounds_suppress_early_eos() {
        let mut t = Table {
            rows: vec![log(&[0.9, 0.1])],
        };
        let cfg = BeamConfig {
            beam: 1,
            ctc_weight: 0.0,
            penalty: 0.0,
            length_bounds: Some((0.3, 0.75)),
            max_len: None,
        };
        let r = beam_search(&mut t, &cfg).unwrap();
        assert_eq!(r.tokens.len(), 1);
    }
}
