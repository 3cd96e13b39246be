//! LSTM decoder: `s_n = Update(s_{n−1}, c_{n−1}, y_{n−1})`, then attention,
//! then `Generate(s_n, c_n)` as a linear layer over the decoder classes.

use rand::Rng;

use super::attention::{attend, AttentionMemory};
use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::nn::{init_linear, init_lstm, linear, lstm_step, lstm_weights, InitSpec, LstmState};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderSpec {
    pub embedding: usize,
    /// D_S.
    pub cells: usize,
}

pub fn init_decoder(
    store: &mut ParameterStore,
    spec: &DecoderSpec,
    vocab_len: usize,
    classes: usize,
    enc_dim: usize,
    init: InitSpec,
    rng: &mut impl Rng,
) -> Result<()> {
    store.insert_uniform("dec/emb", &[vocab_len, spec.embedding], init.range, rng)?;
    init_lstm(store, "dec/lstm", spec.embedding + enc_dim, spec.cells, init, rng)?;
    init_linear(store, "dec/out", spec.cells + enc_dim, classes, init, rng)
}

/// Recurrent decoder state after emitting some prefix.
#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub lstm: LstmState,
    /// Previous context, 1×D_H.
    pub context: Var,
    /// Previous attention weights, length L.
    pub weights: Var,
}

impl DecoderState {
    /// Zero state and context with uniform initial attention.
    pub fn initial(g: &mut Graph, mem: &AttentionMemory, cells: usize) -> Self {
        let l = mem.len(g);
        let dh = g.shape(mem.states)[1];
        let lstm = LstmState::zeros(g, cells);
        let context = g.constant(Tensor::zeros(&[1, dh]));
        let weights = g.constant(Tensor::full(&[l], 1.0 / l as f64));
        Self {
            lstm,
            context,
            weights,
        }
    }
}

/// Consumes token `prev` and returns the new state and 1×K logits.
pub fn decode_step(g: &mut Graph, mem: &AttentionMemory, state: DecoderState, prev: usize, sharpening: f64) -> Result<(DecoderState, Var)> {
    let emb = g.param("dec/emb")?;
    let y = g.select_rows(emb, &[prev])?;
    let x = g.concat(&[y, state.context], 1)?;
    let w = lstm_weights(g, "dec/lstm")?;
    let lstm = lstm_step(g, w, x, state.lstm)?;
    let (weights, context) = attend(g, mem, state.weights, lstm.h, sharpening)?;
    let sc = g.concat(&[lstm.h, context], 1)?;
    let logits = linear(g, "dec/out", sc)?;
    Ok((
        DecoderState {
            lstm,
            context,
            weights,
        },
        logits,
    ))
}
