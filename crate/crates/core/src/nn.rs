//! Layer building blocks shared by the beamformer and recognizer networks.
//!
//! Parameters are addressed by `/`-separated names in a [`ParameterStore`];
//! each builder has a matching `init_*` function that registers the shapes it
//! expects.

use rand::Rng;

use crate::autodiff::{Graph, LstmWeights, Var};
use crate::error::{shape_err, Error, Result};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

/// Initialization of a freshly created model.
#[derive(Clone, Copy, Debug)]
pub struct InitSpec {
    /// Every parameter is drawn from `U[-range, range]`.
    pub range: f64,
    /// Added to the forget-gate slice of every LSTM bias after sampling.
    pub forget_bias: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            range: 0.1,
            forget_bias: 0.0,
        }
    }
}

pub fn init_linear(store: &mut ParameterStore, name: &str, input: usize, output: usize, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    store.insert_uniform(&format!("{name}/w"), &[input, output], init.range, rng)?;
    store.insert_uniform(&format!("{name}/b"), &[output], init.range, rng)
}

/// `x · W + b` for x of shape N×input.
pub fn linear(g: &mut Graph, name: &str, x: Var) -> Result<Var> {
    let w = g.param(&format!("{name}/w"))?;
    let b = g.param(&format!("{name}/b"))?;
    let xw = g.matmul(x, w)?;
    g.add(xw, b)
}

pub fn init_lstm(store: &mut ParameterStore, name: &str, input: usize, cells: usize, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    store.insert_uniform(&format!("{name}/w"), &[input, 4 * cells], init.range, rng)?;
    store.insert_uniform(&format!("{name}/u"), &[cells, 4 * cells], init.range, rng)?;
    let mut b = Tensor::from_fn(&[4 * cells], |_| rng.gen_range(-init.range..=init.range));
    for v in &mut b.data_mut()[cells..2 * cells] {
        *v += init.forget_bias;
    }
    store.insert(&format!("{name}/b"), b)
}

pub fn lstm_weights(g: &mut Graph, name: &str) -> Result<LstmWeights> {
    Ok(LstmWeights {
        w: g.param(&format!("{name}/w"))?,
        u: g.param(&format!("{name}/u"))?,
        b: g.param(&format!("{name}/b"))?,
    })
}

/// Recurrent state of a single LSTM cell, each 1×H.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, cells: usize) -> Self {
        let h = g.constant(Tensor::zeros(&[1, cells]));
        let c = g.constant(Tensor::zeros(&[1, cells]));
        Self { h, c }
    }
}

/// One LSTM step built from primitive ops; `x` is 1×D.
pub fn lstm_step(g: &mut Graph, weights: LstmWeights, x: Var, state: LstmState) -> Result<LstmState> {
    let cells = g.shape(state.h)[1];
    let xw = g.matmul(x, weights.w)?;
    let hu = g.matmul(state.h, weights.u)?;
    let z = g.add(xw, hu)?;
    let z = g.add(z, weights.b)?;
    let zi = g.slice(z, 1, 0, cells)?;
    let zf = g.slice(z, 1, cells, cells)?;
    let zg = g.slice(z, 1, 2 * cells, cells)?;
    let zo = g.slice(z, 1, 3 * cells, cells)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Shape of a stacked BLSTM with a linear projection after every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BlstmSpec {
    pub layers: usize,
    pub cells: usize,
    pub projection: usize,
    /// Layers (0-based) whose projected outputs keep only every second frame.
    pub subsample: Vec<usize>,
}

impl BlstmSpec {
    /// Output length for an input of `t` frames.
    pub fn output_len(&self, t: usize) -> usize {
        (0..self.layers)
            .filter(|l| self.subsample.contains(l))
            .fold(t, |n, _| n / 2)
    }
}

pub fn init_blstm(store: &mut ParameterStore, name: &str, input: usize, spec: &BlstmSpec, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    let mut dim = input;
    for l in 0..spec.layers {
        init_lstm(store, &format!("{name}/l{l}/fw"), dim, spec.cells, init, rng)?;
        init_lstm(store, &format!("{name}/l{l}/bw"), dim, spec.cells, init, rng)?;
        init_linear(store, &format!("{name}/l{l}/proj"), 2 * spec.cells, spec.projection, init, rng)?;
        dim = spec.projection;
    }
    Ok(())
}

/// One bidirectional layer: forward and backward LSTMs, concatenated, then
/// projected. T×D → T×projection.
pub fn blstm_layer(g: &mut Graph, name: &str, x: Var) -> Result<Var> {
    let fw = lstm_weights(g, &format!("{name}/fw"))?;
    let bw = lstm_weights(g, &format!("{name}/bw"))?;
    let hf = g.lstm(x, fw, false)?;
    let hb = g.lstm(x, bw, true)?;
    let both = g.concat(&[hf, hb], 1)?;
    linear(g, &format!("{name}/proj"), both)
}

/// Stacked BLSTM. Subsampling keeps frames 0, 2, 4, … (⌊T/2⌋ of them).
pub fn blstm_stack(g: &mut Graph, name: &str, spec: &BlstmSpec, x: Var) -> Result<Var> {
    if g.shape(x).len() != 2 {
        return Err(shape_err("blstm", format!("expected T×D input, got {:?}", g.shape(x))));
    }
    let mut h = x;
    for l in 0..spec.layers {
        h = blstm_layer(g, &format!("{name}/l{l}"), h)?;
        if spec.subsample.contains(&l) {
            let t = g.shape(h)[0];
            if t < 2 {
                return Err(Error::InvalidArgument(format!(
                    "sequence too short to subsample at layer {l} ({t} frames)"
                )));
            }
            let rows: Vec<usize> = (0..t / 2).map(|i| 2 * i).collect();
            h = g.select_rows(h, &rows)?;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_outputs() {
        let spec = BlstmSpec {
            layers: 2,
            cells: 3,
            projection: 4,
            subsample: vec![],
        };
        let mut store = ParameterStore::new();
        let init = InitSpec {
            range: 0.0,
            forget_bias: 0.0,
        };
        init_blstm(&mut store, "enc", 5, &spec, init, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::zeros(&[6, 5]));
        let y = blstm_stack(&mut g, "enc", &spec, x).unwrap();
        assert_eq!(g.shape(y), &[6, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_runs_both_directions_identically() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        init_lstm(&mut store, "a", 4, 3, InitSpec::default(), &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::from_fn(&[1, 4], |i| 0.3 * i as f64 - 0.4));
        let w = lstm_weights(&mut g, "a").unwrap();
        let f = g.lstm(x, w, false).unwrap();
        let b = g.lstm(x, w, true).unwrap();
        assert_eq!(g.value(f), g.value(b));
    }

    #[test]
    fn subsampled_length_floors_twice() {
        let spec = BlstmSpec {
            layers: 3,
            cells: 2,
            projection: 2,
            subsample: vec![0, 1],
        };
        assert_eq!(spec.output_len(8), 2);
        assert_eq!(spec.output_len(10), 2);
        assert_eq!(spec.output_len(15), 3);
    }
}
