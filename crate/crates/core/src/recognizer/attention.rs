//! Location-based attention over encoder states.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::nn::InitSpec;
use crate::params::ParameterStore;

/// Dimensions of the attention network.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSpec {
    /// Inner product dimension D_W.
    pub dim: usize,
    /// Number of convolution filters D_F.
    pub filters: usize,
    /// Convolution width (odd, centered).
    pub width: usize,
    /// Sharpening factor α.
    pub sharpening: f64,
}

pub fn init_attention(
    store: &mut ParameterStore,
    spec: &AttentionSpec,
    state_dim: usize,
    enc_dim: usize,
    init: InitSpec,
    rng: &mut impl Rng,
) -> Result<()> {
    let r = init.range;
    store.insert_uniform("att/vs", &[state_dim, spec.dim], r, rng)?;
    store.insert_uniform("att/vh", &[enc_dim, spec.dim], r, rng)?;
    store.insert_uniform("att/vf", &[spec.filters, spec.dim], r, rng)?;
    store.insert_uniform("att/b", &[spec.dim], r, rng)?;
    store.insert_uniform("att/w", &[spec.dim, 1], r, rng)?;
    store.insert_uniform("att/conv", &[spec.filters, spec.width], r, rng)
}

/// Encoder states with their utterance-constant projection `H·V^H`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMemory {
    pub states: Var,
    projected: Var,
}

impl AttentionMemory {
    pub fn new(g: &mut Graph, states: Var) -> Result<Self> {
        if g.shape(states).len() != 2 {
            return Err(shape_err("attention", format!("expected L×D_H, got {:?}", g.shape(states))));
        }
        let vh = g.param("att/vh")?;
        let projected = g.matmul(states, vh)?;
        Ok(Self { states, projected })
    }

    pub fn len(&self, g: &Graph) -> usize {
        g.shape(self.states)[0]
    }
}

/// One attention step: `prev` is the length-L previous weight vector and
/// `s` the 1×D_S decoder state. Returns `(a_n, c_n)` with `c_n` of shape 1×D_H.
pub fn attend(g: &mut Graph, mem: &AttentionMemory, prev: Var, s: Var, sharpening: f64) -> Result<(Var, Var)> {
    let l = mem.len(g);
    let conv = g.param("att/conv")?;
    let vs = g.param("att/vs")?;
    let vf = g.param("att/vf")?;
    let b = g.param("att/b")?;
    let w = g.param("att/w")?;
    let f = g.conv1d(prev, conv)?;
    let ff = g.matmul(f, vf)?;
    let ss = g.matmul(s, vs)?;
    let z = g.add(mem.projected, ff)?;
    let z = g.add(z, ss)?;
    let z = g.add(z, b)?;
    let e = g.tanh(z);
    let k = g.matmul(e, w)?;
    let k = g.reshape(k, &[l])?;
    let a = g.softmax(k, sharpening)?;
    let row = g.reshape(a, &[1, l])?;
    let c = g.matmul(row, mem.states)?;
    Ok((a, c))
}
