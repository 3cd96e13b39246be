//! Mask-weighted spatial covariance estimation, the trace-normalized MVDR
//! filter, and attention-based reference selection.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::autodiff::complex::CVar;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::InitSpec;
use crate::params::ParameterStore;
use crate::tensor::Tensor;

/// Denominator guard for frequencies whose mask mass is exactly zero.
pub const MASK_MASS_EPS: f64 = 1e-10;
/// Traces with magnitude below this are reported as degenerate.
pub const TRACE_TOL: f64 = 1e-12;

static ZERO_MASS_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of PSD estimates (per frequency) that hit the zero-mask-mass guard
/// since process start.
pub fn zero_mass_events() -> u64 {
    ZERO_MASS_EVENTS.load(Ordering::Relaxed)
}

/// `Σ_t m_{t,f} x_{t,f} x_{t,f}† / Σ_t m_{t,f}` for x of shape T×F×C and
/// m of shape T×F. Returns F×C×C.
pub fn estimate_psd(g: &mut Graph, x: CVar, mask: Var) -> Result<CVar> {
    let xs = g.shape(x.re).to_vec();
    if xs.len() != 3 || g.shape(mask) != &xs[..2] {
        return Err(shape_err(
            "estimate_psd",
            format!("x {:?} with mask {:?}", xs, g.shape(mask)),
        ));
    }
    let (t, f) = (xs[0], xs[1]);
    let m = g.reshape(mask, &[t, f, 1])?;
    let wr = g.mul(x.re, m)?;
    let wi = g.mul(x.im, m)?;
    // F×C×T weighted, F×T×C plain
    let wr = g.permute(wr, &[1, 2, 0])?;
    let wi = g.permute(wi, &[1, 2, 0])?;
    let xr = g.permute(x.re, &[1, 0, 2])?;
    let xi = g.permute(x.im, &[1, 0, 2])?;
    let rr = g.batch_matmul(wr, xr)?;
    let ii = g.batch_matmul(wi, xi)?;
    let ir = g.batch_matmul(wi, xr)?;
    let ri = g.batch_matmul(wr, xi)?;
    let re = g.add(rr, ii)?;
    let im = g.sub(ir, ri)?;

    let mass = g.sum_axis(mask, 0)?;
    let zeros = g.value(mass).data().iter().filter(|&&v| v == 0.0).count();
    let mass = if zeros > 0 {
        ZERO_MASS_EVENTS.fetch_add(zeros as u64, Ordering::Relaxed);
        g.add_scalar(mass, MASK_MASS_EPS)
    } else {
        mass
    };
    let mass = g.reshape(mass, &[f, 1, 1])?;
    Ok(CVar {
        re: g.div(re, mass)?,
        im: g.div(im, mass)?,
    })
}

/// Diagonal loading applied to Φᴺ before inversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiagLoading {
    None,
    /// `coef · Tr(Φᴺ(f))/C`, per frequency.
    Relative(f64),
    Absolute(f64),
}

impl Default for DiagLoading {
    fn default() -> Self {
        DiagLoading::Relative(1e-7)
    }
}

/// `g(f) = (Φᴺ(f)⁻¹Φˢ(f) / Tr(Φᴺ(f)⁻¹Φˢ(f))) u` for F×C×C PSDs and a
/// length-C reference vector. Returns F×C.
pub fn mvdr_filter(g: &mut Graph, speech: CVar, noise: CVar, u: Var, loading: DiagLoading) -> Result<CVar> {
    let ps = g.shape(speech.re).to_vec();
    if ps.len() != 3 || ps[1] != ps[2] || g.shape(noise.re) != ps.as_slice() {
        return Err(shape_err(
            "mvdr",
            format!("speech {:?} vs noise {:?}", ps, g.shape(noise.re)),
        ));
    }
    let (f, c) = (ps[0], ps[1]);
    if g.shape(u) != [c] {
        return Err(shape_err("mvdr", format!("reference {:?} for {c} channels", g.shape(u))));
    }
    let load = match loading {
        DiagLoading::None => None,
        DiagLoading::Absolute(v) => Some(g.scalar(v)),
        DiagLoading::Relative(coef) => {
            let d = g.diag(noise.re)?;
            let tr = g.sum_axis(d, 1)?;
            let l = g.scale(tr, coef / c as f64);
            Some(g.reshape(l, &[f, 1, 1])?)
        }
    };
    let inv = g.complex_inverse(noise, load)?;
    let num = g.complex_batch_matmul(inv, speech)?;
    let tr = g.complex_trace(num)?;
    for k in 0..f {
        let (a, b) = (g.value(tr.re).data()[k], g.value(tr.im).data()[k]);
        let magnitude = a.hypot(b);
        if !(magnitude >= TRACE_TOL) {
            return Err(Error::DegenerateTrace { freq: k, magnitude });
        }
    }
    let tr = CVar {
        re: g.reshape(tr.re, &[f, 1, 1])?,
        im: g.reshape(tr.im, &[f, 1, 1])?,
    };
    let normalized = g.cdiv(num, tr)?;
    let col = g.reshape(u, &[c, 1])?;
    let flat_re = g.reshape(normalized.re, &[f * c, c])?;
    let flat_im = g.reshape(normalized.im, &[f * c, c])?;
    let gr = g.matmul(flat_re, col)?;
    let gi = g.matmul(flat_im, col)?;
    Ok(CVar {
        re: g.reshape(gr, &[f, c])?,
        im: g.reshape(gi, &[f, c])?,
    })
}

/// Dimensions of the reference-selection attention.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSpec {
    /// D_V.
    pub dim: usize,
    /// Sharpening factor β.
    pub sharpening: f64,
}

pub fn init_reference(store: &mut ParameterStore, spec: &ReferenceSpec, state_dim: usize, bins: usize, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    let r = init.range;
    store.insert_uniform("ref/vq", &[2 * state_dim, spec.dim], r, rng)?;
    store.insert_uniform("ref/vr", &[2 * bins, spec.dim], r, rng)?;
    store.insert_uniform("ref/b", &[spec.dim], r, rng)?;
    store.insert_uniform("ref/v", &[spec.dim, 1], r, rng)
}

/// PSD feature `r_c`: mean over `c' ≠ c` of `φˢ_{f,c,c'}`, real parts for
/// every f followed by imaginary parts. Returns C×2F; requires C ≥ 2.
pub fn psd_feature(g: &mut Graph, speech: CVar) -> Result<Var> {
    let s = g.shape(speech.re).to_vec();
    let c = s[1];
    if c < 2 {
        return Err(Error::InvalidArgument("PSD feature needs at least two channels".into()));
    }
    let mut parts = Vec::with_capacity(2);
    for m in [speech.re, speech.im] {
        let rows = g.sum_axis(m, 2)?;
        let d = g.diag(m)?;
        let off = g.sub(rows, d)?;
        let off = g.scale(off, 1.0 / (c - 1) as f64);
        parts.push(g.transpose(off)?);
    }
    g.concat(&parts, 1)
}

/// `u = softmax(β·k̃)` with `k̃_c = vᵀ tanh(V^Q q_c + V^R r_c + b̃)`, where
/// `q_c` is the time average of the channel's speech and noise mask-network
/// states. At C = 1 the answer is `[1]`.
pub fn reference_attention(g: &mut Graph, speech_states: &[Var], noise_states: &[Var], speech_psd: CVar, spec: &ReferenceSpec) -> Result<Var> {
    let c = speech_states.len();
    if c == 0 || noise_states.len() != c {
        return Err(Error::InvalidArgument("reference attention needs one state pair per channel".into()));
    }
    if c == 1 {
        return Ok(g.constant(Tensor::vector(vec![1.0])));
    }
    let mut q = Vec::with_capacity(c);
    for (&zs, &zn) in speech_states.iter().zip(noise_states) {
        let both = g.concat(&[zs, zn], 1)?;
        let avg = g.mean_axis(both, 0)?;
        let d = g.shape(avg)[0];
        q.push(g.reshape(avg, &[1, d])?);
    }
    let q = g.concat(&q, 0)?;
    let r = psd_feature(g, speech_psd)?;
    let vq = g.param("ref/vq")?;
    let vr = g.param("ref/vr")?;
    let b = g.param("ref/b")?;
    let v = g.param("ref/v")?;
    let a = g.matmul(q, vq)?;
    let bb = g.matmul(r, vr)?;
    let z = g.add(a, bb)?;
    let z = g.add(z, b)?;
    let e = g.tanh(z);
    let k = g.matmul(e, v)?;
    let k = g.reshape(k, &[c])?;
    g.softmax(k, spec.sharpening)
}
