//! Neural beamformers mapping a multichannel STFT to one enhanced STFT.
//!
//! Two estimators feed the same filter-and-sum core: a filter estimation
//! network that predicts time-variant filters directly, and mask estimation
//! networks whose averaged masks drive a time-invariant MVDR filter with an
//! attention-selected reference channel. Parameter namespaces are `fnet/`,
//! `mask/` and `ref/`.

pub mod mvdr;

use rand::Rng;

use crate::autodiff::complex::{CVar, ComplexTensor};
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{blstm_stack, init_blstm, init_linear, linear, BlstmSpec, InitSpec};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub use mvdr::{estimate_psd, mvdr_filter, psd_feature, reference_attention, zero_mass_events, DiagLoading, ReferenceSpec};

/// Filter coefficients for [`filter_and_sum`].
#[derive(Clone, Copy, Debug)]
pub enum BeamformingFilter {
    /// F×C, shared by every frame.
    TimeInvariant(CVar),
    /// T×F×C.
    TimeVariant(CVar),
}

/// `x̂_{t,f} = Σ_c conj(g_{t,f,c}) x_{t,f,c}` for x of shape T×F×C.
pub fn filter_and_sum(g: &mut Graph, x: CVar, filter: BeamformingFilter) -> Result<CVar> {
    let xs = g.shape(x.re).to_vec();
    if xs.len() != 3 {
        return Err(shape_err("filter_and_sum", format!("expected T×F×C input, got {xs:?}")));
    }
    let w = match filter {
        BeamformingFilter::TimeInvariant(w) => {
            if g.shape(w.re) != &xs[1..] {
                return Err(Error::ChannelMismatch {
                    expected: g.shape(w.re).last().copied().unwrap_or(0),
                    got: xs[2],
                });
            }
            w
        }
        BeamformingFilter::TimeVariant(w) => {
            if g.shape(w.re) != xs.as_slice() {
                return Err(Error::ChannelMismatch {
                    expected: g.shape(w.re).last().copied().unwrap_or(0),
                    got: xs[2],
                });
            }
            w
        }
    };
    let gc = g.conj(w);
    let prod = g.cmul(gc, x)?;
    Ok(CVar {
        re: g.sum_axis(prod.re, 2)?,
        im: g.sum_axis(prod.im, 2)?,
    })
}

/// Channel `c` of a T×F×C node, as T×F.
pub fn channel(g: &mut Graph, x: CVar, c: usize) -> Result<CVar> {
    let s = g.shape(x.re).to_vec();
    let take = |g: &mut Graph, v: Var| -> Result<Var> {
        let sl = g.slice(v, 2, c, 1)?;
        g.reshape(sl, &s[..2])
    };
    Ok(CVar {
        re: take(g, x.re)?,
        im: take(g, x.im)?,
    })
}

/// Which front end produces the recognizer input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeamformerKind {
    /// Channel 0, no enhancement.
    Noisy,
    FilterNet,
    MaskMvdr,
}

impl BeamformerKind {
    pub fn name(self) -> &'static str {
        match self {
            BeamformerKind::Noisy => "noisy",
            BeamformerKind::FilterNet => "filter_net",
            BeamformerKind::MaskMvdr => "mask_mvdr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noisy" => Ok(BeamformerKind::Noisy),
            "filter_net" => Ok(BeamformerKind::FilterNet),
            "mask_mvdr" => Ok(BeamformerKind::MaskMvdr),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected noisy, filter_net or mask_mvdr)"
            ))),
        }
    }
}

/// How the MVDR reference vector is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceMode {
    Attention,
    /// One-hot on a fixed channel.
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSpec {
    pub kind: BeamformerKind,
    /// STFT bins F.
    pub bins: usize,
    /// Channel count the filter estimation network is built for.
    pub channels: usize,
    pub filter_net: BlstmSpec,
    pub mask_net: BlstmSpec,
    pub reference: ReferenceSpec,
    pub reference_mode: ReferenceMode,
    pub loading: DiagLoading,
}

pub fn init_beamformer(store: &mut ParameterStore, spec: &BeamformerSpec, init: InitSpec, rng: &mut impl Rng) -> Result<()> {
    let f = spec.bins;
    match spec.kind {
        BeamformerKind::Noisy => Ok(()),
        BeamformerKind::FilterNet => {
            let n = &spec.filter_net;
            init_blstm(store, "fnet/blstm", 2 * f * spec.channels, n, init, rng)?;
            for c in 0..spec.channels {
                init_linear(store, &format!("fnet/re{c}"), n.projection, f, init, rng)?;
                init_linear(store, &format!("fnet/im{c}"), n.projection, f, init, rng)?;
            }
            Ok(())
        }
        BeamformerKind::MaskMvdr => {
            let n = &spec.mask_net;
            for which in ["s", "n"] {
                init_blstm(store, &format!("mask/{which}"), 2 * f, n, init, rng)?;
                init_linear(store, &format!("mask/{which}/out"), n.projection, f, init, rng)?;
            }
            if spec.reference_mode == ReferenceMode::Attention {
                mvdr::init_reference(store, &spec.reference, n.projection, f, init, rng)?;
            }
            Ok(())
        }
    }
}

/// Time-variant filters from the filter estimation network. The network is
/// sized for a fixed channel count and rejects any other.
pub fn filter_net_forward(g: &mut Graph, spec: &BeamformerSpec, x: CVar) -> Result<BeamformingFilter> {
    let s = g.shape(x.re).to_vec();
    if s.len() != 3 || s[1] != spec.bins {
        return Err(shape_err("filter_net", format!("expected T×{}×C input, got {s:?}", spec.bins)));
    }
    if s[2] != spec.channels {
        return Err(Error::ChannelMismatch {
            expected: spec.channels,
            got: s[2],
        });
    }
    let (t, f, c) = (s[0], s[1], s[2]);
    let re = g.reshape(x.re, &[t, f * c])?;
    let im = g.reshape(x.im, &[t, f * c])?;
    let input = g.concat(&[re, im], 1)?;
    let z = blstm_stack(g, "fnet/blstm", &spec.filter_net, input)?;
    let mut heads_re = Vec::with_capacity(c);
    let mut heads_im = Vec::with_capacity(c);
    for ch in 0..c {
        for (name, out) in [("re", &mut heads_re), ("im", &mut heads_im)] {
            let h = linear(g, &format!("fnet/{name}{ch}"), z)?;
            let h = g.tanh(h);
            out.push(g.reshape(h, &[t, f, 1])?);
        }
    }
    Ok(BeamformingFilter::TimeVariant(CVar {
        re: g.concat(&heads_re, 2)?,
        im: g.concat(&heads_im, 2)?,
    }))
}

/// Outputs of the shared mask network on one channel.
#[derive(Clone, Copy, Debug)]
pub struct ChannelMasks {
    /// T×F speech mask.
    pub speech: Var,
    /// T×F noise mask.
    pub noise: Var,
    /// T×D_Z speech network states.
    pub speech_states: Var,
    /// T×D_Z noise network states.
    pub noise_states: Var,
}

/// Speech and noise masks for one T×F channel spectrogram.
pub fn mask_net_forward(g: &mut Graph, spec: &BeamformerSpec, xc: CVar) -> Result<ChannelMasks> {
    let input = g.concat(&[xc.re, xc.im], 1)?;
    let mut out = [input; 4];
    for (k, which) in ["s", "n"].into_iter().enumerate() {
        let z = blstm_stack(g, &format!("mask/{which}"), &spec.mask_net, input)?;
        let logits = linear(g, &format!("mask/{which}/out"), z)?;
        out[k] = g.sigmoid(logits);
        out[2 + k] = z;
    }
    Ok(ChannelMasks {
        speech: out[0],
        noise: out[1],
        speech_states: out[2],
        noise_states: out[3],
    })
}

/// Channel average of T×F masks.
pub fn average_masks(g: &mut Graph, masks: &[Var]) -> Result<Var> {
    let (&first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no masks to average".into()))?;
    let mut acc = first;
    for &m in rest {
        acc = g.add(acc, m)?;
    }
    Ok(g.scale(acc, 1.0 / masks.len() as f64))
}

/// Intermediate quantities of a mask-based MVDR pass.
#[derive(Clone, Debug)]
pub struct MvdrTrace {
    pub channel_masks: Vec<ChannelMasks>,
    pub speech_mask: Var,
    pub noise_mask: Var,
    pub reference: Var,
    pub filter: CVar,
}

/// Enhanced T×F spectrogram plus, for the MVDR variant, its intermediates.
#[derive(Clone, Debug)]
pub struct Enhanced {
    pub output: CVar,
    pub mvdr: Option<MvdrTrace>,
}

/// MVDR enhancement driven by externally supplied T×F masks.
pub fn mvdr_with_masks(g: &mut Graph, x: CVar, speech_mask: Var, noise_mask: Var, u: Var, loading: DiagLoading) -> Result<CVar> {
    let ps = estimate_psd(g, x, speech_mask)?;
    let pn = estimate_psd(g, x, noise_mask)?;
    let w = mvdr_filter(g, ps, pn, u, loading)?;
    filter_and_sum(g, x, BeamformingFilter::TimeInvariant(w))
}

/// `Enhance(·)`: multichannel T×F×C to enhanced T×F.
pub fn enhance(g: &mut Graph, spec: &BeamformerSpec, x: CVar) -> Result<Enhanced> {
    let s = g.shape(x.re).to_vec();
    if s.len() != 3 {
        return Err(shape_err("enhance", format!("expected T×F×C input, got {s:?}")));
    }
    let c = s[2];
    match spec.kind {
        BeamformerKind::Noisy => Ok(Enhanced {
            output: channel(g, x, 0)?,
            mvdr: None,
        }),
        BeamformerKind::FilterNet => {
            let w = filter_net_forward(g, spec, x)?;
            Ok(Enhanced {
                output: filter_and_sum(g, x, w)?,
                mvdr: None,
            })
        }
        BeamformerKind::MaskMvdr => {
            let mut per = Vec::with_capacity(c);
            for ch in 0..c {
                let xc = channel(g, x, ch)?;
                per.push(mask_net_forward(g, spec, xc)?);
            }
            let ms: Vec<Var> = per.iter().map(|m| m.speech).collect();
            let mn: Vec<Var> = per.iter().map(|m| m.noise).collect();
            let speech_mask = average_masks(g, &ms)?;
            let noise_mask = average_masks(g, &mn)?;
            let ps = estimate_psd(g, x, speech_mask)?;
            let pn = estimate_psd(g, x, noise_mask)?;
            let u = match spec.reference_mode {
                ReferenceMode::Fixed(r) => {
                    if r >= c {
                        return Err(Error::ChannelMismatch { expected: r + 1, got: c });
                    }
                    g.constant(Tensor::from_fn(&[c], |i| if i == r { 1.0 } else { 0.0 }))
                }
                ReferenceMode::Attention => {
                    let zs: Vec<Var> = per.iter().map(|m| m.speech_states).collect();
                    let zn: Vec<Var> = per.iter().map(|m| m.noise_states).collect();
                    reference_attention(g, &zs, &zn, ps, &spec.reference)?
                }
            };
            let w = mvdr_filter(g, ps, pn, u, spec.loading)?;
            let output = filter_and_sum(g, x, BeamformingFilter::TimeInvariant(w))?;
            Ok(Enhanced {
                output,
                mvdr: Some(MvdrTrace {
                    channel_masks: per,
                    speech_mask,
                    noise_mask,
                    reference: u,
                    filter: w,
                }),
            })
        }
    }
}

/// Evaluates [`enhance`] without recording gradients for the caller.
pub fn enhance_value(store: &ParameterStore, spec: &BeamformerSpec, x: &ComplexTensor) -> Result<ComplexTensor> {
    let mut g = Graph::with_params(store);
    let xv = g.complex_leaf(x);
    let out = enhance(&mut g, spec, xv)?;
    Ok(g.complex_value(out.output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_ct(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor {
        ComplexTensor::new(
            Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)),
            Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap()
    }

    pub(crate) fn tiny_spec(kind: BeamformerKind, bins: usize, channels: usize) -> BeamformerSpec {
        let net = BlstmSpec {
            layers: 1,
            cells: 3,
            projection: 3,
            subsample: vec![],
        };
        BeamformerSpec {
            kind,
            bins,
            channels,
            filter_net: net.clone(),
            mask_net: net,
            reference: ReferenceSpec { dim: 3, sharpening: 2.0 },
            reference_mode: ReferenceMode::Attention,
            loading: DiagLoading::default(),
        }
    }

    #[test]
    fn one_hot_filter_selects_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_ct(&[4, 3, 2], &mut rng);
        let mut g = Graph::new();
        let xv = g.complex_leaf(&x);
        let w = ComplexTensor::new(Tensor::from_fn(&[3, 2], |i| (i % 2) as f64), Tensor::zeros(&[3, 2])).unwrap();
        let wv = g.complex_leaf(&w);
        let y = filter_and_sum(&mut g, xv, BeamformingFilter::TimeInvariant(wv)).unwrap();
        let ch = channel(&mut g, xv, 1).unwrap();
        assert_eq!(g.complex_value(y), g.complex_value(ch));
    }

    #[test]
    fn filter_and_sum_matches_per_bin_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_ct(&[3, 2, 3], &mut rng);
        let w = random_ct(&[3, 2, 3], &mut rng);
        let mut g = Graph::new();
        let (xv, wv) = (g.complex_leaf(&x), g.complex_leaf(&w));
        let yv = filter_and_sum(&mut g, xv, BeamformingFilter::TimeVariant(wv)).unwrap();
        let y = g.complex_value(yv);
        for bin in 0..6 {
            let (mut re, mut im) = (0.0, 0.0);
            for c in 0..3 {
                let (gr, gi) = w.get(bin * 3 + c);
                let (xr, xi) = x.get(bin * 3 + c);
                re += gr * xr + gi * xi;
                im += gr * xi - gi * xr;
            }
            let (yr, yi) = y.get(bin);
            assert!((yr - re).abs() < 1e-12 && (yi - im).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_net_zero_weights_and_bounds() {
        let spec = tiny_spec(BeamformerKind::FilterNet, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_ct(&[5, 3, 2], &mut rng);
        let zero = InitSpec {
            range: 0.0,
            forget_bias: 0.0,
        };
        let mut store = ParameterStore::new();
        init_beamformer(&mut store, &spec, zero, &mut rng).unwrap();
        let y = enhance_value(&store, &spec, &x).unwrap();
        assert!(y.re.data().iter().chain(y.im.data()).all(|&v| v == 0.0));

        let mut store = ParameterStore::new();
        let big = InitSpec {
            range: 3.0,
            forget_bias: 0.0,
        };
        init_beamformer(&mut store, &spec, big, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let xv = g.complex_leaf(&x);
        let BeamformingFilter::TimeVariant(w) = filter_net_forward(&mut g, &spec, xv).unwrap() else {
            panic!("time-variant expected")
        };
        let wv = g.complex_value(w);
        assert!(wv.re.data().iter().chain(wv.im.data()).all(|v| v.abs() < 1.0));

        let x3 = random_ct(&[5, 3, 3], &mut rng);
        let xv3 = g.complex_leaf(&x3);
        assert!(matches!(
            filter_net_forward(&mut g, &spec, xv3),
            Err(Error::ChannelMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn zero_output_layer_gives_half_masks() {
        let spec = tiny_spec(BeamformerKind::MaskMvdr, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::new();
        init_beamformer(&mut store, &spec, InitSpec::default(), &mut rng).unwrap();
        for name in ["mask/s/out/w", "mask/s/out/b", "mask/n/out/w", "mask/n/out/b"] {
            let shape = store.get(name).unwrap().shape().to_vec();
            store.set(name, Tensor::zeros(&shape)).unwrap();
        }
        let x = random_ct(&[4, 3], &mut rng);
        let mut g = Graph::with_params(&store);
        let xv = g.complex_leaf(&x);
        let m = mask_net_forward(&mut g, &spec, xv).unwrap();
        assert!(g.value(m.speech).data().iter().all(|&v| v == 0.5));
        assert!(g.value(m.noise).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn averaging_masks() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 2]));
        let b = g.constant(Tensor::ones(&[2, 2]));
        let m = average_masks(&mut g, &[a, b]).unwrap();
        assert!(g.value(m).data().iter().all(|&v| v == 0.5));
        assert!(average_masks(&mut g, &[]).is_err());
    }

    #[test]
    fn single_channel_mvdr_is_identity() {
        let spec = tiny_spec(BeamformerKind::MaskMvdr, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new();
        init_beamformer(&mut store, &spec, InitSpec::default(), &mut rng).unwrap();
        let x = random_ct(&[6, 3, 1], &mut rng);
        let y = enhance_value(&store, &spec, &x).unwrap();
        for i in 0..y.len() {
            let (a, b) = (y.get(i), x.get(i));
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_mvdr_is_channel_permutation_invariant() {
        let spec = tiny_spec(BeamformerKind::MaskMvdr, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParameterStore::new();
        init_beamformer(&mut store, &spec, InitSpec { range: 0.5, forget_bias: 0.0 }, &mut rng).unwrap();
        let x = random_ct(&[8, 3, 3], &mut rng);
        let perm = [2, 0, 1];
        let xp = ComplexTensor::new(
            Tensor::from_fn(&[8, 3, 3], |i| x.re.data()[i - i % 3 + perm[i % 3]]),
            Tensor::from_fn(&[8, 3, 3], |i| x.im.data()[i - i % 3 + perm[i % 3]]),
        )
        .unwrap();
        let a = enhance_value(&store, &spec, &x).unwrap();
        let b = enhance_value(&store, &spec, &xp).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }
}
