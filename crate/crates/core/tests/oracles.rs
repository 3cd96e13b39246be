mod common;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamspeech::autodiff::LstmWeights;
use beamspeech::beamformer::{mvdr_filter, DiagLoading};
use beamspeech::nn::{init_lstm, lstm_step, lstm_weights, BlstmSpec, InitSpec, LstmState};
use beamspeech::params::ParameterStore;
use beamspeech::recognizer::beam::{beam_search, AttentionScorer, BeamConfig, StepScorer};
use beamspeech::recognizer::ctc::ctc_forward_backward;
use beamspeech::recognizer::decoder::DecoderSpec;
use beamspeech::recognizer::{attention_loss, encode, init_recognizer, AttentionSpec, RecognizerSpec, Vocabulary, EOS, SOS};
use beamspeech::{Error, Graph, Tensor};

#[test]
fn mvdr_matches_gaussian_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in 2..=4 {
        let f = 3;
        let speech: Vec<_> = (0..f).map(|_| common::random_hpd(c, &mut rng)).collect();
        let noise: Vec<_> = (0..f).map(|_| common::random_hpd(c, &mut rng)).collect();
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let u: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut g = Graph::new();
        let s = g.complex_leaf(&common::stack(&speech));
        let n = g.complex_leaf(&common::stack(&noise));
        let uv = g.constant(Tensor::new(vec![c], u.clone()).unwrap());
        let w = mvdr_filter(&mut g, s, n, uv, DiagLoading::None).unwrap();
        let w = g.complex_value(w);
        for (fi, (sp, no)) in speech.iter().zip(&noise).enumerate() {
            let want = common::mvdr_oracle(sp, no, &u);
            for (ci, z) in want.iter().enumerate() {
                let got = Complex64::new(w.re.data()[fi * c + ci], w.im.data()[fi * c + ci]);
                assert!((got - z).norm() < 1e-10 * z.norm().max(1.0), "f={fi} c={ci}: {got} vs {z}");
            }
        }
    }
}

#[test]
fn complex_inverse_matches_gaussian_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for c in 1..=4 {
        let a = common::random_hpd(c, &mut rng);
        let eye: common::CMat = (0..c)
            .map(|i| (0..c).map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        let want = common::solve(&a, &eye);
        let mut g = Graph::new();
        let av = g.complex_leaf(&common::stack(&[a]));
        let inv = g.complex_inverse(av, None).unwrap();
        let inv = g.complex_value(inv);
        for i in 0..c {
            for j in 0..c {
                let got = Complex64::new(inv.re.data()[i * c + j], inv.im.data()[i * c + j]);
                assert!((got - want[i][j]).norm() < 1e-12, "{c}x{c} [{i},{j}]");
            }
        }
    }
}

#[test]
fn fused_lstm_matches_unrolled_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (t, d, h) = (6, 3, 4);
    let mut store = ParameterStore::new();
    let init = InitSpec {
        range: 0.5,
        forget_bias: 1.0,
    };
    init_lstm(&mut store, "l", d, h, init, &mut rng).unwrap();
    let x = Tensor::from_fn(&[t, d], |_| rng.gen_range(-1.0..1.0));
    let probe = Tensor::from_fn(&[t, h], |_| rng.gen_range(-1.0..1.0));
    for reverse in [false, true] {
        let mut g1 = Graph::with_params(&store);
        let xv = g1.leaf(x.clone());
        let w = lstm_weights(&mut g1, "l").unwrap();
        let y = g1.lstm(xv, w, reverse).unwrap();
        let p = g1.constant(probe.clone());
        let m = g1.mul(y, p).unwrap();
        let s = g1.sum(m);
        let grads1 = g1.backward(s).unwrap();
        let pg1 = g1.param_grads(&grads1);
        let gx1 = grads1.get_or_zeros(xv, &[t, d]);
        let fused = g1.value(y).clone();

        let mut g2 = Graph::with_params(&store);
        let xv2 = g2.leaf(x.clone());
        let w2: LstmWeights = lstm_weights(&mut g2, "l").unwrap();
        let mut state = LstmState::zeros(&mut g2, h);
        let mut outs = vec![None; t];
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for &step in &order {
            let row = g2.slice(xv2, 0, step, 1).unwrap();
            state = lstm_step(&mut g2, w2, row, state).unwrap();
            outs[step] = Some(state.h);
        }
        let rows: Vec<_> = outs.into_iter().map(Option::unwrap).collect();
        let y2 = g2.concat(&rows, 0).unwrap();
        let p2 = g2.constant(probe.clone());
        let m2 = g2.mul(y2, p2).unwrap();
        let s2 = g2.sum(m2);
        let grads2 = g2.backward(s2).unwrap();
        let pg2 = g2.param_grads(&grads2);
        let gx2 = grads2.get_or_zeros(xv2, &[t, d]);

        assert!(fused.max_abs_diff(g2.value(y2)) < 1e-12);
        assert!(gx1.max_abs_diff(&gx2) < 1e-12);
        for name in ["l/w", "l/u", "l/b"] {
            let diff = pg1.get(name).unwrap().max_abs_diff(pg2.get(name).unwrap());
            assert!(diff < 1e-12, "{name} reverse={reverse}: {diff:e}");
        }
    }
}

fn random_log_probs(l: usize, k: usize, rng: &mut impl Rng) -> Tensor {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_fn(&[l, k], |_| rng.gen_range(-2.0..2.0)));
    let lp = g.log_softmax(x).unwrap();
    g.value(lp).clone()
}

#[test]
fn ctc_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cases: &[(usize, &[usize])] = &[
        (1, &[]),
        (1, &[1]),
        (3, &[1, 1]),
        (4, &[2, 1, 2]),
        (5, &[1, 1, 1]),
        (5, &[3]),
        (6, &[2, 3]),
    ];
    for &(l, labels) in cases {
        let lp = random_log_probs(l, 4, &mut rng);
        let (loss, _) = ctc_forward_backward(&lp, labels).unwrap();
        let want = common::ctc_brute_force(&lp, labels);
        assert!((loss - want).abs() < 1e-10 * want.abs().max(1.0), "L={l} {labels:?}: {loss} vs {want}");
    }
}

#[test]
fn ctc_rejects_what_no_path_can_emit() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (l, labels) in [(2usize, vec![1usize, 1]), (2, vec![1, 2, 3]), (4, vec![1, 1, 1])] {
        let lp = random_log_probs(l, 4, &mut rng);
        assert!(common::ctc_brute_force(&lp, &labels).is_infinite());
        assert!(matches!(ctc_forward_backward(&lp, &labels), Err(Error::CtcInadmissible { .. })));
    }
}

fn random_recognizer(chars: usize, range: f64, rng: &mut ChaCha8Rng) -> (RecognizerSpec, Vocabulary, ParameterStore) {
    let spec = RecognizerSpec {
        input: 3,
        encoder: BlstmSpec {
            layers: 1,
            cells: 3,
            projection: 3,
            subsample: Vec::new(),
        },
        attention: AttentionSpec {
            dim: 3,
            filters: 2,
            width: 3,
            sharpening: 2.0,
        },
        decoder: DecoderSpec { embedding: 3, cells: 3 },
    };
    let alphabet: Vec<char> = "abc".chars().take(chars).collect();
    let vocab = Vocabulary::from_chars(&alphabet).unwrap();
    let mut store = ParameterStore::new();
    let init = InitSpec { range, forget_bias: 0.0 };
    init_recognizer(&mut store, &spec, &vocab, init, rng).unwrap();
    (spec, vocab, store)
}

#[test]
fn attention_loss_equals_accumulated_step_log_probs() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (spec, vocab, store) = random_recognizer(3, 0.8, &mut rng);
    let feats = Tensor::from_fn(&[5, 3], |_| rng.gen_range(-1.0..1.0));
    let target = vocab.encode("cabba").unwrap();
    let mut g = Graph::with_params(&store);
    let f = g.constant(feats);
    let enc = encode(&mut g, &spec, f).unwrap();
    let loss = attention_loss(&mut g, &spec, &vocab, enc, &target).unwrap();
    let loss = g.value(loss.loss).item();
    let mut scorer = AttentionScorer::new(&mut g, &spec, &vocab, enc).unwrap();
    let mut state = scorer.initial().unwrap();
    let mut prev = SOS;
    let mut total = 0.0;
    for &tok in target.iter().chain(std::iter::once(&EOS)) {
        let (next, lp) = scorer.step(&state, prev).unwrap();
        total += lp[vocab.decoder_class(tok).unwrap()];
        state = next;
        prev = tok;
    }
    assert!((loss + total).abs() < 1e-10, "{loss} vs {}", -total);
}

#[test]
fn wide_beam_equals_exhaustive_search_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..12 {
        let chars = rng.gen_range(1..=3);
        let (spec, vocab, store) = random_recognizer(chars, 1.5, &mut rng);
        let n = rng.gen_range(1..=4);
        let feats = Tensor::from_fn(&[n, 3], |_| rng.gen_range(-1.0..1.0));
        let mut g = Graph::with_params(&store);
        let f = g.constant(feats);
        let enc = encode(&mut g, &spec, f).unwrap();
        let cfg = BeamConfig {
            beam: 100,
            ..BeamConfig::default()
        };
        let mut scorer = AttentionScorer::new(&mut g, &spec, &vocab, enc).unwrap();
        let beam = beam_search(&mut scorer, &cfg).unwrap();
        let best = common::exhaustive_decode(&mut scorer, &cfg).expect("some hypothesis is admissible");
        assert_eq!(beam.tokens, best.tokens, "trial {trial}");
        assert!((beam.score - best.score).abs() < 1e-12, "trial {trial}");
    }
}
