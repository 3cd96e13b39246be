//! Acceptance harness: one pass/fail line per criterion.
//!
//! Failing criteria are reported but only change the exit status when
//! `ACCEPTANCE_STRICT` is set.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamspeech::autodiff::gradcheck::check_params;
use beamspeech::beamformer::{mvdr_filter, BeamformerKind, DiagLoading};
use beamspeech::config::RunConfig;
use beamspeech::corpus::{build_corpus, load_split, plan_corpus, regenerate, synth_utterance, CorpusConfig, NoiseKind, SceneSpec, Split, Utterance};
use beamspeech::eval::{channel_accuracy, oracle_enhance, recognize_all, score};
use beamspeech::model::{InputPath, Model};
use beamspeech::nn::{BlstmSpec, InitSpec};
use beamspeech::recognizer::beam::{beam_search, AttentionScorer, BeamConfig};
use beamspeech::recognizer::ctc::ctc_forward_backward;
use beamspeech::recognizer::decoder::DecoderSpec;
use beamspeech::recognizer::{encode, init_recognizer, AttentionSpec, RecognizerSpec, Vocabulary};
use beamspeech::signal::{istft, stft_channel, StftParams};
use beamspeech::train::{self, checkpoint_path, prepare, Example, METRICS_FILE};
use beamspeech::{Error, Graph, ParameterStore, Tensor};

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-3;
const MVDR_TOL: f64 = 1e-10;
const CTC_TOL: f64 = 1e-10;
const PERMUTATION_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-9;
const ROUNDTRIP_TOL: f64 = 1e-8;
const ORACLE_GAIN_DB: f64 = 3.0;
const NORM_TOL: f64 = 1e-9;
const COMPARATIVE_EPOCHS: usize = 15;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, String>;

fn err(e: Error) -> String {
    e.to_string()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn examples(model: &Model, utts: &[Utterance]) -> Result<Vec<Example>, String> {
    utts.iter()
        .map(|u| {
            Ok(Example {
                id: u.id.clone(),
                text: u.transcript.clone(),
                stft: model.analyze(&u.noisy).map_err(err)?,
                target: model.vocab.encode(&u.transcript).map_err(err)?,
            })
        })
        .collect()
}

/// Freshly synthesized utterances from the training split plan of a corpus
/// with `channels` microphones.
fn scenes(channels: usize, seed: u64, count: usize) -> Result<Vec<Utterance>, String> {
    let cfg = CorpusConfig {
        seed,
        channels,
        train: count,
        dev: 1,
        eval: 1,
        ..CorpusConfig::default()
    };
    plan_corpus(&cfg)
        .map_err(err)?
        .into_iter()
        .filter(|(s, _)| *s == Split::Train)
        .map(|(_, e)| regenerate(&cfg, &e).map_err(err))
        .collect()
}

/// Default corpus with a noisy baseline and a mask_mvdr model trained on it
/// under the shipped tiny defaults.
struct Shared {
    _dir: tempfile::TempDir,
    corpus: CorpusConfig,
    noisy: (Model, ParameterStore),
    mvdr: (Model, ParameterStore),
    train_set: Vec<Example>,
    eval_set: Vec<Example>,
    train_secs: f64,
}

fn train_variant(kind: BeamformerKind, corpus: &CorpusConfig, tr: &[Example], dv: &[Example], out: &std::path::Path) -> Result<(Model, ParameterStore), String> {
    let mut cfg = RunConfig::default();
    cfg.variant = kind;
    cfg.epochs = COMPARATIVE_EPOCHS;
    cfg.corpus = corpus.clone();
    let model = Model::new(cfg, corpus.vocabulary().map_err(err)?).map_err(err)?;
    let mut store = model.init_params(&mut ChaCha8Rng::seed_from_u64(model.config.seed)).map_err(err)?;
    let norm = model.fit_normalizer(tr.iter().map(|e| &e.stft)).map_err(err)?;
    model.set_normalizer(&mut store, &norm).map_err(err)?;
    train::train(&model, &mut store, tr, dv, out, |_| {}).map_err(err)?;
    Ok((model, store))
}

fn build_shared() -> Result<Shared, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = CorpusConfig::default();
    let data = dir.path().join("data");
    build_corpus(&corpus, &data).map_err(err)?;
    let probe = Model::new(RunConfig::default(), corpus.vocabulary().map_err(err)?).map_err(err)?;
    let load = |split| -> Result<Vec<Example>, String> { prepare(&probe, &load_split(&data, split).map_err(err)?).map_err(err) };
    let (tr, dv, ev) = (load(Split::Train)?, load(Split::Dev)?, load(Split::Eval)?);
    let noisy = train_variant(BeamformerKind::Noisy, &corpus, &tr, &dv, &dir.path().join("noisy"))?;
    let mvdr = train_variant(BeamformerKind::MaskMvdr, &corpus, &tr, &dv, &dir.path().join("mask_mvdr"))?;
    Ok(Shared {
        _dir: dir,
        corpus,
        noisy,
        mvdr,
        train_set: tr,
        eval_set: ev,
        train_secs: start.elapsed().as_secs_f64(),
    })
}

fn shared() -> Result<&'static Shared, String> {
    static SHARED: OnceLock<Result<Shared, String>> = OnceLock::new();
    SHARED.get_or_init(build_shared).as_ref().map_err(Clone::clone)
}

fn gradient_integrity() -> Result<Outcome, String> {
    let mut worst = (0.0f64, String::new());
    let mut groups = 0;
    let vocab = Vocabulary::from_chars(&['a', 'b', 'c']).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for kind in [BeamformerKind::MaskMvdr, BeamformerKind::FilterNet] {
        let model = Model::new(common::gradcheck_config(kind), vocab.clone()).map_err(err)?;
        let store = model.init_params(&mut rng).map_err(err)?;
        let x = common::random_complex(&[16, 9, 2], 1.0, &mut rng);
        let target = vocab.encode("abca").map_err(err)?;
        let reports = check_params(&store, GRAD_STEP, None, |g| {
            let xv = g.complex_leaf(&x);
            Ok(model.loss(g, xv, &target, InputPath::Enhanced)?.loss)
        })
        .map_err(err)?;
        for r in reports {
            groups += 1;
            if r.rel_error > worst.0 {
                worst = (r.rel_error, format!("{} {}", kind.name(), r.name));
            }
        }
    }
    Ok(Outcome {
        pass: worst.0 < GRAD_TOL,
        detail: format!("{groups} parameter tensors, worst relative error {:.2e} ({}) vs {GRAD_TOL:e}", worst.0, worst.1),
    })
}

fn mvdr_oracle_equivalence() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let c = 2 + i % 3;
        let speech = common::random_hpd(c, &mut rng);
        let noise = common::random_hpd(c, &mut rng);
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let u: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut g = Graph::new();
        let s = g.complex_leaf(&common::stack(&[speech.clone()]));
        let n = g.complex_leaf(&common::stack(&[noise.clone()]));
        let uv = g.constant(Tensor::new(vec![c], u.clone()).map_err(err)?);
        let w = mvdr_filter(&mut g, s, n, uv, DiagLoading::None).map_err(err)?;
        let w = g.complex_value(w);
        for (k, want) in common::mvdr_oracle(&speech, &noise, &u).iter().enumerate() {
            let got = Complex64::new(w.re.data()[k], w.im.data()[k]);
            worst = worst.max((got - want).norm());
        }
    }
    Ok(Outcome {
        pass: worst < MVDR_TOL,
        detail: format!("100 instances, C in {{2,3,4}}, max abs error {worst:.2e} vs {MVDR_TOL:e}"),
    })
}

fn ctc_exactness() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut worst, mut instances, mut rejected) = (0.0f64, 0, 0);
    for v in 1..=3usize {
        for l in 1..=6usize {
            let logits = Tensor::from_fn(&[l, v + 1], |_| rng.gen_range(-2.0..2.0));
            let mut g = Graph::new();
            let x = g.leaf(logits);
            let lp = g.log_softmax(x).map_err(err)?;
            let lp = g.value(lp).clone();
            let mut labels: Vec<Vec<usize>> = vec![Vec::new()];
            for len in 1..=3 {
                let prev: Vec<Vec<usize>> = labels.iter().filter(|y| y.len() == len - 1).cloned().collect();
                for y in prev {
                    for k in 1..=v {
                        let mut z = y.clone();
                        z.push(k);
                        labels.push(z);
                    }
                }
            }
            for y in labels {
                instances += 1;
                let want = common::ctc_brute_force(&lp, &y);
                match ctc_forward_backward(&lp, &y) {
                    Ok((loss, _)) => worst = worst.max((loss - want).abs()),
                    Err(Error::CtcInadmissible { .. }) if want.is_infinite() => rejected += 1,
                    Err(e) => return Err(format!("L={l} {y:?}: {e}")),
                }
                if want.is_infinite() && ctc_forward_backward(&lp, &y).is_ok() {
                    return Err(format!("L={l} {y:?}: no path emits the labels but a loss was returned"));
                }
            }
        }
    }
    Ok(Outcome {
        pass: worst < CTC_TOL,
        detail: format!("{instances} instances ({rejected} inadmissible, rejected by both), max abs error {worst:.2e} vs {CTC_TOL:e}"),
    })
}

fn permutation_invariance() -> Result<Outcome, String> {
    let s = shared()?;
    let (model, store) = &s.mvdr;
    let utts = scenes(3, 104, 20)?;
    let ex = examples(model, &utts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for e in &ex {
        let mut order = vec![0, 1, 2];
        order.shuffle(&mut rng);
        let base = model.enhance(store, &e.stft).map_err(err)?;
        let perm = model.enhance(store, &e.stft.select(&order).map_err(err)?).map_err(err)?;
        worst = worst.max(max_abs(base.re.data(), perm.re.data())).max(max_abs(base.im.data(), perm.im.data()));
    }
    let orders = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]];
    let accs: Vec<String> = orders
        .iter()
        .map(|o| channel_accuracy(model, store, &ex, o).map(|a| format!("{a:.4}")).map_err(err))
        .collect::<Result<_, _>>()?;
    let same = accs.iter().all(|a| *a == accs[0]);
    Ok(Outcome {
        pass: worst < PERMUTATION_TOL && same,
        detail: format!(
            "20 C=3 utterances, max abs enhanced difference {worst:.2e} vs {PERMUTATION_TOL:e}, accuracy over {} orders {}",
            orders.len(),
            if same { format!("all {}", accs[0]) } else { accs.join(" / ") }
        ),
    })
}

fn channel_count_flexibility() -> Result<Outcome, String> {
    let s = shared()?;
    let (model, store) = &s.mvdr;
    let mut notes = Vec::new();
    let mut ok = true;
    for c in [1, 3] {
        let ex = examples(model, &scenes(c, 105 + c as u64, 5)?)?;
        let hyps = recognize_all(model, store, &ex).map_err(err)?;
        let finite = hyps.iter().all(|h| h.score.is_finite());
        ok &= finite;
        notes.push(format!("C={c} decodes {} utterances{}", hyps.len(), if finite { "" } else { " (non-finite score)" }));
    }
    let (mut spec_err, mut wave_err) = (0.0f64, 0.0f64);
    for u in scenes(1, 107, 5)? {
        let x = model.analyze(&u.noisy).map_err(err)?;
        let y = model.enhance(store, &x).map_err(err)?;
        let scale = x.coeffs.re.data().iter().chain(x.coeffs.im.data()).fold(0.0f64, |m, v| m.max(v.abs()));
        spec_err = spec_err.max(max_abs(y.re.data(), x.coeffs.re.data()).max(max_abs(y.im.data(), x.coeffs.im.data())) / scale);
        let wave = istft(&y, &model.stft).map_err(err)?;
        let input = u.noisy.channel(0);
        let end = wave.len().min(input.len()) - model.stft.frame_len;
        wave_err = wave_err.max(common::rel_l2(&wave[model.stft.frame_len..end], &input[model.stft.frame_len..end]));
    }
    let identity = spec_err < IDENTITY_TOL && wave_err < ROUNDTRIP_TOL;
    ok &= identity;
    notes.push(format!("C=1 identity: spectral {spec_err:.1e}, waveform {wave_err:.1e}"));
    let mut cfg = RunConfig::default();
    cfg.variant = BeamformerKind::FilterNet;
    let fnet = Model::new(cfg, model.vocab.clone()).map_err(err)?;
    let fstore = fnet.init_params(&mut ChaCha8Rng::seed_from_u64(1)).map_err(err)?;
    let mut rejects = true;
    for c in [1, 3] {
        let u = &scenes(c, 108, 1)?[0];
        let x = fnet.analyze(&u.noisy).map_err(err)?;
        rejects &= matches!(fnet.enhance(&fstore, &x), Err(Error::ChannelMismatch { .. }));
    }
    ok &= rejects;
    notes.push(format!("filter_net rejects C=1 and C=3: {rejects}"));
    Ok(Outcome {
        pass: ok,
        detail: notes.join("; "),
    })
}

fn comparative_run() -> Result<Outcome, String> {
    let start = Instant::now();
    let s = shared()?;
    let refs: Vec<(String, String)> = s.eval_set.iter().map(|e| (e.id.clone(), e.text.clone())).collect();
    let cer = |(m, st): &(Model, ParameterStore)| -> Result<f64, String> {
        let hyps = recognize_all(m, st, &s.eval_set).map_err(err)?;
        Ok(score(&hyps, &refs).map_err(err)?.cer() * 100.0)
    };
    let (noisy, mvdr) = (cer(&s.noisy)?, cer(&s.mvdr)?);
    let alphabet = s.corpus.alphabet_chars();
    let mut gains = Vec::new();
    for (i, u) in scenes(2, 109, 20)?.iter().enumerate() {
        let spec = SceneSpec::random(1000 + i as u64, 2, s.corpus.sample_rate, NoiseKind::PointSource, 0.0).map_err(err)?;
        let utt = synth_utterance(&u.id, &spec, &u.transcript, &alphabet).map_err(err)?;
        gains.push(oracle_enhance(&utt, &StftParams::tiny(), 0, DiagLoading::default()).map_err(err)?.gain_db());
    }
    let gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let secs = s.train_secs + start.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: mvdr < noisy && gain > ORACLE_GAIN_DB && secs < 1800.0,
        detail: format!(
            "{COMPARATIVE_EPOCHS} epochs, eval CER mask_mvdr {mvdr:.2}% vs noisy {noisy:.2}%; oracle-mask gain at 0 dB {gain:.2} dB (min {:.2}) vs {ORACLE_GAIN_DB} dB; {secs:.0} s including training",
            gains.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    })
}

fn random_recognizer(chars: usize, rng: &mut ChaCha8Rng) -> Result<(RecognizerSpec, Vocabulary, ParameterStore), String> {
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
    let vocab = Vocabulary::from_chars(&alphabet).map_err(err)?;
    let mut store = ParameterStore::new();
    let init = InitSpec {
        range: 1.5,
        forget_bias: 0.0,
    };
    init_recognizer(&mut store, &spec, &vocab, init, rng).map_err(err)?;
    Ok((spec, vocab, store))
}

fn beam_exactness() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let cfg = BeamConfig {
        beam: 100,
        ..BeamConfig::default()
    };
    let mut mismatches = Vec::new();
    for trial in 0..50 {
        let chars = rng.gen_range(1..=3);
        let (spec, vocab, store) = random_recognizer(chars, &mut rng)?;
        let n = rng.gen_range(1..=4);
        let feats = Tensor::from_fn(&[n, 3], |_| rng.gen_range(-1.0..1.0));
        let mut g = Graph::with_params(&store);
        let f = g.constant(feats);
        let enc = encode(&mut g, &spec, f).map_err(err)?;
        let mut scorer = AttentionScorer::new(&mut g, &spec, &vocab, enc).map_err(err)?;
        let beam = beam_search(&mut scorer, &cfg).map_err(err)?;
        let best = common::exhaustive_decode(&mut scorer, &cfg).ok_or("exhaustive search found no hypothesis")?;
        if beam.tokens != best.tokens || beam.score != best.score {
            mismatches.push(trial);
        }
    }
    Ok(Outcome {
        pass: mismatches.is_empty(),
        detail: format!("50 random models, N <= 4, |V| <= 3, beam 100: {} mismatches {mismatches:?}", mismatches.len()),
    })
}

fn signal_layer() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut worst = 0.0f64;
    for p in [StftParams::tiny(), StftParams::full()] {
        for _ in 0..5 {
            let x: Vec<f64> = (0..p.sample_rate as usize / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = istft(&stft_channel(&x, &p).map_err(err)?, &p).map_err(err)?;
            let end = y.len().min(x.len()) - p.frame_len;
            worst = worst.max(common::rel_l2(&y[p.frame_len..end], &x[p.frame_len..end]));
        }
    }
    let bins = StftParams::full().num_bins();
    let s = shared()?;
    let model = &s.mvdr.0;
    let feats: Vec<Tensor> = s.train_set.iter().map(|e| model.raw_features(&e.stft.channel(0))).collect::<Result<_, _>>().map_err(err)?;
    let norm = model.normalizer(&s.mvdr.1).map_err(err)?;
    let d = norm.dim();
    let (mut sum, mut sq, mut frames) = (vec![0.0; d], vec![0.0; d], 0usize);
    for f in &feats {
        let z = norm.apply(f).map_err(err)?;
        for r in 0..z.shape()[0] {
            for (k, v) in z.row(r).iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        frames += z.shape()[0];
    }
    let mean_err = sum.iter().map(|s| (s / frames as f64).abs()).fold(0.0, f64::max);
    let var_err = sq
        .iter()
        .zip(&sum)
        .map(|(q, s)| {
            let m = s / frames as f64;
            (q / frames as f64 - m * m - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: worst < ROUNDTRIP_TOL && bins == 257 && mean_err < NORM_TOL && var_err < NORM_TOL,
        detail: format!(
            "roundtrip interior relative L2 {worst:.1e} vs {ROUNDTRIP_TOL:e}; F={bins} at 16 kHz/25 ms/10 ms/512; normalized training features |mean| {mean_err:.1e}, |var-1| {var_err:.1e} vs {NORM_TOL:e}"
        ),
    })
}

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = CorpusConfig {
        train: 8,
        dev: 2,
        eval: 2,
        ..CorpusConfig::default()
    };
    let data = dir.path().join("data");
    build_corpus(&corpus, &data).map_err(err)?;
    let mut cfg = RunConfig::default();
    cfg.epochs = 2;
    cfg.corpus = corpus.clone();
    let model = Model::new(cfg, corpus.vocabulary().map_err(err)?).map_err(err)?;
    let tr = prepare(&model, &load_split(&data, Split::Train).map_err(err)?).map_err(err)?;
    let dv = prepare(&model, &load_split(&data, Split::Dev).map_err(err)?).map_err(err)?;
    let run = |name: &str| -> Result<(Vec<u8>, ParameterStore, std::path::PathBuf), String> {
        let mut store = model.init_params(&mut ChaCha8Rng::seed_from_u64(model.config.seed)).map_err(err)?;
        let norm = model.fit_normalizer(tr.iter().map(|e| &e.stft)).map_err(err)?;
        model.set_normalizer(&mut store, &norm).map_err(err)?;
        let out = dir.path().join(name);
        train::train(&model, &mut store, &tr, &dv, &out, |_| {}).map_err(err)?;
        Ok((std::fs::read(out.join(METRICS_FILE)).map_err(|e| e.to_string())?, store, out))
    };
    let (log_a, store_a, out_a) = run("a")?;
    let (log_b, store_b, _) = run("b")?;
    let logs = log_a == log_b;
    let reload = ParameterStore::load(&checkpoint_path(&out_a, 2)).map_err(err)?;
    let bitwise = reload.bitwise_eq(&store_a) && store_a.bitwise_eq(&store_b);
    Ok(Outcome {
        pass: logs && bitwise,
        detail: format!("metrics logs identical: {logs}; checkpoint reload bitwise equal: {bitwise}"),
    })
}

fn main() {
    let criteria: [(u8, &str, Option<Duration>, Check); 9] = [
        (1, "gradient integrity", Some(Duration::from_secs(120)), gradient_integrity),
        (2, "MVDR oracle equivalence", Some(Duration::from_secs(10)), mvdr_oracle_equivalence),
        (3, "CTC exactness", Some(Duration::from_secs(60)), ctc_exactness),
        (4, "channel permutation invariance", Some(Duration::from_secs(120)), permutation_invariance),
        (5, "channel-count flexibility", None, channel_count_flexibility),
        (6, "end-to-end comparative run", None, comparative_run),
        (7, "beam search exactness", None, beam_exactness),
        (8, "signal layer", None, signal_layer),
        (9, "determinism", None, determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    match shared() {
        Ok(s) => println!("setup: trained noisy and mask_mvdr on the default corpus in {:.1} s", s.train_secs),
        Err(e) => println!("setup failed: {e}"),
    }
    let mut failed = Vec::new();
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match result {
            Ok(Ok(o)) => (o.pass, o.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(p) => (false, format!("panicked: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
        };
        if let Some(b) = budget {
            if elapsed > b {
                pass = false;
                detail.push_str(&format!("; over the {} s budget", b.as_secs()));
            }
        }
        println!("criterion {n} {} {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        if !pass {
            failed.push(n);
        }
    }
    println!("acceptance: {}/9 pass{}", 9 - failed.len(), if failed.is_empty() { String::new() } else { format!(", failing {failed:?}") });
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
