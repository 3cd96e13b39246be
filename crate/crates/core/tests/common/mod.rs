//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use beamspeech::beamformer::BeamformerKind;
use beamspeech::config::RunConfig;
use beamspeech::recognizer::beam::{hypothesis_score, rank, step_limits, BeamConfig, BeamResult, StepScorer};
use beamspeech::{ComplexTensor, Tensor};

pub type CMat = Vec<Vec<Complex64>>;

/// `A·A† + I` with entries of A uniform in the unit square.
pub fn random_hpd(c: usize, rng: &mut impl Rng) -> CMat {
    let a: CMat = (0..c)
        .map(|_| (0..c).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .collect();
    (0..c)
        .map(|i| {
            (0..c)
                .map(|j| {
                    let dot: Complex64 = (0..c).map(|l| a[i][l] * a[j][l].conj()).sum();
                    dot + if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
                })
                .collect()
        })
        .collect()
}

/// Solves `A·X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let m = b[0].len();
    let mut a = a.clone();
    let mut b = b.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            for k in 0..m {
                let v = b[col][k];
                b[row][k] -= f * v;
            }
        }
    }
    let mut x = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut acc = b[row][k];
            for j in row + 1..n {
                acc -= a[row][j] * x[j][k];
            }
            x[row][k] = acc / a[row][row];
        }
    }
    x
}

/// `(Φᴺ⁻¹Φˢ / Tr(Φᴺ⁻¹Φˢ)) u` for one frequency.
pub fn mvdr_oracle(speech: &CMat, noise: &CMat, u: &[f64]) -> Vec<Complex64> {
    let m = solve(noise, speech);
    let tr: Complex64 = (0..m.len()).map(|i| m[i][i]).sum();
    (0..m.len())
        .map(|i| (0..m.len()).map(|j| m[i][j] * u[j]).sum::<Complex64>() / tr)
        .collect()
}

/// Stacks per-frequency C×C matrices into an F×C×C complex tensor.
pub fn stack(mats: &[CMat]) -> ComplexTensor {
    let (f, c) = (mats.len(), mats[0].len());
    let at = |i: usize| mats[i / (c * c)][(i / c) % c][i % c];
    ComplexTensor::new(
        Tensor::from_fn(&[f, c, c], |i| at(i).re),
        Tensor::from_fn(&[f, c, c], |i| at(i).im),
    )
    .unwrap()
}

/// `−ln Σ_paths Π_t p(path_t)` by enumerating every length-L path over K
/// classes (blank = 0). Infinite when no path collapses to `labels`.
pub fn ctc_brute_force(log_probs: &Tensor, labels: &[usize]) -> f64 {
    let (l, k) = (log_probs.shape()[0], log_probs.shape()[1]);
    let mut total = 0.0;
    let mut path = vec![0usize; l];
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &p in &path {
            if Some(p) != prev && p != 0 {
                collapsed.push(p);
            }
            prev = Some(p);
        }
        if collapsed == labels {
            total += path.iter().enumerate().map(|(t, &p)| log_probs.at2(t, p)).sum::<f64>().exp();
        }
        let mut i = 0;
        loop {
            if i == l {
                return -total.ln();
            }
            path[i] += 1;
            if path[i] < k {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Best terminated hypothesis over every character sequence the search could
/// reach, scored from scratch with the same scoring function.
pub fn exhaustive_decode<S: StepScorer>(scorer: &mut S, cfg: &BeamConfig) -> Option<BeamResult> {
    let (min_len, max_steps) = step_limits(cfg, scorer.input_len());
    let init = scorer.initial().ok()?;
    let (_, first) = scorer.step(&init, beamspeech::recognizer::SOS).ok()?;
    let classes = first.len();
    let mut best: Option<BeamResult> = None;
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for len in 0..max_steps {
        let mut next = Vec::new();
        for tokens in &frontier {
            // Replay the prefix from the initial state.
            let mut state = scorer.initial().ok()?;
            let mut att = 0.0;
            let mut prev = beamspeech::recognizer::SOS;
            let mut logp = Vec::new();
            for step in 0..=tokens.len() {
                let (s, lp) = scorer.step(&state, prev).ok()?;
                state = s;
                logp = lp;
                if step < tokens.len() {
                    att += logp[tokens[step] - 2];
                    prev = tokens[step];
                }
            }
            if len >= min_len {
                let a = att + logp[0];
                let (score, ctc) = hypothesis_score(scorer, tokens, a, cfg).ok()?;
                let better = match &best {
                    None => score.is_finite(),
                    Some(b) => score.is_finite() && rank((score, tokens.as_slice(), len), (b.score, b.tokens.as_slice(), b.tokens.len())).is_lt(),
                };
                if better {
                    best = Some(BeamResult {
                        tokens: tokens.clone(),
                        score,
                        attention: a,
                        ctc,
                        terminated: true,
                    });
                }
            }
            for class in 1..classes {
                let mut t = tokens.clone();
                t.push(class + 2);
                next.push(t);
            }
        }
        frontier = next;
    }
    best
}

/// A pipeline small enough for exhaustive finite differences: F=9 bins,
/// 4 Mel bands and every hidden size at most 4.
pub fn gradcheck_config(kind: BeamformerKind) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.variant = kind;
    cfg.frame_len = 16;
    cfg.frame_shift = 8;
    cfg.fft_size = 16;
    cfg.n_mels = 4;
    cfg.mask_layers = 1;
    cfg.mask_cells = 3;
    cfg.filter_layers = 1;
    cfg.filter_cells = 3;
    cfg.ref_dim = 3;
    cfg.enc_layers = 2;
    cfg.enc_cells = 4;
    cfg.att_dim = 4;
    cfg.att_filters = 2;
    cfg.att_width = 3;
    cfg.dec_embedding = 3;
    cfg.dec_cells = 4;
    cfg.init_range = 0.3;
    cfg
}

pub fn random_complex(shape: &[usize], scale: f64, rng: &mut impl Rng) -> ComplexTensor {
    ComplexTensor::new(
        Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale)),
        Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale)),
    )
    .unwrap()
}

/// Relative L2 error of `a` against `b`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}
