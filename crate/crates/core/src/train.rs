//! AdaDelta training with validation-driven ε decay, per-epoch checkpoints
//! and a JSON-lines metrics log.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::corpus::LoadedUtterance;
use crate::error::{Error, Result};
use crate::model::{InputPath, Model};
use crate::params::{AdaDelta, ParameterStore};
use crate::signal::MultichannelStft;
use crate::tensor::Tensor;

/// A prepared utterance: spectrogram and target token ids.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub stft: MultichannelStft,
    pub target: Vec<usize>,
}

pub fn prepare(model: &Model, utts: &[LoadedUtterance]) -> Result<Vec<Example>> {
    utts.iter()
        .map(|u| {
            Ok(Example {
                id: u.entry.id.clone(),
                text: u.entry.transcript.clone(),
                stft: model.analyze(&u.audio)?,
                target: model.vocab.encode(&u.entry.transcript)?,
            })
        })
        .collect()
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-utterance training loss; absent for the initial model.
    pub train_loss: Option<f64>,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    pub eps: f64,
    pub clipped_steps: usize,
    pub skipped_steps: usize,
}

/// Mean loss and label accuracy of `examples` through the beamformer.
pub fn evaluate(model: &Model, store: &ParameterStore, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to evaluate".into()));
    }
    let (mut loss, mut correct, mut steps) = (0.0, 0, 0);
    for ex in examples {
        let (c, s, l) = model.evaluate(store, &ex.stft, &ex.text)?;
        loss += l;
        correct += c;
        steps += s;
    }
    Ok((loss / examples.len() as f64, correct as f64 / steps as f64))
}

/// Input path of the `i`-th utterance of an epoch: a share `ratio` goes
/// through the beamformer, spread evenly.
pub fn input_path(i: usize, ratio: f64) -> InputPath {
    if ((i + 1) as f64 * ratio).floor() > (i as f64 * ratio).floor() {
        InputPath::Enhanced
    } else {
        InputPath::Noisy
    }
}

/// Gradient and loss of one minibatch, averaged over its utterances.
pub fn batch_gradient(model: &Model, store: &ParameterStore, batch: &[(&Example, InputPath)]) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut loss = 0.0;
    for (ex, path) in batch {
        let mut g = Graph::with_params(store);
        let x = g.complex_leaf(&ex.stft.coeffs);
        let l = model.loss(&mut g, x, &ex.target, *path)?;
        let value = g.value(l.loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss of {} is {value}", ex.id)));
        }
        loss += value;
        let grads = g.backward(l.loss)?;
        for (name, t) in g.param_grads(&grads) {
            match total.get_mut(&name) {
                Some(acc) => acc.add_assign(&t),
                None => {
                    total.insert(name, t);
                }
            }
        }
    }
    let n = batch.len() as f64;
    for t in total.values_mut() {
        t.scale_in_place(1.0 / n);
    }
    Ok((loss / n, total))
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LAST_CHECKPOINT: &str = "last.bspk";

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch{epoch:03}.bspk"))
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub last_checkpoint: PathBuf,
}

fn save_checkpoint(dir: &Path, epoch: usize, store: &ParameterStore) -> Result<PathBuf> {
    let path = checkpoint_path(dir, epoch);
    store.save(&path)?;
    store.save(&dir.join(LAST_CHECKPOINT))?;
    Ok(path)
}

/// Trains `store` in place for `model.config.epochs` epochs, writing
/// checkpoints, the config, the vocabulary and the metrics log to `dir`.
/// A non-finite loss aborts the run; checkpoints already written stay.
pub fn train(
    model: &Model,
    store: &mut ParameterStore,
    train_set: &[Example],
    dev_set: &[Example],
    dir: &Path,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    let cfg = &model.config;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    fs::create_dir_all(dir)?;
    cfg.save(&dir.join(CONFIG_FILE))?;
    model.vocab.save(&dir.join(VOCAB_FILE))?;
    let mut log = fs::File::create(dir.join(METRICS_FILE))?;
    let mut emit = |m: &EpochMetrics, log: &mut fs::File| -> Result<()> {
        let line = serde_json::to_string(m).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(log, "{line}")?;
        log.flush()?;
        progress(m);
        Ok(())
    };

    let mut opt = AdaDelta {
        rho: cfg.rho,
        eps: cfg.eps,
        clip_norm: cfg.clip_norm,
    };
    let (dev_loss, dev_accuracy) = evaluate(model, store, dev_set)?;
    let mut last = save_checkpoint(dir, 0, store)?;
    let first = EpochMetrics {
        epoch: 0,
        train_loss: None,
        dev_loss,
        dev_accuracy,
        eps: opt.eps,
        clipped_steps: 0,
        skipped_steps: 0,
    };
    emit(&first, &mut log)?;
    let mut metrics = vec![first];
    let mut prev_dev = dev_loss;
    let mut decaying = false;
    let ratio = if model.kind() == crate::beamformer::BeamformerKind::Noisy {
        1.0
    } else {
        cfg.enhanced_ratio
    };

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let (mut total, mut clipped, mut skipped) = (0.0, 0, 0);
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<(&Example, InputPath)> = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| (&train_set[i], input_path(b * cfg.batch + k, ratio)))
                .collect();
            let (loss, grads) = batch_gradient(model, store, &batch)?;
            total += loss * chunk.len() as f64;
            let report = opt.step(store, &grads)?;
            clipped += report.clipped as usize;
            skipped += report.skipped as usize;
        }
        let (dev_loss, dev_accuracy) = evaluate(model, store, dev_set)?;
        if !dev_loss.is_finite() {
            return Err(Error::NonFinite(format!("dev loss {dev_loss} after epoch {epoch}")));
        }
        if dev_loss > prev_dev {
            decaying = true;
        }
        prev_dev = dev_loss;
        last = save_checkpoint(dir, epoch, store)?;
        let m = EpochMetrics {
            epoch,
            train_loss: Some(total / train_set.len() as f64),
            dev_loss,
            dev_accuracy,
            eps: opt.eps,
            clipped_steps: clipped,
            skipped_steps: skipped,
        };
        emit(&m, &mut log)?;
        metrics.push(m);
        if decaying {
            opt.eps *= cfg.eps_decay;
        }
    }
    Ok(TrainReport {
        metrics,
        last_checkpoint: last,
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(e.to_string())))
        .collect()
}
