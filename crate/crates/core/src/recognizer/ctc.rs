//! Connectionist temporal classification loss, computed with the log-space
//! forward-backward recursion over the blank-augmented label lattice.

use crate::autodiff::{Graph, Op, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Class index of the CTC blank.
pub const CTC_BLANK: usize = 0;

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Negative log-likelihood of `labels` given per-frame log-probabilities
/// `log_probs` (L×K, blank at class 0), and its gradient with respect to
/// `log_probs`.
pub fn ctc_forward_backward(log_probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (frames, classes) = log_probs.dims2()?;
    if let Some(&bad) = labels.iter().find(|&&l| l == CTC_BLANK || l >= classes) {
        return Err(Error::InvalidArgument(format!("ctc: label {bad} outside 1..{classes}")));
    }
    let s_len = 2 * labels.len() + 1;
    let ext: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { CTC_BLANK } else { labels[s / 2] })
        .collect();
    let lp = |t: usize, s: usize| log_probs.data()[t * classes + ext[s]];
    let skip_ok = |s: usize| s >= 2 && ext[s] != CTC_BLANK && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse2(acc, prev[s - 1]);
            }
            if skip_ok(s) {
                acc = lse2(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = if acc == ninf { ninf } else { acc + lp(t, s) };
        }
    }
    let last = &alpha[(frames - 1) * s_len..];
    let log_p = if s_len > 1 {
        lse2(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };
    if !log_p.is_finite() {
        return Err(Error::CtcInadmissible {
            frames,
            labels: labels.len(),
        });
    }

    let mut beta = vec![ninf; frames * s_len];
    let tl = frames - 1;
    beta[tl * s_len + s_len - 1] = lp(tl, s_len - 1);
    if s_len > 1 {
        beta[tl * s_len + s_len - 2] = lp(tl, s_len - 2);
    }
    for t in (0..tl).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = lse2(acc, next[s + 1]);
            }
            if s + 2 < s_len && ext[s + 2] != CTC_BLANK && ext[s + 2] != ext[s] {
                acc = lse2(acc, next[s + 2]);
            }
            beta[t * s_len + s] = if acc == ninf { ninf } else { acc + lp(t, s) };
        }
    }

    // d(-log p)/d log_probs[t,k] = -Σ_{s: ext[s]=k} α_t(s) β_t(s) / (y_t(k) p)
    let mut grad = vec![0.0; frames * classes];
    for t in 0..frames {
        let mut occ = vec![ninf; classes];
        for s in 0..s_len {
            let v = alpha[t * s_len + s] + beta[t * s_len + s];
            occ[ext[s]] = lse2(occ[ext[s]], v);
        }
        for k in 0..classes {
            if occ[k] != ninf {
                grad[t * classes + k] = -(occ[k] - log_probs.data()[t * classes + k] - log_p).exp();
            }
        }
    }
    Ok((-log_p, Tensor::new(vec![frames, classes], grad)?))
}

impl Graph<'_> {
    /// CTC loss node over log-probabilities `log_probs` (L×K).
    pub fn ctc_loss(&mut self, log_probs: Var, labels: &[usize]) -> Result<Var> {
        if self.shape(log_probs).len() != 2 {
            return Err(shape_err("ctc", format!("expected L×K, got {:?}", self.shape(log_probs))));
        }
        let (loss, grad) = ctc_forward_backward(self.value(log_probs), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Ctc {
                input: log_probs,
                grad,
            },
        ))
    }
}
