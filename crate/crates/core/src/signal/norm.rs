use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Global per-dimension mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-10;

impl Normalizer {
    /// Fits population statistics over every frame of `corpus` (each T×D).
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut frames = 0usize;
        let mut all: Vec<&Tensor> = Vec::new();
        for t in corpus {
            let (n, d) = t.dims2()?;
            if sum.is_empty() {
                sum = vec![0.0; d];
            } else if sum.len() != d {
                return Err(Error::InvalidArgument(format!("feature dim {d} vs {}", sum.len())));
            }
            for r in 0..n {
                for (s, v) in sum.iter_mut().zip(t.row(r)) {
                    *s += v;
                }
            }
            frames += n;
            all.push(t);
        }
        if frames < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frames, got {frames}")));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / frames as f64).collect();
        let mut var = vec![0.0; mean.len()];
        for t in all {
            for r in 0..t.shape()[0] {
                for ((acc, v), m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var.iter().map(|v| (v / frames as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, feats: &Tensor) -> Result<Tensor> {
        let (n, d) = feats.dims2()?;
        if d != self.dim() {
            return Err(Error::InvalidArgument(format!("feature dim {d} vs {}", self.dim())));
        }
        Ok(Tensor::from_fn(&[n, d], |i| {
            let j = i % d;
            (feats.data()[i] - self.mean[j]) / self.std[j]
        }))
    }

    pub fn mean_tensor(&self) -> Tensor {
        Tensor::vector(self.mean.clone())
    }

    pub fn std_tensor(&self) -> Tensor {
        Tensor::vector(self.std.clone())
    }
}
