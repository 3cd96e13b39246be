use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::StftParams;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale `2595·log10(1 + f/700)`, with
/// centers equally spaced in mel between `f_min` and `f_max`. Each filter is
/// scaled by `2/(f_hi − f_lo)` so all filters have equal area.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Tensor,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, params: &StftParams, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = params.sample_rate as f64 / 2.0;
        if n_mels == 0 || !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "mel range [{f_min}, {f_max}] Hz with {n_mels} filters"
            )));
        }
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bins = params.num_bins();
        let mut w = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (a, b, c) = (edges[m], edges[m + 1], edges[m + 2]);
            let area = 2.0 / (c - a);
            for k in 0..bins {
                let f = params.bin_hz(k);
                let v = if f > a && f <= b {
                    (f - a) / (b - a)
                } else if f > b && f < c {
                    (c - f) / (c - b)
                } else {
                    0.0
                };
                w[m * bins + k] = v * area;
            }
        }
        Ok(Self {
            weights: Tensor::new(vec![n_mels, bins], w)?,
            f_min,
            f_max,
        })
    }

    /// `n_mels` filters spanning 0 Hz to Nyquist.
    pub fn full_range(n_mels: usize, params: &StftParams) -> Result<Self> {
        Self::new(n_mels, params, 0.0, params.sample_rate as f64 / 2.0)
    }

    /// Hand-specified filterbank, D×F with nonnegative entries.
    pub fn from_weights(weights: Tensor, f_min: f64, f_max: f64) -> Result<Self> {
        weights.dims2()?;
        if weights.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument("filterbank weights must be nonnegative".into()));
        }
        Ok(Self { weights, f_min, f_max })
    }

    /// D_O×F.
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn num_filters(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Mel energies of one power-spectrum frame.
    pub fn apply_frame(&self, power: &[f64]) -> Vec<f64> {
        let bins = self.weights.shape()[1];
        (0..self.num_filters())
            .map(|m| self.weights.row(m).iter().zip(&power[..bins]).map(|(w, p)| w * p).sum())
            .collect()
    }
}
