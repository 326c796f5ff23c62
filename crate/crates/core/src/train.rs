//! Shared training plumbing: optimizer settings, batching and loss records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::ImageSlice;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Tensor};
use crate::rng::CounterRng;

/// Slices per forward pass at inference time.
pub const INFERENCE_BATCH: usize = 16;

/// Optimization settings shared by the segmentor and the autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub seed: u64,
}

pub type SegTrainConfig = TrainConfig;

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 2e-4, betas: (0.5, 0.999), batch_size: 16, seed: 0 }
    }
}

pub(crate) fn check_common(
    prefix: &str,
    learning_rate: f64,
    betas: (f64, f64),
    batch_size: usize,
) -> Result<()> {
    let bad = |field: &str, reason: &str| Error::InvalidConfig {
        field: format!("{prefix}.{field}"),
        reason: reason.into(),
    };
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(bad("learning_rate", "must be positive"));
    }
    let in_unit = |b: f64| b > 0.0 && b < 1.0;
    if !in_unit(betas.0) || !in_unit(betas.1) {
        return Err(bad("betas", "both must lie in (0, 1)"));
    }
    if batch_size == 0 {
        return Err(bad("batch_size", "must be positive"));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_common(prefix, self.learning_rate, self.betas, self.batch_size)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.betas.0,
            beta2: self.betas.1,
            ..AdamConfig::default()
        }
    }
}

/// Mean losses of one epoch, keyed by loss name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub values: BTreeMap<String, f64>,
}

impl EpochLoss {
    pub fn single(epoch: usize, name: &str, value: f64) -> Self {
        Self { epoch, values: BTreeMap::from([(name.to_owned(), value)]) }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// Shuffled mini-batches of `0..n` for one epoch. The last batch may be
/// partial; a batch size above `n` yields one batch.
pub fn batches(n: usize, batch_size: usize, seed: u64, tag: &str, epoch: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    CounterRng::for_stream(seed, tag, epoch as u64).shuffle(&mut order);
    let bs = batch_size.max(1);
    let chunks: Vec<Vec<usize>> = order.chunks(bs).map(<[usize]>::to_vec).collect();
    chunks.into_iter()
}

/// Stacks slices into an `(n, 1, h, w)` tensor.
pub fn images_tensor(images: &[&ImageSlice]) -> Tensor<f32> {
    let s = images[0].size();
    let mut data = Vec::with_capacity(images.len() * s * s);
    for img in images {
        data.extend_from_slice(img.pixels());
    }
    Tensor::from_vec([images.len(), 1, s, s], data)
}
