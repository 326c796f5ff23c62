//! Dense-bottleneck autoencoder baseline, trained with L1 reconstruction on
//! healthy slices and scored through the same residual pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{residual, ResidualMap};
use crate::dataio::{ImageSlice, Record};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Adam, Conv, Dense, Graph, Mode, ParamSet, Scalar, Var};
use crate::rng::CounterRng;
use crate::synthmod::l1_loss;
use crate::train::{batches, images_tensor, EpochLoss, TrainConfig, INFERENCE_BATCH};

pub const CHECKPOINT_KIND: &str = "autoencoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderArch {
    pub base_channels: usize,
    pub bottleneck: usize,
}

impl Default for AutoencoderArch {
    fn default() -> Self {
        Self { base_channels: 16, bottleneck: 128 }
    }
}

impl AutoencoderArch {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        if self.base_channels == 0 || self.bottleneck == 0 {
            return Err(Error::InvalidConfig {
                field: "ae_arch".into(),
                reason: "channels and bottleneck must be positive".into(),
            });
        }
        if resolution == 0 || resolution % 8 != 0 {
            return Err(Error::InvalidConfig {
                field: "phantom.resolution".into(),
                reason: format!("autoencoder needs a multiple of 8, got {resolution}"),
            });
        }
        Ok(())
    }

    /// Configurations that are legal but defeat the purpose of a baseline.
    pub fn warnings(&self, resolution: usize) -> Vec<String> {
        let pixels = resolution * resolution;
        let mut out = Vec::new();
        if self.bottleneck >= pixels {
            out.push(format!(
                "autoencoder bottleneck {} is not smaller than the {pixels} input pixels; it can learn the identity",
                self.bottleneck
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AutoencoderLayout {
    enc: [Conv; 3],
    to_latent: Dense,
    from_latent: Dense,
    dec: [Conv; 3],
    out: Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel<T = f32> {
    arch: AutoencoderArch,
    resolution: usize,
    layout: AutoencoderLayout,
    params: ParamSet<T>,
}

impl<T: Scalar> AutoencoderModel<T> {
    pub fn new(arch: AutoencoderArch, resolution: usize, seed: u64) -> Result<Self> {
        arch.validate(resolution)?;
        let b = arch.base_channels;
        let flat = 4 * b * (resolution / 8) * (resolution / 8);
        let mut params = ParamSet::new();
        let mut rng = CounterRng::for_stream(seed, "init-autoencoder", 0);
        let p = &mut params;
        let r = &mut rng;
        let enc = [
            Conv::new(p, r, "enc0", 1, b, 3, 2),
            Conv::new(p, r, "enc1", b, 2 * b, 3, 2),
            Conv::new(p, r, "enc2", 2 * b, 4 * b, 3, 2),
        ];
        let to_latent = Dense::new(p, r, "latent.in", flat, arch.bottleneck);
        let from_latent = Dense::new(p, r, "latent.out", arch.bottleneck, flat);
        let dec = [
            Conv::new(p, r, "dec0", 4 * b, 2 * b, 3, 1),
            Conv::new(p, r, "dec1", 2 * b, b, 3, 1),
            Conv::new(p, r, "dec2", b, b, 3, 1),
        ];
        let out = Conv::new(p, r, "out", b, 1, 3, 1);
        let layout = AutoencoderLayout { enc, to_latent, from_latent, dec, out };
        Ok(Self { arch, resolution, layout, params })
    }

    pub fn arch(&self) -> &AutoencoderArch {
        &self.arch
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> AutoencoderModel<U> {
        AutoencoderModel {
            arch: self.arch,
            resolution: self.resolution,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Var {
        let (l, p) = (&self.layout, &self.params);
        let mut h = x;
        for c in &l.enc {
            h = c.apply(g, p, h, mode);
            h = g.relu(h);
        }
        let [n, c, hh, ww] = g.value(h).shape();
        h = l.to_latent.apply(g, p, h, mode);
        h = l.from_latent.apply(g, p, h, mode);
        h = g.relu(h);
        h = g.reshape(h, [n, c, hh, ww]);
        for conv in &l.dec {
            h = g.upsample2(h);
            h = conv.apply(g, p, h, mode);
            h = g.relu(h);
        }
        h = l.out.apply(g, p, h, mode);
        g.sigmoid(h)
    }
}

impl AutoencoderModel<f32> {
    pub fn save(&self, stem: &Path, cfg: &TrainConfig, epoch: usize, losses: &[EpochLoss]) -> Result<()> {
        checkpoint::save(
            stem,
            CHECKPOINT_KIND,
            &serde_json::json!({ "autoencoder": self.arch, "resolution": self.resolution }),
            cfg,
            epoch,
            &losses,
            &self.params,
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (sidecar, params) = checkpoint::load(stem, CHECKPOINT_KIND)?;
        let arch: AutoencoderArch = serde_json::from_value(sidecar.architecture["autoencoder"].clone())?;
        let resolution: usize = serde_json::from_value(sidecar.architecture["resolution"].clone())?;
        let mut model = Self::new(arch, resolution, 0)?;
        if model.params.specs() != params.specs() {
            return Err(Error::ModelMismatch(format!("{} does not match its declared architecture", stem.display())));
        }
        model.params = params;
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct AeTrainOutput {
    pub model: AutoencoderModel,
    pub losses: Vec<EpochLoss>,
}

/// Trains the autoencoder to minimize mean L1 reconstruction error.
pub fn train_ae(
    records: &[Record],
    arch: AutoencoderArch,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<AeTrainOutput> {
    cfg.validate("ae")?;
    let first = records.first().ok_or(Error::EmptySplit("autoencoder"))?;
    let resolution = first.image.size();
    for w in arch.warnings(resolution) {
        log::warn!("{w}");
    }
    let mut model = AutoencoderModel::<f32>::new(arch, resolution, cfg.seed)?;
    let mut opt = Adam::new(cfg.adam(), &model.params);
    let mut losses = Vec::new();
    let mut last_good: Option<PathBuf> = None;

    for epoch in 0..cfg.epochs {
        let mut sum = 0.0f64;
        let mut seen = 0usize;
        for (b, batch) in batches(records.len(), cfg.batch_size, cfg.seed, "ae-shuffle", epoch).enumerate() {
            let imgs: Vec<&ImageSlice> = batch.iter().map(|&i| &records[i].image).collect();
            let real = images_tensor(&imgs);
            let mut g = Graph::new();
            let x = g.input(real.clone());
            let y = model.forward(&mut g, x, Mode::Train);
            let loss = l1_loss(&real, g.value(y))?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss { model: "autoencoder", epoch, batch: b, last_good });
            }
            let grads = g.backward(y, loss.grad);
            opt.step(&mut model.params, &grads.param_grads());
            sum += loss.value as f64 * imgs.len() as f64;
            seen += imgs.len();
        }
        let mean = sum / seen as f64;
        log::info!("autoencoder epoch {}/{}: l1 {mean:.5}", epoch + 1, cfg.epochs);
        losses.push(EpochLoss::single(epoch, "l1", mean));
        if let Some(dir) = checkpoint_dir {
            let stem = dir.join(format!("epoch_{:03}", epoch + 1));
            model.save(&stem, cfg, epoch + 1, &losses)?;
            last_good = Some(stem);
        }
    }
    if let Some(dir) = checkpoint_dir {
        model.save(&dir.join(CHECKPOINT_KIND), cfg, cfg.epochs, &losses)?;
    }
    Ok(AeTrainOutput { model, losses })
}

/// Autoencoder reconstructions, in input order.
pub fn ae_reconstruct_many(model: &AutoencoderModel, images: &[&ImageSlice]) -> Result<Vec<ImageSlice>> {
    use rayon::prelude::*;
    for img in images {
        if img.size() != model.resolution {
            return Err(Error::Shape(format!(
                "autoencoder trained at {0}x{0}, got a {1}x{1} slice",
                model.resolution,
                img.size()
            )));
        }
    }
    let chunks: Vec<Vec<ImageSlice>> = images
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| {
            let mut g = Graph::new();
            let x = g.input(images_tensor(chunk));
            let y = model.forward(&mut g, x, Mode::Frozen);
            let out = g.take_value(y);
            (0..chunk.len())
                .map(|i| ImageSlice::from_clamped(model.resolution, out.item(i).to_vec()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Residual `|x - AE(x)|` for one slice.
pub fn ae_residual(model: &AutoencoderModel, x: &ImageSlice) -> Result<ResidualMap> {
    let rec = ae_reconstruct_many(model, &[x])?.remove(0);
    residual(x, &rec)
}
