//! Semantic-conditioned image synthesis: generator G, patch discriminator D,
//! and their adversarial + L1 training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::SemanticIntermediate;
use crate::dataio::{ImageSlice, Record};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Adam, AdamConfig, Conv, Graph, Mode, ParamSet, Scalar, Tensor, Var};
use crate::rng::CounterRng;
use crate::segmod::{LossGrad, LOG_EPS};
use crate::train::{batches, check_common, images_tensor, EpochLoss, INFERENCE_BATCH};

pub const GENERATOR_KIND: &str = "generator";
pub const DISCRIMINATOR_KIND: &str = "discriminator";

const LEAK: f64 = 0.2;

/// Discriminator and generator adversarial terms with their gradients.
#[derive(Debug, Clone)]
pub struct AdversarialLosses<T> {
    pub d_loss: T,
    pub g_adv_loss: T,
    /// `d d_loss / d d_real`
    pub d_grad_real: Tensor<T>,
    /// `d d_loss / d d_fake`
    pub d_grad_fake: Tensor<T>,
    /// `d g_adv_loss / d d_fake`
    pub g_grad_fake: Tensor<T>,
}

fn check_finite<T: Scalar>(what: &str, t: &Tensor<T>) -> Result<()> {
    if !t.all_finite() {
        return Err(Error::InvalidValue(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// `d_loss = -mean ln d_real - mean ln(1 - d_fake)` and the non-saturating
/// `g_adv_loss = -mean ln d_fake`, with scores clipped to `[eps, 1 - eps]`.
pub fn adversarial_losses<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<AdversarialLosses<T>> {
    check_finite("real scores", d_real)?;
    check_finite("fake scores", d_fake)?;
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Shape("empty discriminator output".into()));
    }
    let eps = T::lit(LOG_EPS);
    let hi = T::one() - eps;
    let inside = |v: T| v >= eps && v <= hi;
    let clip = |v: T| v.max(eps).min(hi);
    let nr = T::lit(d_real.len() as f64);
    let nf = T::lit(d_fake.len() as f64);

    let mut d_grad_real = Tensor::zeros(d_real.shape());
    let mut real_term = T::zero();
    for (g, &v) in d_grad_real.data_mut().iter_mut().zip(d_real.data()) {
        real_term += -clip(v).ln();
        if inside(v) {
            *g = -T::one() / (v * nr);
        }
    }
    let mut d_grad_fake = Tensor::zeros(d_fake.shape());
    let mut g_grad_fake = Tensor::zeros(d_fake.shape());
    let (mut fake_term, mut g_adv) = (T::zero(), T::zero());
    for ((dg, gg), &v) in d_grad_fake.data_mut().iter_mut().zip(g_grad_fake.data_mut()).zip(d_fake.data()) {
        fake_term += -(T::one() - clip(v)).ln();
        g_adv += -clip(v).ln();
        if inside(v) {
            *dg = T::one() / ((T::one() - v) * nf);
            *gg = -T::one() / (v * nf);
        }
    }
    Ok(AdversarialLosses {
        d_loss: real_term / nr + fake_term / nf,
        g_adv_loss: g_adv / nf,
        d_grad_real,
        d_grad_fake,
        g_grad_fake,
    })
}

/// The generator's adversarial term alone, `-mean ln d_fake`.
pub fn generator_adversarial_loss<T: Scalar>(d_fake: &Tensor<T>) -> Result<LossGrad<T>> {
    let a = adversarial_losses(d_fake, d_fake)?;
    Ok(LossGrad { value: a.g_adv_loss, grad: a.g_grad_fake })
}

/// Mean absolute difference and its gradient with respect to `x_hat`.
/// The gradient is zero where the two agree exactly.
pub fn l1_loss<T: Scalar>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<LossGrad<T>> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape(format!("l1 of {:?} vs {:?}", x.shape(), x_hat.shape())));
    }
    if x.is_empty() {
        return Err(Error::Shape("l1 of empty tensors".into()));
    }
    let n = T::lit(x.len() as f64);
    let mut grad = Tensor::zeros(x.shape());
    let mut total = T::zero();
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(x.data()).zip(x_hat.data()) {
        let d = b - a;
        total += d.abs();
        if d > T::zero() {
            *g = T::one() / n;
        } else if d < T::zero() {
            *g = -T::one() / n;
        }
    }
    Ok(LossGrad { value: total / n, grad })
}

/// Mean absolute pixel difference between two slices.
pub fn l1_distance(x: &ImageSlice, x_hat: &ImageSlice) -> Result<f64> {
    if x.size() != x_hat.size() {
        return Err(Error::Shape(format!("l1 of {} vs {} slices", x.size(), x_hat.size())));
    }
    let total: f64 = x.pixels().iter().zip(x_hat.pixels()).map(|(a, b)| (a - b).abs() as f64).sum();
    Ok(total / x.pixels().len().max(1) as f64)
}

pub fn generator_objective(g_adv_loss: f64, l1: f64, lambda: f64) -> Result<f64> {
    if !(g_adv_loss.is_finite() && l1.is_finite() && lambda.is_finite()) {
        return Err(Error::InvalidValue("generator objective inputs must be finite".into()));
    }
    Ok(g_adv_loss + lambda * l1)
}

/// Encoder, residual blocks at quarter resolution, decoder with additive
/// skips from the encoder levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorArch {
    pub base_channels: usize,
    pub res_blocks: usize,
    pub num_classes: usize,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        Self { base_channels: 16, res_blocks: 2, num_classes: 4 }
    }
}

impl GeneratorArch {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        if self.base_channels == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig {
                field: "gen_arch".into(),
                reason: "channels and classes must be positive".into(),
            });
        }
        if resolution == 0 || resolution % 4 != 0 {
            return Err(Error::InvalidConfig {
                field: "phantom.resolution".into(),
                reason: format!("generator needs a multiple of 4, got {resolution}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GeneratorLayout {
    stem: Conv,
    down: [Conv; 2],
    blocks: Vec<(Conv, Conv)>,
    up: [Conv; 2],
    out: Conv,
}

impl GeneratorLayout {
    fn build<T: Scalar>(arch: &GeneratorArch, params: &mut ParamSet<T>, rng: &mut CounterRng) -> Self {
        let b = arch.base_channels;
        let stem = Conv::new(params, rng, "stem", arch.num_classes, b, 3, 1);
        let down = [
            Conv::new(params, rng, "down0", b, 2 * b, 3, 2),
            Conv::new(params, rng, "down1", 2 * b, 4 * b, 3, 2),
        ];
        let blocks = (0..arch.res_blocks)
            .map(|i| {
                (
                    Conv::new(params, rng, &format!("res{i}.0"), 4 * b, 4 * b, 3, 1),
                    Conv::new(params, rng, &format!("res{i}.1"), 4 * b, 4 * b, 3, 1),
                )
            })
            .collect();
        let up = [
            Conv::new(params, rng, "up0", 4 * b, 2 * b, 3, 1),
            Conv::new(params, rng, "up1", 2 * b, b, 3, 1),
        ];
        let out = Conv::new(params, rng, "out", b, 1, 3, 1);
        Self { stem, down, blocks, up, out }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>, y: Var, mode: Mode) -> Var {
        let mut h = self.stem.apply(g, params, y, mode);
        h = g.relu(h);
        let mut skips = Vec::with_capacity(self.down.len());
        for c in &self.down {
            skips.push(h);
            h = c.apply(g, params, h, mode);
            h = g.relu(h);
        }
        for (a, b) in &self.blocks {
            let mut r = a.apply(g, params, h, mode);
            r = g.relu(r);
            r = b.apply(g, params, r, mode);
            h = g.add(h, r);
            h = g.relu(h);
        }
        // Additive skips carry thin structures past the bottleneck.
        for c in &self.up {
            h = g.upsample2(h);
            h = c.apply(g, params, h, mode);
            h = g.relu(h);
            let skip = skips.pop().expect("one skip per level");
            h = g.add(h, skip);
        }
        h = self.out.apply(g, params, h, mode);
        g.sigmoid(h)
    }
}

/// Generator G: semantic map to image, output squashed into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel<T = f32> {
    arch: GeneratorArch,
    resolution: usize,
    layout: GeneratorLayout,
    params: ParamSet<T>,
}

impl<T: Scalar> GeneratorModel<T> {
    pub fn new(arch: GeneratorArch, resolution: usize, seed: u64) -> Result<Self> {
        arch.validate(resolution)?;
        let mut params = ParamSet::new();
        let mut rng = CounterRng::for_stream(seed, "init-generator", 0);
        let layout = GeneratorLayout::build(&arch, &mut params, &mut rng);
        Ok(Self { arch, resolution, layout, params })
    }

    pub fn arch(&self) -> &GeneratorArch {
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

    pub fn cast<U: Scalar>(&self) -> GeneratorModel<U> {
        GeneratorModel {
            arch: self.arch,
            resolution: self.resolution,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// `(n, classes, h, w)` semantic maps to `(n, 1, h, w)` images.
    pub fn forward(&self, g: &mut Graph<T>, y: Var, mode: Mode) -> Var {
        self.layout.forward(g, &self.params, y, mode)
    }
}

/// Patch discriminator D: 3x3 stride-2 convolutions ending in a per-patch
/// realness map. Receptive field of each output cell is 31 pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorArch {
    pub base_channels: usize,
}

impl Default for DiscriminatorArch {
    fn default() -> Self {
        Self { base_channels: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DiscriminatorLayout {
    convs: [Conv; 3],
    head: Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorModel<T = f32> {
    arch: DiscriminatorArch,
    resolution: usize,
    layout: DiscriminatorLayout,
    params: ParamSet<T>,
}

impl<T: Scalar> DiscriminatorModel<T> {
    pub fn new(arch: DiscriminatorArch, resolution: usize, seed: u64) -> Result<Self> {
        if arch.base_channels == 0 {
            return Err(Error::InvalidConfig { field: "disc_arch.base_channels".into(), reason: "must be positive".into() });
        }
        if resolution < 8 {
            return Err(Error::InvalidConfig {
                field: "phantom.resolution".into(),
                reason: format!("discriminator needs at least 8 pixels, got {resolution}"),
            });
        }
        let b = arch.base_channels;
        let mut params = ParamSet::new();
        let mut rng = CounterRng::for_stream(seed, "init-discriminator", 0);
        let convs = [
            Conv::new(&mut params, &mut rng, "conv0", 1, b, 3, 2),
            Conv::new(&mut params, &mut rng, "conv1", b, 2 * b, 3, 2),
            Conv::new(&mut params, &mut rng, "conv2", 2 * b, 4 * b, 3, 2),
        ];
        let head = Conv::new(&mut params, &mut rng, "head", 4 * b, 1, 3, 1);
        Ok(Self { arch, resolution, layout: DiscriminatorLayout { convs, head }, params })
    }

    pub fn arch(&self) -> &DiscriminatorArch {
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

    pub fn cast<U: Scalar>(&self) -> DiscriminatorModel<U> {
        DiscriminatorModel {
            arch: self.arch,
            resolution: self.resolution,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// `(n, 1, h, w)` images to `(n, 1, h/8, w/8)` realness scores in (0, 1).
    pub fn forward(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Var {
        let mut h = x;
        for c in &self.layout.convs {
            h = c.apply(g, &self.params, h, mode);
            h = g.leaky_relu(h, LEAK);
        }
        h = self.layout.head.apply(g, &self.params, h, mode);
        g.sigmoid(h)
    }
}

impl GeneratorModel<f32> {
    pub fn save(&self, stem: &Path, cfg: &SynthTrainConfig, epoch: usize, losses: &[EpochLoss]) -> Result<()> {
        checkpoint::save(
            stem,
            GENERATOR_KIND,
            &serde_json::json!({ "generator": self.arch, "resolution": self.resolution }),
            &serde_json::json!({ "train": cfg, "schedule": "1:1 alternating, discriminator first" }),
            epoch,
            &losses,
            &self.params,
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (sidecar, params) = checkpoint::load(stem, GENERATOR_KIND)?;
        let arch: GeneratorArch = serde_json::from_value(sidecar.architecture["generator"].clone())?;
        let resolution: usize = serde_json::from_value(sidecar.architecture["resolution"].clone())?;
        let mut model = Self::new(arch, resolution, 0)?;
        if model.params.specs() != params.specs() {
            return Err(Error::ModelMismatch(format!("{} does not match its declared architecture", stem.display())));
        }
        model.params = params;
        Ok(model)
    }
}

impl DiscriminatorModel<f32> {
    pub fn save(&self, stem: &Path, cfg: &SynthTrainConfig, epoch: usize, losses: &[EpochLoss]) -> Result<()> {
        checkpoint::save(
            stem,
            DISCRIMINATOR_KIND,
            &serde_json::json!({ "discriminator": self.arch, "resolution": self.resolution }),
            &serde_json::json!({ "train": cfg, "schedule": "1:1 alternating, discriminator first" }),
            epoch,
            &losses,
            &self.params,
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (sidecar, params) = checkpoint::load(stem, DISCRIMINATOR_KIND)?;
        let arch: DiscriminatorArch = serde_json::from_value(sidecar.architecture["discriminator"].clone())?;
        let resolution: usize = serde_json::from_value(sidecar.architecture["resolution"].clone())?;
        let mut model = Self::new(arch, resolution, 0)?;
        if model.params.specs() != params.specs() {
            return Err(Error::ModelMismatch(format!("{} does not match its declared architecture", stem.display())));
        }
        model.params = params;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthTrainConfig {
    pub epochs: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub seed: u64,
    /// Blend each training map toward its one-hot argmax by a random amount,
    /// so G also sees the sharp posteriors a trained segmentor emits.
    pub sharpen_inputs: bool,
}

impl Default for SynthTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            lambda: 10.0,
            learning_rate: 2e-4,
            betas: (0.5, 0.999),
            batch_size: 16,
            seed: 0,
            sharpen_inputs: true,
        }
    }
}

impl SynthTrainConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_common(prefix, self.learning_rate, self.betas, self.batch_size)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig { field: format!("{prefix}.lambda"), reason: "must be >= 0".into() });
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.betas.0, beta2: self.betas.1, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SynthTrainOutput {
    pub generator: GeneratorModel,
    pub discriminator: DiscriminatorModel,
    /// Per epoch: `d_loss`, `g_adv`, `l1`, `g_total`.
    pub losses: Vec<EpochLoss>,
}

/// Stacks ground-truth probability maps into `(n, classes, h, w)`. With
/// `sharpen`, record `i` becomes `a * probs + (1 - a) * onehot` for a
/// seeded `a ~ U[0, 1]` drawn from `sharpen(i)`.
fn probs_tensor(records: &[(usize, &Record)], sharpen: Option<&dyn Fn(usize) -> f32>) -> Tensor<f32> {
    let first = &records[0].1.labels;
    let (c, n) = (first.num_classes(), first.size());
    let mut data = Vec::with_capacity(records.len() * c * n * n);
    for &(i, r) in records {
        match sharpen {
            Some(draw) => {
                let a = draw(i);
                data.extend(r.labels.probs().iter().zip(r.labels.onehot()).map(|(&p, &o)| a * p + (1.0 - a) * o));
            }
            None => data.extend_from_slice(r.labels.probs()),
        }
    }
    Tensor::from_vec([records.len(), c, n, n], data)
}

/// Adversarial training of G and D on (probability map, image) pairs. Each
/// batch takes one D step and then one G step against the updated D.
/// See [`SynthTrainConfig::sharpen_inputs`] for the map augmentation.
pub fn train_synthesizer(
    records: &[Record],
    gen_arch: GeneratorArch,
    disc_arch: DiscriminatorArch,
    cfg: &SynthTrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<SynthTrainOutput> {
    cfg.validate("synth")?;
    let first = records.first().ok_or(Error::EmptySplit("synthesizer"))?;
    let resolution = first.image.size();
    let gen_arch = GeneratorArch { num_classes: first.labels.num_classes(), ..gen_arch };
    let mut gen = GeneratorModel::<f32>::new(gen_arch, resolution, cfg.seed)?;
    let mut disc = DiscriminatorModel::<f32>::new(disc_arch, resolution, cfg.seed)?;
    let mut g_opt = Adam::new(cfg.adam(), &gen.params);
    let mut d_opt = Adam::new(cfg.adam(), &disc.params);
    let mut losses = Vec::new();
    let mut last_good: Option<PathBuf> = None;
    let lambda = cfg.lambda as f32;

    for epoch in 0..cfg.epochs {
        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for (b, batch) in batches(records.len(), cfg.batch_size, cfg.seed, "synth-shuffle", epoch).enumerate() {
            let recs: Vec<&Record> = batch.iter().map(|&i| &records[i]).collect();
            let imgs: Vec<&ImageSlice> = recs.iter().map(|r| &r.image).collect();
            let real = images_tensor(&imgs);
            let draw = |i: usize| {
                let stream = ((epoch as u64) << 32) | i as u64;
                CounterRng::for_stream(cfg.seed, "synth-sharpen", stream).uniform() as f32
            };
            let indexed: Vec<(usize, &Record)> = batch.iter().map(|&i| (i, &records[i])).collect();

            let mut gg = Graph::new();
            let y = gg.input(probs_tensor(&indexed, cfg.sharpen_inputs.then_some(&draw as &dyn Fn(usize) -> f32)));
            let fake = gen.forward(&mut gg, y, Mode::Train);

            // Discriminator step on real and (detached) fake images.
            let mut dg = Graph::new();
            let xr = dg.input(real.clone());
            let xf = dg.input(gg.value(fake).clone());
            let sr = disc.forward(&mut dg, xr, Mode::Train);
            let sf = disc.forward(&mut dg, xf, Mode::Train);
            let adv = adversarial_losses(dg.value(sr), dg.value(sf))?;
            let nonfinite = |what: &str| {
                log::error!("non-finite {what} at epoch {epoch}, batch {b}");
                Error::NonFiniteLoss { model: "synthesizer", epoch, batch: b, last_good: last_good.clone() }
            };
            if !adv.d_loss.is_finite() {
                return Err(nonfinite("discriminator loss"));
            }
            let d_grads = dg.backward_multi(vec![(sr, adv.d_grad_real), (sf, adv.d_grad_fake)]);
            d_opt.step(&mut disc.params, &d_grads.param_grads());
            let d_loss = adv.d_loss;
            drop(dg);

            // Generator step against the updated, frozen discriminator.
            let sf = disc.forward(&mut gg, fake, Mode::Frozen);
            let adv = generator_adversarial_loss(gg.value(sf))?;
            let l1 = l1_loss(&real, gg.value(fake))?;
            let total = generator_objective(adv.value as f64, l1.value as f64, cfg.lambda)
                .map_err(|_| nonfinite("generator loss"))?;
            let mut l1_grad = l1.grad;
            l1_grad.data_mut().iter_mut().for_each(|v| *v *= lambda);
            let g_grads = gg.backward_multi(vec![(sf, adv.grad), (fake, l1_grad)]);
            g_opt.step(&mut gen.params, &g_grads.param_grads());

            let k = recs.len() as f64;
            sums[0] += d_loss as f64 * k;
            sums[1] += adv.value as f64 * k;
            sums[2] += l1.value as f64 * k;
            sums[3] += total * k;
            seen += recs.len();
        }
        let mean = sums.map(|s| s / seen as f64);
        log::info!(
            "synthesizer epoch {}/{}: d {:.4} g_adv {:.4} l1 {:.5}",
            epoch + 1,
            cfg.epochs,
            mean[0],
            mean[1],
            mean[2]
        );
        losses.push(EpochLoss {
            epoch,
            values: [("d_loss", mean[0]), ("g_adv", mean[1]), ("l1", mean[2]), ("g_total", mean[3])]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
        });
        if let Some(dir) = checkpoint_dir {
            let stem = dir.join(format!("epoch_{:03}_{GENERATOR_KIND}", epoch + 1));
            gen.save(&stem, cfg, epoch + 1, &losses)?;
            disc.save(&dir.join(format!("epoch_{:03}_{DISCRIMINATOR_KIND}", epoch + 1)), cfg, epoch + 1, &losses)?;
            last_good = Some(stem);
        }
    }
    if let Some(dir) = checkpoint_dir {
        gen.save(&dir.join(GENERATOR_KIND), cfg, cfg.epochs, &losses)?;
        disc.save(&dir.join(DISCRIMINATOR_KIND), cfg, cfg.epochs, &losses)?;
    }
    Ok(SynthTrainOutput { generator: gen, discriminator: disc, losses })
}

/// Synthesizes one image per semantic map, in input order.
pub fn synthesize_many(g: &GeneratorModel, semantic: &[SemanticIntermediate]) -> Result<Vec<ImageSlice>> {
    use rayon::prelude::*;
    for s in semantic {
        if s.num_classes() != g.arch.num_classes {
            return Err(Error::ModelMismatch(format!(
                "generator expects {} classes, semantic map has {}",
                g.arch.num_classes,
                s.num_classes()
            )));
        }
        if s.size() != g.resolution {
            return Err(Error::Shape(format!(
                "generator trained at {0}x{0}, got a {1}x{1} map",
                g.resolution,
                s.size()
            )));
        }
    }
    let chunks: Vec<Vec<ImageSlice>> = semantic
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| {
            let (c, n) = (g.arch.num_classes, g.resolution);
            let mut data = Vec::with_capacity(chunk.len() * c * n * n);
            for s in chunk {
                data.extend_from_slice(s.values());
            }
            let mut graph = Graph::new();
            let y = graph.input(Tensor::from_vec([chunk.len(), c, n, n], data));
            let out = g.forward(&mut graph, y, Mode::Frozen);
            let out = graph.take_value(out);
            (0..chunk.len()).map(|i| ImageSlice::from_clamped(n, out.item(i).to_vec())).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn synthesize(g: &GeneratorModel, semantic: &SemanticIntermediate) -> Result<ImageSlice> {
    Ok(synthesize_many(g, std::slice::from_ref(semantic))?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::SemanticMode;
    use approx::assert_abs_diff_eq;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, v.len()], v.to_vec())
    }

    #[test]
    fn equilibrium_discriminator_loss() {
        let a = adversarial_losses(&t(&[0.5; 6]), &t(&[0.5; 6])).unwrap();
        assert_abs_diff_eq!(a.d_loss, 2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn perfect_discriminator_limit() {
        let a = adversarial_losses(&t(&[1.0, 1.0]), &t(&[0.0, 0.0])).unwrap();
        assert!(a.d_loss < 1e-6);
        assert_abs_diff_eq!(a.g_adv_loss, -(1e-7f64).ln(), epsilon = 1e-9);
    }

    #[test]
    fn generator_adversarial_value() {
        let a = adversarial_losses(&t(&[0.5]), &t(&[0.8; 4])).unwrap();
        assert_abs_diff_eq!(a.g_adv_loss, 0.22314, epsilon = 1e-5);
        assert!(adversarial_losses(&t(&[f64::NAN]), &t(&[0.5])).is_err());
    }

    #[test]
    fn l1_values() {
        let x = t(&[0.0, 0.5, 0.5, 1.0]);
        assert_eq!(l1_loss(&x, &x).unwrap().value, 0.0);
        assert_abs_diff_eq!(l1_loss(&x, &t(&[0.1, 0.5, 0.3, 1.0])).unwrap().value, 0.075, epsilon = 1e-12);
        assert_eq!(l1_loss(&t(&[0.0; 3]), &t(&[1.0; 3])).unwrap().value, 1.0);
        assert!(l1_loss(&x, &t(&[0.0])).is_err());
    }

    #[test]
    fn objective_values() {
        assert_abs_diff_eq!(generator_objective(0.2, 0.05, 10.0).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(generator_objective(0.22314, 0.075, 10.0).unwrap(), 0.97314, epsilon = 1e-12);
        assert_eq!(generator_objective(0.3, 0.5, 0.0).unwrap(), 0.3);
        assert!(generator_objective(f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn synthesis_range_and_determinism() {
        let g = GeneratorModel::<f32>::new(GeneratorArch { base_channels: 4, ..Default::default() }, 16, 3).unwrap();
        let mut rng = CounterRng::new(9, 0);
        let vals: Vec<f32> = (0..4 * 256).map(|_| (rng.normal() * 50.0) as f32).collect();
        let s = SemanticIntermediate::from_raw(16, 4, vals, SemanticMode::Continuous).unwrap();
        let a = synthesize(&g, &s).unwrap();
        assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(synthesize(&g, &s).unwrap(), a);
        let wrong = SemanticIntermediate::from_raw(16, 3, vec![0.0; 3 * 256], SemanticMode::Continuous).unwrap();
        assert!(matches!(synthesize(&g, &wrong), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn discriminator_scores_are_patches_in_unit_interval() {
        let d = DiscriminatorModel::<f32>::new(DiscriminatorArch { base_channels: 4 }, 32, 1).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::full([2, 1, 32, 32], 0.7));
        let s = d.forward(&mut g, x, Mode::Frozen);
        assert_eq!(g.value(s).shape(), [2, 1, 4, 4]);
        assert!(g.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
