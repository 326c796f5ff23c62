//! Tissue segmentor: a compact U-Net producing per-pixel class posteriors,
//! trained with pixel-wise cross-entropy on healthy slices.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{SemanticIntermediate, SemanticMode};
use crate::dataio::{ImageSlice, Record};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Adam, Conv, Graph, Mode, ParamSet, Scalar, Tensor, Var};
use crate::rng::CounterRng;
use crate::train::{batches, images_tensor, EpochLoss, TrainConfig, INFERENCE_BATCH};

/// Lower clip applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-7;

pub const CHECKPOINT_KIND: &str = "segmentor";

/// A scalar loss and its gradient with respect to the loss input.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

/// Mean over pixels (and batch) of `-sum_c target_c * ln(max(pred_c, eps))`.
///
/// `pred` and `target` are `(n, classes, h, w)`; `target` must be one-hot.
pub fn cross_entropy_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<LossGrad<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let [n, c, h, w] = pred.shape();
    let hw = h * w;
    let pixels = n * hw;
    if pixels == 0 {
        return Err(Error::Shape("empty prediction".into()));
    }
    let eps = T::lit(LOG_EPS);
    let scale = T::one() / T::lit(pixels as f64);
    let mut grad = Tensor::zeros(pred.shape());
    let mut total = T::zero();
    for i in 0..n {
        let (p, t, g) = (pred.item(i), target.item(i), grad.item_mut(i));
        for px in 0..hw {
            let mut ones = 0;
            for ch in 0..c {
                let tv = t[ch * hw + px];
                if tv == T::one() {
                    ones += 1;
                } else if tv != T::zero() {
                    return Err(Error::InvalidValue(format!("target not one-hot: value {tv:?}")));
                }
            }
            if ones != 1 {
                return Err(Error::InvalidValue(format!(
                    "target not one-hot: {ones} active classes at item {i}, pixel {px}"
                )));
            }
            for ch in 0..c {
                let k = ch * hw + px;
                if t[k] == T::zero() {
                    continue;
                }
                let pv = p[k];
                let clipped = pv.max(eps).min(T::one());
                total += -t[k] * clipped.ln();
                if pv >= eps && pv <= T::one() {
                    g[k] = -t[k] / pv * scale;
                }
            }
        }
    }
    Ok(LossGrad { value: total * scale, grad })
}

/// U-Net layout: `depth` resolution levels, channels doubling per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UNetArch {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub num_classes: usize,
}

impl Default for UNetArch {
    fn default() -> Self {
        Self { depth: 3, base_channels: 16, in_channels: 1, num_classes: 4 }
    }
}

impl UNetArch {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        let bad = |field: &str, reason: String| Error::InvalidConfig { field: field.into(), reason };
        if self.depth == 0 || self.base_channels == 0 || self.in_channels == 0 || self.num_classes < 2 {
            return Err(bad("seg_arch", "depth, channels and classes must be positive (classes >= 2)".into()));
        }
        let f = 1usize << (self.depth - 1);
        if resolution == 0 || resolution % f != 0 {
            return Err(bad("seg_arch.depth", format!("resolution {resolution} not divisible by {f}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct UNetLayout {
    down: Vec<(Conv, Conv)>,
    /// Per decoder level, finest last: up-conv, then two convs after concat.
    up: Vec<(Conv, Conv, Conv)>,
    head: Conv,
}

impl UNetLayout {
    fn build<T: Scalar>(arch: &UNetArch, params: &mut ParamSet<T>, rng: &mut CounterRng) -> Self {
        let ch = |level: usize| arch.base_channels << level;
        let mut down = Vec::new();
        let mut cin = arch.in_channels;
        for l in 0..arch.depth {
            let a = Conv::new(params, rng, &format!("down{l}.0"), cin, ch(l), 3, 1);
            let b = Conv::new(params, rng, &format!("down{l}.1"), ch(l), ch(l), 3, 1);
            down.push((a, b));
            cin = ch(l);
        }
        let mut up = Vec::new();
        for l in (0..arch.depth - 1).rev() {
            let u = Conv::new(params, rng, &format!("up{l}.up"), ch(l + 1), ch(l), 3, 1);
            let a = Conv::new(params, rng, &format!("up{l}.0"), 2 * ch(l), ch(l), 3, 1);
            let b = Conv::new(params, rng, &format!("up{l}.1"), ch(l), ch(l), 3, 1);
            up.push((u, a, b));
        }
        let head = Conv::new(params, rng, "head", ch(0), arch.num_classes, 1, 1);
        Self { down, up, head }
    }

    /// Returns the pre-softmax scores.
    fn logits<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>, x: Var, mode: Mode) -> Var {
        let mut skips = Vec::new();
        let mut h = x;
        for (l, (a, b)) in self.down.iter().enumerate() {
            if l > 0 {
                h = g.max_pool2(h);
            }
            h = a.apply(g, params, h, mode);
            h = g.relu(h);
            h = b.apply(g, params, h, mode);
            h = g.relu(h);
            skips.push(h);
        }
        skips.pop();
        for (u, a, b) in &self.up {
            let skip = skips.pop().expect("one skip per decoder level");
            h = g.upsample2(h);
            h = u.apply(g, params, h, mode);
            h = g.relu(h);
            h = g.concat(skip, h);
            h = a.apply(g, params, h, mode);
            h = g.relu(h);
            h = b.apply(g, params, h, mode);
            h = g.relu(h);
        }
        self.head.apply(g, params, h, mode)
    }
}

/// Segmentation model S: image to per-pixel class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationModel<T = f32> {
    arch: UNetArch,
    resolution: usize,
    layout: UNetLayout,
    params: ParamSet<T>,
}

impl<T: Scalar> SegmentationModel<T> {
    pub fn new(arch: UNetArch, resolution: usize, seed: u64) -> Result<Self> {
        arch.validate(resolution)?;
        let mut params = ParamSet::new();
        let mut rng = CounterRng::for_stream(seed, "init-segmentor", 0);
        let layout = UNetLayout::build(&arch, &mut params, &mut rng);
        Ok(Self { arch, resolution, layout, params })
    }

    pub fn arch(&self) -> &UNetArch {
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

    pub fn cast<U: Scalar>(&self) -> SegmentationModel<U> {
        SegmentationModel {
            arch: self.arch,
            resolution: self.resolution,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Pre-softmax class scores for an `(n, in_channels, h, w)` batch.
    pub fn logits(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Var {
        self.layout.logits(g, &self.params, x, mode)
    }

    /// Class probabilities (softmax of [`SegmentationModel::logits`]).
    pub fn forward(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Var {
        let z = self.logits(g, x, mode);
        g.softmax(z)
    }

    fn check_input(&self, image: &ImageSlice) -> Result<()> {
        if image.size() != self.resolution {
            return Err(Error::Shape(format!(
                "segmentor trained at {0}x{0}, got a {1}x{1} slice",
                self.resolution,
                image.size()
            )));
        }
        Ok(())
    }
}

impl SegmentationModel<f32> {
    pub fn save(&self, stem: &Path, cfg: &TrainConfig, epoch: usize, losses: &[EpochLoss]) -> Result<()> {
        checkpoint::save(
            stem,
            CHECKPOINT_KIND,
            &serde_json::json!({ "unet": self.arch, "resolution": self.resolution }),
            cfg,
            epoch,
            &losses,
            &self.params,
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (sidecar, params) = checkpoint::load(stem, CHECKPOINT_KIND)?;
        let arch: UNetArch = serde_json::from_value(sidecar.architecture["unet"].clone())?;
        let resolution: usize = serde_json::from_value(sidecar.architecture["resolution"].clone())?;
        let mut model = Self::new(arch, resolution, 0)?;
        if model.params.specs() != params.specs() {
            return Err(Error::ModelMismatch(format!(
                "{} does not match its declared architecture",
                stem.display()
            )));
        }
        model.params = params;
        Ok(model)
    }
}

/// Continuous semantic maps for many slices, in input order.
pub fn segment_many(model: &SegmentationModel, images: &[&ImageSlice]) -> Result<Vec<SemanticIntermediate>> {
    use rayon::prelude::*;
    for img in images {
        model.check_input(img)?;
    }
    let chunks: Vec<Vec<SemanticIntermediate>> = images
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| {
            let mut g = Graph::new();
            let x = g.input(images_tensor(chunk));
            let y = model.forward(&mut g, x, Mode::Frozen);
            let probs = g.take_value(y);
            (0..chunk.len())
                .map(|i| {
                    SemanticIntermediate::new(
                        model.resolution,
                        model.arch.num_classes,
                        probs.item(i).to_vec(),
                        SemanticMode::Continuous,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Continuous semantic map `S(x)` for one slice.
pub fn segment(model: &SegmentationModel, image: &ImageSlice) -> Result<SemanticIntermediate> {
    Ok(segment_many(model, &[image])?.remove(0))
}

/// Fraction of pixels whose argmax class matches the one-hot labels.
pub fn pixel_accuracy(model: &SegmentationModel, records: &[Record]) -> Result<f64> {
    let images: Vec<&ImageSlice> = records.iter().map(|r| &r.image).collect();
    let maps = segment_many(model, &images)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (map, rec) in maps.iter().zip(records) {
        let truth = rec.labels.labels();
        let pred = map.argmax_labels();
        correct += truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        total += truth.len();
    }
    Ok(correct as f64 / total.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct SegTrainOutput {
    pub model: SegmentationModel,
    pub losses: Vec<EpochLoss>,
}

fn onehot_tensor(records: &[&Record]) -> Tensor<f32> {
    let first = &records[0].labels;
    let (c, n) = (first.num_classes(), first.size());
    let mut data = Vec::with_capacity(records.len() * c * n * n);
    for r in records {
        data.extend_from_slice(r.labels.onehot());
    }
    Tensor::from_vec([records.len(), c, n, n], data)
}

/// Trains S with cross-entropy against the one-hot labels.
///
/// With `checkpoint_dir`, a checkpoint `epoch_XXX` is written after every
/// epoch and `segmentor` after the last one.
pub fn train_segmentor(
    records: &[Record],
    arch: UNetArch,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<SegTrainOutput> {
    cfg.validate("seg")?;
    let first = records.first().ok_or(Error::EmptySplit("segmentor"))?;
    let resolution = first.image.size();
    let arch = UNetArch { num_classes: first.labels.num_classes(), ..arch };
    let mut model = SegmentationModel::<f32>::new(arch, resolution, cfg.seed)?;
    let mut opt = Adam::new(cfg.adam(), &model.params);
    let mut losses = Vec::new();
    let mut last_good: Option<PathBuf> = None;

    for epoch in 0..cfg.epochs {
        let mut sum = 0.0f64;
        let mut seen = 0usize;
        for (b, batch) in batches(records.len(), cfg.batch_size, cfg.seed, "seg-shuffle", epoch).enumerate() {
            let recs: Vec<&Record> = batch.iter().map(|&i| &records[i]).collect();
            let imgs: Vec<&ImageSlice> = recs.iter().map(|r| &r.image).collect();
            let mut g = Graph::new();
            let x = g.input(images_tensor(&imgs));
            let y = model.forward(&mut g, x, Mode::Train);
            let loss = cross_entropy_loss(g.value(y), &onehot_tensor(&recs))?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss { model: "segmentor", epoch, batch: b, last_good });
            }
            let grads = g.backward(y, loss.grad);
            opt.step(&mut model.params, &grads.param_grads());
            sum += loss.value as f64 * recs.len() as f64;
            seen += recs.len();
        }
        let mean = sum / seen as f64;
        log::info!("segmentor epoch {}/{}: cross-entropy {mean:.5}", epoch + 1, cfg.epochs);
        losses.push(EpochLoss::single(epoch, "cross_entropy", mean));
        if let Some(dir) = checkpoint_dir {
            let stem = dir.join(format!("epoch_{:03}", epoch + 1));
            model.save(&stem, cfg, epoch + 1, &losses)?;
            last_good = Some(stem);
        }
    }
    if let Some(dir) = checkpoint_dir {
        model.save(&dir.join(CHECKPOINT_KIND), cfg, cfg.epochs, &losses)?;
    }
    Ok(SegTrainOutput { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn onehot(classes: usize, active: &[usize]) -> Tensor<f64> {
        let n = active.len();
        let mut t = Tensor::zeros([1, classes, 1, n]);
        for (p, &c) in active.iter().enumerate() {
            t.data_mut()[c * n + p] = 1.0;
        }
        t
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let t = onehot(4, &[2, 0, 3]);
        let l = cross_entropy_loss(&t, &t).unwrap();
        assert!(l.value <= 1e-6);
    }

    #[test]
    fn uniform_prediction_gives_ln_classes() {
        let t = onehot(4, &[1, 3]);
        let p = Tensor::full([1, 4, 1, 2], 0.25);
        let l = cross_entropy_loss(&p, &t).unwrap();
        assert_abs_diff_eq!(l.value, 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_pixel_value() {
        let p = Tensor::from_vec([1, 4, 1, 1], vec![0.7, 0.1, 0.1, 0.1]);
        let l = cross_entropy_loss(&p, &onehot(4, &[0])).unwrap();
        assert_abs_diff_eq!(l.value, 0.356675, epsilon = 1e-6);
    }

    #[test]
    fn zero_probability_is_clipped() {
        let p = Tensor::from_vec([1, 2, 1, 1], vec![0.0, 1.0]);
        let l = cross_entropy_loss(&p, &onehot(2, &[0])).unwrap();
        assert_abs_diff_eq!(l.value, -(1e-7f64).ln(), epsilon = 1e-9);
        assert!(l.grad.all_finite());
    }

    #[test]
    fn rejects_bad_targets_and_shapes() {
        let p = Tensor::<f64>::full([1, 2, 1, 1], 0.5);
        let bad = Tensor::from_vec([1, 2, 1, 1], vec![0.5, 0.5]);
        assert!(matches!(cross_entropy_loss(&p, &bad), Err(Error::InvalidValue(_))));
        let two = Tensor::from_vec([1, 2, 1, 1], vec![1.0, 1.0]);
        assert!(cross_entropy_loss(&p, &two).is_err());
        let wrong = Tensor::<f64>::zeros([1, 3, 1, 1]);
        assert!(matches!(cross_entropy_loss(&p, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn output_is_normalized_and_shape_preserving() {
        for res in [8usize, 16, 24] {
            let model = SegmentationModel::<f32>::new(
                UNetArch { depth: 3, base_channels: 4, ..UNetArch::default() },
                res,
                1,
            )
            .unwrap();
            let img = ImageSlice::new(res, (0..res * res).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
            let s = segment(&model, &img).unwrap();
            assert_eq!(s.size(), res);
            let hw = res * res;
            for p in 0..hw {
                let sum: f32 = (0..4).map(|c| s.values()[c * hw + p]).sum();
                assert!((sum - 1.0).abs() < 1e-5);
            }
            assert_eq!(segment(&model, &img).unwrap(), s);
        }
    }

    #[test]
    fn rejects_wrong_resolution() {
        let model = SegmentationModel::<f32>::new(UNetArch::default(), 16, 1).unwrap();
        assert!(matches!(segment(&model, &ImageSlice::zeros(32)), Err(Error::Shape(_))));
        assert!(SegmentationModel::<f32>::new(UNetArch::default(), 18, 1).is_err());
    }
}
