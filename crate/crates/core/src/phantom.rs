//! Seeded synthetic brain phantoms with ground-truth tissue maps and lesions.
//!
//! A healthy slice is a jittered, rotated ellipse: white matter inside, a
//! folded gray-matter ring, a thin CSF rim and two ventricles. Intensities
//! follow a T2-like ordering (WM < GM < CSF). Lesions are bright and are
//! written into the image only; tissue labels keep describing the healthy
//! anatomy underneath.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    argmax, DatasetManifest, ImageSlice, LesionMask, SplitKind, SplitMeta, SplitWriter,
    TissueLabelMap,
};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const NUM_CLASSES: usize = 4;
pub const BACKGROUND: usize = 0;
pub const GM: usize = 1;
pub const WM: usize = 2;
pub const CSF: usize = 3;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "GM", "WM", "CSF"];

/// Anatomy indices of test slices start here so train and test anatomy
/// never share a stream, whatever the split sizes.
pub const TEST_INDEX_OFFSET: u64 = 1 << 40;

const MAX_LESION_ATTEMPTS: usize = 100;
const MAX_LESION_BRAIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionStyle {
    /// One large, smooth, bright blob.
    TumorLike,
    /// One to three small irregular blobs with a wide intensity spread.
    StrokeLike,
}

impl LesionStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            LesionStyle::TumorLike => "tumor_like",
            LesionStyle::StrokeLike => "stroke_like",
        }
    }

    /// Range of per-blob base intensities.
    pub fn intensity_range(self) -> (f64, f64) {
        match self {
            LesionStyle::TumorLike => (0.62, 0.86),
            LesionStyle::StrokeLike => (0.55, 0.95),
        }
    }

    /// Blob radius range as a fraction of the image side.
    fn radius_range(self) -> (f64, f64) {
        match self {
            LesionStyle::TumorLike => (0.08, 0.20),
            LesionStyle::StrokeLike => (0.02, 0.08),
        }
    }

    fn blob_count(self, rng: &mut CounterRng) -> usize {
        match self {
            LesionStyle::TumorLike => 1,
            LesionStyle::StrokeLike => 1 + rng.below(3) as usize,
        }
    }

    /// Amplitude of the boundary harmonics, relative to the radius.
    fn irregularity(self) -> f64 {
        match self {
            LesionStyle::TumorLike => 0.08,
            LesionStyle::StrokeLike => 0.25,
        }
    }
}

impl std::str::FromStr for LesionStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tumor_like" => Ok(LesionStyle::TumorLike),
            "stroke_like" => Ok(LesionStyle::StrokeLike),
            other => Err(format!("unknown lesion style `{other}`")),
        }
    }
}

impl std::fmt::Display for LesionStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean intensity per tissue class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueMeans {
    pub background: f64,
    pub gm: f64,
    pub wm: f64,
    pub csf: f64,
}

impl TissueMeans {
    pub fn for_class(&self, class: usize) -> f64 {
        match class {
            GM => self.gm,
            WM => self.wm,
            CSF => self.csf,
            _ => self.background,
        }
    }
}

impl Default for TissueMeans {
    fn default() -> Self {
        Self { background: 0.0, gm: 0.55, wm: 0.35, csf: 0.90 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub seed: u64,
    pub resolution: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub lesion_fraction: f64,
    pub lesion_style: LesionStyle,
    pub noise_sigma: f64,
    pub tissue_means: TissueMeans,
    /// Standard deviation (pixels) of the blur that softens one-hot maps
    /// into probability maps.
    pub blur_radius: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            resolution: 64,
            num_train: 2000,
            num_test: 200,
            lesion_fraction: 0.5,
            lesion_style: LesionStyle::TumorLike,
            noise_sigma: 0.03,
            tissue_means: TissueMeans::default(),
            blur_radius: 1.5,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { field: field.to_owned(), reason: reason.into() }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(invalid("resolution", "must be at least 16"));
        }
        if !(0.0..=1.0).contains(&self.lesion_fraction) {
            return Err(invalid("lesion_fraction", "must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", "must be finite and non-negative"));
        }
        if !(self.blur_radius >= 0.0 && self.blur_radius.is_finite()) {
            return Err(invalid("blur_radius", "must be finite and non-negative"));
        }
        let m = &self.tissue_means;
        for (name, v) in [("background", m.background), ("gm", m.gm), ("wm", m.wm), ("csf", m.csf)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(&format!("tissue_means.{name}"), "must lie in [0, 1]"));
            }
        }
        if !(m.wm < m.gm && m.gm < m.csf) {
            return Err(invalid("tissue_means", "T2-like ordering wm < gm < csf is required"));
        }
        let (_, hi) = self.lesion_style.intensity_range();
        if hi < m.csf - 0.1 {
            return Err(invalid(
                "tissue_means.csf",
                "lesion intensities must reach CSF's bright range",
            ));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with clamped borders, in place.
fn gaussian_blur(plane: &mut [f64], size: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let half = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * plane[y * size + clamp(x as isize + i as isize - half)])
                .sum();
        }
    }
    for y in 0..size {
        for x in 0..size {
            plane[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - half) * size + x])
                .sum();
        }
    }
}

struct Anatomy {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    rot: f64,
    wobble: [(f64, f64, f64); 2],
    gm_inner: f64,
    folds: (f64, f64, f64),
    csf_rim: f64,
    ventricles: [(f64, f64, f64, f64, f64); 2],
}

impl Anatomy {
    fn sample(rng: &mut CounterRng, s: f64) -> Self {
        let cx = s * (0.5 + rng.range(-0.04, 0.04));
        let cy = s * (0.5 + rng.range(-0.04, 0.04));
        let a = s * rng.range(0.32, 0.38);
        let b = s * rng.range(0.38, 0.44);
        let rot = rng.range(-0.25, 0.25);
        let wobble = [
            (rng.range(0.01, 0.035), (3 + rng.below(3)) as f64, rng.range(0.0, 2.0 * PI)),
            (rng.range(0.005, 0.02), (6 + rng.below(4)) as f64, rng.range(0.0, 2.0 * PI)),
        ];
        let gm_inner = rng.range(0.74, 0.80);
        let folds = (rng.range(0.02, 0.05), (8 + rng.below(6)) as f64, rng.range(0.0, 2.0 * PI));
        let csf_rim = rng.range(0.92, 0.95);
        let scale = rng.range(0.4, 1.2);
        let dx = rng.range(0.10, 0.16);
        let dy = rng.range(-0.12, 0.02);
        let rx = rng.range(0.07, 0.11) * scale;
        let ry = rng.range(0.18, 0.28) * scale;
        let tilt = rng.range(0.05, 0.35);
        let ventricles = [(-dx, dy, rx, ry, tilt), (dx, dy, rx, ry, -tilt)];
        Self { cx, cy, a, b, rot, wobble, gm_inner, folds, csf_rim, ventricles }
    }

    fn label(&self, px: f64, py: f64) -> usize {
        let (sn, cs) = self.rot.sin_cos();
        let dx = px - self.cx;
        let dy = py - self.cy;
        let u = (cs * dx + sn * dy) / self.a;
        let v = (-sn * dx + cs * dy) / self.b;
        let phi = v.atan2(u);
        let wobble: f64 = self.wobble.iter().map(|&(amp, k, ph)| amp * (k * phi + ph).sin()).sum();
        let rho = (u * u + v * v).sqrt() / (1.0 + wobble);
        if rho > 1.0 {
            return BACKGROUND;
        }
        if rho > self.csf_rim {
            return CSF;
        }
        for &(vx, vy, rx, ry, tilt) in &self.ventricles {
            let (ts, tc) = tilt.sin_cos();
            let du = u - vx;
            let dv = v - vy;
            let eu = (tc * du + ts * dv) / rx;
            let ev = (-ts * du + tc * dv) / ry;
            if eu * eu + ev * ev <= 1.0 {
                return CSF;
            }
        }
        let (amp, k, ph) = self.folds;
        if rho > self.gm_inner + amp * (k * phi + ph).sin() {
            return GM;
        }
        WM
    }
}

/// Generates healthy slice `index`. Output is a pure function of
/// `(cfg.seed, index)` and the remaining config fields.
pub fn generate_healthy(cfg: &PhantomConfig, index: u64) -> Result<(ImageSlice, TissueLabelMap)> {
    cfg.validate()?;
    let n = cfg.resolution;
    let hw = n * n;
    let mut rng = CounterRng::for_stream(cfg.seed, "anatomy", index);
    let anatomy = Anatomy::sample(&mut rng, n as f64);

    let mut planes = vec![0.0f64; NUM_CLASSES * hw];
    for y in 0..n {
        for x in 0..n {
            let c = anatomy.label(x as f64 + 0.5, y as f64 + 0.5);
            planes[c * hw + y * n + x] = 1.0;
        }
    }
    for c in 0..NUM_CLASSES {
        gaussian_blur(&mut planes[c * hw..(c + 1) * hw], n, cfg.blur_radius);
    }
    let mut probs = vec![0.0f32; NUM_CLASSES * hw];
    for p in 0..hw {
        let total: f64 = (0..NUM_CLASSES).map(|c| planes[c * hw + p]).sum();
        let mut acc = 0.0f64;
        for c in 0..NUM_CLASSES - 1 {
            let v = (planes[c * hw + p] / total) as f32;
            probs[c * hw + p] = v;
            acc += v as f64;
        }
        // Last class takes the remainder so the f32 sum is exact to rounding.
        probs[(NUM_CLASSES - 1) * hw + p] = (1.0 - acc).max(0.0) as f32;
    }
    let labels = TissueLabelMap::from_probs(n, NUM_CLASSES, probs)?;

    let hard = labels.labels();
    let mut noise = CounterRng::for_stream(cfg.seed, "anatomy-noise", index);
    let pixels = hard
        .iter()
        .map(|&c| {
            let mean = cfg.tissue_means.for_class(c as usize);
            let v = if cfg.noise_sigma > 0.0 { mean + cfg.noise_sigma * noise.normal() } else { mean };
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok((ImageSlice::new(n, pixels)?, labels))
}

/// Writes a lesion of `cfg.lesion_style` into a healthy slice. Labels are
/// returned unchanged.
pub fn inject_lesion(
    healthy: (ImageSlice, TissueLabelMap),
    cfg: &PhantomConfig,
    index: u64,
) -> Result<(ImageSlice, TissueLabelMap, LesionMask)> {
    cfg.validate()?;
    let (image, labels) = healthy;
    let n = image.size();
    if labels.size() != n {
        return Err(Error::Shape(format!("image side {n}, labels side {}", labels.size())));
    }
    let style = cfg.lesion_style;
    let hard = labels.labels();
    let brain: Vec<usize> = (0..n * n).filter(|&p| hard[p] as usize != BACKGROUND).collect();
    if brain.is_empty() {
        return Err(Error::LesionPlacement(0));
    }
    let mut rng = CounterRng::for_stream(cfg.seed, &format!("lesion-{}", style.as_str()), index);
    let s = n as f64;
    let (rlo, rhi) = style.radius_range();
    let (ilo, ihi) = style.intensity_range();

    for _ in 0..MAX_LESION_ATTEMPTS {
        let blobs = style.blob_count(&mut rng);
        let mut value = vec![f64::NAN; n * n];
        for _ in 0..blobs {
            let center = brain[rng.below(brain.len() as u64) as usize];
            let (cy, cx) = ((center / n) as f64 + 0.5, (center % n) as f64 + 0.5);
            let radius = (s * rng.range(rlo, rhi)).max(1.0);
            let harmonics: Vec<(f64, f64, f64)> = (2..=4)
                .map(|k| (rng.range(0.0, style.irregularity()), k as f64, rng.range(0.0, 2.0 * PI)))
                .collect();
            let base = rng.range(ilo, ihi);
            for &p in &brain {
                let dy = (p / n) as f64 + 0.5 - cy;
                let dx = (p % n) as f64 + 0.5 - cx;
                let phi = dy.atan2(dx);
                let edge = radius
                    * (1.0 + harmonics.iter().map(|&(a, k, ph)| a * (k * phi + ph).sin()).sum::<f64>());
                let d = (dx * dx + dy * dy).sqrt();
                if d < edge {
                    let t = d / edge;
                    let v = match style {
                        LesionStyle::TumorLike => base + 0.06 * (1.0 - t * t),
                        LesionStyle::StrokeLike => base,
                    };
                    value[p] = if value[p].is_nan() { v } else { value[p].max(v) };
                }
            }
        }
        let area = value.iter().filter(|v| !v.is_nan()).count();
        if area == 0 || area as f64 > MAX_LESION_BRAIN_FRACTION * brain.len() as f64 {
            continue;
        }
        let spread = match style {
            LesionStyle::TumorLike => cfg.noise_sigma,
            LesionStyle::StrokeLike => 2.0 * cfg.noise_sigma,
        };
        let mut pixels = image.pixels().to_vec();
        let mut mask = vec![false; n * n];
        for (p, v) in value.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            let noisy = if spread > 0.0 { v + spread * rng.normal() } else { *v };
            pixels[p] = noisy.clamp(0.0, 1.0) as f32;
            mask[p] = true;
        }
        return Ok((ImageSlice::new(n, pixels)?, labels, LesionMask::new(n, mask)?));
    }
    Err(Error::LesionPlacement(MAX_LESION_ATTEMPTS))
}

fn split_meta(cfg: &PhantomConfig, split: &str, kind: SplitKind, style: LesionStyle) -> Result<SplitMeta> {
    let mut recorded = cfg.clone();
    recorded.lesion_style = style;
    Ok(SplitMeta {
        split: split.to_owned(),
        kind,
        resolution: cfg.resolution,
        num_classes: NUM_CLASSES,
        generator_seed: cfg.seed,
        lesion_style: style.as_str().to_owned(),
        generator: serde_json::to_value(&recorded)?,
    })
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to build generator thread pool")
}

/// Which test slices carry lesions: a seeded choice of
/// `round(fraction * num_test)` indices, independent of lesion style.
pub fn lesioned_test_indices(cfg: &PhantomConfig) -> Vec<bool> {
    let k = (cfg.lesion_fraction * cfg.num_test as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.num_test).collect();
    CounterRng::for_stream(cfg.seed, "lesion-assignment", 0).shuffle(&mut order);
    let mut lesioned = vec![false; cfg.num_test];
    for &i in order.iter().take(k) {
        lesioned[i] = true;
    }
    lesioned
}

/// Writes the healthy-only training split.
pub fn write_train_split(cfg: &PhantomConfig, root: &Path, workers: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    let records = thread_pool(workers).install(|| {
        (0..cfg.num_train)
            .into_par_iter()
            .map(|i| generate_healthy(cfg, i as u64))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = SplitWriter::create(root, split_meta(cfg, "train", SplitKind::Train, cfg.lesion_style)?)?;
    for (i, (img, lbl)) in records.iter().enumerate() {
        w.write_record(&format!("train_{i:05}"), img, lbl, None)?;
    }
    w.finish()
}

/// Writes a test split with lesions of `style`. Test anatomy and the
/// lesioned/healthy assignment are shared by every style.
pub fn write_test_split(
    cfg: &PhantomConfig,
    root: &Path,
    split: &str,
    style: LesionStyle,
    workers: usize,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let styled = PhantomConfig { lesion_style: style, ..cfg.clone() };
    let lesioned = lesioned_test_indices(cfg);
    let records = thread_pool(workers).install(|| {
        (0..cfg.num_test)
            .into_par_iter()
            .map(|j| {
                let healthy = generate_healthy(cfg, TEST_INDEX_OFFSET + j as u64)?;
                if lesioned[j] {
                    inject_lesion(healthy, &styled, j as u64)
                } else {
                    let n = healthy.0.size();
                    Ok((healthy.0, healthy.1, LesionMask::empty(n)))
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = SplitWriter::create(root, split_meta(cfg, split, SplitKind::Test, style)?)?;
    for (j, (img, lbl, mask)) in records.iter().enumerate() {
        w.write_record(&format!("test_{j:05}"), img, lbl, Some(mask))?;
    }
    w.finish()
}

/// Writes `train` and `test` splits under `root`.
pub fn build_dataset(
    cfg: &PhantomConfig,
    root: &Path,
    workers: usize,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let train = write_train_split(cfg, root, workers)?;
    let test = write_test_split(cfg, root, "test", cfg.lesion_style, workers)?;
    Ok((train, test))
}

/// Mean image intensity per hard tissue class over a set of slices.
pub fn class_mean_intensities<'a>(
    slices: impl IntoIterator<Item = (&'a ImageSlice, &'a TissueLabelMap)>,
) -> [Option<f64>; NUM_CLASSES] {
    let mut sum = [0.0f64; NUM_CLASSES];
    let mut count = [0usize; NUM_CLASSES];
    for (img, lbl) in slices {
        let hw = img.size() * img.size();
        for p in 0..hw {
            let c = argmax((0..lbl.num_classes()).map(|c| lbl.onehot()[c * hw + p]));
            sum[c] += img.pixels()[p] as f64;
            count[c] += 1;
        }
    }
    std::array::from_fn(|c| (count[c] > 0).then(|| sum[c] / count[c] as f64))
}
