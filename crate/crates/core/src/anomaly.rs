//! The image -> semantic -> image cycle and residual anomaly scoring.
//!
//! A query slice is segmented by S, optionally discretized to one-hot, and
//! re-synthesized by G. The anomaly score of a pixel is the absolute
//! difference between the query and its reconstruction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{argmax, write_f32_plane, ImageSlice, Record};
use crate::error::{Error, Result};
use crate::phantom::CLASS_NAMES;
use crate::segmod::{segment_many, SegmentationModel};
use crate::synthmod::{synthesize_many, GeneratorModel};

/// Per-pixel tolerance on continuous semantic maps.
pub const SEMANTIC_SUM_TOL: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticMode {
    /// Probabilistic segmentation maps.
    Continuous,
    /// One-hot segmentation maps.
    Discrete,
}

impl SemanticMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SemanticMode::Continuous => "continuous",
            SemanticMode::Discrete => "discrete",
        }
    }
}

impl std::str::FromStr for SemanticMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "continuous" => Ok(SemanticMode::Continuous),
            "discrete" => Ok(SemanticMode::Discrete),
            other => Err(format!("unknown semantic mode `{other}`")),
        }
    }
}

/// Planar `(classes, size, size)` semantic map routed from S into G.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticIntermediate {
    size: usize,
    num_classes: usize,
    values: Vec<f32>,
    mode: SemanticMode,
}

impl SemanticIntermediate {
    pub fn new(size: usize, num_classes: usize, values: Vec<f32>, mode: SemanticMode) -> Result<Self> {
        let s = Self::from_raw(size, num_classes, values, mode)?;
        let hw = size * size;
        for p in 0..hw {
            let px = (0..num_classes).map(|c| s.values[c * hw + p]);
            match mode {
                SemanticMode::Continuous => {
                    let mut sum = 0.0f32;
                    for v in px {
                        if !(v >= 0.0) {
                            return Err(Error::InvalidValue(format!("semantic value {v} at pixel {p}")));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > SEMANTIC_SUM_TOL {
                        return Err(Error::InvalidValue(format!("semantic map sums to {sum} at pixel {p}")));
                    }
                }
                SemanticMode::Discrete => {
                    let (mut ones, mut zeros) = (0, 0);
                    for v in px {
                        if v == 1.0 {
                            ones += 1;
                        } else if v == 0.0 {
                            zeros += 1;
                        }
                    }
                    if ones != 1 || zeros != num_classes - 1 {
                        return Err(Error::InvalidValue(format!("pixel {p} is not one-hot")));
                    }
                }
            }
        }
        Ok(s)
    }

    /// Skips the per-pixel invariants; only the shape is checked. Useful for
    /// probing G with arbitrary inputs.
    pub fn from_raw(size: usize, num_classes: usize, values: Vec<f32>, mode: SemanticMode) -> Result<Self> {
        if values.len() != num_classes * size * size {
            return Err(Error::Shape(format!(
                "semantic map {num_classes}x{size}x{size} needs {} values, got {}",
                num_classes * size * size,
                values.len()
            )));
        }
        Ok(Self { size, num_classes, values, mode })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mode(&self) -> SemanticMode {
        self.mode
    }

    /// Argmax class of each pixel (ties to the lowest class).
    pub fn argmax_labels(&self) -> Vec<u8> {
        let hw = self.size * self.size;
        (0..hw)
            .map(|p| argmax((0..self.num_classes).map(|c| self.values[c * hw + p])) as u8)
            .collect()
    }
}

/// Per-pixel argmax one-hot; ties go to the lowest class index.
pub fn discretize(semantic: &SemanticIntermediate) -> SemanticIntermediate {
    let hw = semantic.size * semantic.size;
    let mut values = vec![0.0; semantic.values.len()];
    for (p, c) in semantic.argmax_labels().into_iter().enumerate() {
        values[c as usize * hw + p] = 1.0;
    }
    SemanticIntermediate {
        size: semantic.size,
        num_classes: semantic.num_classes,
        values,
        mode: SemanticMode::Discrete,
    }
}

/// Per-pixel anomaly scores `|x - x_hat|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    size: usize,
    scores: Vec<f32>,
}

impl ResidualMap {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn from_scores(size: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != size * size {
            return Err(Error::Shape(format!("residual of side {size} got {} scores", scores.len())));
        }
        Ok(Self { size, scores })
    }

    /// 3x3 median filter with clamped borders. Not part of default scoring.
    pub fn median_filtered(&self) -> Self {
        let n = self.size as isize;
        let at = |y: isize, x: isize| self.scores[(y.clamp(0, n - 1) * n + x.clamp(0, n - 1)) as usize];
        let mut out = Vec::with_capacity(self.scores.len());
        for y in 0..n {
            for x in 0..n {
                let mut w = [0.0f32; 9];
                let mut i = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        w[i] = at(y + dy, x + dx);
                        i += 1;
                    }
                }
                w.sort_unstable_by(f32::total_cmp);
                out.push(w[4]);
            }
        }
        Self { size: self.size, scores: out }
    }

    /// Writes the scores as a raw little-endian `f32` plane.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_f32_plane(path, &self.scores)
    }
}

pub fn residual(x: &ImageSlice, x_hat: &ImageSlice) -> Result<ResidualMap> {
    if x.size() != x_hat.size() {
        return Err(Error::Shape(format!("residual of {} vs {} slices", x.size(), x_hat.size())));
    }
    let scores = x.pixels().iter().zip(x_hat.pixels()).map(|(a, b)| (a - b).abs()).collect();
    Ok(ResidualMap { size: x.size(), scores })
}

fn check_pair(s: &SegmentationModel, g: &GeneratorModel) -> Result<()> {
    if s.arch().num_classes != g.arch().num_classes {
        return Err(Error::ModelMismatch(format!(
            "segmentor emits {} classes, generator expects {}",
            s.arch().num_classes,
            g.arch().num_classes
        )));
    }
    if s.resolution() != g.resolution() {
        return Err(Error::ModelMismatch(format!(
            "segmentor resolution {}, generator resolution {}",
            s.resolution(),
            g.resolution()
        )));
    }
    Ok(())
}

/// `G(S(x))` (continuous) or `G(discretize(S(x)))` (discrete) for many slices.
pub fn reconstruct_many(
    s: &SegmentationModel,
    g: &GeneratorModel,
    images: &[&ImageSlice],
    mode: SemanticMode,
) -> Result<Vec<ImageSlice>> {
    check_pair(s, g)?;
    let mut semantic = segment_many(s, images)?;
    if mode == SemanticMode::Discrete {
        semantic = semantic.iter().map(discretize).collect();
    }
    synthesize_many(g, &semantic)
}

pub fn reconstruct(
    s: &SegmentationModel,
    g: &GeneratorModel,
    x: &ImageSlice,
    mode: SemanticMode,
) -> Result<ImageSlice> {
    Ok(reconstruct_many(s, g, &[x], mode)?.remove(0))
}

/// Mean posterior vector of one ground-truth class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub class: String,
    pub pixels: usize,
    pub mean_posterior: Vec<f64>,
}

/// Mean S posteriors per tissue class plus a lesion row; classes without
/// pixels are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStats {
    pub class_names: Vec<String>,
    pub rows: Vec<PosteriorRow>,
}

pub const LESION_ROW: &str = "LES";

impl PosteriorStats {
    pub fn row(&self, class: &str) -> Option<&PosteriorRow> {
        self.rows.iter().find(|r| r.class == class)
    }

    /// L1 distance between the lesion row and each tissue row.
    pub fn lesion_distances(&self) -> Vec<(String, f64)> {
        let Some(les) = self.row(LESION_ROW) else { return Vec::new() };
        self.rows
            .iter()
            .filter(|r| r.class != LESION_ROW)
            .map(|r| {
                let d = r.mean_posterior.iter().zip(&les.mean_posterior).map(|(a, b)| (a - b).abs()).sum();
                (r.class.clone(), d)
            })
            .collect()
    }
}

/// Averages S's posterior vectors over the pixels of each ground-truth class.
/// Lesion pixels (from masks) form their own row and are excluded from the
/// tissue rows.
pub fn class_posterior_stats(s: &SegmentationModel, records: &[Record]) -> Result<PosteriorStats> {
    let c = s.arch().num_classes;
    let rows_n = c + 1;
    let mut sums = vec![vec![0.0f64; c]; rows_n];
    let mut counts = vec![0usize; rows_n];
    let images: Vec<&ImageSlice> = records.iter().map(|r| &r.image).collect();
    let maps = segment_many(s, &images)?;
    for (rec, map) in records.iter().zip(&maps) {
        let mask = rec.mask.as_ref().ok_or_else(|| Error::MissingMask(rec.id.clone()))?;
        let labels = rec.labels.labels();
        let hw = map.size() * map.size();
        for p in 0..hw {
            let row = if mask.as_slice()[p] { c } else { labels[p] as usize };
            counts[row] += 1;
            for k in 0..c {
                sums[row][k] += map.values()[k * hw + p] as f64;
            }
        }
    }
    let name = |i: usize| -> String {
        if i == c {
            LESION_ROW.to_owned()
        } else {
            CLASS_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("class{i}"))
        }
    };
    let rows = (0..rows_n)
        .filter(|&i| counts[i] > 0)
        .map(|i| PosteriorRow {
            class: name(i),
            pixels: counts[i],
            mean_posterior: sums[i].iter().map(|v| v / counts[i] as f64).collect(),
        })
        .collect();
    Ok(PosteriorStats { class_names: (0..c).map(name).collect(), rows })
}
