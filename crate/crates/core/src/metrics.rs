//! Pixel-pooled anomaly segmentation metrics: average precision (area under
//! the precision-recall curve) and the best achievable DICE over thresholds.

use serde::{Deserialize, Serialize};

use crate::dataio::LesionMask;
use crate::error::{Error, Result};

/// Above this many unique scores the DICE search switches to quantiles.
pub const MAX_EXACT_THRESHOLDS: usize = 10_000;
pub const QUANTILE_THRESHOLDS: usize = 1_001;

/// Flat pixel scores with lesion labels, pooled over a split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredPixels {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub split: String,
    pub slice_ids: Vec<String>,
}

impl ScoredPixels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite score {s}")));
        }
        Ok(Self { scores, labels, split: String::new(), slice_ids: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Concatenates per-slice residual scores and masks in the given order.
/// Slices without lesions still contribute their pixels as negatives.
pub fn pool_scores<'a, I>(split: &str, slices: I) -> Result<ScoredPixels>
where
    I: IntoIterator<Item = (&'a str, &'a [f32], Option<&'a LesionMask>)>,
{
    let mut pooled = ScoredPixels { split: split.to_owned(), ..ScoredPixels::default() };
    for (id, scores, mask) in slices {
        let mask = mask.ok_or_else(|| Error::MissingMask(id.to_owned()))?;
        if mask.as_slice().len() != scores.len() {
            return Err(Error::Shape(format!(
                "slice `{id}`: {} scores, mask has {} pixels",
                scores.len(),
                mask.as_slice().len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidValue(format!("slice `{id}`: non-finite score {s}")));
        }
        pooled.scores.extend(scores.iter().map(|&s| s as f64));
        pooled.labels.extend_from_slice(mask.as_slice());
        pooled.slice_ids.push(id.to_owned());
    }
    Ok(pooled)
}

/// Score groups in descending order: `(score, positives, negatives)`.
fn descending_groups(sp: &ScoredPixels) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..sp.len()).collect();
    order.sort_unstable_by(|&a, &b| sp.scores[b].total_cmp(&sp.scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let s = sp.scores[i];
        let pos = sp.labels[i] as usize;
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += pos;
                g.2 += 1 - pos;
            }
            _ => groups.push((s, pos, 1 - pos)),
        }
    }
    groups
}

/// Average precision: `sum_k (R_k - R_{k-1}) * P_k` over descending unique
/// score thresholds, equal scores forming a single step.
pub fn auprc(sp: &ScoredPixels) -> Result<f64> {
    let total_pos = sp.positives();
    if total_pos == 0 || total_pos == sp.len() {
        return Err(Error::UndefinedMetric(format!(
            "AUPRC needs both classes ({total_pos} positives of {} pixels)",
            sp.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    for (_, pos, neg) in descending_groups(sp) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let recall_step = pos as f64 / total_pos as f64;
            ap += recall_step * tp as f64 / (tp + fp) as f64;
        }
    }
    Ok(ap)
}

/// DICE of the segmentation `score >= threshold`.
pub fn dice_at(sp: &ScoredPixels, threshold: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&s, &l) in sp.scores.iter().zip(&sp.labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Best achievable DICE over candidate thresholds, with the lowest
/// threshold achieving it.
///
/// Candidates are every unique score when there are at most
/// [`MAX_EXACT_THRESHOLDS`] of them, otherwise [`QUANTILE_THRESHOLDS`]
/// evenly spaced quantiles of the pooled scores.
pub fn best_dice(sp: &ScoredPixels) -> Result<(f64, f64)> {
    let total_pos = sp.positives();
    if total_pos == 0 {
        return Err(Error::UndefinedMetric("DICE needs at least one lesion pixel".into()));
    }
    let groups = descending_groups(sp);
    // Cumulative counts at each unique threshold (predicting score >= t).
    let mut cum = Vec::with_capacity(groups.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(s, pos, neg) in &groups {
        tp += pos;
        fp += neg;
        cum.push((s, tp, fp));
    }
    let dice = |tp: usize, fp: usize| 2.0 * tp as f64 / (tp + fp + total_pos) as f64;

    let candidates: Vec<(f64, usize, usize)> = if cum.len() <= MAX_EXACT_THRESHOLDS {
        cum
    } else {
        let mut sorted = sp.scores.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let last = sorted.len() - 1;
        let mut out: Vec<(f64, usize, usize)> = (0..QUANTILE_THRESHOLDS)
            .map(|i| {
                let t = sorted[(i * last) / (QUANTILE_THRESHOLDS - 1)];
                // cum is ordered by descending score: the first group with
                // score < t ends the prediction set.
                let k = cum.partition_point(|&(s, _, _)| s >= t);
                let (_, tp, fp) = cum[k - 1];
                (t, tp, fp)
            })
            .collect();
        out.dedup_by(|a, b| a.0 == b.0);
        out
    };

    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for (t, tp, fp) in candidates {
        let d = dice(tp, fp);
        if d > best.0 || (d == best.0 && t < best.1) {
            best = (d, t);
        }
    }
    Ok(best)
}

/// Dataset-level evaluation of one method on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub split: String,
    pub auprc: f64,
    pub best_dice: f64,
    pub best_threshold: f64,
    pub num_pixels: usize,
    pub num_lesion_pixels: usize,
    pub num_slices: usize,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn evaluate(method: &str, sp: &ScoredPixels, config_fingerprint: &str) -> Result<Self> {
        let auprc = auprc(sp)?;
        let (best_dice, best_threshold) = best_dice(sp)?;
        Ok(Self {
            method: method.to_owned(),
            split: sp.split.clone(),
            auprc,
            best_dice,
            best_threshold,
            num_pixels: sp.len(),
            num_lesion_pixels: sp.positives(),
            num_slices: sp.slice_ids.len(),
            config_fingerprint: config_fingerprint.to_owned(),
        })
    }

    /// Column order of [`EvalReport::csv_row`].
    pub const CSV_HEADER: &'static str =
        "method,split,auprc,best_dice,best_threshold,num_pixels,num_lesion_pixels,num_slices,config_fingerprint";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{},{},{},{}",
            self.method,
            self.split,
            self.auprc,
            self.best_dice,
            self.best_threshold,
            self.num_pixels,
            self.num_lesion_pixels,
            self.num_slices,
            self.config_fingerprint
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(scores: &[f64], labels: &[bool]) -> ScoredPixels {
        ScoredPixels::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_ranking_gives_unit_metrics() {
        let s = sp(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]);
        assert_eq!(auprc(&s).unwrap(), 1.0);
        let (d, t) = best_dice(&s).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(t, 0.8);
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let s = sp(&[0.5; 10], &[true, false, false, true, false, false, false, false, false, true]);
        assert_abs_diff_eq!(auprc(&s).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn interleaved_example() {
        let s = sp(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        assert_abs_diff_eq!(auprc(&s).unwrap(), 0.5 * (1.0 + 2.0 / 3.0), epsilon = 1e-12);
        let (d, t) = best_dice(&s).unwrap();
        assert_abs_diff_eq!(d, 0.8, epsilon = 1e-12);
        assert_eq!(t, 0.7);
        assert_abs_diff_eq!(dice_at(&s, 0.9), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dice_at(&s, 0.8), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(dice_at(&s, 0.6), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn best_dice_bounds_predict_everything() {
        let s = sp(&[0.1, 0.4, 0.35, 0.8, 0.2], &[false, true, false, true, false]);
        let all = 2.0 * 2.0 / (2.0 + 5.0);
        assert_abs_diff_eq!(dice_at(&s, f64::NEG_INFINITY), all, epsilon = 1e-12);
        assert!(best_dice(&s).unwrap().0 >= all);
    }

    #[test]
    fn single_class_is_undefined() {
        let s = sp(&[0.1, 0.2], &[false, false]);
        assert!(matches!(auprc(&s), Err(Error::UndefinedMetric(_))));
        assert!(matches!(best_dice(&s), Err(Error::UndefinedMetric(_))));
        let s = sp(&[0.1, 0.2], &[true, true]);
        assert!(matches!(auprc(&s), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn pooling_keeps_order_and_requires_masks() {
        let m1 = LesionMask::new(2, vec![false, true, false, false]).unwrap();
        let m2 = LesionMask::empty(2);
        let a = [0.1f32, 0.9, 0.2, 0.3];
        let b = [0.4f32, 0.5, 0.6, 0.7];
        let pooled = pool_scores("test", [("a", &a[..], Some(&m1)), ("b", &b[..], Some(&m2))]).unwrap();
        assert_eq!(pooled.len(), 8);
        assert_eq!(pooled.slice_ids, ["a", "b"]);
        assert_abs_diff_eq!(pooled.scores[4], 0.4, epsilon = 1e-7);
        assert_eq!(pooled.positives(), 1);

        let healthy = pool_scores("test", [("b", &b[..], Some(&m2))]).unwrap();
        assert!(matches!(auprc(&healthy), Err(Error::UndefinedMetric(_))));
        assert!(matches!(
            pool_scores("test", [("b", &b[..], None)]),
            Err(Error::MissingMask(_))
        ));
    }

    #[test]
    fn quantile_fallback_is_used_for_many_unique_scores() {
        let n = 30_000;
        let scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let labels: Vec<bool> = (0..n).map(|i| i >= n - 3_000).collect();
        let (d, t) = best_dice(&sp(&scores, &labels)).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-3);
        assert!(t >= 0.89 && t <= 0.91, "{t}");
    }

    #[test]
    fn csv_row_matches_header_width() {
        let s = sp(&[0.9, 0.1], &[true, false]);
        let r = EvalReport::evaluate("m", &s, "abc").unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            EvalReport::CSV_HEADER.split(',').count()
        );
    }
}
