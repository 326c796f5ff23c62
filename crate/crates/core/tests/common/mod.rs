//! Independent oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

pub mod gradcases;

use cyclesem_core::dataio::{Record, PROB_SUM_TOL};
use cyclesem_core::nn::{Graph, ParamId, ParamSet, Tensor};
use cyclesem_core::phantom::BACKGROUND;
use cyclesem_core::rng::CounterRng;

/// Average precision by exhaustive enumeration: one precision/recall point
/// per distinct score, each computed with a full scan.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

pub fn brute_dice_at(scores: &[f64], labels: &[bool], t: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= t, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Best DICE over every distinct score, lowest threshold on ties.
pub fn brute_best_dice(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best = (-1.0, f64::NAN);
    for t in thresholds {
        let d = brute_dice_at(scores, labels, t);
        if d > best.0 {
            best = (d, t);
        }
    }
    best
}

/// Random scored pixels with a mix of tie patterns: continuous scores,
/// scores quantized to a few levels, and a single constant level.
pub fn random_instance(rng: &mut CounterRng, max_len: usize) -> (Vec<f64>, Vec<bool>) {
    let n = 2 + rng.below(max_len as u64 - 1) as usize;
    let prevalence = 0.02 + 0.5 * rng.uniform();
    let levels = match rng.below(4) {
        0 => 0,
        1 => 1 + rng.below(4) as usize,
        2 => 5 + rng.below(40) as usize,
        _ => 1,
    };
    let separation = rng.uniform();
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let l = rng.uniform() < prevalence;
        let mut s = rng.uniform() + if l { separation } else { 0.0 };
        if levels > 0 {
            s = (s * levels as f64).floor() / levels as f64;
        }
        scores.push(s);
        labels.push(l);
    }
    // Both classes must be present.
    labels[0] = true;
    labels[n - 1] = false;
    (scores, labels)
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU or max-pool kink.
    pub excluded: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            checked: self.checked + o.checked,
            excluded: self.excluded + o.excluded,
            max_rel_err: self.max_rel_err.max(o.max_rel_err),
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < FD_TOLERANCE && self.excluded * 5 <= self.checked + self.excluded
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference check of `analytic` against `loss`, a function of the
/// parameters returning the loss and the graph's piece signature.
/// Coordinates whose `±h` evaluations land on different linear pieces than
/// the base point are excluded.
pub fn check_params<F>(params: &mut ParamSet<f64>, analytic: &[(ParamId, Tensor<f64>)], per_tensor: usize, loss: F) -> GradCheck
where
    F: Fn(&ParamSet<f64>) -> (f64, Vec<u32>),
{
    let (_, base_sig) = loss(params);
    let mut out = GradCheck::default();
    for (id, grad) in analytic {
        let len = params.get(*id).len();
        let step = (len / per_tensor.max(1)).max(1);
        for i in (0..len).step_by(step).take(per_tensor) {
            let x0 = params.get(*id).data()[i];
            params.get_mut(*id).data_mut()[i] = x0 + FD_STEP;
            let (fp, sp) = loss(params);
            params.get_mut(*id).data_mut()[i] = x0 - FD_STEP;
            let (fm, sm) = loss(params);
            params.get_mut(*id).data_mut()[i] = x0;
            if sp != base_sig || sm != base_sig {
                out.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            out.checked += 1;
            out.max_rel_err = out.max_rel_err.max(rel_err(grad.data()[i], numeric));
        }
    }
    out
}

/// Central-difference check of a loss gradient with respect to its input
/// tensor. `skip` marks coordinates to leave out (kinks of `|.|`).
pub fn check_input<F>(x: &Tensor<f64>, analytic: &Tensor<f64>, skip: impl Fn(usize) -> bool, loss: F) -> GradCheck
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let mut out = GradCheck::default();
    let mut probe = x.clone();
    for i in 0..x.len() {
        if skip(i) {
            out.excluded += 1;
            continue;
        }
        let x0 = x.data()[i];
        probe.data_mut()[i] = x0 + FD_STEP;
        let fp = loss(&probe);
        probe.data_mut()[i] = x0 - FD_STEP;
        let fm = loss(&probe);
        probe.data_mut()[i] = x0;
        out.checked += 1;
        out.max_rel_err = out.max_rel_err.max(rel_err(analytic.data()[i], (fp - fm) / (2.0 * FD_STEP)));
    }
    out
}

/// Moves every parameter by a small random amount so that no activation
/// sits exactly on a kink (zero-initialized biases put dead units there).
pub fn jitter(params: &mut ParamSet<f64>, seed: u64) {
    let mut rng = CounterRng::new(seed, 99);
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += 0.1 * (rng.uniform() - 0.5);
        }
    }
}

pub fn random_tensor(rng: &mut CounterRng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| lo + (hi - lo) * rng.uniform()).collect())
}

/// Random per-pixel probability vectors, `(n, c, h, w)`, bounded away from
/// zero so the finite-difference truncation error of `ln` stays small.
pub fn random_probs(rng: &mut CounterRng, n: usize, c: usize, size: usize) -> Tensor<f64> {
    let hw = size * size;
    let mut t = Tensor::zeros([n, c, size, size]);
    for i in 0..n {
        let item = t.item_mut(i);
        for p in 0..hw {
            let raw: Vec<f64> = (0..c).map(|_| 0.5 + rng.uniform()).collect();
            let sum: f64 = raw.iter().sum();
            for (k, v) in raw.into_iter().enumerate() {
                item[k * hw + p] = v / sum;
            }
        }
    }
    t
}

pub fn random_onehot(rng: &mut CounterRng, n: usize, c: usize, size: usize) -> Tensor<f64> {
    let hw = size * size;
    let mut t = Tensor::zeros([n, c, size, size]);
    for i in 0..n {
        let item = t.item_mut(i);
        for p in 0..hw {
            item[rng.below(c as u64) as usize * hw + p] = 1.0;
        }
    }
    t
}

/// Signature-aware helper for graphs: returns `(value, signature)`.
pub fn with_signature(g: &Graph<f64>, value: f64) -> (f64, Vec<u32>) {
    (value, g.piece_signature())
}

/// Every file under `root`, keyed by relative path.
pub fn dir_bytes(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().display().to_string();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Label-map, range and lesion invariants of generated records; returns a
/// description of the first violation.
pub fn phantom_violation(train: &[Record], test: &[Record]) -> Option<String> {
    for r in train.iter().chain(test) {
        let (n, c) = (r.labels.size(), r.labels.num_classes());
        let hw = n * n;
        if !r.image.pixels().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Some(format!("{}: pixel outside [0, 1]", r.id));
        }
        for p in 0..hw {
            let probs: Vec<f32> = (0..c).map(|k| r.labels.prob(k, p)).collect();
            let sum: f64 = probs.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL || probs.iter().any(|&v| v < 0.0) {
                return Some(format!("{} pixel {p}: probabilities sum to {sum}", r.id));
            }
            let best = (0..c).fold(0, |b, k| if probs[k] > probs[b] { k } else { b });
            for k in 0..c {
                if r.labels.onehot()[k * hw + p] != if k == best { 1.0 } else { 0.0 } {
                    return Some(format!("{} pixel {p}: one-hot disagrees with argmax", r.id));
                }
            }
        }
    }
    if let Some(r) = train.iter().find(|r| r.mask.as_ref().is_some_and(|m| m.any())) {
        return Some(format!("{}: lesion in training split", r.id));
    }
    for r in test {
        let Some(mask) = &r.mask else { return Some(format!("{}: test record without mask", r.id)) };
        let hard = r.labels.labels();
        if let Some(p) = mask.as_slice().iter().enumerate().position(|(p, &m)| m && hard[p] as usize == BACKGROUND) {
            return Some(format!("{}: lesion pixel {p} outside the brain", r.id));
        }
    }
    None
}
