//! Slice, label-map and mask types, and their on-disk dataset layout.
//!
//! A split lives in `<root>/<split>/` and holds `manifest.json` plus, per
//! record id, `<id>.img` (one `f32` plane), `<id>.lbl` (C probability
//! planes), `<id>.onehot` (C one-hot planes) and, for test splits, `<id>.msk`
//! (one byte per pixel, 0 or 1). Arrays are row-major little-endian.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on per-pixel probability sums.
pub const PROB_SUM_TOL: f64 = 1e-6;

/// One square grayscale slice with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSlice {
    size: usize,
    pixels: Vec<f32>,
}

impl ImageSlice {
    pub fn new(size: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::Shape(format!(
                "image of side {size} needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { size, pixels })
    }

    /// Clamps into `[0, 1]` (NaN maps to 0) instead of rejecting.
    pub fn from_clamped(size: usize, pixels: Vec<f32>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(size, pixels)
    }

    pub fn zeros(size: usize) -> Self {
        Self { size, pixels: vec![0.0; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.size + x]
    }
}

/// Per-pixel tissue annotation in probabilistic and one-hot form.
///
/// Both arrays are planar: `C` planes of `size * size` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueLabelMap {
    size: usize,
    num_classes: usize,
    probs: Vec<f32>,
    onehot: Vec<f32>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f32>) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

impl TissueLabelMap {
    /// Builds the map from probabilities; the one-hot form is their argmax.
    pub fn from_probs(size: usize, num_classes: usize, probs: Vec<f32>) -> Result<Self> {
        let hw = size * size;
        if probs.len() != num_classes * hw {
            return Err(Error::Shape(format!(
                "label map needs {num_classes}x{size}x{size} values, got {}",
                probs.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidValue("label map needs at least one class".into()));
        }
        for p in 0..hw {
            let mut sum = 0.0f64;
            for c in 0..num_classes {
                let v = probs[c * hw + p];
                if !(v >= 0.0) {
                    return Err(Error::InvalidValue(format!(
                        "negative or NaN probability {v} at pixel {p}"
                    )));
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidValue(format!(
                    "probabilities at pixel {p} sum to {sum}"
                )));
            }
        }
        let mut onehot = vec![0.0; probs.len()];
        for p in 0..hw {
            let c = argmax((0..num_classes).map(|c| probs[c * hw + p]));
            onehot[c * hw + p] = 1.0;
        }
        Ok(Self { size, num_classes, probs, onehot })
    }

    /// A hard labelling: probabilities equal the one-hot map.
    pub fn from_labels(size: usize, num_classes: usize, labels: &[u8]) -> Result<Self> {
        let hw = size * size;
        if labels.len() != hw {
            return Err(Error::Shape(format!("expected {hw} labels, got {}", labels.len())));
        }
        let mut probs = vec![0.0; num_classes * hw];
        for (p, &l) in labels.iter().enumerate() {
            let l = l as usize;
            if l >= num_classes {
                return Err(Error::InvalidValue(format!("label {l} at pixel {p}")));
            }
            probs[l * hw + p] = 1.0;
        }
        Self::from_probs(size, num_classes, probs)
    }

    /// Rebuilds from stored arrays, checking the one-hot plane agrees.
    fn from_parts(size: usize, num_classes: usize, probs: Vec<f32>, onehot: Vec<f32>) -> Result<Self> {
        let map = Self::from_probs(size, num_classes, probs)?;
        if map.onehot != onehot {
            return Err(Error::InvalidValue("one-hot planes disagree with argmax of probabilities".into()));
        }
        Ok(map)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn onehot(&self) -> &[f32] {
        &self.onehot
    }

    pub fn prob(&self, class: usize, pixel: usize) -> f32 {
        self.probs[class * self.size * self.size + pixel]
    }

    /// Hard class index of every pixel.
    pub fn labels(&self) -> Vec<u8> {
        let hw = self.size * self.size;
        (0..hw)
            .map(|p| (0..self.num_classes).find(|&c| self.onehot[c * hw + p] == 1.0).unwrap_or(0) as u8)
            .collect()
    }
}

/// Per-pixel lesion ground truth (`true` = anomalous).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LesionMask {
    size: usize,
    mask: Vec<bool>,
}

impl LesionMask {
    pub fn new(size: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != size * size {
            return Err(Error::Shape(format!("mask of side {size} got {} pixels", mask.len())));
        }
        Ok(Self { size, mask })
    }

    pub fn empty(size: usize) -> Self {
        Self { size, mask: vec![false; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn any(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Healthy-only training data; masks are optional and must be empty.
    Train,
    /// Evaluation data; every record carries a mask.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: String,
    pub image: String,
    pub labels: String,
    pub onehot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// `[classes, height, width]`.
    pub shape: [usize; 3],
    /// SHA-256 over the record's files, concatenated in the order above.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub split: String,
    pub kind: SplitKind,
    pub resolution: usize,
    pub num_classes: usize,
    pub generator_seed: u64,
    pub lesion_style: String,
    /// Full generator configuration, recorded for provenance.
    #[serde(default)]
    pub generator: serde_json::Value,
    pub records: Vec<RecordEntry>,
}

/// Split-level metadata supplied when creating a writer.
#[derive(Debug, Clone)]
pub struct SplitMeta {
    pub split: String,
    pub kind: SplitKind,
    pub resolution: usize,
    pub num_classes: usize,
    pub generator_seed: u64,
    pub lesion_style: String,
    pub generator: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub image: ImageSlice,
    pub labels: TissueLabelMap,
    pub mask: Option<LesionMask>,
}

pub fn f32_to_le_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn f32_from_le_bytes(bytes: &[u8]) -> Option<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Writes a raw little-endian `f32` array.
pub fn write_f32_plane(path: &Path, values: &[f32]) -> Result<()> {
    fs::write(path, f32_to_le_bytes(values)).map_err(Error::io(path))
}

/// Reads a raw little-endian `f32` array of the expected length.
pub fn read_f32_plane(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let values = f32_from_le_bytes(&bytes).ok_or_else(|| Error::Corrupt {
        path: path.to_owned(),
        reason: "length is not a multiple of 4".into(),
    })?;
    if values.len() != expected_len {
        return Err(Error::Corrupt {
            path: path.to_owned(),
            reason: format!("expected {expected_len} values, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn record_checksum(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Streams records of one split into a staging directory; [`SplitWriter::finish`]
/// writes the manifest and swaps the staging directory into place.
#[derive(Debug)]
pub struct SplitWriter {
    final_dir: PathBuf,
    staging: PathBuf,
    manifest: DatasetManifest,
    ids: HashSet<String>,
}

impl SplitWriter {
    pub fn create(root: &Path, meta: SplitMeta) -> Result<Self> {
        if !valid_id(&meta.split) {
            return Err(Error::InvalidId(meta.split));
        }
        let final_dir = root.join(&meta.split);
        let staging = root.join(format!(".{}.staging", meta.split));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(Error::io(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(Error::io(&staging))?;
        Ok(Self {
            final_dir,
            staging,
            manifest: DatasetManifest {
                format_version: FORMAT_VERSION,
                split: meta.split,
                kind: meta.kind,
                resolution: meta.resolution,
                num_classes: meta.num_classes,
                generator_seed: meta.generator_seed,
                lesion_style: meta.lesion_style,
                generator: meta.generator,
                records: Vec::new(),
            },
            ids: HashSet::new(),
        })
    }

    pub fn write_record(
        &mut self,
        id: &str,
        image: &ImageSlice,
        labels: &TissueLabelMap,
        mask: Option<&LesionMask>,
    ) -> Result<()> {
        let res = self.manifest.resolution;
        if !valid_id(id) {
            return Err(Error::InvalidId(id.to_owned()));
        }
        if self.ids.contains(id) {
            return Err(Error::DuplicateId(id.to_owned()));
        }
        if image.size() != res || labels.size() != res || mask.is_some_and(|m| m.size() != res) {
            return Err(Error::Shape(format!(
                "record `{id}`: image {}, labels {}, mask {:?} for split resolution {res}",
                image.size(),
                labels.size(),
                mask.map(|m| m.size())
            )));
        }
        if labels.num_classes() != self.manifest.num_classes {
            return Err(Error::Shape(format!(
                "record `{id}` has {} classes, split expects {}",
                labels.num_classes(),
                self.manifest.num_classes
            )));
        }
        match self.manifest.kind {
            SplitKind::Train if mask.is_some_and(LesionMask::any) => {
                return Err(Error::LesionInTraining(id.to_owned()));
            }
            SplitKind::Test if mask.is_none() => return Err(Error::MissingMask(id.to_owned())),
            _ => {}
        }

        let img = f32_to_le_bytes(image.pixels());
        let lbl = f32_to_le_bytes(labels.probs());
        let oh = f32_to_le_bytes(labels.onehot());
        let msk: Option<Vec<u8>> = match self.manifest.kind {
            SplitKind::Test => mask.map(|m| m.as_slice().iter().map(|&b| b as u8).collect()),
            SplitKind::Train => None,
        };
        let mut parts: Vec<&[u8]> = vec![&img, &lbl, &oh];
        if let Some(m) = &msk {
            parts.push(m);
        }
        let checksum = record_checksum(&parts);

        let entry = RecordEntry {
            id: id.to_owned(),
            image: format!("{id}.img"),
            labels: format!("{id}.lbl"),
            onehot: format!("{id}.onehot"),
            mask: msk.as_ref().map(|_| format!("{id}.msk")),
            shape: [labels.num_classes(), res, res],
            checksum,
        };
        let put = |name: &str, bytes: &[u8]| {
            let p = self.staging.join(name);
            fs::write(&p, bytes).map_err(Error::io(p))
        };
        put(&entry.image, &img)?;
        put(&entry.labels, &lbl)?;
        put(&entry.onehot, &oh)?;
        if let (Some(name), Some(m)) = (&entry.mask, &msk) {
            put(name, m)?;
        }
        self.ids.insert(entry.id.clone());
        self.manifest.records.push(entry);
        Ok(())
    }

    pub fn finish(self) -> Result<DatasetManifest> {
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.staging.join(MANIFEST_FILE), &json)?;
        if self.final_dir.exists() {
            fs::remove_dir_all(&self.final_dir).map_err(Error::io(&self.final_dir))?;
        }
        fs::rename(&self.staging, &self.final_dir).map_err(Error::io(&self.final_dir))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(root: &Path, split: &str) -> Result<DatasetManifest> {
    let path = root.join(split).join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::UnknownSplit { split: split.to_owned(), root: root.to_owned() });
    }
    let text = fs::read(&path).map_err(Error::io(&path))?;
    let manifest: DatasetManifest = serde_json::from_slice(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Corrupt {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    let mut seen = HashSet::new();
    for r in &manifest.records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    Ok(manifest)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io(path))
}

/// Loads every record of a split in manifest order, verifying shapes and
/// checksums.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<Record>> {
    let manifest = read_manifest(root, split)?;
    let dir = root.join(split);
    manifest.records.iter().map(|e| load_entry(&dir, &manifest, e)).collect()
}

fn load_entry(dir: &Path, manifest: &DatasetManifest, e: &RecordEntry) -> Result<Record> {
    let [c, h, w] = e.shape;
    if h != w || h != manifest.resolution || c != manifest.num_classes {
        return Err(Error::Shape(format!(
            "record `{}` has shape {:?}, manifest declares {} classes at {}",
            e.id, e.shape, manifest.num_classes, manifest.resolution
        )));
    }
    let img = read_bytes(&dir.join(&e.image))?;
    let lbl = read_bytes(&dir.join(&e.labels))?;
    let oh = read_bytes(&dir.join(&e.onehot))?;
    let msk = match (&e.mask, manifest.kind) {
        (Some(name), _) => Some(read_bytes(&dir.join(name))?),
        (None, SplitKind::Test) => return Err(Error::MissingMask(e.id.clone())),
        (None, SplitKind::Train) => None,
    };
    let mut parts: Vec<&[u8]> = vec![&img, &lbl, &oh];
    if let Some(m) = &msk {
        parts.push(m);
    }
    if record_checksum(&parts) != e.checksum {
        return Err(Error::Checksum { id: e.id.clone(), dir: dir.to_owned() });
    }
    let hw = h * w;
    let corrupt = |name: &str, reason: &str| Error::Corrupt { path: dir.join(name), reason: reason.into() };
    let pixels = f32_from_le_bytes(&img)
        .filter(|v| v.len() == hw)
        .ok_or_else(|| corrupt(&e.image, "wrong size"))?;
    let probs = f32_from_le_bytes(&lbl)
        .filter(|v| v.len() == c * hw)
        .ok_or_else(|| corrupt(&e.labels, "wrong size"))?;
    let onehot = f32_from_le_bytes(&oh)
        .filter(|v| v.len() == c * hw)
        .ok_or_else(|| corrupt(&e.onehot, "wrong size"))?;
    let mask = match msk {
        Some(m) => {
            if m.len() != hw || m.iter().any(|&b| b > 1) {
                return Err(corrupt(e.mask.as_deref().unwrap_or_default(), "mask bytes must be 0/1"));
            }
            Some(LesionMask::new(h, m.into_iter().map(|b| b == 1).collect())?)
        }
        None => None,
    };
    if manifest.kind == SplitKind::Train && mask.as_ref().is_some_and(LesionMask::any) {
        return Err(Error::LesionInTraining(e.id.clone()));
    }
    Ok(Record {
        id: e.id.clone(),
        image: ImageSlice::new(h, pixels)?,
        labels: TissueLabelMap::from_parts(h, c, probs, onehot)?,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(kind: SplitKind, res: usize) -> SplitMeta {
        SplitMeta {
            split: match kind {
                SplitKind::Train => "train".into(),
                SplitKind::Test => "test".into(),
            },
            kind,
            resolution: res,
            num_classes: 4,
            generator_seed: 1,
            lesion_style: "tumor_like".into(),
            generator: serde_json::Value::Null,
        }
    }

    fn sample(res: usize, salt: f32) -> (ImageSlice, TissueLabelMap) {
        let hw = res * res;
        let img = ImageSlice::new(res, (0..hw).map(|i| (i as f32 * 0.37 + salt) % 1.0).collect()).unwrap();
        let labels: Vec<u8> = (0..hw).map(|i| (i % 4) as u8).collect();
        (img, TissueLabelMap::from_labels(res, 4, &labels).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(64, 0.1);
        let mut mask = vec![false; 64 * 64];
        mask[100] = true;
        let mask = LesionMask::new(64, mask).unwrap();
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Test, 64)).unwrap();
        w.write_record("a", &img, &lbl, Some(&mask)).unwrap();
        w.finish().unwrap();
        let recs = load_split(dir.path(), "test").unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!(r.image.pixels().iter().zip(img.pixels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(r.labels, lbl);
        assert_eq!(r.mask.as_ref(), Some(&mask));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = sample(64, 0.0);
        let (_, small) = sample(32, 0.0);
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 64)).unwrap();
        assert!(matches!(w.write_record("a", &img, &small, None), Err(Error::Shape(_))));
    }

    #[test]
    fn lesion_in_training_split_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(8, 0.0);
        let mut m = vec![false; 64];
        m[3] = true;
        let mask = LesionMask::new(8, m).unwrap();
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 8)).unwrap();
        assert!(matches!(
            w.write_record("a", &img, &lbl, Some(&mask)),
            Err(Error::LesionInTraining(_))
        ));
        w.write_record("b", &img, &lbl, Some(&LesionMask::empty(8))).unwrap();
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(8, 0.0);
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 8)).unwrap();
        w.write_record("a", &img, &lbl, None).unwrap();
        assert!(matches!(w.write_record("a", &img, &lbl, None), Err(Error::DuplicateId(_))));
        assert!(matches!(w.write_record("../x", &img, &lbl, None), Err(Error::InvalidId(_))));
    }

    #[test]
    fn test_split_requires_masks() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(8, 0.0);
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Test, 8)).unwrap();
        assert!(matches!(w.write_record("a", &img, &lbl, None), Err(Error::MissingMask(_))));
    }

    #[test]
    fn records_load_in_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 8)).unwrap();
        for (i, id) in ["c", "a", "b"].iter().enumerate() {
            let (img, lbl) = sample(8, i as f32 * 0.1);
            w.write_record(id, &img, &lbl, None).unwrap();
        }
        w.finish().unwrap();
        let ids: Vec<String> = load_split(dir.path(), "train").unwrap().into_iter().map(|r| r.id).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn empty_split_loads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        SplitWriter::create(dir.path(), meta(SplitKind::Test, 8)).unwrap().finish().unwrap();
        assert!(load_split(dir.path(), "test").unwrap().is_empty());
    }

    #[test]
    fn missing_files_and_splits_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(8, 0.0);
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 8)).unwrap();
        w.write_record("a", &img, &lbl, None).unwrap();
        w.finish().unwrap();
        fs::remove_file(dir.path().join("train/a.lbl")).unwrap();
        assert!(matches!(load_split(dir.path(), "train"), Err(Error::MissingFile(_))));
        assert!(matches!(load_split(dir.path(), "nope"), Err(Error::UnknownSplit { .. })));
    }

    #[test]
    fn tampered_record_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = sample(8, 0.0);
        let mut w = SplitWriter::create(dir.path(), meta(SplitKind::Train, 8)).unwrap();
        w.write_record("a", &img, &lbl, None).unwrap();
        w.finish().unwrap();
        let p = dir.path().join("train/a.img");
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_split(dir.path(), "train"), Err(Error::Checksum { .. })));
    }

    #[test]
    fn onehot_is_argmax_with_low_index_ties() {
        let m = TissueLabelMap::from_probs(1, 4, vec![0.1, 0.6, 0.2, 0.1]).unwrap();
        assert_eq!(m.labels(), vec![1]);
        let tie = TissueLabelMap::from_probs(1, 4, vec![0.25; 4]).unwrap();
        assert_eq!(tie.labels(), vec![0]);
        assert!(TissueLabelMap::from_probs(1, 4, vec![0.5, 0.5, 0.5, 0.0]).is_err());
    }
}
