//! Experiment configuration, on-disk layout and one function per pipeline
//! stage. The command-line tool is a thin shell over this module.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! data/<split>/                       phantom dataset (train, test, test_<style>)
//! models/segmentor/segmentor.*        final segmentor (+ epoch_XXX.*)
//! models/synthesizer/generator.*      final generator and discriminator
//! models/autoencoder/autoencoder.*    baseline
//! residuals/<method>/<split>/         <id>.res residuals, <id>.rec reconstructions
//! eval/<method>/<split>.json          EvalReport
//! eval/report.csv                     every EvalReport as one CSV row
//! eval/ablation.csv                   continuous vs discrete on the main test split
//! eval/posterior_<split>.json         mean segmentor posteriors per class
//! report/                             summary.csv and PNG grids
//! ```
//!
//! Every directory a stage writes carries a `provenance.json` holding the
//! resolved configuration, effective seeds and the crate version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{class_posterior_stats, reconstruct_many, residual, PosteriorStats, SemanticMode};
use crate::baseline::{ae_reconstruct_many, train_ae, AutoencoderArch, AutoencoderModel};
use crate::dataio::{load_split, read_f32_plane, write_atomic, write_f32_plane, ImageSlice, Record};
use crate::error::{Error, Result};
use crate::metrics::{pool_scores, EvalReport};
use crate::nn::checkpoint;
use crate::phantom::{write_test_split, write_train_split, LesionStyle, PhantomConfig};
use crate::report::{save_grid, Panel};
use crate::rng::CounterRng;
use crate::segmod::{train_segmentor, SegmentationModel, UNetArch};
use crate::synthmod::{train_synthesizer, DiscriminatorArch, GeneratorArch, GeneratorModel, SynthTrainConfig};
use crate::train::{EpochLoss, TrainConfig};

pub const PROVENANCE_FILE: &str = "provenance.json";
pub const RESIDUAL_MANIFEST: &str = "manifest.json";
pub const ABLATION_CSV_HEADER: &str = "mode,auprc,best_dice";

/// How residuals are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cycle_continuous")]
    CycleContinuous,
    #[serde(rename = "cycle_discrete")]
    CycleDiscrete,
    #[serde(rename = "ae")]
    Autoencoder,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CycleContinuous, Method::CycleDiscrete, Method::Autoencoder];

    pub fn cycle(mode: SemanticMode) -> Self {
        match mode {
            SemanticMode::Continuous => Method::CycleContinuous,
            SemanticMode::Discrete => Method::CycleDiscrete,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CycleContinuous => "cycle_continuous",
            Method::CycleDiscrete => "cycle_discrete",
            Method::Autoencoder => "ae",
        }
    }

    pub fn semantic_mode(self) -> Option<SemanticMode> {
        match self {
            Method::CycleContinuous => Some(SemanticMode::Continuous),
            Method::CycleDiscrete => Some(SemanticMode::Discrete),
            Method::Autoencoder => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected cycle_continuous, cycle_discrete or ae)"))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed. Every component seed is derived from it together with
    /// the component's own `seed` field.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Threads for data generation; 0 uses every available core. Output
    /// bytes do not depend on it.
    pub workers: usize,
    /// Intermediate used by `infer` when no method is given.
    pub semantic_mode: SemanticMode,
    pub phantom: PhantomConfig,
    /// Lesion styles evaluated in addition to `phantom.lesion_style`, each in
    /// its own `test_<style>` split sharing the main test anatomy.
    pub extra_test_styles: Vec<LesionStyle>,
    pub seg: TrainConfig,
    pub seg_arch: UNetArch,
    pub synth: SynthTrainConfig,
    pub gen_arch: GeneratorArch,
    pub disc_arch: DiscriminatorArch,
    pub ae: TrainConfig,
    pub ae_arch: AutoencoderArch,
    /// 3x3 median filter on residuals before scoring.
    pub median_filter: bool,
    /// Lesioned slices per figure grid in `report`.
    pub report_slices: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("cyclesem-out"),
            workers: 0,
            semantic_mode: SemanticMode::Continuous,
            phantom: PhantomConfig::default(),
            extra_test_styles: vec![LesionStyle::StrokeLike],
            seg: TrainConfig::default(),
            seg_arch: UNetArch::default(),
            synth: SynthTrainConfig::default(),
            gen_arch: GeneratorArch::default(),
            disc_arch: DiscriminatorArch::default(),
            ae: TrainConfig::default(),
            ae_arch: AutoencoderArch::default(),
            median_filter: false,
            report_slices: 6,
        }
    }
}

/// Seeds actually used by each component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveSeeds {
    pub phantom: u64,
    pub segmentor: u64,
    pub synthesizer: u64,
    pub autoencoder: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let nest = |prefix: &str, e: Error| match e {
            Error::InvalidConfig { field, reason } if !field.starts_with(prefix) => {
                Error::InvalidConfig { field: format!("{prefix}.{field}"), reason }
            }
            other => other,
        };
        self.phantom.validate().map_err(|e| nest("phantom", e))?;
        let res = self.phantom.resolution;
        self.seg.validate("seg")?;
        self.synth.validate("synth")?;
        self.ae.validate("ae")?;
        self.seg_arch.validate(res)?;
        self.gen_arch.validate(res)?;
        self.ae_arch.validate(res)?;
        if self.gen_arch.num_classes != self.seg_arch.num_classes {
            return Err(Error::InvalidConfig {
                field: "gen_arch.num_classes".into(),
                reason: format!("must equal seg_arch.num_classes ({})", self.seg_arch.num_classes),
            });
        }
        if self.disc_arch.base_channels == 0 {
            return Err(Error::InvalidConfig { field: "disc_arch.base_channels".into(), reason: "must be positive".into() });
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig { field: "output_dir".into(), reason: "must not be empty".into() });
        }
        Ok(())
    }

    /// Configuration problems that are legal but worth a warning.
    pub fn warnings(&self) -> Vec<String> {
        self.ae_arch.warnings(self.phantom.resolution)
    }

    fn derive(&self, tag: &str, local: u64) -> u64 {
        CounterRng::for_stream(self.seed, tag, local).next_u64()
    }

    pub fn seeds(&self) -> EffectiveSeeds {
        EffectiveSeeds {
            phantom: self.derive("phantom", self.phantom.seed),
            segmentor: self.derive("segmentor", self.seg.seed),
            synthesizer: self.derive("synthesizer", self.synth.seed),
            autoencoder: self.derive("autoencoder", self.ae.seed),
        }
    }

    fn phantom_cfg(&self) -> PhantomConfig {
        PhantomConfig { seed: self.seeds().phantom, ..self.phantom.clone() }
    }

    fn workers(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    /// Short digest of everything that affects results (the output location
    /// and worker count are left out).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 0;
        c.report_slices = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn layout(&self) -> Layout {
        Layout { root: self.output_dir.clone() }
    }

    /// Test splits as `(name, lesion style)`, main split first.
    pub fn test_splits(&self) -> Vec<(String, LesionStyle)> {
        let mut out = vec![("test".to_owned(), self.phantom.lesion_style)];
        for &s in &self.extra_test_styles {
            if s != self.phantom.lesion_style && !out.iter().any(|(_, o)| *o == s) {
                out.push((format!("test_{}", s.as_str()), s));
            }
        }
        out
    }
}

/// Paths of every artifact under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn segmentor_dir(&self) -> PathBuf {
        self.root.join("models").join("segmentor")
    }
    pub fn synthesizer_dir(&self) -> PathBuf {
        self.root.join("models").join("synthesizer")
    }
    pub fn autoencoder_dir(&self) -> PathBuf {
        self.root.join("models").join("autoencoder")
    }
    pub fn residual_dir(&self, method: Method, split: &str) -> PathBuf {
        self.root.join("residuals").join(method.as_str()).join(split)
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn eval_report(&self, method: Method, split: &str) -> PathBuf {
        self.eval_dir().join(method.as_str()).join(format!("{split}.json"))
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub code_version: String,
    pub config_fingerprint: String,
    pub seeds: EffectiveSeeds,
    pub config: ExperimentConfig,
}

pub fn write_provenance(dir: &Path, stage: &str, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let p = Provenance {
        stage: stage.to_owned(),
        code_version: env!("CARGO_PKG_VERSION").to_owned(),
        config_fingerprint: cfg.fingerprint(),
        seeds: cfg.seeds(),
        config: cfg.clone(),
    };
    write_atomic(&dir.join(PROVENANCE_FILE), &serde_json::to_vec_pretty(&p)?)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

fn load_data(cfg: &ExperimentConfig, split: &str) -> Result<Vec<Record>> {
    let data = cfg.layout().data();
    require(data.join(split).join("manifest.json"))?;
    load_split(&data, split)
}

/// Generates the training split and every test split.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let data = cfg.layout().data();
    let phantom = cfg.phantom_cfg();
    let workers = cfg.workers();
    log::info!("generating {} training slices", phantom.num_train);
    write_train_split(&phantom, &data, workers)?;
    for (split, style) in cfg.test_splits() {
        log::info!("generating {} {} slices into {split}", phantom.num_test, style.as_str());
        write_test_split(&phantom, &data, &split, style, workers)?;
    }
    write_provenance(&data, "gen-data", cfg)
}

pub fn train_seg(cfg: &ExperimentConfig) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    let records = load_data(cfg, "train")?;
    let dir = cfg.layout().segmentor_dir();
    let train = TrainConfig { seed: cfg.seeds().segmentor, ..cfg.seg.clone() };
    let out = train_segmentor(&records, cfg.seg_arch, &train, Some(&dir))?;
    write_provenance(&dir, "train-seg", cfg)?;
    Ok(out.losses)
}

pub fn train_synth(cfg: &ExperimentConfig) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    let records = load_data(cfg, "train")?;
    let dir = cfg.layout().synthesizer_dir();
    let train = SynthTrainConfig { seed: cfg.seeds().synthesizer, ..cfg.synth.clone() };
    let out = train_synthesizer(&records, cfg.gen_arch, cfg.disc_arch, &train, Some(&dir))?;
    write_provenance(&dir, "train-synth", cfg)?;
    Ok(out.losses)
}

pub fn train_baseline(cfg: &ExperimentConfig) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    let records = load_data(cfg, "train")?;
    let dir = cfg.layout().autoencoder_dir();
    let train = TrainConfig { seed: cfg.seeds().autoencoder, ..cfg.ae.clone() };
    let out = train_ae(&records, cfg.ae_arch, &train, Some(&dir))?;
    write_provenance(&dir, "train-ae", cfg)?;
    Ok(out.losses)
}

fn require_checkpoint(stem: PathBuf) -> Result<PathBuf> {
    if !checkpoint::exists(&stem) {
        return Err(Error::MissingArtifact(checkpoint::sidecar_path(&stem)));
    }
    Ok(stem)
}

pub fn load_segmentor(cfg: &ExperimentConfig) -> Result<SegmentationModel> {
    let stem = require_checkpoint(cfg.layout().segmentor_dir().join(crate::segmod::CHECKPOINT_KIND))?;
    SegmentationModel::load(&stem)
}

pub fn load_generator(cfg: &ExperimentConfig) -> Result<GeneratorModel> {
    let stem = require_checkpoint(cfg.layout().synthesizer_dir().join(crate::synthmod::GENERATOR_KIND))?;
    GeneratorModel::load(&stem)
}

pub fn load_autoencoder(cfg: &ExperimentConfig) -> Result<AutoencoderModel> {
    let stem = require_checkpoint(cfg.layout().autoencoder_dir().join(crate::baseline::CHECKPOINT_KIND))?;
    AutoencoderModel::load(&stem)
}

/// Index of a residual directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualManifest {
    pub method: Method,
    pub split: String,
    pub resolution: usize,
    pub median_filter: bool,
    pub config_fingerprint: String,
    pub ids: Vec<String>,
}

enum Reconstructor {
    Cycle(SegmentationModel, GeneratorModel, SemanticMode),
    Ae(AutoencoderModel),
}

impl Reconstructor {
    fn load(cfg: &ExperimentConfig, method: Method) -> Result<Self> {
        Ok(match method.semantic_mode() {
            Some(mode) => Reconstructor::Cycle(load_segmentor(cfg)?, load_generator(cfg)?, mode),
            None => Reconstructor::Ae(load_autoencoder(cfg)?),
        })
    }

    fn run(&self, images: &[&ImageSlice]) -> Result<Vec<ImageSlice>> {
        match self {
            Reconstructor::Cycle(s, g, mode) => reconstruct_many(s, g, images, *mode),
            Reconstructor::Ae(a) => ae_reconstruct_many(a, images),
        }
    }
}

fn infer_split(cfg: &ExperimentConfig, method: Method, model: &Reconstructor, split: &str) -> Result<PathBuf> {
    let records = load_data(cfg, split)?;
    let images: Vec<&ImageSlice> = records.iter().map(|r| &r.image).collect();
    let recon = model.run(&images)?;
    let dir = cfg.layout().residual_dir(method, split);
    let staging = dir.with_file_name(format!(".{split}.staging"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(Error::io(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(Error::io(&staging))?;
    for (rec, x_hat) in records.iter().zip(&recon) {
        let mut r = residual(&rec.image, x_hat)?;
        if cfg.median_filter {
            r = r.median_filtered();
        }
        r.write(&staging.join(format!("{}.res", rec.id)))?;
        write_f32_plane(&staging.join(format!("{}.rec", rec.id)), x_hat.pixels())?;
    }
    let manifest = ResidualManifest {
        method,
        split: split.to_owned(),
        resolution: cfg.phantom.resolution,
        median_filter: cfg.median_filter,
        config_fingerprint: cfg.fingerprint(),
        ids: records.iter().map(|r| r.id.clone()).collect(),
    };
    write_atomic(&staging.join(RESIDUAL_MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    write_provenance(&staging, "infer", cfg)?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(Error::io(&dir))?;
    }
    fs::rename(&staging, &dir).map_err(Error::io(&dir))?;
    Ok(dir)
}

/// Writes residuals and reconstructions of `method` for every test split.
pub fn infer(cfg: &ExperimentConfig, method: Method) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let model = Reconstructor::load(cfg, method)?;
    cfg.test_splits().iter().map(|(split, _)| infer_split(cfg, method, &model, split)).collect()
}

pub fn read_residual_manifest(dir: &Path) -> Result<ResidualManifest> {
    let path = require(dir.join(RESIDUAL_MANIFEST)).map_err(|_| Error::MissingArtifact(dir.to_owned()))?;
    Ok(serde_json::from_slice(&fs::read(&path).map_err(Error::io(&path))?)?)
}

fn eval_split(cfg: &ExperimentConfig, method: Method, split: &str) -> Result<EvalReport> {
    let dir = cfg.layout().residual_dir(method, split);
    let manifest = read_residual_manifest(&dir)?;
    let records = load_data(cfg, split)?;
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    if manifest.ids != ids {
        return Err(Error::Corrupt {
            path: dir.join(RESIDUAL_MANIFEST),
            reason: format!("residual ids do not match the {split} manifest; rerun infer"),
        });
    }
    let n = manifest.resolution;
    let scores: Vec<Vec<f32>> = records
        .iter()
        .map(|r| read_f32_plane(&dir.join(format!("{}.res", r.id)), n * n))
        .collect::<Result<_>>()?;
    let sp = pool_scores(
        split,
        records.iter().zip(&scores).map(|(r, s)| (r.id.as_str(), s.as_slice(), r.mask.as_ref())),
    )?;
    let report = EvalReport::evaluate(method.as_str(), &sp, &cfg.fingerprint())?;
    let path = cfg.layout().eval_report(method, split);
    fs::create_dir_all(path.parent().expect("report has a parent")).map_err(Error::io(&path))?;
    write_atomic(&path, &serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// Mean segmentor posteriors per ground-truth class on a test split.
pub fn posterior(cfg: &ExperimentConfig, split: &str) -> Result<PosteriorStats> {
    let s = load_segmentor(cfg)?;
    let records = load_data(cfg, split)?;
    let stats = class_posterior_stats(&s, &records)?;
    let dir = cfg.layout().eval_dir();
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    write_atomic(&dir.join(format!("posterior_{split}.json")), &serde_json::to_vec_pretty(&stats)?)?;
    Ok(stats)
}

/// Every EvalReport currently under `eval/`, ordered by method then split.
pub fn collect_reports(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for method in Method::ALL {
        for (split, _) in cfg.test_splits() {
            let path = cfg.layout().eval_report(method, &split);
            if path.exists() {
                out.push(serde_json::from_slice(&fs::read(&path).map_err(Error::io(&path))?)?);
            }
        }
    }
    Ok(out)
}

fn reports_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from(EvalReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Scores `method`'s residuals on every test split. Cycle methods also
/// record posterior statistics.
pub fn eval(cfg: &ExperimentConfig, method: Method) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let splits = cfg.test_splits();
    for (split, _) in &splits {
        read_residual_manifest(&cfg.layout().residual_dir(method, split))?;
    }
    let mut reports = Vec::new();
    for (split, _) in &splits {
        let r = eval_split(cfg, method, split)?;
        log::info!("{method} on {split}: AUPRC {:.4}, best DICE {:.4}", r.auprc, r.best_dice);
        reports.push(r);
        if method.semantic_mode().is_some() {
            posterior(cfg, split)?;
        }
    }
    let dir = cfg.layout().eval_dir();
    write_atomic(&dir.join("report.csv"), reports_csv(&collect_reports(cfg)?).as_bytes())?;
    write_provenance(&dir, "eval", cfg)?;
    Ok(reports)
}

/// Continuous and discrete intermediates with one shared segmentor and
/// generator, on the main test split.
pub fn ablation(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let s = load_segmentor(cfg)?;
    let g = load_generator(cfg)?;
    let mut reports = Vec::new();
    let mut csv = format!("{ABLATION_CSV_HEADER}\n");
    for mode in [SemanticMode::Continuous, SemanticMode::Discrete] {
        let method = Method::cycle(mode);
        let model = Reconstructor::Cycle(s.clone(), g.clone(), mode);
        infer_split(cfg, method, &model, "test")?;
        let r = eval_split(cfg, method, "test")?;
        csv.push_str(&format!("{},{:.6},{:.6}\n", mode.as_str(), r.auprc, r.best_dice));
        reports.push(r);
    }
    let dir = cfg.layout().eval_dir();
    write_atomic(&dir.join("ablation.csv"), csv.as_bytes())?;
    write_atomic(&dir.join("report.csv"), reports_csv(&collect_reports(cfg)?).as_bytes())?;
    write_provenance(&dir, "ablation", cfg)?;
    Ok(reports)
}

/// Writes `report/summary.csv` and, for every residual directory present,
/// a grid of input / reconstruction / residual / mask for lesioned slices.
/// Residual panels are scaled so the largest shown residual is white.
pub fn report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let reports = collect_reports(cfg)?;
    if reports.is_empty() {
        return Err(Error::MissingArtifact(cfg.layout().eval_dir()));
    }
    let out = cfg.layout().report_dir();
    fs::create_dir_all(&out).map_err(Error::io(&out))?;
    write_atomic(&out.join("summary.csv"), reports_csv(&reports).as_bytes())?;
    for method in Method::ALL {
        for (split, _) in cfg.test_splits() {
            let dir = cfg.layout().residual_dir(method, &split);
            let Ok(manifest) = read_residual_manifest(&dir) else { continue };
            let records = load_data(cfg, &split)?;
            let n = manifest.resolution;
            let chosen: Vec<&Record> = records
                .iter()
                .filter(|r| r.mask.as_ref().is_some_and(|m| m.any()))
                .take(cfg.report_slices)
                .collect();
            if chosen.is_empty() {
                continue;
            }
            let mut planes = Vec::new();
            for r in &chosen {
                let rec = read_f32_plane(&dir.join(format!("{}.rec", r.id)), n * n)?;
                let res = read_f32_plane(&dir.join(format!("{}.res", r.id)), n * n)?;
                let mask: Vec<f32> = r.mask.as_ref().expect("filtered").as_slice().iter().map(|&m| m as u8 as f32).collect();
                planes.push((r.image.pixels().to_vec(), rec, res, mask));
            }
            let res_max = planes.iter().flat_map(|p| p.2.iter().copied()).fold(0.0f32, f32::max);
            let rows: Vec<Vec<Panel>> = planes
                .iter()
                .map(|(x, rec, res, mask)| {
                    vec![
                        Panel { values: x, scale: 1.0 },
                        Panel { values: rec, scale: 1.0 },
                        Panel { values: res, scale: res_max },
                        Panel { values: mask, scale: 1.0 },
                    ]
                })
                .collect();
            save_grid(&out.join(format!("{}_{split}.png", method.as_str())), n, &rows)?;
        }
    }
    write_provenance(&out, "report", cfg)?;
    Ok(out)
}

/// Every stage in order: data, the three models, residuals for all methods,
/// evaluation, the ablation table and the report.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    gen_data(cfg)?;
    train_seg(cfg)?;
    train_synth(cfg)?;
    train_baseline(cfg)?;
    for m in Method::ALL {
        infer(cfg, m)?;
        eval(cfg, m)?;
    }
    ablation(cfg)?;
    report(cfg)?;
    collect_reports(cfg)
}
