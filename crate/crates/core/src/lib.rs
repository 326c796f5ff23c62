//! Unsupervised anomaly segmentation by cycle translation: image to tissue
//! semantics and back, scoring pixels by how badly they survive the trip.

pub mod anomaly;
pub mod baseline;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod report;
pub mod rng;
pub mod segmod;
pub mod synthmod;
pub mod train;

pub use anomaly::{discretize, reconstruct, residual, ResidualMap, SemanticIntermediate, SemanticMode};
pub use dataio::{ImageSlice, LesionMask, Record, TissueLabelMap};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Method};
pub use metrics::{auprc, best_dice, EvalReport};
pub use phantom::{LesionStyle, PhantomConfig};
pub use segmod::{SegmentationModel, UNetArch};
pub use synthmod::{DiscriminatorModel, GeneratorModel, SynthTrainConfig};
pub use train::TrainConfig;
