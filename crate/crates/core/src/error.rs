use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("invalid record id `{0}` (use ASCII letters, digits, '-' or '_')")]
    InvalidId(String),

    #[error("training record `{0}` carries lesion pixels")]
    LesionInTraining(String),

    #[error("test record `{0}` has no lesion mask")]
    MissingMask(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("checksum mismatch for record `{id}` in {}", .dir.display())]
    Checksum { id: String, dir: PathBuf },

    #[error("unknown split `{split}` under {}", .root.display())]
    UnknownSplit { split: String, root: PathBuf },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("empty training split for {0}")]
    EmptySplit(&'static str),

    #[error("{model}: non-finite loss at epoch {epoch}, batch {batch}{}",
        .last_good.as_ref().map(|p| format!(" (last good checkpoint: {})", p.display())).unwrap_or_default())]
    NonFiniteLoss {
        model: &'static str,
        epoch: usize,
        batch: usize,
        last_good: Option<PathBuf>,
    },

    #[error("could not place lesion after {0} attempts")]
    LesionPlacement(usize),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("missing prerequisite artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("corrupt file {}: {reason}", .path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path)
            } else {
                Error::Io { path, source }
            }
        }
    }
}
