use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or corrupt WAV: {0}")]
    Wav(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot derive threshold from a silent clip")]
    SilentClip,
    #[error("zero-power {0} signal")]
    ZeroPower(&'static str),
    #[error("empty corruption spec")]
    EmptyCorruption,
    #[error("cannot parse corruption spec {spec:?}: {reason}")]
    SpecParse { spec: String, reason: String },
    #[error("empty adaptation plan")]
    EmptyPlan,
    #[error("empty report")]
    EmptyReport,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("bad file format: {0}")]
    Format(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem or by unreadable input files,
    /// as opposed to bad parameters.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Wav(_) | Error::Format(_) | Error::Manifest(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
