use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: axis {axis} of size {size} is not divisible by {factor}")]
    Divisibility {
        op: &'static str,
        axis: &'static str,
        size: usize,
        factor: usize,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss does not depend on any tensor that requires grad")]
    Detached,

    #[error("backward already ran on this graph; build a new graph per step")]
    BackwardTwice,

    #[error("missing gradient for parameter {0}")]
    MissingGrad(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsatisfiable parameter space: {0}")]
    Unsatisfiable(String),

    #[error("wavelet central frequency is non-positive ({0} Hz) after decay")]
    WaveletFrequency(f64),

    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Diverged { epoch: usize, step: usize, loss: f32 },

    #[error("activation capture was not enabled for this forward pass")]
    CaptureDisabled,

    #[error("block {0} does not exist")]
    NoSuchBlock(usize),

    #[error("requested {requested} items but only {available} are available")]
    TooMany { requested: usize, available: usize },

    #[error("metric {metric}: {detail}")]
    Metric { metric: &'static str, detail: String },

    #[error("bad magic in {kind}: expected {expected:?}, found {found:?}")]
    Magic {
        kind: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {kind} version {found} (this build reads version {supported})")]
    Version {
        kind: &'static str,
        found: u16,
        supported: u16,
    },

    #[error("{kind} truncated while reading {what}")]
    Truncated { kind: &'static str, what: String },

    #[error("malformed {kind}: {detail}")]
    Malformed { kind: &'static str, detail: String },

    #[error("SEG-Y sample format code {0} is not supported (only 1 and 5)")]
    SegyFormat(u16),

    #[error("SEG-Y trace {trace} has {found} samples, expected {expected}")]
    SegyTraceLength {
        trace: usize,
        expected: usize,
        found: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, files, flags)
    /// rather than by a failure during computation.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Toml(_)
                | Error::Magic { .. }
                | Error::Version { .. }
                | Error::Truncated { .. }
                | Error::Malformed { .. }
                | Error::SegyFormat(_)
                | Error::SegyTraceLength { .. }
                | Error::Unsatisfiable(_)
                | Error::NoSuchBlock(_)
                | Error::TooMany { .. }
                | Error::Divisibility { .. }
        )
    }
}
