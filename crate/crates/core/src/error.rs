use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file was readable but its contents are not a supported layout.
    #[error("unsupported format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A map is constant or sums to zero where the operation needs spread or mass.
    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("degenerate tensor: {0}")]
    DegenerateTensor(String),

    /// A data vector cannot support the statistic (constant input, nothing to score).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Input values are not usable, e.g. NaN in a tensor.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("comparison graph is disconnected: {} components ({})", components.len(), describe_components(components))]
    DisconnectedGraph { components: Vec<Vec<String>> },

    #[error("missing column `{column}` in {path}")]
    Schema { path: PathBuf, column: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

fn describe_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than failures while processing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::Schema { .. } | Error::Validation(_) | Error::Format { .. }
        )
    }
}
