use std::path::PathBuf;

/// Errors raised by the stylization core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("{0}")]
    Domain(String),

    /// A configuration value is invalid; `field` names the offending key.
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },

    /// A model backend failed to load or run.
    #[error("backend error: {0}")]
    Backend(String),

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A style parameter failed to project; `index` is its position in the set.
    #[error("style {index}: {source}")]
    Style {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    /// The optimization produced a non-finite value.
    #[error("numerical abort at level {level}, iteration {iteration}: {message}")]
    Numerical {
        level: usize,
        iteration: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
