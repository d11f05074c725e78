use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: story {story_id} references unknown prompt {prompt_id}")]
    DanglingPrompt {
        line: usize,
        story_id: String,
        prompt_id: String,
    },

    #[error("story {story_id}: span [{start}, {end}) outside story of {len} tokens")]
    SpanOutOfRange {
        story_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("invalid percentiles: need 0 <= low ({low}) < high ({high}) <= 100")]
    InvalidPercentiles { low: f64, high: f64 },

    #[error("{pole} pole has no in-vocabulary terms")]
    EmptyPole { pole: &'static str },

    #[error("no prototype term is in the embedding vocabulary")]
    EmptyPrototypes,

    #[error("semantic axis is the zero vector")]
    ZeroAxis,

    #[error("invalid scorer: {0}")]
    InvalidScorer(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

/// A non-fatal problem found while reading an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number, or 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}
