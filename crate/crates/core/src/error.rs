use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is malformed: a tag id out of range, a repeated tag,
    /// mismatched vector lengths.
    InvalidInput(String),
    /// A caller broke a documented precondition.
    Contract(String),
    /// Both Yes and No scores were zero.
    DegenerateScore,
    /// A loss became NaN or infinite during training.
    Divergence { stage: &'static str, index: usize },
    /// The operation needs data this dataset does not carry.
    Unsupported(String),
    /// An id does not resolve to a known user or item.
    Referential(String),
    /// AUC needs at least one positive and one negative example.
    AucUndefined,
    /// An error raised while running one iteration of the alternating loop.
    Iteration { iteration: usize, source: Box<Error> },
}

impl Error {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Contract(_) => "contract",
            Error::DegenerateScore => "degenerate-score",
            Error::Divergence { .. } => "divergence",
            Error::Unsupported(_) => "unsupported",
            Error::Referential(_) => "referential",
            Error::AucUndefined => "auc-undefined",
            Error::Iteration { source, .. } => source.category(),
        }
    }

    pub(crate) fn in_iteration(self, iteration: usize) -> Error {
        Error::Iteration { iteration, source: Box::new(self) }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::DegenerateScore => f.write_str("both yes and no scores are zero"),
            Error::Divergence { stage, index } => {
                write!(f, "training diverged in {stage} at index {index}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Referential(msg) => write!(f, "unknown id: {msg}"),
            Error::AucUndefined => f.write_str("AUC undefined for single-class labels"),
            Error::Iteration { iteration, source } => write!(f, "iteration {iteration}: {source}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
