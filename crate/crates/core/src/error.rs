use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalrefError>;

#[derive(Debug, Error)]
pub enum CalrefError {
    /// Input data violates an ingestion invariant (non-finite logit, label out of range, ...).
    #[error("invalid input data: {0}")]
    Ingest(String),

    /// A parameter lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Line-numbered parse failure in a logits file.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The AvUC-family denominator vanished on this batch.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("temperature fit failed: {0}")]
    Fit(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("sweep failed: {0}")]
    Sweep(String),

    /// Malformed or unknown configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CalrefError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CalrefError::Domain(msg.into())
    }
}
