use thiserror::Error;

pub type Result<T> = std::result::Result<T, BmdError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BmdError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no dose effect (slope {slope}): the agent is innocuous and the BMD is infinite")]
    InfiniteBmd { slope: f64 },

    #[error("data failure: {0}")]
    DataFailure(String),

    #[error(
        "elicitation failed after {iterations} iterations (half squared residual {objective:e}); \
         fall back to objective priors"
    )]
    ElicitationFailure { iterations: usize, objective: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate variance in {0}")]
    DegenerateVariance(String),

    #[error("algorithm failure after {attempts} attempts")]
    AlgorithmFailure { attempts: usize },

    #[error("optimizer did not converge: {0}")]
    Nonconvergence(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("marginal likelihoods computed on different data ({0} vs {1})")]
    DataMismatch(String, String),
}
