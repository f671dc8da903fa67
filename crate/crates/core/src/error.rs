use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resource profile: {0}")]
    InvalidProfile(String),

    #[error("customer type {ty} cannot be served: its unit configuration is infeasible")]
    UnservableType { ty: usize },

    #[error("configuration count exceeds the cap of {cap}")]
    TooManyConfigs { cap: usize },

    #[error("configuration set is not monotone: {config:?} is present but {smaller:?} is missing")]
    NotMonotone { config: Vec<u32>, smaller: Vec<u32> },

    #[error("unit configuration for type {ty} is missing")]
    MissingUnit { ty: usize },

    #[error("invalid configuration set: {0}")]
    InvalidConfigs(String),

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("state is not in the feasible polytope: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("fluid integration diverged at t = {t}; reduce dt")]
    Divergence { t: f64 },

    #[error("sampling window has {samples} samples, fewer than {batches} batches; use a longer horizon")]
    ShortWindow { samples: usize, batches: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
