use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{solver} did not converge at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        solver: &'static str,
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("IRLS stagnated after {iterations} iterations (last step {last_step:.3e}, gap bound {gap_bound:.3e})")]
    IrlsStagnation {
        iterations: usize,
        last_step: f64,
        gap_bound: f64,
        last_iterate: Vec<f64>,
    },

    #[error("negative boundary data {value:.3e} at node {node}")]
    NegativeData { node: usize, value: f64 },

    #[error("unknown case id `{0}`")]
    UnknownCase(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
