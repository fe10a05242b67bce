use thiserror::Error;

/// Errors raised by the polynomial term-structure library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate interval ({lo}, {hi})")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("diffusion coefficient does not vanish at endpoint {endpoint}: a = {value:e}")]
    EndpointNotRoot { endpoint: f64, value: f64 },

    #[error("diffusion coefficient is not positive inside the interval: a({z}) = {value:e}")]
    NotPositiveInside { z: f64, value: f64 },

    #[error("model constraints violated: {0}")]
    ConstraintViolated(String),

    #[error("state {z} outside the closed interval [{lo}, {hi}]")]
    OutOfDomain { z: f64, lo: f64, hi: f64 },

    #[error("non-positive bond price H({x}, {z}) = {price:e}")]
    NonPositivePrice { x: f64, z: f64, price: f64 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("no invariant density: {0}")]
    NoInvariantDensity(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("moment matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateInterval { .. } => "degenerate_interval",
            Error::EndpointNotRoot { .. } => "endpoint_not_root",
            Error::NotPositiveInside { .. } => "not_positive_inside",
            Error::ConstraintViolated(_) => "constraint_violated",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::NonPositivePrice { .. } => "non_positive_price",
            Error::Infeasible(_) => "infeasible",
            Error::NoInvariantDensity(_) => "no_invariant_density",
            Error::Quadrature(_) => "quadrature",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
