use thiserror::Error;

/// Errors produced by the bound, simulation and decoding routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "infeasible reference: sigma_h2 = {sigma_h2} must exceed ((r-1)/r)*(1+rho)/(1-rho) = {floor} (r = {r}, rho = {rho})"
    )]
    Infeasible {
        r: f64,
        sigma_h2: f64,
        rho: f64,
        floor: f64,
    },

    #[error(
        "quadrature did not converge after {nodes} nodes: last estimates {previous} and {last}"
    )]
    Convergence {
        previous: f64,
        last: f64,
        nodes: usize,
    },

    #[error("no feasible (r, sigma_h2) pair in grid; tightest constraint: {0}")]
    EmptyFeasibleSet(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

impl Error {
    /// Process exit code for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Infeasible { .. } | Error::EmptyFeasibleSet(_) => 3,
            Error::Convergence { .. } => 4,
        }
    }
}
