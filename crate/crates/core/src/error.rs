//! Error type shared by every module.

use thiserror::Error;

/// Which layer of the slab an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// The lighter fluid occupying `(-m, 0)`.
    Lower,
    /// The heavier fluid occupying `(0, ell)`.
    Upper,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Lower => write!(f, "lower"),
            Side::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value lies outside the image of a monotone map (e.g. enthalpy).
    #[error("range error: {0}")]
    Range(String),

    /// An invalid configuration: bad parameters, unknown keys, inadmissible states.
    #[error("configuration error: {0}")]
    Config(String),

    /// The hydrostatic profile would reach vacuum inside the slab.
    #[error("vacuum error on the {side} side: {detail}")]
    Vacuum { side: Side, detail: String },

    /// A vector does not match the degree-of-freedom layout of a form set.
    #[error("layout error: expected {expected} dofs, got {got}")]
    Layout { expected: usize, got: usize },

    /// An iterative solver failed to converge.
    #[error("solver error: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
