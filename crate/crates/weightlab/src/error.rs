//! Crate-wide error type.

use crate::grid::DyadicCube;
use num_rational::Rational64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cube {cube:?} does not belong to the lattice: {reason}")]
    CubeOutsideLattice { cube: DyadicCube, reason: String },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ellipsoid fit failed on cube {cube:?}: {diagnostics}")]
    FitError { cube: DyadicCube, diagnostics: String },

    #[error("sparsity violated at cube {cube:?}: witness deficit {deficit}")]
    SparsityViolation { cube: DyadicCube, deficit: Rational64 },

    #[error("domination failed: {0}")]
    Domination(String),

    #[error("representation error at cell {cell}: residual {residual}")]
    Representation { cell: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
