use thiserror::Error;

use crate::augmentation::AugmentError;
use crate::config::ConfigError;
use crate::ensemble::EnsembleError;
use crate::evaluation::EvalError;
use crate::io::IoError;
use crate::matrix::MatrixError;
use crate::sampling::SamplingError;
use crate::simulation::SimError;
use crate::taxonomy::TaxonomyError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Error {
    /// Stable error class, printed by the CLI as `error[<class>]: ...`.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Taxonomy(TaxonomyError::Parse { .. }) => "parse",
            Error::Taxonomy(TaxonomyError::Invalid { .. }) => "validity",
            Error::Taxonomy(TaxonomyError::Dimension { .. }) => "dimension",
            Error::Taxonomy(TaxonomyError::ClassList(_)) => "class-list",
            Error::Sampling(_) => "sampling",
            Error::Augment(_) => "augment",
            Error::Matrix(_) => "validation",
            Error::Ensemble(e) => match e.root_cause() {
                EnsembleError::Alignment(_) => "alignment",
                EnsembleError::Partition(_) => "partition",
                EnsembleError::Load { .. } => "io",
                EnsembleError::Matrix(_) => "validation",
                _ => "ensemble",
            },
            Error::Eval(EvalError::Alignment(_)) => "alignment",
            Error::Eval(EvalError::Dimension { .. }) => "dimension",
            Error::Eval(_) => "validation",
            Error::Sim(_) => "config",
            Error::Io(IoError::Io { .. }) => "io",
            Error::Io(IoError::Parse { .. }) => "parse",
            Error::Io(IoError::Invalid { .. }) => "validation",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
