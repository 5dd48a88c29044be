use thiserror::Error;

use crate::corpus::CorpusError;
use crate::diffcore::TensorError;
use crate::embeddings::EmbeddingError;
use crate::eval::EvalError;
use crate::pcnn::ModelError;
use crate::preprocess::PreprocessError;
use crate::trainer::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Corpus(CorpusError::Io { .. }) => ErrorCategory::Io,
            Error::Corpus(_) | Error::Preprocess(_) => ErrorCategory::Data,
            Error::Embedding(EmbeddingError::Io { .. }) => ErrorCategory::Io,
            Error::Embedding(_) => ErrorCategory::Data,
            Error::Tensor(TensorError::NonFinite { .. }) => ErrorCategory::Numeric,
            Error::Tensor(TensorError::Io(_)) => ErrorCategory::Io,
            Error::Tensor(TensorError::Checkpoint(_)) => ErrorCategory::Data,
            Error::Tensor(_) => ErrorCategory::Config,
            Error::Model(ModelError::Tensor(e)) => Error::Tensor(e.clone()).category(),
            Error::Model(_) => ErrorCategory::Config,
            Error::Train(TrainError::NonFiniteLoss { .. }) => ErrorCategory::Numeric,
            Error::Train(TrainError::Model(e)) => Error::Model(e.clone()).category(),
            Error::Train(TrainError::Eval(_)) => ErrorCategory::Data,
            Error::Train(_) => ErrorCategory::Config,
            Error::Eval(EvalError::Io(_)) => ErrorCategory::Io,
            Error::Eval(_) => ErrorCategory::Data,
        }
    }
}
