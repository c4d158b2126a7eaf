// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |A - A^H| = {residual:.3e}, max |A| = {scale:.3e})")]
    NotHermitian { residual: f64, scale: f64 },

    #[error(
        "Hermitian eigendecomposition did not converge for {dim}x{dim} matrix \
         (Frobenius norm {frobenius:.3e}, max entry {max_abs:.3e}, Hermitian residual {residual:.3e})"
    )]
    EigenNonConvergence {
        dim: usize,
        frobenius: f64,
        max_abs: f64,
        residual: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure at iteration {iteration}: {reason}")]
    Numerical { iteration: u64, reason: String },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
