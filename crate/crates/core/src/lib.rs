// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Risk-sensitive stochastic GRAPE for gate synthesis under parameter
//! uncertainty.

pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod fsutil;
pub mod loss;
pub mod optimizer;
pub mod sampler;
pub mod system;
pub mod tensor;

pub use error::{Error, Result};
