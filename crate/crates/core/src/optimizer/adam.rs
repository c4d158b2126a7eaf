// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::ControlMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("adam epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Bias-corrected first/second moment accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub(crate) m: ControlMatrix,
    pub(crate) v: ControlMatrix,
    pub(crate) t: u64,
}

impl AdamState {
    pub fn new(channels: usize, slices: usize) -> Self {
        Self {
            m: ControlMatrix::zeros(channels, slices),
            v: ControlMatrix::zeros(channels, slices),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &ControlMatrix {
        &self.m
    }

    pub fn second_moment(&self) -> &ControlMatrix {
        &self.v
    }

    /// Advances the moments with `gradient` and returns the control change
    /// `-α m̂ / (√v̂ + ε)`. A non-finite gradient leaves the state untouched.
    pub fn update(&mut self, gradient: &ControlMatrix, cfg: &AdamConfig) -> Result<ControlMatrix> {
        if gradient.shape() != self.m.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match Adam state {:?}",
                gradient.shape(),
                self.m.shape()
            )));
        }
        if !gradient.is_finite() {
            return Err(Error::Numerical {
                iteration: self.t,
                reason: "non-finite gradient passed to Adam".into(),
            });
        }
        self.t += 1;
        let bias1 = 1.0 - cfg.beta1.powf(self.t as f64);
        let bias2 = 1.0 - cfg.beta2.powf(self.t as f64);
        let (c, k) = gradient.shape();
        let mut delta = ControlMatrix::zeros(c, k);
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for (((mi, vi), &g), d) in m
            .iter_mut()
            .zip(v.iter_mut())
            .zip(gradient.as_slice())
            .zip(delta.as_mut_slice())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *d = -cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(delta)
    }
}
