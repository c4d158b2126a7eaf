// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Risk-sensitive reweighting of per-sample losses.
//!
//! A utility `V_μ` turns a batch of losses into normalized weights
//! `ω_i = V'_μ(L_i) / Σ_j V'_μ(L_j)`. Both supported families are evaluated in
//! log space, so the weights are a softmax of `μ L_i` (exponential) or of
//! `(μ - 1) ln L_i` (HARA).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Losses below this are clamped before taking `ln L` in the HARA family.
pub const HARA_LOSS_FLOOR: f64 = 1e-300;
/// Tolerance on `max ω(μ) - r*` accepted by [`solve_sensitivity`].
pub const SENSITIVITY_TOL: f64 = 1e-8;
/// Upper limit of the geometric bracket search for `μ`.
pub const SENSITIVITY_CAP: f64 = 1e12;
/// Batches whose loss spread is at or below this are treated as all-equal.
pub const DEGENERATE_SPREAD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    /// `V = exp(μ L)`.
    #[default]
    Exponential,
    /// `V = L^μ`.
    Hara,
}

impl UtilityFamily {
    /// Sensitivity at which the weights are uniform.
    pub fn neutral_mu(self) -> f64 {
        match self {
            UtilityFamily::Exponential => 0.0,
            UtilityFamily::Hara => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub family: UtilityFamily,
    pub mu: f64,
}

impl UtilitySpec {
    /// Accepts the risk-neutral limits `μ = 0` (exponential) and `μ = 1` (HARA).
    pub fn new(family: UtilityFamily, mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu < family.neutral_mu() {
            return Err(Error::invalid(format!(
                "{family:?} utility needs finite mu >= {}, got {mu}",
                family.neutral_mu()
            )));
        }
        Ok(Self { family, mu })
    }

    pub fn exponential(mu: f64) -> Result<Self> {
        Self::new(UtilityFamily::Exponential, mu)
    }

    pub fn hara(mu: f64) -> Result<Self> {
        Self::new(UtilityFamily::Hara, mu)
    }

    pub fn value(&self, loss: f64) -> f64 {
        match self.family {
            UtilityFamily::Exponential => (self.mu * loss).exp(),
            UtilityFamily::Hara => loss.powf(self.mu),
        }
    }

    pub fn derivative(&self, loss: f64) -> f64 {
        match self.family {
            UtilityFamily::Exponential => self.mu * (self.mu * loss).exp(),
            UtilityFamily::Hara => self.mu * loss.max(HARA_LOSS_FLOOR).powf(self.mu - 1.0),
        }
    }

    /// `ln V'(L)` up to an additive constant shared by every loss.
    fn log_weight(&self, loss: f64) -> f64 {
        match self.family {
            UtilityFamily::Exponential => self.mu * loss,
            UtilityFamily::Hara => (self.mu - 1.0) * loss.max(HARA_LOSS_FLOOR).ln(),
        }
    }
}

/// How a weight vector (or a solved sensitivity) came about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStatus {
    #[default]
    Regular,
    /// Every sample carries the same utility slope; weights fell back to uniform.
    Degenerate,
    /// The requested diversity is above what the batch can reach (tied maxima).
    Unreachable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub status: WeightStatus,
}

impl Weights {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_losses(losses: &[f64]) -> Result<()> {
    if losses.is_empty() {
        return Err(Error::invalid("loss batch is empty"));
    }
    if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::invalid(format!("loss must be finite, got {l}")));
    }
    Ok(())
}

fn softmax(logits: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let top = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|x| (x - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Normalized weights `ω_i ∝ V'_μ(L_i)`.
pub fn batch_weights(losses: &[f64], spec: &UtilitySpec) -> Result<Weights> {
    check_losses(losses)?;
    let m = losses.len();
    let degenerate = spec.family == UtilityFamily::Hara
        && spec.mu > 1.0
        && losses.iter().all(|&l| l <= 0.0);
    if degenerate {
        return Ok(Weights {
            values: vec![1.0 / m as f64; m],
            status: WeightStatus::Degenerate,
        });
    }
    Ok(Weights {
        values: softmax(losses.iter().map(|&l| spec.log_weight(l))),
        status: WeightStatus::Regular,
    })
}

/// `max_i ω_i - 1/M`.
pub fn diversity_degree(weights: &[f64]) -> f64 {
    let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top - 1.0 / weights.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivitySolution {
    pub mu: f64,
    pub status: WeightStatus,
}

/// Finds `μ` with `max_i ω_i(μ) = r*` by geometric bracketing followed by
/// bisection on the monotone map `μ ↦ max_i ω_i(μ)`.
pub fn solve_sensitivity(losses: &[f64], r_star: f64, family: UtilityFamily) -> Result<SensitivitySolution> {
    check_losses(losses)?;
    let m = losses.len();
    if m < 2 {
        return Err(Error::invalid("sensitivity solve needs at least two samples"));
    }
    let uniform = 1.0 / m as f64;
    if !(r_star >= uniform - 1e-12 && r_star <= 1.0) {
        return Err(Error::invalid(format!(
            "diversity target r* = {r_star} outside [1/M, 1] = [{uniform}, 1]"
        )));
    }
    let base = family.neutral_mu();
    let spread = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hara_all_zero = family == UtilityFamily::Hara && losses.iter().all(|&l| l <= 0.0);
    if spread <= DEGENERATE_SPREAD || hara_all_zero {
        let status = if r_star > uniform + 1e-9 {
            WeightStatus::Degenerate
        } else {
            WeightStatus::Regular
        };
        return Ok(SensitivitySolution { mu: base, status });
    }
    if r_star <= uniform + SENSITIVITY_TOL {
        return Ok(SensitivitySolution {
            mu: base,
            status: WeightStatus::Regular,
        });
    }

    let r = |mu: f64| -> f64 {
        let spec = UtilitySpec { family, mu };
        softmax(losses.iter().map(|&l| spec.log_weight(l)))
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let mut lo = base;
    let mut step = 1.0;
    let mut hi = base + step;
    while r(hi) < r_star {
        if hi >= SENSITIVITY_CAP {
            return Ok(SensitivitySolution {
                mu: hi,
                status: WeightStatus::Unreachable,
            });
        }
        lo = hi;
        step *= 2.0;
        hi = (base + step).min(SENSITIVITY_CAP);
    }

    let (mut best_mu, mut best_gap) = (hi, (r(hi) - r_star).abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = r(mid);
        let gap = (value - r_star).abs();
        if gap < best_gap {
            best_mu = mid;
            best_gap = gap;
        }
        if gap <= SENSITIVITY_TOL {
            break;
        }
        if value >= r_star {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SensitivitySolution {
        mu: best_mu,
        status: WeightStatus::Regular,
    })
}
