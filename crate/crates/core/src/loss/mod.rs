// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Per-sample gate losses and the risk-sensitive batch objective built on them.

mod gate;
mod risk;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gate::{infidelity, infidelity_gradient, GateProblem, InfidelityVariant};
pub use risk::{
    batch_weights, diversity_degree, solve_sensitivity, SensitivitySolution, UtilityFamily, UtilitySpec,
    WeightStatus, Weights, DEGENERATE_SPREAD, HARA_LOSS_FLOOR, SENSITIVITY_CAP, SENSITIVITY_TOL,
};

use crate::error::{Error, Result};
use crate::system::{ControlMatrix, ControlSchedule, UncertaintySample};

/// Fixed sensitivity or a diversity target re-solved on every batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sensitivity {
    Fixed(UtilitySpec),
    Adaptive { family: UtilityFamily, r_star: f64 },
}

impl Sensitivity {
    pub fn family(&self) -> UtilityFamily {
        match self {
            Sensitivity::Fixed(spec) => spec.family,
            Sensitivity::Adaptive { family, .. } => *family,
        }
    }

    /// Utility used on `losses`, together with how it was obtained.
    pub fn resolve(&self, losses: &[f64]) -> Result<(UtilitySpec, WeightStatus)> {
        match *self {
            Sensitivity::Fixed(spec) => Ok((spec, WeightStatus::Regular)),
            Sensitivity::Adaptive { family, r_star } => {
                let sol = solve_sensitivity(losses, r_star, family)?;
                Ok((UtilitySpec::new(family, sol.mu)?, sol.status))
            }
        }
    }
}

/// `Σ_i ω_i ∇L_i`, summed in sample order.
pub fn weighted_gradient(weights: &[f64], gradients: &[ControlMatrix]) -> Result<ControlMatrix> {
    let first = gradients
        .first()
        .ok_or_else(|| Error::invalid("weighted gradient of an empty batch"))?;
    if weights.len() != gradients.len() {
        return Err(Error::DimensionMismatch {
            expected: gradients.len(),
            found: weights.len(),
        });
    }
    let (c, k) = first.shape();
    let mut out = ControlMatrix::zeros(c, k);
    for (w, g) in weights.iter().zip(gradients) {
        if g.shape() != (c, k) {
            return Err(Error::invalid("gradient shapes differ within the batch"));
        }
        out.add_scaled(*w, g);
    }
    Ok(out)
}

/// Everything computed for one mini-batch at one control.
#[derive(Clone, Debug)]
pub struct BatchEvaluation {
    pub losses: Vec<f64>,
    pub gradients: Vec<ControlMatrix>,
    pub weights: Vec<f64>,
    pub mu_used: f64,
    pub status: WeightStatus,
    /// `(1/M) Σ_i V_μ(L_i)`.
    pub rs_loss: f64,
    /// Normalized risk-sensitive gradient `Σ_i ω_i ∇L_i`.
    pub gradient: ControlMatrix,
}

impl BatchEvaluation {
    pub fn j_mean(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    pub fn j_max(&self) -> f64 {
        self.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Losses and gradients for every sample (in parallel), then the weights and
/// the weighted gradient (in sample order).
pub fn evaluate_batch(
    problem: &GateProblem,
    schedule: &ControlSchedule,
    samples: &[UncertaintySample],
    sensitivity: &Sensitivity,
) -> Result<BatchEvaluation> {
    if samples.is_empty() {
        return Err(Error::invalid("mini-batch is empty"));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| problem.loss_and_gradient(schedule, s))
        .collect::<Result<Vec<_>>>()?;
    let (losses, gradients): (Vec<f64>, Vec<ControlMatrix>) = per_sample.into_iter().unzip();

    let (spec, solve_status) = match sensitivity {
        Sensitivity::Adaptive { .. } if losses.len() == 1 => {
            (UtilitySpec::new(sensitivity.family(), sensitivity.family().neutral_mu())?, WeightStatus::Regular)
        }
        _ => sensitivity.resolve(&losses)?,
    };
    let weights = batch_weights(&losses, &spec)?;
    let status = match (solve_status, weights.status) {
        (WeightStatus::Regular, s) => s,
        (s, _) => s,
    };
    let gradient = weighted_gradient(&weights.values, &gradients)?;
    let rs_loss = losses.iter().map(|&l| spec.value(l)).sum::<f64>() / losses.len() as f64;
    Ok(BatchEvaluation {
        losses,
        gradients,
        weights: weights.values,
        mu_used: spec.mu,
        status,
        rs_loss,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{three_qubit_preset, toffoli_gate, ControlMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_setup(seed: u64, m: usize) -> (GateProblem, ControlSchedule, Vec<UncertaintySample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..6 * 6).map(|_| rng.gen_range(-40.0..40.0)).collect();
        let sched = ControlSchedule::new(ControlMatrix::from_row_major(6, 6, amps).unwrap(), 0.3).unwrap();
        let samples = (0..m)
            .map(|_| UncertaintySample::new(vec![rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)]))
            .collect();
        let problem =
            GateProblem::new(three_qubit_preset(), toffoli_gate(), InfidelityVariant::PhaseInsensitive).unwrap();
        (problem, sched, samples)
    }

    fn rel_diff(a: &ControlMatrix, b: &ControlMatrix) -> f64 {
        let mut d = a.clone();
        d.add_scaled(-1.0, b);
        d.norm() / b.norm()
    }

    #[test]
    fn single_sample_batch_uses_its_own_gradient() {
        let (p, s, samples) = random_setup(1, 1);
        let eval = evaluate_batch(&p, &s, &samples, &Sensitivity::Fixed(UtilitySpec::exponential(37.0).unwrap()))
            .unwrap();
        assert_eq!(eval.weights, vec![1.0]);
        assert_eq!(eval.gradient, eval.gradients[0]);
    }

    #[test]
    fn tiny_mu_is_the_uniform_average() {
        let (p, s, samples) = random_setup(2, 4);
        let eval = evaluate_batch(&p, &s, &samples, &Sensitivity::Fixed(UtilitySpec::exponential(1e-12).unwrap()))
            .unwrap();
        let avg = weighted_gradient(&[0.25; 4], &eval.gradients).unwrap();
        assert!(rel_diff(&eval.gradient, &avg) <= 1e-10);
    }

    #[test]
    fn weighted_gradient_matches_finite_difference_sum() {
        let (p, s, samples) = random_setup(3, 4);
        let spec = UtilitySpec::exponential(5.0).unwrap();
        let eval = evaluate_batch(&p, &s, &samples, &Sensitivity::Fixed(spec)).unwrap();
        let h = 1e-6;
        let mut oracle = ControlMatrix::zeros(6, 6);
        let mut rs_fd = ControlMatrix::zeros(6, 6);
        let rs_loss = |sched: &ControlSchedule| -> f64 {
            samples.iter().map(|e| spec.value(p.infidelity(sched, e).unwrap())).sum::<f64>() / 4.0
        };
        for c in 0..6 {
            for j in 0..6 {
                let mut plus = s.clone();
                let mut minus = s.clone();
                let u = s.amplitudes().get(c, j);
                plus.amplitudes_mut().set(c, j, u + h);
                minus.amplitudes_mut().set(c, j, u - h);
                let mut acc = 0.0;
                for (w, e) in eval.weights.iter().zip(&samples) {
                    let d = (p.infidelity(&plus, e).unwrap() - p.infidelity(&minus, e).unwrap()) / (2.0 * h);
                    acc += w * d;
                }
                oracle.set(c, j, acc);
                rs_fd.set(c, j, (rs_loss(&plus) - rs_loss(&minus)) / (2.0 * h));
            }
        }
        assert!(rel_diff(&eval.gradient, &oracle) <= 1e-5);
        // ∇F̂ = (1/M) Σ V'(L_j) · g_μ
        let scale = eval.losses.iter().map(|&l| spec.derivative(l)).sum::<f64>() / 4.0;
        let mut rescaled = ControlMatrix::zeros(6, 6);
        rescaled.add_scaled(scale, &eval.gradient);
        assert!(rel_diff(&rescaled, &rs_fd) <= 1e-5);
        let mean_v = eval.losses.iter().map(|&l| spec.value(l)).sum::<f64>() / 4.0;
        assert!((eval.rs_loss - mean_v).abs() <= 1e-12 * mean_v);
    }

    #[test]
    fn large_mu_follows_the_worst_sample() {
        let (p, s, samples) = random_setup(4, 5);
        let eval = evaluate_batch(&p, &s, &samples, &Sensitivity::Fixed(UtilitySpec::exponential(1e6).unwrap()))
            .unwrap();
        assert!(eval.max_weight() > 1.0 - 1e-6);
        let worst = (0..5).max_by(|&a, &b| eval.losses[a].total_cmp(&eval.losses[b])).unwrap();
        assert!(rel_diff(&eval.gradient, &eval.gradients[worst]) <= 1e-5);
    }

    #[test]
    fn adaptive_batch_hits_target_diversity() {
        let (p, s, samples) = random_setup(5, 6);
        let eval = evaluate_batch(
            &p,
            &s,
            &samples,
            &Sensitivity::Adaptive {
                family: UtilityFamily::Exponential,
                r_star: 0.4,
            },
        )
        .unwrap();
        assert!((eval.max_weight() - 0.4).abs() <= 1e-8);
        assert!((eval.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn weighted_gradient_rejects_bad_input() {
        assert!(weighted_gradient(&[], &[]).is_err());
        let g = ControlMatrix::zeros(2, 2);
        assert!(weighted_gradient(&[0.5, 0.5], &[g]).is_err());
    }
}
