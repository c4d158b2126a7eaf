// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Stochastic training loops for fixed-sensitivity and adaptive-sensitivity
//! risk-sensitive GRAPE.
//!
//! Every iteration draws a fresh mini-batch from the training stream at
//! iteration coordinate `k`, evaluates per-sample losses and gradients,
//! reweights them and takes one Adam step. The loop state (control, Adam
//! moments, iteration counter, trace) is a plain value, so it can be saved
//! and resumed without changing the trajectory.

mod adam;
mod checkpoint;
mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{checkpoint, restore, Checkpoint, CHECKPOINT_VERSION};
pub use trace::{write_trace_csv, write_weights_csv, IterationRecord, TrainingTrace, TRACE_CSV_HEADER};

use crate::error::{Error, Result};
use crate::loss::{evaluate_batch, GateProblem, Sensitivity};
use crate::sampler::SampleStream;
use crate::system::ControlSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    RsFixed,
    RsAdaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub sensitivity: Sensitivity,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// When set, the step size decays geometrically from
    /// `adam.learning_rate` at iteration 0 to this value at `max_iterations`.
    pub learning_rate_final: Option<f64>,
    pub max_iterations: u64,
    /// Stop once the batch mean infidelity drops to this value.
    pub target_loss: Option<f64>,
    /// Store full weight vectors every this many iterations (0 disables).
    pub weights_every: u64,
    /// Symmetric bound applied to every amplitude after each step.
    pub amplitude_clip: Option<f64>,
}

impl OptimizerConfig {
    pub fn new(sensitivity: Sensitivity, batch_size: usize) -> Self {
        Self {
            sensitivity,
            batch_size,
            adam: AdamConfig::default(),
            learning_rate_final: None,
            max_iterations: 10_000,
            target_loss: None,
            weights_every: 10,
            amplitude_clip: None,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.sensitivity {
            Sensitivity::Fixed(_) => Algorithm::RsFixed,
            Sensitivity::Adaptive { .. } => Algorithm::RsAdaptive,
        }
    }

    /// Adam settings in effect at iteration `k`.
    pub fn adam_at(&self, k: u64) -> AdamConfig {
        let mut adam = self.adam;
        if let Some(last) = self.learning_rate_final {
            let frac = if self.max_iterations == 0 {
                0.0
            } else {
                (k as f64 / self.max_iterations as f64).min(1.0)
            };
            adam.learning_rate *= (last / self.adam.learning_rate).powf(frac);
        }
        adam
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.adam.validate()?;
        if let Sensitivity::Adaptive { r_star, .. } = self.sensitivity {
            let lo = 1.0 / self.batch_size as f64;
            if !(r_star >= lo - 1e-12 && r_star <= 1.0) {
                return Err(Error::invalid(format!(
                    "r_star = {r_star} outside [1/M, 1] = [{lo}, 1]"
                )));
            }
        }
        if let Some(lr) = self.learning_rate_final {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("final learning rate must be positive, got {lr}")));
            }
        }
        if let Some(clip) = self.amplitude_clip {
            if !(clip > 0.0) {
                return Err(Error::invalid(format!("amplitude clip must be positive, got {clip}")));
            }
        }
        Ok(())
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub schedule: ControlSchedule,
    pub adam: AdamState,
    /// Index of the next iteration to run.
    pub iteration: u64,
    pub records: Vec<IterationRecord>,
}

impl TrainerState {
    pub fn initial(schedule: ControlSchedule) -> Self {
        let adam = AdamState::new(schedule.channels(), schedule.slices());
        Self {
            schedule,
            adam,
            iteration: 0,
            records: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    TargetLoss,
}

pub struct Trainer<'a> {
    problem: &'a GateProblem,
    stream: SampleStream,
    config: OptimizerConfig,
    state: TrainerState,
    started: Instant,
    stop: Option<StopReason>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        problem: &'a GateProblem,
        initial: ControlSchedule,
        stream: SampleStream,
        config: OptimizerConfig,
    ) -> Result<Self> {
        Self::resume(problem, TrainerState::initial(initial), stream, config)
    }

    pub fn resume(
        problem: &'a GateProblem,
        state: TrainerState,
        stream: SampleStream,
        config: OptimizerConfig,
    ) -> Result<Self> {
        config.validate()?;
        problem.model().check_schedule(&state.schedule)?;
        if stream.spec().dim() < problem.model().uncertainty_dim() {
            return Err(Error::invalid(format!(
                "uncertainty distribution has {} dimensions but the model reads {}",
                stream.spec().dim(),
                problem.model().uncertainty_dim()
            )));
        }
        Ok(Self {
            problem,
            stream,
            config,
            state,
            started: Instant::now(),
            stop: None,
        })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn stream(&self) -> &SampleStream {
        &self.stream
    }

    pub fn is_finished(&self) -> bool {
        self.stop.is_some() || self.state.iteration >= self.config.max_iterations
    }

    /// Runs one iteration. On error the state is left at the last good
    /// iteration.
    pub fn step(&mut self) -> Result<()> {
        let k = self.state.iteration;
        let numerical = |reason: String| Error::Numerical { iteration: k, reason };

        let batch = self.stream.draw_batch(k, self.config.batch_size);
        let eval = evaluate_batch(self.problem, &self.state.schedule, &batch, &self.config.sensitivity)
            .map_err(|e| match e {
                Error::EigenNonConvergence { .. } | Error::Numerical { .. } => numerical(e.to_string()),
                other => other,
            })?;
        if eval.losses.iter().any(|l| !l.is_finite()) || !eval.gradient.is_finite() {
            return Err(numerical("non-finite loss or gradient".into()));
        }

        let keep_weights = self.config.weights_every > 0 && k % self.config.weights_every == 0;
        let record = IterationRecord {
            iteration: k,
            j_mean: eval.j_mean(),
            j_max: eval.j_max(),
            mu: eval.mu_used,
            max_weight: eval.max_weight(),
            grad_norm: eval.gradient.norm(),
            status: eval.status,
            weights: keep_weights.then(|| eval.weights.clone()),
            losses: eval.losses,
        };

        let reached = self.config.target_loss.is_some_and(|t| record.j_mean <= t);
        if !reached {
            let mut adam = self.state.adam.clone();
            let delta = adam
                .update(&eval.gradient, &self.config.adam_at(k))
                .map_err(|e| numerical(e.to_string()))?;
            let mut schedule = self.state.schedule.clone();
            schedule.amplitudes_mut().add_scaled(1.0, &delta);
            if let Some(clip) = self.config.amplitude_clip {
                schedule.clip(clip);
            }
            if !schedule.amplitudes().is_finite() {
                return Err(numerical("control amplitudes became non-finite".into()));
            }
            self.state.adam = adam;
            self.state.schedule = schedule;
        } else {
            self.stop = Some(StopReason::TargetLoss);
        }
        self.state.records.push(record);
        self.state.iteration += 1;
        Ok(())
    }

    /// Runs to completion, calling `hook` after every iteration.
    pub fn run_with(&mut self, mut hook: impl FnMut(&TrainerState) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
            hook(&self.state)?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_| Ok(()))
    }

    pub fn into_trace(self) -> TrainingTrace {
        let stop = self.stop.unwrap_or(StopReason::MaxIterations);
        TrainingTrace {
            records: self.state.records,
            schedule: self.state.schedule,
            stop,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// Fixed-sensitivity training.
pub fn run_rs_grape(
    problem: &GateProblem,
    initial: ControlSchedule,
    stream: SampleStream,
    config: OptimizerConfig,
) -> Result<TrainingTrace> {
    if config.algorithm() != Algorithm::RsFixed {
        return Err(Error::invalid("run_rs_grape needs a fixed sensitivity"));
    }
    let mut trainer = Trainer::new(problem, initial, stream, config)?;
    trainer.run()?;
    Ok(trainer.into_trace())
}

/// Training with `μ` re-solved on every batch to hit the diversity target.
pub fn run_adaptive_rs_grape(
    problem: &GateProblem,
    initial: ControlSchedule,
    stream: SampleStream,
    config: OptimizerConfig,
) -> Result<TrainingTrace> {
    if config.algorithm() != Algorithm::RsAdaptive {
        return Err(Error::invalid("run_adaptive_rs_grape needs a diversity target"));
    }
    let mut trainer = Trainer::new(problem, initial, stream, config)?;
    trainer.run()?;
    Ok(trainer.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{batch_weights, InfidelityVariant, UtilityFamily, UtilitySpec};
    use crate::sampler::{DistributionSpec, StreamTag};
    use crate::system::{three_qubit_preset, toffoli_gate, PulseShape};
    use crate::system::initial_schedule;
    use crate::tensor::{pauli_string, Pauli};
    use crate::system::{ControlMatrix, DriftTerm, SystemModel};

    /// Two qubits, ZZ coupling with uncertainty, a CNOT-like target; small
    /// enough for fast loop tests.
    fn small_problem() -> GateProblem {
        let zz = pauli_string(&[(1, Pauli::Z), (2, Pauli::Z)], 2).unwrap();
        let controls = [(1, Pauli::X), (1, Pauli::Y), (2, Pauli::X), (2, Pauli::Y)]
            .iter()
            .map(|&f| pauli_string(&[f], 2).unwrap())
            .collect();
        let model = SystemModel::new(
            vec![DriftTerm {
                operator: zz,
                coefficient: 8.0,
                uncertainty: Some(0),
            }],
            controls,
        )
        .unwrap();
        let target = crate::tensor::CMatrix::from_fn(4, |i, j| {
            let perm = [0, 1, 3, 2];
            if perm[j] == i { 1.0.into() } else { 0.0.into() }
        });
        GateProblem::new(model, target, InfidelityVariant::PhaseInsensitive).unwrap()
    }

    fn small_start() -> ControlSchedule {
        initial_schedule(5, &PulseShape::with_default_ranges(4, 12, 0.5)).unwrap()
    }

    fn stream(dim: usize, seed: u64) -> SampleStream {
        SampleStream::new(DistributionSpec::uniform_box(dim, -0.2, 0.2).unwrap(), seed, StreamTag::Train)
    }

    #[test]
    fn zero_iterations_returns_the_start() {
        let p = small_problem();
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 4);
        cfg.max_iterations = 0;
        let trace = run_rs_grape(&p, small_start(), stream(1, 1), cfg).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.schedule, small_start());
    }

    #[test]
    fn single_sample_matches_plain_stochastic_grape() {
        let p = small_problem();
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(123.0).unwrap()), 1);
        cfg.max_iterations = 5;
        let s = stream(1, 9);
        let trace = run_rs_grape(&p, small_start(), s.clone(), cfg.clone()).unwrap();

        let mut sched = small_start();
        let mut adam = AdamState::new(4, 12);
        for k in 0..5 {
            let sample = &s.draw_batch(k, 1)[0];
            let (loss, grad) = p.loss_and_gradient(&sched, sample).unwrap();
            assert_eq!(trace.records[k as usize].losses, vec![loss]);
            let delta = adam.update(&grad, &cfg.adam).unwrap();
            sched.amplitudes_mut().add_scaled(1.0, &delta);
        }
        assert_eq!(trace.schedule, sched);
        assert!(trace.records.iter().all(|r| r.max_weight == 1.0));
    }

    #[test]
    fn trace_statistics_match_stored_losses() {
        let p = small_problem();
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(10.0).unwrap()), 5);
        cfg.max_iterations = 12;
        cfg.weights_every = 4;
        let trace = run_rs_grape(&p, small_start(), stream(1, 2), cfg).unwrap();
        assert_eq!(trace.records.len(), 12);
        for r in &trace.records {
            let mean = r.losses.iter().sum::<f64>() / r.losses.len() as f64;
            let max = r.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(r.j_mean, mean);
            assert_eq!(r.j_max, max);
            assert_eq!(r.weights.is_some(), r.iteration % 4 == 0);
            let w = batch_weights(&r.losses, &UtilitySpec::exponential(10.0).unwrap()).unwrap();
            assert!((w.max() - r.max_weight).abs() < 1e-15);
        }
    }

    #[test]
    fn adaptive_mu_is_reproducible_from_stored_losses() {
        let p = small_problem();
        let sens = Sensitivity::Adaptive {
            family: UtilityFamily::Exponential,
            r_star: 0.5,
        };
        let mut cfg = OptimizerConfig::new(sens, 6);
        cfg.max_iterations = 10;
        let trace = run_adaptive_rs_grape(&p, small_start(), stream(1, 4), cfg).unwrap();
        for r in &trace.records {
            let mu = sens.resolve(&r.losses).unwrap().0.mu;
            assert!((mu - r.mu).abs() <= 1e-6 * r.mu.abs().max(1e-300));
            assert!((r.max_weight - 0.5).abs() <= 1e-8);
        }
    }

    #[test]
    fn target_loss_stops_early() {
        let p = small_problem();
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        cfg.max_iterations = 50;
        cfg.target_loss = Some(1.1);
        let trainer_trace = run_rs_grape(&p, small_start(), stream(1, 1), cfg).unwrap();
        assert_eq!(trainer_trace.records.len(), 1);
        assert_eq!(trainer_trace.stop, StopReason::TargetLoss);
        assert_eq!(trainer_trace.schedule, small_start());
    }

    #[test]
    fn runners_check_the_mode() {
        let p = small_problem();
        let fixed = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        let adaptive = OptimizerConfig::new(
            Sensitivity::Adaptive {
                family: UtilityFamily::Exponential,
                r_star: 0.5,
            },
            2,
        );
        assert!(run_adaptive_rs_grape(&p, small_start(), stream(1, 1), fixed).is_err());
        assert!(run_rs_grape(&p, small_start(), stream(1, 1), adaptive).is_err());
        let bad = OptimizerConfig::new(
            Sensitivity::Adaptive {
                family: UtilityFamily::Exponential,
                r_star: 0.1,
            },
            2,
        );
        assert!(run_adaptive_rs_grape(&p, small_start(), stream(1, 1), bad).is_err());
    }

    #[test]
    fn plain_gradient_steps_descend_on_a_fixed_batch() {
        let p = GateProblem::new(three_qubit_preset(), toffoli_gate(), InfidelityVariant::PhaseInsensitive).unwrap();
        let mut sched = initial_schedule(3, &PulseShape::with_default_ranges(6, 20, 1.0)).unwrap();
        let batch = stream(2, 8).draw_batch(0, 4);
        let sens = Sensitivity::Fixed(UtilitySpec::exponential(2.0).unwrap());
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let eval = evaluate_batch(&p, &sched, &batch, &sens).unwrap();
            assert!(eval.rs_loss <= prev);
            prev = eval.rs_loss;
            sched.amplitudes_mut().add_scaled(-20.0, &eval.gradient);
        }
    }

    #[test]
    fn learning_rate_decays_geometrically() {
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        cfg.adam.learning_rate = 1.0;
        assert_eq!(cfg.adam_at(500).learning_rate, 1.0);
        cfg.learning_rate_final = Some(0.01);
        cfg.max_iterations = 1000;
        assert_eq!(cfg.adam_at(0).learning_rate, 1.0);
        assert!((cfg.adam_at(500).learning_rate - 0.1).abs() < 1e-15);
        assert!((cfg.adam_at(1000).learning_rate - 0.01).abs() < 1e-15);
        cfg.learning_rate_final = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn clipping_bounds_amplitudes() {
        let p = small_problem();
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        cfg.max_iterations = 3;
        cfg.amplitude_clip = Some(2.0);
        let trace = run_rs_grape(&p, small_start(), stream(1, 1), cfg).unwrap();
        assert!(trace.schedule.amplitudes().as_slice().iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn numerical_failure_keeps_last_good_state() {
        let p = small_problem();
        let mut start = small_start();
        start.amplitudes_mut().set(0, 0, 1e308);
        let mut cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        cfg.max_iterations = 3;
        let mut trainer = Trainer::new(&p, start.clone(), stream(1, 1), cfg).unwrap();
        let err = trainer.run().unwrap_err();
        assert!(matches!(err, Error::Numerical { iteration: 0, .. }), "{err}");
        assert_eq!(trainer.state().schedule, start);
        assert_eq!(trainer.state().iteration, 0);
    }

    #[test]
    fn mismatched_schedule_is_rejected() {
        let p = small_problem();
        let cfg = OptimizerConfig::new(Sensitivity::Fixed(UtilitySpec::exponential(1.0).unwrap()), 2);
        let wrong = ControlSchedule::new(ControlMatrix::zeros(3, 4), 1.0).unwrap();
        assert!(Trainer::new(&p, wrong, stream(1, 1), cfg).is_err());
    }
}
