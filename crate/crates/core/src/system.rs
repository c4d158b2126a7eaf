// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Uncertainty-parameterized control systems
//! `H(t; u, ε) = Σ_m (1 + ε_idx(m)) J_m H_m + Σ_c u_c(t) H_c`.
//!
//! Time is measured in μs and every coefficient is stored as an angular
//! frequency in rad/μs.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{pauli_string, CMatrix, Hermitian, Pauli};

/// How frequencies quoted in MHz map onto angular coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    /// `f` MHz means `2π f` rad/μs.
    #[default]
    Cyclic,
    /// `f` MHz is taken as `f` rad/μs.
    Angular,
}

impl FrequencyConvention {
    pub fn to_angular(self, mhz: f64) -> f64 {
        match self {
            FrequencyConvention::Cyclic => TAU * mhz,
            FrequencyConvention::Angular => mhz,
        }
    }
}

/// Dense real matrix of shape channels × slices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMatrix {
    channels: usize,
    slices: usize,
    values: Vec<f64>,
}

impl ControlMatrix {
    pub fn zeros(channels: usize, slices: usize) -> Self {
        Self {
            channels,
            slices,
            values: vec![0.0; channels * slices],
        }
    }

    pub fn from_row_major(channels: usize, slices: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * slices {
            return Err(Error::DimensionMismatch {
                expected: channels * slices,
                found: values.len(),
            });
        }
        Ok(Self {
            channels,
            slices,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.slices)
    }

    #[inline]
    pub fn get(&self, channel: usize, slice: usize) -> f64 {
        self.values[channel * self.slices + slice]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, slice: usize, value: f64) {
        self.values[channel * self.slices + slice] = value;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.values[channel * self.slices..(channel + 1) * self.slices]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ControlMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Piecewise-constant control amplitudes (rad/μs) over a total duration (μs).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    amplitudes: ControlMatrix,
    duration: f64,
}

impl ControlSchedule {
    pub fn new(amplitudes: ControlMatrix, duration: f64) -> Result<Self> {
        if amplitudes.channels == 0 || amplitudes.slices == 0 {
            return Err(Error::invalid(
                "control schedule needs at least one channel and one slice",
            ));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        if !amplitudes.is_finite() {
            return Err(Error::invalid("control amplitudes must be finite"));
        }
        Ok(Self {
            amplitudes,
            duration,
        })
    }

    pub fn zeros(channels: usize, slices: usize, duration: f64) -> Result<Self> {
        Self::new(ControlMatrix::zeros(channels, slices), duration)
    }

    pub fn amplitudes(&self) -> &ControlMatrix {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut ControlMatrix {
        &mut self.amplitudes
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn channels(&self) -> usize {
        self.amplitudes.channels
    }

    pub fn slices(&self) -> usize {
        self.amplitudes.slices
    }

    /// Uniform slice width `T / K`.
    pub fn dt(&self) -> f64 {
        self.duration / self.amplitudes.slices as f64
    }

    /// Symmetric clipping of every amplitude to `[-limit, limit]`.
    pub fn clip(&mut self, limit: f64) {
        for v in self.amplitudes.as_mut_slice() {
            *v = v.clamp(-limit, limit);
        }
    }
}

/// Relative deviations of the uncertain model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintySample {
    pub epsilon: Vec<f64>,
}

impl UncertaintySample {
    pub fn new(epsilon: Vec<f64>) -> Self {
        Self { epsilon }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            epsilon: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.epsilon.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftTerm {
    pub operator: Hermitian,
    /// Nominal coefficient `J_m` in rad/μs.
    pub coefficient: f64,
    /// Zero-based index into the uncertainty vector, if the term is uncertain.
    pub uncertainty: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    dim: usize,
    drift: Vec<DriftTerm>,
    controls: Vec<Hermitian>,
    uncertainty_dim: usize,
}

impl SystemModel {
    pub fn new(drift: Vec<DriftTerm>, controls: Vec<Hermitian>) -> Result<Self> {
        let dim = controls
            .first()
            .map(Hermitian::dim)
            .or_else(|| drift.first().map(|t| t.operator.dim()))
            .ok_or_else(|| Error::invalid("system model has no terms"))?;
        if dim < 2 {
            return Err(Error::invalid("Hilbert space dimension must be at least 2"));
        }
        if controls.is_empty() {
            return Err(Error::invalid("system model needs at least one control term"));
        }
        for op in drift.iter().map(|t| &t.operator).chain(&controls) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
        }
        if let Some(t) = drift.iter().find(|t| !t.coefficient.is_finite()) {
            return Err(Error::invalid(format!(
                "drift coefficient must be finite, got {}",
                t.coefficient
            )));
        }
        let uncertainty_dim = drift
            .iter()
            .filter_map(|t| t.uncertainty)
            .map(|m| m + 1)
            .max()
            .unwrap_or(0);
        Ok(Self {
            dim,
            drift,
            controls,
            uncertainty_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift_terms(&self) -> &[DriftTerm] {
        &self.drift
    }

    pub fn controls(&self) -> &[Hermitian] {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// Number of uncertainty coordinates the model reads (`max index + 1`).
    pub fn uncertainty_dim(&self) -> usize {
        self.uncertainty_dim
    }

    pub fn check_sample(&self, sample: &UncertaintySample) -> Result<()> {
        if sample.dim() != self.uncertainty_dim {
            return Err(Error::DimensionMismatch {
                expected: self.uncertainty_dim,
                found: sample.dim(),
            });
        }
        Ok(())
    }

    pub fn check_schedule(&self, schedule: &ControlSchedule) -> Result<()> {
        if schedule.channels() != self.controls.len() {
            return Err(Error::DimensionMismatch {
                expected: self.controls.len(),
                found: schedule.channels(),
            });
        }
        Ok(())
    }

    /// `Σ_m (1 + ε_idx(m)) J_m H_m`.
    pub fn drift_hamiltonian(&self, sample: &UncertaintySample) -> Result<Hermitian> {
        self.check_sample(sample)?;
        let mut h = Hermitian::zeros(self.dim);
        for term in &self.drift {
            let factor = term.uncertainty.map_or(1.0, |m| 1.0 + sample.epsilon[m]);
            h.add_scaled(factor * term.coefficient, &term.operator);
        }
        Ok(h)
    }

    /// Hamiltonian of slice `slice` (zero-based) under `sample`.
    pub fn slice_hamiltonian(
        &self,
        schedule: &ControlSchedule,
        slice: usize,
        sample: &UncertaintySample,
    ) -> Result<Hermitian> {
        self.check_schedule(schedule)?;
        if slice >= schedule.slices() {
            return Err(Error::invalid(format!(
                "slice index {slice} out of range 0..{}",
                schedule.slices()
            )));
        }
        let drift = self.drift_hamiltonian(sample)?;
        Ok(self.add_controls(&drift, schedule, slice))
    }

    /// `drift + Σ_c u_{c,slice} H_c` without revalidating shapes.
    pub(crate) fn add_controls(
        &self,
        drift: &Hermitian,
        schedule: &ControlSchedule,
        slice: usize,
    ) -> Hermitian {
        let mut h = drift.clone();
        for (c, op) in self.controls.iter().enumerate() {
            let u = schedule.amplitudes().get(c, slice);
            if u != 0.0 {
                h.add_scaled(u, op);
            }
        }
        h
    }
}

/// Nominal coupling strength of the three-qubit preset, in MHz.
pub const PRESET_COUPLING_MHZ: f64 = 10.0;

/// Three qubits in a chain with uncertain ZZ couplings and x/y drives on every
/// qubit. Controls are ordered `(u1x, u1y, u2x, u2y, u3x, u3y)`.
pub fn three_qubit_preset() -> SystemModel {
    three_qubit_preset_with(FrequencyConvention::Cyclic, PRESET_COUPLING_MHZ)
}

pub fn three_qubit_preset_with(convention: FrequencyConvention, coupling_mhz: f64) -> SystemModel {
    let j = convention.to_angular(coupling_mhz);
    let zz = |a, b| pauli_string(&[(a, Pauli::Z), (b, Pauli::Z)], 3).expect("valid preset");
    let drift = vec![
        DriftTerm {
            operator: zz(1, 2),
            coefficient: j,
            uncertainty: Some(0),
        },
        DriftTerm {
            operator: zz(2, 3),
            coefficient: j,
            uncertainty: Some(1),
        },
    ];
    let controls = (1..=3)
        .flat_map(|q| [Pauli::X, Pauli::Y].map(|p| pauli_string(&[(q, p)], 3).expect("valid preset")))
        .collect();
    SystemModel::new(drift, controls).expect("valid preset")
}

/// Controlled-controlled-NOT with qubits 1 and 2 as controls and qubit 3 as
/// target: swaps `|110⟩` and `|111⟩`.
pub fn toffoli_gate() -> CMatrix {
    CMatrix::from_fn(8, |i, j| {
        let target = match j {
            6 => 7,
            7 => 6,
            other => other,
        };
        if i == target {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Parameters of one sinusoidal seed pulse pair
/// `u_x = A sin(ωt + φ)`, `u_y = A cos(ωt + φ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Samples each sinusoid pair at slice midpoints.
pub fn sinusoid_schedule(pairs: &[Sinusoid], slices: usize, duration: f64) -> Result<ControlSchedule> {
    let mut amps = ControlMatrix::zeros(2 * pairs.len(), slices);
    let dt = duration / slices as f64;
    for (k, s) in pairs.iter().enumerate() {
        for j in 0..slices {
            let arg = s.frequency * (j as f64 + 0.5) * dt + s.phase;
            amps.set(2 * k, j, s.amplitude * arg.sin());
            amps.set(2 * k + 1, j, s.amplitude * arg.cos());
        }
    }
    ControlSchedule::new(amps, duration)
}

/// Shape and randomization ranges of the seed pulse (rates in rad/μs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseShape {
    pub channels: usize,
    pub slices: usize,
    pub duration: f64,
    /// `A_k ~ U(0, amplitude_max)`.
    pub amplitude_max: f64,
    /// `ω_k ~ U(0, frequency_max)`.
    pub frequency_max: f64,
}

impl PulseShape {
    /// Ranges `A_k, ω_k ∈ [0, 2π·5)` rad/μs for the given grid.
    pub fn with_default_ranges(channels: usize, slices: usize, duration: f64) -> Self {
        Self {
            channels,
            slices,
            duration,
            amplitude_max: TAU * 5.0,
            frequency_max: TAU * 5.0,
        }
    }
}

/// Random sinusoidal seed pulse; `φ_k ~ U(0, 2π)`.
pub fn initial_schedule(seed: u64, shape: &PulseShape) -> Result<ControlSchedule> {
    if shape.channels % 2 != 0 {
        return Err(Error::invalid(format!(
            "seed pulses come in (x, y) pairs, got {} channels",
            shape.channels
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<Sinusoid> = (0..shape.channels / 2)
        .map(|_| Sinusoid {
            amplitude: shape.amplitude_max * rng.gen::<f64>(),
            frequency: shape.frequency_max * rng.gen::<f64>(),
            phase: TAU * rng.gen::<f64>(),
        })
        .collect();
    sinusoid_schedule(&pairs, shape.slices, shape.duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SpectralCache;
    use rand::Rng;

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        let err = (a - b).frobenius_norm();
        assert!(err <= tol, "‖a - b‖ = {err:e}");
    }

    #[test]
    fn nominal_preset_drift() {
        let model = three_qubit_preset();
        let sched = ControlSchedule::zeros(6, 4, 1.0).unwrap();
        let h = model
            .slice_hamiltonian(&sched, 0, &UncertaintySample::zeros(2))
            .unwrap();
        let j = TAU * 10.0;
        let z12 = pauli_string(&[(1, Pauli::Z), (2, Pauli::Z)], 3).unwrap();
        let z23 = pauli_string(&[(2, Pauli::Z), (3, Pauli::Z)], 3).unwrap();
        let want = &z12.matrix().scale(j.into()) + &z23.matrix().scale(j.into());
        assert_close(h.matrix(), &want, 1e-12);
    }

    #[test]
    fn fully_negative_deviation_removes_uncertain_drift() {
        let model = three_qubit_preset();
        let sched = ControlSchedule::zeros(6, 1, 1.0).unwrap();
        let h = model
            .slice_hamiltonian(&sched, 0, &UncertaintySample::new(vec![-1.0, -1.0]))
            .unwrap();
        assert_eq!(h.matrix().max_abs(), 0.0);
    }

    #[test]
    fn single_qubit_control_assembly() {
        let x = pauli_string(&[(1, Pauli::X)], 1).unwrap();
        let model = SystemModel::new(vec![], vec![x]).unwrap();
        let sched = ControlSchedule::new(ControlMatrix::from_row_major(1, 2, vec![0.0, 3.0]).unwrap(), 1.0)
            .unwrap();
        let h = model
            .slice_hamiltonian(&sched, 1, &UncertaintySample::zeros(0))
            .unwrap();
        let mut oracle = CMatrix::zeros(2);
        oracle[(0, 1)] = 3.0.into();
        oracle[(1, 0)] = 3.0.into();
        assert_eq!(h.matrix(), &oracle);
    }

    #[test]
    fn slice_hamiltonian_validates_inputs() {
        let model = three_qubit_preset();
        let sched = ControlSchedule::zeros(6, 3, 1.0).unwrap();
        assert!(model.slice_hamiltonian(&sched, 3, &UncertaintySample::zeros(2)).is_err());
        assert!(model.slice_hamiltonian(&sched, 0, &UncertaintySample::zeros(1)).is_err());
        let wrong = ControlSchedule::zeros(5, 3, 1.0).unwrap();
        assert!(model.slice_hamiltonian(&wrong, 0, &UncertaintySample::zeros(2)).is_err());
    }

    #[test]
    fn preset_shape() {
        let model = three_qubit_preset();
        assert_eq!(model.dim(), 8);
        assert_eq!(model.n_controls(), 6);
        assert_eq!(model.uncertainty_dim(), 2);
        let ops = model
            .drift_terms()
            .iter()
            .map(|t| &t.operator)
            .chain(model.controls());
        for op in ops {
            assert!(op.matrix().is_hermitian());
            assert_eq!(op.matrix().trace(), Complex64::new(0.0, 0.0));
        }
        let x2 = pauli_string(&[(2, Pauli::X)], 3).unwrap();
        assert_eq!(model.controls()[2], x2);
    }

    #[test]
    fn nominal_drift_spectrum() {
        let model = three_qubit_preset();
        let h = model.drift_hamiltonian(&UncertaintySample::zeros(2)).unwrap();
        let j = TAU * 10.0;
        // z_k = ±1 for computational basis |b1 b2 b3⟩; energy J(z1 z2 + z2 z3).
        let mut oracle: Vec<f64> = (0..8)
            .map(|b| {
                let z = |q: usize| if (b >> (2 - q)) & 1 == 0 { 1.0 } else { -1.0 };
                j * (z(0) * z(1) + z(1) * z(2))
            })
            .collect();
        oracle.sort_by(f64::total_cmp);
        let spec = SpectralCache::new(&h).unwrap();
        for (a, b) in spec.eigenvalues().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(oracle.iter().filter(|v| v.abs() < 1e-12).count(), 4);
        assert_eq!(oracle.iter().filter(|v| (*v - 2.0 * j).abs() < 1e-12).count(), 2);
        assert_eq!(oracle.iter().filter(|v| (*v + 2.0 * j).abs() < 1e-12).count(), 2);
    }

    #[test]
    fn toffoli_truth_table() {
        let t = toffoli_gate();
        for col in 0..8 {
            let row = match col {
                6 => 7,
                7 => 6,
                c => c,
            };
            for r in 0..8 {
                let want = if r == row { 1.0 } else { 0.0 };
                assert_eq!(t[(r, col)], Complex64::new(want, 0.0));
            }
        }
        assert!(t.is_unitary());
        assert!(t.is_hermitian());
        assert_eq!(&t * &t, CMatrix::identity(8));
        let det = nalgebra::DMatrix::from_row_slice(8, 8, t.as_slice()).determinant();
        assert!((det - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_amplitude_seed_is_zero() {
        let mut shape = PulseShape::with_default_ranges(6, 10, 1.0);
        shape.amplitude_max = 0.0;
        let s = initial_schedule(9, &shape).unwrap();
        assert!(s.amplitudes().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_schedule_is_deterministic() {
        let shape = PulseShape::with_default_ranges(6, 100, 1.0);
        assert_eq!(initial_schedule(42, &shape).unwrap(), initial_schedule(42, &shape).unwrap());
        assert_ne!(initial_schedule(42, &shape).unwrap(), initial_schedule(43, &shape).unwrap());
        let odd = PulseShape::with_default_ranges(5, 10, 1.0);
        assert!(initial_schedule(1, &odd).is_err());
    }

    #[test]
    fn sinusoid_sampled_at_midpoints() {
        let s = sinusoid_schedule(
            &[Sinusoid {
                amplitude: 1.0,
                frequency: TAU,
                phase: 0.0,
            }],
            4,
            1.0,
        )
        .unwrap();
        for (j, t) in [0.125, 0.375, 0.625, 0.875].iter().enumerate() {
            assert!((s.amplitudes().get(0, j) - (TAU * t).sin()).abs() < 1e-15);
            assert!((s.amplitudes().get(1, j) - (TAU * t).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn slice_hamiltonian_is_affine() {
        let model = three_qubit_preset();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_sched = || {
            let v = (0..6 * 2).map(|_| rng.gen_range(-50.0..50.0)).collect();
            ControlSchedule::new(ControlMatrix::from_row_major(6, 2, v).unwrap(), 1.0).unwrap()
        };
        let (a, b) = (rand_sched(), rand_sched());
        let mut sum = a.clone();
        sum.amplitudes_mut().add_scaled(1.0, b.amplitudes());
        let zero_eps = UncertaintySample::zeros(2);
        let zero_u = ControlSchedule::zeros(6, 2, 1.0).unwrap();
        let h = |s: &ControlSchedule, e: &UncertaintySample| {
            model.slice_hamiltonian(s, 1, e).unwrap().into_inner()
        };
        // linear in u: H(a+b) - drift = (H(a) - drift) + (H(b) - drift)
        let drift = h(&zero_u, &zero_eps);
        let lhs = &h(&sum, &zero_eps) - &drift;
        let rhs = &(&h(&a, &zero_eps) - &drift) + &(&h(&b, &zero_eps) - &drift);
        assert!((&lhs - &rhs).max_abs() <= 1e-12 * rhs.max_abs());
        // affine in ε
        let e1 = UncertaintySample::new(vec![0.13, -0.07]);
        let e2 = UncertaintySample::new(vec![-0.19, 0.02]);
        let mid = UncertaintySample::new(vec![(0.13 - 0.19) / 2.0, (-0.07 + 0.02) / 2.0]);
        let avg = (&h(&a, &e1) + &h(&a, &e2)).scale(0.5.into());
        let got = h(&a, &mid);
        assert!((&avg - &got).max_abs() <= 1e-12 * got.max_abs());
        assert!(got.is_hermitian());
    }
}
