// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate infidelity and its exact gradient with respect to every
//! piecewise-constant control amplitude.
//!
//! The gradient sweep keeps everything in the eigenbasis of each slice
//! Hamiltonian `H_j = V diag(λ) V^H`. With `F_{j-1} = U_{j-1} ··· U_1` and
//! `Q_j = U_f^H U_K ··· U_{j+1}`, the overlap derivative is
//!
//! ```text
//! ∂/∂u_{c,j} Tr(U_f^H U) = Tr(W (Φ ∘ V^H H_c V)),   W = V^H F_{j-1} Q_j V
//! ```
//!
//! where `Φ` holds the divided differences of `exp(-iλ dt)`. Folding `W` and
//! `Φ` into `Y = conj(V) (W^T ∘ Φ) V^T` turns every channel into a single
//! elementwise contraction `Σ_ab (H_c)_ab Y_ab`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{ControlMatrix, ControlSchedule, SystemModel, UncertaintySample};
use crate::tensor::{fill_divided_differences, CMatrix, SpectralCache};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfidelityVariant {
    /// `N^-2 ‖U - U_f‖_F^2`, range `[0, 4/N]`.
    PhaseSensitive,
    /// `1 - |Tr(U_f^H U)|^2 / N^2`, range `[0, 1]`.
    #[default]
    PhaseInsensitive,
}

impl InfidelityVariant {
    /// Largest value the variant can take on an `n`-dimensional space.
    pub fn upper_bound(self, n: usize) -> f64 {
        match self {
            InfidelityVariant::PhaseSensitive => 4.0 / n as f64,
            InfidelityVariant::PhaseInsensitive => 1.0,
        }
    }

    fn from_overlap(self, overlap: Complex64, n: usize) -> f64 {
        let n2 = (n * n) as f64;
        let value = match self {
            InfidelityVariant::PhaseSensitive => (2.0 * n as f64 - 2.0 * overlap.re) / n2,
            InfidelityVariant::PhaseInsensitive => 1.0 - overlap.norm_sqr() / n2,
        };
        value.max(0.0)
    }

    /// Complex factor `κ` with `dL = -(2/N^2) Re(κ · d Tr(U_f^H U))`.
    fn chain_factor(self, overlap: Complex64) -> Complex64 {
        match self {
            InfidelityVariant::PhaseSensitive => Complex64::new(1.0, 0.0),
            InfidelityVariant::PhaseInsensitive => overlap.conj(),
        }
    }
}

/// Infidelity of `u` with respect to `target`.
pub fn infidelity(u: &CMatrix, target: &CMatrix, variant: InfidelityVariant) -> Result<f64> {
    if u.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: u.dim(),
        });
    }
    Ok(variant.from_overlap(target.inner(u), u.dim()))
}

/// Gradient of the infidelity with respect to the control amplitudes.
pub fn infidelity_gradient(
    model: &SystemModel,
    schedule: &ControlSchedule,
    sample: &UncertaintySample,
    target: &CMatrix,
    variant: InfidelityVariant,
) -> Result<ControlMatrix> {
    let problem = GateProblem::new(model.clone(), target.clone(), variant)?;
    Ok(problem.loss_and_gradient(schedule, sample)?.1)
}

/// A model, a target gate and an infidelity measure.
#[derive(Clone, Debug)]
pub struct GateProblem {
    model: SystemModel,
    target: CMatrix,
    variant: InfidelityVariant,
    /// Nonzero entries `(row-major index, value)` of each control operator.
    control_entries: Vec<Vec<(usize, Complex64)>>,
}

impl GateProblem {
    pub fn new(model: SystemModel, target: CMatrix, variant: InfidelityVariant) -> Result<Self> {
        if target.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: target.dim(),
            });
        }
        if !target.is_unitary() {
            return Err(Error::invalid(format!(
                "target gate is not unitary (‖U^H U - I‖_F = {:.3e})",
                target.unitarity_error()
            )));
        }
        let control_entries = model
            .controls()
            .iter()
            .map(|h| {
                h.matrix()
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| z.norm_sqr() > 0.0)
                    .map(|(k, &z)| (k, z))
                    .collect()
            })
            .collect();
        Ok(Self {
            model,
            target,
            variant,
            control_entries,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn target(&self) -> &CMatrix {
        &self.target
    }

    pub fn variant(&self) -> InfidelityVariant {
        self.variant
    }

    pub fn with_variant(&self, variant: InfidelityVariant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    fn check(&self, schedule: &ControlSchedule, sample: &UncertaintySample) -> Result<()> {
        self.model.check_schedule(schedule)?;
        self.model.check_sample(sample)
    }

    /// Final propagator `U(T)` under `sample`.
    pub fn propagator(&self, schedule: &ControlSchedule, sample: &UncertaintySample) -> Result<CMatrix> {
        self.check(schedule, sample)?;
        let n = self.model.dim();
        let dt = schedule.dt();
        let drift = self.model.drift_hamiltonian(sample)?;
        let mut total = CMatrix::identity(n);
        let mut rotated = CMatrix::zeros(n);
        let mut vadj = CMatrix::zeros(n);
        for j in 0..schedule.slices() {
            let spectral = SpectralCache::new(&self.model.add_controls(&drift, schedule, j))?;
            adjoint_into(spectral.eigenvectors(), &mut vadj);
            vadj.mul_into(&total, &mut rotated);
            rotated.scale_rows(&spectral.phases(dt));
            spectral.eigenvectors().mul_into(&rotated, &mut total);
        }
        Ok(total)
    }

    pub fn infidelity(&self, schedule: &ControlSchedule, sample: &UncertaintySample) -> Result<f64> {
        let u = self.propagator(schedule, sample)?;
        Ok(self.variant.from_overlap(self.target.inner(&u), u.dim()))
    }

    /// Infidelity and its exact gradient (channels × slices).
    pub fn loss_and_gradient(
        &self,
        schedule: &ControlSchedule,
        sample: &UncertaintySample,
    ) -> Result<(f64, ControlMatrix)> {
        self.check(schedule, sample)?;
        let n = self.model.dim();
        let k = schedule.slices();
        let dt = schedule.dt();
        let drift = self.model.drift_hamiltonian(sample)?;

        // Forward sweep; keep V_j and V_j^H F_{j-1} for the backward pass.
        let mut spectra = Vec::with_capacity(k);
        let mut rotated_forward = Vec::with_capacity(k);
        let mut total = CMatrix::identity(n);
        let mut vadj = CMatrix::zeros(n);
        let mut tmp = CMatrix::zeros(n);
        for j in 0..k {
            let spectral = SpectralCache::new(&self.model.add_controls(&drift, schedule, j))?;
            let phases = spectral.phases(dt);
            adjoint_into(spectral.eigenvectors(), &mut vadj);
            let mut ft = CMatrix::zeros(n);
            vadj.mul_into(&total, &mut ft);
            tmp.as_mut_slice().copy_from_slice(ft.as_slice());
            tmp.scale_rows(&phases);
            spectral.eigenvectors().mul_into(&tmp, &mut total);
            spectra.push((spectral, phases));
            rotated_forward.push(ft);
        }

        let overlap = self.target.inner(&total);
        let loss = self.variant.from_overlap(overlap, n);
        let kappa = self.variant.chain_factor(overlap) * (-2.0 / (n * n) as f64);

        let mut grad = ControlMatrix::zeros(self.model.n_controls(), k);
        let mut q = self.target.adjoint();
        let mut qt = CMatrix::zeros(n);
        let mut w = CMatrix::zeros(n);
        let mut x = CMatrix::zeros(n);
        let mut y = CMatrix::zeros(n);
        let mut phi = vec![Complex64::new(0.0, 0.0); n * n];
        let mut vconj = CMatrix::zeros(n);
        let mut vt = CMatrix::zeros(n);
        for j in (0..k).rev() {
            let (spectral, phases) = &spectra[j];
            let v = spectral.eigenvectors();
            q.mul_into(v, &mut qt);
            rotated_forward[j].mul_into(&qt, &mut w);

            fill_divided_differences(spectral.eigenvalues(), dt, &mut phi);
            {
                let (ws, xs) = (w.as_slice(), x.as_mut_slice());
                for a in 0..n {
                    for b in 0..n {
                        xs[a * n + b] = ws[b * n + a] * phi[a * n + b];
                    }
                }
            }
            {
                let (vs, cs, ts) = (v.as_slice(), vconj.as_mut_slice(), vt.as_mut_slice());
                for a in 0..n {
                    for b in 0..n {
                        cs[a * n + b] = vs[a * n + b].conj();
                        ts[a * n + b] = vs[b * n + a];
                    }
                }
            }
            vconj.mul_into(&x, &mut tmp);
            tmp.mul_into(&vt, &mut y);

            let ys = y.as_slice();
            for (c, entries) in self.control_entries.iter().enumerate() {
                let dz: Complex64 = entries.iter().map(|&(idx, h)| h * ys[idx]).sum();
                grad.set(c, j, (kappa * dz).re);
            }

            // Q_{j-1} = Q_j U_j = (Q_j V) diag(phases) V^H
            qt.scale_columns(phases);
            adjoint_into(v, &mut vadj);
            qt.mul_into(&vadj, &mut q);
        }
        Ok((loss, grad))
    }
}

fn adjoint_into(src: &CMatrix, dst: &mut CMatrix) {
    let n = src.dim();
    let (s, d) = (src.as_slice(), dst.as_mut_slice());
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = s[j * n + i].conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{three_qubit_preset, toffoli_gate, DriftTerm};
    use crate::tensor::{expm_hermitian_generator, pauli_string, propagate_chain, Hermitian, Pauli};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identical_gates_have_zero_infidelity() {
        let t = toffoli_gate();
        for v in [InfidelityVariant::PhaseSensitive, InfidelityVariant::PhaseInsensitive] {
            assert_eq!(infidelity(&t, &t, v).unwrap(), 0.0);
        }
    }

    #[test]
    fn global_phase_flip() {
        let id = CMatrix::identity(2);
        let minus = id.scale(c(-1.0, 0.0));
        assert_eq!(infidelity(&minus, &id, InfidelityVariant::PhaseSensitive).unwrap(), 2.0);
        assert_eq!(infidelity(&minus, &id, InfidelityVariant::PhaseInsensitive).unwrap(), 0.0);
    }

    #[test]
    fn quarter_z_rotation_against_trace_formula() {
        let z = pauli_string(&[(1, Pauli::Z)], 1).unwrap();
        let u = expm_hermitian_generator(&z, FRAC_PI_4).unwrap();
        let id = CMatrix::identity(2);
        // Tr(U) = 2 cos(π/4)
        let tr = 2.0 * FRAC_PI_4.cos();
        let sensitive = (4.0 - 2.0 * tr) / 4.0;
        let insensitive = 1.0 - tr * tr / 4.0;
        let direct = (&u - &id).frobenius_norm().powi(2) / 4.0;
        let got_s = infidelity(&u, &id, InfidelityVariant::PhaseSensitive).unwrap();
        let got_i = infidelity(&u, &id, InfidelityVariant::PhaseInsensitive).unwrap();
        assert!((got_s - sensitive).abs() < 1e-15);
        assert!((got_s - direct).abs() < 1e-15);
        assert!((got_i - insensitive).abs() < 1e-15);
        assert!((got_i - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infidelity_rejects_mismatched_dims() {
        let r = infidelity(&CMatrix::identity(2), &CMatrix::identity(4), InfidelityVariant::PhaseSensitive);
        assert!(r.is_err());
    }

    #[test]
    fn propagator_matches_chain_product() {
        let model = three_qubit_preset();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let amps = (0..6 * 5).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let sched = ControlSchedule::new(ControlMatrix::from_row_major(6, 5, amps).unwrap(), 0.1).unwrap();
        let sample = UncertaintySample::new(vec![0.1, -0.15]);
        let gens: Vec<_> = (0..5)
            .map(|j| model.slice_hamiltonian(&sched, j, &sample).unwrap())
            .collect();
        let chain = propagate_chain(&gens, sched.dt()).unwrap();
        let problem = GateProblem::new(model, toffoli_gate(), InfidelityVariant::PhaseInsensitive).unwrap();
        let u = problem.propagator(&sched, &sample).unwrap();
        assert!((&u - &chain.total).frobenius_norm() < 1e-12);
        assert!(u.is_unitary());
    }

    #[test]
    fn single_slice_rotation_closed_form() {
        // U = exp(-i u T σx), target I: Tr(U) = 2 cos(uT).
        // sensitive: L = (4 - 4 cos(uT))/4, dL/du = T sin(uT)
        // insensitive: L = sin²(uT), dL/du = 2 T sin(uT) cos(uT)
        let x = pauli_string(&[(1, Pauli::X)], 1).unwrap();
        let model = SystemModel::new(vec![], vec![x]).unwrap();
        let (u, t) = (0.7, 0.9);
        let sched = ControlSchedule::new(ControlMatrix::from_row_major(1, 1, vec![u]).unwrap(), t).unwrap();
        let eps = UncertaintySample::zeros(0);
        let id = CMatrix::identity(2);
        let p = GateProblem::new(model.clone(), id.clone(), InfidelityVariant::PhaseSensitive).unwrap();
        let (l, g) = p.loss_and_gradient(&sched, &eps).unwrap();
        assert!((l - (1.0 - (u * t).cos())).abs() < 1e-15);
        assert!((g.get(0, 0) - t * (u * t).sin()).abs() < 1e-14);

        let p = p.with_variant(InfidelityVariant::PhaseInsensitive);
        let (l, g) = p.loss_and_gradient(&sched, &eps).unwrap();
        assert!((l - (u * t).sin().powi(2)).abs() < 1e-15);
        assert!((g.get(0, 0) - 2.0 * t * (u * t).sin() * (u * t).cos()).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_exact_optimum() {
        // Controls along Z commute with the Z drift, and zero control on the
        // identity target is a stationary point of either measure.
        let z = pauli_string(&[(1, Pauli::Z)], 1).unwrap();
        let model = SystemModel::new(
            vec![DriftTerm {
                operator: Hermitian::zeros(2),
                coefficient: 1.0,
                uncertainty: None,
            }],
            vec![z],
        )
        .unwrap();
        let sched = ControlSchedule::zeros(1, 4, 1.0).unwrap();
        for v in [InfidelityVariant::PhaseSensitive, InfidelityVariant::PhaseInsensitive] {
            let p = GateProblem::new(model.clone(), CMatrix::identity(2), v).unwrap();
            let (l, g) = p.loss_and_gradient(&sched, &UncertaintySample::zeros(0)).unwrap();
            assert_eq!(l, 0.0);
            assert!(g.norm() < 1e-9);
        }
    }

    #[test]
    fn two_qubit_gradient_matches_finite_differences() {
        let n_qubits = 2;
        let zz = pauli_string(&[(1, Pauli::Z), (2, Pauli::Z)], n_qubits).unwrap();
        let controls = [(1, Pauli::X), (1, Pauli::Y), (2, Pauli::X), (2, Pauli::Y)]
            .iter()
            .map(|&f| pauli_string(&[f], n_qubits).unwrap())
            .collect();
        let model = SystemModel::new(
            vec![DriftTerm {
                operator: zz,
                coefficient: 5.0,
                uncertainty: Some(0),
            }],
            controls,
        )
        .unwrap();
        let target = CMatrix::from_fn(4, |i, j| {
            let perm = [0, 1, 3, 2];
            if perm[j] == i { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let amps = (0..4 * 10).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let sched = ControlSchedule::new(ControlMatrix::from_row_major(4, 10, amps).unwrap(), 1.0).unwrap();
        let sample = UncertaintySample::new(vec![0.08]);
        for v in [InfidelityVariant::PhaseSensitive, InfidelityVariant::PhaseInsensitive] {
            let p = GateProblem::new(model.clone(), target.clone(), v).unwrap();
            let (_, g) = p.loss_and_gradient(&sched, &sample).unwrap();
            let h = 1e-6;
            let mut fd = ControlMatrix::zeros(4, 10);
            for ch in 0..4 {
                for j in 0..10 {
                    let mut plus = sched.clone();
                    let mut minus = sched.clone();
                    let u = sched.amplitudes().get(ch, j);
                    plus.amplitudes_mut().set(ch, j, u + h);
                    minus.amplitudes_mut().set(ch, j, u - h);
                    let d = (p.infidelity(&plus, &sample).unwrap() - p.infidelity(&minus, &sample).unwrap())
                        / (2.0 * h);
                    fd.set(ch, j, d);
                }
            }
            let mut diff = g.clone();
            diff.add_scaled(-1.0, &fd);
            assert!(diff.norm() <= 1e-5 * fd.norm(), "{v:?}: {} vs {}", diff.norm(), fd.norm());
        }
    }

    #[test]
    fn problem_rejects_non_unitary_target() {
        let model = three_qubit_preset();
        let bad = CMatrix::identity(8).scale(c(2.0, 0.0));
        assert!(GateProblem::new(model.clone(), bad, InfidelityVariant::PhaseSensitive).is_err());
        assert!(GateProblem::new(model, CMatrix::identity(4), InfidelityVariant::PhaseSensitive).is_err());
    }
}
