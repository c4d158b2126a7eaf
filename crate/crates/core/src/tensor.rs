// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra for small quantum systems.
//!
//! Matrices are stored row-major in a single buffer. Slice propagators are
//! computed exactly from a Hermitian eigendecomposition, and the derivative of
//! `exp(-i (H + sA) dt)` at `s = 0` uses the divided differences of
//! `f(λ) = exp(-iλ dt)` in the eigenbasis of `H` (Daleckii–Krein).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance for the Hermitian check, scaled by `max |A|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Absolute Frobenius tolerance on `U^H U - I`.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenvalue gaps at or below `CONFLUENT_TOL * max(1, |λ|)` use the
/// analytic confluent limit of the divided difference.
pub const CONFLUENT_TOL: f64 = 1e-9;

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from a row-major buffer of `dim * dim` entries.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.data[j * n + i])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &CMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
    }

    /// `out = self * rhs`; `out` must not alias either operand.
    pub fn mul_into(&self, rhs: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        debug_assert_eq!(n, out.dim);
        out.data.fill(ZERO);
        for i in 0..n {
            let row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                let brow = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
    }

    /// Scales column `j` by `diag[j]`, i.e. `self * diag(diag)`.
    pub fn scale_columns(&mut self, diag: &[Complex64]) {
        let n = self.dim;
        debug_assert_eq!(n, diag.len());
        for row in self.data.chunks_exact_mut(n) {
            for (z, &d) in row.iter_mut().zip(diag) {
                *z *= d;
            }
        }
    }

    /// Scales row `i` by `diag[i]`, i.e. `diag(diag) * self`.
    pub fn scale_rows(&mut self, diag: &[Complex64]) {
        let n = self.dim;
        debug_assert_eq!(n, diag.len());
        for (row, &d) in self.data.chunks_exact_mut(n).zip(diag) {
            for z in row {
                *z *= d;
            }
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A^H|` over all entries.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = self.data[i * n + j] - self.data[j * n + i].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_residual() <= HERMITIAN_TOL * self.max_abs()
    }

    /// `‖U^H U - I‖_F`.
    pub fn unitarity_error(&self) -> f64 {
        let mut gram = CMatrix::zeros(self.dim);
        self.adjoint().mul_into(self, &mut gram);
        for i in 0..self.dim {
            gram.data[i * self.dim + i] -= ONE;
        }
        gram.frobenius_norm()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= UNITARY_TOL
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (p, q) = (self.dim, other.dim);
        CMatrix::from_fn(p * q, |i, j| {
            self.data[(i / q) * p + j / q] * other.data[(i % q) * q + j % q]
        })
    }

    /// `Tr(self^H other) = Σ conj(a_ij) b_ij`.
    pub fn inner(&self, other: &CMatrix) -> Complex64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim);
        self.mul_into(rhs, &mut out);
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for row in self.data.chunks_exact(self.dim) {
            let cells: Vec<String> = row
                .iter()
                .map(|z| format!("{:+.6}{:+.6}i", z.re, z.im))
                .collect();
            writeln!(f, "  [{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

/// A matrix known to be Hermitian within [`HERMITIAN_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let residual = matrix.hermitian_residual();
        let scale = matrix.max_abs();
        if residual > HERMITIAN_TOL * scale || !residual.is_finite() {
            return Err(Error::NotHermitian { residual, scale });
        }
        Ok(Self(matrix))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    /// `self += alpha * other`; real coefficients keep Hermiticity.
    pub fn add_scaled(&mut self, alpha: f64, other: &Hermitian) {
        self.0.add_scaled(alpha, &other.0);
    }
}

impl AsRef<CMatrix> for Hermitian {
    fn as_ref(&self) -> &CMatrix {
        &self.0
    }
}

/// Eigendecomposition `H = V diag(λ) V^H` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl SpectralCache {
    pub fn new(h: &Hermitian) -> Result<Self> {
        let m = h.matrix();
        let n = m.dim();
        let diagnostics = || Error::EigenNonConvergence {
            dim: n,
            frobenius: m.frobenius_norm(),
            max_abs: m.max_abs(),
            residual: m.hermitian_residual(),
        };
        if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(diagnostics());
        }
        let eig = SymmetricEigen::try_new(m.to_nalgebra(), f64::EPSILON, 1000 * n.max(1))
            .ok_or_else(diagnostics)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigenvectors = CMatrix::from_fn(n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(λ) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let diag: Vec<Complex64> = self.eigenvalues.iter().map(|&l| l.into()).collect();
        self.apply_function(&diag)
    }

    /// `exp(-iλ dt)` for every eigenvalue.
    pub fn phases(&self, dt: f64) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * dt))
            .collect()
    }

    /// `exp(-i H dt)`.
    pub fn unitary(&self, dt: f64) -> CMatrix {
        self.apply_function(&self.phases(dt))
    }

    /// Divided-difference matrix of `f(λ) = exp(-iλ dt)`.
    pub fn divided_differences(&self, dt: f64) -> CMatrix {
        let n = self.dim();
        let mut phi = CMatrix::zeros(n);
        fill_divided_differences(&self.eigenvalues, dt, phi.as_mut_slice());
        phi
    }

    /// Derivative of `exp(-i (H + sA) dt)` with respect to `s` at `s = 0`.
    pub fn derivative(&self, a: &CMatrix, dt: f64) -> Result<CMatrix> {
        let n = self.dim();
        if a.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.dim(),
            });
        }
        let v = &self.eigenvectors;
        let mut tmp = CMatrix::zeros(n);
        let mut rotated = CMatrix::zeros(n);
        v.adjoint().mul_into(a, &mut tmp);
        tmp.mul_into(v, &mut rotated);

        let phi = self.divided_differences(dt);
        for (r, p) in rotated.as_mut_slice().iter_mut().zip(phi.as_slice()) {
            *r *= p;
        }
        rotated.mul_into(&v.adjoint(), &mut tmp);
        let mut out = CMatrix::zeros(n);
        v.mul_into(&tmp, &mut out);
        Ok(out)
    }

    fn apply_function(&self, diag: &[Complex64]) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        scaled.scale_columns(diag);
        &scaled * &self.eigenvectors.adjoint()
    }
}

/// Row-major divided differences `(f(λ_k) - f(λ_l)) / (λ_k - λ_l)` for
/// `f(λ) = exp(-iλ dt)`, written in the cancellation-free form
/// `-i dt · exp(-i (λ_k + λ_l) dt / 2) · sinc((λ_k - λ_l) dt / 2)`.
pub(crate) fn fill_divided_differences(eigenvalues: &[f64], dt: f64, out: &mut [Complex64]) {
    let n = eigenvalues.len();
    debug_assert_eq!(out.len(), n * n);
    let minus_i_dt = Complex64::new(0.0, -dt);
    for (k, &lk) in eigenvalues.iter().enumerate() {
        for (l, &ll) in eigenvalues.iter().enumerate() {
            let gap = lk - ll;
            out[k * n + l] = if gap.abs() <= CONFLUENT_TOL * lk.abs().max(1.0) {
                minus_i_dt * Complex64::from_polar(1.0, -lk * dt)
            } else {
                let x = 0.5 * gap * dt;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                minus_i_dt * Complex64::from_polar(sinc, -0.5 * (lk + ll) * dt)
            };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        let (o, l, i) = (ZERO, ONE, Complex64::new(0.0, 1.0));
        let data = match self {
            Pauli::X => vec![o, l, l, o],
            Pauli::Y => vec![o, -i, i, o],
            Pauli::Z => vec![l, o, o, -l],
        };
        CMatrix { dim: 2, data }
    }
}

impl std::str::FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Pauli::X),
            "y" | "Y" => Ok(Pauli::Y),
            "z" | "Z" => Ok(Pauli::Z),
            _ => Err(Error::invalid(format!("unknown Pauli axis {s:?}"))),
        }
    }
}

/// Kronecker product with `axis` on each listed qubit and identity elsewhere.
/// Qubits are numbered from 1, and qubit 1 is the leftmost tensor factor.
pub fn pauli_string(factors: &[(usize, Pauli)], n_qubits: usize) -> Result<Hermitian> {
    if n_qubits == 0 {
        return Err(Error::invalid("pauli string needs at least one qubit"));
    }
    let mut axes = vec![None; n_qubits];
    for &(q, p) in factors {
        if q == 0 || q > n_qubits {
            return Err(Error::invalid(format!(
                "qubit index {q} out of range 1..={n_qubits}"
            )));
        }
        if axes[q - 1].replace(p).is_some() {
            return Err(Error::invalid(format!("duplicate qubit index {q}")));
        }
    }
    let id = CMatrix::identity(2);
    let mut out = CMatrix::identity(1);
    for axis in &axes {
        out = match axis {
            Some(p) => out.kron(&p.matrix()),
            None => out.kron(&id),
        };
    }
    Ok(Hermitian(out))
}

/// Parses `"Z1 Z2"`-style Pauli strings (whitespace separated, 1-based).
pub fn parse_pauli_string(text: &str, n_qubits: usize) -> Result<Hermitian> {
    let mut factors = Vec::new();
    for token in text.split_whitespace() {
        let mut chars = token.chars();
        let axis: Pauli = chars
            .next()
            .map(|c| c.to_string())
            .unwrap_or_default()
            .parse()?;
        let qubit: usize = chars
            .as_str()
            .parse()
            .map_err(|_| Error::invalid(format!("bad qubit index in Pauli token {token:?}")))?;
        factors.push((qubit, axis));
    }
    if factors.is_empty() {
        return Err(Error::invalid("empty Pauli string"));
    }
    pauli_string(&factors, n_qubits)
}

/// `exp(-i H dt)` via the spectral decomposition of `H`.
pub fn expm_hermitian_generator(h: &Hermitian, dt: f64) -> Result<CMatrix> {
    if !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be finite, got {dt}")));
    }
    Ok(SpectralCache::new(h)?.unitary(dt))
}

/// Exact directional derivative `d/ds exp(-i (H + sA) dt)` at `s = 0`.
pub fn expm_directional_derivative(h: &Hermitian, a: &Hermitian, dt: f64) -> Result<CMatrix> {
    if h.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: a.dim(),
        });
    }
    if !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be finite, got {dt}")));
    }
    SpectralCache::new(h)?.derivative(a.matrix(), dt)
}

/// Product of slice propagators with cached partial products.
#[derive(Clone, Debug)]
pub struct Propagation {
    /// `U_K ··· U_1`.
    pub total: CMatrix,
    /// `forward[j] = U_j ··· U_1`, with `forward[0] = I`; length `K + 1`.
    pub forward: Vec<CMatrix>,
    /// `backward[j] = U_K ··· U_{j+1}`, with `backward[K] = I`; length `K + 1`.
    pub backward: Vec<CMatrix>,
}

pub fn propagate_chain(generators: &[Hermitian], dt: f64) -> Result<Propagation> {
    let first = generators
        .first()
        .ok_or_else(|| Error::invalid("propagation chain is empty"))?;
    let n = first.dim();
    let slices = generators
        .iter()
        .map(|h| {
            if h.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: h.dim(),
                });
            }
            expm_hermitian_generator(h, dt)
        })
        .collect::<Result<Vec<_>>>()?;

    let k = slices.len();
    let mut forward = Vec::with_capacity(k + 1);
    forward.push(CMatrix::identity(n));
    for u in &slices {
        let next = u * forward.last().unwrap();
        forward.push(next);
    }
    let mut backward = vec![CMatrix::identity(n); k + 1];
    for j in (0..k).rev() {
        backward[j] = &backward[j + 1] * &slices[j];
    }
    Ok(Propagation {
        total: forward[k].clone(),
        forward,
        backward,
    })
}
