// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Robustness statistics of a fixed control: infidelity CDF over fresh
//! samples, the distribution of batch diversity degrees, and 2-D infidelity
//! landscapes.
//!
//! All maps run in parallel and collect in index order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{batch_weights, diversity_degree, GateProblem, UtilitySpec};
use crate::sampler::{DistributionSpec, SampleStream};
use crate::system::{ControlSchedule, UncertaintySample};

pub const DEFAULT_EVAL_SAMPLES: usize = 100_000;
pub const DEFAULT_DIVERSITY_BATCHES: usize = 100_000;
pub const DIVERSITY_BINS: usize = 100;
pub const DEFAULT_GRID_POINTS: usize = 41;

/// Empirical CDF: `values` sorted ascending, `probabilities[i] = (i+1)/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl CdfTable {
    pub fn from_losses(mut losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::invalid("CDF of an empty sample"));
        }
        if losses.iter().any(|l| l.is_nan()) {
            return Err(Error::invalid("CDF input contains NaN"));
        }
        losses.sort_by(f64::total_cmp);
        let n = losses.len() as f64;
        let probabilities = (1..=losses.len()).map(|i| i as f64 / n).collect();
        Ok(Self {
            values: losses,
            probabilities,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Smallest value `x` with `F(x) ≥ q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.n();
        let idx = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.values[idx]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn max(&self) -> f64 {
        self.values[self.n() - 1]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn summary(&self) -> EvaluationSummary {
        EvaluationSummary {
            n_samples: self.n(),
            j_mean: self.mean(),
            j_max: self.max(),
            q50: self.quantile(0.5),
            q90: self.quantile(0.9),
            q99: self.quantile(0.99),
            q100: self.max(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n_samples: usize,
    pub j_mean: f64,
    pub j_max: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub q100: f64,
}

fn losses_for(problem: &GateProblem, schedule: &ControlSchedule, samples: &[UncertaintySample]) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| problem.infidelity(schedule, s))
        .collect()
}

/// Infidelity of `schedule` on the first `n` samples of `stream`.
pub fn infidelity_cdf(
    problem: &GateProblem,
    schedule: &ControlSchedule,
    stream: &SampleStream,
    n: usize,
) -> Result<CdfTable> {
    if n == 0 {
        return Err(Error::invalid("CDF needs at least one sample"));
    }
    CdfTable::from_losses(losses_for(problem, schedule, &stream.draw_eval_set(n))?)
}

/// Histogram of `d = max_i ω_i - 1/M` over independent batches.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityHistogram {
    /// `bins + 1` edges spanning `[0, 1 - 1/M]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub batches: u64,
    pub batch_size: usize,
}

impl DiversityHistogram {
    fn empty(batch_size: usize, bins: usize) -> Self {
        let top = 1.0 - 1.0 / batch_size as f64;
        let edges = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
        Self {
            edges,
            counts: vec![0; bins],
            batches: 0,
            batch_size,
        }
    }

    fn insert(&mut self, d: f64) {
        let bins = self.counts.len();
        let top = self.edges[bins];
        let idx = ((d / top) * bins as f64).floor();
        let idx = if idx.is_finite() { (idx.max(0.0) as usize).min(bins - 1) } else { 0 };
        self.counts[idx] += 1;
        self.batches += 1;
    }

    /// Probability density per bin (integrates to one).
    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, w)| c as f64 / (self.batches as f64 * (w[1] - w[0])))
            .collect()
    }
}

/// Diversity degrees of `n_batches` batches of size `m`; batch `b` is
/// iteration coordinate `b` of `stream`.
pub fn diversity_pdf(
    problem: &GateProblem,
    schedule: &ControlSchedule,
    stream: &SampleStream,
    utility: &UtilitySpec,
    n_batches: usize,
    m: usize,
) -> Result<DiversityHistogram> {
    if n_batches == 0 || m < 2 {
        return Err(Error::invalid(format!(
            "diversity histogram needs n_batches ≥ 1 and M ≥ 2, got {n_batches} and {m}"
        )));
    }
    let degrees = (0..n_batches as u64)
        .into_par_iter()
        .map(|b| -> Result<f64> {
            let losses = stream
                .draw_batch(b, m)
                .iter()
                .map(|s| problem.infidelity(schedule, s))
                .collect::<Result<Vec<_>>>()?;
            Ok(diversity_degree(&batch_weights(&losses, utility)?.values))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hist = DiversityHistogram::empty(m, DIVERSITY_BINS);
    for d in degrees {
        hist.insert(d);
    }
    Ok(hist)
}

/// Evenly spaced points; a single point sits at `lo`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo || (points > 1 && hi == lo) {
            return Err(Error::invalid(format!(
                "grid axis needs finite lo ≤ hi and at least one point, got [{lo}, {hi}] with {points}"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub eps1: Axis,
    pub eps2: Axis,
}

impl GridSpec {
    /// `points × points` over the bounded support of a 2-D distribution.
    pub fn over_support(spec: &DistributionSpec, points: usize) -> Result<Self> {
        if spec.dim() != 2 {
            return Err(Error::invalid(format!("landscape scans need 2 uncertainty dimensions, got {}", spec.dim())));
        }
        let axis = |d: usize| -> Result<Axis> {
            let law = spec.laws()[d];
            let (lo, hi) = law
                .support()
                .unwrap_or((law.mean() - 3.0 * law.stddev(), law.mean() + 3.0 * law.stddev()));
            Axis::new(lo, hi, points)
        };
        Ok(Self {
            eps1: axis(0)?,
            eps2: axis(1)?,
        })
    }

    /// Human-readable notes for every axis end outside the distribution's
    /// support.
    pub fn support_warnings(&self, spec: &DistributionSpec) -> Vec<String> {
        let mut out = Vec::new();
        for (d, axis) in [self.eps1, self.eps2].iter().enumerate() {
            if let Some((lo, hi)) = spec.laws().get(d).and_then(|l| l.support()) {
                if axis.lo < lo || axis.hi > hi {
                    out.push(format!(
                        "grid axis eps{} = [{}, {}] extends outside the support [{lo}, {hi}]; values there are extrapolated",
                        d + 1,
                        axis.lo,
                        axis.hi
                    ));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    /// Row-major, rows indexed by `eps1`.
    pub values: Vec<f64>,
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.eps2.len() + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(eps1, eps2)` of the largest entry (first one on ties).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        let n2 = self.eps2.len();
        (self.eps1[best / n2], self.eps2[best % n2])
    }
}

/// Infidelity on the Cartesian grid.
pub fn landscape_scan(problem: &GateProblem, schedule: &ControlSchedule, grid: &GridSpec) -> Result<LandscapeGrid> {
    let d = problem.model().uncertainty_dim();
    if d != 2 {
        return Err(Error::invalid(format!("landscape scans need a model with 2 uncertainty parameters, got {d}")));
    }
    let eps1 = grid.eps1.values();
    let eps2 = grid.eps2.values();
    let points: Vec<UncertaintySample> = eps1
        .iter()
        .flat_map(|&a| eps2.iter().map(move |&b| UncertaintySample::new(vec![a, b])))
        .collect();
    let values = losses_for(problem, schedule, &points)?;
    Ok(LandscapeGrid { eps1, eps2, values })
}
