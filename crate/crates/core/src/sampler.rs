// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Reproducible uncertainty samples.
//!
//! Each sample is a pure function of `(master seed, stream tag, iteration,
//! index)`: the four words form the key of a ChaCha8 generator, which then
//! draws the sample's coordinates in order. No generator state is shared, so
//! samples can be produced in any order on any number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::UncertaintySample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, stddev: f64 },
}

impl Law {
    fn validate(&self) -> Result<()> {
        match *self {
            Law::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => Err(Error::invalid(
                format!("uniform law needs finite lo < hi, got [{lo}, {hi}]"),
            )),
            Law::Gaussian { mean, stddev } if !(mean.is_finite() && stddev.is_finite() && stddev > 0.0) => {
                Err(Error::invalid(format!(
                    "gaussian law needs finite mean and stddev > 0, got ({mean}, {stddev})"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Closed support interval, if bounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Law::Uniform { lo, hi } => Some((lo, hi)),
            Law::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Gaussian { mean, .. } => mean,
        }
    }

    pub fn stddev(&self) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
            Law::Gaussian { stddev, .. } => stddev,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            Law::Gaussian { mean, stddev } => Normal::new(mean, stddev)
                .expect("validated gaussian law")
                .sample(rng),
        }
    }
}

/// Independent per-coordinate laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistributionSpec {
    laws: Vec<Law>,
}

impl DistributionSpec {
    pub fn new(laws: Vec<Law>) -> Result<Self> {
        for law in &laws {
            law.validate()?;
        }
        Ok(Self { laws })
    }

    /// The same uniform law on every coordinate.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Law::Uniform { lo, hi }; dim])
    }

    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[Law] {
        &self.laws
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    Train,
    Eval,
}

impl StreamTag {
    fn word(self) -> u64 {
        match self {
            StreamTag::Train => 0x7472_6169_6e00_0001,
            StreamTag::Eval => 0x6576_616c_0000_0002,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    spec: DistributionSpec,
    master_seed: u64,
    tag: StreamTag,
}

impl SampleStream {
    pub fn new(spec: DistributionSpec, master_seed: u64, tag: StreamTag) -> Self {
        Self {
            spec,
            master_seed,
            tag,
        }
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn tag(&self) -> StreamTag {
        self.tag
    }

    /// Sample `index` of draw `iteration`.
    pub fn sample(&self, iteration: u64, index: u64) -> UncertaintySample {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.master_seed, self.tag.word(), iteration, index])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        UncertaintySample::new(self.spec.laws.iter().map(|law| law.draw(&mut rng)).collect())
    }

    /// Mini-batch of `m` samples for iteration `iteration`.
    pub fn draw_batch(&self, iteration: u64, m: usize) -> Vec<UncertaintySample> {
        (0..m as u64).map(|i| self.sample(iteration, i)).collect()
    }

    /// `n` samples at iteration coordinate 0 of this stream.
    pub fn draw_eval_set(&self, n: usize) -> Vec<UncertaintySample> {
        self.draw_batch(0, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_box() -> DistributionSpec {
        DistributionSpec::uniform_box(2, -0.2, 0.2).unwrap()
    }

    #[test]
    fn batch_stays_in_support() {
        let s = SampleStream::new(preset_box(), 1, StreamTag::Train);
        let batch = s.draw_batch(3, 10);
        assert_eq!(batch.len(), 10);
        assert!(batch
            .iter()
            .flat_map(|x| &x.epsilon)
            .all(|&e| (-0.2..=0.2).contains(&e)));
    }

    #[test]
    fn collapsed_support() {
        let spec = DistributionSpec::uniform_box(2, -1e-300, 0.0).unwrap();
        let s = SampleStream::new(spec, 9, StreamTag::Train);
        for x in s.draw_batch(0, 20) {
            assert!(x.epsilon.iter().all(|&e| (-1e-300..=0.0).contains(&e)));
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let s = SampleStream::new(preset_box(), 77, StreamTag::Train);
        assert_eq!(s.draw_batch(5, 10), s.draw_batch(5, 10));
        assert_ne!(s.draw_batch(5, 10), s.draw_batch(6, 10));
        let e = SampleStream::new(preset_box(), 77, StreamTag::Eval);
        assert_eq!(e.draw_eval_set(50), e.draw_eval_set(50));
    }

    #[test]
    fn train_and_eval_streams_differ() {
        let t = SampleStream::new(preset_box(), 77, StreamTag::Train);
        let e = SampleStream::new(preset_box(), 77, StreamTag::Eval);
        let train: Vec<_> = (0..50).flat_map(|k| t.draw_batch(k, 10)).collect();
        for x in e.draw_eval_set(500) {
            assert!(!train.contains(&x));
        }
    }

    #[test]
    fn order_of_draws_does_not_matter() {
        let s = SampleStream::new(preset_box(), 3, StreamTag::Train);
        let forward: Vec<_> = (0..8).map(|i| s.sample(2, i)).collect();
        let backward: Vec<_> = (0..8).rev().map(|i| s.sample(2, i)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_eq!(s.draw_batch(2, 8), forward);
    }

    #[test]
    fn large_eval_set_mean_and_single_draw() {
        let s = SampleStream::new(preset_box(), 2024, StreamTag::Eval);
        let set = s.draw_eval_set(100_000);
        for d in 0..2 {
            let mean = set.iter().map(|x| x.epsilon[d]).sum::<f64>() / set.len() as f64;
            assert!(mean.abs() <= 0.004, "dimension {d}: mean {mean}");
        }
        let one = s.draw_eval_set(1);
        assert_eq!(one.len(), 1);
        assert!(one[0].epsilon.iter().all(|e| e.abs() <= 0.2));
    }

    #[test]
    fn gaussian_moments() {
        let spec = DistributionSpec::new(vec![Law::Gaussian { mean: 0.05, stddev: 0.1 }]).unwrap();
        let s = SampleStream::new(spec.clone(), 8, StreamTag::Eval);
        let n = 50_000;
        let xs: Vec<f64> = s.draw_eval_set(n).iter().map(|x| x.epsilon[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = 0.1 / (n as f64).sqrt();
        assert!((mean - 0.05).abs() <= 5.0 * se);
        // standard error of the sample variance ≈ σ² √(2/(n-1))
        assert!((var - 0.01).abs() <= 5.0 * 0.01 * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn invalid_laws_rejected() {
        assert!(DistributionSpec::uniform_box(1, 0.2, -0.2).is_err());
        assert!(DistributionSpec::new(vec![Law::Gaussian { mean: 0.0, stddev: 0.0 }]).is_err());
    }
}
