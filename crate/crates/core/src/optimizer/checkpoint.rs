// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Save and restore of the full training state.
//!
//! File layout: a version line, a `sha256 <hex>` line covering the body, then
//! the JSON body. Floats are written with round-trip precision, so a restored
//! run continues bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, IterationRecord, OptimizerConfig, Trainer, TrainerState};
use crate::error::{Error, Result};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::loss::GateProblem;
use crate::sampler::{DistributionSpec, SampleStream, StreamTag};
use crate::system::{ControlMatrix, ControlSchedule};

pub const CHECKPOINT_VERSION: &str = "rsgrape-checkpoint v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub channels: usize,
    pub slices: usize,
    pub duration: f64,
    pub amplitudes: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub iteration: u64,
    pub master_seed: u64,
    pub tag: StreamTag,
    pub distribution: DistributionSpec,
    pub config: OptimizerConfig,
    pub records: Vec<IterationRecord>,
}

/// Snapshot of a trainer between iterations.
pub fn checkpoint(trainer: &Trainer<'_>) -> Checkpoint {
    let st = trainer.state();
    Checkpoint {
        channels: st.schedule.channels(),
        slices: st.schedule.slices(),
        duration: st.schedule.duration(),
        amplitudes: st.schedule.amplitudes().as_slice().to_vec(),
        adam_m: st.adam.m.as_slice().to_vec(),
        adam_v: st.adam.v.as_slice().to_vec(),
        adam_t: st.adam.t,
        iteration: st.iteration,
        master_seed: trainer.stream().master_seed(),
        tag: trainer.stream().tag(),
        distribution: trainer.stream().spec().clone(),
        config: trainer.config().clone(),
        records: st.records.clone(),
    }
}

/// Rebuilds a trainer that continues exactly where the snapshot left off.
pub fn restore<'a>(problem: &'a GateProblem, cp: &Checkpoint) -> Result<Trainer<'a>> {
    let invalid = |reason: String| Error::invalid(format!("checkpoint content: {reason}"));
    let (c, k) = (cp.channels, cp.slices);
    let matrix = |v: &[f64], what: &str| {
        ControlMatrix::from_row_major(c, k, v.to_vec()).map_err(|e| invalid(format!("{what}: {e}")))
    };
    let schedule = ControlSchedule::new(matrix(&cp.amplitudes, "amplitudes")?, cp.duration)?;
    let adam = AdamState {
        m: matrix(&cp.adam_m, "adam first moment")?,
        v: matrix(&cp.adam_v, "adam second moment")?,
        t: cp.adam_t,
    };
    if cp.records.len() as u64 != cp.iteration {
        return Err(invalid(format!(
            "{} trace records for iteration {}",
            cp.records.len(),
            cp.iteration
        )));
    }
    let distribution = DistributionSpec::new(cp.distribution.laws().to_vec())?;
    let state = TrainerState {
        schedule,
        adam,
        iteration: cp.iteration,
        records: cp.records.clone(),
    };
    let stream = SampleStream::new(distribution, cp.master_seed, cp.tag);
    Trainer::resume(problem, state, stream, cp.config.clone())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("checkpoint fields are always serializable");
        let mut out = format!("{CHECKPOINT_VERSION}\nsha256 {}\n", sha256_hex(&body)).into_bytes();
        out.extend_from_slice(&body);
        out
    }

    /// Parses a checkpoint; `path` is used only in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let mut parts = bytes.splitn(3, |&b| b == b'\n');
        let version = parts.next().unwrap_or_default();
        if version != CHECKPOINT_VERSION.as_bytes() {
            return Err(fail(format!(
                "unsupported format {:?}, expected {CHECKPOINT_VERSION:?}",
                String::from_utf8_lossy(version)
            )));
        }
        let hash_line = parts
            .next()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| fail("truncated before the hash line".into()))?;
        let want = std::str::from_utf8(hash_line)
            .ok()
            .and_then(|l| l.strip_prefix("sha256 "))
            .ok_or_else(|| fail("malformed hash line".into()))?;
        let body = parts.next().ok_or_else(|| fail("truncated before the body".into()))?;
        let got = sha256_hex(body);
        if got != want {
            return Err(fail(format!(
                "content hash mismatch (file truncated or modified): header {want}, body {got}"
            )));
        }
        serde_json::from_slice(body).map_err(|e| fail(format!("malformed body: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
