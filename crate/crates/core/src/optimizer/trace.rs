// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::StopReason;
use crate::loss::WeightStatus;
use crate::system::ControlSchedule;

pub const TRACE_CSV_HEADER: &str = "iter,j_mean,j_max,mu,grad_norm";

/// Per-iteration training diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub losses: Vec<f64>,
    /// Present only on iterations selected by `weights_every`.
    pub weights: Option<Vec<f64>>,
    pub max_weight: f64,
    pub mu: f64,
    pub j_mean: f64,
    pub j_max: f64,
    pub grad_norm: f64,
    pub status: WeightStatus,
}

#[derive(Clone, Debug)]
pub struct TrainingTrace {
    pub records: Vec<IterationRecord>,
    pub schedule: ControlSchedule,
    pub stop: StopReason,
    pub wall_time_secs: f64,
}

impl TrainingTrace {
    /// Smallest batch-mean infidelity seen, with its iteration.
    pub fn best_mean(&self) -> Option<(u64, f64)> {
        self.records
            .iter()
            .map(|r| (r.iteration, r.j_mean))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// One row per iteration; `metadata` lines are written first as `# key=value`.
pub fn write_trace_csv<W: Write>(out: &mut W, records: &[IterationRecord], metadata: &[(&str, String)]) -> io::Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.j_mean, r.j_max, r.mu, r.grad_norm
        )?;
    }
    Ok(())
}

/// Full weight vectors for the iterations that kept them.
pub fn write_weights_csv<W: Write>(out: &mut W, records: &[IterationRecord]) -> io::Result<()> {
    let m = records.iter().find_map(|r| r.weights.as_ref().map(Vec::len)).unwrap_or(0);
    write!(out, "iter")?;
    for i in 0..m {
        write!(out, ",w{i}")?;
    }
    writeln!(out)?;
    for r in records {
        if let Some(w) = &r.weights {
            write!(out, "{}", r.iteration)?;
            for x in w {
                write!(out, ",{x:e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
