// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Plain-text schedule and target-matrix files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::system::{ControlMatrix, ControlSchedule, FrequencyConvention};
use crate::tensor::CMatrix;

pub const SCHEDULE_MAGIC: &str = "# rsgrape schedule v1";

/// Header lines, then one row of amplitudes (rad/μs) per channel, written
/// with 17 significant digits.
pub fn format_schedule(schedule: &ControlSchedule, convention: FrequencyConvention) -> String {
    let conv = match convention {
        FrequencyConvention::Cyclic => "cyclic",
        FrequencyConvention::Angular => "angular",
    };
    let mut out = String::new();
    writeln!(out, "{SCHEDULE_MAGIC}").unwrap();
    writeln!(out, "channels {}", schedule.channels()).unwrap();
    writeln!(out, "slices {}", schedule.slices()).unwrap();
    writeln!(out, "duration_us {:.16e}", schedule.duration()).unwrap();
    writeln!(out, "convention {conv}").unwrap();
    for c in 0..schedule.channels() {
        let row: Vec<String> = schedule
            .amplitudes()
            .channel(c)
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn parse_schedule(text: &str, path: &Path) -> Result<(ControlSchedule, FrequencyConvention)> {
    let bad = |msg: String| Error::invalid(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == SCHEDULE_MAGIC => {}
        _ => return Err(bad(format!("missing {SCHEDULE_MAGIC:?} header"))),
    }
    let mut header = |key: &str| -> Result<String> {
        let (no, line) = lines.next().ok_or_else(|| bad(format!("truncated before `{key}`")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(format!("line {}: expected `{key} <value>`", no + 1)))
    };
    let channels: usize = header("channels")?.parse().map_err(|e| bad(format!("channels: {e}")))?;
    let slices: usize = header("slices")?.parse().map_err(|e| bad(format!("slices: {e}")))?;
    let duration: f64 = header("duration_us")?.parse().map_err(|e| bad(format!("duration_us: {e}")))?;
    let convention = match header("convention")?.as_str() {
        "cyclic" => FrequencyConvention::Cyclic,
        "angular" => FrequencyConvention::Angular,
        other => return Err(bad(format!("unknown convention {other:?}"))),
    };
    let mut values = Vec::with_capacity(channels * slices);
    let mut rows = 0;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", no + 1)))?;
        if row.len() != slices {
            return Err(bad(format!("line {}: {} values, expected {slices}", no + 1, row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != channels {
        return Err(bad(format!("{rows} amplitude rows, expected {channels}")));
    }
    let schedule = ControlSchedule::new(ControlMatrix::from_row_major(channels, slices, values)?, duration)?;
    Ok((schedule, convention))
}

pub fn read_schedule(path: &Path) -> Result<(ControlSchedule, FrequencyConvention)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schedule(&text, path)
}

/// `N` lines of `2N` numbers (`re im` per entry); `#` starts a comment.
pub fn parse_target_matrix(text: &str) -> Result<CMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("target line {}: {e}", no + 1)))?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::invalid("target matrix file is empty"));
    }
    let mut data = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 2 * n {
            return Err(Error::invalid(format!(
                "target row {} has {} numbers, expected {} (re im pairs)",
                i + 1,
                row.len(),
                2 * n
            )));
        }
        data.extend(row.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])));
    }
    CMatrix::from_row_major(n, data)
}

pub fn read_target_matrix(path: &Path) -> Result<CMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_target_matrix(&text)
}
