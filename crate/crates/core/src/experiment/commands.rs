// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig, Resolved};
use super::files::format_schedule;
use crate::error::Error;
use crate::evaluator::{diversity_pdf, infidelity_cdf, landscape_scan, EvaluationSummary};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::optimizer::{
    checkpoint, restore, write_trace_csv, write_weights_csv, Algorithm, Checkpoint, IterationRecord, StopReason,
    Trainer,
};
use crate::sampler::{SampleStream, StreamTag};
use crate::system::{initial_schedule, ControlSchedule};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Overrides the config's `output_dir` (the `--out` flag still wins).
pub const OUT_DIR_ENV: &str = "RSGRAPE_OUT_DIR";

const TRACE_FILE: &str = "trace.csv";
const WEIGHTS_FILE: &str = "weights.csv";
const SCHEDULE_FILE: &str = "schedule.txt";
const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
const TRAINING_FILE: &str = "training.json";
const CDF_FILE: &str = "cdf.csv";
const DIVERSITY_FILE: &str = "diversity.csv";
const EVALUATION_FILE: &str = "evaluation.json";
const LANDSCAPE_FILE: &str = "landscape.csv";
const SCAN_FILE: &str = "scan.json";
const MANIFEST_FILE: &str = "manifest.json";
const REPORT_FILE: &str = "report.json";
const TAIL_ROWS: usize = 10;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical { .. } | Error::EigenNonConvergence { .. } => CliError::Numerical(e.to_string()),
            Error::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Flags shared by all commands.
#[derive(Clone, Debug, Default)]
pub struct CommandOptions {
    pub config: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_time_secs: f64,
    pub threads: usize,
    pub status: String,
    pub outputs: Vec<OutputFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    /// Canonical config with every default resolved.
    pub config: String,
    pub master_seed: u64,
    pub init_seed: u64,
    pub commands: BTreeMap<String, CommandRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub iteration: u64,
    pub j_mean: f64,
    pub j_max: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub stop: Option<StopReason>,
    pub final_j_mean: f64,
    pub final_j_max: f64,
    pub best_j_mean: f64,
    pub best_iteration: u64,
    pub tail: Vec<TailRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub batches: u64,
    pub batch_size: usize,
    pub mu: f64,
    pub mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schedule_sha256: String,
    pub summary: EvaluationSummary,
    pub diversity: Option<DiversitySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schedule_sha256: String,
    pub eps1: [f64; 2],
    pub eps2: [f64; 2],
    pub points: [usize; 2],
    pub max: f64,
    pub min: f64,
    pub argmax: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config_hash: String,
    pub master_seed: u64,
    pub training: Option<TrainingSummary>,
    pub evaluation: Option<EvaluationReport>,
    pub scan: Option<ScanReport>,
}

struct Context {
    config: ExperimentConfig,
    resolved: Resolved,
    out_dir: PathBuf,
    hash: String,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_context(opts: &CommandOptions) -> Result<Context, CliError> {
    let path = opts
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let resolved = config.resolve(base)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.clone());
    let hash = config.hash();
    Ok(Context {
        config,
        resolved,
        out_dir,
        hash,
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<(T, usize), CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
            Ok((pool.install(f), n))
        }
        None => Ok((f(), rayon::current_num_threads())),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<OutputFile>) -> Result<(), CliError> {
    write_atomic(&dir.join(name), bytes)?;
    outputs.push(OutputFile {
        file: name.to_string(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("summaries serialize");
    v.push(b'\n');
    v
}

fn metadata(ctx: &Context, extra: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    let mut out = vec![("config_hash", ctx.hash.clone()), ("seed", ctx.config.seed.to_string())];
    out.extend_from_slice(extra);
    out
}

fn comment_lines(meta: &[(&str, String)]) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn update_manifest(ctx: &Context, command: &str, record: CommandRecord) -> Result<(), CliError> {
    let path = ctx.out_dir.join(MANIFEST_FILE);
    let fresh = || Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: ctx.hash.clone(),
        config: ctx.config.canonical(),
        master_seed: ctx.config.seed,
        init_seed: ctx.config.init_seed(),
        commands: BTreeMap::new(),
    };
    let mut manifest = match fs::read(&path) {
        Ok(bytes) => match serde_json::from_slice::<Manifest>(&bytes) {
            Ok(m) if m.config_hash == ctx.hash => m,
            Ok(_) => {
                eprintln!("warning: {} belongs to a different config; starting a new manifest", path.display());
                fresh()
            }
            Err(e) => {
                eprintln!("warning: ignoring unreadable manifest {}: {e}", path.display());
                fresh()
            }
        },
        Err(_) => fresh(),
    };
    manifest.commands.insert(command.to_string(), record);
    write_atomic(&path, &json_bytes(&manifest))?;
    Ok(())
}

fn training_summary(algorithm: Algorithm, records: &[IterationRecord], stop: Option<StopReason>) -> Option<TrainingSummary> {
    let last = records.last()?;
    let best = records.iter().min_by(|a, b| a.j_mean.total_cmp(&b.j_mean))?;
    Some(TrainingSummary {
        algorithm,
        iterations: records.len() as u64,
        stop,
        final_j_mean: last.j_mean,
        final_j_max: last.j_max,
        best_j_mean: best.j_mean,
        best_iteration: best.iteration,
        tail: records[records.len().saturating_sub(TAIL_ROWS)..]
            .iter()
            .map(|r| TailRow {
                iteration: r.iteration,
                j_mean: r.j_mean,
                j_max: r.j_max,
                mu: r.mu,
            })
            .collect(),
    })
}

/// Runs the configured training and writes trace, weights, schedule,
/// checkpoint, summary and manifest into the output directory. On a
/// numerical failure the last good state is still checkpointed. The summary
/// is `None` when no iteration ran.
pub fn optimize(opts: &CommandOptions) -> Result<Option<TrainingSummary>, CliError> {
    let ctx = load_context(opts)?;
    let started = now_unix();
    let clock = std::time::Instant::now();
    let problem = &ctx.resolved.problem;
    let optimizer = ctx.resolved.optimizer.clone();
    let algorithm = optimizer.algorithm();
    let checkpoint_every = ctx.config.optimizer.checkpoint_every;
    let ckpt_path = ctx.out_dir.join(CHECKPOINT_FILE);

    let mut trainer = match &opts.resume {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            if cp.config != optimizer || cp.master_seed != ctx.config.seed {
                return Err(CliError::Config(format!(
                    "checkpoint {} was written with a different optimizer config or seed",
                    path.display()
                )));
            }
            restore(problem, &cp)?
        }
        None => {
            let start = initial_schedule(ctx.config.init_seed(), &ctx.resolved.pulse)?;
            let stream = SampleStream::new(ctx.resolved.distribution.clone(), ctx.config.seed, StreamTag::Train);
            Trainer::new(problem, start, stream, optimizer)?
        }
    };

    let (outcome, threads) = with_threads(opts.threads, || -> crate::Result<()> {
        while !trainer.is_finished() {
            trainer.step()?;
            if checkpoint_every > 0 && trainer.state().iteration % checkpoint_every == 0 {
                checkpoint(&trainer).save(&ckpt_path)?;
            }
        }
        Ok(())
    })?;
    let failure = match outcome {
        Ok(()) => None,
        Err(e @ (Error::Numerical { .. } | Error::EigenNonConvergence { .. })) => Some(e),
        Err(other) => return Err(other.into()),
    };

    let mut outputs = Vec::new();
    let dir = &ctx.out_dir;
    write_file(dir, CHECKPOINT_FILE, &checkpoint(&trainer).to_bytes(), &mut outputs)?;
    let state = trainer.state();
    let meta = metadata(
        &ctx,
        &[
            ("algorithm", format!("{algorithm:?}")),
            ("batch_size", ctx.config.optimizer.batch_size.to_string()),
        ],
    );
    let mut trace = Vec::new();
    write_trace_csv(&mut trace, &state.records, &meta).expect("writing to memory");
    write_file(dir, TRACE_FILE, &trace, &mut outputs)?;
    let mut weights = comment_lines(&meta).into_bytes();
    write_weights_csv(&mut weights, &state.records).expect("writing to memory");
    write_file(dir, WEIGHTS_FILE, &weights, &mut outputs)?;

    let stop = if failure.is_some() {
        None
    } else if state.iteration >= trainer.config().max_iterations {
        Some(StopReason::MaxIterations)
    } else {
        Some(StopReason::TargetLoss)
    };
    let summary = training_summary(algorithm, &state.records, stop);
    if failure.is_none() {
        let sched = format_schedule(&state.schedule, ctx.config.system.frequency_convention);
        write_file(dir, SCHEDULE_FILE, sched.as_bytes(), &mut outputs)?;
        if let Some(s) = &summary {
            write_file(dir, TRAINING_FILE, &json_bytes(s), &mut outputs)?;
        }
    }
    let record = CommandRecord {
        started_unix: started,
        finished_unix: now_unix(),
        wall_time_secs: clock.elapsed().as_secs_f64(),
        threads,
        status: if failure.is_some() { "numerical_failure" } else { "completed" }.into(),
        outputs,
        notes: failure.iter().map(|e| e.to_string()).collect(),
    };
    update_manifest(&ctx, "optimize", record)?;
    if let Some(e) = failure {
        return Err(CliError::Numerical(format!(
            "{e}; last good state saved to {}",
            ckpt_path.display()
        )));
    }
    Ok(summary)
}

fn load_schedule(ctx: &Context, opts: &CommandOptions) -> Result<(ControlSchedule, String), CliError> {
    let path = opts.schedule.clone().unwrap_or_else(|| ctx.out_dir.join(SCHEDULE_FILE));
    let bytes = fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{}: not UTF-8 text", path.display())))?;
    let (schedule, _) = super::files::parse_schedule(&text, &path)?;
    ctx.resolved.problem.model().check_schedule(&schedule).map_err(|e| {
        CliError::Config(format!("{} does not fit the configured system: {e}", path.display()))
    })?;
    Ok((schedule, sha256_hex(&bytes)))
}

/// Infidelity CDF over fresh samples and the diversity histogram.
pub fn evaluate(opts: &CommandOptions) -> Result<EvaluationReport, CliError> {
    let ctx = load_context(opts)?;
    let started = now_unix();
    let clock = std::time::Instant::now();
    let (schedule, schedule_sha256) = load_schedule(&ctx, opts)?;
    let problem = &ctx.resolved.problem;
    let stream = SampleStream::new(ctx.resolved.distribution.clone(), ctx.config.seed, StreamTag::Eval);
    let eval = &ctx.config.evaluation;
    let utility = ctx.resolved.diversity_utility(&ctx.config);
    let m = ctx.config.optimizer.batch_size;

    let (result, threads) = with_threads(opts.threads, || -> crate::Result<_> {
        let cdf = infidelity_cdf(problem, &schedule, &stream, eval.n_samples)?;
        let hist = match utility {
            Some(u) if m >= 2 => Some((u, diversity_pdf(problem, &schedule, &stream, &u, eval.n_batches, m)?)),
            _ => None,
        };
        Ok((cdf, hist))
    })?;
    let (cdf, hist) = result?;

    let mut notes = Vec::new();
    let meta = metadata(&ctx, &[("n_samples", eval.n_samples.to_string())]);
    let mut outputs = Vec::new();
    let mut text = comment_lines(&meta);
    text.push_str("infidelity,cum_prob\n");
    for (v, p) in cdf.values.iter().zip(&cdf.probabilities) {
        writeln!(text, "{v:e},{p:e}").unwrap();
    }
    write_file(&ctx.out_dir, CDF_FILE, text.as_bytes(), &mut outputs)?;

    let diversity = match hist {
        Some((u, h)) => {
            let meta = metadata(
                &ctx,
                &[("n_batches", h.batches.to_string()), ("batch_size", m.to_string()), ("mu", format!("{:e}", u.mu))],
            );
            let mut text = comment_lines(&meta);
            text.push_str("bin_lo,bin_hi,density\n");
            for (w, d) in h.edges.windows(2).zip(h.density()) {
                writeln!(text, "{:e},{:e},{d:e}", w[0], w[1]).unwrap();
            }
            write_file(&ctx.out_dir, DIVERSITY_FILE, text.as_bytes(), &mut outputs)?;
            let mean_degree = h
                .edges
                .windows(2)
                .zip(&h.counts)
                .map(|(w, &c)| 0.5 * (w[0] + w[1]) * c as f64)
                .sum::<f64>()
                / h.batches as f64;
            Some(DiversitySummary {
                batches: h.batches,
                batch_size: m,
                mu: u.mu,
                mean_degree,
            })
        }
        None => {
            notes.push(
                "diversity histogram skipped: set evaluation.diversity_mu (adaptive runs) and a batch size of at least 2"
                    .to_string(),
            );
            None
        }
    };
    let report = EvaluationReport {
        schedule_sha256,
        summary: cdf.summary(),
        diversity,
    };
    write_file(&ctx.out_dir, EVALUATION_FILE, &json_bytes(&report), &mut outputs)?;
    let record = CommandRecord {
        started_unix: started,
        finished_unix: now_unix(),
        wall_time_secs: clock.elapsed().as_secs_f64(),
        threads,
        status: "completed".into(),
        outputs,
        notes,
    };
    update_manifest(&ctx, "evaluate", record)?;
    Ok(report)
}

/// Infidelity landscape over the two uncertainty parameters.
pub fn scan(opts: &CommandOptions) -> Result<ScanReport, CliError> {
    let ctx = load_context(opts)?;
    let started = now_unix();
    let clock = std::time::Instant::now();
    if ctx.resolved.distribution.dim() != 2 {
        return Err(CliError::Config(format!(
            "scan needs exactly 2 uncertainty parameters, the config declares {}",
            ctx.resolved.distribution.dim()
        )));
    }
    let (schedule, schedule_sha256) = load_schedule(&ctx, opts)?;
    let grid = ctx.resolved.grid(&ctx.config)?;
    let notes = grid.support_warnings(&ctx.resolved.distribution);
    for w in &notes {
        eprintln!("warning: {w}");
    }
    let (land, threads) = with_threads(opts.threads, || landscape_scan(&ctx.resolved.problem, &schedule, &grid))?;
    let land = land?;

    let meta = metadata(
        &ctx,
        &[("grid", format!("{}x{}", grid.eps1.points, grid.eps2.points))],
    );
    let mut text = comment_lines(&meta);
    text.push_str("eps1,eps2,infidelity\n");
    for (i, a) in land.eps1.iter().enumerate() {
        for (j, b) in land.eps2.iter().enumerate() {
            writeln!(text, "{a:e},{b:e},{:e}", land.get(i, j)).unwrap();
        }
    }
    let mut outputs = Vec::new();
    write_file(&ctx.out_dir, LANDSCAPE_FILE, text.as_bytes(), &mut outputs)?;
    let (a, b) = land.argmax();
    let report = ScanReport {
        schedule_sha256,
        eps1: [grid.eps1.lo, grid.eps1.hi],
        eps2: [grid.eps2.lo, grid.eps2.hi],
        points: [grid.eps1.points, grid.eps2.points],
        max: land.max(),
        min: land.min(),
        argmax: [a, b],
    };
    write_file(&ctx.out_dir, SCAN_FILE, &json_bytes(&report), &mut outputs)?;
    let record = CommandRecord {
        started_unix: started,
        finished_unix: now_unix(),
        wall_time_secs: clock.elapsed().as_secs_f64(),
        threads,
        status: "completed".into(),
        outputs,
        notes,
    };
    update_manifest(&ctx, "scan", record)?;
    Ok(report)
}

fn read_optional<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Option<T>, CliError> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
    }
}

/// Joins the summaries found in a run directory into `report.json`. The
/// output holds no timestamps, so identical runs give identical reports.
pub fn report(dir: &Path) -> Result<ReportSummary, CliError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path)
        .map_err(|e| CliError::Config(format!("{}: no readable manifest ({e})", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: corrupt manifest ({e})", manifest_path.display())))?;
    let summary = ReportSummary {
        config_hash: manifest.config_hash,
        master_seed: manifest.master_seed,
        training: read_optional(dir, TRAINING_FILE)?,
        evaluation: read_optional(dir, EVALUATION_FILE)?,
        scan: read_optional(dir, SCAN_FILE)?,
    };
    write_atomic(&dir.join(REPORT_FILE), &json_bytes(&summary))?;
    Ok(summary)
}
