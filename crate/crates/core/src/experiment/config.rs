// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Declarative experiment description (TOML) and its validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluator::{Axis, GridSpec, DEFAULT_DIVERSITY_BATCHES, DEFAULT_EVAL_SAMPLES, DEFAULT_GRID_POINTS};
use crate::fsutil::sha256_hex;
use crate::loss::{GateProblem, InfidelityVariant, Sensitivity, UtilityFamily, UtilitySpec};
use crate::optimizer::{AdamConfig, OptimizerConfig};
use crate::sampler::{DistributionSpec, Law};
use crate::system::{
    three_qubit_preset_with, toffoli_gate, DriftTerm, FrequencyConvention, PulseShape, SystemModel,
    PRESET_COUPLING_MHZ,
};
use crate::tensor::{parse_pauli_string, CMatrix};

use super::files::read_target_matrix;

pub const PRESET_THREE_QUBIT: &str = "three_qubit";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub system: SystemSection,
    pub target: TargetSection,
    pub control: ControlSection,
    pub uncertainty: Vec<Law>,
    pub loss: LossSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub frequency_convention: FrequencyConvention,
    /// Preset only: nominal ZZ coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<DriftSpec>,
    /// Pauli strings of the unit-strength control operators, in channel order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub paulis: String,
    pub coeff_mhz: f64,
    /// 1-based index into the uncertainty list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    /// Text matrix: one row per line, `re im` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub slices: usize,
    pub duration_us: f64,
    /// Seed of the random initial pulse; the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
    #[serde(default = "default_init_mhz")]
    pub init_amplitude_mhz: f64,
    #[serde(default = "default_init_mhz")]
    pub init_frequency_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_mhz: Option<f64>,
}

fn default_init_mhz() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default)]
    pub variant: InfidelityVariant,
    #[serde(default)]
    pub utility: UtilityFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_star: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub batch_size: usize,
    /// Step size in rad/μs at the first iteration. The defaults (2.0 decaying
    /// geometrically to 0.02) were tuned on the three-qubit preset.
    pub learning_rate: f64,
    /// Set equal to `learning_rate` for a constant step size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate_final: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_loss: Option<f64>,
    pub weights_every: u64,
    pub checkpoint_every: u64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 10,
            learning_rate: 2.0,
            learning_rate_final: Some(0.02),
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            max_iterations: 10_000,
            target_loss: None,
            weights_every: 10,
            checkpoint_every: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub n_samples: usize,
    pub n_batches: usize,
    /// Exponential/HARA sensitivity for the diversity histogram; defaults
    /// to the training `mu`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diversity_mu: Option<f64>,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_eps1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_eps2: Option<[f64; 2]>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_EVAL_SAMPLES,
            n_batches: DEFAULT_DIVERSITY_BATCHES,
            diversity_mu: None,
            grid_points: DEFAULT_GRID_POINTS,
            grid_eps1: None,
            grid_eps2: None,
        }
    }
}

/// One or more field-level problems found while loading a config.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<(String, String)>,
}

impl ConfigError {
    fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            problems: vec![(field.into(), message.into())],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (field, msg)) in self.problems.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            if field.is_empty() {
                write!(f, "{msg}")?;
            } else {
                write!(f, "{field}: {msg}")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            ConfigError::single("", msg.trim_end().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|mut e| {
            for p in &mut e.problems {
                if p.0.is_empty() {
                    p.1 = format!("{}: {}", path.display(), p.1);
                }
            }
            e
        })
    }

    /// Canonical text: every default filled in, fixed key order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn init_seed(&self) -> u64 {
        self.control.init_seed.unwrap_or(self.seed)
    }

    /// Checks every section and builds the runtime objects. Relative target
    /// files are resolved against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved, ConfigError> {
        let mut problems = Vec::new();
        let mut push = |field: &str, msg: String| problems.push((field.to_string(), msg));

        let conv = self.system.frequency_convention;
        let model = match self.build_model() {
            Ok(m) => Some(m),
            Err((field, msg)) => {
                push(&field, msg);
                None
            }
        };

        let distribution = match DistributionSpec::new(self.uncertainty.clone()) {
            Ok(d) => Some(d),
            Err(e) => {
                push("uncertainty", e.to_string());
                None
            }
        };
        if let (Some(m), Some(d)) = (&model, &distribution) {
            if m.uncertainty_dim() != d.dim() {
                push(
                    "uncertainty",
                    format!(
                        "the system uses {} uncertainty parameter(s) but {} law(s) are declared",
                        m.uncertainty_dim(),
                        d.dim()
                    ),
                );
            }
        }

        let target = match (&self.target.gate, &self.target.file) {
            (Some(_), Some(_)) => {
                push("target", "set exactly one of `gate` and `file`, not both".into());
                None
            }
            (None, None) => {
                push("target", "set one of `gate` or `file`".into());
                None
            }
            (Some(g), None) => match (g.as_str(), &model) {
                ("toffoli", _) => Some(toffoli_gate()),
                ("identity", Some(m)) => Some(CMatrix::identity(m.dim())),
                ("identity", None) => None,
                (other, _) => {
                    push("target.gate", format!("unknown gate {other:?} (known: \"toffoli\", \"identity\")"));
                    None
                }
            },
            (None, Some(f)) => {
                let path = if f.is_absolute() { f.clone() } else { base_dir.join(f) };
                match read_target_matrix(&path) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        push("target.file", e.to_string());
                        None
                    }
                }
            }
        };

        let c = &self.control;
        if c.slices == 0 {
            push("control.slices", "must be at least 1".into());
        }
        if !(c.duration_us > 0.0 && c.duration_us.is_finite()) {
            push("control.duration_us", format!("must be positive, got {}", c.duration_us));
        }
        for (field, v) in [
            ("control.init_amplitude_mhz", c.init_amplitude_mhz),
            ("control.init_frequency_mhz", c.init_frequency_mhz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                push(field, format!("must be non-negative, got {v}"));
            }
        }
        if let Some(clip) = c.clip_mhz {
            if !(clip > 0.0 && clip.is_finite()) {
                push("control.clip_mhz", format!("must be positive, got {clip}"));
            }
        }
        if let Some(m) = &model {
            if m.n_controls() % 2 != 0 {
                push(
                    "system.controls",
                    format!("initial pulses come in (x, y) pairs, but {} controls are listed", m.n_controls()),
                );
            }
        }

        let l = &self.loss;
        let sensitivity = match (l.mu, l.r_star) {
            (Some(_), Some(_)) => {
                push("loss", "`mu` and `r_star` are mutually exclusive; set exactly one".into());
                None
            }
            (None, None) => {
                push("loss", "set one of `mu` (fixed sensitivity) or `r_star` (adaptive)".into());
                None
            }
            (Some(mu), None) => match UtilitySpec::new(l.utility, mu) {
                Ok(spec) => Some(Sensitivity::Fixed(spec)),
                Err(e) => {
                    push("loss.mu", e.to_string());
                    None
                }
            },
            (None, Some(r_star)) => Some(Sensitivity::Adaptive {
                family: l.utility,
                r_star,
            }),
        };

        let o = &self.optimizer;
        let optimizer = sensitivity.map(|s| OptimizerConfig {
            sensitivity: s,
            batch_size: o.batch_size,
            adam: AdamConfig {
                learning_rate: o.learning_rate,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
            },
            learning_rate_final: o.learning_rate_final,
            max_iterations: o.max_iterations,
            target_loss: o.target_loss,
            weights_every: o.weights_every,
            amplitude_clip: c.clip_mhz.map(|v| conv.to_angular(v)),
        });
        if let Some(cfg) = &optimizer {
            if let Err(e) = cfg.validate() {
                let field = if e.to_string().contains("r_star") { "loss.r_star" } else { "optimizer" };
                push(field, e.to_string());
            }
        }

        let e = &self.evaluation;
        if e.n_samples == 0 {
            push("evaluation.n_samples", "must be at least 1".into());
        }
        if e.n_batches == 0 {
            push("evaluation.n_batches", "must be at least 1".into());
        }
        if e.grid_points == 0 {
            push("evaluation.grid_points", "must be at least 1".into());
        }
        if let Some(mu) = e.diversity_mu {
            if let Err(err) = UtilitySpec::new(l.utility, mu) {
                push("evaluation.diversity_mu", err.to_string());
            }
        }
        for (field, r) in [("evaluation.grid_eps1", e.grid_eps1), ("evaluation.grid_eps2", e.grid_eps2)] {
            if let Some([lo, hi]) = r {
                if let Err(err) = Axis::new(lo, hi, e.grid_points.max(1)) {
                    push(field, err.to_string());
                }
            }
        }

        let problem = match (model, target) {
            (Some(m), Some(t)) => match GateProblem::new(m, t, l.variant) {
                Ok(p) => Some(p),
                Err(err) => {
                    push("target", err.to_string());
                    None
                }
            },
            _ => None,
        };

        if !problems.is_empty() {
            return Err(ConfigError { problems });
        }
        let problem = problem.expect("no problems recorded");
        let shape = PulseShape {
            channels: problem.model().n_controls(),
            slices: c.slices,
            duration: c.duration_us,
            amplitude_max: conv.to_angular(c.init_amplitude_mhz),
            frequency_max: conv.to_angular(c.init_frequency_mhz),
        };
        Ok(Resolved {
            problem,
            distribution: distribution.expect("no problems recorded"),
            pulse: shape,
            optimizer: optimizer.expect("no problems recorded"),
        })
    }

    fn build_model(&self) -> Result<SystemModel, (String, String)> {
        let s = &self.system;
        let conv = s.frequency_convention;
        match s.preset.as_deref() {
            Some(PRESET_THREE_QUBIT) => {
                if s.qubits.is_some() || !s.drift.is_empty() || !s.controls.is_empty() {
                    return Err((
                        "system".into(),
                        "a preset cannot be combined with `qubits`, `drift` or `controls`".into(),
                    ));
                }
                let j = s.coupling_mhz.unwrap_or(PRESET_COUPLING_MHZ);
                if !j.is_finite() {
                    return Err(("system.coupling_mhz".into(), format!("must be finite, got {j}")));
                }
                Ok(three_qubit_preset_with(conv, j))
            }
            Some(other) => Err((
                "system.preset".into(),
                format!("unknown preset {other:?} (known: {PRESET_THREE_QUBIT:?})"),
            )),
            None => {
                if s.coupling_mhz.is_some() {
                    return Err(("system.coupling_mhz".into(), "only valid together with a preset".into()));
                }
                let n = s
                    .qubits
                    .ok_or_else(|| ("system".into(), "set `preset` or `qubits` with `drift` and `controls`".into()))?;
                if n == 0 || n > 10 {
                    return Err(("system.qubits".into(), format!("must be between 1 and 10, got {n}")));
                }
                let mut drift = Vec::new();
                for (i, d) in s.drift.iter().enumerate() {
                    let field = format!("system.drift[{i}]");
                    let operator = parse_pauli_string(&d.paulis, n).map_err(|e| (field.clone(), e.to_string()))?;
                    if !d.coeff_mhz.is_finite() {
                        return Err((field, format!("coeff_mhz must be finite, got {}", d.coeff_mhz)));
                    }
                    let uncertainty = match d.uncertainty {
                        Some(0) => {
                            return Err((field, "uncertainty indices are 1-based".into()));
                        }
                        Some(k) => Some(k - 1),
                        None => None,
                    };
                    drift.push(DriftTerm {
                        operator,
                        coefficient: conv.to_angular(d.coeff_mhz),
                        uncertainty,
                    });
                }
                if s.controls.is_empty() {
                    return Err(("system.controls".into(), "at least one control operator is required".into()));
                }
                let controls = s
                    .controls
                    .iter()
                    .enumerate()
                    .map(|(i, p)| parse_pauli_string(p, n).map_err(|e| (format!("system.controls[{i}]"), e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                SystemModel::new(drift, controls).map_err(|e| ("system".into(), e.to_string()))
            }
        }
    }
}

/// Runtime objects built from a valid config.
#[derive(Debug)]
pub struct Resolved {
    pub problem: GateProblem,
    pub distribution: DistributionSpec,
    pub pulse: PulseShape,
    pub optimizer: OptimizerConfig,
}

impl Resolved {
    /// Utility for the diversity histogram, if one is defined.
    pub fn diversity_utility(&self, cfg: &ExperimentConfig) -> Option<UtilitySpec> {
        let family = cfg.loss.utility;
        match (cfg.evaluation.diversity_mu, cfg.loss.mu) {
            (Some(mu), _) | (None, Some(mu)) => UtilitySpec::new(family, mu).ok(),
            (None, None) => None,
        }
    }

    pub fn grid(&self, cfg: &ExperimentConfig) -> crate::Result<GridSpec> {
        let n = cfg.evaluation.grid_points;
        let mut grid = GridSpec::over_support(&self.distribution, n)?;
        if let Some([lo, hi]) = cfg.evaluation.grid_eps1 {
            grid.eps1 = Axis::new(lo, hi, n)?;
        }
        if let Some([lo, hi]) = cfg.evaluation.grid_eps2 {
            grid.eps2 = Axis::new(lo, hi, n)?;
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PRESET: &str = r#"
seed = 7

[system]
preset = "three_qubit"

[target]
gate = "toffoli"

[control]
slices = 100
duration_us = 1.0

[[uncertainty]]
law = "uniform"
lo = -0.2
hi = 0.2

[[uncertainty]]
law = "uniform"
lo = -0.2
hi = 0.2

[loss]
mu = 1.0
"#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::parse(PRESET).unwrap();
        assert_eq!(cfg.optimizer.batch_size, 10);
        assert_eq!(cfg.evaluation.grid_points, 41);
        assert_eq!(cfg.loss.variant, InfidelityVariant::PhaseInsensitive);
        assert_eq!(cfg.init_seed(), 7);
        let r = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(r.problem.model().n_controls(), 6);
        assert_eq!(r.distribution.dim(), 2);
        assert!((r.pulse.amplitude_max - std::f64::consts::TAU * 5.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let cfg = ExperimentConfig::parse(PRESET).unwrap();
        let once = cfg.canonical();
        let again = ExperimentConfig::parse(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical(), once);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn mu_and_r_star_conflict_names_both_fields() {
        let text = PRESET.replace("mu = 1.0", "mu = 1.0\nr_star = 0.2");
        let err = ExperimentConfig::parse(&text).unwrap().resolve(Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mu") && msg.contains("r_star"), "{msg}");
    }

    #[test]
    fn unknown_field_reports_its_location() {
        let text = PRESET.replace("slices = 100", "slices = 100\nslcies = 3");
        let msg = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("slcies"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn missing_uncertainty_law_is_reported() {
        let text = PRESET.replacen("[[uncertainty]]\nlaw = \"uniform\"\nlo = -0.2\nhi = 0.2\n", "", 1);
        let err = ExperimentConfig::parse(&text).unwrap().resolve(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("uncertainty"), "{err}");
    }

    #[test]
    fn several_problems_are_collected() {
        let text = PRESET
            .replace("slices = 100", "slices = 0")
            .replace("mu = 1.0", "r_star = 0.05");
        let err = ExperimentConfig::parse(&text).unwrap().resolve(Path::new(".")).unwrap_err();
        let fields: Vec<_> = err.problems.iter().map(|p| p.0.as_str()).collect();
        assert!(fields.contains(&"control.slices"), "{fields:?}");
        assert!(fields.contains(&"loss.r_star"), "{fields:?}");
    }

    #[test]
    fn generic_pauli_system() {
        let text = r#"
seed = 1
[system]
qubits = 2
frequency_convention = "angular"
controls = ["X1", "Y1", "X2", "Y2"]
[[system.drift]]
paulis = "Z1 Z2"
coeff_mhz = 3.0
uncertainty = 1
[target]
gate = "identity"
[control]
slices = 4
duration_us = 0.5
[[uncertainty]]
law = "gaussian"
mean = 0.0
stddev = 0.05
[loss]
variant = "phase_sensitive"
utility = "hara"
r_star = 0.5
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let r = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(r.problem.model().dim(), 4);
        assert_eq!(r.problem.model().drift_terms()[0].coefficient, 3.0);
        assert_eq!(r.problem.variant(), InfidelityVariant::PhaseSensitive);
        assert!(r.diversity_utility(&cfg).is_none());
        assert_eq!(ExperimentConfig::parse(&cfg.canonical()).unwrap(), cfg);
    }

    #[test]
    fn zero_based_uncertainty_index_is_rejected() {
        let text = r#"
seed = 1
[system]
qubits = 1
controls = ["X1", "Y1"]
[[system.drift]]
paulis = "Z1"
coeff_mhz = 1.0
uncertainty = 0
[target]
gate = "identity"
[control]
slices = 2
duration_us = 1.0
[[uncertainty]]
law = "uniform"
lo = 0.0
hi = 1.0
[loss]
mu = 1.0
"#;
        let err = ExperimentConfig::parse(text).unwrap().resolve(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("1-based"), "{err}");
    }
}
