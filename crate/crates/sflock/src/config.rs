//! Experiment configuration files.
//!
//! Configs are TOML with one table per section. Both forms below are
//! accepted and equivalent:
//!
//! ```toml
//! [model]
//! alpha = 1.0
//! ```
//!
//! ```toml
//! model.alpha = 1.0
//! ```
//!
//! Unknown keys are rejected so typos surface as errors naming the key.

use crate::custom::CustomPower;
use serde::{Deserialize, Serialize};
use sflock_core::diagnostics::DiagnosticsConfig;
use sflock_core::guards::InequalityId;
use sflock_core::{CouplingKind, IntegratorConfig, ModelParams, WeightKind};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Errors raised while loading or resolving a config.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read {path}: {source}")]
    Io {
        /// File path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// TOML syntax or schema error.
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    /// A value is out of range.
    #[error("invalid `{field}`: {reason}")]
    Invalid {
        /// Dotted key.
        field: String,
        /// What is wrong.
        reason: String,
    },
    /// The model rejected the parameters.
    #[error("{0}")]
    Model(#[from] sflock_core::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// Weight family names accepted in `model.weight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightName {
    /// s^{-α}.
    Power,
    /// (s − δ)^{-α}.
    Shifted,
    /// (1 + s²)^{-β}.
    Regular,
    /// s^{-α} through the custom-weight interface.
    CustomPower,
}

/// Coupling names accepted in `model.coupling`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingName {
    /// v|v|^{2γ−2}.
    Power,
    /// v (γ = 1).
    Linear,
}

/// `[model]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// N.
    pub n_agents: usize,
    /// d.
    pub dim: usize,
    /// α.
    #[serde(default = "one")]
    pub alpha: f64,
    /// γ.
    #[serde(default = "one")]
    pub gamma: f64,
    /// δ (shifted weight only).
    #[serde(default)]
    pub delta: f64,
    /// C₁.
    #[serde(default = "one")]
    pub c1: f64,
    /// Weight family.
    #[serde(default = "default_weight")]
    pub weight: WeightName,
    /// β of the regular weight.
    #[serde(default)]
    pub weight_beta: Option<f64>,
    /// Coupling.
    #[serde(default = "default_coupling")]
    pub coupling: CouplingName,
}

fn one() -> f64 {
    1.0
}

fn default_weight() -> WeightName {
    WeightName::Power
}

fn default_coupling() -> CouplingName {
    CouplingName::Power
}

/// `[integrator]`; omitted keys follow [`IntegratorConfig::for_horizon`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    /// Relative tolerance.
    pub rel_tol: Option<f64>,
    /// Absolute tolerance.
    pub abs_tol: Option<f64>,
    /// First trial step.
    pub dt_init: Option<f64>,
    /// Smallest step.
    pub dt_min: Option<f64>,
    /// Largest step.
    pub dt_max: Option<f64>,
    /// Proximity guard fraction θ.
    pub proximity_fraction: Option<f64>,
    /// Step budget.
    pub max_steps: Option<usize>,
    /// Snap to exact consensus for γ < 1 (default true).
    pub snap_consensus: Option<bool>,
}

/// `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Final time.
    pub t_final: f64,
    /// Sampling interval.
    pub sample_every: f64,
    /// Seed for the initial-condition generator.
    #[serde(default)]
    pub seed: u64,
    /// Output directory (relative paths resolve against the config file).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write sigma_v.svg and min_dist.svg.
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

/// `[init]`: how the initial state is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSection {
    /// Explicit positions and velocities, one inner array per agent.
    ExplicitList {
        /// Positions.
        positions: Vec<Vec<f64>>,
        /// Velocities.
        velocities: Vec<Vec<f64>>,
    },
    /// Positions uniform in [0, extent]^d, velocities uniform in
    /// [−velocity_scale, velocity_scale]^d, shifted to zero mean.
    UniformBox {
        /// Box side.
        extent: f64,
        /// Velocity half-width.
        #[serde(default = "one")]
        velocity_scale: f64,
        /// Minimum accepted pair distance; defaults to δ + extent/(10N).
        #[serde(default)]
        min_gap: Option<f64>,
    },
    /// Two agents on the first axis, `gap` apart, approaching at `speed`
    /// each.
    HeadOnPair {
        /// Initial distance.
        gap: f64,
        /// Speed of each agent.
        speed: f64,
    },
    /// Cubic lattice with uniform jitter in [−jitter, jitter] per
    /// coordinate; velocities as in `uniform_box`.
    LatticePerturbed {
        /// Lattice spacing.
        spacing: f64,
        /// Jitter half-width.
        jitter: f64,
        /// Velocity half-width.
        #[serde(default = "one")]
        velocity_scale: f64,
    },
}

/// Collision group selection for group monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupSpec {
    /// Explicit member indices.
    Members(Vec<usize>),
    /// `"auto"`: the closest-approach group.
    Auto(String),
}

/// `[checks]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    /// Inequalities to check.
    #[serde(default)]
    pub ids: Vec<String>,
    /// Group for In1/In2, EqMot and Apriori.
    #[serde(default)]
    pub group: Option<GroupSpec>,
    /// Fraction for automatic group selection; defaults to the integrator's
    /// proximity fraction.
    #[serde(default)]
    pub group_fraction: Option<f64>,
    /// β for Es3/Es4.
    #[serde(default)]
    pub theorem3_beta: Option<f64>,
    /// C for Es3/Es4.
    #[serde(default)]
    pub theorem3_c: Option<f64>,
}

/// `[diagnostics]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// C₂ in E±; defaults to 1.
    #[serde(default)]
    pub c2: Option<f64>,
    /// Lower reference of the E± integral.
    #[serde(default)]
    pub s_ref: Option<f64>,
    /// β of the L^β column.
    #[serde(default)]
    pub beta: Option<f64>,
}

/// A whole config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    /// Human-readable label.
    #[serde(default)]
    pub name: Option<String>,
    /// Model.
    pub model: ModelSection,
    /// Integrator overrides.
    #[serde(default)]
    pub integrator: IntegratorSection,
    /// Run control.
    pub run: RunSection,
    /// Initial condition.
    pub init: InitSection,
    /// Checks.
    #[serde(default)]
    pub checks: ChecksSection,
    /// Diagnostics.
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

/// Group selection after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupChoice {
    /// Explicit members.
    Members(Vec<usize>),
    /// Closest-approach group with this fraction.
    Auto(f64),
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Label.
    pub name: String,
    /// Model parameters.
    pub model: ModelParams,
    /// Integrator settings.
    pub integrator: IntegratorConfig,
    /// Final time.
    pub t_final: f64,
    /// Sampling interval.
    pub sample_every: f64,
    /// Seed.
    pub seed: u64,
    /// Initial condition recipe.
    pub init: InitSection,
    /// Requested checks.
    pub checks: Vec<InequalityId>,
    /// Group for group monitors.
    pub group: Option<GroupChoice>,
    /// (β, C) for Es3/Es4.
    pub theorem3: Option<(f64, f64)>,
    /// Diagnostics settings.
    pub diagnostics: DiagnosticsConfig,
    /// Output directory.
    pub output_dir: PathBuf,
    /// Whether to write SVG plots.
    pub plots: bool,
    /// The parsed file, kept for provenance in outputs.
    pub source: ExperimentFile,
}

impl ExperimentFile {
    /// Parses TOML text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads and parses a file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Serializes back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validates and resolves defaults. `base_dir` anchors a relative
    /// `run.output_dir`; `fallback_out` is used when none is given.
    pub fn resolve(&self, base_dir: &Path, fallback_out: &Path) -> Result<ExperimentConfig, ConfigError> {
        let m = &self.model;
        for (field, value) in [("model.alpha", m.alpha), ("model.gamma", m.gamma), ("model.delta", m.delta), ("model.c1", m.c1)] {
            if !value.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if m.alpha < 0.0 {
            return Err(invalid("model.alpha", "must be non-negative"));
        }
        if m.weight_beta.is_some() && m.weight != WeightName::Regular {
            return Err(invalid("model.weight_beta", "only used with weight = \"regular\""));
        }
        let weight = match m.weight {
            WeightName::Power => WeightKind::PowerSingular,
            WeightName::Shifted => WeightKind::ShiftedSingular,
            WeightName::Regular => {
                let beta = m.weight_beta.ok_or_else(|| invalid("model.weight_beta", "required for weight = \"regular\""))?;
                if !(beta >= 0.0) {
                    return Err(invalid("model.weight_beta", "must be non-negative"));
                }
                WeightKind::RegularCs { beta }
            }
            WeightName::CustomPower => {
                if !(m.alpha > 0.0) {
                    return Err(invalid("model.alpha", "custom-power weight needs alpha > 0"));
                }
                WeightKind::Custom(Arc::new(CustomPower::new(m.alpha)))
            }
        };
        let coupling = match m.coupling {
            CouplingName::Power => CouplingKind::PowerLaw,
            CouplingName::Linear => CouplingKind::Linear,
        };
        let model = ModelParams::new(m.n_agents, m.dim)
            .alpha(m.alpha)
            .gamma(m.gamma)
            .delta(m.delta)
            .c1(m.c1)
            .weight(weight)
            .coupling(coupling);
        model.validate()?;

        let r = &self.run;
        if !(r.t_final > 0.0 && r.t_final.is_finite()) {
            return Err(invalid("run.t_final", "must be positive"));
        }
        if !(r.sample_every > 0.0 && r.sample_every <= r.t_final) {
            return Err(invalid("run.sample_every", "must lie in (0, t_final]"));
        }

        let i = &self.integrator;
        let mut integrator = IntegratorConfig::for_horizon(r.t_final);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut integrator.rel_tol, i.rel_tol);
        set(&mut integrator.abs_tol, i.abs_tol);
        set(&mut integrator.dt_init, i.dt_init);
        set(&mut integrator.dt_min, i.dt_min);
        set(&mut integrator.dt_max, i.dt_max);
        set(&mut integrator.proximity_fraction, i.proximity_fraction);
        if let Some(steps) = i.max_steps {
            integrator.max_steps = steps;
        }
        if let Some(snap) = i.snap_consensus {
            integrator.snap_consensus = snap;
        }
        integrator.validate()?;

        self.check_init()?;

        let mut checks = Vec::new();
        for id in &self.checks.ids {
            let parsed: InequalityId = id.parse().map_err(|_| invalid("checks.ids", format!("unknown inequality id `{id}`")))?;
            if !checks.contains(&parsed) {
                checks.push(parsed);
            }
        }
        let group = match &self.checks.group {
            None => None,
            Some(GroupSpec::Auto(s)) if s == "auto" => {
                let f = self.checks.group_fraction.unwrap_or(integrator.proximity_fraction);
                if !(f >= 0.0) {
                    return Err(invalid("checks.group_fraction", "must be non-negative"));
                }
                Some(GroupChoice::Auto(f))
            }
            Some(GroupSpec::Auto(_)) => return Err(invalid("checks.group", "expected a list of indices or \"auto\"")),
            Some(GroupSpec::Members(ms)) => {
                sflock_core::CollisionGroup::new(ms, m.n_agents).map_err(|e| invalid("checks.group", e.to_string()))?;
                Some(GroupChoice::Members(ms.clone()))
            }
        };
        let needs_group = checks.iter().any(|c| matches!(c, InequalityId::In1 | InequalityId::In2 | InequalityId::EqMot | InequalityId::Apriori));
        if needs_group && group.is_none() {
            return Err(invalid("checks.group", "required by In1/In2/EqMot/Apriori"));
        }
        let theorem3 = match (self.checks.theorem3_beta, self.checks.theorem3_c) {
            (Some(b), Some(c)) => Some((b, c)),
            (None, None) => None,
            _ => return Err(invalid("checks.theorem3_beta", "theorem3_beta and theorem3_c go together")),
        };
        if checks.iter().any(|c| matches!(c, InequalityId::Es3 | InequalityId::Es4)) && theorem3.is_none() {
            return Err(invalid("checks.theorem3_c", "Es3/Es4 need theorem3_beta and theorem3_c"));
        }

        let d = &self.diagnostics;
        let diagnostics = DiagnosticsConfig { c2: d.c2.unwrap_or(1.0), s_ref: d.s_ref, beta: d.beta };
        if !(diagnostics.c2 > 0.0) {
            return Err(invalid("diagnostics.c2", "must be positive"));
        }
        if let Some(b) = d.beta {
            if !(b >= 0.0) {
                return Err(invalid("diagnostics.beta", "must be non-negative"));
            }
        }

        let output_dir = match &r.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => base_dir.join(p),
            None => fallback_out.to_path_buf(),
        };
        Ok(ExperimentConfig {
            name: self.name.clone().unwrap_or_else(|| "experiment".to_string()),
            model,
            integrator,
            t_final: r.t_final,
            sample_every: r.sample_every,
            seed: r.seed,
            init: self.init.clone(),
            checks,
            group,
            theorem3,
            diagnostics,
            output_dir,
            plots: r.plots,
            source: self.clone(),
        })
    }

    fn check_init(&self) -> Result<(), ConfigError> {
        let (n, d) = (self.model.n_agents, self.model.dim);
        match &self.init {
            InitSection::ExplicitList { positions, velocities } => {
                if positions.len() != n || positions.iter().any(|p| p.len() != d) {
                    return Err(invalid("init.positions", format!("expected {n} rows of {d} coordinates")));
                }
                if velocities.len() != n || velocities.iter().any(|p| p.len() != d) {
                    return Err(invalid("init.velocities", format!("expected {n} rows of {d} coordinates")));
                }
            }
            InitSection::UniformBox { extent, velocity_scale, min_gap } => {
                if !(*extent > 0.0) {
                    return Err(invalid("init.extent", "must be positive"));
                }
                if !(*velocity_scale >= 0.0) {
                    return Err(invalid("init.velocity_scale", "must be non-negative"));
                }
                if let Some(g) = min_gap {
                    if !(*g >= 0.0) {
                        return Err(invalid("init.min_gap", "must be non-negative"));
                    }
                }
            }
            InitSection::HeadOnPair { gap, speed } => {
                if n != 2 {
                    return Err(invalid("model.n_agents", "head_on_pair needs exactly 2 agents"));
                }
                if !(*gap > 0.0) {
                    return Err(invalid("init.gap", "must be positive"));
                }
                if !speed.is_finite() {
                    return Err(invalid("init.speed", "must be finite"));
                }
            }
            InitSection::LatticePerturbed { spacing, jitter, velocity_scale } => {
                if !(*spacing > 0.0) {
                    return Err(invalid("init.spacing", "must be positive"));
                }
                if !(*jitter >= 0.0 && *jitter < 0.5 * spacing) {
                    return Err(invalid("init.jitter", "must lie in [0, spacing/2)"));
                }
                if !(*velocity_scale >= 0.0) {
                    return Err(invalid("init.velocity_scale", "must be non-negative"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
n_agents = 2
dim = 1
alpha = 1.0

[run]
t_final = 1.0
sample_every = 0.1

[init]
kind = "head_on_pair"
gap = 1.0
speed = 0.25
"#;

    fn resolve(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentFile::parse(text)?.resolve(Path::new("."), Path::new("out"))
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let dotted = r#"
model.n_agents = 2
model.dim = 1
model.alpha = 1.0
run.t_final = 1.0
run.sample_every = 0.1
init.kind = "head_on_pair"
init.gap = 1.0
init.speed = 0.25
"#;
        assert_eq!(ExperimentFile::parse(BASE).unwrap(), ExperimentFile::parse(dotted).unwrap());
    }

    #[test]
    fn negative_alpha_names_field() {
        let err = resolve(&BASE.replace("alpha = 1.0", "alpha = -1.0")).unwrap_err();
        assert!(err.to_string().contains("model.alpha"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = resolve(&BASE.replace("alpha = 1.0", "alpah = 1.0")).unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn integer_literals_are_not_floats() {
        // TOML distinguishes 1 from 1.0; the error should say where.
        let err = resolve(&BASE.replace("alpha = 1.0", "alpha = 1")).map(|_| ());
        if let Err(e) = err {
            assert!(e.to_string().contains("alpha"), "{e}");
        }
    }

    #[test]
    fn group_required_for_group_checks() {
        let text = format!("{BASE}\n[checks]\nids = [\"EqMot\"]\n");
        assert!(resolve(&text).unwrap_err().to_string().contains("checks.group"));
        let text = format!("{BASE}\n[checks]\nids = [\"EqMot\"]\ngroup = [0, 1]\n");
        assert_eq!(resolve(&text).unwrap().group, Some(GroupChoice::Members(vec![0, 1])));
        let text = format!("{BASE}\n[checks]\nids = [\"Es9\"]\n");
        assert!(resolve(&text).unwrap_err().to_string().contains("Es9"));
    }

    #[test]
    fn round_trips_through_toml() {
        let f = ExperimentFile::parse(BASE).unwrap();
        assert_eq!(ExperimentFile::parse(&f.to_toml()).unwrap(), f);
    }

    #[test]
    fn head_on_needs_two_agents() {
        let err = resolve(&BASE.replace("n_agents = 2", "n_agents = 3")).unwrap_err();
        assert!(err.to_string().contains("n_agents"));
    }
}
