//! Shipped experiments. Each is an ordinary config file embedded in the
//! binary; `sflock preset <name>` runs it exactly as `sflock run` would.

use crate::config::{ConfigError, ExperimentConfig, ExperimentFile};
use std::fmt::Write;
use std::path::Path;

/// One shipped experiment.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    /// Name used on the command line.
    pub name: &'static str,
    /// What the run demonstrates.
    pub claim: &'static str,
    /// Config text.
    pub toml: &'static str,
}

macro_rules! preset {
    ($name:literal, $claim:literal) => {
        Preset { name: $name, claim: $claim, toml: include_str!(concat!("../presets/", $name, ".toml")) }
    };
}

/// Every shipped preset.
pub const PRESETS: &[Preset] = &[
    preset!("flock-linear", "gamma = 1: exponential flocking; momentum conserved, energy dissipated"),
    preset!("flock-finite-time", "gamma < 1 with a heavy tail: velocities align in finite time"),
    preset!("flock-algebraic", "gamma > 1: algebraic flocking rate"),
    preset!("collision-test", "alpha >= 1: a head-on pair never collides (group dissipation with c1 = c2 = 0)"),
    preset!("collision-test-superlinear", "collision avoidance for gamma = 1.25"),
    preset!("subcritical-contrast", "alpha < 1: the same head-on pair reaches contact"),
    preset!("theorem2-es1", "alpha = 2 gamma: logarithmic distance bound grows at most linearly"),
    preset!("theorem2-es2", "alpha > 2 gamma: beta-distance bound grows at most linearly"),
    preset!("theorem3-custom", "user weight s^-3 with admissible (C, beta): growth condition and distance bound"),
    preset!("group-dissipation", "a 3-agent collision group inside 6 agents dissipates its velocity fluctuation"),
    preset!("consensus-linear", "constant weight, gamma = 1: consensus rate equals 1"),
];

/// Looks a preset up by name.
pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    /// Parses the embedded config.
    pub fn file(&self) -> ExperimentFile {
        ExperimentFile::parse(self.toml).expect("shipped presets parse")
    }

    /// Resolves the preset with output under `out_root/<name>`.
    pub fn config(&self, out_root: &Path) -> Result<ExperimentConfig, ConfigError> {
        self.file().resolve(out_root, &out_root.join(self.name))
    }

    /// One-line parameter summary.
    pub fn summary(&self) -> String {
        let f = self.file();
        let m = &f.model;
        let weight = serde_json::to_value(m.weight).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let mut s = format!("N={} d={} {} alpha={} gamma={} T={}", m.n_agents, m.dim, weight, m.alpha, m.gamma, f.run.t_final);
        if let Some(b) = m.weight_beta {
            let _ = write!(s, " beta={b}");
        }
        if !f.checks.ids.is_empty() {
            let _ = write!(s, " checks={}", f.checks.ids.join(","));
        }
        s
    }
}

/// The table printed by `sflock presets`.
pub fn list_presets() -> String {
    let rows: Vec<(&str, String, &str)> = PRESETS.iter().map(|p| (p.name, p.summary(), p.claim)).collect();
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{:w0$}  {:w1$}  claim\n", "name", "parameters");
    for (name, params, claim) in rows {
        let _ = writeln!(out, "{name:w0$}  {params:w1$}  {claim}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for p in PRESETS {
            let cfg = p.config(Path::new("/tmp/out")).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.name, p.name);
            assert_eq!(cfg.output_dir, Path::new("/tmp/out").join(p.name));
        }
    }

    #[test]
    fn table_lists_required_presets() {
        let t = list_presets();
        for name in [
            "flock-linear",
            "flock-finite-time",
            "flock-algebraic",
            "collision-test",
            "theorem2-es1",
            "theorem2-es2",
            "theorem3-custom",
            "subcritical-contrast",
        ] {
            assert!(t.lines().any(|l| l.starts_with(name)), "{name}");
        }
    }
}
