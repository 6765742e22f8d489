//! Running an experiment end to end: build the initial state, integrate,
//! check, and write artifacts.

use crate::config::{ConfigError, ExperimentConfig, ExperimentFile, GroupChoice};
use crate::init;
use crate::io::{self, json_num, IoError};
use crate::parallel::{threads_from_env, ThreadedField};
use crate::svg;
use serde_json::json;
use sflock_core::diagnostics::{classify_flocking, FlockRegime, FlockReport};
use sflock_core::guards::{self, auto_group, CollisionGroup, InequalityId};
use sflock_core::integrator::simulate_with;
use sflock_core::sampling::PRNG_ALGORITHM;
use sflock_core::diagnostics::ResolvedDiagnostics;
use sflock_core::{BoundReport, Dynamics, Event, ParticleState, Sample, TerminalStatus, TrajectoryRecord};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

/// Exit code: completed, all checks passed.
pub const EXIT_OK: i32 = 0;
/// Exit code: configuration or input error.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code: a check failed (or the step budget ran out).
pub const EXIT_CHECK_FAILED: i32 = 2;
/// Exit code: the proximity guard stalled.
pub const EXIT_SINGULARITY: i32 = 3;

/// Everything that can stop an experiment before its checks run.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad config.
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    /// Bad initial state or parameters.
    #[error("{0}")]
    Model(#[from] sflock_core::Error),
    /// Writing artifacts failed.
    #[error("output error: {0}")]
    Output(#[from] IoError),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Output(IoError::Io(e))
    }
}

/// Result of one requested check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    /// The id as requested.
    pub requested: InequalityId,
    /// The report, or the error that prevented it.
    pub report: Result<BoundReport, sflock_core::Error>,
    /// For Es3/Es4: whether the growth condition failed.
    pub vacuous: bool,
}

impl CheckOutcome {
    /// Whether the check ran and passed.
    pub fn passed(&self) -> bool {
        !self.vacuous && self.report.as_ref().is_ok_and(|r| r.pass)
    }
}

/// In-memory result of [`run`].
#[derive(Debug)]
pub struct Outcome {
    /// The resolved config.
    pub config: ExperimentConfig,
    /// The initial state.
    pub initial: ParticleState,
    /// The trajectory.
    pub record: TrajectoryRecord,
    /// Check results in request order.
    pub checks: Vec<CheckOutcome>,
    /// The collision group used by group checks.
    pub group: Option<CollisionGroup>,
    /// Flocking classification, when the record allows one.
    pub flock: Option<FlockReport>,
    /// Exit code.
    pub exit_code: i32,
    /// The summary written to summary.json.
    pub summary: serde_json::Value,
}

/// Integrates and checks without touching the filesystem.
pub fn run(config: ExperimentConfig) -> Result<Outcome, RunError> {
    let initial = init::build(&config.init, &config.model, config.seed)?;
    let field = ThreadedField::new(Dynamics::new(&config.model)?, threads_from_env());
    let record = simulate_with(&field, &initial, &config.model, &config.integrator, config.t_final, config.sample_every, &config.diagnostics)?;

    let completed = record.terminal_status == TerminalStatus::Completed;
    let group = match (&config.group, completed) {
        (Some(GroupChoice::Members(m)), _) => Some(CollisionGroup::new(m, config.model.n_agents)?),
        (Some(GroupChoice::Auto(f)), true) => auto_group(&record, *f).ok(),
        _ => None,
    };
    let checks = if completed { run_checks(&config, &record, group.as_ref()) } else { Vec::new() };
    let flock = if completed { classify_flocking(&record, &config.model).ok() } else { None };
    let exit_code = match record.terminal_status {
        TerminalStatus::AbortedSingularity => EXIT_SINGULARITY,
        TerminalStatus::AbortedMaxSteps => EXIT_CHECK_FAILED,
        TerminalStatus::Completed if checks.iter().all(CheckOutcome::passed) => EXIT_OK,
        TerminalStatus::Completed => EXIT_CHECK_FAILED,
    };
    let summary = summarize(&config, &record, &checks, group.as_ref(), flock.as_ref(), exit_code);
    Ok(Outcome { config, initial, record, checks, group, flock, exit_code, summary })
}

/// Runs the checks requested in `config` against a completed record.
pub fn run_checks(config: &ExperimentConfig, record: &TrajectoryRecord, group: Option<&CollisionGroup>) -> Vec<CheckOutcome> {
    let params = &config.model;
    let missing_group = || sflock_core::Error::Parameter { field: "checks.group", reason: "no collision group could be formed" };
    config
        .checks
        .iter()
        .map(|&id| {
            let mut vacuous = false;
            let report = match id {
                InequalityId::In1 | InequalityId::In2 => {
                    group.ok_or_else(missing_group).and_then(|g| guards::dissipation_check(record, g, params))
                }
                InequalityId::Es1 | InequalityId::Es2 => guards::theorem2_check(record, params),
                InequalityId::Es3 | InequalityId::Es4 => {
                    let (beta, c) = config.theorem3.expect("validated with the config");
                    guards::theorem3_check(record, &params.weight_fn(), beta, c, params).map(|r| {
                        vacuous = r.vacuous;
                        r.bounds
                    })
                }
                InequalityId::MomEq => guards::momeq_check(record),
                InequalityId::EqMot => group.ok_or_else(missing_group).and_then(|g| guards::eqmot_check(record, g)),
                InequalityId::Apriori => group.ok_or_else(missing_group).and_then(|g| guards::apriori_check(record, g)),
            };
            CheckOutcome { requested: id, report, vacuous }
        })
        .collect()
}

fn status_name(s: TerminalStatus) -> &'static str {
    match s {
        TerminalStatus::Completed => "Completed",
        TerminalStatus::AbortedSingularity => "AbortedSingularity",
        TerminalStatus::AbortedMaxSteps => "AbortedMaxSteps",
    }
}

fn regime_json(f: &FlockReport) -> serde_json::Value {
    let (name, value) = match f.regime {
        FlockRegime::FiniteTime { t_star } => ("FiniteTime", json!({ "t_star": t_star })),
        FlockRegime::Exponential { rate } => ("Exponential", json!({ "rate": rate })),
        FlockRegime::Algebraic { exponent } => ("Algebraic", json!({ "exponent": exponent })),
        FlockRegime::NoFlock => ("NoFlock", json!({})),
        FlockRegime::Undetermined => ("Undetermined", json!({})),
    };
    json!({
        "regime": name,
        "parameters": value,
        "fit_quality": json_num(f.fit_quality),
        "sup_sigma_x": json_num(f.sup_sigma_x),
        "sup_max_dist": json_num(f.sup_max_dist),
    })
}

fn summarize(
    config: &ExperimentConfig,
    record: &TrajectoryRecord,
    checks: &[CheckOutcome],
    group: Option<&CollisionGroup>,
    flock: Option<&FlockReport>,
    exit_code: i32,
) -> serde_json::Value {
    let near: Vec<_> = record
        .events
        .iter()
        .filter_map(|e| match e {
            Event::NearCollision { pair, distance, time } => Some(json!({ "pair": [pair.0, pair.1], "distance": distance, "time": time })),
            _ => None,
        })
        .collect();
    let forced = record.events.iter().filter(|e| matches!(e, Event::ToleranceForced { .. })).count();
    let flock_time = record.events.iter().find_map(|e| match e {
        Event::FlockDetected { time } => Some(*time),
        _ => None,
    });
    let snapped = record.events.iter().find_map(|e| match e {
        Event::ConsensusSnapped { time, .. } => Some(*time),
        _ => None,
    });
    let check_json: Vec<_> = checks
        .iter()
        .map(|c| match &c.report {
            Ok(r) => {
                let mut v = io::bound_json(r);
                v["requested"] = json!(c.requested.name());
                v["vacuous"] = json!(c.vacuous);
                v["pass"] = json!(c.passed());
                v
            }
            Err(e) => json!({ "requested": c.requested.name(), "pass": false, "error": e.to_string() }),
        })
        .collect();
    let first = record.samples.first().map(|s| &s.frame);
    let last = record.samples.last().map(|s| &s.frame);
    json!({
        "name": config.name,
        "prng": PRNG_ALGORITHM,
        "seed": config.seed,
        "threads": threads_from_env(),
        "model": {
            "n_agents": config.model.n_agents,
            "dim": config.model.dim,
            "alpha": config.model.alpha,
            "gamma": config.model.gamma,
            "delta": config.model.delta,
            "c1": config.model.c1,
            "weight": format!("{:?}", config.model.weight),
            "coupling": format!("{:?}", config.model.coupling),
        },
        "t_final": config.t_final,
        "sample_every": config.sample_every,
        "terminal_status": status_name(record.terminal_status),
        "exit_code": exit_code,
        "steps_accepted": record.steps_accepted,
        "steps_rejected": record.steps_rejected,
        "tolerance_forced_steps": forced,
        "samples": record.samples.len(),
        "min_dist": json_num(record.min_distance()),
        "initial_min_dist": first.map(|f| json_num(f.min_dist)),
        "sigma_v_initial": first.map(|f| json_num(f.sigma_v)),
        "sigma_v_final": last.map(|f| json_num(f.sigma_v)),
        "flock_detected_at": flock_time,
        "consensus_snapped_at": snapped,
        "near_collisions": near,
        "group": group.map(|g| g.members().to_vec()),
        "flocking": flock.map(regime_json),
        "checks": check_json,
    })
}

/// Writes every artifact for `outcome` into its output directory.
pub fn write_outputs(outcome: &Outcome) -> Result<(), RunError> {
    let dir = &outcome.config.output_dir;
    fs::create_dir_all(dir)?;
    io::write_trajectory(BufWriter::new(File::create(dir.join("trajectory.csv"))?), &outcome.record.samples)?;
    let frames: Vec<_> = outcome.record.samples.iter().map(|s| &s.frame).collect();
    io::write_diagnostics(BufWriter::new(File::create(dir.join("diagnostics.csv"))?), &frames)?;
    for c in &outcome.checks {
        if let Ok(r) = &c.report {
            io::write_bounds(BufWriter::new(File::create(dir.join(format!("bounds_{}.csv", c.requested.name())))?), r)?;
        }
    }
    fs::write(dir.join("config.toml"), outcome.config.source.to_toml())?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&outcome.summary).map_err(IoError::Json)? + "\n")?;
    if outcome.config.plots {
        let sv: Vec<_> = frames.iter().map(|f| (f.time, f.sigma_v)).collect();
        fs::write(dir.join("sigma_v.svg"), svg::line_plot("velocity spread", "sigma_v (log10)", &sv, true))?;
        let md: Vec<_> = frames.iter().map(|f| (f.time, f.min_dist)).collect();
        fs::write(dir.join("min_dist.svg"), svg::line_plot("minimum pair distance", "min_dist (log10)", &md, true))?;
    }
    Ok(())
}

/// Loads `path`, runs it and writes artifacts. Relative output paths
/// resolve against the config's directory; without `run.output_dir` the
/// output goes to `<config stem>_out` beside it.
pub fn run_experiment(path: &Path) -> Result<Outcome, RunError> {
    let file = ExperimentFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    let config = file.resolve(base, &base.join(format!("{stem}_out")))?;
    run_and_write(config)
}

/// [`run`] followed by [`write_outputs`].
pub fn run_and_write(config: ExperimentConfig) -> Result<Outcome, RunError> {
    let outcome = run(config)?;
    write_outputs(&outcome)?;
    Ok(outcome)
}

/// Exit code for an error that stopped the run before checks.
pub fn error_exit_code(e: &RunError) -> i32 {
    match e {
        RunError::Model(sflock_core::Error::SingularityStall { .. }) => EXIT_SINGULARITY,
        _ => EXIT_CONFIG,
    }
}

/// Rebuilds a completed record from states read back from
/// `trajectory.csv`, recomputing the diagnostics frames.
pub fn record_from_states(states: Vec<ParticleState>, config: &ExperimentConfig) -> Result<TrajectoryRecord, RunError> {
    let first = states.first().ok_or(sflock_core::Error::InsufficientData { needed: 1, got: 0 })?;
    first.check_shape(&config.model)?;
    let diag = ResolvedDiagnostics::new(&config.diagnostics, first, &config.model)?;
    let samples = states.into_iter().map(|state| Sample { frame: diag.frame(&state), state }).collect();
    Ok(TrajectoryRecord { samples, events: Vec::new(), terminal_status: TerminalStatus::Completed, steps_accepted: 0, steps_rejected: 0 })
}

/// `sflock check`: runs `ids` against a stored trajectory. The model comes
/// from `config_path`, or from `config.toml` beside the trajectory.
pub fn check_trajectory(
    trajectory: &Path,
    ids: &[InequalityId],
    config_path: Option<&Path>,
    group: Option<Vec<usize>>,
) -> Result<(Vec<CheckOutcome>, i32), RunError> {
    let config_path = match config_path {
        Some(p) => p.to_path_buf(),
        None => trajectory.parent().unwrap_or(Path::new(".")).join("config.toml"),
    };
    let mut file = ExperimentFile::load(&config_path)?;
    file.checks.ids = ids.iter().map(|id| id.name().to_string()).collect();
    if let Some(g) = group {
        file.checks.group = Some(crate::config::GroupSpec::Members(g));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config = file.resolve(base, base)?;
    let states = io::read_trajectory(File::open(trajectory)?)?;
    let record = record_from_states(states, &config)?;
    let group = match &config.group {
        Some(GroupChoice::Members(m)) => Some(CollisionGroup::new(m, config.model.n_agents)?),
        Some(GroupChoice::Auto(f)) => Some(auto_group(&record, *f)?),
        None => None,
    };
    let checks = run_checks(&config, &record, group.as_ref());
    let code = if checks.iter().all(CheckOutcome::passed) { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok((checks, code))
}
