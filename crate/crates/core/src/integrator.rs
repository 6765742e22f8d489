//! Time integration.
//!
//! [`Stepper`] takes Dormand–Prince 5(4) steps with the usual mixed
//! absolute/relative error control plus a proximity guard: a step is
//! rejected and halved when the smallest pair gap (distance minus the
//! weight's singular point) changes by more than a fraction θ of its
//! pre-step value. If the guard is still rejecting once the step has shrunk
//! to `dt_min`, integration stops with [`Error::SingularityStall`] instead of
//! regularizing the weight.
//!
//! [`simulate`] samples the trajectory on a uniform grid using cubic Hermite
//! interpolation between accepted steps; [`oracle_integrate`] is a plain
//! fixed-step RK4 used to cross-check the adaptive path.
//!
//! For γ < 1 the coupling is not Lipschitz at 0 and solutions need not be
//! unique; the integrator follows one of them without trying to detect
//! branching.

use crate::diagnostics::{DiagnosticsConfig, DiagnosticsFrame, ResolvedDiagnostics};
use crate::dynamics::{min_pair_in, AccelerationField, Dynamics};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParticleState};
use alloc::vec;
use alloc::vec::Vec;

/// Step-control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Relative tolerance.
    pub rel_tol: f64,
    /// Absolute tolerance.
    pub abs_tol: f64,
    /// First step tried.
    pub dt_init: f64,
    /// Smallest admissible step.
    pub dt_min: f64,
    /// Largest admissible step.
    pub dt_max: f64,
    /// Proximity-guard fraction θ ∈ (0, 1).
    pub proximity_fraction: f64,
    /// Cap on accepted steps.
    pub max_steps: usize,
    /// For γ < 1, replace the velocities by their mean once σ_v falls to
    /// 1e−12·σ_v(0) or to 100·(abs_tol + rel_tol·|v̄|∞), the level where
    /// the error control stops resolving relative velocities, whichever is
    /// larger. The exact flow reaches
    /// consensus in finite time and stays there, but the coupling is not
    /// Lipschitz at zero, so an explicit method would otherwise shrink its
    /// steps without bound. From σ_v the exact flow needs time
    /// O(σ_v^{2−2γ}) to reach consensus, so the snap moves positions by
    /// O(σ_v^{3−2γ}).
    pub snap_consensus: bool,
}

impl IntegratorConfig {
    /// Defaults scaled to a horizon: tolerances 1e−10/1e−12, θ = 0.2,
    /// dt_min = 1e−12·t_final.
    pub fn for_horizon(t_final: f64) -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            dt_init: (1e-3 * t_final).min(1e-2),
            dt_min: 1e-12 * t_final,
            dt_max: 0.1 * t_final,
            proximity_fraction: 0.2,
            max_steps: 10_000_000,
            snap_consensus: true,
        }
    }

    /// Checks the invariants dt_min ≤ dt_init ≤ dt_max and 0 < θ < 1.
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rel_tol) {
            return Err(Error::Parameter { field: "rel_tol", reason: "must be positive" });
        }
        if !positive(self.abs_tol) {
            return Err(Error::Parameter { field: "abs_tol", reason: "must be positive" });
        }
        if !positive(self.dt_min) || !positive(self.dt_init) || !positive(self.dt_max) {
            return Err(Error::Parameter { field: "dt_init", reason: "step sizes must be positive" });
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Parameter { field: "dt_init", reason: "need dt_min <= dt_init <= dt_max" });
        }
        if !(self.proximity_fraction > 0.0 && self.proximity_fraction < 1.0) {
            return Err(Error::Parameter { field: "proximity_fraction", reason: "must lie in (0, 1)" });
        }
        if self.max_steps == 0 {
            return Err(Error::Parameter { field: "max_steps", reason: "must be positive" });
        }
        Ok(())
    }
}

/// Why a trial step was thrown away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Embedded error estimate above tolerance.
    Tolerance,
    /// Minimum gap changed by more than θ.
    Proximity,
    /// A stage left the weight's domain.
    OutOfDomain,
}

/// Noteworthy things that happened during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// The proximity guard fired at a new closest approach (logged each time
    /// the gap halves).
    NearCollision {
        /// Closest pair.
        pair: (usize, usize),
        /// Their distance.
        distance: f64,
        /// Time of the pre-step state.
        time: f64,
    },
    /// A trial step was rejected.
    StepRejected {
        /// Time of the pre-step state.
        time: f64,
        /// Reason.
        reason: RejectReason,
    },
    /// A step at `dt_min` was accepted although its error estimate exceeded
    /// the tolerance.
    ToleranceForced {
        /// Time of the pre-step state.
        time: f64,
    },
    /// σ_v dropped below 1e−12·σ_v(0).
    FlockDetected {
        /// Sample time.
        time: f64,
    },
    /// Velocities were set to their mean (see
    /// [`IntegratorConfig::snap_consensus`]).
    ConsensusSnapped {
        /// Step time.
        time: f64,
        /// σ_v just before the snap.
        sigma_v: f64,
    },
}

/// How a simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    /// Reached `t_final`.
    Completed,
    /// The proximity guard stalled.
    AbortedSingularity,
    /// Hit `max_steps`.
    AbortedMaxSteps,
}

/// One sampled instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// The state (its `time` is the sample time).
    pub state: ParticleState,
    /// Observables at that state.
    pub frame: DiagnosticsFrame,
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Samples with strictly increasing times.
    pub samples: Vec<Sample>,
    /// Integration events in order of occurrence.
    pub events: Vec<Event>,
    /// How the run ended.
    pub terminal_status: TerminalStatus,
    /// Accepted steps.
    pub steps_accepted: usize,
    /// Rejected trial steps.
    pub steps_rejected: usize,
}

impl TrajectoryRecord {
    /// Sample times.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.time)
    }

    /// Smallest pair distance over all samples.
    pub fn min_distance(&self) -> f64 {
        self.samples.iter().map(|s| s.frame.min_dist).fold(f64::INFINITY, f64::min)
    }

    /// Errors unless the run completed.
    pub fn require_completed(&self) -> Result<()> {
        if self.terminal_status == TerminalStatus::Completed {
            Ok(())
        } else {
            Err(Error::IncompleteRecord)
        }
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes c_i
// are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const GROW_MAX: f64 = 5.0;
const SHRINK_MIN: f64 = 0.2;

/// Phase-space vector field y = (x, v) ↦ (v, a(x, v)).
fn eval_system<F: AccelerationField + ?Sized>(field: &F, y: &[f64], out: &mut [f64]) -> Result<()> {
    let m = y.len() / 2;
    let (x, v) = y.split_at(m);
    let (dx, dv) = out.split_at_mut(m);
    dx.copy_from_slice(v);
    field.accelerations(x, v, dv)
}

fn min_gap<F: AccelerationField + ?Sized>(field: &F, y: &[f64]) -> (f64, (usize, usize)) {
    let m = y.len() / 2;
    let (r, pair) = min_pair_in(&y[..m], field.n_agents(), field.dim());
    (r - field.weight().collision_floor(), pair)
}

/// Result of one accepted adaptive step.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedStep {
    /// Step actually taken.
    pub dt_used: f64,
    /// Suggested next step.
    pub dt_next: f64,
    /// Rejections and guard events encountered on the way.
    pub events: Vec<Event>,
}

/// Reusable Dormand–Prince stepper over a vector field.
pub struct Stepper<'f, F: AccelerationField + ?Sized> {
    field: &'f F,
    cfg: IntegratorConfig,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    last_near_collision: f64,
}

impl<'f, F: AccelerationField + ?Sized> Stepper<'f, F> {
    /// Stepper for `field`; `cfg` is validated.
    pub fn new(field: &'f F, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let len = 2 * field.n_agents() * field.dim();
        Ok(Self {
            field,
            cfg,
            k: core::array::from_fn(|_| vec![0.0; len]),
            stage: vec![0.0; len],
            y_new: vec![0.0; len],
            last_near_collision: f64::INFINITY,
        })
    }

    /// Proposed state after the last accepted step.
    pub fn y_new(&self) -> &[f64] {
        &self.y_new
    }

    /// f(y_new) after the last accepted step (first-same-as-last).
    pub fn f_new(&self) -> &[f64] {
        &self.k[6]
    }

    /// Logs a [`Event::NearCollision`] when the guard is active and the gap
    /// above the collision floor has halved since the last one.
    fn note_near_collision(&mut self, gap: f64, pair: (usize, usize), time: f64, events: &mut Vec<Event>) {
        if gap < 0.5 * self.last_near_collision {
            self.last_near_collision = gap;
            let distance = gap + self.field.weight().collision_floor();
            events.push(Event::NearCollision { pair, distance, time });
        }
    }

    /// Runs the seven stages from (y, f0) with step h and returns the scaled
    /// error norm.
    fn trial(&mut self, y: &[f64], f0: &[f64], h: f64) -> Result<f64> {
        self.k[0].copy_from_slice(f0);
        for s in 1..7 {
            for idx in 0..y.len() {
                let mut acc = 0.0;
                for (r, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[r][idx];
                }
                self.stage[idx] = y[idx] + h * acc;
            }
            eval_system(self.field, &self.stage, &mut self.k[s])?;
        }
        // Stage 7 is evaluated at the fifth-order solution.
        self.y_new.copy_from_slice(&self.stage);
        let mut sum = 0.0;
        for idx in 0..y.len() {
            let mut err = 0.0;
            for (s, e) in E.iter().enumerate() {
                err += e * self.k[s][idx];
            }
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * y[idx].abs().max(self.y_new[idx].abs());
            let ratio = h * err / scale;
            sum += ratio * ratio;
        }
        Ok(libm::sqrt(sum / y.len() as f64))
    }

    /// One accepted step from (t, y) with f0 = f(y), starting from `dt_try`
    /// and never stepping past `t_limit`. On success the new state and its
    /// derivative are in [`Stepper::y_new`] and [`Stepper::f_new`].
    pub fn step(&mut self, t: f64, y: &[f64], f0: &[f64], dt_try: f64, t_limit: f64) -> Result<AcceptedStep> {
        let cfg = self.cfg;
        let remaining = t_limit - t;
        let mut dt = dt_try.clamp(cfg.dt_min, cfg.dt_max).min(remaining);
        let (gap_old, pair_old) = min_gap(self.field, y);
        let mut events = Vec::new();
        loop {
            let (reason, factor) = match self.trial(y, f0, dt) {
                Err(Error::Singularity { .. }) => (RejectReason::OutOfDomain, 0.5),
                Err(e) => return Err(e),
                Ok(err) if err > 1.0 || !err.is_finite() => {
                    let factor = if err.is_finite() { (SAFETY * libm::pow(err, -0.2)).max(SHRINK_MIN) } else { SHRINK_MIN };
                    (RejectReason::Tolerance, factor)
                }
                Ok(err) => {
                    let (gap_new, pair_new) = min_gap(self.field, &self.y_new);
                    let change = (gap_new - gap_old).abs();
                    if change > cfg.proximity_fraction * gap_old || !(gap_new > 0.0) {
                        (RejectReason::Proximity, 0.5)
                    } else {
                        let mut grow = if err == 0.0 { GROW_MAX } else { (SAFETY * libm::pow(err, -0.2)).clamp(SHRINK_MIN, GROW_MAX) };
                        if change > 0.0 {
                            // Anticipate the guard on the next step.
                            let limit = (SAFETY * cfg.proximity_fraction * gap_new / change).max(SHRINK_MIN);
                            if limit < grow && gap_new < gap_old {
                                grow = limit;
                                self.note_near_collision(gap_new, pair_new, t + dt, &mut events);
                            }
                        }
                        let dt_next = (dt * grow).clamp(cfg.dt_min, cfg.dt_max);
                        return Ok(AcceptedStep { dt_used: dt, dt_next, events });
                    }
                }
            };
            events.push(Event::StepRejected { time: t, reason });
            if reason != RejectReason::Tolerance {
                self.note_near_collision(gap_old, pair_old, t, &mut events);
            }
            let next = dt * factor;
            if next >= cfg.dt_min {
                dt = next;
                continue;
            }
            if dt > cfg.dt_min {
                dt = cfg.dt_min.min(remaining);
                continue;
            }
            if reason == RejectReason::Tolerance {
                // Already at dt_min: accept the step as is.
                if self.trial(y, f0, dt).is_ok() {
                    let (gap_new, _) = min_gap(self.field, &self.y_new);
                    if (gap_new - gap_old).abs() <= cfg.proximity_fraction * gap_old {
                        events.push(Event::ToleranceForced { time: t });
                        return Ok(AcceptedStep { dt_used: dt, dt_next: cfg.dt_min, events });
                    }
                }
            }
            return Err(Error::SingularityStall { time: t, dt: next });
        }
    }
}

/// Outcome of [`step_adaptive`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    /// State after the step.
    pub state: ParticleState,
    /// Step taken.
    pub dt_used: f64,
    /// Suggested next step.
    pub dt_next: f64,
    /// Rejections and guard events.
    pub events: Vec<Event>,
}

/// A single adaptive step of size at most `cfg.dt_init` from `state`.
pub fn step_adaptive(state: &ParticleState, params: &ModelParams, cfg: &IntegratorConfig) -> Result<AdaptiveStep> {
    state.check_shape(params)?;
    let dynamics = Dynamics::new(params)?;
    let y = pack(state);
    let mut f0 = vec![0.0; y.len()];
    eval_system(&dynamics, &y, &mut f0)?;
    let mut stepper = Stepper::new(&dynamics, *cfg)?;
    let accepted = stepper.step(state.time, &y, &f0, cfg.dt_init, f64::INFINITY)?;
    Ok(AdaptiveStep {
        state: unpack(stepper.y_new(), state.time + accepted.dt_used, state.n_agents, state.dim),
        dt_used: accepted.dt_used,
        dt_next: accepted.dt_next,
        events: accepted.events,
    })
}

fn pack(state: &ParticleState) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * state.positions.len());
    y.extend_from_slice(&state.positions);
    y.extend_from_slice(&state.velocities);
    y
}

fn unpack(y: &[f64], time: f64, n: usize, d: usize) -> ParticleState {
    let m = n * d;
    ParticleState { time, n_agents: n, dim: d, positions: y[..m].to_vec(), velocities: y[m..].to_vec() }
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, theta: f64, out: &mut [f64]) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
}

/// Sample grid t0, t0 + Δ, …, ending exactly at t_final.
fn sample_times(t0: f64, t_final: f64, every: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = t0 + k as f64 * every;
        if t >= t_final - 1e-9 * every {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_final);
    times
}

/// Integrates from `initial` to `t_final` with the built-in dynamics.
pub fn simulate(
    initial: &ParticleState,
    params: &ModelParams,
    cfg: &IntegratorConfig,
    t_final: f64,
    sample_every: f64,
    diag: &DiagnosticsConfig,
) -> Result<TrajectoryRecord> {
    let dynamics = Dynamics::new(params)?;
    simulate_with(&dynamics, initial, params, cfg, t_final, sample_every, diag)
}

/// Integrates with an arbitrary acceleration field (e.g. a threaded one).
/// `params` supplies γ, C₁ and the weight for the diagnostics.
pub fn simulate_with<F: AccelerationField + ?Sized>(
    field: &F,
    initial: &ParticleState,
    params: &ModelParams,
    cfg: &IntegratorConfig,
    t_final: f64,
    sample_every: f64,
    diag: &DiagnosticsConfig,
) -> Result<TrajectoryRecord> {
    params.validate()?;
    initial.check_shape(params)?;
    if !(t_final > initial.time) || !t_final.is_finite() {
        return Err(Error::Parameter { field: "t_final", reason: "must exceed the initial time" });
    }
    if !(sample_every > 0.0 && sample_every <= t_final - initial.time) {
        return Err(Error::Parameter { field: "sample_every", reason: "must lie in (0, t_final - t0]" });
    }
    let (d0, pair) = min_pair_in(&initial.positions, initial.n_agents, initial.dim);
    if !(d0 > 0.0) {
        return Err(Error::Singularity { i: pair.0, j: pair.1, distance: d0 });
    }
    let resolved = ResolvedDiagnostics::new(diag, initial, params)?;

    let n = initial.n_agents;
    let d = initial.dim;
    let mut y = pack(initial);
    let mut f0 = vec![0.0; y.len()];
    eval_system(field, &y, &mut f0)?;
    let mut stepper = Stepper::new(field, *cfg)?;

    let times = sample_times(initial.time, t_final, sample_every);
    let mut next_sample = 0usize;
    let mut record = TrajectoryRecord {
        samples: Vec::with_capacity(times.len()),
        events: Vec::new(),
        terminal_status: TerminalStatus::Completed,
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let sigma_v0 = crate::diagnostics::deviations(initial).sigma_v;
    let mut flock_logged = false;
    let snap = cfg.snap_consensus && params.gamma < 1.0 && sigma_v0 > 0.0;
    let mut snapped = false;
    let mut push = |record: &mut TrajectoryRecord, state: ParticleState| {
        let frame = resolved.frame(&state);
        if !flock_logged && frame.sigma_v <= 1e-12 * sigma_v0 {
            flock_logged = true;
            record.events.push(Event::FlockDetected { time: state.time });
        }
        record.samples.push(Sample { state, frame });
    };

    push(&mut record, initial.clone());
    next_sample += 1;

    let mut t = initial.time;
    let mut dt = cfg.dt_init;
    let mut buf = vec![0.0; y.len()];
    while next_sample < times.len() {
        if record.steps_accepted >= cfg.max_steps {
            record.terminal_status = TerminalStatus::AbortedMaxSteps;
            break;
        }
        let accepted = match stepper.step(t, &y, &f0, dt, t_final) {
            Ok(a) => a,
            Err(Error::SingularityStall { .. }) => {
                record.terminal_status = TerminalStatus::AbortedSingularity;
                break;
            }
            Err(e) => return Err(e),
        };
        record.steps_accepted += 1;
        for ev in &accepted.events {
            if matches!(ev, Event::StepRejected { .. }) {
                record.steps_rejected += 1;
            }
        }
        record.events.extend_from_slice(&accepted.events);

        let h = accepted.dt_used;
        let t1 = if t_final - (t + h) <= 1e-12 * t_final.abs().max(1.0) { t_final } else { t + h };
        let y1 = stepper.y_new();
        let f1 = stepper.f_new();
        while next_sample < times.len() && times[next_sample] <= t1 {
            let ts = times[next_sample];
            let state = if ts == t1 {
                unpack(y1, ts, n, d)
            } else {
                hermite(&y, &f0, y1, f1, h, (ts - t) / h, &mut buf);
                unpack(&buf, ts, n, d)
            };
            push(&mut record, state);
            next_sample += 1;
        }
        y.copy_from_slice(y1);
        f0.copy_from_slice(f1);
        t = t1;
        dt = accepted.dt_next;
        if snap && !snapped {
            let v = &mut y[n * d..];
            let c = crate::diagnostics::center(v, n, d);
            let sigma_v = crate::diagnostics::spread(v, &c, n, d);
            let v_bar = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if sigma_v <= (1e-12 * sigma_v0).max(100.0 * (cfg.abs_tol + cfg.rel_tol * v_bar)) {
                for row in v.chunks_mut(d) {
                    row.copy_from_slice(&c);
                }
                eval_system(field, &y, &mut f0)?;
                record.events.push(Event::ConsensusSnapped { time: t, sigma_v });
                snapped = true;
            }
        }
    }
    if record.terminal_status != TerminalStatus::Completed {
        let last = record.samples.last().map(|s| s.state.time).unwrap_or(f64::NEG_INFINITY);
        if t > last {
            push(&mut record, unpack(&y, t, n, d));
        }
    }
    Ok(record)
}

/// Classical fixed-step RK4 with `n_steps` steps of size `dt`.
pub fn oracle_integrate(initial: &ParticleState, params: &ModelParams, dt: f64, n_steps: usize) -> Result<ParticleState> {
    initial.check_shape(params)?;
    let dynamics = Dynamics::new(params)?;
    let mut y = pack(initial);
    let len = y.len();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    for _ in 0..n_steps {
        eval_system(&dynamics, &y, &mut k1)?;
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        eval_system(&dynamics, &tmp, &mut k2)?;
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        eval_system(&dynamics, &tmp, &mut k3)?;
        for i in 0..len {
            tmp[i] = y[i] + dt * k3[i];
        }
        eval_system(&dynamics, &tmp, &mut k4)?;
        for i in 0..len {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(unpack(&y, initial.time + n_steps as f64 * dt, initial.n_agents, initial.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{deviations, moments};
    use crate::sampling::Sampler;

    fn two_body(gap: f64, speed: f64) -> ParticleState {
        ParticleState::new(0.0, 2, 1, vec![0.0, gap], vec![speed, -speed]).unwrap()
    }

    fn random_state(n: usize, d: usize, seed: u64) -> ParticleState {
        let mut s = Sampler::new(seed);
        loop {
            let x: Vec<f64> = (0..n * d).map(|_| s.uniform_in(0.0, 2.0)).collect();
            let v = (0..n * d).map(|_| s.uniform_in(-1.0, 1.0)).collect();
            if min_pair_in(&x, n, d).0 > 0.2 {
                return ParticleState::new(0.0, n, d, x, v).unwrap();
            }
        }
    }

    fn sup_diff(a: &ParticleState, b: &ParticleState) -> f64 {
        a.positions
            .iter()
            .chain(&a.velocities)
            .zip(b.positions.iter().chain(&b.velocities))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn config_validation() {
        let mut cfg = IntegratorConfig::for_horizon(1.0);
        assert!(cfg.validate().is_ok());
        cfg.proximity_fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::for_horizon(1.0);
        cfg.dt_init = cfg.dt_max * 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_motion_is_exact() {
        let st = ParticleState::new(0.0, 3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], [0.5, -0.25].repeat(3)).unwrap();
        let st = ParticleState { velocities: [0.5, -0.25].repeat(3), ..st };
        let p = ModelParams::new(3, 2);
        let mut cfg = IntegratorConfig::for_horizon(10.0);
        cfg.dt_init = 0.5;
        let out = step_adaptive(&st, &p, &cfg).unwrap();
        assert_eq!(out.dt_used, 0.5);
        assert!(out.events.is_empty());
        assert_eq!(out.state.velocities, st.velocities);
        for i in 0..6 {
            assert!((out.state.positions[i] - (st.positions[i] + 0.5 * st.velocities[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn flock_takes_dt_max() {
        let st = ParticleState::new(0.0, 2, 1, vec![0.0, 1.0], vec![0.3, 0.3]).unwrap();
        let mut cfg = IntegratorConfig::for_horizon(100.0);
        cfg.dt_max = 1.0;
        cfg.dt_init = 1.0;
        let out = step_adaptive(&st, &ModelParams::new(2, 1), &cfg).unwrap();
        assert_eq!(out.dt_used, 1.0);
        assert_eq!(out.dt_next, 1.0);
    }

    #[test]
    fn sublinear_coupling_snaps_to_consensus() {
        let st = random_state(5, 2, 11);
        let p = ModelParams::new(5, 2).gamma(0.75);
        let mut cfg = IntegratorConfig::for_horizon(10.0);
        cfg.max_steps = 200_000;
        let rec = simulate(&st, &p, &cfg, 10.0, 0.05, &DiagnosticsConfig::default()).unwrap();
        assert_eq!(rec.terminal_status, TerminalStatus::Completed);
        let sigma0 = deviations(&st).sigma_v;
        let (t_snap, sigma_snap) = rec
            .events
            .iter()
            .find_map(|e| match e {
                Event::ConsensusSnapped { time, sigma_v } => Some((*time, *sigma_v)),
                _ => None,
            })
            .unwrap();
        let floor = 100.0 * cfg.abs_tol + 100.0 * cfg.rel_tol * moments(&st).m1.iter().fold(0.0f64, |m, x| m.max(x.abs())) / 5.0;
        assert!(t_snap < 7.5 && sigma_snap <= (1e-12 * sigma0).max(floor), "{sigma_snap}");
        let last = &rec.samples.last().unwrap().state;
        assert_eq!(deviations(last).sigma_v, 0.0);
        let m1 = |s: &ParticleState| moments(s).m1;
        assert!(m1(last).iter().zip(m1(&st)).all(|(a, b)| (a - b).abs() < 1e-12));

        cfg.snap_consensus = false;
        cfg.max_steps = 20_000;
        let rec = simulate(&st, &p, &cfg, 10.0, 0.05, &DiagnosticsConfig::default()).unwrap();
        assert_eq!(rec.terminal_status, TerminalStatus::AbortedMaxSteps);
    }

    #[test]
    fn proximity_guard_rejects_large_steps() {
        // Head-on at unit relative speed from gap 0.1: a step of 0.05 would
        // shrink the gap by far more than 20%.
        let st = two_body(0.1, 0.5);
        let mut cfg = IntegratorConfig::for_horizon(10.0);
        cfg.dt_init = 0.05;
        cfg.dt_max = 0.05;
        cfg.rel_tol = 1e-3;
        cfg.abs_tol = 1e-3;
        let out = step_adaptive(&st, &ModelParams::new(2, 1), &cfg).unwrap();
        assert!(out.dt_used < 0.05);
        assert!(out.events.iter().any(|e| matches!(e, Event::StepRejected { reason: RejectReason::Proximity, .. })));
        let gap = out.state.positions[1] - out.state.positions[0];
        assert!((gap - 0.1).abs() <= 0.2 * 0.1);
    }

    #[test]
    fn head_on_gap_stays_positive_and_matches_oracle() {
        let st = two_body(1.0, 1.0);
        let p = ModelParams::new(2, 1);
        let cfg = IntegratorConfig::for_horizon(2.0);
        let rec = simulate(&st, &p, &cfg, 2.0, 0.01, &DiagnosticsConfig::default()).unwrap();
        assert_eq!(rec.terminal_status, TerminalStatus::Completed);
        assert!(rec.samples.iter().all(|s| s.frame.min_dist > 0.0));
        let oracle = oracle_integrate(&st, &p, 1e-5, 200_000).unwrap();
        let last = &rec.samples.last().unwrap().state;
        assert!(sup_diff(last, &oracle) < 1e-7, "{}", sup_diff(last, &oracle));
        // Analytic closest approach for γ = 1, α = 1: r_min = r0·exp(w0) with w0 = −2.
        let r_min = rec.min_distance();
        assert!((r_min - (-2.0f64).exp()).abs() < 1e-3, "{r_min}");
    }

    #[test]
    fn random_instance_matches_oracle_and_dissipates() {
        let st = random_state(4, 2, 77);
        let p = ModelParams::new(4, 2).alpha(1.5);
        let cfg = IntegratorConfig::for_horizon(1.0);
        let rec = simulate(&st, &p, &cfg, 1.0, 0.05, &DiagnosticsConfig::default()).unwrap();
        let oracle = oracle_integrate(&st, &p, 1e-4, 10_000).unwrap();
        let diff = sup_diff(&rec.samples.last().unwrap().state, &oracle);
        assert!(diff < 1e-6, "{diff}");
        let s0 = deviations(&st).sigma_v;
        assert!(rec.samples.last().unwrap().frame.sigma_v < s0);
    }

    #[test]
    fn rk4_fixed_point_and_momentum() {
        let st = ParticleState::new(0.0, 3, 1, vec![0.0, 1.0, 3.0], vec![0.0; 3]).unwrap();
        let p = ModelParams::new(3, 1);
        assert_eq!(oracle_integrate(&st, &p, 0.1, 10).unwrap().positions, st.positions);
        let st = two_body(1.0, 0.7);
        let out = oracle_integrate(&st, &ModelParams::new(2, 1), 1e-3, 1000).unwrap();
        assert_eq!(moments(&out).m1[0], 0.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Richardson: errors against a fine reference shrink ≈ 16× per halving.
        let st = random_state(3, 2, 9);
        let p = ModelParams::new(3, 2).alpha(1.2).gamma(1.1);
        let t = 0.5;
        let reference = oracle_integrate(&st, &p, t / 6400.0, 6400).unwrap();
        let coarse = oracle_integrate(&st, &p, t / 25.0, 25).unwrap();
        let fine = oracle_integrate(&st, &p, t / 50.0, 50).unwrap();
        let ratio = sup_diff(&coarse, &reference) / sup_diff(&fine, &reference);
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "{ratio}");
    }

    #[test]
    fn sampling_grid_ends_at_t_final() {
        let st = random_state(3, 1, 2);
        let rec = simulate(&st, &ModelParams::new(3, 1), &IntegratorConfig::for_horizon(1.0), 1.0, 0.3, &DiagnosticsConfig::default()).unwrap();
        let times: Vec<f64> = rec.times().collect();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 1.0);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subcritical_head_on_triggers_guard() {
        // α = 1/4: ψ integrable at 0, the pair hits the singularity with
        // finite relative speed.
        let st = two_body(1.0, 1.0);
        let p = ModelParams::new(2, 1).alpha(0.25);
        let rec = simulate(&st, &p, &IntegratorConfig::for_horizon(10.0), 10.0, 0.1, &DiagnosticsConfig::default()).unwrap();
        let shrink = 1.0 / rec.min_distance();
        assert!(rec.terminal_status == TerminalStatus::AbortedSingularity || shrink >= 1e3, "{:?} {shrink}", rec.terminal_status);
        assert!(rec.events.iter().any(|e| matches!(e, Event::NearCollision { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let st = ParticleState::new(0.0, 2, 1, vec![0.5, 0.5], vec![0.0, 0.0]).unwrap();
        let p = ModelParams::new(2, 1);
        let cfg = IntegratorConfig::for_horizon(1.0);
        assert!(matches!(simulate(&st, &p, &cfg, 1.0, 0.1, &DiagnosticsConfig::default()), Err(Error::Singularity { .. })));
        let st = two_body(1.0, 0.1);
        assert!(simulate(&st, &p, &cfg, 0.0, 0.1, &DiagnosticsConfig::default()).is_err());
        assert!(simulate(&st, &p, &cfg, 1.0, 2.0, &DiagnosticsConfig::default()).is_err());
    }
}
