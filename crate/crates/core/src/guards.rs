//! Collision-group monitors and β-distance bound checkers.
//!
//! For a group C of agents,
//!
//! ```text
//! ‖x‖_C = sqrt(Σ_{(i,j)∈C×C} |x_i − x_j|²),   ‖v‖_C likewise,
//! ```
//!
//! summed over ordered pairs, so each unordered pair counts twice (the
//! diagonal contributes zero). The checkers evaluate differential
//! inequalities on sampled trajectories, estimating time derivatives with
//! three-point centered differences on the (possibly nonuniform) sample
//! grid.

use crate::dynamics::min_pair_distance;
use crate::error::{Error, Result};
use crate::integrator::TrajectoryRecord;
use crate::math;
use crate::model::{ModelParams, ParticleState, WeightFunction, WeightKind};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// Which inequality a [`BoundReport`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InequalityId {
    /// ‖v‖²_C dissipation for 1/2 < γ < 1.
    In1,
    /// ‖v‖²_C dissipation for 1 ≤ γ < 3/2.
    In2,
    /// Log β-distance bound, α = 2γ.
    Es1,
    /// β-distance bound, α > 2γ.
    Es2,
    /// Ψ-based β-distance bound, β > 0.
    Es3,
    /// Ψ-based log distance bound.
    Es4,
    /// Moment equations: m₂ nonincreasing (m₁ drift recorded).
    MomEq,
    /// |d‖x‖_C/dt| ≤ ‖v‖_C.
    EqMot,
    /// A priori bounds ‖v‖_C ≤ M, ‖x‖_C ≤ R(t).
    Apriori,
}

impl InequalityId {
    /// All identifiers.
    pub const ALL: [InequalityId; 9] = [
        Self::In1,
        Self::In2,
        Self::Es1,
        Self::Es2,
        Self::Es3,
        Self::Es4,
        Self::MomEq,
        Self::EqMot,
        Self::Apriori,
    ];

    /// Stable name used in file names and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            Self::In1 => "In1",
            Self::In2 => "In2",
            Self::Es1 => "Es1",
            Self::Es2 => "Es2",
            Self::Es3 => "Es3",
            Self::Es4 => "Es4",
            Self::MomEq => "MomEq",
            Self::EqMot => "EqMot",
            Self::Apriori => "Apriori",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or(Error::Parameter { field: "checks", reason: "unknown inequality id" })
    }
}

/// One checked instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    /// Sample time.
    pub time: f64,
    /// Left-hand side.
    pub lhs: f64,
    /// Right-hand side.
    pub rhs: f64,
    /// rhs − lhs.
    pub slack: f64,
}

/// Residual series of one inequality over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Which inequality.
    pub inequality_id: InequalityId,
    /// Per-sample residuals.
    pub residuals: Vec<Residual>,
    /// Smallest slack (+∞ when there are no residuals).
    pub min_slack: f64,
    /// Whether min_slack ≥ −tol.
    pub pass: bool,
    /// Tolerance applied.
    pub tol: f64,
    /// Constants used, by name.
    pub constants: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn build(inequality_id: InequalityId, residuals: Vec<Residual>, tol: f64, constants: Vec<(&'static str, f64)>) -> Self {
        let min_slack = residuals.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        BoundReport { inequality_id, pass: min_slack >= -tol, residuals, min_slack, tol, constants }
    }

    /// Looks up a recorded constant.
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

fn residual(time: f64, lhs: f64, rhs: f64) -> Residual {
    Residual { time, lhs, rhs, slack: rhs - lhs }
}

/// A set of agents hypothesized to collide together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionGroup {
    members: Vec<usize>,
    n_agents: usize,
}

impl CollisionGroup {
    /// Validates 2 ≤ |C| ≤ N with distinct in-range indices. Members are
    /// stored sorted.
    pub fn new(members: &[usize], n_agents: usize) -> Result<Self> {
        let mut m = members.to_vec();
        m.sort_unstable();
        m.dedup();
        if m.len() != members.len() {
            return Err(Error::Parameter { field: "group", reason: "duplicate member index" });
        }
        if m.len() < 2 || m.len() > n_agents {
            return Err(Error::Parameter { field: "group", reason: "group size must be in [2, N]" });
        }
        if m.iter().any(|&i| i >= n_agents) {
            return Err(Error::Parameter { field: "group", reason: "member index out of range" });
        }
        Ok(Self { members: m, n_agents })
    }

    /// Sorted member indices.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// |C|.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// N the group was built for.
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Whether agent `i` is a member.
    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    fn outsiders(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_agents).filter(move |&k| !self.contains(k))
    }

    fn check(&self, state: &ParticleState) -> Result<()> {
        if state.n_agents != self.n_agents {
            return Err(Error::Shape { expected: self.n_agents, found: state.n_agents });
        }
        Ok(())
    }
}

/// ‖x‖_C, ‖v‖_C and the a priori bounds M, R(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupFluctuations {
    /// ‖x‖_C.
    pub x_norm: f64,
    /// ‖v‖_C.
    pub v_norm: f64,
    /// M = √2|C| sup_i |v_i(0)|.
    pub bound_m: f64,
    /// R(t) = √2|C| (sup_i |x_i(0)| + sup_i |v_i(0)| t).
    pub bound_r: f64,
}

fn group_norm(data: &[f64], group: &CollisionGroup, d: usize) -> f64 {
    let mut acc = 0.0;
    for &i in &group.members {
        for &j in &group.members {
            if i != j {
                let dd = math::dist(&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]);
                acc += dd * dd;
            }
        }
    }
    math::sqrt(acc)
}

fn sup_norm(data: &[f64], n: usize, d: usize) -> f64 {
    (0..n).map(|i| math::norm(&data[i * d..(i + 1) * d])).fold(0.0, f64::max)
}

/// Group fluctuation norms of `state`, with M and R(state.time) from `initial`.
pub fn group_fluctuations(state: &ParticleState, group: &CollisionGroup, initial: &ParticleState) -> Result<GroupFluctuations> {
    group.check(state)?;
    group.check(initial)?;
    let d = state.dim;
    let scale = core::f64::consts::SQRT_2 * group.size() as f64;
    let sx = sup_norm(&initial.positions, initial.n_agents, d);
    let sv = sup_norm(&initial.velocities, initial.n_agents, d);
    Ok(GroupFluctuations {
        x_norm: group_norm(&state.positions, group, d),
        v_norm: group_norm(&state.velocities, group, d),
        bound_m: scale * sv,
        bound_r: scale * (sx + sv * (state.time - initial.time)),
    })
}

/// Pointwise regime of a collision group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// ψ(‖x‖_C)‖v‖_C^{2γ−1} < ‖x‖_C.
    C1,
    /// ψ(‖x‖_C)‖v‖_C^{2γ−1} < ‖v‖_C.
    C2,
    /// d‖v‖_C/dt ≤ −ψ(‖x‖_C)‖v‖_C^{2γ−1} (trajectory level only).
    C3Candidate,
    /// None of the above.
    None,
}

fn regime_terms(x_norm: f64, v_norm: f64, weight: &WeightFunction, gamma: f64) -> Result<f64> {
    Ok(weight.eval(x_norm)? * math::powf(v_norm, 2.0 * gamma - 1.0))
}

/// Evaluates (C1), then (C2), with unit constants.
pub fn classify_regime(state: &ParticleState, group: &CollisionGroup, params: &ModelParams) -> Result<Regime> {
    group.check(state)?;
    let x = group_norm(&state.positions, group, state.dim);
    let v = group_norm(&state.velocities, group, state.dim);
    if x == 0.0 {
        return Err(Error::DegenerateGroup);
    }
    let lhs = regime_terms(x, v, &params.weight_fn(), params.gamma)?;
    Ok(if lhs < x {
        Regime::C1
    } else if lhs < v {
        Regime::C2
    } else {
        Regime::None
    })
}

/// Per-sample regimes; interior samples failing (C1) and (C2) are marked
/// [`Regime::C3Candidate`] when the centered-difference estimate of
/// d‖v‖_C/dt satisfies (C3).
pub fn regime_sequence(record: &TrajectoryRecord, group: &CollisionGroup, params: &ModelParams) -> Result<Vec<(f64, Regime)>> {
    let weight = params.weight_fn();
    let series = GroupSeries::new(record, group)?;
    let dv = series.derivative(&series.v);
    let mut out = Vec::with_capacity(series.t.len());
    for k in 0..series.t.len() {
        let st = &record.samples[k].state;
        let mut r = classify_regime(st, group, params)?;
        if r == Regime::None {
            if let Some(dvk) = dv[k] {
                if dvk <= -regime_terms(series.x[k], series.v[k], &weight, params.gamma)? {
                    r = Regime::C3Candidate;
                }
            }
        }
        out.push((series.t[k], r));
    }
    Ok(out)
}

struct GroupSeries {
    t: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl GroupSeries {
    fn new(record: &TrajectoryRecord, group: &CollisionGroup) -> Result<Self> {
        let mut s = GroupSeries { t: vec![], x: vec![], v: vec![] };
        for smp in &record.samples {
            group.check(&smp.state)?;
            s.t.push(smp.state.time);
            s.x.push(group_norm(&smp.state.positions, group, smp.state.dim));
            s.v.push(group_norm(&smp.state.velocities, group, smp.state.dim));
        }
        Ok(s)
    }

    /// Three-point derivative at interior samples.
    fn derivative(&self, f: &[f64]) -> Vec<Option<f64>> {
        centered_differences(&self.t, f)
    }
}

/// Second-order centered differences on a nonuniform grid; `None` at the
/// end points.
pub fn centered_differences(t: &[f64], f: &[f64]) -> Vec<Option<f64>> {
    let n = t.len();
    let mut out = vec![None; n];
    for k in 1..n.saturating_sub(1) {
        let h0 = t[k] - t[k - 1];
        let h1 = t[k + 1] - t[k];
        out[k] = Some((h0 * h0 * f[k + 1] + (h1 * h1 - h0 * h0) * f[k] - h1 * h1 * f[k - 1]) / (h0 * h1 * (h0 + h1)));
    }
    out
}

/// Constants of the ‖v‖²_C dissipation estimate, measured on the record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationConstants {
    /// c₀ = C₁|C|/N.
    pub c0: f64,
    /// c₁ = ((N−|C|)/N) Γ_M L_δ.
    pub c1: f64,
    /// c₂ (γ-dependent).
    pub c2: f64,
    /// Γ_M: max |Γ(v_k − v_i)| over members i, non-members k.
    pub gamma_m: f64,
    /// L_δ: sup |ψ'| on [δ, d_max].
    pub l_delta: f64,
    /// L_Γ: Lipschitz constant of Γ on the realized velocity-difference ball
    /// (γ ≥ 1 only, else 0).
    pub l_gamma: f64,
    /// δ: minimum member/non-member distance over the record (or the
    /// supplied separation).
    pub delta: f64,
}

/// [`dissipation_check_with`] using the realized member/non-member
/// separation as δ.
pub fn dissipation_check(record: &TrajectoryRecord, group: &CollisionGroup, params: &ModelParams) -> Result<BoundReport> {
    dissipation_check_with(record, group, params, None)
}

/// Checks (In1) for γ < 1 or (In2) for γ ≥ 1 at interior samples, with
/// d‖v‖²_C/dt from centered differences and tolerance
/// 1e-3 · max |d‖v‖²_C/dt|.
///
/// With `separation = Some(δ)`, every member/non-member distance must stay
/// ≥ δ over the record, else [`Error::HypothesisViolated`]. The constants
/// are measured over the realized ranges of the record.
pub fn dissipation_check_with(
    record: &TrajectoryRecord,
    group: &CollisionGroup,
    params: &ModelParams,
    separation: Option<f64>,
) -> Result<BoundReport> {
    record.require_completed()?;
    let gamma = params.gamma;
    if !(gamma > 0.5 && gamma < 1.5) {
        return Err(Error::Parameter { field: "gamma", reason: "dissipation estimate needs gamma in (1/2, 3/2)" });
    }
    if record.samples.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: record.samples.len() });
    }
    let weight = params.weight_fn();
    let coupling = params.coupling_fn();
    let n = params.n_agents;
    let size = group.size();
    let d = params.dim;

    // Realized ranges of member/non-member pairs.
    let (mut d_min, mut d_max, mut v_max, mut gamma_m) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    let mut worst = None;
    let mut diff = vec![0.0; d];
    for smp in &record.samples {
        let st = &smp.state;
        group.check(st)?;
        for &i in group.members() {
            for k in group.outsiders() {
                let r = math::dist(st.position(i), st.position(k));
                if r < d_min {
                    d_min = r;
                    worst = Some((i, k, st.time));
                }
                d_max = d_max.max(r);
                for (c, (a, b)) in diff.iter_mut().zip(st.velocity(k).iter().zip(st.velocity(i))) {
                    *c = a - b;
                }
                v_max = v_max.max(math::norm(&diff));
                gamma_m = gamma_m.max(math::norm(&coupling.eval(&diff)));
            }
        }
    }
    let delta = match separation {
        Some(sep) => {
            if let Some((i, k, time)) = worst {
                if d_min < sep {
                    return Err(Error::HypothesisViolated { i, j: k, time, distance: d_min });
                }
            }
            sep
        }
        None => d_min,
    };
    if let Some((i, k, time)) = worst {
        if !weight.in_domain(delta) {
            return Err(Error::HypothesisViolated { i, j: k, time, distance: d_min });
        }
    }

    let c0 = params.c1 * size as f64 / n as f64;
    let outside = (n - size) as f64 / n as f64;
    let (c1, c2, l_delta, l_gamma) = if size == n {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let l_delta = weight.lipschitz_on(delta, d_max)?;
        let psi_delta = weight.eval(delta)?;
        let c1 = outside * gamma_m * l_delta;
        if gamma < 1.0 {
            (c1, 2.0 * size as f64 * outside * psi_delta * gamma_m, l_delta, 0.0)
        } else {
            let l_gamma = coupling.lipschitz_on_ball(v_max, d);
            (c1, outside * psi_delta * l_gamma, l_delta, l_gamma)
        }
    };
    let consts = DissipationConstants { c0, c1, c2, gamma_m, l_delta, l_gamma, delta };

    let series = GroupSeries::new(record, group)?;
    let v2: Vec<f64> = series.v.iter().map(|v| v * v).collect();
    let dv2 = series.derivative(&v2);
    let id = if gamma < 1.0 { InequalityId::In1 } else { InequalityId::In2 };
    let mut residuals = Vec::new();
    let mut scale = 0.0f64;
    for (k, dk) in dv2.iter().enumerate() {
        let Some(lhs) = *dk else { continue };
        scale = scale.max(lhs.abs());
        let (x, v) = (series.x[k], series.v[k]);
        let damping = if v == 0.0 { 0.0 } else { 2.0 * c0 * weight.eval(x)? * math::powf(v, 2.0 * gamma) };
        let forcing = 2.0 * c1 * x * v + 2.0 * c2 * if gamma < 1.0 { v } else { v * v };
        residuals.push(residual(series.t[k], lhs, forcing - damping));
    }
    let constants = vec![
        ("c0", consts.c0),
        ("c1", consts.c1),
        ("c2", consts.c2),
        ("gamma_m", consts.gamma_m),
        ("l_delta", consts.l_delta),
        ("l_gamma", consts.l_gamma),
        ("delta", consts.delta),
    ];
    Ok(BoundReport::build(id, residuals, 1e-3 * scale, constants))
}

/// Checks |d‖x‖_C/dt| ≤ (1 + 1e-3)‖v‖_C at interior samples.
///
/// The tolerance is a roundoff floor 64ε·max‖x‖_C / min Δt, which only
/// matters when ‖v‖_C vanishes.
pub fn eqmot_check(record: &TrajectoryRecord, group: &CollisionGroup) -> Result<BoundReport> {
    record.require_completed()?;
    if record.samples.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: record.samples.len() });
    }
    let series = GroupSeries::new(record, group)?;
    let dx = series.derivative(&series.x);
    let mut residuals = Vec::new();
    for (k, dk) in dx.iter().enumerate() {
        if let Some(lhs) = dk {
            residuals.push(residual(series.t[k], lhs.abs(), (1.0 + 1e-3) * series.v[k]));
        }
    }
    let x_max = series.x.iter().copied().fold(0.0, f64::max);
    let h_min = series.t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let tol = 64.0 * f64::EPSILON * x_max / h_min;
    Ok(BoundReport::build(InequalityId::EqMot, residuals, tol, vec![("relative_slack", 1e-3)]))
}

/// Checks ‖v‖_C ≤ M and ‖x‖_C ≤ R(t) at every sample. Each residual reports
/// the tighter of the two (smaller slack).
pub fn apriori_check(record: &TrajectoryRecord, group: &CollisionGroup) -> Result<BoundReport> {
    record.require_completed()?;
    let initial = &record.samples.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?.state;
    let mut residuals = Vec::new();
    let mut scale = 0.0f64;
    for smp in &record.samples {
        let g = group_fluctuations(&smp.state, group, initial)?;
        scale = scale.max(g.bound_m).max(g.bound_r);
        let rv = residual(smp.state.time, g.v_norm, g.bound_m);
        let rx = residual(smp.state.time, g.x_norm, g.bound_r);
        residuals.push(if rv.slack <= rx.slack { rv } else { rx });
    }
    let m = group_fluctuations(initial, group, initial)?.bound_m;
    Ok(BoundReport::build(InequalityId::Apriori, residuals, 16.0 * f64::EPSILON * scale, vec![("M", m)]))
}

/// Checks that m₂ is nonincreasing between consecutive samples within
/// 1e-8·m₂(0), and records the maximum drift of m₁ (∞-norm).
pub fn momeq_check(record: &TrajectoryRecord) -> Result<BoundReport> {
    let first = &record.samples.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?.frame;
    let mut residuals = Vec::new();
    let mut drift = 0.0f64;
    for w in record.samples.windows(2) {
        residuals.push(residual(w[1].frame.time, w[1].frame.m2, w[0].frame.m2));
        for (a, b) in w[1].frame.m1.iter().zip(&first.m1) {
            drift = drift.max((a - b).abs());
        }
    }
    Ok(BoundReport::build(InequalityId::MomEq, residuals, 1e-8 * first.m2, vec![("m2_initial", first.m2), ("m1_max_drift", drift)]))
}

/// L^β = (1/(N(N−1))) Σ_{i≠j} (|x_i − x_j| − δ)^{−β} for β > 0, or the mean
/// of ln(|x_i − x_j| − δ) for β = 0. Pairs are visited in the order
/// i = 0..N, j = 0..N, j ≠ i.
///
/// Errors with [`Error::Singularity`] naming the first pair with a distance
/// ≤ δ.
pub fn beta_distance(state: &ParticleState, beta: f64, delta: f64) -> Result<f64> {
    beta_functional(state, |r| {
        if r > delta {
            Some(if beta == 0.0 { math::ln(r - delta) } else { math::powf(r - delta, -beta) })
        } else {
            None
        }
    })
}

fn beta_functional(state: &ParticleState, term: impl Fn(f64) -> Option<f64>) -> Result<f64> {
    let n = state.n_agents;
    if n < 2 {
        return Err(Error::Parameter { field: "n_agents", reason: "β-distance needs at least two agents" });
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = math::dist(state.position(i), state.position(j));
            acc += term(r).ok_or(Error::Singularity { i: i.min(j), j: i.max(j), distance: r })?;
        }
    }
    Ok(acc / (n * (n - 1)) as f64)
}

fn kinetic(state: &ParticleState) -> f64 {
    state.velocities.iter().map(|v| v * v).sum()
}

/// Checks (Es1) for α = 2γ or (Es2) for α > 2γ with β = α/(2γ) − 1:
///
/// ```text
/// L^β(t) + b/(2C₁γ(N−1)) Σ|v_i|² ≤ b(2γ−1)/(2γ) · t + [same at t = 0]
/// ```
///
/// with b = β (or 1 when β = 0) and tolerance 1e-6·(1 + |lhs(0)|).
pub fn theorem2_check(record: &TrajectoryRecord, params: &ModelParams) -> Result<BoundReport> {
    record.require_completed()?;
    if !matches!(params.weight, WeightKind::PowerSingular | WeightKind::ShiftedSingular) {
        return Err(Error::Parameter { field: "weight", reason: "β-distance bound needs a power-law weight" });
    }
    let (alpha, gamma) = (params.alpha, params.gamma);
    if alpha < 2.0 * gamma {
        return Err(Error::Parameter { field: "alpha", reason: "β-distance bound needs alpha >= 2 gamma" });
    }
    let beta = alpha / (2.0 * gamma) - 1.0;
    let beta = if beta.abs() < 1e-12 { 0.0 } else { beta };
    let delta = params.weight_fn().shift();
    let b = if beta == 0.0 { 1.0 } else { beta };
    let slope = (2.0 * gamma - 1.0) * b / (2.0 * gamma);
    let id = if beta == 0.0 { InequalityId::Es1 } else { InequalityId::Es2 };
    let k = b / (2.0 * params.c1 * gamma * (params.n_agents - 1) as f64);
    let report = linear_growth_report(record, id, slope, |st| Ok(beta_distance(st, beta, delta)? + k * kinetic(st)))?;
    Ok(with_constants(report, vec![("beta", beta), ("slope", slope), ("delta", delta)]))
}

fn linear_growth_report(
    record: &TrajectoryRecord,
    id: InequalityId,
    slope: f64,
    lhs_of: impl Fn(&ParticleState) -> Result<f64>,
) -> Result<BoundReport> {
    let first = &record.samples.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?.state;
    let lhs0 = lhs_of(first)?;
    let mut residuals = Vec::with_capacity(record.samples.len());
    for smp in &record.samples {
        let rhs = slope * (smp.state.time - first.time) + lhs0;
        residuals.push(residual(smp.state.time, lhs_of(&smp.state)?, rhs));
    }
    Ok(BoundReport::build(id, residuals, 1e-6 * (1.0 + lhs0.abs()), vec![]))
}

fn with_constants(mut report: BoundReport, constants: Vec<(&'static str, f64)>) -> BoundReport {
    report.constants = constants;
    report
}

/// Outcome of [`theorem3_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report {
    /// Largest relative violation max(0, (ψ(s) − C|Ψ(s)|^p)/ψ(s)) over the
    /// sampled s.
    pub as1_max_violation: f64,
    /// Whether the growth condition held at every sampled s.
    pub as1_pass: bool,
    /// Sampled range [s_lo, s_hi].
    pub as1_range: (f64, f64),
    /// The (Es3)/(Es4) residuals.
    pub bounds: BoundReport,
    /// True when the growth condition failed, so the bound carries no
    /// guarantee.
    pub vacuous: bool,
}

impl Theorem3Report {
    /// The bound report, or [`Error::ConditionFailed`] if the growth
    /// condition was violated.
    pub fn into_result(self) -> Result<BoundReport> {
        if self.as1_pass {
            Ok(self.bounds)
        } else {
            Err(Error::ConditionFailed { condition: "As1", max_violation: self.as1_max_violation })
        }
    }
}

/// Relative slack below which the growth condition counts as satisfied;
/// absorbs roundoff when it holds with equality.
pub const AS1_REL_TOL: f64 = 1e-10;

/// Checks the growth condition ψ(s) ≤ C|Ψ(s)|^{(1−β)2γ/(2γ−1)} on 512
/// log-spaced points of the record's realized pair-distance range, then the
/// Ψ-based bound
///
/// ```text
/// L_Ψ^β(t) + b/(2C₁γ(N−1)) Σ|v_i|² ≤ C·b(2γ−1)/(2γ) · t + [same at t = 0]
/// ```
///
/// with L_Ψ^β the mean of |Ψ(r_ij)|^β (or of ln|Ψ(r_ij)| for β = 0) and
/// b = β (or 1). The bound is evaluated even if the condition fails.
pub fn theorem3_check(
    record: &TrajectoryRecord,
    weight: &WeightFunction,
    beta: f64,
    big_c: f64,
    params: &ModelParams,
) -> Result<Theorem3Report> {
    record.require_completed()?;
    let gamma = params.gamma;
    if !(gamma > 0.5) {
        return Err(Error::Parameter { field: "gamma", reason: "must exceed 1/2" });
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Parameter { field: "beta", reason: "must lie in [0, 1)" });
    }
    if !(big_c > 0.0) {
        return Err(Error::Parameter { field: "big_c", reason: "must be positive" });
    }
    let p = (1.0 - beta) * 2.0 * gamma / (2.0 * gamma - 1.0);

    let mut s_lo = f64::INFINITY;
    let mut s_hi = 0.0f64;
    for smp in &record.samples {
        s_lo = s_lo.min(min_pair_distance(&smp.state).0);
        s_hi = s_hi.max(smp.frame.max_dist);
    }
    const GRID: usize = 512;
    let mut worst = 0.0f64;
    for g in 0..GRID {
        let s = if s_hi > s_lo { s_lo * math::powf(s_hi / s_lo, g as f64 / (GRID - 1) as f64) } else { s_lo };
        let psi = weight.eval(s)?;
        let bound = big_c * math::powf(weight.primitive(s)?.abs(), p);
        worst = worst.max((psi - bound) / psi);
    }
    let as1_pass = worst <= AS1_REL_TOL;

    let b = if beta == 0.0 { 1.0 } else { beta };
    let slope = big_c * (2.0 * gamma - 1.0) * b / (2.0 * gamma);
    let id = if beta == 0.0 { InequalityId::Es4 } else { InequalityId::Es3 };
    let k = b / (2.0 * params.c1 * gamma * (params.n_agents - 1) as f64);
    let bounds = linear_growth_report(record, id, slope, |st| {
        let l = beta_functional(st, |r| {
            let big_psi = weight.primitive(r).ok()?.abs();
            Some(if beta == 0.0 { math::ln(big_psi) } else { math::powf(big_psi, beta) })
        })?;
        Ok(l + k * kinetic(st))
    })?;
    let bounds = with_constants(bounds, vec![("beta", beta), ("C", big_c), ("slope", slope), ("as1_exponent", p)]);
    Ok(Theorem3Report { as1_max_violation: worst.max(0.0), as1_pass, as1_range: (s_lo, s_hi), bounds, vacuous: !as1_pass })
}

/// Group of agents involved in the closest approach: at the sample with the
/// smallest minimum gap, every agent in a pair whose distance is within
/// (1 + fraction) of that gap.
pub fn auto_group(record: &TrajectoryRecord, fraction: f64) -> Result<CollisionGroup> {
    let smp = record
        .samples
        .iter()
        .min_by(|a, b| a.frame.min_dist.total_cmp(&b.frame.min_dist))
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let st = &smp.state;
    let cutoff = smp.frame.min_dist * (1.0 + fraction);
    let mut members = Vec::new();
    for i in 0..st.n_agents {
        for j in (i + 1)..st.n_agents {
            if math::dist(st.position(i), st.position(j)) <= cutoff {
                members.push(i);
                members.push(j);
            }
        }
    }
    members.sort_unstable();
    members.dedup();
    CollisionGroup::new(&members, st.n_agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagnosticsConfig;
    use crate::integrator::{simulate, IntegratorConfig};
    use crate::model::CustomWeight;
    use crate::sampling::Sampler;
    use alloc::sync::Arc;
    use proptest::prelude::*;

    fn st(n: usize, d: usize, x: &[f64], v: &[f64]) -> ParticleState {
        ParticleState::new(0.0, n, d, x.to_vec(), v.to_vec()).unwrap()
    }

    fn random_state(n: usize, d: usize, seed: u64, min_gap: f64) -> ParticleState {
        let mut s = Sampler::new(seed);
        loop {
            let x: Vec<f64> = (0..n * d).map(|_| s.uniform_in(0.0, 3.0)).collect();
            let v: Vec<f64> = (0..n * d).map(|_| s.uniform_in(-1.0, 1.0)).collect();
            let cand = ParticleState::new(0.0, n, d, x, v).unwrap();
            if min_pair_distance(&cand).0 > min_gap {
                return cand;
            }
        }
    }

    fn run(s: &ParticleState, p: &ModelParams, t: f64, every: f64) -> TrajectoryRecord {
        let rec = simulate(s, p, &IntegratorConfig::for_horizon(t), t, every, &DiagnosticsConfig::default()).unwrap();
        rec.require_completed().unwrap();
        rec
    }

    fn head_on(speed: f64) -> ParticleState {
        st(2, 1, &[-0.5, 0.5], &[speed, -speed])
    }

    #[test]
    fn group_validation() {
        assert!(CollisionGroup::new(&[0], 3).is_err());
        assert!(CollisionGroup::new(&[0, 0], 3).is_err());
        assert!(CollisionGroup::new(&[0, 3], 3).is_err());
        let g = CollisionGroup::new(&[2, 0], 3).unwrap();
        assert_eq!((g.members(), g.size()), (&[0, 2][..], 2));
    }

    #[test]
    fn fluctuation_examples() {
        let s = st(2, 1, &[0.0, 3.0], &[0.0, 0.0]);
        let g = CollisionGroup::new(&[0, 1], 2).unwrap();
        let f = group_fluctuations(&s, &g, &s).unwrap();
        assert!((f.x_norm - 3.0 * 2f64.sqrt()).abs() < 1e-15);
        let s = st(3, 2, &[1.0, 1.0, 1.0, 1.0, 5.0, 5.0], &[0.0; 6]);
        let f = group_fluctuations(&s, &CollisionGroup::new(&[0, 1], 3).unwrap(), &s).unwrap();
        assert_eq!(f.x_norm, 0.0);
    }

    #[test]
    fn fluctuations_match_pair_sum_oracle() {
        let s = random_state(7, 3, 11, 0.0);
        let g = CollisionGroup::new(&[1, 4, 6], 7).unwrap();
        let f = group_fluctuations(&s, &g, &s).unwrap();
        let mut ax = 0.0;
        let mut av = 0.0;
        for &i in &[1usize, 4, 6] {
            for &j in &[1usize, 4, 6] {
                for k in 0..3 {
                    ax += (s.positions[i * 3 + k] - s.positions[j * 3 + k]).powi(2);
                    av += (s.velocities[i * 3 + k] - s.velocities[j * 3 + k]).powi(2);
                }
            }
        }
        assert!((f.x_norm - ax.sqrt()).abs() < 1e-13);
        assert!((f.v_norm - av.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn regime_examples() {
        let p = ModelParams::new(2, 1);
        let g = CollisionGroup::new(&[0, 1], 2).unwrap();
        assert_eq!(classify_regime(&st(2, 1, &[0.0, 1.0], &[0.3, 0.3]), &g, &p).unwrap(), Regime::C1);
        // ‖x‖_C = 1 requires gap 1/√2; ψ(1) = 1 with α = 1.
        let gap = core::f64::consts::FRAC_1_SQRT_2;
        let s = st(2, 1, &[0.0, gap], &[1e6, -1e6]);
        assert_eq!(classify_regime(&s, &g, &p).unwrap(), Regime::None);
        let s = st(2, 1, &[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(classify_regime(&s, &g, &p), Err(Error::DegenerateGroup));
    }

    #[test]
    fn regime_sequence_agrees_with_direct_evaluation() {
        let p = ModelParams::new(2, 1);
        let rec = run(&head_on(0.25), &p, 4.0, 0.02);
        let g = CollisionGroup::new(&[0, 1], 2).unwrap();
        let seq = regime_sequence(&rec, &g, &p).unwrap();
        for ((t, r), smp) in seq.iter().zip(&rec.samples) {
            let x = group_norm(&smp.state.positions, &g, 1);
            let v = group_norm(&smp.state.velocities, &g, 1);
            let lhs = v / x; // ψ(s) = 1/s, γ = 1
            let direct = if lhs < x { Regime::C1 } else if lhs < v { Regime::C2 } else { Regime::None };
            match r {
                Regime::C3Candidate => assert_eq!(direct, Regime::None, "t = {t}"),
                other => assert_eq!(*other, direct, "t = {t}"),
            }
        }
    }

    #[test]
    fn centered_differences_exact_on_quadratics() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.7];
        let f: Vec<f64> = t.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let d = centered_differences(&t, &f);
        assert!(d[0].is_none() && d[4].is_none());
        for k in 1..4 {
            assert!((d[k].unwrap() - (6.0 * t[k] - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_distance_examples() {
        let s = st(2, 1, &[0.0, 1.25], &[0.0, 0.0]);
        assert_eq!(beta_distance(&s, 1.0, 0.25).unwrap(), 1.0);
        assert_eq!(beta_distance(&s, 0.0, 0.25).unwrap(), 0.0);
        let s = st(3, 1, &[0.0, 2.0, 2.1], &[0.0; 3]);
        assert_eq!(beta_distance(&s, 1.0, 0.5), Err(Error::Singularity { i: 1, j: 2, distance: 2.1 - 2.0 }));
    }

    #[test]
    fn beta_distance_matches_double_loop_bitwise() {
        let s = random_state(8, 2, 5, 0.0);
        let mut acc = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    let dx = s.positions[i * 2] - s.positions[j * 2];
                    let dy = s.positions[i * 2 + 1] - s.positions[j * 2 + 1];
                    acc += libm::pow(libm::sqrt(dx * dx + dy * dy), -0.5);
                }
            }
        }
        assert_eq!(beta_distance(&s, 0.5, 0.0).unwrap().to_bits(), (acc / 56.0).to_bits());
    }

    #[test]
    fn dissipation_on_equal_velocity_flock() {
        let s = st(3, 1, &[0.0, 1.0, 3.0], &[0.5, 0.5, 0.5]);
        let p = ModelParams::new(3, 1);
        let rec = run(&s, &p, 1.0, 0.05);
        let r = dissipation_check(&rec, &CollisionGroup::new(&[0, 1], 3).unwrap(), &p).unwrap();
        assert!(r.pass && r.min_slack == 0.0);
    }

    #[test]
    fn dissipation_head_on_two_body_reduction() {
        let p = ModelParams::new(2, 1);
        let rec = run(&head_on(0.25), &p, 10.0, 0.01);
        let g = CollisionGroup::new(&[0, 1], 2).unwrap();
        let r = dissipation_check(&rec, &g, &p).unwrap();
        assert_eq!(r.inequality_id, InequalityId::In2);
        assert_eq!((r.constant("c1"), r.constant("c2")), (Some(0.0), Some(0.0)));
        assert!(r.pass, "min slack {}", r.min_slack);
        // d‖v‖²_C/dt = −4ψ(g)|w|² exactly; compare with the finite differences.
        for res in &r.residuals {
            let smp = rec.samples.iter().find(|s| s.state.time == res.time).unwrap();
            let gap = (smp.state.positions[1] - smp.state.positions[0]).abs();
            let w = smp.state.velocities[0] - smp.state.velocities[1];
            let exact = -4.0 / gap * w * w;
            assert!((res.lhs - exact).abs() <= 1e-3 * exact.abs().max(1e-12), "t = {}", res.time);
        }
    }

    #[test]
    fn dissipation_partial_group_seeded() {
        for seed in 0..4u64 {
            let s = random_state(6, 2, seed, 0.3);
            let p = ModelParams::new(6, 2);
            let rec = run(&s, &p, 3.0, 0.01);
            let g = CollisionGroup::new(&[0, 1, 2], 6).unwrap();
            let r = dissipation_check(&rec, &g, &p).unwrap();
            assert!(r.pass, "seed {seed}: min slack {} tol {}", r.min_slack, r.tol);
            assert!(r.constant("c1").unwrap() > 0.0 && r.constant("c2").unwrap() > 0.0);
        }
        let p = ModelParams::new(6, 2).gamma(0.8);
        let rec = run(&random_state(6, 2, 9, 0.3), &p, 3.0, 0.01);
        let r = dissipation_check(&rec, &CollisionGroup::new(&[0, 1, 2], 6).unwrap(), &p).unwrap();
        assert_eq!(r.inequality_id, InequalityId::In1);
        assert!(r.pass, "min slack {} tol {}", r.min_slack, r.tol);
    }

    #[test]
    fn dissipation_hypothesis_violation_names_pair() {
        let s = st(3, 1, &[0.0, 1.0, 1.5], &[0.0, 0.0, 0.0]);
        let p = ModelParams::new(3, 1);
        let rec = run(&s, &p, 0.5, 0.05);
        let g = CollisionGroup::new(&[0, 1], 3).unwrap();
        match dissipation_check_with(&rec, &g, &p, Some(1.0)) {
            Err(Error::HypothesisViolated { i: 1, j: 2, time, .. }) => assert_eq!(time, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eqmot_and_apriori_on_runs() {
        let p = ModelParams::new(2, 1);
        let rec = run(&head_on(0.25), &p, 10.0, 0.01);
        let g = CollisionGroup::new(&[0, 1], 2).unwrap();
        assert!(eqmot_check(&rec, &g).unwrap().pass);
        assert!(apriori_check(&rec, &g).unwrap().pass);
        let s = random_state(5, 2, 3, 0.2);
        let p = ModelParams::new(5, 2).gamma(1.2);
        let rec = run(&s, &p, 4.0, 0.02);
        let g = auto_group(&rec, 0.2).unwrap();
        assert!(eqmot_check(&rec, &g).unwrap().pass);
        assert!(apriori_check(&rec, &g).unwrap().pass);
    }

    #[test]
    fn auto_group_picks_closest_pair() {
        let s = st(4, 1, &[0.0, 0.5, 3.0, 7.0], &[0.0; 4]);
        let rec = run(&s, &ModelParams::new(4, 1), 0.1, 0.05);
        assert_eq!(auto_group(&rec, 0.1).unwrap().members(), &[0, 1]);
    }

    #[test]
    fn theorem2_static_and_seeded() {
        let s = st(3, 1, &[0.0, 1.0, 3.0], &[0.2, 0.2, 0.2]);
        let p = ModelParams::new(3, 1).alpha(2.0);
        let r = theorem2_check(&run(&s, &p, 1.0, 0.05), &p).unwrap();
        assert_eq!(r.inequality_id, InequalityId::Es1);
        assert!(r.pass && r.min_slack >= 0.0);
        for (alpha, id) in [(2.0, InequalityId::Es1), (3.0, InequalityId::Es2)] {
            let p = ModelParams::new(4, 2).alpha(alpha);
            let rec = run(&random_state(4, 2, 17, 0.3), &p, 3.0, 0.02);
            let r = theorem2_check(&rec, &p).unwrap();
            assert_eq!(r.inequality_id, id);
            assert!(r.pass, "alpha {alpha}: {}", r.min_slack);
        }
        let p = ModelParams::new(4, 2).alpha(1.5);
        assert!(matches!(theorem2_check(&run(&random_state(4, 2, 1, 0.3), &p, 0.1, 0.05), &p), Err(Error::Parameter { .. })));
        assert_eq!(theorem2_check(&run(&s, &ModelParams::new(3, 1).alpha(3.0), 1.0, 0.05), &ModelParams::new(3, 1).alpha(3.0)).unwrap().constant("beta"), Some(0.5));
    }

    struct CubeWeight;
    impl CustomWeight for CubeWeight {
        fn eval(&self, s: f64) -> f64 {
            1.0 / (s * s * s)
        }
        fn primitive(&self, s: f64) -> Option<f64> {
            Some(-0.5 / (s * s))
        }
        fn singular_point(&self) -> Option<f64> {
            Some(0.0)
        }
        fn name(&self) -> &str {
            "cube"
        }
    }

    struct BadWeight;
    impl CustomWeight for BadWeight {
        fn eval(&self, s: f64) -> f64 {
            1.0 / s
        }
        fn primitive(&self, s: f64) -> Option<f64> {
            Some(libm::log(s))
        }
        fn singular_point(&self) -> Option<f64> {
            Some(0.0)
        }
        fn name(&self) -> &str {
            "inverse"
        }
    }

    #[test]
    fn theorem3_power_identity() {
        // ψ = s^{-α}: As1 holds with equality for
        // β = 1 − (2γ−1)α/((α−1)2γ), C = (α−1)^{α/(α−1)}.
        for (alpha, gamma) in [(3.0, 1.0), (4.0, 1.0), (3.0, 1.2), (5.0, 0.8)] {
            let beta = 1.0 - (2.0 * gamma - 1.0) * alpha / ((alpha - 1.0) * 2.0 * gamma);
            if !(0.0..1.0).contains(&beta) {
                continue;
            }
            let c = libm::pow(alpha - 1.0, alpha / (alpha - 1.0));
            let p = ModelParams::new(3, 1).alpha(alpha).gamma(gamma);
            let w = p.weight_fn();
            let pw = (1.0 - beta) * 2.0 * gamma / (2.0 * gamma - 1.0);
            for k in 0..50 {
                let s = 0.05 * libm::pow(400.0, k as f64 / 49.0);
                let lhs = w.eval(s).unwrap();
                let rhs = c * libm::pow(w.primitive(s).unwrap().abs(), pw);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs, "alpha {alpha} gamma {gamma} s {s}");
            }
        }
    }

    #[test]
    fn theorem3_custom_cube() {
        let p = ModelParams::new(3, 1).weight(WeightKind::Custom(Arc::new(CubeWeight))).alpha(3.0);
        let s = st(3, 1, &[0.0, 1.0, 3.0], &[0.2, 0.2, 0.2]);
        let rec = run(&s, &p, 1.0, 0.05);
        let c = 2f64.powf(1.5);
        let rep = theorem3_check(&rec, &p.weight_fn(), 0.25, c, &p).unwrap();
        assert!(rep.as1_pass && !rep.vacuous);
        let b = rep.into_result().unwrap();
        assert_eq!(b.inequality_id, InequalityId::Es3);
        assert!(b.pass && b.min_slack >= 0.0);
        let rec = run(&random_state(3, 1, 2, 0.4), &p, 2.0, 0.02);
        assert!(theorem3_check(&rec, &p.weight_fn(), 0.25, c, &p).unwrap().into_result().unwrap().pass);
    }

    #[test]
    fn theorem3_rejects_slow_primitive() {
        let p = ModelParams::new(3, 1).weight(WeightKind::Custom(Arc::new(BadWeight)));
        let s = st(3, 1, &[0.0, 1.0, 3.0], &[0.2, 0.2, 0.2]);
        let rec = run(&s, &p, 1.0, 0.05);
        let rep = theorem3_check(&rec, &p.weight_fn(), 0.25, 1.0, &p).unwrap();
        assert!(rep.vacuous && !rep.bounds.residuals.is_empty());
        assert!(matches!(rep.into_result(), Err(Error::ConditionFailed { condition: "As1", .. })));
    }

    #[test]
    fn momeq_on_seeded_run() {
        let p = ModelParams::new(5, 2).gamma(0.9);
        let rec = run(&random_state(5, 2, 8, 0.2), &p, 3.0, 0.05);
        let r = momeq_check(&rec).unwrap();
        assert!(r.pass);
        assert!(r.constant("m1_max_drift").unwrap() < 1e-10);
    }

    #[test]
    fn inequality_names_round_trip() {
        for id in InequalityId::ALL {
            assert_eq!(id.name().parse::<InequalityId>().unwrap(), id);
        }
        assert!("Es9".parse::<InequalityId>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn eqmot_holds_pointwise_for_pairs(seed in any::<u64>()) {
            // |d‖x‖_C/dt| ≤ ‖v‖_C from the exact time derivative.
            let s = random_state(4, 2, seed, 0.0);
            let g = CollisionGroup::new(&[0, 2, 3], 4).unwrap();
            let x = group_norm(&s.positions, &g, 2);
            let v = group_norm(&s.velocities, &g, 2);
            let mut dot = 0.0;
            for &i in g.members() {
                for &j in g.members() {
                    for k in 0..2 {
                        dot += (s.positions[i * 2 + k] - s.positions[j * 2 + k]) * (s.velocities[i * 2 + k] - s.velocities[j * 2 + k]);
                    }
                }
            }
            prop_assert!((dot / x).abs() <= v * (1.0 + 1e-12));
        }

        #[test]
        fn beta_distance_is_permutation_invariant(seed in any::<u64>()) {
            let s = random_state(5, 2, seed, 0.05);
            let mut rev = s.clone();
            for i in 0..5 {
                rev.positions[i * 2..i * 2 + 2].copy_from_slice(&s.positions[(4 - i) * 2..(4 - i) * 2 + 2]);
            }
            let a = beta_distance(&s, 0.7, 0.0).unwrap();
            let b = beta_distance(&rev, 0.7, 0.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * a);
        }
    }
}
