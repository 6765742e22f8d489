//! Velocity moments, position/velocity deviations, the initial-data
//! flocking condition, the Lyapunov functionals E± and a posteriori
//! classification of the decay of σ_v.
//!
//! With x_c, v_c the arithmetic means,
//!
//! ```text
//! σ_x² = (1/N) Σ |x_i − x_c|²,   σ_v² = (1/N) Σ |v_i − v_c|²
//! E±   = σ_v^{3−2γ}/(3−2γ) ± C₂ ∫_{s_ref}^{σ_x} ψ(2√N s) ds
//! ```
//!
//! For singular weights the integral from 0 diverges, so E± is anchored at
//! a reference point s_ref > 0 and only its changes along a trajectory are
//! meaningful.

use crate::dynamics::{max_pair_distance, min_pair_distance};
use crate::error::{Error, Result};
use crate::guards::beta_distance;
use crate::integrator::TrajectoryRecord;
use crate::math;
use crate::model::{ModelParams, ParticleState, WeightFunction};
use crate::quad;
use crate::stats::{linear_fit, LinearFit};
use alloc::vec;
use alloc::vec::Vec;

/// m₀ = N, m₁ = Σ v_i, m₂ = Σ |v_i|².
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// Agent count.
    pub m0: usize,
    /// Total velocity.
    pub m1: Vec<f64>,
    /// Sum of squared speeds.
    pub m2: f64,
}

/// Means and standard deviations of positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviations {
    /// σ_x.
    pub sigma_x: f64,
    /// σ_v.
    pub sigma_v: f64,
    /// x_c.
    pub x_center: Vec<f64>,
    /// v_c.
    pub v_center: Vec<f64>,
}

/// Zeroth to second velocity moments.
pub fn moments(state: &ParticleState) -> Moments {
    let d = state.dim;
    let mut m1 = vec![0.0; d];
    let mut m2 = 0.0;
    for i in 0..state.n_agents {
        for (k, v) in state.velocity(i).iter().enumerate() {
            m1[k] += v;
            m2 += v * v;
        }
    }
    Moments { m0: state.n_agents, m1, m2 }
}

pub(crate) fn center(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            c[k] += data[i * d + k];
        }
    }
    c.iter_mut().for_each(|x| *x /= n as f64);
    c
}

pub(crate) fn spread(data: &[f64], c: &[f64], n: usize, d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..d {
            let e = data[i * d + k] - c[k];
            acc += e * e;
        }
    }
    math::sqrt(acc / n as f64)
}

/// σ_x, σ_v and the centers.
pub fn deviations(state: &ParticleState) -> Deviations {
    let (n, d) = (state.n_agents, state.dim);
    let x_center = center(&state.positions, n, d);
    let v_center = center(&state.velocities, n, d);
    Deviations {
        sigma_x: spread(&state.positions, &x_center, n, d),
        sigma_v: spread(&state.velocities, &v_center, n, d),
        x_center,
        v_center,
    }
}

/// Outcome of [`flocking_condition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlockingCondition {
    /// Whether lhs ≤ rhs.
    pub satisfied: bool,
    /// σ_v(0)^{3−2γ}.
    pub lhs: f64,
    /// C₂(3−2γ)∫_{σ_x(0)}^∞ ψ(2√N s) ds; `f64::INFINITY` for a heavy tail.
    pub rhs: f64,
}

/// Checks σ_v(0)^{3−2γ} ≤ C₂(3−2γ) ∫_{σ_x(0)}^∞ ψ(2√N s) ds.
///
/// For the power families the integral is closed form and diverges iff
/// α ≤ 1, in which case the condition holds unconditionally.
pub fn flocking_condition(initial: &ParticleState, params: &ModelParams, c2: f64) -> Result<FlockingCondition> {
    params.validate()?;
    initial.check_shape(params)?;
    let gamma = params.gamma;
    if !(gamma > 0.5 && gamma < 1.5) {
        return Err(Error::Parameter { field: "gamma", reason: "flocking condition needs gamma in (1/2, 3/2)" });
    }
    if !(c2 > 0.0) {
        return Err(Error::Parameter { field: "c2", reason: "must be positive" });
    }
    let dev = deviations(initial);
    let weight = params.weight_fn();
    let lhs = math::powf(dev.sigma_v, 3.0 - 2.0 * gamma);
    let k = 2.0 * math::sqrt(params.n_agents as f64);
    if dev.sigma_x == 0.0 && weight.singular_point().is_some() {
        return Err(Error::IntegralUndefined);
    }
    let rhs = match weight.scaled_tail_integral(k, dev.sigma_x)? {
        None => f64::INFINITY,
        Some(tail) => c2 * (3.0 - 2.0 * gamma) * tail,
    };
    Ok(FlockingCondition { satisfied: lhs <= rhs, lhs, rhs })
}

/// Sign selector for E±.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    /// E⁺.
    Plus,
    /// E⁻.
    Minus,
}

/// Default lower reference for the E± integral: the point whose scaled
/// argument 2√N·s_ref sits halfway between the singular point and the
/// initial minimum pair distance (0 for regular weights). Since
/// σ_x ≥ d_min/2 for N ≥ 2, σ_x(0) > s_ref.
pub fn default_s_ref(initial: &ParticleState, weight: &WeightFunction) -> f64 {
    match weight.singular_point() {
        None => 0.0,
        Some(floor) => {
            let (d_min, _) = min_pair_distance(initial);
            0.5 * (floor + d_min) / (2.0 * math::sqrt(initial.n_agents as f64))
        }
    }
}

/// A C₂ for which the σ_v dissipation inequality
/// σ_v' ≤ −C₂ ψ(2√N σ_x) σ_v^{2γ−1} holds under coercivity constant C₁:
/// C₁·2^{γ−1} for γ ≥ 1 and C₁·2^{γ−1}·N^{2γ−2} for γ < 1.
pub fn admissible_c2(gamma: f64, c1: f64, n_agents: usize) -> f64 {
    let base = c1 * math::powf(2.0, gamma - 1.0);
    if gamma >= 1.0 {
        base
    } else {
        base * math::powf(n_agents as f64, 2.0 * gamma - 2.0)
    }
}

fn scaled_integral(weight: &WeightFunction, k: f64, lo: f64, hi: f64) -> Result<f64> {
    match (weight.primitive(k * hi), weight.primitive(k * lo)) {
        (Ok(a), Ok(b)) => Ok((a - b) / k),
        (Err(Error::Unsupported(_)), _) | (_, Err(Error::Unsupported(_))) => {
            weight.eval(k * lo)?;
            Ok(quad::integrate(|s| weight.eval_unchecked(k * s), lo, hi, 1e-14, 1e-12).0)
        }
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// E±(t) with the integral anchored at `s_ref`.
pub fn lyapunov(state: &ParticleState, params: &ModelParams, c2: f64, sign: Sign, s_ref: f64) -> Result<f64> {
    lyapunov_with(state, &params.weight_fn(), params.gamma, c2, sign, s_ref)
}

fn lyapunov_with(state: &ParticleState, weight: &WeightFunction, gamma: f64, c2: f64, sign: Sign, s_ref: f64) -> Result<f64> {
    if gamma == 1.5 {
        return Err(Error::Parameter { field: "gamma", reason: "E± is undefined at gamma = 3/2" });
    }
    let dev = deviations(state);
    let k = 2.0 * math::sqrt(state.n_agents as f64);
    if weight.singular_point().is_some() && !(dev.sigma_x > s_ref) {
        return Err(Error::Domain { s: dev.sigma_x, floor: s_ref });
    }
    let kinetic = math::powf(dev.sigma_v, 3.0 - 2.0 * gamma) / (3.0 - 2.0 * gamma);
    let potential = c2 * scaled_integral(weight, k, s_ref, dev.sigma_x)?;
    Ok(match sign {
        Sign::Plus => kinetic + potential,
        Sign::Minus => kinetic - potential,
    })
}

/// Settings for the per-sample frames written by the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsConfig {
    /// C₂ used in E±.
    pub c2: f64,
    /// Lower reference for E±; `None` uses [`default_s_ref`].
    pub s_ref: Option<f64>,
    /// Exponent for the L^β column; `None` leaves it NaN.
    pub beta: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { c2: 1.0, s_ref: None, beta: None }
    }
}

/// Observables at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsFrame {
    /// Sample time.
    pub time: f64,
    /// m₀.
    pub m0: usize,
    /// m₁.
    pub m1: Vec<f64>,
    /// m₂.
    pub m2: f64,
    /// σ_x.
    pub sigma_x: f64,
    /// σ_v.
    pub sigma_v: f64,
    /// v_c.
    pub v_center: Vec<f64>,
    /// x_c.
    pub x_center: Vec<f64>,
    /// Minimum pair distance.
    pub min_dist: f64,
    /// Maximum pair distance.
    pub max_dist: f64,
    /// E⁺ (NaN when σ_x ≤ s_ref).
    pub lyapunov_plus: f64,
    /// E⁻ (NaN when σ_x ≤ s_ref).
    pub lyapunov_minus: f64,
    /// L^β (NaN unless configured).
    pub l_beta: f64,
}

/// [`DiagnosticsConfig`] with defaults resolved against an initial state.
#[derive(Debug, Clone)]
pub struct ResolvedDiagnostics {
    weight: WeightFunction,
    gamma: f64,
    /// C₂ in use.
    pub c2: f64,
    /// s_ref in use.
    pub s_ref: f64,
    /// β for L^β, if any.
    pub beta: Option<f64>,
}

impl ResolvedDiagnostics {
    /// Resolves `s_ref` from `initial` when not given.
    pub fn new(cfg: &DiagnosticsConfig, initial: &ParticleState, params: &ModelParams) -> Result<Self> {
        if !(cfg.c2 > 0.0) {
            return Err(Error::Parameter { field: "c2", reason: "must be positive" });
        }
        let weight = params.weight_fn();
        let s_ref = cfg.s_ref.unwrap_or_else(|| default_s_ref(initial, &weight));
        if !(s_ref >= 0.0) {
            return Err(Error::Parameter { field: "s_ref", reason: "must be non-negative" });
        }
        if let Some(beta) = cfg.beta {
            if !(beta >= 0.0) {
                return Err(Error::Parameter { field: "beta", reason: "must be non-negative" });
            }
        }
        Ok(Self { weight, gamma: params.gamma, c2: cfg.c2, s_ref, beta: cfg.beta })
    }

    /// Frame for `state`.
    pub fn frame(&self, state: &ParticleState) -> DiagnosticsFrame {
        let m = moments(state);
        let dev = deviations(state);
        let e = |sign| lyapunov_with(state, &self.weight, self.gamma, self.c2, sign, self.s_ref).unwrap_or(f64::NAN);
        let l_beta = self
            .beta
            .map(|b| beta_distance(state, b, self.weight.shift()).unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN);
        DiagnosticsFrame {
            time: state.time,
            m0: m.m0,
            m1: m.m1,
            m2: m.m2,
            sigma_x: dev.sigma_x,
            sigma_v: dev.sigma_v,
            v_center: dev.v_center,
            x_center: dev.x_center,
            min_dist: min_pair_distance(state).0,
            max_dist: max_pair_distance(state),
            lyapunov_plus: e(Sign::Plus),
            lyapunov_minus: e(Sign::Minus),
            l_beta,
        }
    }
}

/// Observed decay regime of σ_v.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlockRegime {
    /// σ_v fell below the finite-time threshold at `t_star`.
    FiniteTime {
        /// First sample time below threshold.
        t_star: f64,
    },
    /// ln σ_v linear in t with slope −rate.
    Exponential {
        /// Decay rate.
        rate: f64,
    },
    /// ln σ_v linear in ln t with this (negative) slope.
    Algebraic {
        /// Fitted exponent.
        exponent: f64,
    },
    /// σ_v did not decrease.
    NoFlock,
    /// No fit reached the R² threshold.
    Undetermined,
}

/// Classification of a trajectory's velocity alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlockReport {
    /// Regime.
    pub regime: FlockRegime,
    /// R² of the selected fit (1 for finite time).
    pub fit_quality: f64,
    /// sup σ_x over the record.
    pub sup_sigma_x: f64,
    /// sup of the maximum pair distance over the record.
    pub sup_max_dist: f64,
    /// Fit of ln σ_v against t on the tail window.
    pub exponential_fit: Option<LinearFit>,
    /// Fit of ln σ_v against ln t on the tail window.
    pub algebraic_fit: Option<LinearFit>,
}

/// Thresholds for [`classify_flocking_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Minimum R² for a fit to count.
    pub r2_threshold: f64,
    /// σ_v/σ_v(0) below which alignment is considered reached.
    pub finite_time_ratio: f64,
    /// Fraction of the record (by time, from the end) used for fits.
    pub tail_fraction: f64,
    /// Minimum number of samples.
    pub min_samples: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { r2_threshold: 0.99, finite_time_ratio: 1e-12, tail_fraction: 0.5, min_samples: 50 }
    }
}

/// [`classify_flocking_with`] using the default thresholds.
pub fn classify_flocking(record: &TrajectoryRecord, _params: &ModelParams) -> Result<FlockReport> {
    classify_flocking_with(record, &ClassifierConfig::default())
}

/// Classifies the decay of σ_v: finite-time hit first, then the better of
/// the exponential and algebraic fits on the tail window, provided its R²
/// clears the threshold.
pub fn classify_flocking_with(record: &TrajectoryRecord, cfg: &ClassifierConfig) -> Result<FlockReport> {
    record.require_completed()?;
    let samples = &record.samples;
    if samples.len() < cfg.min_samples {
        return Err(Error::InsufficientData { needed: cfg.min_samples, got: samples.len() });
    }
    let sup_sigma_x = samples.iter().map(|s| s.frame.sigma_x).fold(0.0, f64::max);
    let sup_max_dist = samples.iter().map(|s| s.frame.max_dist).fold(0.0, f64::max);
    let first = &samples[0].frame;
    let last = &samples[samples.len() - 1].frame;
    let s0 = first.sigma_v;
    let t_final = last.time;
    let mut report = FlockReport {
        regime: FlockRegime::Undetermined,
        fit_quality: 0.0,
        sup_sigma_x,
        sup_max_dist,
        exponential_fit: None,
        algebraic_fit: None,
    };

    if let Some(hit) = samples.iter().find(|s| s.frame.sigma_v <= cfg.finite_time_ratio * s0 && s.frame.time < t_final) {
        report.regime = FlockRegime::FiniteTime { t_star: hit.frame.time };
        report.fit_quality = 1.0;
        return Ok(report);
    }
    if !(last.sigma_v < s0) {
        report.regime = FlockRegime::NoFlock;
        return Ok(report);
    }

    let t0 = first.time;
    let window_start = t_final - cfg.tail_fraction * (t_final - t0);
    let tail = samples.iter().filter(|s| s.frame.time >= window_start && s.frame.time > 0.0 && s.frame.sigma_v > 0.0);
    let exp_pts = tail.clone().map(|s| (s.frame.time, math::ln(s.frame.sigma_v)));
    let alg_pts = tail.map(|s| (math::ln(s.frame.time), math::ln(s.frame.sigma_v)));
    report.exponential_fit = linear_fit(exp_pts);
    report.algebraic_fit = linear_fit(alg_pts);

    let exp_r2 = report.exponential_fit.map_or(f64::NEG_INFINITY, |f| f.r_squared);
    let alg_r2 = report.algebraic_fit.map_or(f64::NEG_INFINITY, |f| f.r_squared);
    if exp_r2.max(alg_r2) >= cfg.r2_threshold {
        if exp_r2 >= alg_r2 {
            let fit = report.exponential_fit.unwrap();
            report.regime = FlockRegime::Exponential { rate: -fit.slope };
            report.fit_quality = exp_r2;
        } else {
            let fit = report.algebraic_fit.unwrap();
            report.regime = FlockRegime::Algebraic { exponent: fit.slope };
            report.fit_quality = alg_r2;
        }
    } else {
        report.fit_quality = exp_r2.max(alg_r2).max(0.0);
    }
    Ok(report)
}
