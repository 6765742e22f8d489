//! Model parameters, particle states, communication weights ψ and velocity
//! couplings Γ.
//!
//! Built-in weights:
//!
//! | kind              | ψ(s)              | domain  | primitive Ψ                          |
//! |-------------------|-------------------|---------|--------------------------------------|
//! | `PowerSingular`   | s^{−α}            | s > 0   | ln s (α = 1), s^{1−α}/(1−α) otherwise |
//! | `ShiftedSingular` | (s − δ)^{−α}      | s > δ   | same in s − δ                        |
//! | `RegularCs`       | (1 + s²)^{−β}     | s ≥ 0   | ∫_0^s ψ, closed form for β ∈ {0, ½, 1} |
//!
//! The primitive constants are fixed as above; only differences of Ψ carry
//! meaning in the estimates that use it.
//!
//! The built-in coupling is Γ(v) = v|v|^{2(γ−1)} with Γ(0) = 0, which
//! satisfies ⟨Γ(v), v⟩ = |v|^{2γ} (coercivity constant C₁ = 1).

use crate::error::{Error, Result};
use crate::math;
use crate::quad;
use crate::sampling::Sampler;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// User-supplied communication weight.
pub trait CustomWeight: Send + Sync {
    /// ψ(s).
    fn eval(&self, s: f64) -> f64;
    /// Ψ(s) with Ψ' = ψ, if a closed form is known.
    fn primitive(&self, _s: f64) -> Option<f64> {
        None
    }
    /// Open lower bound of the domain when ψ is singular there.
    fn singular_point(&self) -> Option<f64>;
    /// Short label for reports.
    fn name(&self) -> &str;
}

/// User-supplied velocity coupling.
pub trait CustomCoupling: Send + Sync {
    /// Writes Γ(v) into `out`.
    fn eval(&self, v: &[f64], out: &mut [f64]);
    /// Short label for reports.
    fn name(&self) -> &str;
}

/// Communication-weight family.
#[derive(Clone)]
pub enum WeightKind {
    /// ψ(s) = s^{−α}.
    PowerSingular,
    /// ψ(s) = (s − δ)^{−α}.
    ShiftedSingular,
    /// ψ(s) = (1 + s²)^{−β}.
    RegularCs {
        /// Decay exponent β ≥ 0.
        beta: f64,
    },
    /// Caller-supplied weight.
    Custom(Arc<dyn CustomWeight>),
}

impl fmt::Debug for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::PowerSingular => f.write_str("PowerSingular"),
            WeightKind::ShiftedSingular => f.write_str("ShiftedSingular"),
            WeightKind::RegularCs { beta } => write!(f, "RegularCs {{ beta: {beta} }}"),
            WeightKind::Custom(w) => write!(f, "Custom({})", w.name()),
        }
    }
}

/// Velocity-coupling family.
#[derive(Clone)]
pub enum CouplingKind {
    /// Γ(v) = v|v|^{2(γ−1)}.
    PowerLaw,
    /// Γ(v) = v; only valid with γ = 1.
    Linear,
    /// Caller-supplied coupling.
    Custom(Arc<dyn CustomCoupling>),
}

impl fmt::Debug for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingKind::PowerLaw => f.write_str("PowerLaw"),
            CouplingKind::Linear => f.write_str("Linear"),
            CouplingKind::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

/// Parameters of one flocking system.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Number of agents N ≥ 2.
    pub n_agents: usize,
    /// Physical dimension d ≥ 1.
    pub dim: usize,
    /// Singularity / decay exponent α > 0.
    pub alpha: f64,
    /// Coupling exponent γ > 1/2.
    pub gamma: f64,
    /// Singularity shift δ ≥ 0; only the shifted weight uses it.
    pub delta: f64,
    /// Coercivity constant C₁ > 0.
    pub c1: f64,
    /// Weight family.
    pub weight: WeightKind,
    /// Coupling family.
    pub coupling: CouplingKind,
}

impl ModelParams {
    /// Power-singular weight with α = 1 and the linear-equivalent power
    /// coupling (γ = 1, C₁ = 1).
    pub fn new(n_agents: usize, dim: usize) -> Self {
        Self {
            n_agents,
            dim,
            alpha: 1.0,
            gamma: 1.0,
            delta: 0.0,
            c1: 1.0,
            weight: WeightKind::PowerSingular,
            coupling: CouplingKind::PowerLaw,
        }
    }

    /// Sets α.
    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Sets γ.
    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Sets δ.
    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Sets C₁.
    pub fn c1(mut self, c1: f64) -> Self {
        self.c1 = c1;
        self
    }

    /// Sets the weight family.
    pub fn weight(mut self, weight: WeightKind) -> Self {
        self.weight = weight;
        self
    }

    /// Sets the coupling family.
    pub fn coupling(mut self, coupling: CouplingKind) -> Self {
        self.coupling = coupling;
        self
    }

    /// Checks the parameter invariants. Custom weights and couplings are
    /// sampled here (positivity/monotonicity of ψ, skew symmetry and
    /// coercivity of Γ).
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::Parameter { field: "n_agents", reason: "must be at least 2" });
        }
        if self.dim < 1 {
            return Err(Error::Parameter { field: "dim", reason: "must be at least 1" });
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter { field: "alpha", reason: "must be finite and positive" });
        }
        if !(self.gamma > 0.5 && self.gamma.is_finite()) {
            return Err(Error::Parameter { field: "gamma", reason: "must exceed 1/2" });
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter { field: "delta", reason: "must be finite and non-negative" });
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::Parameter { field: "c1", reason: "must be finite and positive" });
        }
        match &self.weight {
            WeightKind::ShiftedSingular => {}
            WeightKind::RegularCs { beta } if !(*beta >= 0.0 && beta.is_finite()) => {
                return Err(Error::Parameter { field: "beta_cs", reason: "must be finite and non-negative" });
            }
            WeightKind::Custom(_) => self.weight_fn().check_shape()?,
            _ => {}
        }
        if self.delta != 0.0 && !matches!(self.weight, WeightKind::ShiftedSingular) {
            return Err(Error::Parameter {
                field: "delta",
                reason: "a non-zero shift requires the shifted weight",
            });
        }
        match &self.coupling {
            CouplingKind::Linear if self.gamma != 1.0 => {
                return Err(Error::Parameter { field: "gamma", reason: "linear coupling requires gamma = 1" });
            }
            CouplingKind::Custom(_) => {
                let report = check_axioms(&self.coupling_fn(), self.dim, self.gamma, self.c1, 256, 0x5eed);
                if !report.a1_pass {
                    return Err(Error::Parameter { field: "coupling", reason: "custom coupling is not skew-symmetric" });
                }
                if !report.a2_pass {
                    return Err(Error::Parameter { field: "coupling", reason: "custom coupling violates coercivity" });
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The weight ψ configured by these parameters.
    pub fn weight_fn(&self) -> WeightFunction {
        WeightFunction { kind: self.weight.clone(), alpha: self.alpha, delta: self.delta }
    }

    /// The coupling Γ configured by these parameters.
    pub fn coupling_fn(&self) -> CouplingFunction {
        CouplingFunction { kind: self.coupling.clone(), gamma: self.gamma }
    }

    /// Length of the flattened position (or velocity) array.
    pub fn flat_len(&self) -> usize {
        self.n_agents * self.dim
    }
}

/// Positions and velocities of all agents at one instant, row-major
/// (`positions[i * dim + k]` is component k of agent i).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    /// Time t.
    pub time: f64,
    /// Number of agents.
    pub n_agents: usize,
    /// Dimension.
    pub dim: usize,
    /// Flattened positions.
    pub positions: Vec<f64>,
    /// Flattened velocities.
    pub velocities: Vec<f64>,
}

impl ParticleState {
    /// Builds a state, checking shapes and finiteness.
    pub fn new(time: f64, n_agents: usize, dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let expected = n_agents * dim;
        for found in [positions.len(), velocities.len()] {
            if found != expected {
                return Err(Error::Shape { expected, found });
            }
        }
        let state = Self { time, n_agents, dim, positions, velocities };
        if !state.is_finite() || !time.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(state)
    }

    /// All agents at rest at the origin-free zero state; handy for tests.
    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self {
            time: 0.0,
            n_agents,
            dim,
            positions: vec![0.0; n_agents * dim],
            velocities: vec![0.0; n_agents * dim],
        }
    }

    /// x_i.
    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// v_i.
    #[inline]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|x| x.is_finite())
    }

    /// Checks the state against the parameters' N and d.
    pub fn check_shape(&self, params: &ModelParams) -> Result<()> {
        if self.n_agents != params.n_agents {
            return Err(Error::Shape { expected: params.n_agents, found: self.n_agents });
        }
        if self.dim != params.dim {
            return Err(Error::Shape { expected: params.dim, found: self.dim });
        }
        Ok(())
    }
}

/// A communication weight ψ bound to its parameters.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    /// Family.
    pub kind: WeightKind,
    /// α for the power families.
    pub alpha: f64,
    /// δ for the shifted family.
    pub delta: f64,
}

impl WeightFunction {
    /// Open lower bound of the domain for singular weights; `None` for
    /// weights defined on s ≥ 0.
    pub fn singular_point(&self) -> Option<f64> {
        match &self.kind {
            WeightKind::PowerSingular => Some(0.0),
            WeightKind::ShiftedSingular => Some(self.delta),
            WeightKind::RegularCs { .. } => None,
            WeightKind::Custom(w) => w.singular_point(),
        }
    }

    /// Distance below which agents count as collided: the singular point,
    /// or 0 for regular weights.
    pub fn collision_floor(&self) -> f64 {
        self.singular_point().unwrap_or(0.0)
    }

    /// Whether `s` lies in the domain.
    #[inline]
    pub fn in_domain(&self, s: f64) -> bool {
        match self.singular_point() {
            Some(floor) => s > floor,
            None => s >= 0.0,
        }
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if self.in_domain(s) {
            Ok(())
        } else {
            Err(Error::Domain { s, floor: self.collision_floor() })
        }
    }

    /// ψ(s) without the domain check. Callers guarantee `in_domain(s)`.
    #[inline]
    pub fn eval_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            WeightKind::PowerSingular => power(s, self.alpha),
            WeightKind::ShiftedSingular => power(s - self.delta, self.alpha),
            WeightKind::RegularCs { beta } => {
                if *beta == 0.0 {
                    1.0
                } else {
                    math::powf(1.0 + s * s, -beta)
                }
            }
            WeightKind::Custom(w) => w.eval(s),
        }
    }

    /// ψ(s).
    pub fn eval(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.eval_unchecked(s))
    }

    /// Ψ(s) with the normalization in the module docs.
    pub fn primitive(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        match &self.kind {
            WeightKind::PowerSingular => Ok(power_primitive(s, self.alpha)),
            WeightKind::ShiftedSingular => Ok(power_primitive(s - self.delta, self.alpha)),
            WeightKind::RegularCs { beta } => Ok(regular_primitive(s, *beta)),
            WeightKind::Custom(w) => w.primitive(s).ok_or(Error::Unsupported("custom weight has no primitive")),
        }
    }

    /// ψ'(s): analytic for the built-in families, central difference for
    /// custom weights.
    pub fn derivative(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match &self.kind {
            WeightKind::PowerSingular => -self.alpha * power(s, self.alpha + 1.0),
            WeightKind::ShiftedSingular => -self.alpha * power(s - self.delta, self.alpha + 1.0),
            WeightKind::RegularCs { beta } => -2.0 * beta * s * math::powf(1.0 + s * s, -beta - 1.0),
            WeightKind::Custom(w) => {
                let floor = self.collision_floor();
                let h = 1e-6 * if self.singular_point().is_some() { s - floor } else { s.max(1.0) };
                let lo = (s - h).max(if self.singular_point().is_some() { floor + 0.5 * (s - floor) } else { 0.0 });
                (w.eval(s + h) - w.eval(lo)) / (s + h - lo)
            }
        })
    }

    /// sup |ψ'| on [a, b] (a in the domain). Exact for built-in families,
    /// a dense-grid estimate for custom weights.
    pub fn lipschitz_on(&self, a: f64, b: f64) -> Result<f64> {
        self.check_domain(a)?;
        let b = b.max(a);
        match &self.kind {
            WeightKind::PowerSingular | WeightKind::ShiftedSingular => Ok(self.derivative(a)?.abs()),
            WeightKind::RegularCs { beta } => {
                let peak = 1.0 / math::sqrt(2.0 * beta + 1.0);
                let mut best = self.derivative(a)?.abs().max(self.derivative(b)?.abs());
                if a <= peak && peak <= b {
                    best = best.max(self.derivative(peak)?.abs());
                }
                Ok(best)
            }
            WeightKind::Custom(_) => {
                const GRID: usize = 257;
                let mut best: f64 = 0.0;
                for k in 0..GRID {
                    let s = a + (b - a) * k as f64 / (GRID - 1) as f64;
                    best = best.max(self.derivative(s)?.abs());
                }
                Ok(best)
            }
        }
    }

    /// Shift δ of the β-distance associated with this weight (δ for the
    /// shifted family, 0 otherwise).
    pub fn shift(&self) -> f64 {
        match self.kind {
            WeightKind::ShiftedSingular => self.delta,
            _ => 0.0,
        }
    }

    /// ∫_a^∞ ψ(k s) ds for k > 0. `Ok(None)` when the tail is not
    /// integrable.
    pub fn scaled_tail_integral(&self, k: f64, a: f64) -> Result<Option<f64>> {
        self.check_domain(k * a)?;
        match &self.kind {
            WeightKind::PowerSingular | WeightKind::ShiftedSingular => {
                if self.alpha <= 1.0 {
                    Ok(None)
                } else {
                    let gap = k * a - self.shift();
                    Ok(Some(math::powf(gap, 1.0 - self.alpha) / ((self.alpha - 1.0) * k)))
                }
            }
            WeightKind::RegularCs { beta } => {
                if 2.0 * beta <= 1.0 {
                    return Ok(None);
                }
                let tail = if *beta == 1.0 {
                    core::f64::consts::FRAC_PI_2 - math::atan(k * a)
                } else {
                    let b = *beta;
                    quad::integrate_to_infinity(|s| math::powf(1.0 + s * s, -b), k * a, 1e-15, 1e-13).0
                };
                Ok(Some(tail / k))
            }
            WeightKind::Custom(_) => Err(Error::Unsupported("tail integral of a custom weight")),
        }
    }

    /// Samples ψ on a log-spaced grid over its domain and checks that it is
    /// positive and nonincreasing.
    pub fn check_shape(&self) -> Result<()> {
        const GRID: usize = 256;
        let floor = self.collision_floor();
        let mut prev = f64::INFINITY;
        for k in 0..GRID {
            let s = floor + math::powf(10.0, -6.0 + 9.0 * k as f64 / (GRID - 1) as f64);
            let v = self.eval(s)?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter { field: "weight", reason: "weight must be positive and finite on its domain" });
            }
            if v > prev * (1.0 + 1e-12) {
                return Err(Error::Parameter { field: "weight", reason: "weight must be nonincreasing" });
            }
            prev = v;
        }
        Ok(())
    }
}

#[inline]
fn power(gap: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        1.0 / gap
    } else if alpha == 2.0 {
        1.0 / (gap * gap)
    } else {
        math::powf(gap, -alpha)
    }
}

fn power_primitive(gap: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        math::ln(gap)
    } else {
        math::powf(gap, 1.0 - alpha) / (1.0 - alpha)
    }
}

fn regular_primitive(s: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        s
    } else if beta == 0.5 {
        math::asinh(s)
    } else if beta == 1.0 {
        math::atan(s)
    } else {
        quad::integrate(|t| math::powf(1.0 + t * t, -beta), 0.0, s, 1e-15, 1e-14).0
    }
}

/// A velocity coupling Γ bound to γ.
#[derive(Debug, Clone)]
pub struct CouplingFunction {
    /// Family.
    pub kind: CouplingKind,
    /// Exponent γ of the power family.
    pub gamma: f64,
}

impl CouplingFunction {
    /// Power-law coupling with exponent γ.
    pub fn power_law(gamma: f64) -> Self {
        Self { kind: CouplingKind::PowerLaw, gamma }
    }

    /// Writes Γ(v) into `out` (same length as `v`).
    #[inline]
    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            CouplingKind::Linear => out.copy_from_slice(v),
            CouplingKind::PowerLaw => {
                let factor = self.power_factor(math::norm(v));
                for (o, x) in out.iter_mut().zip(v) {
                    *o = factor * x;
                }
            }
            CouplingKind::Custom(c) => c.eval(v, out),
        }
    }

    /// Γ(v) as a new vector.
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.eval_into(v, &mut out);
        out
    }

    /// Scalar g with Γ(v) = g·v for the power/linear families, given |v|.
    /// Returns 0 at |v| = 0 (removable point for γ < 1).
    #[inline]
    pub fn power_factor(&self, norm: f64) -> f64 {
        match self.kind {
            CouplingKind::Linear => 1.0,
            _ if self.gamma == 1.0 => 1.0,
            _ if norm == 0.0 => 0.0,
            _ => math::powf(norm, 2.0 * self.gamma - 2.0),
        }
    }

    /// Whether Γ(v) is a scalar multiple of v computable by `power_factor`.
    #[inline]
    pub fn is_radial(&self) -> bool {
        !matches!(self.kind, CouplingKind::Custom(_))
    }

    /// Lipschitz constant of Γ on the closed ball of the given radius.
    /// Infinite for the power family with γ < 1; a sampled estimate for
    /// custom couplings.
    pub fn lipschitz_on_ball(&self, radius: f64, dim: usize) -> f64 {
        match &self.kind {
            CouplingKind::Linear => 1.0,
            CouplingKind::PowerLaw if self.gamma < 1.0 => f64::INFINITY,
            CouplingKind::PowerLaw => (2.0 * self.gamma - 1.0) * math::powf(radius, 2.0 * self.gamma - 2.0),
            CouplingKind::Custom(_) => {
                let mut sampler = Sampler::new(0x11f5);
                let (mut a, mut b) = (vec![0.0; dim], vec![0.0; dim]);
                let mut best: f64 = 0.0;
                for _ in 0..4096 {
                    for slot in [&mut a, &mut b] {
                        sampler.unit_vector(slot);
                        let r = radius * sampler.uniform();
                        slot.iter_mut().for_each(|x| *x *= r);
                    }
                    let d = math::dist(&a, &b);
                    if d > 0.0 {
                        best = best.max(math::dist(&self.eval(&a), &self.eval(&b)) / d);
                    }
                }
                best
            }
        }
    }
}

/// ψ(s) for the configured weight.
pub fn weight_eval(s: f64, params: &ModelParams) -> Result<f64> {
    params.weight_fn().eval(s)
}

/// Ψ(s) for the configured weight.
pub fn weight_primitive(s: f64, params: &ModelParams) -> Result<f64> {
    params.weight_fn().primitive(s)
}

/// Γ(v) for the configured coupling.
pub fn coupling_eval(v: &[f64], params: &ModelParams) -> Vec<f64> {
    params.coupling_fn().eval(v)
}

/// Outcome of sampling the skew-symmetry (A1) and coercivity (A2) axioms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomReport {
    /// Number of sampled vectors.
    pub samples: usize,
    /// max |Γ(−v) + Γ(v)|.
    pub max_skew_residual: f64,
    /// min ⟨Γ(v), v⟩ − C₁|v|^{2γ}.
    pub min_coercivity_slack: f64,
    /// Every sample satisfied |Γ(−v) + Γ(v)| ≤ 1e−12·|Γ(v)|.
    pub a1_pass: bool,
    /// Every sample satisfied the coercivity slack ≥ −1e−12·|v|^{2γ}.
    pub a2_pass: bool,
}

impl AxiomReport {
    /// Both axioms hold on the sample.
    pub fn pass(&self) -> bool {
        self.a1_pass && self.a2_pass
    }
}

/// Samples v on shells with radii log-spaced over [1e−6, 1e3] (uniform
/// directions) and checks skew symmetry and coercivity of Γ.
pub fn check_axioms(coupling: &CouplingFunction, dim: usize, gamma: f64, c1: f64, n_samples: usize, rng_seed: u64) -> AxiomReport {
    let n = n_samples.max(1);
    let mut sampler = Sampler::new(rng_seed);
    let mut v = vec![0.0; dim];
    let mut neg = vec![0.0; dim];
    let mut gv = vec![0.0; dim];
    let mut gneg = vec![0.0; dim];
    let mut report = AxiomReport {
        samples: n,
        max_skew_residual: 0.0,
        min_coercivity_slack: f64::INFINITY,
        a1_pass: true,
        a2_pass: true,
    };
    for k in 0..n {
        let exponent = if n == 1 { 0.0 } else { -6.0 + 9.0 * k as f64 / (n - 1) as f64 };
        let radius = math::powf(10.0, exponent);
        sampler.unit_vector(&mut v);
        v.iter_mut().for_each(|x| *x *= radius);
        for (m, x) in neg.iter_mut().zip(&v) {
            *m = -x;
        }
        coupling.eval_into(&v, &mut gv);
        coupling.eval_into(&neg, &mut gneg);

        let skew = math::sqrt(gv.iter().zip(&gneg).map(|(a, b)| (a + b) * (a + b)).sum());
        report.max_skew_residual = report.max_skew_residual.max(skew);
        if skew > 1e-12 * math::norm(&gv) {
            report.a1_pass = false;
        }

        let scale = math::powf(math::norm(&v), 2.0 * gamma);
        let slack = math::dot(&gv, &v) - c1 * scale;
        report.min_coercivity_slack = report.min_coercivity_slack.min(slack);
        if slack < -1e-12 * scale {
            report.a2_pass = false;
        }
    }
    report
}
