//! Right-hand side of the alignment system and pairwise-distance queries.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{CouplingFunction, ModelParams, ParticleState, WeightFunction};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

/// Accumulation mode for the per-agent interaction sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// Plain ascending-j accumulation.
    #[default]
    Sequential,
    /// Kahan-compensated ascending-j accumulation.
    Compensated,
}

/// Anything that can produce the accelerations v̇ for a configuration.
///
/// Implementations must be deterministic: the same inputs give bit-identical
/// output regardless of how the work is split internally.
pub trait AccelerationField {
    /// Number of agents.
    fn n_agents(&self) -> usize;
    /// Spatial dimension.
    fn dim(&self) -> usize;
    /// Communication weight, used for domain and proximity checks.
    fn weight(&self) -> &WeightFunction;
    /// Writes v̇ (flattened, N·d) into `out`.
    fn accelerations(&self, positions: &[f64], velocities: &[f64], out: &mut [f64]) -> Result<()>;
}

/// d/dt of a [`ParticleState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    /// ẋ_i = v_i.
    pub d_positions: Vec<f64>,
    /// v̇_i.
    pub d_velocities: Vec<f64>,
}

/// The alignment vector field for fixed parameters.
#[derive(Debug, Clone)]
pub struct Dynamics {
    n_agents: usize,
    dim: usize,
    weight: WeightFunction,
    coupling: CouplingFunction,
    summation: Summation,
}

impl Dynamics {
    /// Validates the parameters and binds ψ and Γ.
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            n_agents: params.n_agents,
            dim: params.dim,
            weight: params.weight_fn(),
            coupling: params.coupling_fn(),
            summation: Summation::Sequential,
        })
    }

    /// Selects the accumulation mode.
    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        self
    }

    /// The coupling Γ.
    pub fn coupling(&self) -> &CouplingFunction {
        &self.coupling
    }

    /// Accelerations for agents in `rows`; `out` holds exactly those rows.
    ///
    /// Each row is summed over ascending j ≠ i, so splitting the agent range
    /// across workers does not change any bit of the result.
    pub fn accelerations_rows(&self, positions: &[f64], velocities: &[f64], rows: Range<usize>, out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let n = self.n_agents;
        let inv_n = 1.0 / n as f64;
        let mut diff = vec![0.0; d];
        let mut gamma = vec![0.0; d];
        let mut comp = vec![0.0; d];
        for (row, i) in rows.enumerate() {
            let xi = &positions[i * d..(i + 1) * d];
            let vi = &velocities[i * d..(i + 1) * d];
            let acc = &mut out[row * d..(row + 1) * d];
            acc.iter_mut().for_each(|a| *a = 0.0);
            comp.iter_mut().for_each(|c| *c = 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = &positions[j * d..(j + 1) * d];
                let r = math::dist(xi, xj);
                if !self.weight.in_domain(r) {
                    return Err(Error::Singularity { i: i.min(j), j: i.max(j), distance: r });
                }
                let psi = self.weight.eval_unchecked(r);
                let vj = &velocities[j * d..(j + 1) * d];
                for k in 0..d {
                    diff[k] = vj[k] - vi[k];
                }
                if self.coupling.is_radial() {
                    let scale = psi * self.coupling.power_factor(math::norm(&diff));
                    for k in 0..d {
                        gamma[k] = scale * diff[k];
                    }
                } else {
                    self.coupling.eval_into(&diff, &mut gamma);
                    gamma.iter_mut().for_each(|g| *g *= psi);
                }
                match self.summation {
                    Summation::Sequential => {
                        for k in 0..d {
                            acc[k] += gamma[k];
                        }
                    }
                    Summation::Compensated => {
                        for k in 0..d {
                            let y = gamma[k] - comp[k];
                            let t = acc[k] + y;
                            comp[k] = (t - acc[k]) - y;
                            acc[k] = t;
                        }
                    }
                }
            }
            acc.iter_mut().for_each(|a| *a *= inv_n);
        }
        Ok(())
    }
}

impl AccelerationField for Dynamics {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    fn accelerations(&self, positions: &[f64], velocities: &[f64], out: &mut [f64]) -> Result<()> {
        self.accelerations_rows(positions, velocities, 0..self.n_agents, out)
    }
}

/// Evaluates (ẋ, v̇) at `state`.
pub fn rhs(state: &ParticleState, params: &ModelParams) -> Result<Derivative> {
    state.check_shape(params)?;
    let dynamics = Dynamics::new(params)?;
    let mut d_velocities = vec![0.0; state.velocities.len()];
    dynamics.accelerations(&state.positions, &state.velocities, &mut d_velocities)?;
    Ok(Derivative { d_positions: state.velocities.clone(), d_velocities })
}

/// Minimum pairwise distance and the lexicographically first pair attaining
/// it.
pub fn min_pair_distance(state: &ParticleState) -> (f64, (usize, usize)) {
    min_pair_in(&state.positions, state.n_agents, state.dim)
}

pub(crate) fn min_pair_in(positions: &[f64], n: usize, d: usize) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 1));
    for i in 0..n {
        for j in i + 1..n {
            let r = math::dist(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]);
            if r < best.0 {
                best = (r, (i, j));
            }
        }
    }
    best
}

/// Largest pairwise distance.
pub fn max_pair_distance(state: &ParticleState) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..state.n_agents {
        for j in i + 1..state.n_agents {
            best = best.max(math::dist(state.position(i), state.position(j)));
        }
    }
    best
}
