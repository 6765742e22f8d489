//! Nonlinear Cucker–Smale flocking with singular communication weights.
//!
//! The crate evaluates the alignment system
//!
//! ```text
//! x_i' = v_i,    v_i' = (1/N) Σ_{j≠i} ψ(|x_i − x_j|) Γ(v_j − v_i)
//! ```
//!
//! integrates it with an adaptive Dormand–Prince step that refuses to jump
//! over near-collisions, and computes the observables and inequality
//! monitors used to study flocking and collision avoidance: velocity
//! moments, deviations, Lyapunov functionals, collision-group fluctuations
//! and β-distance bounds.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and
//! threaded evaluation live in the `sflock` crate.
#![no_std]
#![warn(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod guards;
pub mod integrator;
pub mod math;
pub mod model;
pub mod quad;
pub mod sampling;
pub mod stats;

pub use diagnostics::{DiagnosticsConfig, DiagnosticsFrame, FlockRegime, FlockReport};
pub use dynamics::{AccelerationField, Derivative, Dynamics, Summation};
pub use error::{Error, Result};
pub use guards::{BoundReport, CollisionGroup, GroupFluctuations, InequalityId};
pub use integrator::{Event, IntegratorConfig, Sample, TerminalStatus, TrajectoryRecord};
pub use model::{
    CouplingFunction, CouplingKind, CustomCoupling, CustomWeight, ModelParams, ParticleState,
    WeightFunction, WeightKind,
};
