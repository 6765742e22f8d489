//! Initial-condition generators.

use crate::config::InitSection;
use sflock_core::dynamics::min_pair_distance;
use sflock_core::sampling::Sampler;
use sflock_core::{Error, ModelParams, ParticleState};

const MAX_ATTEMPTS: usize = 100_000;

/// Builds the initial state. Random generators draw from
/// [`Sampler::new(seed)`](Sampler): positions first, then velocities.
/// Every pair distance must exceed the weight's collision floor.
pub fn build(init: &InitSection, params: &ModelParams, seed: u64) -> Result<ParticleState, Error> {
    let (n, d) = (params.n_agents, params.dim);
    let mut rng = Sampler::new(seed);
    let state = match init {
        InitSection::ExplicitList { positions, velocities } => {
            let x = positions.iter().flatten().copied().collect();
            let v = velocities.iter().flatten().copied().collect();
            ParticleState::new(0.0, n, d, x, v)?
        }
        InitSection::HeadOnPair { gap, speed } => {
            let mut x = vec![0.0; 2 * d];
            let mut v = vec![0.0; 2 * d];
            x[0] = -0.5 * gap;
            x[d] = 0.5 * gap;
            v[0] = *speed;
            v[d] = -speed;
            ParticleState::new(0.0, 2, d, x, v)?
        }
        InitSection::UniformBox { extent, velocity_scale, min_gap } => {
            let floor = params.weight_fn().collision_floor();
            let gap = min_gap.unwrap_or(floor + extent / (10.0 * n as f64));
            let x = scatter(&mut rng, n, d, *extent, gap)?;
            let v = zero_mean_velocities(&mut rng, n, d, *velocity_scale);
            ParticleState::new(0.0, n, d, x, v)?
        }
        InitSection::LatticePerturbed { spacing, jitter, velocity_scale } => {
            let side = (1..).find(|s: &usize| s.pow(d as u32) >= n).unwrap();
            let mut x = Vec::with_capacity(n * d);
            for i in 0..n {
                let mut idx = i;
                for _ in 0..d {
                    x.push((idx % side) as f64 * spacing + rng.uniform_in(-jitter, *jitter));
                    idx /= side;
                }
            }
            let v = zero_mean_velocities(&mut rng, n, d, *velocity_scale);
            ParticleState::new(0.0, n, d, x, v)?
        }
    };
    let (dist, (i, j)) = min_pair_distance(&state);
    if n >= 2 && !params.weight_fn().in_domain(dist) {
        return Err(Error::Singularity { i, j, distance: dist });
    }
    Ok(state)
}

fn scatter(rng: &mut Sampler, n: usize, d: usize, extent: f64, gap: f64) -> Result<Vec<f64>, Error> {
    let mut x: Vec<f64> = Vec::with_capacity(n * d);
    let mut attempts = 0;
    while x.len() < n * d {
        let cand: Vec<f64> = (0..d).map(|_| rng.uniform_in(0.0, extent)).collect();
        let ok = x.chunks(d).all(|p| {
            let r2: f64 = p.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            r2.sqrt() > gap
        });
        if ok {
            x.extend(cand);
        }
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Parameter { field: "init.min_gap", reason: "cannot place agents that far apart in the box" });
        }
    }
    Ok(x)
}

fn zero_mean_velocities(rng: &mut Sampler, n: usize, d: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n * d).map(|_| rng.uniform_in(-scale, scale)).collect();
    for k in 0..d {
        let mean = (0..n).map(|i| v[i * d + k]).sum::<f64>() / n as f64;
        for i in 0..n {
            v[i * d + k] -= mean;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_on_layout() {
        let p = ModelParams::new(2, 2);
        let s = build(&InitSection::HeadOnPair { gap: 1.0, speed: 0.25 }, &p, 0).unwrap();
        assert_eq!(s.positions, vec![-0.5, 0.0, 0.5, 0.0]);
        assert_eq!(s.velocities, vec![0.25, 0.0, -0.25, 0.0]);
    }

    #[test]
    fn uniform_box_is_seeded_and_separated() {
        let p = ModelParams::new(8, 2);
        let init = InitSection::UniformBox { extent: 4.0, velocity_scale: 1.0, min_gap: None };
        let a = build(&init, &p, 7).unwrap();
        assert_eq!(a, build(&init, &p, 7).unwrap());
        assert_ne!(a, build(&init, &p, 8).unwrap());
        assert!(min_pair_distance(&a).0 > 4.0 / 80.0);
        let mean: f64 = (0..8).map(|i| a.velocities[i * 2]).sum();
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn lattice_fills_grid() {
        let p = ModelParams::new(6, 2);
        let init = InitSection::LatticePerturbed { spacing: 1.0, jitter: 0.1, velocity_scale: 0.5 };
        let s = build(&init, &p, 3).unwrap();
        assert!(min_pair_distance(&s).0 > 0.8);
    }

    #[test]
    fn coincident_explicit_agents_rejected() {
        let p = ModelParams::new(2, 1);
        let init = InitSection::ExplicitList { positions: vec![vec![1.0], vec![1.0]], velocities: vec![vec![0.0], vec![0.0]] };
        assert!(matches!(build(&init, &p, 0), Err(Error::Singularity { i: 0, j: 1, .. })));
    }
}
