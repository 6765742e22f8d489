//! Weights supplied through the custom-weight interface.

use sflock_core::CustomWeight;

/// ψ(s) = s^{-α} with Ψ(s) = s^{1−α}/(1−α) (ln s for α = 1), exposed as a
/// custom weight so the Ψ-based checks exercise the user-supplied path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CustomPower {
    alpha: f64,
}

impl CustomPower {
    /// Weight with exponent `alpha`.
    pub fn new(alpha: f64) -> Self {
        Self { alpha }
    }
}

impl CustomWeight for CustomPower {
    fn eval(&self, s: f64) -> f64 {
        s.powf(-self.alpha)
    }

    fn primitive(&self, s: f64) -> Option<f64> {
        Some(if self.alpha == 1.0 { s.ln() } else { s.powf(1.0 - self.alpha) / (1.0 - self.alpha) })
    }

    fn singular_point(&self) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> &str {
        "custom-power"
    }
}

/// (β, C) for which ψ(s) = s^{-α} satisfies ψ ≤ C|Ψ|^{(1−β)2γ/(2γ−1)}
/// with equality: β = 1 − (2γ−1)α/((α−1)2γ), C = (α−1)^{α/(α−1)}.
/// `None` unless α > 1 and β lands in [0, 1).
pub fn power_growth_constants(alpha: f64, gamma: f64) -> Option<(f64, f64)> {
    if !(alpha > 1.0 && gamma > 0.5) {
        return None;
    }
    let beta = 1.0 - (2.0 * gamma - 1.0) * alpha / ((alpha - 1.0) * 2.0 * gamma);
    if !(0.0..1.0).contains(&beta) {
        return None;
    }
    Some((beta, (alpha - 1.0).powf(alpha / (alpha - 1.0))))
}
