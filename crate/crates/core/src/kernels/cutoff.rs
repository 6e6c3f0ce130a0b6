//! Smooth cutoff `g₁` and the low-frequency constant `C₀`.

use std::f64::consts::PI;

use super::KernelError;
use crate::quad::gl16;

/// Even cutoff equal to 1 on `[-plateau, plateau]`, vanishing outside
/// `[-support, support]`, with a quintic smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub plateau: f64,
    pub support: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self { plateau: 1.0, support: 2.0 }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

impl Cutoff {
    pub fn new(plateau: f64, support: f64) -> Result<Self, KernelError> {
        // g₂ = 1 - g₁ must vanish near 0 for ∫ g₂²/y² to be finite
        if !(plateau > 0.0 && support > plateau && support.is_finite()) {
            return Err(KernelError::Input(format!(
                "cutoff needs 0 < plateau < support, got {plateau}, {support}"
            )));
        }
        Ok(Self { plateau, support })
    }

    pub fn g1(&self, x: f64) -> f64 {
        let a = x.abs();
        1.0 - smoothstep((a - self.plateau) / (self.support - self.plateau))
    }

    pub fn g2(&self, x: f64) -> f64 {
        1.0 - self.g1(x)
    }

    /// `I₁ = ∫ |g₁(1/p)|² / p² dp`, evaluated as `∫ g₁(u)² du`.
    pub fn i1(&self) -> f64 {
        let rule = gl16();
        let flat = self.plateau;
        let ramp = rule.integrate_composite(self.plateau, self.support, 16, |u| self.g1(u).powi(2));
        2.0 * (flat + ramp)
    }

    /// `I₂ = ∫ |g₂(y)|² / y² dy`; beyond the support `g₂ = 1` and the tail is `1/support`.
    pub fn i2(&self) -> f64 {
        let rule = gl16();
        let ramp = rule.integrate_composite(self.plateau, self.support, 16, |y| {
            (self.g2(y) / y).powi(2)
        });
        2.0 * (ramp + 1.0 / self.support)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C0Result {
    pub c0: f64,
    pub i1: f64,
    pub i2: f64,
    /// `B = √(‖a‖_∞/δ)`.
    pub b: f64,
    pub bisection_steps: usize,
}

/// Left side of the sufficient condition: `B √(2C₀) √(2π) (I₁^{1/2} + √(‖a‖_∞/δ) I₂^{1/2})`.
pub fn c0_lhs(c0: f64, i1: f64, i2: f64, a_sup: f64, delta: f64) -> f64 {
    let b = (a_sup / delta).sqrt();
    b * (2.0 * c0).sqrt() * (2.0 * PI).sqrt() * (i1.sqrt() + b * i2.sqrt())
}

pub const C0_TARGET: f64 = 7.0 / 16.0;

/// Largest `C₀` with `c0_lhs ≤ 7/16`, by bisection.
pub fn find_c0(cutoff: &Cutoff, a_sup: f64, delta: f64) -> Result<C0Result, KernelError> {
    if !(a_sup >= delta && delta > 0.0) {
        return Err(KernelError::Input(format!("need 0 < δ ≤ ‖a‖_∞, got δ={delta}, ‖a‖_∞={a_sup}")));
    }
    let i1 = cutoff.i1();
    let i2 = cutoff.i2();
    if !(i1.is_finite() && i2.is_finite()) {
        return Err(KernelError::Input("cutoff integrals are not finite".into()));
    }
    let lhs = |c: f64| c0_lhs(c, i1, i2, a_sup, delta);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while lhs(hi) <= C0_TARGET {
        lo = hi;
        hi *= 2.0;
    }
    let mut steps = 0;
    while hi - lo > 1e-15 * hi && steps < 200 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) <= C0_TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok(C0Result { c0: lo, i1, i2, b: (a_sup / delta).sqrt(), bisection_steps: steps })
}
