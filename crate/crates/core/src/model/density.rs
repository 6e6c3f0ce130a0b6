//! Single-site densities: bounded, compactly supported, unit mass.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::ModelError;
use crate::quad::gl16;

/// Tolerance on the unit-mass invariant.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Density interface used by the operator kernels.
///
/// Implemented by [`SingleSiteDensity`]; tests also supply degenerate
/// doubles (for instance a zero density) through it.
pub trait SiteDensity: Send + Sync {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    /// Closed support `[lo, hi]`.
    fn support(&self) -> (f64, f64);
    /// Points where the density is non-smooth, including the support ends.
    fn breakpoints(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityShape {
    Uniform,
    Triangular { mode: f64 },
    RaisedCosineBump,
    PiecewiseConstant { breaks: Vec<f64>, heights: Vec<f64> },
}

/// A probability density `r` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteDensity {
    shape: DensityShape,
    lo: f64,
    hi: f64,
    bound: f64,
    mass: f64,
}

impl SingleSiteDensity {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ModelError> {
        check_interval(lo, hi)?;
        Self::finish(DensityShape::Uniform, lo, hi, 1.0 / (hi - lo))
    }

    pub fn triangular(lo: f64, mode: f64, hi: f64) -> Result<Self, ModelError> {
        check_interval(lo, hi)?;
        if !(lo..=hi).contains(&mode) {
            return Err(ModelError::InvalidDensity(format!(
                "triangular mode {mode} outside [{lo}, {hi}]"
            )));
        }
        Self::finish(DensityShape::Triangular { mode }, lo, hi, 2.0 / (hi - lo))
    }

    /// `(1 + cos(2π(x - c)/w)) / w` on `[c - w/2, c + w/2]`.
    pub fn raised_cosine(lo: f64, hi: f64) -> Result<Self, ModelError> {
        check_interval(lo, hi)?;
        Self::finish(DensityShape::RaisedCosineBump, lo, hi, 2.0 / (hi - lo))
    }

    /// Step density with value `heights[i]` on `[breaks[i], breaks[i + 1])`.
    pub fn piecewise_constant(breaks: Vec<f64>, heights: Vec<f64>) -> Result<Self, ModelError> {
        if breaks.len() < 2 || heights.len() + 1 != breaks.len() {
            return Err(ModelError::InvalidDensity(
                "piecewise density needs k+1 breaks for k heights".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(ModelError::InvalidDensity(
                "piecewise breaks must be finite and strictly increasing".into(),
            ));
        }
        if heights.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(ModelError::InvalidDensity(
                "piecewise heights must be finite and non-negative".into(),
            ));
        }
        let lo = breaks[0];
        let hi = *breaks.last().unwrap();
        let bound = heights.iter().cloned().fold(0.0, f64::max);
        Self::finish(DensityShape::PiecewiseConstant { breaks, heights }, lo, hi, bound)
    }

    fn finish(shape: DensityShape, lo: f64, hi: f64, bound: f64) -> Result<Self, ModelError> {
        let mut density = Self { shape, lo, hi, bound, mass: f64::NAN };
        let mass = density.integrate(|_| 1.0);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::InvalidDensity(format!(
                "density mass {mass} differs from 1 by more than {MASS_TOLERANCE}"
            )));
        }
        density.mass = mass;
        Ok(density)
    }

    pub fn shape(&self) -> &DensityShape {
        &self.shape
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Numerically integrated mass.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `‖r‖_∞`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `M = sup{|E| : E ∈ supp r}`.
    pub fn half_width(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Total variation of `r` on ℝ (jumps at the support ends included).
    pub fn total_variation(&self) -> f64 {
        let w = self.hi - self.lo;
        match &self.shape {
            DensityShape::Uniform => 2.0 / w,
            DensityShape::Triangular { .. } => 4.0 / w,
            DensityShape::RaisedCosineBump => 4.0 / w,
            DensityShape::PiecewiseConstant { heights, .. } => {
                let inner: f64 = heights.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
                heights[0] + inner + heights[heights.len() - 1]
            }
        }
    }

    /// `∫ g(x) r(x) dx` by piecewise Gauss–Legendre.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let rule = gl16();
        let bps = self.breakpoints();
        bps.windows(2)
            .map(|w| rule.integrate_composite(w[0], w[1], 8, |x| g(x) * self.pdf(x)))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|x| x * x)
    }

    /// Quantile function; `u` is clamped to `[0, 1]`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (lo, hi) = (self.lo, self.hi);
        let w = hi - lo;
        match &self.shape {
            DensityShape::Uniform => lo + u * w,
            DensityShape::Triangular { mode } => {
                let split = (mode - lo) / w;
                if u < split {
                    lo + (u * w * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * w * (hi - mode)).sqrt()
                }
            }
            DensityShape::RaisedCosineBump => {
                // cdf is smooth and strictly increasing on the support
                let (mut a, mut b) = (lo, hi);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if self.cdf(mid) < u {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
            DensityShape::PiecewiseConstant { breaks, heights } => {
                let mut acc = 0.0;
                for (i, &h) in heights.iter().enumerate() {
                    let piece = h * (breaks[i + 1] - breaks[i]);
                    if h > 0.0 && acc + piece >= u {
                        return breaks[i] + (u - acc) / h;
                    }
                    acc += piece;
                }
                // u == 1 up to rounding: last point with positive density
                let last = heights.iter().rposition(|&h| h > 0.0).unwrap_or(heights.len() - 1);
                breaks[last + 1]
            }
        }
    }

    /// Affine rescaling `x ↦ s·x` with `s > 0`, i.e. the density `s⁻¹ r(x / s)`.
    pub fn scaled(&self, s: f64) -> Result<Self, ModelError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(ModelError::InvalidDensity(format!("scale factor {s} must be positive")));
        }
        match &self.shape {
            DensityShape::Uniform => Self::uniform(s * self.lo, s * self.hi),
            DensityShape::Triangular { mode } => {
                Self::triangular(s * self.lo, s * mode, s * self.hi)
            }
            DensityShape::RaisedCosineBump => Self::raised_cosine(s * self.lo, s * self.hi),
            DensityShape::PiecewiseConstant { breaks, heights } => Self::piecewise_constant(
                breaks.iter().map(|b| s * b).collect(),
                heights.iter().map(|h| h / s).collect(),
            ),
        }
    }

    /// Rescales so that `M` equals `half_width`.
    pub fn scaled_to_half_width(&self, half_width: f64) -> Result<Self, ModelError> {
        let m = self.half_width();
        if m == 0.0 {
            return Err(ModelError::InvalidDensity("density supported at the origin only".into()));
        }
        self.scaled(half_width / m)
    }

    /// `r̂(k) = ∫ e^{-2πikx} r(x) dx` as `(re, im)`.
    pub fn fourier(&self, k: f64) -> (f64, f64) {
        let rule = gl16();
        let bps = self.breakpoints();
        let mut re = 0.0;
        let mut im = 0.0;
        for w in bps.windows(2) {
            let panels = ((k.abs() * (w[1] - w[0]) * 2.0).ceil() as usize).max(1);
            re += rule.integrate_composite(w[0], w[1], panels, |x| {
                (2.0 * PI * k * x).cos() * self.pdf(x)
            });
            im -= rule.integrate_composite(w[0], w[1], panels, |x| {
                (2.0 * PI * k * x).sin() * self.pdf(x)
            });
        }
        (re, im)
    }

    /// Analytic bound on `|r̂(k)|` for `k ≠ 0`: `TV(r) / (2π|k|)`.
    pub fn fourier_envelope(&self, k: f64) -> f64 {
        (self.total_variation() / (2.0 * PI * k.abs())).min(1.0)
    }
}

impl SiteDensity for SingleSiteDensity {
    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let (lo, hi) = (self.lo, self.hi);
        let w = hi - lo;
        match &self.shape {
            DensityShape::Uniform => 1.0 / w,
            DensityShape::Triangular { mode } => {
                let peak = 2.0 / w;
                if x < *mode {
                    peak * (x - lo) / (mode - lo)
                } else if x > *mode {
                    peak * (hi - x) / (hi - mode)
                } else {
                    peak
                }
            }
            DensityShape::RaisedCosineBump => {
                let c = 0.5 * (lo + hi);
                (1.0 + (2.0 * PI * (x - c) / w).cos()) / w
            }
            DensityShape::PiecewiseConstant { breaks, heights } => {
                let idx = breaks.partition_point(|b| *b <= x);
                if idx == 0 {
                    heights[0]
                } else {
                    heights[(idx - 1).min(heights.len() - 1)]
                }
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let (lo, hi) = (self.lo, self.hi);
        let w = hi - lo;
        match &self.shape {
            DensityShape::Uniform => (x - lo) / w,
            DensityShape::Triangular { mode } => {
                if x <= *mode {
                    (x - lo) * (x - lo) / (w * (mode - lo))
                } else {
                    1.0 - (hi - x) * (hi - x) / (w * (hi - mode))
                }
            }
            DensityShape::RaisedCosineBump => {
                let c = 0.5 * (lo + hi);
                (x - lo) / w + (2.0 * PI * (x - c) / w).sin() / (2.0 * PI)
            }
            DensityShape::PiecewiseConstant { breaks, heights } => {
                let mut acc = 0.0;
                for (i, &h) in heights.iter().enumerate() {
                    if x < breaks[i + 1] {
                        return acc + h * (x - breaks[i]);
                    }
                    acc += h * (breaks[i + 1] - breaks[i]);
                }
                acc
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            DensityShape::Triangular { mode } if *mode > self.lo && *mode < self.hi => {
                vec![self.lo, *mode, self.hi]
            }
            DensityShape::PiecewiseConstant { breaks, .. } => breaks.clone(),
            _ => vec![self.lo, self.hi],
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), ModelError> {
    if lo.is_finite() && hi.is_finite() && hi > lo {
        Ok(())
    } else {
        Err(ModelError::InvalidDensity(format!("support [{lo}, {hi}] is not a proper interval")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<SingleSiteDensity> {
        vec![
            SingleSiteDensity::uniform(-0.5, 0.5).unwrap(),
            SingleSiteDensity::uniform(0.0, 1.0).unwrap(),
            SingleSiteDensity::triangular(-1.0, 0.25, 1.0).unwrap(),
            SingleSiteDensity::raised_cosine(-0.5, 1.5).unwrap(),
            SingleSiteDensity::piecewise_constant(vec![-1.0, 0.0, 0.5, 1.0], vec![0.25, 1.0, 0.5])
                .unwrap(),
        ]
    }

    #[test]
    fn invariants_hold_across_catalog() {
        for r in catalog() {
            assert!((r.mass() - 1.0).abs() <= MASS_TOLERANCE);
            assert_eq!(r.half_width(), r.lo().abs().max(r.hi().abs()));
            for i in 0..=2000 {
                let x = r.lo() - 0.5 + (r.hi() - r.lo() + 1.0) * i as f64 / 2000.0;
                let p = r.pdf(x);
                assert!(p >= 0.0 && p <= r.bound() + 1e-12);
                if x < r.lo() || x > r.hi() {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn inverse_cdf_inverts_cdf() {
        for r in catalog() {
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let x = r.inverse_cdf(u);
                assert!((r.cdf(x) - u).abs() < 1e-12, "{:?} u={u}", r.shape());
            }
        }
    }

    #[test]
    fn rejects_bad_mass_and_support() {
        assert!(SingleSiteDensity::uniform(1.0, 1.0).is_err());
        assert!(SingleSiteDensity::piecewise_constant(vec![0.0, 1.0], vec![0.9]).is_err());
        assert!(SingleSiteDensity::triangular(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_fourier_is_sinc() {
        let r = SingleSiteDensity::uniform(-0.5, 0.5).unwrap();
        for k in [0.1, 0.5, 1.0, 2.3, 17.5] {
            let (re, im) = r.fourier(k);
            let sinc = (PI * k).sin() / (PI * k);
            assert!((re - sinc).abs() < 1e-13 && im.abs() < 1e-13);
            assert!(re.hypot(im) <= r.fourier_envelope(k) + 1e-15);
        }
    }

    #[test]
    fn scaling_preserves_mass_and_scales_half_width() {
        for r in catalog() {
            let s = r.scaled_to_half_width(0.05).unwrap();
            assert!((s.half_width() - 0.05).abs() < 1e-15);
            assert!((s.mass() - 1.0).abs() <= MASS_TOLERANCE);
        }
    }
}
