//! `r̂(k) = ∫ e^{-2πikx} r(x) dx` on a frequency grid and the contraction
//! constants built from it.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::KernelError;
use crate::model::SingleSiteDensity;

/// Frequencies below this are excluded from the `|r̂| < 1` scan.
pub const PROFILE_K_MIN: f64 = 0.05;
/// Base step for the curvature difference quotient.
pub const CURVATURE_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FourierProfile {
    density: SingleSiteDensity,
    pub k_max: f64,
    pub dk: f64,
    pub ks: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `(|r̂|²)''(0)` by Richardson-extrapolated central differences.
    pub curvature: f64,
    /// `8π²((∫xr)² - ∫x²r)` from the moments.
    pub curvature_moments: f64,
}

impl FourierProfile {
    pub fn density(&self) -> &SingleSiteDensity {
        &self.density
    }

    /// `|r̂(k)|²` evaluated directly.
    pub fn power(&self, k: f64) -> f64 {
        let (re, im) = self.density.fourier(k);
        re * re + im * im
    }

    /// `max |r̂(k)|` over grid frequencies with `|k| ≥ k_min`.
    pub fn max_modulus_from(&self, k_min: f64) -> f64 {
        self.ks
            .iter()
            .zip(&self.values)
            .filter(|(k, _)| **k >= k_min)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// `sup_{|k| ≥ λ} |r̂(k)|²`: grid samples at or above `λ`, the exact value
    /// at `λ`, and the envelope `TV(r) / (2πk)` beyond `k_max`.
    pub fn sup_power_from(&self, lambda: f64) -> Result<f64, KernelError> {
        if !(lambda >= 0.0) || lambda > self.k_max {
            return Err(KernelError::Input(format!(
                "cutoff {lambda} outside the profile range [0, {}]",
                self.k_max
            )));
        }
        let grid = self
            .ks
            .iter()
            .zip(&self.values)
            .filter(|(k, _)| **k >= lambda)
            .map(|(_, v)| v.norm_sqr())
            .fold(0.0, f64::max);
        let tail = self.density.fourier_envelope(self.k_max).powi(2);
        Ok(grid.max(self.power(lambda)).max(tail))
    }
}

pub fn fourier_profile(
    r: &SingleSiteDensity,
    k_max: f64,
    dk: f64,
) -> Result<FourierProfile, KernelError> {
    if !(k_max > 0.0 && dk > 0.0 && dk <= k_max) {
        return Err(KernelError::Input(format!("need 0 < dk ≤ k_max, got dk={dk}, k_max={k_max}")));
    }
    let count = (k_max / dk).round() as usize;
    let ks: Vec<f64> = (0..=count).map(|i| (i as f64 * dk).min(k_max)).collect();
    let values = ks
        .iter()
        .map(|&k| {
            let (re, im) = r.fourier(k);
            Complex64::new(re, im)
        })
        .collect();
    let power = |k: f64| {
        let (re, im) = r.fourier(k);
        re * re + im * im
    };
    let second = |h: f64| 2.0 * (power(h) - power(0.0)) / (h * h);
    let curvature = (4.0 * second(CURVATURE_STEP / 2.0) - second(CURVATURE_STEP)) / 3.0;
    let mean = r.mean();
    let curvature_moments = 8.0 * PI * PI * (mean * mean - r.second_moment());
    Ok(FourierProfile {
        density: r.clone(),
        k_max,
        dk,
        ks,
        values,
        curvature,
        curvature_moments,
    })
}

/// `A = (15/16 + (1/16) sup_{|k| ≥ t C₀/‖a‖_∞} |r̂(k)|²)^{1/2}`.
pub fn compute_a(p: &FourierProfile, t: f64, c0: f64, a_sup: f64) -> Result<f64, KernelError> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(KernelError::Input(format!("t = {t} outside (0, 1]")));
    }
    if !(c0 > 0.0 && a_sup > 0.0) {
        return Err(KernelError::Input("C₀ and ‖a‖_∞ must be positive".into()));
    }
    let lambda = t * c0 / a_sup;
    if p.k_max < lambda {
        return Err(KernelError::Input(format!(
            "k_max = {} is below the cutoff {lambda}",
            p.k_max
        )));
    }
    Ok(a_from_sup(p.sup_power_from(lambda)?))
}

pub fn a_from_sup(sup_power: f64) -> f64 {
    (15.0 / 16.0 + sup_power / 16.0).sqrt()
}

/// `A(s)` with `t_s = min(d_{2s-1}, d_{2s})` for `s = 1..=s_max`, the fitted
/// `γ' = min_s (-log A(s)) s^{2ζ}`, and the product check
/// `Σ_{j ≤ s} log A(j) ≤ -γ' s^{1-2ζ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ATable {
    pub zeta: f64,
    pub rows: Vec<ARow>,
    pub gamma_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ARow {
    pub s: usize,
    pub t: f64,
    pub a: f64,
    /// `log A(s)`.
    pub log_a: f64,
    /// `-γ' s^{-2ζ}`.
    pub pointwise_bound: f64,
    /// `Σ_{j ≤ s} log A(j)`.
    pub log_product: f64,
    /// `-γ' s^{1-2ζ}`.
    pub product_bound: f64,
}

impl ATable {
    pub fn pointwise_holds(&self) -> bool {
        self.rows.iter().all(|r| r.log_a <= r.pointwise_bound)
    }

    pub fn product_holds(&self) -> bool {
        self.rows.iter().all(|r| r.log_product <= r.product_bound)
    }
}

pub fn a_table(
    p: &FourierProfile,
    d: impl Fn(i64) -> f64,
    zeta: f64,
    s_max: usize,
    c0: f64,
    a_sup: f64,
) -> Result<ATable, KernelError> {
    if s_max == 0 {
        return Err(KernelError::Input("s_max must be at least 1".into()));
    }
    let mut raw = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let si = s as i64;
        let t = d(2 * si - 1).min(d(2 * si));
        let a = compute_a(p, t, c0, a_sup)?;
        raw.push((s, t, a));
    }
    let gamma_prime = raw
        .iter()
        .map(|&(s, _, a)| -a.ln() * (s as f64).powf(2.0 * zeta))
        .fold(f64::INFINITY, f64::min);
    let mut log_product = 0.0;
    let rows = raw
        .into_iter()
        .map(|(s, t, a)| {
            let sf = s as f64;
            log_product += a.ln();
            ARow {
                s,
                t,
                a,
                log_a: a.ln(),
                pointwise_bound: -gamma_prime * sf.powf(-2.0 * zeta),
                log_product,
                product_bound: -gamma_prime * sf.powf(1.0 - 2.0 * zeta),
            }
        })
        .collect();
    Ok(ATable { zeta, rows, gamma_prime })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centered_uniform() -> SingleSiteDensity {
        SingleSiteDensity::uniform(-0.5, 0.5).unwrap()
    }

    #[test]
    fn sinc_profile() {
        let p = fourier_profile(&centered_uniform(), 20.0, 0.01).unwrap();
        assert!((p.values[0].re - 1.0).abs() < 1e-12 && p.values[0].im.abs() < 1e-12);
        assert!(p.values[100].norm() < 1e-13);
        for (k, v) in p.ks.iter().zip(&p.values).skip(1) {
            let sinc = (PI * k).sin() / (PI * k);
            assert!((v.re - sinc).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_of_centered_uniform() {
        let p = fourier_profile(&centered_uniform(), 5.0, 0.05).unwrap();
        let want = -2.0 * PI * PI / 3.0;
        assert!((p.curvature - want).abs() < 1e-6, "{}", p.curvature);
        assert!((p.curvature_moments - want).abs() < 1e-10);
    }

    #[test]
    fn a_arithmetic() {
        assert_eq!(a_from_sup(1.0), 1.0);
        assert!((a_from_sup(0.0) - 0.9682458365518543).abs() < 1e-15);
        let p = fourier_profile(&centered_uniform(), 50.0, 0.001).unwrap();
        let a = compute_a(&p, 1.0, 1.0, 1.0).unwrap();
        let bound = (15.0 / 16.0 + 1.0 / (16.0 * PI * PI)).sqrt();
        assert!(a <= bound && a < 1.0);
        assert!(compute_a(&p, 1.0, 100.0, 1.0).is_err());
        assert!(compute_a(&p, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn a_table_product_bound() {
        let p = fourier_profile(&centered_uniform(), 10.0, 0.01).unwrap();
        let d = |n: i64| {
            if n == 0 {
                1.0
            } else {
                (n.abs() as f64).powf(-0.25).min(1.0)
            }
        };
        let table = a_table(&p, d, 0.25, 20, 0.5, 1.0).unwrap();
        assert!(table.gamma_prime > 0.0);
        assert!(table.pointwise_holds() && table.product_holds());
        for w in table.rows.windows(2) {
            assert!(w[1].a >= w[0].a);
        }
    }
}
