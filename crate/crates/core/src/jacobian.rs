//! Eigenvector-ratio coordinates `(x_{-L}, …, x_{-1}, E, x_1, …, x_L) ↦ b`
//! and the determinant of this change of variables.

use thiserror::Error;

use crate::tridiag::{EigenSystem, Truncation};

/// Components smaller than this make the ratio map undefined.
pub const DEGENERACY_THRESHOLD: f64 = 1e-13;
/// Pivots smaller than this make the numeric determinant unreliable.
pub const PIVOT_THRESHOLD: f64 = 1e-14;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JacobianError {
    #[error("eigenvector {k} has |φ({site})| = {value:e} below the degeneracy threshold")]
    Degenerate { k: usize, site: i64, value: f64 },
    #[error("LU pivot {0:e} below threshold")]
    SingularPivot(f64),
    #[error("invalid input: {0}")]
    Input(String),
}

/// `x_n = φ(n+1)/φ(n)` for `n < 0`, `x_n = φ(n-1)/φ(n)` for `n > 0`.
/// Outside `[-L, L]` the inverses `x_{±(L+1)}⁻¹` are taken to be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCoordinates {
    /// `x_{-L}, …, x_{-1}`.
    pub x_neg: Vec<f64>,
    pub e: f64,
    /// `x_1, …, x_L`.
    pub x_pos: Vec<f64>,
}

impl RatioCoordinates {
    pub fn new(x_neg: Vec<f64>, e: f64, x_pos: Vec<f64>) -> Result<Self, JacobianError> {
        if x_neg.len() != x_pos.len() {
            return Err(JacobianError::Input("x_neg and x_pos lengths differ".into()));
        }
        if x_neg.iter().chain(&x_pos).any(|x| !(x.is_finite() && *x != 0.0)) || !e.is_finite() {
            return Err(JacobianError::Input("ratios must be finite and nonzero".into()));
        }
        Ok(Self { x_neg, e, x_pos })
    }

    pub fn l(&self) -> usize {
        self.x_pos.len()
    }

    /// `x_n` for `n ∈ [-L, L] \ {0}`.
    pub fn x(&self, n: i64) -> f64 {
        let l = self.l() as i64;
        if n < 0 {
            self.x_neg[(n + l) as usize]
        } else {
            self.x_pos[(n - 1) as usize]
        }
    }

    /// `x_n⁻¹`, zero for `|n| > L`.
    fn inv(&self, n: i64) -> f64 {
        if n.unsigned_abs() as usize > self.l() {
            0.0
        } else {
            1.0 / self.x(n)
        }
    }

    /// Flattened in the order `(x_{-L}, …, x_{-1}, E, x_1, …, x_L)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x_neg.clone();
        v.push(self.e);
        v.extend(&self.x_pos);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let l = v.len() / 2;
        Self { x_neg: v[..l].to_vec(), e: v[l], x_pos: v[l + 1..].to_vec() }
    }
}

fn check_hopping(rc: &RatioCoordinates, a: &[f64]) -> Result<(), JacobianError> {
    if a.len() != 2 * rc.l() {
        return Err(JacobianError::Input(format!(
            "expected {} hopping values a_{{-L}}..a_{{L-1}}, got {}",
            2 * rc.l(),
            a.len()
        )));
    }
    Ok(())
}

pub fn eigen_to_ratios(es: &EigenSystem, k: usize) -> Result<RatioCoordinates, JacobianError> {
    let l = es.l as i64;
    let v = es.vector(k);
    let phi = |n: i64| v[(n + l) as usize];
    for n in -l..=l {
        if phi(n).abs() < DEGENERACY_THRESHOLD {
            return Err(JacobianError::Degenerate { k, site: n, value: phi(n) });
        }
    }
    let x_neg = (-l..0).map(|n| phi(n + 1) / phi(n)).collect();
    let x_pos = (1..=l).map(|n| phi(n - 1) / phi(n)).collect();
    Ok(RatioCoordinates { x_neg, e: es.values[k], x_pos })
}

/// `F_L`: the potential `b_{-L}..b_L` for which `φ` built from `rc` solves the
/// eigenvalue equation at energy `E`. `a` holds `a_{-L}..a_{L-1}`.
pub fn ratios_to_potential(rc: &RatioCoordinates, a: &[f64]) -> Result<Vec<f64>, JacobianError> {
    check_hopping(rc, a)?;
    let l = rc.l() as i64;
    let a_at = |n: i64| if n < -l || n >= l { 0.0 } else { a[(n + l) as usize] };
    Ok((-l..=l)
        .map(|n| match n.cmp(&0) {
            std::cmp::Ordering::Less => rc.e - a_at(n - 1) * rc.inv(n - 1) - a_at(n) * rc.x(n),
            std::cmp::Ordering::Equal => rc.e - a_at(-1) * rc.inv(-1) - a_at(0) * rc.inv(1),
            std::cmp::Ordering::Greater => {
                rc.e - a_at(n) * rc.inv(n + 1) - a_at(n - 1) * rc.x(n)
            }
        })
        .collect())
}

/// `(x_1^{-2}{1 + x_2^{-2}{1 + …}}, x_{-1}^{-2}{1 + x_{-2}^{-2}{1 + …}})`.
pub fn nested_partial_sums(rc: &RatioCoordinates) -> (f64, f64) {
    let l = rc.l() as i64;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for n in (1..=l).rev() {
        pos = rc.x(n).powi(-2) * (1.0 + pos);
        neg = rc.x(-n).powi(-2) * (1.0 + neg);
    }
    (pos, neg)
}

/// `det F_L = (∏ a_n)(1 + x_1^{-2}{1 + …} + x_{-1}^{-2}{1 + …})`.
pub fn det_recursive(rc: &RatioCoordinates, a: &[f64]) -> Result<f64, JacobianError> {
    check_hopping(rc, a)?;
    let (pos, neg) = nested_partial_sums(rc);
    Ok(a.iter().product::<f64>() * (1.0 + pos + neg))
}

/// Jacobian of `F_L` by central differences: entry `(i, j)` is `∂b_j/∂v_i`
/// with variables `v = (x_{-L}, …, x_{-1}, E, x_1, …, x_L)`.
pub fn jacobian_numeric(
    rc: &RatioCoordinates,
    a: &[f64],
    h: f64,
) -> Result<Vec<Vec<f64>>, JacobianError> {
    if !(h > 0.0) {
        return Err(JacobianError::Input(format!("step {h} must be positive")));
    }
    check_hopping(rc, a)?;
    let base = rc.to_vec();
    let mut rows = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += h;
        minus[i] -= h;
        let bp = ratios_to_potential(&RatioCoordinates::from_slice(&plus), a)?;
        let bm = ratios_to_potential(&RatioCoordinates::from_slice(&minus), a)?;
        rows.push(bp.iter().zip(&bm).map(|(p, m)| (p - m) / (2.0 * h)).collect());
    }
    Ok(rows)
}

pub fn det_numeric(rc: &RatioCoordinates, a: &[f64], h: f64) -> Result<f64, JacobianError> {
    lu_determinant(jacobian_numeric(rc, a, h)?)
}

/// Determinant by LU with partial pivoting.
pub fn lu_determinant(mut m: Vec<Vec<f64>>) -> Result<f64, JacobianError> {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        let p = m[piv][col];
        if p.abs() < PIVOT_THRESHOLD {
            return Err(JacobianError::SingularPivot(p));
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= p;
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                for c in col..n {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok(det)
}

/// Maximum relative errors of the eigenvector identities over all
/// non-degenerate eigenvectors of one eigensystem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EigenIdentityReport {
    /// `det F_L` vs `(∏a) φ(0)^{-2}`.
    pub det_error: f64,
    /// Nested sums vs `Σ_{n>0} φ(n)²/φ(0)²` and `Σ_{n<0} φ(n)²/φ(0)²`.
    pub partial_sum_error: f64,
    /// `|x_1^{-1}⋯x_m^{-1}|` vs `|φ(m)|/|φ(0)|`.
    pub weight_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl EigenIdentityReport {
    pub fn merge(&mut self, other: &Self) {
        self.det_error = self.det_error.max(other.det_error);
        self.partial_sum_error = self.partial_sum_error.max(other.partial_sum_error);
        self.weight_error = self.weight_error.max(other.weight_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

fn rel(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

pub fn verify_eigen_identity(es: &EigenSystem, a: &[f64]) -> Result<EigenIdentityReport, JacobianError> {
    verify_eigen_identity_with(es, a, det_recursive)
}

/// As [`verify_eigen_identity`] with the determinant formula supplied by the caller.
pub fn verify_eigen_identity_with<D>(
    es: &EigenSystem,
    a: &[f64],
    det: D,
) -> Result<EigenIdentityReport, JacobianError>
where
    D: Fn(&RatioCoordinates, &[f64]) -> Result<f64, JacobianError>,
{
    let l = es.l as i64;
    let prod_a: f64 = a.iter().product();
    let mut report = EigenIdentityReport::default();
    for k in 0..es.dim() {
        let rc = match eigen_to_ratios(es, k) {
            Ok(rc) => rc,
            Err(JacobianError::Degenerate { .. }) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let v = es.vector(k);
        let phi = |n: i64| v[(n + l) as usize];
        let phi0 = phi(0);
        report.det_error = report.det_error.max(rel(det(&rc, a)?, prod_a / (phi0 * phi0)));
        let (pos, neg) = nested_partial_sums(&rc);
        let want_pos: f64 = (1..=l).map(|n| (phi(n) / phi0).powi(2)).sum();
        let want_neg: f64 = (1..=l).map(|n| (phi(-n) / phi0).powi(2)).sum();
        report.partial_sum_error =
            report.partial_sum_error.max(rel(pos, want_pos)).max(rel(neg, want_neg));
        let mut weight = 1.0;
        for m in 1..=l {
            weight /= rc.x(m);
            report.weight_error = report.weight_error.max(rel(weight.abs(), (phi(m) / phi0).abs()));
        }
        report.checked += 1;
    }
    Ok(report)
}

/// `max_n |F_L(eigen_to_ratios(k))_n - b_n|` over non-degenerate `k`.
pub fn roundtrip_error(es: &EigenSystem, t: &Truncation) -> Result<f64, JacobianError> {
    let mut worst = 0.0f64;
    for k in 0..es.dim() {
        let rc = match eigen_to_ratios(es, k) {
            Ok(rc) => rc,
            Err(JacobianError::Degenerate { .. }) => continue,
            Err(e) => return Err(e),
        };
        let b = ratios_to_potential(&rc, &t.offdiag)?;
        for (got, want) in b.iter().zip(&t.diag) {
            worst = worst.max((got - want).abs());
        }
    }
    Ok(worst)
}
