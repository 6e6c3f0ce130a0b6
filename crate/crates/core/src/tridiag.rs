//! Truncations `J^(L)` and their full eigensystems.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::JacobiSample;

/// Implicit QL iterations allowed per eigenvalue.
pub const MAX_QL_ITERATIONS: usize = 50;
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TridiagError {
    #[error("QL iteration did not converge for eigenvalue {index} after {MAX_QL_ITERATIONS} iterations; matrix: {matrix}")]
    NoConvergence { index: usize, matrix: String },
    #[error("eigensystem invariant violated: {0}")]
    InvariantViolation(String),
    #[error("site {site} outside window [-{l}, {l}]")]
    SiteOutOfWindow { site: i64, l: usize },
    #[error("malformed truncation: {0}")]
    Malformed(String),
}

/// Symmetric tridiagonal matrix on sites `-L..=L`; row `k` is site `k - L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub l: usize,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl Truncation {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self, TridiagError> {
        if diag.len() % 2 != 1 || offdiag.len() + 1 != diag.len() {
            return Err(TridiagError::Malformed(format!(
                "diag length {} / offdiag length {}",
                diag.len(),
                offdiag.len()
            )));
        }
        if offdiag.iter().any(|a| !(*a > 0.0)) {
            return Err(TridiagError::Malformed("off-diagonal entries must be positive".into()));
        }
        Ok(Self { l: diag.len() / 2, diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn index(&self, site: i64) -> Result<usize, TridiagError> {
        let l = self.l as i64;
        if site < -l || site > l {
            return Err(TridiagError::SiteOutOfWindow { site, l: self.l });
        }
        Ok((site + l) as usize)
    }

    /// Dense row-major copy.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.offdiag[i];
                m[i + 1][i] = self.offdiag[i];
            }
        }
        m
    }

    /// `‖J‖_∞` (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.offdiag[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.offdiag[i] } else { 0.0 };
                self.diag[i].abs() + left.abs() + right.abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.offdiag[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    fn serialize(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        format!("diag=[{}] offdiag=[{}]", fmt(&self.diag), fmt(&self.offdiag))
    }
}

pub fn build_truncation(sample: &JacobiSample) -> Truncation {
    Truncation { l: sample.l, diag: sample.b.clone(), offdiag: sample.a.clone() }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors stored
/// column-major: component `i` of vector `k` is `vectors[k * dim + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub l: usize,
    pub values: Vec<f64>,
    vectors: Vec<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    pub fn index(&self, site: i64) -> Result<usize, TridiagError> {
        let l = self.l as i64;
        if site < -l || site > l {
            return Err(TridiagError::SiteOutOfWindow { site, l: self.l });
        }
        Ok((site + l) as usize)
    }

    /// `φ_k(site)`.
    pub fn component(&self, k: usize, site: i64) -> Result<f64, TridiagError> {
        Ok(self.vector(k)[self.index(site)?])
    }

    /// `(φ_k(site))_k`.
    pub fn site_row(&self, site: i64) -> Result<Vec<f64>, TridiagError> {
        let i = self.index(site)?;
        Ok((0..self.dim()).map(|k| self.vector(k)[i]).collect())
    }
}

pub fn eigen_decompose(t: &Truncation) -> Result<EigenSystem, TridiagError> {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e: Vec<f64> = t.offdiag.iter().cloned().chain(std::iter::once(0.0)).collect();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tql(&mut d, &mut e, &mut z, n).map_err(|index| TridiagError::NoConvergence {
        index,
        matrix: t.serialize(),
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        let col = &z[k * n..(k + 1) * n];
        let sign = match col.iter().find(|v| v.abs() > f64::EPSILON) {
            Some(v) if *v < 0.0 => -1.0,
            _ => 1.0,
        };
        vectors.extend(col.iter().map(|v| sign * v));
    }
    let es = EigenSystem { l: t.l, values, vectors };
    check_eigensystem(t, &es)?;
    Ok(es)
}

/// Eigenpairs of any symmetric tridiagonal matrix, unsorted and unchecked.
/// Vector `k` occupies `vectors[k n..(k + 1) n]`. On failure returns the
/// index of the eigenvalue that did not converge.
pub fn tridiagonal_eigenpairs(diag: &[f64], offdiag: &[f64]) -> Result<(Vec<f64>, Vec<f64>), usize> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e: Vec<f64> = offdiag.iter().cloned().chain(std::iter::once(0.0)).take(n).collect();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tql(&mut d, &mut e, &mut z, n)?;
    Ok((d, z))
}

/// Implicit-shift QL on `(d, e)`, rotating the columns of `z`.
/// Returns the index of the eigenvalue that failed to converge.
fn tql(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<(), usize> {
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(l);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = z.split_at_mut((i + 1) * n);
                let zi = &mut lo[i * n..];
                let zi1 = &mut hi[..n];
                for k in 0..n {
                    let f = zi1[k];
                    zi1[k] = s * zi[k] + c * f;
                    zi[k] = c * zi[k] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn check_eigensystem(t: &Truncation, es: &EigenSystem) -> Result<(), TridiagError> {
    let n = es.dim();
    for w in es.values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(TridiagError::InvariantViolation(format!(
                "eigenvalues not strictly ascending: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let dot: f64 = es.vector(i).iter().zip(es.vector(j)).map(|(x, y)| x * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    if worst > ORTHONORMALITY_TOL {
        return Err(TridiagError::InvariantViolation(format!(
            "max |VᵀV - I| = {worst:e}"
        )));
    }
    let scale = t.norm_inf().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let v = es.vector(k);
        let jv = t.apply(v);
        let res = jv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - es.values[k] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > RESIDUAL_TOL * scale {
            return Err(TridiagError::InvariantViolation(format!(
                "residual {res:e} for eigenpair {k}"
            )));
        }
    }
    Ok(())
}

/// `⟨δ_m, e^{-itJ} δ_n⟩ = Σ_k e^{-itE_k} φ_k(m) φ_k(n)`.
pub fn time_amplitude(es: &EigenSystem, m: i64, n: i64, t: f64) -> Result<Complex64, TridiagError> {
    let im = es.index(m)?;
    let in_ = es.index(n)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, e) in es.values.iter().enumerate() {
        let v = es.vector(k);
        let w = v[im] * v[in_];
        let (s, c) = (-t * e).sin_cos();
        acc += Complex64::new(c * w, s * w);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn free(l: usize) -> Truncation {
        Truncation::new(vec![0.0; 2 * l + 1], vec![1.0; 2 * l]).unwrap()
    }

    #[test]
    fn placement_matches_sample() {
        let t = Truncation::new(vec![1.0, 2.0, 3.0], vec![4.0, 5.0]).unwrap();
        assert_eq!(
            t.dense(),
            vec![vec![1.0, 4.0, 0.0], vec![4.0, 2.0, 5.0], vec![0.0, 5.0, 3.0]]
        );
    }

    #[test]
    fn scalar_case() {
        let es = eigen_decompose(&Truncation::new(vec![0.7], vec![]).unwrap()).unwrap();
        assert_eq!(es.values, vec![0.7]);
        assert_eq!(es.vector(0), &[1.0]);
    }

    #[test]
    fn free_three_site_spectrum() {
        let es = eigen_decompose(&free(1)).unwrap();
        let s2 = 2f64.sqrt();
        for (got, want) in es.values.iter().zip([-s2, 0.0, s2]) {
            assert!((got - want).abs() < 1e-14);
            // characteristic polynomial λ³ - 2λ
            assert!((got.powi(3) - 2.0 * got).abs() < 1e-13);
        }
        let top = es.vector(2);
        for (got, want) in top.iter().zip([0.5, s2 / 2.0, 0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn free_chain_matches_cosine_formula() {
        let l = 10;
        let n = 2 * l + 1;
        let es = eigen_decompose(&free(l)).unwrap();
        let mut want: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in es.values.iter().zip(&want) {
            assert!((g - w).abs() < 1e-13);
        }
    }

    #[test]
    fn amplitude_small_time_expansion() {
        let t = Truncation::new(vec![0.3, -0.2, 0.9, 0.1, -0.4], vec![1.0, 0.8, 1.3, 0.6]).unwrap();
        let es = eigen_decompose(&t).unwrap();
        let dense = t.dense();
        let h = 1e-4;
        for m in -2..=2i64 {
            for n in -2..=2i64 {
                let amp = time_amplitude(&es, m, n, h).unwrap();
                let jmn = dense[(m + 2) as usize][(n + 2) as usize];
                let delta = if m == n { 1.0 } else { 0.0 };
                assert!((amp.re - delta).abs() < 1e-7);
                assert!((amp.im + h * jmn).abs() < 1e-11);
            }
        }
        assert!(time_amplitude(&es, 3, 0, 0.0).is_err());
    }

    fn arb_truncation() -> impl Strategy<Value = Truncation> {
        (0usize..12).prop_flat_map(|l| {
            (
                prop::collection::vec(-3.0f64..3.0, 2 * l + 1),
                prop::collection::vec(0.2f64..2.0, 2 * l),
            )
                .prop_map(|(d, o)| Truncation::new(d, o).unwrap())
        })
    }

    proptest! {
        #[test]
        fn decomposition_invariants(t in arb_truncation()) {
            let es = eigen_decompose(&t).unwrap();
            for k in 0..es.dim() {
                let first = es.vector(k).iter().find(|v| v.abs() > f64::EPSILON).unwrap();
                prop_assert!(*first > 0.0);
            }
            let bound = t.norm_inf();
            prop_assert!(es.values.iter().all(|e| e.abs() <= bound + 1e-12));
        }

        #[test]
        fn amplitude_unitarity_and_symmetry(t in arb_truncation(), time in -50.0f64..50.0) {
            let es = eigen_decompose(&t).unwrap();
            let l = es.l as i64;
            for n in -l..=l {
                let total: f64 = (-l..=l)
                    .map(|m| time_amplitude(&es, m, n, time).unwrap().norm_sqr())
                    .sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                let fwd = time_amplitude(&es, 0, n, time).unwrap();
                let back = time_amplitude(&es, 0, n, -time).unwrap();
                prop_assert!((fwd - back.conj()).norm() < 1e-12);
                prop_assert!(fwd.norm() <= 1.0 + 1e-12);
            }
        }
    }
}
