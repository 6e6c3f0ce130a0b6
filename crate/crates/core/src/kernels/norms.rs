//! Operator norm estimates and certificates.
//!
//! `L²` norms are computed in the coordinates `u_i = √h_i f_i`, where the
//! grid inner product is Euclidean. The largest singular value comes from
//! Lanczos on `AᵀA` with full reorthogonalization; the Ritz value is a lower
//! bound for the discrete norm, which in turn is a lower bound for the norm
//! of the continuous operator since the Galerkin matrix is a compression.

use std::sync::Arc;

use serde::Serialize;

use super::grid::Grid;
use super::fourier::{compute_a, FourierProfile};
use super::operators::{s_matrix, t_matrix, BandMatrix, KernelParams};
use super::KernelError;
use crate::model::{ModelConfig, SiteDensity};
use crate::parallel::map_indexed;
use crate::tridiag::tridiagonal_eigenpairs;

pub const NORM_RELATIVE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, v: &[f64]) -> Vec<f64>;
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
}

/// A band matrix seen as an operator on `L²` of its grid.
pub struct L2View<'a> {
    matrix: &'a BandMatrix,
    sqrt_h: Vec<f64>,
}

impl<'a> L2View<'a> {
    pub fn new(matrix: &'a BandMatrix) -> Self {
        let g: &Grid = matrix.grid();
        let sqrt_h = (0..g.len()).map(|i| g.width(i).sqrt()).collect();
        Self { matrix, sqrt_h }
    }
}

impl LinearOperator for L2View<'_> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = u.iter().zip(&self.sqrt_h).map(|(u, s)| u / s).collect();
        let mut g = self.matrix.apply_values(&f);
        g.iter_mut().zip(&self.sqrt_h).for_each(|(g, s)| *g *= s);
        g
    }
    fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = v.iter().zip(&self.sqrt_h).map(|(v, s)| v * s).collect();
        let mut f = self.matrix.apply_transpose_values(&w);
        f.iter_mut().zip(&self.sqrt_h).for_each(|(f, s)| *f /= s);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative residual `‖AᵀAv - θv‖ / θ` of the top Ritz pair.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest singular value of `op`, started from a fixed smooth positive vector.
pub fn largest_singular_value(op: &dyn LinearOperator, tol: f64, max_iter: usize) -> NormEstimate {
    let n = op.dim();
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).sin()).collect();
    let norm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= norm);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alphas, mut betas): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut best = NormEstimate { value: 0.0, iterations: 0, residual: f64::INFINITY, converged: false };
    let limit = max_iter.min(n);
    for k in 0..limit {
        let mut w = op.apply_adjoint(&op.apply(&q));
        let alpha = dot(&w, &q);
        basis.push(q);
        alphas.push(alpha);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = dot(&w, &w).sqrt();
        let m = alphas.len();
        let (vals, vecs) = match tridiagonal_eigenpairs(&alphas, &betas) {
            Ok(pair) => pair,
            Err(_) => break,
        };
        let top = (0..m).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let theta = vals[top].max(0.0);
        let last = vecs[top * m + m - 1];
        let residual = if theta > 0.0 { beta * last.abs() / theta } else { 0.0 };
        best = NormEstimate { value: theta.sqrt(), iterations: k + 1, residual, converged: residual <= tol };
        if best.converged || beta <= f64::EPSILON * theta.max(f64::MIN_POSITIVE) {
            best.converged = true;
            break;
        }
        betas.push(beta);
        q = w.into_iter().map(|x| x / beta).collect();
    }
    best
}

/// Operator composed right to left: `ops[0] ops[1] ⋯`.
pub struct Product<'a>(pub Vec<&'a dyn LinearOperator>);

impl LinearOperator for Product<'_> {
    fn dim(&self) -> usize {
        self.0[0].dim()
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.0.iter().rev().fold(u.to_vec(), |v, op| op.apply(&v))
    }
    fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().fold(v.to_vec(), |u, op| op.apply_adjoint(&u))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormCertificate {
    pub operator: String,
    pub site: i64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub norm: String,
    pub estimate: f64,
    pub iterations: usize,
    pub residual: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub x: f64,
    pub h: f64,
    pub refined_estimate: Option<f64>,
    pub stability_gap: Option<f64>,
    pub inconclusive: bool,
}

impl NormCertificate {
    pub fn within_bound(&self) -> bool {
        self.estimate <= self.bound + self.tolerance
            && self.refined_estimate.is_none_or(|r| r <= self.bound + self.tolerance)
    }

    pub fn stable(&self, tol: f64) -> bool {
        self.stability_gap.is_none_or(|g| g <= tol)
    }

    pub fn passes(&self, tol: f64) -> bool {
        !self.inconclusive && self.within_bound() && self.stable(tol)
    }
}

pub const CERTIFICATE_TOLERANCE: f64 = 1e-3;

/// What a certificate measures on one grid.
pub enum NormKind {
    TwoTwo,
    OneOne,
    OneTwo,
}

impl NormKind {
    fn label(&self) -> &'static str {
        match self {
            NormKind::TwoTwo => "2,2",
            NormKind::OneOne => "1,1",
            NormKind::OneTwo => "1,2",
        }
    }
}

/// Norm of the product `ms[0] ms[1] ⋯`; the `1 → q` norms need a single factor.
fn measure(kind: &NormKind, ms: &[BandMatrix]) -> Result<NormEstimate, KernelError> {
    let exact = |value| NormEstimate { value, iterations: 0, residual: 0.0, converged: true };
    match (kind, ms) {
        (NormKind::TwoTwo, _) => {
            let views: Vec<L2View> = ms.iter().map(L2View::new).collect();
            let product = Product(views.iter().map(|v| v as &dyn LinearOperator).collect());
            Ok(largest_singular_value(&product, NORM_RELATIVE_TOLERANCE, MAX_ITERATIONS))
        }
        (NormKind::OneOne, [m]) => Ok(exact(m.norm_1_1())),
        (NormKind::OneTwo, [m]) => Ok(exact(m.norm_1_2())),
        _ => Err(KernelError::Input("1 → q norms are taken of a single operator".into())),
    }
}

/// Builds the operator on `grid` (and on its refinement when `refine`) and
/// records the estimate against `bound`.
pub fn certify(
    operator: &str,
    kind: NormKind,
    bound: f64,
    grid: &Arc<Grid>,
    refine: bool,
    build: impl Fn(&Arc<Grid>) -> Result<Vec<BandMatrix>, KernelError>,
) -> Result<NormCertificate, KernelError> {
    let coarse = measure(&kind, &build(grid)?)?;
    let mut inconclusive = !coarse.converged;
    let (refined_estimate, stability_gap) = if refine {
        let fine = measure(&kind, &build(&grid.refined()?)?)?;
        inconclusive |= !fine.converged;
        (Some(fine.value), Some((fine.value - coarse.value).abs()))
    } else {
        (None, None)
    };
    Ok(NormCertificate {
        operator: operator.to_string(),
        site: 0,
        alpha: 0.0,
        beta: None,
        norm: kind.label().to_string(),
        estimate: coarse.value,
        iterations: coarse.iterations,
        residual: coarse.residual,
        bound,
        tolerance: CERTIFICATE_TOLERANCE,
        x: grid.x,
        h: grid.h,
        refined_estimate,
        stability_gap,
        inconclusive,
    })
}

/// `2 → 2` certificate for a generic operator (no refinement pass).
pub fn opnorm22(operator: &str, op: &dyn LinearOperator, bound: f64, grid: &Grid) -> NormCertificate {
    let est = largest_singular_value(op, NORM_RELATIVE_TOLERANCE, MAX_ITERATIONS);
    NormCertificate {
        operator: operator.to_string(),
        site: 0,
        alpha: 0.0,
        beta: None,
        norm: "2,2".into(),
        estimate: est.value,
        iterations: est.iterations,
        residual: est.residual,
        bound,
        tolerance: CERTIFICATE_TOLERANCE,
        x: grid.x,
        h: grid.h,
        refined_estimate: None,
        stability_gap: None,
        inconclusive: !est.converged,
    }
}

/// Sweep of shifted energies and sites for the contraction bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub sites: Vec<i64>,
}

impl Sweep {
    /// `count` equally spaced points of `Σ₀` for `α` and `β`, ends included.
    pub fn across_window(model: &ModelConfig, count: usize, sites: Vec<i64>) -> Self {
        let w = model.spectral_window();
        let pts: Vec<f64> = (0..count)
            .map(|i| if count == 1 { 0.0 } else { w.lo + w.width() * i as f64 / (count - 1) as f64 })
            .collect();
        Self { alphas: pts.clone(), betas: pts, sites }
    }
}

/// Constants entering the certificate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c0: f64,
    pub a_sup: f64,
    pub density_sup: f64,
}

/// `‖S‖₁,₁ ≤ 1`, `‖S‖₁,₂ ≤ √(d_n⁻¹ c_x ‖r‖_∞)` and `‖T‖₂,₂ ≤ 1` for every
/// `(α, n)`, then `‖T^{(n)}_α T^{(n+1)}_β‖₂,₂ ≤ A(n, n+1)` for every `(α, β, n)`.
/// Certificates come back in sweep order.
#[allow(clippy::too_many_arguments)]
pub fn verify_a_bound(
    model: &ModelConfig,
    density: &dyn SiteDensity,
    profile: &FourierProfile,
    consts: BoundConstants,
    sweep: &Sweep,
    grid: &Arc<Grid>,
    refine: bool,
    workers: Option<usize>,
) -> Result<Vec<NormCertificate>, KernelError> {
    if sweep.sites.iter().any(|&n| n <= 0) {
        return Err(KernelError::Input("sweep sites must be positive".into()));
    }
    enum Job {
        Single(i64, f64),
        Pair(i64, f64, f64),
    }
    let mut jobs = Vec::new();
    for &n in &sweep.sites {
        jobs.extend(sweep.alphas.iter().map(|&a| Job::Single(n, a)));
    }
    for &n in &sweep.sites {
        for &a in &sweep.alphas {
            jobs.extend(sweep.betas.iter().map(|&b| Job::Pair(n, a, b)));
        }
    }
    let results = map_indexed(jobs.len(), workers, |k| -> Result<Vec<NormCertificate>, KernelError> {
        match jobs[k] {
            Job::Single(n, alpha) => {
                let p = KernelParams::at_alpha(model, n, alpha);
                let (cx, _) = p.s_coefficients();
                let s12 = (cx * consts.density_sup / p.d_n()).sqrt();
                let tag = |mut c: NormCertificate| {
                    c.site = n;
                    c.alpha = alpha;
                    c
                };
                let s_build = |g: &Arc<Grid>| Ok(vec![s_matrix(&p, density, g)]);
                let t_build = |g: &Arc<Grid>| Ok(vec![t_matrix(&p, density, g)?]);
                Ok(vec![
                    tag(certify("S", NormKind::OneOne, 1.0, grid, refine, s_build)?),
                    tag(certify("S", NormKind::OneTwo, s12, grid, refine, s_build)?),
                    tag(certify("T", NormKind::TwoTwo, 1.0, grid, refine, t_build)?),
                ])
            }
            Job::Pair(n, alpha, beta) => {
                let t = model.d.value(n).min(model.d.value(n + 1));
                let bound = compute_a(profile, t, consts.c0, consts.a_sup)?;
                let p = KernelParams::at_alpha(model, n, alpha);
                let q = KernelParams::at_alpha(model, n + 1, beta);
                let build = |g: &Arc<Grid>| Ok(vec![t_matrix(&p, density, g)?, t_matrix(&q, density, g)?]);
                let mut c = certify("TT", NormKind::TwoTwo, bound, grid, refine, build)?;
                c.site = n;
                c.alpha = alpha;
                c.beta = Some(beta);
                Ok(vec![c])
            }
        }
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// `max A(n, n+1)` over the pair certificates, the contraction constant `q`.
pub fn contraction_constant(certs: &[NormCertificate]) -> Option<f64> {
    certs.iter().filter(|c| c.operator == "TT").map(|c| c.bound).reduce(f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsEvidence {
    pub value: f64,
    pub refined: f64,
    pub relative_change: f64,
    /// `‖T T‖₂,₂` on the coarse grid, dominated by the HS norm.
    pub operator_norm: f64,
    pub inconclusive: bool,
}

/// Relative change under refinement above which HS evidence is inconclusive.
pub const HS_RELATIVE_TOLERANCE: f64 = 0.05;

/// Hilbert–Schmidt norm of the composed kernel of `T^{(n)}_α T^{(n+1)}_β`.
pub fn hs_norm_evidence(
    p: &KernelParams,
    q: &KernelParams,
    density: &dyn SiteDensity,
    grid: &Arc<Grid>,
) -> Result<HsEvidence, KernelError> {
    let at = |g: &Arc<Grid>| -> Result<(f64, f64), KernelError> {
        let (a, b) = (t_matrix(p, density, g)?, t_matrix(q, density, g)?);
        let hs = a.product_hilbert_schmidt(&b)?;
        let views = [L2View::new(&a), L2View::new(&b)];
        let op = largest_singular_value(
            &Product(vec![&views[0], &views[1]]),
            NORM_RELATIVE_TOLERANCE,
            MAX_ITERATIONS,
        );
        Ok((hs, op.value))
    };
    let (value, operator_norm) = at(grid)?;
    let (refined, _) = at(&grid.refined()?)?;
    let relative_change = if value == 0.0 && refined == 0.0 {
        0.0
    } else {
        (refined - value).abs() / value.abs().max(refined.abs())
    };
    Ok(HsEvidence {
        value,
        refined,
        relative_change,
        operator_norm,
        inconclusive: relative_change > HS_RELATIVE_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fourier::fourier_profile;
    use crate::kernels::operators::u_matrix;
    use crate::model::SingleSiteDensity;

    fn centered() -> SingleSiteDensity {
        SingleSiteDensity::uniform(-0.5, 0.5).unwrap()
    }

    struct Mask(Vec<f64>);

    impl LinearOperator for Mask {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, u: &[f64]) -> Vec<f64> {
            u.iter().zip(&self.0).map(|(a, b)| a * b).collect()
        }
        fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
            self.apply(v)
        }
    }

    struct Dense(Vec<Vec<f64>>);

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, u: &[f64]) -> Vec<f64> {
            self.0.iter().map(|row| dot(row, u)).collect()
        }
        fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
            (0..v.len()).map(|j| self.0.iter().zip(v).map(|(row, x)| row[j] * x).sum()).collect()
        }
    }

    /// A zero density, for vacuous integrands.
    pub(crate) struct Nothing;

    impl SiteDensity for Nothing {
        fn pdf(&self, _: f64) -> f64 {
            0.0
        }
        fn cdf(&self, _: f64) -> f64 {
            0.0
        }
        fn support(&self) -> (f64, f64) {
            (-0.5, 0.5)
        }
        fn breakpoints(&self) -> Vec<f64> {
            vec![-0.5, 0.5]
        }
    }

    #[test]
    fn identity_has_norm_one() {
        let e = largest_singular_value(&Identity(50), 1e-8, 100);
        assert!(e.converged && (e.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lanczos_matches_long_power_iteration() {
        // 8x8 matrix with entries from a fixed LCG
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = Dense((0..8).map(|_| (0..8).map(|_| next()).collect()).collect());
        let mut v = vec![1.0; 8];
        let mut sigma = 0.0;
        for _ in 0..20_000 {
            let w = a.apply_adjoint(&a.apply(&v));
            let norm = dot(&w, &w).sqrt();
            sigma = norm.sqrt();
            v = w.iter().map(|x| x / norm).collect();
        }
        let e = largest_singular_value(&a, 1e-10, 100);
        assert!(e.converged && (e.value - sigma).abs() < 1e-9 * sigma, "{} vs {sigma}", e.value);
    }

    #[test]
    fn inversion_restricted_to_an_annulus_is_nearly_unitary() {
        let g = Grid::uniform(4.0, 0.01).unwrap();
        let u = u_matrix(&g);
        let mask = Mask((0..g.len()).map(|i| {
            let (a, b) = g.cell(i);
            if a >= 0.5 && b <= 2.0 { 1.0 } else { 0.0 }
        }).collect());
        let view = L2View::new(&u);
        let e = largest_singular_value(&Product(vec![&view, &mask]), 1e-8, 10_000);
        assert!(e.value <= 1.0 + 1e-12 && e.value > 1.0 - 5.0 * g.h, "{}", e.value);
    }

    #[test]
    fn pair_norms_sit_below_a() {
        let model = ModelConfig::anderson(centered(), 4, 0, 1).unwrap();
        let profile = fourier_profile(&centered(), 50.0, 0.01).unwrap();
        let consts = BoundConstants { c0: 0.002, a_sup: 1.0, density_sup: 1.0 };
        let sweep = Sweep { alphas: vec![-2.5, 0.5], betas: vec![0.0], sites: vec![1] };
        let grid = Grid::graded(10.0, 0.05, 1e4, 1.1).unwrap();
        let certs = verify_a_bound(&model, &centered(), &profile, consts, &sweep, &grid, false, None).unwrap();
        assert_eq!(certs.len(), 2 * 3 + 2);
        assert!(certs.iter().all(|c| c.passes(CERTIFICATE_TOLERANCE)), "{certs:#?}");
        let q = contraction_constant(&certs).unwrap();
        assert!(q < 1.0 && q > 0.9999);
        assert_eq!(certs[0].operator, "S");
        assert_eq!(certs[7].beta, Some(0.0));
    }

    #[test]
    fn hilbert_schmidt_dominates_and_vanishes_with_the_density() {
        let model = ModelConfig::anderson(centered(), 4, 0, 1).unwrap();
        let grid = Grid::graded(10.0, 0.05, 1e4, 1.1).unwrap();
        let p = KernelParams::at_alpha(&model, 1, 0.0);
        let q = KernelParams::at_alpha(&model, 2, 0.0);
        let ev = hs_norm_evidence(&p, &q, &centered(), &grid).unwrap();
        assert!(ev.value.is_finite() && ev.value >= ev.operator_norm);
        assert!(!ev.inconclusive, "{ev:?}");
        let a = t_matrix(&p, &centered(), &grid).unwrap();
        let b = t_matrix(&q, &centered(), &grid).unwrap();
        let stored = a.compose(&b).unwrap().hilbert_schmidt();
        assert!((stored - ev.value).abs() < 1e-12 * stored);
        let zero = hs_norm_evidence(&p, &q, &Nothing, &grid).unwrap();
        assert_eq!((zero.value, zero.refined, zero.operator_norm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hilbert_schmidt_regression_at_zero_energy() {
        let model = ModelConfig::anderson(centered(), 4, 0, 1).unwrap();
        let grid = Grid::graded(20.0, 0.02, 1e5, 1.05).unwrap();
        let p = KernelParams::new(&model, 1, 0.0, 1);
        let q = KernelParams::new(&model, 2, 0.0, 2);
        let ev = hs_norm_evidence(&p, &q, &centered(), &grid).unwrap();
        assert!((ev.value - 1.879089).abs() < 1e-5, "{}", ev.value);
        assert!(ev.relative_change < 1e-3);
    }
}
