//! Galerkin discretizations of the kernel operators on a [`Grid`].
//!
//! Every entry is `G_ij = h_i⁻¹ ∫_{cell i} ∫_{cell j} k(x, y) dy dx`, so the
//! matrix acts on cell averages and `Σ_i h_i G_ij` is exactly the mass the
//! column sends into the grid. The inner `x` integral is done in closed form
//! through the CDF of `r_n`; what remains is a one-dimensional integral in
//! `s = c_y / y` (or `s = -c_x y` for the convolution) split at the kinks
//! of the CDF.

use std::sync::Arc;

use super::grid::{Grid, GridFunction};
use super::KernelError;
use crate::model::{ModelConfig, SequenceSpec, SiteDensity};
use crate::quad::gl6;

/// Escaped-mass fraction above which applying an operator is an error.
pub const ESCAPE_TOLERANCE: f64 = 1e-6;

/// Largest ratio `s_hi / s_lo` on one quadrature panel of the inversion kernels.
const PANEL_RATIO: f64 = 1.25;

/// Site data for `S^{(n)}_α` and `T^{(n)}_α` with `α = E - c(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub n: i64,
    pub energy: f64,
    pub alpha: f64,
    pub a: SequenceSpec,
    pub d: SequenceSpec,
}

impl KernelParams {
    /// Shifted energy `α = E - c(m)`.
    pub fn new(model: &ModelConfig, n: i64, energy: f64, m: i64) -> Self {
        Self {
            n,
            energy,
            alpha: energy - model.c.value(m),
            a: model.a.clone(),
            d: model.d.clone(),
        }
    }

    /// Parameters with `α` given directly (energy recorded as `α`).
    pub fn at_alpha(model: &ModelConfig, n: i64, alpha: f64) -> Self {
        Self { n, energy: alpha, alpha, a: model.a.clone(), d: model.d.clone() }
    }

    pub fn d_n(&self) -> f64 {
        self.d.value(self.n)
    }

    /// `(c_x, c_y)` multiplying `x` and `y⁻¹` in the argument of `r_n` for `S`.
    pub fn s_coefficients(&self) -> (f64, f64) {
        let n = self.n;
        let a = |k: i64| self.a.value(k);
        match n.signum() {
            -1 => (a(n), a(n - 1)),
            0 => (a(0), a(-1)),
            _ => (a(n - 1), a(n)),
        }
    }

    /// `(a_{n-1}, a_n)`; `T` exists only for `n > 0`.
    pub fn t_coefficients(&self) -> Result<(f64, f64), KernelError> {
        if self.n <= 0 {
            return Err(KernelError::Input(format!("T is defined for n > 0, got n = {}", self.n)));
        }
        Ok((self.a.value(self.n - 1), self.a.value(self.n)))
    }

    /// Ratio `a_n / a_{n-1}` of the reflected inversion in the factorization of `T`.
    pub fn inversion_ratio(&self) -> Result<f64, KernelError> {
        let (cx, cy) = self.t_coefficients()?;
        Ok(cy / cx)
    }
}

/// Column-sparse matrix acting on cell averages of one grid.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    grid: Arc<Grid>,
    /// Per column: first row and the contiguous block of entries.
    cols: Vec<(usize, Vec<f64>)>,
    /// Per column: the mass `∫_{cell j} ∫_ℝ |k| dx dy` before truncation, if finite.
    full_mass: Vec<Option<f64>>,
}

impl BandMatrix {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn column(&self, j: usize) -> (usize, &[f64]) {
        (self.cols[j].0, &self.cols[j].1)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.1.len()).sum()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (start, ref v) = self.cols[j];
        if i >= start && i < start + v.len() {
            v[i - start]
        } else {
            0.0
        }
    }

    pub fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (j, (start, v)) in self.cols.iter().enumerate() {
            let fj = f[j];
            if fj == 0.0 {
                continue;
            }
            for (o, g) in out[*start..*start + v.len()].iter_mut().zip(v) {
                *o += g * fj;
            }
        }
        out
    }

    pub fn apply_transpose_values(&self, g: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|(start, v)| v.iter().zip(&g[*start..*start + v.len()]).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.apply_values(&f.values) }
    }

    /// `Σ_i h_i |G_ij|`, the L¹ mass column `j` keeps inside the grid.
    pub fn captured_mass(&self, j: usize) -> f64 {
        let (start, v) = self.column(j);
        v.iter().enumerate().map(|(k, g)| g.abs() * self.grid.width(start + k)).sum()
    }

    /// Exact `L¹ → L¹` norm of the discrete operator: `max_j Σ_i h_i |G_ij| / h_j`.
    pub fn norm_1_1(&self) -> f64 {
        (0..self.dim()).map(|j| self.captured_mass(j) / self.grid.width(j)).fold(0.0, f64::max)
    }

    /// Exact `L¹ → L²` norm of the discrete operator: `max_j (Σ_i h_i G_ij²)^{1/2} / h_j`.
    pub fn norm_1_2(&self) -> f64 {
        (0..self.dim())
            .map(|j| {
                let (start, v) = self.column(j);
                let sq: f64 = v.iter().enumerate().map(|(k, g)| g * g * self.grid.width(start + k)).sum();
                sq.sqrt() / self.grid.width(j)
            })
            .fold(0.0, f64::max)
    }

    /// Hilbert–Schmidt norm of the piecewise-constant kernel `G_ij / h_j`.
    pub fn hilbert_schmidt(&self) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.dim() {
            let (start, v) = self.column(j);
            let hj = self.grid.width(j);
            sum += v.iter().enumerate().map(|(k, g)| g * g * self.grid.width(start + k)).sum::<f64>() / hj;
        }
        sum.sqrt()
    }

    /// Fraction of the input's L¹ mass that leaves the grid, over columns whose
    /// untruncated mass is finite.
    pub fn escaped_fraction(&self, f: &[f64]) -> f64 {
        let (mut lost, mut total) = (0.0, 0.0);
        for (j, fj) in f.iter().enumerate() {
            if *fj == 0.0 {
                continue;
            }
            if let Some(full) = self.full_mass[j] {
                lost += fj.abs() * (full - self.captured_mass(j)).max(0.0);
                total += fj.abs() * full;
            }
        }
        if total > 0.0 {
            lost / total
        } else {
            0.0
        }
    }

    /// Product `self · other` as a band matrix on the same grid.
    pub fn compose(&self, other: &BandMatrix) -> Result<BandMatrix, KernelError> {
        if self.grid != other.grid {
            return Err(KernelError::Input("composing operators on different grids".into()));
        }
        let n = self.dim();
        let mut scratch = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for (start, v) in &other.cols {
            let (mut lo, mut hi) = (n, 0);
            for (k, b) in v.iter().enumerate() {
                if *b == 0.0 {
                    continue;
                }
                let (s2, ref w) = self.cols[start + k];
                if w.is_empty() {
                    continue;
                }
                for (r, a) in w.iter().enumerate() {
                    scratch[s2 + r] += a * b;
                }
                lo = lo.min(s2);
                hi = hi.max(s2 + w.len());
            }
            if lo >= hi {
                cols.push((0, Vec::new()));
            } else {
                cols.push((lo, scratch[lo..hi].to_vec()));
                scratch[lo..hi].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(BandMatrix { grid: self.grid.clone(), cols, full_mass: vec![None; n] })
    }

    /// Hilbert–Schmidt norm of `self · other` without storing the product.
    pub fn product_hilbert_schmidt(&self, other: &BandMatrix) -> Result<f64, KernelError> {
        if self.grid != other.grid {
            return Err(KernelError::Input("composing operators on different grids".into()));
        }
        let n = self.dim();
        let mut scratch = vec![0.0; n];
        let mut sum = 0.0;
        for (j, (start, v)) in other.cols.iter().enumerate() {
            let (mut lo, mut hi) = (n, 0);
            for (k, b) in v.iter().enumerate() {
                let (s2, ref w) = self.cols[start + k];
                if *b == 0.0 || w.is_empty() {
                    continue;
                }
                for (r, a) in w.iter().enumerate() {
                    scratch[s2 + r] += a * b;
                }
                lo = lo.min(s2);
                hi = hi.max(s2 + w.len());
            }
            if lo < hi {
                let col: f64 = (lo..hi).map(|i| scratch[i] * scratch[i] * self.grid.width(i)).sum();
                sum += col / self.grid.width(j);
                scratch[lo..hi].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(sum.sqrt())
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for (_, v) in &mut self.cols {
            v.iter_mut().for_each(|x| *x *= c);
        }
        for m in self.full_mass.iter_mut().flatten() {
            *m *= c.abs();
        }
        self
    }
}

/// Which weight multiplies `Mass_i(s)` in the remaining `s` integral.
#[derive(Debug, Clone, Copy)]
enum Weight {
    /// `c_y / s²` (kernel of `S`).
    InverseSquare(f64),
    /// `1 / |s|` (kernel of `T`).
    InverseAbs,
    /// `1` (convolution).
    Flat,
}

impl Weight {
    fn eval(self, s: f64) -> f64 {
        match self {
            Weight::InverseSquare(cy) => cy / (s * s),
            Weight::InverseAbs => 1.0 / s.abs(),
            Weight::Flat => 1.0,
        }
    }
}

/// `x ↦ r_n(α - c_x x - s)` integrated over cells, in terms of `R_n(z) = R(z / d)`.
struct CellMass<'a> {
    density: &'a dyn SiteDensity,
    d: f64,
    alpha: f64,
    cx: f64,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
}

impl<'a> CellMass<'a> {
    fn new(density: &'a dyn SiteDensity, d: f64, alpha: f64, cx: f64) -> Self {
        let (lo, hi) = density.support();
        let breaks = density.breakpoints().iter().map(|b| b * d).collect();
        Self { density, d, alpha, cx, lo: lo * d, hi: hi * d, breaks }
    }

    fn cdf(&self, z: f64) -> f64 {
        self.density.cdf(z / self.d)
    }

    fn total(&self) -> f64 {
        self.cdf(self.hi) - self.cdf(self.lo)
    }

    /// `∫_{x0}^{x1} c_x r_n(α - c_x x - s) dx`.
    fn mass(&self, x0: f64, x1: f64, s: f64) -> f64 {
        self.cdf(self.alpha - self.cx * x0 - s) - self.cdf(self.alpha - self.cx * x1 - s)
    }

    /// `s` range on which `mass(x0, x1, ·)` can be nonzero.
    fn s_support(&self, x0: f64, x1: f64) -> (f64, f64) {
        (self.alpha - self.cx * x1 - self.hi, self.alpha - self.cx * x0 - self.lo)
    }

    /// Cells whose mass can be nonzero for some `s ∈ (s0, s1)`.
    fn x_range(&self, s0: f64, s1: f64) -> (f64, f64) {
        ((self.alpha - s1 - self.hi) / self.cx, (self.alpha - s0 - self.lo) / self.cx)
    }

    fn kinks(&self, x0: f64, x1: f64, out: &mut Vec<f64>) {
        for b in &self.breaks {
            out.push(self.alpha - self.cx * x0 - b);
            out.push(self.alpha - self.cx * x1 - b);
        }
    }
}

/// Adds `coef / h_i ∫_{s0}^{s1} Mass_i(s) w(s) ds` into `acc` (indexed from `acc_start`).
fn accumulate(
    grid: &Grid,
    cm: &CellMass,
    s0: f64,
    s1: f64,
    weight: Weight,
    coef: f64,
    acc: &mut Vec<(usize, f64)>,
) {
    let (xa, xb) = cm.x_range(s0, s1);
    let mut kinks = Vec::new();
    for i in grid.cells_meeting(xa, xb) {
        let (x0, x1) = grid.cell(i);
        let (lo, hi) = cm.s_support(x0, x1);
        let (a, b) = (s0.max(lo), s1.min(hi));
        if !(b > a) {
            continue;
        }
        kinks.clear();
        kinks.push(a);
        kinks.push(b);
        cm.kinks(x0, x1, &mut kinks);
        kinks.retain(|k| *k >= a && *k <= b);
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        let mut total = 0.0;
        for w in kinks.windows(2) {
            let (p, q) = (w[0], w[1]);
            if q <= p {
                continue;
            }
            let panels = panel_count(p, q, weight);
            let step = (q - p) / panels as f64;
            for k in 0..panels {
                let (u, v) = (p + k as f64 * step, p + (k + 1) as f64 * step);
                total += gl6().integrate(u, v, |s| cm.mass(x0, x1, s) * weight.eval(s));
            }
        }
        if total != 0.0 {
            acc.push((i, coef * total / (x1 - x0)));
        }
    }
}

fn panel_count(p: f64, q: f64, weight: Weight) -> usize {
    match weight {
        Weight::Flat => 1,
        _ => {
            let ratio = q.abs().max(p.abs()) / q.abs().min(p.abs());
            (ratio.ln() / PANEL_RATIO.ln()).ceil().max(1.0) as usize
        }
    }
}

fn pack(acc: &mut Vec<(usize, f64)>) -> (usize, Vec<f64>) {
    if acc.is_empty() {
        return (0, Vec::new());
    }
    acc.sort_by_key(|e| e.0);
    let start = acc[0].0;
    let mut v = vec![0.0; acc.last().unwrap().0 - start + 1];
    for (i, g) in acc.iter() {
        v[i - start] += g;
    }
    (start, v)
}

/// Splits cell `j` at the origin into pieces of constant sign.
fn signed_pieces(grid: &Grid, j: usize) -> Vec<(f64, f64)> {
    let (y0, y1) = grid.cell(j);
    if y0 < 0.0 && y1 > 0.0 {
        vec![(y0, 0.0), (0.0, y1)]
    } else {
        vec![(y0, y1)]
    }
}

/// Image of `(y0, y1)` (constant sign, endpoints may be 0) under `y ↦ c / y`, `c > 0`.
fn inverted(c: f64, y0: f64, y1: f64) -> (f64, f64) {
    let inv = |y: f64, toward: f64| if y == 0.0 { toward } else { c / y };
    if y1 <= 0.0 {
        (inv(y1, f64::NEG_INFINITY), inv(y0, f64::NEG_INFINITY))
    } else {
        (inv(y1, f64::INFINITY), inv(y0, f64::INFINITY))
    }
}

/// `∫_{y0}^{y1} |y|⁻¹ dy` over a constant-sign interval, infinite if it touches 0.
fn log_length(y0: f64, y1: f64) -> f64 {
    let (a, b) = (y0.abs().min(y1.abs()), y0.abs().max(y1.abs()));
    if a == 0.0 {
        f64::INFINITY
    } else {
        (b / a).ln()
    }
}

fn inversion_kernel(
    grid: &Arc<Grid>,
    density: &dyn SiteDensity,
    d: f64,
    alpha: f64,
    cx: f64,
    cy: f64,
    weight: Weight,
    coef: f64,
) -> BandMatrix {
    let cm = CellMass::new(density, d, alpha, cx);
    let (s_glo, s_ghi) = cm.s_support(grid.lo(), grid.hi());
    let total = cm.total();
    let mut cols = Vec::with_capacity(grid.len());
    let mut full_mass = Vec::with_capacity(grid.len());
    let mut acc = Vec::new();
    for j in 0..grid.len() {
        acc.clear();
        let mut full = 0.0;
        for (y0, y1) in signed_pieces(grid, j) {
            let (s0, s1) = inverted(cy, y0, y1);
            full += match weight {
                Weight::InverseSquare(_) => coef * total * (y1 - y0),
                _ => coef * total * log_length(y0, y1),
            };
            let (a, b) = (s0.max(s_glo), s1.min(s_ghi));
            if b > a {
                accumulate(grid, &cm, a, b, weight, coef, &mut acc);
            }
        }
        cols.push(pack(&mut acc));
        full_mass.push(full.is_finite().then_some(full));
    }
    BandMatrix { grid: grid.clone(), cols, full_mass }
}

/// `(S^{(n)}_α f)(x) = c_x ∫ r_n(α - c_x x - c_y y⁻¹) f(y) dy` with the branch
/// coefficients of [`KernelParams::s_coefficients`].
pub fn s_matrix(p: &KernelParams, density: &dyn SiteDensity, grid: &Arc<Grid>) -> BandMatrix {
    let (cx, cy) = p.s_coefficients();
    inversion_kernel(grid, density, p.d_n(), p.alpha, cx, cy, Weight::InverseSquare(cy), 1.0)
}

/// `(T^{(n)}_α f)(x) = √(a_{n-1} a_n) ∫ r_n(α - a_{n-1} x - a_n y⁻¹) |y|⁻¹ f(y) dy`.
pub fn t_matrix(
    p: &KernelParams,
    density: &dyn SiteDensity,
    grid: &Arc<Grid>,
) -> Result<BandMatrix, KernelError> {
    let (cx, cy) = p.t_coefficients()?;
    Ok(inversion_kernel(grid, density, p.d_n(), p.alpha, cx, cy, Weight::InverseAbs, (cy / cx).sqrt()))
}

/// `(K f)(x) = ∫ r_n(α - a_{n-1} x + a_{n-1} y) f(y) dy`, so that `T = a_{n-1} K Ū`.
pub fn convolution_matrix(
    p: &KernelParams,
    density: &dyn SiteDensity,
    grid: &Arc<Grid>,
) -> Result<BandMatrix, KernelError> {
    let (cx, _) = p.t_coefficients()?;
    let cm = CellMass::new(density, p.d_n(), p.alpha, cx);
    let total = cm.total();
    let mut cols = Vec::with_capacity(grid.len());
    let mut full_mass = Vec::with_capacity(grid.len());
    let mut acc = Vec::new();
    for j in 0..grid.len() {
        acc.clear();
        let (y0, y1) = grid.cell(j);
        accumulate(grid, &cm, -cx * y1, -cx * y0, Weight::Flat, 1.0 / (cx * cx), &mut acc);
        cols.push(pack(&mut acc));
        full_mass.push(Some(total * (y1 - y0) / cx));
    }
    Ok(BandMatrix { grid: grid.clone(), cols, full_mass })
}

/// `(f ↦ √ρ |x|⁻¹ f(σρ/x))` with `σ = ±1`, integrated exactly cell by cell.
fn inversion_matrix(grid: &Arc<Grid>, rho: f64, sigma: f64) -> BandMatrix {
    let mut cols = Vec::with_capacity(grid.len());
    let mut full_mass = Vec::with_capacity(grid.len());
    let mut acc = Vec::new();
    let scale = rho.sqrt();
    for j in 0..grid.len() {
        acc.clear();
        let mut full = 0.0;
        for (y0, y1) in signed_pieces(grid, j) {
            // {x : σρ/x ∈ (y0, y1)} is σ times the image of (y0, y1) under y ↦ ρ/y
            let (u0, u1) = inverted(rho, y0, y1);
            let (p, q) = if sigma > 0.0 { (u0, u1) } else { (-u1, -u0) };
            full += scale * log_length(p, q);
            for i in grid.cells_meeting(p, q) {
                let (x0, x1) = grid.cell(i);
                let (a, b) = (p.max(x0), q.min(x1));
                if b > a {
                    acc.push((i, scale * log_length(a, b) / (x1 - x0)));
                }
            }
        }
        cols.push(pack(&mut acc));
        // |x|⁻¹ mass of the image is ∫_{cell j} |y|⁻¹ dy, finite off the origin
        full_mass.push(full.is_finite().then_some(full));
    }
    BandMatrix { grid: grid.clone(), cols, full_mass }
}

/// `(U f)(x) = |x|⁻¹ f(x⁻¹)`.
pub fn u_matrix(grid: &Arc<Grid>) -> BandMatrix {
    inversion_matrix(grid, 1.0, 1.0)
}

/// `(Ū^{(n)} f)(x) = √ρ |x|⁻¹ f(-ρ x⁻¹)` with `ρ = a_n / a_{n-1}`.
pub fn ubar_matrix(p: &KernelParams, grid: &Arc<Grid>) -> Result<BandMatrix, KernelError> {
    Ok(inversion_matrix(grid, p.inversion_ratio()?, -1.0))
}

fn checked_apply(m: &BandMatrix, f: &GridFunction) -> Result<GridFunction, KernelError> {
    if f.grid != *m.grid() {
        return Err(KernelError::Input("function and operator live on different grids".into()));
    }
    let escaped = m.escaped_fraction(&f.values);
    if escaped > ESCAPE_TOLERANCE {
        return Err(KernelError::Truncation { escaped, x: m.grid().hi() });
    }
    Ok(m.apply(f))
}

pub fn apply_u(f: &GridFunction) -> GridFunction {
    u_matrix(&f.grid).apply(f)
}

pub fn apply_s(
    p: &KernelParams,
    density: &dyn SiteDensity,
    f: &GridFunction,
) -> Result<GridFunction, KernelError> {
    checked_apply(&s_matrix(p, density, &f.grid), f)
}

pub fn apply_t(
    p: &KernelParams,
    density: &dyn SiteDensity,
    f: &GridFunction,
) -> Result<GridFunction, KernelError> {
    checked_apply(&t_matrix(p, density, &f.grid)?, f)
}

/// `a_{n-1} K Ū f`, the second route to `T f`.
pub fn apply_t_factored(
    p: &KernelParams,
    density: &dyn SiteDensity,
    f: &GridFunction,
) -> Result<GridFunction, KernelError> {
    let (cx, _) = p.t_coefficients()?;
    let reflected = ubar_matrix(p, &f.grid)?.apply(f);
    Ok(checked_apply(&convolution_matrix(p, density, &f.grid)?, &reflected)?.scale(cx))
}
