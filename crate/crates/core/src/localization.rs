//! Eigenfunction correlators, sup-in-time amplitudes, decay fits and
//! tail-mass diagnostics.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    sample_operator, ModelConfig, ModelError, SequenceSpec, SingleSiteDensity,
};
use crate::parallel::map_indexed;
use crate::tridiag::{build_truncation, eigen_decompose, EigenSystem, TridiagError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tridiag(#[from] TridiagError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Per-sample correlator `Σ_k |φ_k(m)| |φ_k(n)|`.
pub fn rho_single(es: &EigenSystem, m: i64, n: i64) -> Result<f64, LocalizationError> {
    let im = es.index(m)?;
    let in_ = es.index(n)?;
    Ok((0..es.dim()).map(|k| (es.vector(k)[im] * es.vector(k)[in_]).abs()).sum())
}

/// Uniform time grid `{t_max · j / (points - 1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_max: f64,
    pub points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_max: 1000.0, points: 10_000 }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![0.0],
            p => (0..p).map(|j| self.t_max * j as f64 / (p - 1) as f64).collect(),
        }
    }
}

/// `max_{t ∈ grid} |⟨δ_m, e^{-itJ} δ_n⟩|`, a lower bound for the sup over all `t`.
pub fn sampled_sup_amplitude(
    es: &EigenSystem,
    m: i64,
    n: i64,
    t_grid: &[f64],
) -> Result<f64, LocalizationError> {
    if t_grid.is_empty() {
        return Err(LocalizationError::Input("empty time grid".into()));
    }
    let im = es.index(m)?;
    let in_ = es.index(n)?;
    let weights: Vec<f64> = (0..es.dim()).map(|k| es.vector(k)[im] * es.vector(k)[in_]).collect();
    let mut best = 0.0f64;
    for &t in t_grid {
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, e) in weights.iter().zip(&es.values) {
            let (s, c) = (-t * e).sin_cos();
            acc += Complex64::new(c * w, s * w);
        }
        best = best.max(acc.norm());
    }
    Ok(best)
}

/// Sampled sup-amplitudes for every `m` in the window at once, indexed by `m + L`.
pub fn sampled_sup_profile(
    es: &EigenSystem,
    n: i64,
    t_grid: &[f64],
) -> Result<Vec<f64>, LocalizationError> {
    if t_grid.is_empty() {
        return Err(LocalizationError::Input("empty time grid".into()));
    }
    let dim = es.dim();
    let in_ = es.index(n)?;
    let anchor: Vec<f64> = (0..dim).map(|k| es.vector(k)[in_]).collect();
    let mut best = vec![0.0f64; dim];
    let mut re = vec![0.0; dim];
    let mut im = vec![0.0; dim];
    for &t in t_grid {
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..dim {
            let (s, c) = (-t * es.values[k]).sin_cos();
            let wr = c * anchor[k];
            let wi = s * anchor[k];
            for (i, phi) in es.vector(k).iter().enumerate() {
                re[i] += phi * wr;
                im[i] += phi * wi;
            }
        }
        for i in 0..dim {
            best[i] = best[i].max(re[i].hypot(im[i]));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorRow {
    pub m: i64,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

/// Monte Carlo estimate of `ρ_L(m, n_ref)` over a range of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorTable {
    pub n_ref: i64,
    pub rows: Vec<CorrelatorRow>,
    pub samples: usize,
    pub l: usize,
    pub fingerprint: String,
}

impl CorrelatorTable {
    pub fn row(&self, m: i64) -> Option<&CorrelatorRow> {
        self.rows.iter().find(|r| r.m == m)
    }

    /// Builds a table from per-sample values `values[sample][j]` for `ms[j]`;
    /// the reduction runs in sample order.
    pub fn from_samples(
        n_ref: i64,
        ms: &[i64],
        values: &[Vec<f64>],
        l: usize,
        fingerprint: String,
    ) -> Self {
        let count = values.len();
        let rows = ms
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let mut sum = 0.0;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in values {
                    sum += v[j];
                    lo = lo.min(v[j]);
                    hi = hi.max(v[j]);
                }
                let mean = sum / count as f64;
                let stderr = if count > 1 {
                    let var = values.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>()
                        / (count - 1) as f64;
                    (var / count as f64).sqrt()
                } else {
                    0.0
                };
                CorrelatorRow { m, mean, stderr, min: lo, max: hi }
            })
            .collect();
        Self { n_ref, rows, samples: count, l, fingerprint }
    }
}

/// Samples, diagonalizes and checks one realization; eigenvalues must lie in `Σ₀`.
pub fn sample_eigensystem(
    config: &ModelConfig,
    index: u64,
) -> Result<EigenSystem, LocalizationError> {
    let sample = sample_operator(config, index)?;
    let es = eigen_decompose(&build_truncation(&sample))?;
    let window = config.spectral_window();
    if let Some(e) = es.values.iter().find(|e| !window.contains(**e)) {
        return Err(LocalizationError::Invariant(format!(
            "eigenvalue {e} of sample {index} outside [{}, {}]",
            window.lo, window.hi
        )));
    }
    Ok(es)
}

fn check_range(config: &ModelConfig, n_ref: i64, ms: &[i64]) -> Result<(), LocalizationError> {
    let l = config.l as i64;
    if n_ref != 0 && n_ref != 1 {
        return Err(LocalizationError::Input(format!("reference site {n_ref} must be 0 or 1")));
    }
    if n_ref > l {
        return Err(LocalizationError::Input(format!("reference site {n_ref} outside window")));
    }
    if let Some(m) = ms.iter().find(|m| m.abs() > l) {
        return Err(LocalizationError::Input(format!("site {m} outside [-{l}, {l}]")));
    }
    Ok(())
}

/// `ρ̄_L(m, n_ref)` for each `m` in `ms` as the mean over `config.samples` samples.
pub fn monte_carlo_correlator(
    config: &ModelConfig,
    n_ref: i64,
    ms: &[i64],
    workers: Option<usize>,
) -> Result<CorrelatorTable, LocalizationError> {
    check_range(config, n_ref, ms)?;
    let per_sample = map_indexed(config.samples, workers, |i| {
        let es = sample_eigensystem(config, i as u64)?;
        ms.iter().map(|&m| rho_single(&es, m, n_ref)).collect::<Result<Vec<_>, _>>()
    });
    let values = per_sample.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(CorrelatorTable::from_samples(n_ref, ms, &values, config.l, config.fingerprint()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitKind {
    /// `ρ̄ ≈ C e^{-γ|m|}`.
    Exponential,
    /// `ρ̄ ≈ C' |m|^{ζ/2} e^{-γ''|m|^{1-2ζ}}`.
    Stretched { zeta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub kind: FitKind,
    /// `C` (exponential) or `C'` (stretched).
    pub prefactor: f64,
    /// `γ` (exponential) or `γ''` (stretched).
    pub rate: f64,
    pub r_squared: f64,
    pub m_min: i64,
    pub m_max: i64,
    pub points: usize,
    /// Power-law fit `ρ̄ ≈ C'' |m|^{-τ}` over the same points.
    pub tau: f64,
    pub tau_prefactor: f64,
}

/// Minimum number of usable means for a fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Least squares in the log domain over rows with `m_min ≤ |m - n_ref| ≤ m_max`.
/// Rows whose mean is within two standard errors of zero are dropped.
pub fn fit_decay(
    table: &CorrelatorTable,
    kind: FitKind,
    m_min: i64,
    m_max: i64,
) -> Result<DecayFit, LocalizationError> {
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| {
            let dist = (r.m - table.n_ref).abs();
            let usable = dist >= m_min.max(1)
                && dist <= m_max
                && r.mean > 0.0
                && r.mean > 2.0 * r.stderr;
            usable.then(|| (dist as f64, r.mean.ln()))
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(LocalizationError::Input(format!(
            "only {} usable means in [{m_min}, {m_max}], need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = match kind {
        FitKind::Exponential => pts.iter().cloned().unzip(),
        FitKind::Stretched { zeta } => {
            if !(0.0..0.5).contains(&zeta) {
                return Err(LocalizationError::Input(format!("ζ = {zeta} outside [0, 1/2)")));
            }
            pts.iter()
                .map(|&(d, y)| (d.powf(1.0 - 2.0 * zeta), y - 0.5 * zeta * d.ln()))
                .unzip()
        }
    };
    let (intercept, slope, r2) = linear_fit(&xs, &ys);
    let logs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let raw: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (tau_icpt, tau_slope, _) = linear_fit(&logs, &raw);
    Ok(DecayFit {
        kind,
        prefactor: intercept.exp(),
        rate: -slope,
        r_squared: r2,
        m_min,
        m_max,
        points: pts.len(),
        tau: -tau_slope,
        tau_prefactor: tau_icpt.exp(),
    })
}

/// Ordinary least squares `y ≈ α + βx`; returns `(α, β, R²)` with `R²` clamped to `[0, 1]`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let alpha = my - beta * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - alpha - beta * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    (alpha, beta, r2.clamp(0.0, 1.0))
}

/// `Σ_{|m| ≥ M} ρ(m, n)²` for one eigensystem.
pub fn tail_mass(es: &EigenSystem, n: i64, big_m: usize) -> Result<f64, LocalizationError> {
    if big_m > es.l {
        return Err(LocalizationError::Input(format!("M = {big_m} exceeds L = {}", es.l)));
    }
    let l = es.l as i64;
    let mut total = 0.0;
    for m in -l..=l {
        if m.unsigned_abs() as usize >= big_m {
            total += rho_single(es, m, n)?.powi(2);
        }
    }
    Ok(total)
}

/// Smallest `M ∈ [0, L]` with `tail_mass < ε`; `None` if not reached.
pub fn epsilon_radius(es: &EigenSystem, n: i64, eps: f64) -> Result<Option<usize>, LocalizationError> {
    if !(eps > 0.0) {
        return Err(LocalizationError::Input(format!("ε = {eps} must be positive")));
    }
    let l = es.l as i64;
    let mut by_radius = vec![0.0; es.l + 1];
    for m in -l..=l {
        by_radius[m.unsigned_abs() as usize] += rho_single(es, m, n)?.powi(2);
    }
    let mut tail = 0.0;
    let mut found = None;
    for r in (0..=es.l).rev() {
        tail += by_radius[r];
        if tail < eps {
            found = Some(r);
        } else {
            break;
        }
    }
    Ok(found)
}

/// Random family `J̃` with `ã = a`, background `c = b`, `d ≡ 1`; every
/// realization is within `M < ε` of the target in sup norm.
pub fn perturb_construction(
    a: SequenceSpec,
    b: SequenceSpec,
    epsilon: f64,
    density: SingleSiteDensity,
    l: usize,
    master_seed: u64,
    samples: usize,
) -> Result<ModelConfig, LocalizationError> {
    if !(epsilon > 0.0) {
        return Err(LocalizationError::Input(format!("ε = {epsilon} must be positive")));
    }
    if density.half_width() >= epsilon {
        return Err(LocalizationError::Input(format!(
            "density half-width {} is not below ε = {epsilon}; rescale the support",
            density.half_width()
        )));
    }
    Ok(ModelConfig::new(density, a, b, SequenceSpec::Constant(1.0), l, master_seed, samples)?)
}

/// `‖b̃ - b‖_∞` over the window for one realization of a perturbed family.
pub fn perturbation_distance(config: &ModelConfig, index: u64) -> Result<f64, LocalizationError> {
    let s = sample_operator(config, index)?;
    Ok(s.sites().map(|n| (s.b_at(n) - config.c.value(n)).abs()).fold(0.0, f64::max))
}
