//! The five experiment runs. Each returns its files as text plus a verdict;
//! nothing here depends on the worker count or the wall clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use super::config::ExperimentConfig;
use super::output::{csv_text, num, opt_num};
use crate::jacobian::{
    det_numeric, det_recursive, roundtrip_error, verify_eigen_identity_with, EigenIdentityReport,
    JacobianError, RatioCoordinates,
};
use crate::kernels::chain::{rho_chain_check, ChainReport};
use crate::kernels::cutoff::{find_c0, Cutoff};
use crate::kernels::fourier::{a_table, fourier_profile, PROFILE_K_MIN};
use crate::kernels::norms::{
    contraction_constant, hs_norm_evidence, verify_a_bound, BoundConstants, Sweep,
    CERTIFICATE_TOLERANCE,
};
use crate::kernels::{KernelError, KernelParams};
use crate::localization::{
    fit_decay, perturb_construction, perturbation_distance, rho_single, sample_eigensystem,
    sampled_sup_profile, CorrelatorTable, DecayFit, FitKind, LocalizationError,
};
use crate::model::{ModelConfig, ModelError};
use crate::parallel::map_indexed;
use crate::tridiag::build_truncation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Decay,
    Detcheck,
    KernelNorms,
    Perturb,
    ChainCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Decay => "decay",
            Subcommand::Detcheck => "detcheck",
            Subcommand::KernelNorms => "kernel-norms",
            Subcommand::Perturb => "perturb",
            Subcommand::ChainCheck => "chain-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Inconclusive(String),
    Fail(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Inconclusive(_) => 3,
            RunError::Invariant(_) => 4,
            RunError::Io(_) => 5,
        }
    }
}

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::CorruptStream => RunError::Invariant(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<LocalizationError> for RunError {
    fn from(e: LocalizationError) -> Self {
        match e {
            LocalizationError::Model(m) => m.into(),
            LocalizationError::Input(_) => RunError::Config(e.to_string()),
            LocalizationError::Tridiag(_) | LocalizationError::Invariant(_) => {
                RunError::Invariant(e.to_string())
            }
        }
    }
}

impl From<KernelError> for RunError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Input(_) => RunError::Config(e.to_string()),
            KernelError::Model(m) => m.into(),
            KernelError::Truncation { .. } | KernelError::Inconclusive(_) => {
                RunError::Inconclusive(e.to_string())
            }
        }
    }
}

impl From<JacobianError> for RunError {
    fn from(e: JacobianError) -> Self {
        match e {
            JacobianError::Input(_) => RunError::Config(e.to_string()),
            _ => RunError::Inconclusive(e.to_string()),
        }
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// `(file name, contents)` in write order; `summary.json` is last.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub verdict: Verdict,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_str())
    }

    fn finish(mut files: Vec<(String, String)>, summary: Value, verdict: Verdict) -> Self {
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        files.push(("summary.json".into(), text));
        Self { files, summary, verdict }
    }
}

pub fn run(cmd: Subcommand, cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    match cmd {
        Subcommand::Decay => run_decay(cfg, workers),
        Subcommand::Detcheck => run_detcheck(cfg, workers),
        Subcommand::KernelNorms => run_kernel_norms(cfg, workers),
        Subcommand::Perturb => run_perturb(cfg, workers),
        Subcommand::ChainCheck => run_chain_check(cfg, workers),
    }
}

/// Slack allowed for rounding in `|Σ_k e^{-itE_k} φ_k(m)φ_k(n)| ≤ Σ_k |φ_k(m)φ_k(n)|`.
pub const AMPLITUDE_SLACK: f64 = 1e-12;
pub const DIAGONAL_TOLERANCE: f64 = 1e-10;

/// Chain check over all samples and reference sites.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmplitudeReport {
    /// Largest `sampled_sup_amplitude - ρ` seen (negative when the chain holds with room).
    pub max_excess: f64,
    pub violations: usize,
    pub pairs: usize,
    /// `max_m |ρ(m, m) - 1|`.
    pub diagonal_error: f64,
}

struct Correlators {
    tables: Vec<CorrelatorTable>,
    amplitude: Option<AmplitudeReport>,
}

fn correlators(
    model: &ModelConfig,
    n_refs: &[i64],
    ms: &[i64],
    times: Option<&[f64]>,
    workers: Option<usize>,
) -> Result<Correlators, RunError> {
    let l = model.l as i64;
    let per_sample = map_indexed(model.samples, workers, |i| -> Result<_, LocalizationError> {
        let es = sample_eigensystem(model, i as u64)?;
        let mut rows = Vec::with_capacity(n_refs.len());
        for &n in n_refs {
            rows.push(ms.iter().map(|&m| rho_single(&es, m, n)).collect::<Result<Vec<_>, _>>()?);
        }
        let amp = match times {
            None => None,
            Some(ts) => {
                let mut rep = AmplitudeReport { max_excess: f64::NEG_INFINITY, ..Default::default() };
                for &n in n_refs {
                    let profile = sampled_sup_profile(&es, n, ts)?;
                    for m in -l..=l {
                        let excess = profile[(m + l) as usize] - rho_single(&es, m, n)?;
                        rep.max_excess = rep.max_excess.max(excess);
                        rep.violations += usize::from(excess > AMPLITUDE_SLACK);
                        rep.pairs += ts.len();
                    }
                }
                for m in -l..=l {
                    rep.diagonal_error = rep.diagonal_error.max((rho_single(&es, m, m)? - 1.0).abs());
                }
                Some(rep)
            }
        };
        Ok((rows, amp))
    });
    let mut values = vec![Vec::with_capacity(model.samples); n_refs.len()];
    let mut amplitude: Option<AmplitudeReport> = None;
    for r in per_sample {
        let (rows, amp) = r?;
        for (v, row) in values.iter_mut().zip(rows) {
            v.push(row);
        }
        if let Some(a) = amp {
            let acc = amplitude.get_or_insert(AmplitudeReport { max_excess: f64::NEG_INFINITY, ..Default::default() });
            acc.max_excess = acc.max_excess.max(a.max_excess);
            acc.violations += a.violations;
            acc.pairs += a.pairs;
            acc.diagonal_error = acc.diagonal_error.max(a.diagonal_error);
        }
    }
    let tables = n_refs
        .iter()
        .zip(&values)
        .map(|(&n, v)| CorrelatorTable::from_samples(n, ms, v, model.l, model.fingerprint()))
        .collect();
    Ok(Correlators { tables, amplitude })
}

fn correlator_csv(tables: &[CorrelatorTable]) -> Result<String, RunError> {
    let rows: Vec<Vec<String>> = tables
        .iter()
        .flat_map(|t| {
            t.rows.iter().map(move |r| {
                vec![r.m.to_string(), t.n_ref.to_string(), num(r.mean), num(r.stderr), num(r.min), num(r.max)]
            })
        })
        .collect();
    Ok(csv_text(&["m", "n_ref", "mean", "stderr", "min", "max"], &rows)?)
}

fn fit_json(fit: &DecayFit) -> Value {
    let (kind, zeta) = match fit.kind {
        FitKind::Exponential => ("exponential", None),
        FitKind::Stretched { zeta } => ("stretched", Some(zeta)),
    };
    json!({
        "kind": kind,
        "zeta": zeta,
        "prefactor": fit.prefactor,
        "rate": fit.rate,
        "r_squared": fit.r_squared,
        "m_min": fit.m_min,
        "m_max": fit.m_max,
        "points": fit.points,
        "tau": fit.tau,
        "tau_prefactor": fit.tau_prefactor,
    })
}

/// Fits every table. A table without enough usable points makes the run
/// inconclusive; a non-positive rate means no decay was detected and fails it.
fn fits(cfg: &ExperimentConfig, tables: &[CorrelatorTable]) -> (Vec<Value>, Verdict) {
    let mut out = Vec::new();
    let mut verdict = Verdict::Pass;
    for t in tables {
        match fit_decay(t, cfg.decay.fit, cfg.decay.fit_m_min, cfg.decay.fit_m_max) {
            Ok(f) => {
                let mut v = fit_json(&f);
                v["n_ref"] = json!(t.n_ref);
                out.push(v);
                if f.rate <= 0.0 && !matches!(verdict, Verdict::Fail(_)) {
                    verdict = Verdict::Fail(format!("no decay detected for n_ref = {}: rate {}", t.n_ref, f.rate));
                }
            }
            Err(e) => {
                out.push(json!({ "n_ref": t.n_ref, "error": e.to_string() }));
                if verdict == Verdict::Pass {
                    verdict = Verdict::Inconclusive(format!("fit for n_ref = {}: {e}", t.n_ref));
                }
            }
        }
    }
    (out, verdict)
}

pub fn run_decay(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    let ms: Vec<i64> = (-cfg.decay.m_max..=cfg.decay.m_max).collect();
    let times = cfg.decay.amplitude_check.then(|| cfg.decay.time.times());
    let c = correlators(&cfg.model, &cfg.decay.n_ref, &ms, times.as_deref(), workers)?;
    let (fit_values, mut verdict) = fits(cfg, &c.tables);
    let amplitude = c.amplitude.map(|a| {
        if a.violations > 0 || a.diagonal_error > DIAGONAL_TOLERANCE {
            verdict = Verdict::Fail(format!(
                "{} (sample, m, t) triples exceed ρ; max |ρ(m,m) - 1| = {:e}",
                a.violations, a.diagonal_error
            ));
        }
        json!({
            "max_excess": a.max_excess,
            "violations": a.violations,
            "pairs": a.pairs,
            "diagonal_error": a.diagonal_error,
            "slack": AMPLITUDE_SLACK,
        })
    });
    let summary = json!({
        "subcommand": "decay",
        "fingerprint": cfg.fingerprint(),
        "model_fingerprint": cfg.model.fingerprint(),
        "samples": cfg.model.samples,
        "L": cfg.model.l,
        "fits": fit_values,
        "amplitude_check": amplitude,
        "verdict": verdict_label(&verdict),
    });
    Ok(RunOutput::finish(vec![("correlator.csv".into(), correlator_csv(&c.tables)?)], summary, verdict))
}

fn verdict_label(v: &Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Inconclusive(_) => "INCONCLUSIVE",
        Verdict::Fail(_) => "FAIL",
    }
}

/// Tolerances of the determinant identities.
pub const FD_TOLERANCE: f64 = 1e-6;
pub const EIGEN_TOLERANCE: f64 = 1e-8;

/// Random `(x, E, a)` for the finite-difference comparison; stream `u64::MAX`
/// of the master seed keeps it apart from the operator samples.
pub fn random_instance(cfg: &ExperimentConfig, index: usize) -> (RatioCoordinates, Vec<f64>) {
    let d = &cfg.detcheck;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.master_seed);
    rng.set_stream(u64::MAX);
    rng.set_word_pos(index as u128 * 1024);
    let l = rng.gen_range(1..=d.l_max);
    let mut x = || d.x_min * (d.x_max / d.x_min).powf(rng.gen::<f64>());
    let x_neg: Vec<f64> = (0..l).map(|_| x()).collect();
    let x_pos: Vec<f64> = (0..l).map(|_| x()).collect();
    let e = rng.gen_range(-3.0..3.0);
    let a = (0..2 * l).map(|_| rng.gen_range(d.a_min..=d.a_max)).collect();
    (RatioCoordinates { x_neg, e, x_pos }, a)
}

pub type DetFn = fn(&RatioCoordinates, &[f64]) -> Result<f64, JacobianError>;

pub fn run_detcheck(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    run_detcheck_with(cfg, workers, det_recursive)
}

/// [`run_detcheck`] with the determinant formula under test supplied by the caller.
pub fn run_detcheck_with(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
    det: DetFn,
) -> Result<RunOutput, RunError> {
    let d = &cfg.detcheck;
    let fd = map_indexed(d.instances, workers, |i| -> Result<f64, JacobianError> {
        let (rc, a) = random_instance(cfg, i);
        let exact = det(&rc, &a)?;
        let numeric = det_numeric(&rc, &a, d.fd_step)?;
        Ok(((numeric - exact) / exact).abs())
    });
    let mut fd_error = 0.0f64;
    let mut fd_skipped = 0;
    for e in fd {
        match e {
            Ok(v) => fd_error = fd_error.max(if v.is_nan() { f64::INFINITY } else { v }),
            Err(JacobianError::SingularPivot(_)) => fd_skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }

    let model = cfg.model.with_l(d.eigen_l).with_samples(d.eigen_samples)?;
    let eig = map_indexed(model.samples, workers, |i| -> Result<(EigenIdentityReport, f64), RunError> {
        let es = sample_eigensystem(&model, i as u64)?;
        let sample = crate::model::sample_operator(&model, i as u64)?;
        let t = build_truncation(&sample);
        Ok((verify_eigen_identity_with(&es, &t.offdiag, det)?, roundtrip_error(&es, &t)?))
    });
    let mut report = EigenIdentityReport::default();
    let mut roundtrip = 0.0f64;
    for r in eig {
        let (rep, rt) = r?;
        report.merge(&rep);
        roundtrip = roundtrip.max(rt);
    }

    let checks = [
        ("det_recursive_vs_numeric", fd_error, FD_TOLERANCE, d.instances - fd_skipped, fd_skipped),
        ("det_vs_eigenvector_weight", report.det_error, EIGEN_TOLERANCE, report.checked, report.skipped),
        ("nested_partial_sums", report.partial_sum_error, EIGEN_TOLERANCE, report.checked, report.skipped),
        ("ratio_product_weight", report.weight_error, EIGEN_TOLERANCE, report.checked, report.skipped),
        ("potential_roundtrip", roundtrip, EIGEN_TOLERANCE, report.checked, report.skipped),
    ];
    let mut failed = Vec::new();
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|(name, err, tol, checked, skipped)| {
            let ok = *err <= *tol;
            if !ok {
                failed.push(name.to_string());
            }
            vec![
                name.to_string(),
                num(*err),
                num(*tol),
                checked.to_string(),
                skipped.to_string(),
                if ok { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let verdict = if failed.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(format!("identities out of tolerance: {}", failed.join(", ")))
    };
    let csv = csv_text(&["identity", "max_error", "tolerance", "checked", "skipped", "verdict"], &rows)?;
    let summary = json!({
        "subcommand": "detcheck",
        "fingerprint": cfg.fingerprint(),
        "instances": d.instances,
        "eigen_samples": d.eigen_samples,
        "eigen_L": d.eigen_l,
        "checks": checks.iter().map(|c| json!({
            "identity": c.0, "max_error": c.1, "tolerance": c.2, "checked": c.3, "skipped": c.4,
        })).collect::<Vec<_>>(),
        "verdict": verdict_label(&verdict),
    });
    Ok(RunOutput::finish(vec![("detcheck.csv".into(), csv)], summary, verdict))
}

pub fn run_kernel_norms(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    let k = &cfg.kernel;
    let model = &cfg.model;
    let r = &model.density;
    let profile = fourier_profile(r, k.k_max, k.dk)?;
    let r0 = profile.values[0];
    let max_mod = profile.max_modulus_from(PROFILE_K_MIN);
    let fourier_ok = (r0.re - 1.0).abs() <= 1e-9
        && r0.im.abs() <= 1e-9
        && max_mod < 1.0
        && profile.curvature < 0.0;

    let cutoff = Cutoff::new(k.plateau, k.support)?;
    let c0 = find_c0(&cutoff, model.a_sup(), model.delta())?;
    let grid = k.grid.build()?;
    let sweep = Sweep::across_window(model, k.sweep_count, k.sites.clone());
    let consts = BoundConstants { c0: c0.c0, a_sup: model.a_sup(), density_sup: r.bound() };
    let certs = verify_a_bound(model, r, &profile, consts, &sweep, &grid, k.refine, workers)?;
    let q = contraction_constant(&certs);

    let mut failures = Vec::new();
    let mut inconclusive = Vec::new();
    let rows: Vec<Vec<String>> = certs
        .iter()
        .map(|c| {
            let within = c.within_bound();
            let stable = c.stable(CERTIFICATE_TOLERANCE);
            let verdict = if c.inconclusive {
                inconclusive.push(format!("{} n={} α={}", c.operator, c.site, c.alpha));
                "INCONCLUSIVE"
            } else if within && stable {
                "PASS"
            } else {
                failures.push(format!("{}[{}] n={} α={} β={:?}", c.operator, c.norm, c.site, c.alpha, c.beta));
                "FAIL"
            };
            vec![
                c.operator.clone(),
                c.norm.clone(),
                c.site.to_string(),
                num(c.alpha),
                opt_num(c.beta),
                num(c.estimate),
                num(c.bound),
                num(c.tolerance),
                num(c.x),
                num(c.h),
                opt_num(c.refined_estimate),
                opt_num(c.stability_gap),
                c.iterations.to_string(),
                num(c.residual),
                verdict.to_string(),
            ]
        })
        .collect();
    let cert_csv = csv_text(
        &[
            "operator", "norm", "site", "alpha", "beta", "estimate", "bound", "tolerance", "X", "h",
            "refined_estimate", "stability_gap", "iterations", "residual", "verdict",
        ],
        &rows,
    )?;
    let mut files = vec![("certificates.csv".to_string(), cert_csv)];

    let table = match k.zeta {
        Some(zeta) => {
            let t = a_table(&profile, |n| model.d.value(n), zeta, k.s_max, c0.c0, model.a_sup())?;
            let rows: Vec<Vec<String>> = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.s.to_string(),
                        num(r.t),
                        num(r.a),
                        num(r.log_a),
                        num(r.pointwise_bound),
                        num(r.log_product),
                        num(r.product_bound),
                    ]
                })
                .collect();
            files.push((
                "a_table.csv".into(),
                csv_text(&["s", "t", "A", "log_A", "pointwise_bound", "log_product", "product_bound"], &rows)?,
            ));
            if !(t.pointwise_holds() && t.product_holds()) {
                failures.push("A(s) product bound".into());
            }
            Some(t)
        }
        None => None,
    };

    let site = k.sites[0];
    let hs = hs_norm_evidence(
        &KernelParams::at_alpha(model, site, 0.0),
        &KernelParams::at_alpha(model, site + 1, 0.0),
        r,
        &grid,
    )?;
    if hs.inconclusive {
        inconclusive.push("Hilbert–Schmidt norm unstable under refinement".into());
    }
    if !fourier_ok {
        failures.push("Fourier facts".into());
    }
    let verdict = if !failures.is_empty() {
        Verdict::Fail(failures.join("; "))
    } else if !inconclusive.is_empty() {
        Verdict::Inconclusive(inconclusive.join("; "))
    } else {
        Verdict::Pass
    };
    let summary = json!({
        "subcommand": "kernel-norms",
        "fingerprint": cfg.fingerprint(),
        "grid": { "X": k.grid.x, "h": k.grid.h, "far": k.grid.far, "ratio": k.grid.ratio, "refine": k.refine },
        "fourier": {
            "r_hat_0_re": r0.re,
            "r_hat_0_im": r0.im,
            "max_modulus_from_k_min": max_mod,
            "k_min": PROFILE_K_MIN,
            "k_max": k.k_max,
            "curvature": profile.curvature,
            "curvature_from_moments": profile.curvature_moments,
        },
        "c0": { "value": c0.c0, "I1": c0.i1, "I2": c0.i2, "B": c0.b, "bisection_steps": c0.bisection_steps },
        "q": q,
        "certificates": certs.len(),
        "a_table": table.as_ref().map(|t| json!({
            "zeta": t.zeta,
            "gamma_prime": t.gamma_prime,
            "pointwise_holds": t.pointwise_holds(),
            "product_holds": t.product_holds(),
        })),
        "hilbert_schmidt": {
            "site": site,
            "value": hs.value,
            "refined": hs.refined,
            "relative_change": hs.relative_change,
            "operator_norm": hs.operator_norm,
        },
        "verdict": verdict_label(&verdict),
    });
    Ok(RunOutput::finish(files, summary, verdict))
}

pub fn run_perturb(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    let p = &cfg.perturb;
    let m = &cfg.model;
    let density = m.density.scaled_to_half_width(p.half_width)?;
    let model = perturb_construction(m.a.clone(), p.target.clone(), p.epsilon, density, m.l, m.master_seed, m.samples)?;
    let distances = map_indexed(model.samples, workers, |i| perturbation_distance(&model, i as u64));
    let distances = distances.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let max_distance = distances.iter().cloned().fold(0.0, f64::max);
    let rows: Vec<Vec<String>> =
        distances.iter().enumerate().map(|(i, d)| vec![i.to_string(), num(*d), num(p.epsilon)]).collect();
    let dist_csv = csv_text(&["sample", "distance", "epsilon"], &rows)?;

    let ms: Vec<i64> = (-cfg.decay.m_max..=cfg.decay.m_max).collect();
    let c = correlators(&model, &cfg.decay.n_ref, &ms, None, workers)?;
    let (fit_values, fit_verdict) = fits(cfg, &c.tables);
    let verdict = if max_distance >= p.epsilon {
        Verdict::Fail(format!("sup-norm distance {max_distance} reaches ε = {}", p.epsilon))
    } else {
        fit_verdict
    };
    let summary = json!({
        "subcommand": "perturb",
        "fingerprint": cfg.fingerprint(),
        "model_fingerprint": model.fingerprint(),
        "epsilon": p.epsilon,
        "half_width": p.half_width,
        "max_distance": max_distance,
        "fits": fit_values,
        "verdict": verdict_label(&verdict),
    });
    let files = vec![("perturb.csv".into(), dist_csv), ("correlator.csv".into(), correlator_csv(&c.tables)?)];
    Ok(RunOutput::finish(files, summary, verdict))
}

pub fn run_chain_check(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput, RunError> {
    let ch = &cfg.chain;
    let model = cfg.model.with_samples(ch.samples)?;
    let grid = ch.grid.build()?;
    let reports = ch
        .cases
        .iter()
        .map(|&(l, m)| rho_chain_check(&model, l, m, &grid, ch.panels, workers))
        .collect::<Result<Vec<ChainReport>, _>>()?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.l.to_string(),
                r.m.to_string(),
                r.samples.to_string(),
                num(r.mc_mean),
                num(r.mc_stderr),
                num(r.quadrature),
                num(r.quadrature_coarse),
                num(r.quadrature_tolerance),
                num(r.prefactor),
                num(r.short_prefactor),
                num(r.slack),
                if r.passes() { "PASS" } else if r.inconclusive { "INCONCLUSIVE" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let csv = csv_text(
        &[
            "L", "m", "samples", "mc_mean", "mc_stderr", "quadrature", "quadrature_coarse",
            "quadrature_tolerance", "prefactor", "short_prefactor", "slack", "verdict",
        ],
        &rows,
    )?;
    let verdict = if let Some(r) = reports.iter().find(|r| !r.holds) {
        Verdict::Fail(format!("L={}, m={}: Monte Carlo exceeds the bound by {}", r.l, r.m, -r.slack))
    } else if let Some(r) = reports.iter().find(|r| r.inconclusive) {
        Verdict::Inconclusive(format!("L={}, m={}: quadrature tolerance {}", r.l, r.m, r.quadrature_tolerance))
    } else {
        Verdict::Pass
    };
    let summary = json!({
        "subcommand": "chain-check",
        "fingerprint": cfg.fingerprint(),
        "cases": reports,
        "verdict": verdict_label(&verdict),
    });
    Ok(RunOutput::finish(vec![("chain.csv".into(), csv)], summary, verdict))
}
