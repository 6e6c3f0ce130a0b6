use std::fs;
use std::process::Command;

use jacobi_loc::experiment::runner::{run_detcheck_with, run_kernel_norms};
use jacobi_loc::experiment::{run, ExperimentConfig, Subcommand, Verdict};
use jacobi_loc::jacobian::{det_recursive, JacobianError, RatioCoordinates};
use jacobi_loc::localization::{rho_single, sample_eigensystem};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jacobi-loc"))
}

#[test]
fn misspelled_key_is_named_and_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "model.L = 10\ndecay.m_maks = 4\n").unwrap();
    let out = bin().arg("decay").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("decay.m_maks"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn zero_workers_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["detcheck", "--workers", "0", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "detcheck.instances = 5\ndetcheck.eigen_samples = 2\n").unwrap();
    let out = bin().arg("detcheck").arg("--config").arg(&cfg).arg("--out").arg(blocker.join("sub")).output().unwrap();
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn binary_writes_manifest_and_rerun_from_it_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "model.L = 12\nmodel.samples = 8\ndecay.m_max = 6\ndecay.fit_m_min = 1\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let st = bin().arg("decay").arg("--config").arg(&cfg).arg("--out").arg(&a).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let st = bin()
        .arg("decay")
        .arg("--config")
        .arg(a.join("manifest.toml"))
        .args(["--workers", "2", "--out"])
        .arg(&b)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for name in ["correlator.csv", "summary.json", "manifest.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_override_changes_the_samples() {
    let cfg = ExperimentConfig::parse("model.L = 10\nmodel.samples = 4\ndecay.m_max = 5\ndecay.fit_m_min = 1\n").unwrap();
    let a = run(Subcommand::Decay, &cfg, None).unwrap();
    let b = run(Subcommand::Decay, &cfg.clone().with_seed(99).unwrap(), None).unwrap();
    assert_ne!(a.file("correlator.csv"), b.file("correlator.csv"));
}

#[test]
fn anderson_baseline_has_full_rows_and_positive_rate() {
    let cfg = ExperimentConfig::parse("").unwrap();
    let out = run(Subcommand::Decay, &cfg, None).unwrap();
    let csv = out.file("correlator.csv").unwrap();
    assert_eq!(csv.lines().next().unwrap(), "m,n_ref,mean,stderr,min,max");
    for n in ["0", "1"] {
        let rows = csv.lines().skip(1).filter(|l| l.split(',').nth(1) == Some(n)).count();
        assert_eq!(rows, 2 * 30 + 1);
    }
    for f in out.summary["fits"].as_array().unwrap() {
        assert!(f["rate"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(out.verdict, Verdict::Pass);
}

#[test]
fn single_sample_means_are_the_sample_values() {
    let cfg = ExperimentConfig::parse("model.L = 15\nmodel.samples = 1\ndecay.m_max = 10\ndecay.n_ref = [1]\n").unwrap();
    let out = run(Subcommand::Decay, &cfg, Some(1)).unwrap();
    let es = sample_eigensystem(&cfg.model, 0).unwrap();
    let csv = out.file("correlator.csv").unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m: i64 = f[0].parse().unwrap();
        let mean: f64 = f[2].parse().unwrap();
        let expected = rho_single(&es, m, 1).unwrap();
        assert_eq!(mean, expected, "m = {m}");
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[4], f[5]);
    }
}

#[test]
fn every_number_has_seventeen_significant_digits() {
    let cfg = ExperimentConfig::parse("detcheck.instances = 10\ndetcheck.eigen_samples = 3\n").unwrap();
    let out = run(Subcommand::Detcheck, &cfg, None).unwrap();
    for line in out.file("detcheck.csv").unwrap().lines().skip(1) {
        let err = line.split(',').nth(1).unwrap();
        let mantissa = err.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{err}");
    }
}

fn flipped_sign(rc: &RatioCoordinates, a: &[f64]) -> Result<f64, JacobianError> {
    det_recursive(rc, a).map(|d| -d)
}

#[test]
fn detcheck_passes_by_default_and_catches_a_sign_fault() {
    let cfg = ExperimentConfig::parse("").unwrap();
    let good = run(Subcommand::Detcheck, &cfg, None).unwrap();
    assert_eq!(good.verdict, Verdict::Pass);
    let bad = run_detcheck_with(&cfg, None, flipped_sign).unwrap();
    assert!(matches!(bad.verdict, Verdict::Fail(_)));
    assert!(bad.file("detcheck.csv").unwrap().contains("FAIL"));
}

#[test]
fn default_kernel_norms_report_a_contraction() {
    let cfg = ExperimentConfig::parse("kernel.sweep.count = 2\nkernel.sweep.sites = [1]\n").unwrap();
    let out = run_kernel_norms(&cfg, None).unwrap();
    let q = out.summary["q"].as_f64().unwrap();
    assert!(q > 0.0 && q < 1.0, "q = {q}");
    assert!(out.file("certificates.csv").unwrap().starts_with("operator,norm,site,alpha,beta,estimate,bound"));
}

#[test]
fn perturbation_stays_inside_epsilon() {
    let cfg = ExperimentConfig::parse("model.L = 20\nmodel.samples = 30\nperturb.epsilon = 0.01\ndecay.m_max = 10\n").unwrap();
    let out = run(Subcommand::Perturb, &cfg, None).unwrap();
    for line in out.file("perturb.csv").unwrap().lines().skip(1) {
        let d: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(d < 0.01);
    }
}
