//! CSV text, run directories and manifests.

use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV text with a mandatory header row.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Config echo preceded by the run identity; loadable as a config.
pub fn manifest(subcommand: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "manifest.subcommand = \"{subcommand}\"\nmanifest.tool = \"{} {TOOL_VERSION}\"\nmanifest.fingerprint = \"{}\"\n{}",
        env!("CARGO_PKG_NAME"),
        cfg.fingerprint(),
        cfg.echo()
    )
}

/// Writes `files` and `manifest.toml` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, files: &[(String, String)], manifest_text: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, text) in files {
        fs::write(dir.join(name), text)?;
    }
    fs::write(dir.join("manifest.toml"), manifest_text)
}
