//! Flat dotted-key configuration with strict key checking.
//!
//! Every key read is echoed with its effective value (defaults included), so
//! the echo is itself a complete config that reproduces the run.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;
use toml::Value;

use crate::kernels::Grid;
use crate::localization::{FitKind, TimeGrid};
use crate::model::{ModelConfig, SequenceSpec, SingleSiteDensity};
use crate::parallel::sha256_hex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), message: message.into() }
}

/// Keys under this prefix are written into manifests and ignored on input.
pub const MANIFEST_PREFIX: &str = "manifest.";

struct Reader {
    raw: BTreeMap<String, Value>,
    used: BTreeSet<String>,
    echo: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl Reader {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut raw = BTreeMap::new();
        flatten("", &table, &mut raw);
        raw.retain(|k, _| !k.starts_with(MANIFEST_PREFIX));
        Ok(Self { raw, used: BTreeSet::new(), echo: BTreeMap::new() })
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_string());
        self.raw.get(key).cloned()
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = match self.take(key) {
            None => default,
            Some(v) => as_f64(key, &v)?,
        };
        self.echo.insert(key.into(), Value::Float(v));
        Ok(v)
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let x = as_f64(key, &v)?;
                self.echo.insert(key.into(), Value::Float(x));
                Ok(Some(x))
            }
        }
    }

    fn i64(&mut self, key: &str, default: i64) -> Result<i64, ConfigError> {
        let v = match self.take(key) {
            None => default,
            Some(Value::Integer(i)) => i,
            Some(_) => return Err(bad(key, "expected an integer")),
        };
        self.echo.insert(key.into(), Value::Integer(v));
        Ok(v)
    }

    fn usize(&mut self, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.i64(key, default as i64)?;
        if v < min as i64 {
            return Err(bad(key, format!("must be at least {min}")));
        }
        Ok(v as usize)
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let v = match self.take(key) {
            None => default,
            Some(Value::Boolean(b)) => b,
            Some(_) => return Err(bad(key, "expected true or false")),
        };
        self.echo.insert(key.into(), Value::Boolean(v));
        Ok(v)
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        let v = match self.take(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s,
            Some(_) => return Err(bad(key, "expected a string")),
        };
        self.echo.insert(key.into(), Value::String(v.clone()));
        Ok(v)
    }

    fn f64_list(&mut self, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>, ConfigError> {
        let v = match (self.take(key), default) {
            (Some(Value::Array(items)), _) => {
                items.iter().map(|x| as_f64(key, x)).collect::<Result<Vec<_>, _>>()?
            }
            (Some(_), _) => return Err(bad(key, "expected an array of numbers")),
            (None, Some(d)) => d,
            (None, None) => return Err(bad(key, "required")),
        };
        self.echo.insert(key.into(), Value::Array(v.iter().map(|x| Value::Float(*x)).collect()));
        Ok(v)
    }

    fn i64_list(&mut self, key: &str, default: Vec<i64>) -> Result<Vec<i64>, ConfigError> {
        let v = match self.take(key) {
            None => default,
            Some(Value::Array(items)) => items
                .iter()
                .map(|x| x.as_integer().ok_or_else(|| bad(key, "expected an array of integers")))
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(bad(key, "expected an array of integers")),
        };
        self.echo.insert(key.into(), Value::Array(v.iter().map(|x| Value::Integer(*x)).collect()));
        Ok(v)
    }

    fn finish(self) -> Result<BTreeMap<String, Value>, ConfigError> {
        if let Some(k) = self.raw.keys().find(|k| !self.used.contains(*k)) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        Ok(self.echo)
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) if f.is_finite() => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "expected a finite number")),
    }
}

fn density(r: &mut Reader, p: &str) -> Result<SingleSiteDensity, ConfigError> {
    let kind = r.string(&format!("{p}.kind"), "uniform")?;
    let key = format!("{p}.kind");
    let out = match kind.as_str() {
        "uniform" => {
            SingleSiteDensity::uniform(r.f64(&format!("{p}.lo"), 0.0)?, r.f64(&format!("{p}.hi"), 1.0)?)
        }
        "triangular" => {
            let lo = r.f64(&format!("{p}.lo"), 0.0)?;
            let hi = r.f64(&format!("{p}.hi"), 1.0)?;
            let mode = r.f64(&format!("{p}.mode"), 0.5 * (lo + hi))?;
            SingleSiteDensity::triangular(lo, mode, hi)
        }
        "raised-cosine" => SingleSiteDensity::raised_cosine(
            r.f64(&format!("{p}.lo"), 0.0)?,
            r.f64(&format!("{p}.hi"), 1.0)?,
        ),
        "piecewise-constant" => SingleSiteDensity::piecewise_constant(
            r.f64_list(&format!("{p}.breaks"), None)?,
            r.f64_list(&format!("{p}.heights"), None)?,
        ),
        other => return Err(bad(&key, format!("unknown density kind `{other}`"))),
    };
    out.map_err(|e| bad(&key, e.to_string()))
}

fn sequence(r: &mut Reader, p: &str, default: f64) -> Result<SequenceSpec, ConfigError> {
    let kind = r.string(&format!("{p}.kind"), "constant")?;
    Ok(match kind.as_str() {
        "constant" => SequenceSpec::Constant(r.f64(&format!("{p}.value"), default)?),
        "periodic" => SequenceSpec::Periodic(r.f64_list(&format!("{p}.values"), None)?),
        "list" => SequenceSpec::List {
            start: r.i64(&format!("{p}.start"), 0)?,
            values: r.f64_list(&format!("{p}.values"), None)?,
        },
        "power-law" => SequenceSpec::PowerLaw {
            c: r.f64(&format!("{p}.C"), 1.0)?,
            zeta: r.f64(&format!("{p}.zeta"), 0.25)?,
        },
        other => return Err(bad(&format!("{p}.kind"), format!("unknown sequence kind `{other}`"))),
    })
}

/// Truncated-line grid: uniform core `[-X, X]` of step `h`, geometric tail to `far`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x: f64,
    pub h: f64,
    pub far: f64,
    pub ratio: f64,
}

impl GridSpec {
    fn read(r: &mut Reader, p: &str, d: GridSpec) -> Result<Self, ConfigError> {
        Ok(Self {
            x: r.f64(&format!("{p}.X"), d.x)?,
            h: r.f64(&format!("{p}.h"), d.h)?,
            far: r.f64(&format!("{p}.far"), d.far)?,
            ratio: r.f64(&format!("{p}.ratio"), d.ratio)?,
        })
    }

    pub fn build(&self) -> Result<std::sync::Arc<Grid>, crate::kernels::KernelError> {
        if self.far > self.x {
            Grid::graded(self.x, self.h, self.far, self.ratio)
        } else {
            Grid::uniform(self.x, self.h)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySettings {
    pub n_ref: Vec<i64>,
    pub m_max: i64,
    pub fit: FitKind,
    pub fit_m_min: i64,
    pub fit_m_max: i64,
    pub time: TimeGrid,
    /// Check `sampled_sup_amplitude ≤ ρ` per sample and `ρ(m, m) = 1`.
    pub amplitude_check: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetcheckSettings {
    pub instances: usize,
    pub l_max: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub fd_step: f64,
    pub eigen_samples: usize,
    pub eigen_l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSettings {
    pub grid: GridSpec,
    pub refine: bool,
    pub sweep_count: usize,
    pub sites: Vec<i64>,
    pub k_max: f64,
    pub dk: f64,
    pub plateau: f64,
    pub support: f64,
    pub s_max: usize,
    /// `ζ` for the `A(s)` table; taken from a power-law `d` when absent.
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbSettings {
    pub epsilon: f64,
    pub target: SequenceSpec,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub cases: Vec<(usize, usize)>,
    pub samples: usize,
    pub grid: GridSpec,
    pub panels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub decay: DecaySettings,
    pub detcheck: DetcheckSettings,
    pub kernel: KernelSettings,
    pub perturb: PerturbSettings,
    pub chain: ChainSettings,
    echo: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut r = Reader::parse(text)?;

        let dens = density(&mut r, "model.density")?;
        let a = sequence(&mut r, "model.a", 1.0)?;
        let c = sequence(&mut r, "model.c", 0.0)?;
        let d = sequence(&mut r, "model.d", 1.0)?;
        let l = r.usize("model.L", 50, 1)?;
        let seed = r.i64("model.seed", 1)?;
        if seed < 0 {
            return Err(bad("model.seed", "must be non-negative"));
        }
        let samples = r.usize("model.samples", 200, 1)?;
        let model = ModelConfig::new(dens, a, c, d, l, seed as u64, samples)
            .map_err(|e| bad("model", e.to_string()))?;
        let li = l as i64;

        let n_ref = r.i64_list("decay.n_ref", vec![0, 1])?;
        if n_ref.iter().any(|n| !(0..=1).contains(n)) {
            return Err(bad("decay.n_ref", "reference sites are 0 and 1"));
        }
        let m_max = r.i64("decay.m_max", 30.min(li - 1))?;
        if !(1..li).contains(&m_max) {
            return Err(bad("decay.m_max", format!("must lie in [1, L - 1] = [1, {}]", li - 1)));
        }
        let power_zeta = match &model.d {
            SequenceSpec::PowerLaw { zeta, .. } => Some(*zeta),
            _ => None,
        };
        let fit_name = r.string("decay.fit", if power_zeta.is_some() { "stretched" } else { "exponential" })?;
        let fit = match fit_name.as_str() {
            "exponential" => FitKind::Exponential,
            "stretched" => FitKind::Stretched { zeta: r.f64("decay.zeta", power_zeta.unwrap_or(0.25))? },
            other => return Err(bad("decay.fit", format!("unknown fit `{other}`"))),
        };
        let decay = DecaySettings {
            n_ref,
            m_max,
            fit,
            fit_m_min: r.i64("decay.fit_m_min", 5)?,
            fit_m_max: r.i64("decay.fit_m_max", m_max)?,
            time: TimeGrid {
                t_max: r.f64("decay.t_max", 1000.0)?,
                points: r.usize("decay.t_points", 10_000, 1)?,
            },
            amplitude_check: r.bool("decay.amplitude_check", false)?,
        };

        let detcheck = DetcheckSettings {
            instances: r.usize("detcheck.instances", 200, 1)?,
            l_max: r.usize("detcheck.L_max", 8, 1)?,
            x_min: r.f64("detcheck.x_min", 0.1)?,
            x_max: r.f64("detcheck.x_max", 10.0)?,
            a_min: r.f64("detcheck.a_min", 0.5)?,
            a_max: r.f64("detcheck.a_max", 2.0)?,
            fd_step: r.f64("detcheck.fd_step", 1e-5)?,
            eigen_samples: r.usize("detcheck.eigen_samples", 100, 1)?,
            eigen_l: r.usize("detcheck.eigen_L", 6, 1)?,
        };
        if !(detcheck.x_min > 0.0 && detcheck.x_max >= detcheck.x_min) {
            return Err(bad("detcheck.x_min", "need 0 < x_min ≤ x_max"));
        }
        if !(detcheck.a_min > 0.0 && detcheck.a_max >= detcheck.a_min) {
            return Err(bad("detcheck.a_min", "need 0 < a_min ≤ a_max"));
        }

        let kernel = KernelSettings {
            grid: GridSpec::read(&mut r, "kernel.grid", GridSpec { x: 20.0, h: 0.02, far: 1e5, ratio: 1.05 })?,
            refine: r.bool("kernel.refine", false)?,
            sweep_count: r.usize("kernel.sweep.count", 5, 1)?,
            sites: r.i64_list("kernel.sweep.sites", vec![1, 2, 3])?,
            k_max: r.f64("kernel.fourier.k_max", 50.0)?,
            dk: r.f64("kernel.fourier.dk", 0.01)?,
            plateau: r.f64("kernel.cutoff.plateau", 1.0)?,
            support: r.f64("kernel.cutoff.support", 2.0)?,
            s_max: r.usize("kernel.a_table.s_max", 20, 1)?,
            zeta: match power_zeta {
                Some(z) => Some(r.f64("kernel.a_table.zeta", z)?),
                None => r.opt_f64("kernel.a_table.zeta")?,
            },
        };
        if kernel.sites.iter().any(|&n| n < 1) {
            return Err(bad("kernel.sweep.sites", "sites must be positive"));
        }

        let epsilon = r.f64("perturb.epsilon", 0.01)?;
        let perturb = PerturbSettings {
            epsilon,
            target: sequence(&mut r, "perturb.b", 0.0)?,
            half_width: r.f64("perturb.half_width", epsilon / 2.0)?,
        };

        let ls = r.i64_list("chain.L", vec![1, 2])?;
        let ms = r.i64_list("chain.m", vec![1, 1])?;
        if ls.len() != ms.len() {
            return Err(bad("chain.m", "chain.L and chain.m must have equal length"));
        }
        let mut cases = Vec::new();
        for (l, m) in ls.iter().zip(&ms) {
            if !(1..=2).contains(l) || *m < 1 || m > l {
                return Err(bad("chain.L", format!("case (L={l}, m={m}) needs L ∈ {{1, 2}}, 1 ≤ m ≤ L")));
            }
            cases.push((*l as usize, *m as usize));
        }
        let chain = ChainSettings {
            cases,
            samples: r.usize("chain.samples", 10_000, 1)?,
            grid: GridSpec::read(&mut r, "chain.grid", GridSpec { x: 10.0, h: 0.05, far: 1e4, ratio: 1.1 })?,
            panels: r.usize("chain.panels", 16, 1)?,
        };

        let echo = r.finish()?;
        Ok(Self { model, decay, detcheck, kernel, perturb, chain, echo })
    }

    /// Replaces the master seed, in the model and in the echo.
    pub fn with_seed(mut self, seed: u64) -> Result<Self, ConfigError> {
        let s = i64::try_from(seed).map_err(|_| bad("model.seed", "must fit in a signed 64-bit integer"))?;
        self.model = self.model.with_seed(seed);
        self.echo.insert("model.seed".into(), Value::Integer(s));
        Ok(self)
    }

    /// Forces the grid-doubling pass of the kernel certificates.
    pub fn with_refine(mut self) -> Self {
        self.kernel.refine = true;
        self.echo.insert("kernel.refine".into(), Value::Boolean(true));
        self
    }

    /// `key = value` lines, sorted by key, for every effective setting.
    pub fn echo(&self) -> String {
        self.echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(&self.echo())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_the_anderson_baseline() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.model.l, 50);
        assert_eq!(cfg.model.samples, 200);
        assert_eq!(cfg.model.density, SingleSiteDensity::uniform(0.0, 1.0).unwrap());
        assert_eq!(cfg.decay.fit, FitKind::Exponential);
        assert_eq!(cfg.decay.m_max, 30);
        assert_eq!(cfg.chain.cases, vec![(1, 1), (2, 1)]);
    }

    #[test]
    fn echo_round_trips() {
        let text = "model.L = 12\nmodel.d.kind = \"power-law\"\nmodel.d.zeta = 0.25\n[decay]\nm_max = 8\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.decay.fit, FitKind::Stretched { zeta: 0.25 });
        let again = ExperimentConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.fingerprint(), cfg.fingerprint());
        let seeded = cfg.clone().with_seed(99).unwrap();
        assert_ne!(seeded.fingerprint(), cfg.fingerprint());
        assert_eq!(ExperimentConfig::parse(&seeded.echo()).unwrap().model.master_seed, 99);
    }

    #[test]
    fn unknown_and_malformed_keys_are_named() {
        assert_eq!(
            ExperimentConfig::parse("model.Ll = 3").unwrap_err(),
            ConfigError::UnknownKey("model.Ll".into())
        );
        // a key that exists only for another kind is rejected too
        assert_eq!(
            ExperimentConfig::parse("model.a.values = [1.0]").unwrap_err(),
            ConfigError::UnknownKey("model.a.values".into())
        );
        let e = ExperimentConfig::parse("model.L = \"ten\"").unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { ref key, .. } if key == "model.L"));
        assert!(matches!(ExperimentConfig::parse("model.L = ").unwrap_err(), ConfigError::Syntax(_)));
        assert!(ExperimentConfig::parse("decay.m_max = 60").is_err());
        assert!(ExperimentConfig::parse("model.a.value = 0.0").is_err());
        assert!(ExperimentConfig::parse("chain.L = [3]\nchain.m = [1]").is_err());
        assert!(ExperimentConfig::parse("manifest.fingerprint = \"x\"").is_ok());
    }
}
