//! The random Jacobi family `(Jφ)(n) = a(n)φ(n+1) + a(n-1)φ(n-1) + b(n)φ(n)`
//! with `b(n) = c(n) + η_n`, `η_n ~ r_n`, `r_n(x) = d_n⁻¹ r(x / d_n)`.

mod density;
mod sequence;

pub use density::{DensityShape, SingleSiteDensity, SiteDensity, MASS_TOLERANCE};
pub use sequence::SequenceSpec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("random stream produced a non-finite value")]
    CorruptStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub density: SingleSiteDensity,
    pub a: SequenceSpec,
    pub c: SequenceSpec,
    pub d: SequenceSpec,
    pub l: usize,
    pub master_seed: u64,
    pub samples: usize,
    delta: f64,
    a_sup: f64,
    c_sup: f64,
}

impl ModelConfig {
    pub fn new(
        density: SingleSiteDensity,
        a: SequenceSpec,
        c: SequenceSpec,
        d: SequenceSpec,
        l: usize,
        master_seed: u64,
        samples: usize,
    ) -> Result<Self, ModelError> {
        let (delta, a_sup) = a.validate_hopping()?;
        let c_sup = c.validate_background()?;
        d.validate_damping()?;
        if samples == 0 {
            return Err(ModelError::InvalidModel("sample count must be at least 1".into()));
        }
        Ok(Self { density, a, c, d, l, master_seed, samples, delta, a_sup, c_sup })
    }

    /// Anderson model: `a ≡ 1`, `c ≡ 0`, `d ≡ 1`.
    pub fn anderson(
        density: SingleSiteDensity,
        l: usize,
        master_seed: u64,
        samples: usize,
    ) -> Result<Self, ModelError> {
        Self::new(
            density,
            SequenceSpec::Constant(1.0),
            SequenceSpec::Constant(0.0),
            SequenceSpec::Constant(1.0),
            l,
            master_seed,
            samples,
        )
    }

    /// Same family with a different truncation.
    pub fn with_l(&self, l: usize) -> Self {
        Self { l, ..self.clone() }
    }

    pub fn with_samples(&self, samples: usize) -> Result<Self, ModelError> {
        Self::new(
            self.density.clone(),
            self.a.clone(),
            self.c.clone(),
            self.d.clone(),
            self.l,
            self.master_seed,
            samples,
        )
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self { master_seed, ..self.clone() }
    }

    /// SHA-256 of the full parameter set.
    pub fn fingerprint(&self) -> String {
        crate::parallel::sha256_hex(&format!("{self:?}"))
    }

    /// `δ = inf a(n)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `‖a‖_∞`.
    pub fn a_sup(&self) -> f64 {
        self.a_sup
    }

    /// `‖c‖_∞`.
    pub fn c_sup(&self) -> f64 {
        self.c_sup
    }

    /// `M`.
    pub fn half_width(&self) -> f64 {
        self.density.half_width()
    }

    /// `M_n = d_n M`.
    pub fn site_half_width(&self, n: i64) -> f64 {
        self.d.value(n) * self.half_width()
    }

    /// `Σ₀ = [-(2‖a‖_∞ + M + ‖c‖_∞), 2‖a‖_∞ + M + ‖c‖_∞]`.
    pub fn spectral_window(&self) -> SpectralWindow {
        let r = 2.0 * self.a_sup + self.half_width() + self.c_sup;
        SpectralWindow { lo: -r, hi: r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralWindow {
    pub lo: f64,
    pub hi: f64,
}

impl SpectralWindow {
    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn spectral_window(config: &ModelConfig) -> SpectralWindow {
    config.spectral_window()
}

/// One realization on the window `[-L, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiSample {
    pub l: usize,
    /// `b(n)` at index `n + L`.
    pub b: Vec<f64>,
    /// `a(n)` for `n = -L..L-1` at index `n + L`.
    pub a: Vec<f64>,
    pub sample_index: u64,
    pub master_seed: u64,
}

impl JacobiSample {
    pub fn b_at(&self, n: i64) -> f64 {
        self.b[(n + self.l as i64) as usize]
    }

    pub fn a_at(&self, n: i64) -> f64 {
        self.a[(n + self.l as i64) as usize]
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        -(self.l as i64)..=self.l as i64
    }
}

/// Generator for site `n` of sample `sample_index`: the stream id selects the
/// sample and the word position selects the site, so a draw depends only on
/// `(master_seed, sample_index, n)`.
pub fn site_rng(master_seed: u64, sample_index: u64, n: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index);
    let zigzag = ((n << 1) ^ (n >> 63)) as u64 as u128;
    rng.set_word_pos(2 * zigzag);
    rng
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn unit_uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws `η ~ r_d` with `r_d(x) = d⁻¹ r(x / d)` by inverse CDF.
pub fn sample_site<R: RngCore>(
    density: &SingleSiteDensity,
    d: f64,
    rng: &mut R,
) -> Result<f64, ModelError> {
    let u = unit_uniform(rng);
    let eta = d * density.inverse_cdf(u);
    if eta.is_finite() {
        Ok(eta)
    } else {
        Err(ModelError::CorruptStream)
    }
}

pub fn sample_operator(config: &ModelConfig, sample_index: u64) -> Result<JacobiSample, ModelError> {
    if sample_index >= config.samples as u64 {
        return Err(ModelError::InvalidModel(format!(
            "sample index {sample_index} outside [0, {})",
            config.samples
        )));
    }
    let l = config.l as i64;
    let mut b = Vec::with_capacity(2 * config.l + 1);
    for n in -l..=l {
        let mut rng = site_rng(config.master_seed, sample_index, n);
        let eta = sample_site(&config.density, config.d.value(n), &mut rng)?;
        b.push(config.c.value(n) + eta);
    }
    let a = (-l..l).map(|n| config.a.value(n)).collect();
    Ok(JacobiSample { l: config.l, b, a, sample_index, master_seed: config.master_seed })
}
