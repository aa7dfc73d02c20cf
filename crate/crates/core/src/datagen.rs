//! Seeded ground truth, filters, noise and observations.
//!
//! Every realization uses ChaCha8 seeded with the configured seed and the
//! realization index as stream number, so a batch reproduces exactly no
//! matter how it is scheduled.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{convolve, phi, ModelSpec, Regime, SignalInstance};

pub const FILTER_A: [f64; 3] = [0.1, 0.8, 0.1];
pub const FILTER_B: [f64; 3] = [0.2254, 0.3361, 0.4385];
pub const FILTER_C: [f64; 3] = [-0.1127, -0.0683, 0.8191];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Fixed(Vec<f64>),
    /// Fresh i.i.d. coefficients per realization: `U[0,1]` in the
    /// nonnegative regime, `U[-1,1]` otherwise.
    Random { len: usize },
}

impl FilterMode {
    /// Parses `a`, `b`, `c` or `random`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "a" => Ok(Self::Fixed(FILTER_A.to_vec())),
            "b" => Ok(Self::Fixed(FILTER_B.to_vec())),
            "c" => Ok(Self::Fixed(FILTER_C.to_vec())),
            "random" => Ok(Self::Random { len: 3 }),
            other => Err(Error::InvalidSpec(format!("unknown filter `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub sparsity_fraction: f64,
    pub regime: Regime,
    pub noise_sigma: f64,
    pub filter: FilterMode,
    pub rng_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            t: 20,
            sparsity_fraction: 0.1,
            regime: Regime::Nonnegative,
            noise_sigma: 0.15,
            filter: FilterMode::Random { len: 3 },
            rng_seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidSpec("T must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity_fraction) {
            return Err(Error::InvalidSpec("sparsity_fraction must lie in [0, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidSpec("noise_sigma must be finite and nonnegative".into()));
        }
        match &self.filter {
            FilterMode::Fixed(h) if h.is_empty() => Err(Error::InvalidSpec("empty filter".into())),
            FilterMode::Fixed(h) if self.regime == Regime::Nonnegative && h.iter().any(|v| *v < 0.0) => {
                Err(Error::InvalidRegime("negative filter taps".into()))
            }
            FilterMode::Random { len: 0 } => Err(Error::InvalidSpec("random filter length must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn n_nonzeros(&self) -> usize {
        (self.sparsity_fraction * self.t as f64).round() as usize
    }
}

/// Everything needed to replay one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub index: u64,
    pub spec: ModelSpec,
    pub signal: SignalInstance,
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws realization `index` of the configured experiment.
pub fn generate_instance(cfg: &GenConfig, index: u64) -> Result<(ModelSpec, SignalInstance)> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.rng_seed, index);
    let t = cfg.t;
    let real = cfg.regime == Regime::RealValued;

    let h = match &cfg.filter {
        FilterMode::Fixed(h) => h.clone(),
        FilterMode::Random { len } => {
            let lo = if real { -1.0 } else { 0.0 };
            (0..*len).map(|_| rng.random_range(lo..=1.0)).collect()
        }
    };

    let mut x_true = vec![0.0; t];
    for pos in sample(&mut rng, t, cfg.n_nonzeros()) {
        let a = rng.random_range(2.0 / 3.0..=1.0);
        x_true[pos] = if real && rng.random_bool(0.5) { -a } else { a };
    }

    let spec = ModelSpec::new(h, t, cfg.regime);
    let clean: Vec<f64> = convolve(&spec.h, &x_true).iter().map(|v| phi(*v, spec.chi)).collect();
    let d = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma checked");
        clean.iter().map(|c| c + noise.sample(&mut rng)).collect()
    } else {
        clean
    };
    Ok((
        spec,
        SignalInstance { x_true, d, noise_sigma: cfg.noise_sigma, rng_seed: cfg.rng_seed },
    ))
}
