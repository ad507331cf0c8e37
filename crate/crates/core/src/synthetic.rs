//! Synthetic saturating-exponential learning curves.
//!
//! Curve `i` follows `a_max_i * (1 - exp(-t / lambda_i)) + noise`, clipped to
//! `[0, 1]`, with `a_max_i` and `lambda_i` drawn uniformly from the configured
//! ranges. Everything is drawn from one ChaCha stream seeded by `master_seed`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curve::{Curve, CurveDataset};
use crate::error::{Error, Result};

/// Seed of the frozen strong-signal benchmark.
pub const STRONG_SIGNAL_SEED: u64 = 20_190_609;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub a_max_min: f64,
    pub a_max_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            a_max_min: 0.3,
            a_max_max: 0.95,
            lambda_min: 1.0,
            lambda_max: 20.0,
            noise_sd: 0.01,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_max_min,
            self.a_max_max,
            self.lambda_min,
            self.lambda_max,
            self.noise_sd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("synthetic parameters must be finite"));
        }
        if self.a_max_min > self.a_max_max {
            return Err(Error::param("a_max bounds inverted"));
        }
        if self.a_max_min < 0.0 || self.a_max_max > 1.0 {
            return Err(Error::param("a_max bounds must lie in [0, 1]"));
        }
        if self.lambda_min > self.lambda_max {
            return Err(Error::param("lambda bounds inverted"));
        }
        if self.lambda_min <= 0.0 {
            return Err(Error::param("lambda must be positive"));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::param("noise_sd must be non-negative"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn generate_synthetic(
    n: usize,
    horizon: usize,
    params: &SyntheticParams,
    master_seed: u64,
) -> Result<CurveDataset> {
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let noise = (params.noise_sd > 0.0)
        .then(|| Normal::new(0.0, params.noise_sd).map_err(|e| Error::param(e.to_string())))
        .transpose()?;
    let width = n.to_string().len().max(4);
    let curves = (0..n)
        .map(|i| {
            let a_max = uniform(&mut rng, params.a_max_min, params.a_max_max);
            let lambda = uniform(&mut rng, params.lambda_min, params.lambda_max);
            let values = (1..=horizon)
                .map(|t| {
                    let clean = a_max * (1.0 - (-(t as f64) / lambda).exp());
                    let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                    (clean + eps).clamp(0.0, 1.0)
                })
                .collect();
            Curve {
                id: format!("c{i:0width$}"),
                values,
                costs: None,
            }
        })
        .collect();
    CurveDataset::new(curves)
}

/// The strong-signal benchmark: 200 curves of length 50 at the default
/// parameters and [`STRONG_SIGNAL_SEED`].
pub fn strong_signal_benchmark() -> CurveDataset {
    generate_synthetic(200, 50, &SyntheticParams::default(), STRONG_SIGNAL_SEED)
        .expect("valid benchmark parameters")
}
