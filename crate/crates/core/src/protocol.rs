//! Diffusion-training protocol utilities: EDM noise levels and condition
//! dropout.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-normal noise-level distribution, `ln sigma ~ N(p_mean, p_std^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDistribution {
    pub p_mean: f64,
    pub p_std: f64,
}

impl Default for NoiseDistribution {
    fn default() -> Self {
        Self {
            p_mean: 1.5,
            p_std: 2.0,
        }
    }
}

impl NoiseDistribution {
    /// The smaller distribution of the base video model.
    pub const PRETRAINED: NoiseDistribution = NoiseDistribution {
        p_mean: 0.7,
        p_std: 1.6,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.p_mean.is_finite() || !self.p_std.is_finite() || self.p_std < 0.0 {
            return Err(Error::config("noise distribution needs finite p_mean and p_std >= 0"));
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        self.p_mean.exp()
    }
}

pub const DEFAULT_DROPOUT: f64 = 0.2;

pub fn sample_sigma<R: Rng + ?Sized>(dist: &NoiseDistribution, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (dist.p_mean + dist.p_std * z).exp()
}

/// Independent drop flags for the latent and the embedding condition.
pub fn sample_dropout<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<(bool, bool)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("dropout probability {p} outside [0, 1]")));
    }
    Ok((rng.random_bool(p), rng.random_bool(p)))
}
