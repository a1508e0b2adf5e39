use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::OrbitConfig;
use crate::grid::{Aabb, DEFAULT_N_INIT, DEFAULT_RESOLUTION};
use crate::image::{Rgb, WHITE};
use crate::mesh::{RefineConfig, DEFAULT_SMOOTH_ITERS};
use crate::optim::ReconConfig;
use crate::synth::Perturbation;

/// Reads a JSON config; absent fields take their defaults, unknown ones are
/// rejected.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()).at(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub orbit: OrbitConfig,
    pub background: Rgb,
    /// Absent means clean renders.
    pub perturbation: Option<Perturbation>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            orbit: OrbitConfig::default(),
            background: WHITE,
            perturbation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarveConfig {
    pub resolution: usize,
    pub aabb: Aabb,
    pub n_init: usize,
    pub smooth_iters: usize,
    pub seed: u64,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            aabb: Aabb::default(),
            n_init: DEFAULT_N_INIT,
            smooth_iters: DEFAULT_SMOOTH_ITERS,
            seed: 0,
        }
    }
}

impl CarveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::config("carve resolution must be at least 2"));
        }
        if self.n_init == 0 {
            return Err(Error::config("n_init must be positive"));
        }
        self.aabb.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub smooth_iters: usize,
    /// The carved grid is coarsened by this factor before extraction so
    /// vertices stay no denser than the view pixels.
    pub downsample: usize,
    pub refine: RefineConfig,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            smooth_iters: DEFAULT_SMOOTH_ITERS,
            downsample: 2,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Azimuth of the held-out camera in degrees, on the same orbit.
    pub held_out_azimuth_deg: f64,
    /// Points sampled on the true surface for the chamfer distance.
    pub surface_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            held_out_azimuth_deg: 10.0,
            surface_samples: 20000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub carve: CarveConfig,
    pub reconstruct: ReconConfig,
    pub mesh: MeshConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut synth = SynthConfig::default();
        synth.orbit.resolution = 128;
        Self {
            synth,
            carve: CarveConfig::default(),
            reconstruct: ReconConfig::default(),
            mesh: MeshConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// One seed for every random stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.carve.seed = seed;
        self.reconstruct.seed = seed;
        self.eval.seed = seed;
        if let Some(p) = self.synth.perturbation.as_mut() {
            p.seed = seed;
        }
        self
    }
}
