use serde::{Deserialize, Serialize};

use crate::baselines::OccupancyRatio;
use crate::detector::CorruptionConfig;
use crate::evaluation::RecallTaskConfig;
use crate::memories::MemoryVariant;
use crate::simulator::{CameraRig, EpisodeParams, NoiseConfig, SceneParams};

/// Whether memory survives episode boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryPolicy {
    #[default]
    Persist,
    ResetPerEpisode,
}

impl MemoryPolicy {
    pub fn name(self) -> &'static str {
        match self {
            MemoryPolicy::Persist => "persist",
            MemoryPolicy::ResetPerEpisode => "reset-per-episode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// Random matrix with orthonormal columns.
    Seeded,
    /// Ridge regression of co-located pixel features on memory features over
    /// calibration episodes in a separate scene.
    #[default]
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub mode: ProjectionMode,
    pub calibration_episodes: usize,
    /// Object count of the calibration scene.
    pub calibration_objects: usize,
    /// Ridge weight relative to the mean diagonal of `XᵀX`.
    pub ridge: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            mode: ProjectionMode::Fitted,
            calibration_episodes: 40,
            calibration_objects: 40,
            ridge: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub variant: MemoryVariant,
    /// Enhancement weight; the variant's default when absent.
    pub lambda: Option<f64>,
    pub tau_s: f64,
    pub tau_o: f64,
    pub occupancy_ratio: OccupancyRatio,
    pub cell_size: f64,
    pub policy: MemoryPolicy,
    pub projection: ProjectionConfig,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            variant: MemoryVariant::ImplicitObject,
            lambda: None,
            tau_s: 0.3,
            tau_o: 0.4,
            occupancy_ratio: OccupancyRatio::RawNorm,
            cell_size: 0.2,
            policy: MemoryPolicy::Persist,
            projection: ProjectionConfig::default(),
        }
    }
}

impl MemoryConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| self.variant.default_lambda())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Object feature dimension `d2`.
    pub object_dim: usize,
    /// Pixel feature dimension `d1`.
    pub pixel_dim: usize,
    /// Recurrent state dimension `d3` of the pixel memory.
    pub hidden_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            object_dim: 512,
            pixel_dim: 256,
            hidden_dim: 256,
        }
    }
}

/// Everything a run depends on. Sub-config seeds are mixed with `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneParams,
    pub episodes: EpisodeParams,
    pub rig: CameraRig,
    pub features: FeatureConfig,
    pub corruption: CorruptionConfig,
    pub noise: NoiseConfig,
    pub memory: MemoryConfig,
    /// `episode_len` is replaced by the episode length at run time.
    pub recall: RecallTaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneParams::default(),
            episodes: EpisodeParams::default(),
            rig: CameraRig::default(),
            features: FeatureConfig::default(),
            corruption: CorruptionConfig {
                feature_noise_sigma: 0.5,
                dropout_prob: 0.2,
                misclass_prob: 0.0,
                objectness_range: [0.5, 1.0],
                seed: 0,
            },
            noise: NoiseConfig::default(),
            memory: MemoryConfig::default(),
            recall: RecallTaskConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.rig.validate().map_err(|e| e.to_string())?;
        self.corruption.validate().map_err(|e| e.to_string())?;
        self.noise.validate().map_err(|e| e.to_string())?;
        let m = &self.memory;
        if !(0.0..=1.0).contains(&m.tau_s) {
            return Err("tau_s must lie in [0, 1]".into());
        }
        if !(m.tau_o >= 0.0 && m.tau_o.is_finite()) {
            return Err("tau_o must be non-negative".into());
        }
        if !(m.lambda() >= 0.0 && m.lambda().is_finite()) {
            return Err("lambda must be non-negative".into());
        }
        if !(m.cell_size > 0.0) {
            return Err("cell_size must be positive".into());
        }
        let f = &self.features;
        if f.pixel_dim == 0 || f.pixel_dim > f.object_dim || f.hidden_dim == 0 {
            return Err("need 0 < pixel_dim <= object_dim and hidden_dim > 0".into());
        }
        if self.scene.class_count > f.pixel_dim {
            return Err("class_count must not exceed pixel_dim".into());
        }
        if self.episodes.length == 0 {
            return Err("episode length must be positive".into());
        }
        if self.recall.consecutive_frames == 0 {
            return Err("recall.consecutive_frames must be positive".into());
        }
        Ok(())
    }
}
