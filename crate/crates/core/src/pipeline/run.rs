use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::GruCell;
use crate::detector::{
    detect_enhanced, detections, oracle_detect_visible, BoundingBox, CorruptionConfig, Detection, DetectionHead,
    DetectorError, DetectorOutput, PixelBasis,
};
use crate::embedding::{make_embedding_table, ClassEmbeddingTable};
use crate::evaluation::{ap50, recall_task, ApReport, EvalError, GroundTruthBox, RecallReport, RecallTaskConfig};
use crate::features::DepthMap;
use crate::geometry::{extrinsics_from_pose, CameraIntrinsics, CellIndex, Extrinsics, GridGeometry};
use crate::linalg::{weighted_ridge_least_squares, Matrix};
use crate::memories::{
    ExplicitObjectMemory, ExternalMemory, ImplicitObjectMemory, ImplicitPixelMemory, MemoryVariant, NoMemory,
};
use crate::memory::{EnhancementParams, MemoryError, View};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, Stream};
use crate::simulator::{
    apply_sensor_noise, generate_episodes, generate_scene, CameraRig, Episode, NoiseConfig, Scene,
    SimError,
};

use super::{MemoryPolicy, ProjectionMode, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

/// A scene, its rendered episodes and the class embedding table.
#[derive(Debug, Clone)]
pub struct World {
    pub scene: Scene,
    pub episodes: Vec<Episode>,
    pub table: ClassEmbeddingTable<f64>,
}

impl World {
    /// Scene and episodes for `cfg`; a table of `scene.class_count` seeded
    /// embeddings unless one is supplied.
    pub fn build(cfg: &RunConfig, table: Option<ClassEmbeddingTable<f64>>) -> Result<Self, RunError> {
        Self::build_with_seed(cfg, cfg.seed, table)
    }

    fn build_with_seed(
        cfg: &RunConfig,
        seed: u64,
        table: Option<ClassEmbeddingTable<f64>>,
    ) -> Result<Self, RunError> {
        let scene = generate_scene(derive_seed(seed, Stream::Scene, 0), &cfg.scene)?;
        let episodes = generate_episodes(&scene, &cfg.episodes, &cfg.rig, derive_seed(seed, Stream::Trajectory, 0))?;
        let table = match table {
            Some(t) => t,
            None => make_embedding_table(
                cfg.scene.class_count,
                cfg.features.object_dim,
                derive_seed(seed, Stream::Embedding, 0),
            ),
        };
        if table.len() < cfg.scene.class_count {
            return Err(RunError::Config(format!(
                "embedding table has {} classes, the scene uses {}",
                table.len(),
                cfg.scene.class_count
            )));
        }
        if table.dim() != cfg.features.object_dim {
            return Err(RunError::Config(format!(
                "embedding dim {} differs from object_dim {}",
                table.dim(),
                cfg.features.object_dim
            )));
        }
        Ok(Self { scene, episodes, table })
    }

    pub fn frame_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

/// Detections and ground truth of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub episode: usize,
    pub step: usize,
    pub detections: Vec<Detection>,
    pub truth: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: MemoryVariant,
    pub policy: MemoryPolicy,
    pub projection: ProjectionMode,
    pub lambda: f64,
    pub tau_s: f64,
    pub tau_o: f64,
    pub noise_scale: f64,
    pub episodes: usize,
    pub frames: usize,
    pub class_names: Vec<String>,
    pub ap: ApReport,
    pub recall: RecallReport,
    /// Fraction of proposals whose best class is the true class.
    pub classification_accuracy: f64,
}

pub struct RunOutput<T> {
    pub report: RunReport,
    pub frames: Vec<FrameRecord>,
    pub memory: Box<dyn ExternalMemory<T>>,
}

struct Stack<T> {
    table: ClassEmbeddingTable<T>,
    head: DetectionHead<T>,
    intrinsics: CameraIntrinsics<T>,
    corruption: CorruptionConfig,
    geometry: GridGeometry<T>,
}

impl<T: Scalar> Stack<T> {
    fn new(cfg: &RunConfig, world: &World) -> Result<Self, RunError> {
        let table: ClassEmbeddingTable<T> = world.table.cast();
        let basis = PixelBasis::new(
            &table,
            cfg.features.pixel_dim,
            derive_seed(cfg.seed, Stream::PixelBasis, 0),
        )?;
        let corruption = CorruptionConfig {
            seed: derive_seed(cfg.seed, Stream::Detector, cfg.corruption.seed),
            ..cfg.corruption
        };
        Ok(Self {
            table,
            head: DetectionHead::new(basis),
            intrinsics: cfg.rig.feature_intrinsics().cast(),
            corruption,
            geometry: world.scene.grid_geometry(cfg.memory.cell_size).cast(),
        })
    }

    fn detect(&self, world: &World, rig: &CameraRig, episode: usize, step: usize, frame_index: u64) -> Result<DetectorOutput<T>, RunError> {
        let frame = &world.episodes[episode].frames[step];
        let raw = oracle_detect_visible(&frame.truth, rig, &self.table, self.head.basis(), &self.corruption, frame_index);
        Ok(self.head.base(&raw)?)
    }
}

fn sensed_view<T: Scalar>(
    rig: &CameraRig,
    noise: &NoiseConfig,
    pose: &crate::geometry::Pose<f64>,
    depth: &DepthMap<f64>,
    frame_index: u64,
) -> (DepthMap<T>, Extrinsics<T>) {
    let (pose, depth) = apply_sensor_noise(pose, depth, noise, frame_index);
    let depth = depth.resample_nearest(rig.stride).cast();
    let extrinsics = extrinsics_from_pose(&pose.cast(), T::lit(rig.mount_height), T::lit(rig.mount_pitch));
    (depth, extrinsics)
}

/// Empty memory of the configured variant with a seeded projection.
pub fn build_memory<T: Scalar>(
    cfg: &RunConfig,
    geometry: GridGeometry<T>,
    table: &ClassEmbeddingTable<T>,
) -> Box<dyn ExternalMemory<T>> {
    let m = &cfg.memory;
    let lambda = T::lit(m.lambda());
    let f = &cfg.features;
    let proj_seed = derive_seed(cfg.seed, Stream::Projection, 0);
    match m.variant {
        MemoryVariant::None => Box::new(NoMemory),
        MemoryVariant::ImplicitObject => Box::new(ImplicitObjectMemory::new(
            geometry,
            table.clone(),
            EnhancementParams::seeded(table.dim(), f.pixel_dim, proj_seed, lambda),
            T::lit(m.tau_s),
        )),
        MemoryVariant::ExplicitObject => Box::new(ExplicitObjectMemory::new(
            geometry,
            table.clone(),
            EnhancementParams::seeded(table.dim(), f.pixel_dim, proj_seed, lambda),
            T::lit(m.tau_s),
            T::lit(m.tau_o),
            m.occupancy_ratio,
        )),
        MemoryVariant::ImplicitPixel => Box::new(ImplicitPixelMemory::new(
            geometry,
            GruCell::seeded(f.pixel_dim, f.hidden_dim, derive_seed(cfg.seed, Stream::Recurrent, 0)),
            EnhancementParams::seeded(f.hidden_dim, f.pixel_dim, proj_seed, T::lit(m.lambda())),
        )),
    }
}

/// Fits the memory's projection by ridge regression.
///
/// A calibration scene (separate seed, `calibration_objects` objects,
/// noise-free sensing, persistent memory) is played through the memory.
/// Before each write, every pixel whose ray reaches a cell with a memory
/// feature contributes the pair (memory feature, base pixel feature); pairs
/// sharing a cell within a frame are pooled into one weighted sample. The
/// memory is reset afterwards. Returns `None` when the memory has no
/// projection or no pairs were collected.
pub fn fit_projection<T: Scalar>(
    cfg: &RunConfig,
    table: &ClassEmbeddingTable<f64>,
    memory: &mut dyn ExternalMemory<T>,
) -> Result<Option<Matrix<T>>, RunError> {
    let (Some(params), Some(geometry)) = (memory.params(), memory.geometry().cloned()) else {
        return Ok(None);
    };
    let (x_dim, y_dim) = (params.memory_dim(), params.pixel_dim());
    let cal_seed = derive_seed(cfg.seed, Stream::Calibration, 0);
    let mut cal_cfg = cfg.clone();
    cal_cfg.episodes.count = cfg.memory.projection.calibration_episodes;
    cal_cfg.scene.object_count = cfg.memory.projection.calibration_objects;
    cal_cfg.corruption.seed = cal_seed;
    let world = World::build_with_seed(&cal_cfg, cal_seed, Some(table.clone()))?;
    let stack = Stack::<T>::new(&cal_cfg, &world)?;
    let noise_free = NoiseConfig {
        scale: 0.0,
        ..cfg.noise
    };

    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut index = 0u64;
    memory.reset();
    for (e, ep) in world.episodes.iter().enumerate() {
        for (s, frame) in ep.frames.iter().enumerate() {
            let base = stack.detect(&world, &cfg.rig, e, s, index)?;
            let (depth, extrinsics) = sensed_view::<T>(&cfg.rig, &noise_free, &frame.pose, &frame.depth, index);
            let view = View {
                depth: &depth,
                intrinsics: &stack.intrinsics,
                extrinsics: &extrinsics,
                max_depth: T::lit(cfg.rig.max_depth),
            };
            let mut pooled: BTreeMap<usize, (CellIndex, Vec<f64>, usize)> = BTreeMap::new();
            for i in 0..view.height() {
                for j in 0..view.width() {
                    let Some(cell) = view.cell_of(i, j, &geometry) else {
                        continue;
                    };
                    let entry = pooled
                        .entry(geometry.flat(cell))
                        .or_insert_with(|| (cell, vec![0.0; y_dim], 0));
                    for (acc, v) in entry.1.iter_mut().zip(base.pixel_features.pixel(i, j)) {
                        *acc += v.to_f64_lossless();
                    }
                    entry.2 += 1;
                }
            }
            for (cell, sum, n) in pooled.into_values() {
                if let Some(m) = memory.cell_feature(cell) {
                    xs.push(m.iter().map(|v| v.to_f64_lossless()).collect::<Vec<_>>());
                    ys.push(sum.into_iter().map(|v| v / n as f64).collect::<Vec<_>>());
                    ws.push(n as f64);
                }
            }
            memory.write(&base, &view)?;
            index += 1;
        }
    }
    memory.reset();
    if xs.is_empty() {
        return Ok(None);
    }
    Ok(
        weighted_ridge_least_squares(&xs, &ys, Some(&ws), x_dim, y_dim, cfg.memory.projection.ridge)
            .map(|w| w.cast()),
    )
}

/// The projection a run of `cfg` in `world` uses when it is fitted; `None`
/// when the configuration keeps the seeded projection.
pub fn fitted_projection<T: Scalar>(cfg: &RunConfig, world: &World) -> Result<Option<Matrix<T>>, RunError> {
    if cfg.memory.projection.mode != ProjectionMode::Fitted || cfg.memory.lambda() == 0.0 {
        return Ok(None);
    }
    let stack = Stack::<T>::new(cfg, world)?;
    let mut memory = build_memory(cfg, stack.geometry, &stack.table);
    fit_projection(cfg, &world.table, memory.as_mut())
}

/// Generates the world for `cfg` and runs it.
pub fn run<T: Scalar>(cfg: &RunConfig) -> Result<RunOutput<T>, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let world = World::build(cfg, None)?;
    run_in_world(cfg, &world)
}

/// Runs the configured memory over the first `cfg.episodes.count` episodes of
/// `world`.
pub fn run_in_world<T: Scalar>(cfg: &RunConfig, world: &World) -> Result<RunOutput<T>, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let projection = fitted_projection(cfg, world)?;
    run_with_projection(cfg, world, projection)
}

/// [`run_in_world`] with an already fitted projection (or the seeded one
/// when `projection` is `None`).
pub fn run_with_projection<T: Scalar>(
    cfg: &RunConfig,
    world: &World,
    projection: Option<Matrix<T>>,
) -> Result<RunOutput<T>, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    if cfg.episodes.count > world.episodes.len() {
        return Err(RunError::Config(format!(
            "{} episodes requested, the world has {}",
            cfg.episodes.count,
            world.episodes.len()
        )));
    }
    let stack = Stack::<T>::new(cfg, world)?;
    let mut memory = build_memory(cfg, stack.geometry, &stack.table);
    if let (Some(w), Some(p)) = (projection, memory.params_mut()) {
        if (w.rows(), w.cols()) != (p.memory_dim(), p.pixel_dim()) {
            return Err(RunError::Config("projection shape does not match the memory".into()));
        }
        p.projection = w;
    }
    let noise = NoiseConfig {
        seed: derive_seed(cfg.seed, Stream::SensorNoise, cfg.noise.seed),
        ..cfg.noise
    };

    let mut frames = Vec::with_capacity(world.frame_count());
    let (mut correct, mut proposals) = (0usize, 0usize);
    let mut index = 0u64;
    for (e, ep) in world.episodes.iter().take(cfg.episodes.count).enumerate() {
        for (s, frame) in ep.frames.iter().enumerate() {
            let base = stack.detect(world, &cfg.rig, e, s, index)?;
            let (depth, extrinsics) = sensed_view::<T>(&cfg.rig, &noise, &frame.pose, &frame.depth, index);
            let view = View {
                depth: &depth,
                intrinsics: &stack.intrinsics,
                extrinsics: &extrinsics,
                max_depth: T::lit(cfg.rig.max_depth),
            };
            let enhanced = detect_enhanced(&base, &memory, &view, &stack.head)?;
            memory.write(&base, &view)?;

            let dets = detections(&enhanced, &stack.table);
            let truth: Vec<GroundTruthBox> = frame
                .truth
                .iter()
                .map(|v| GroundTruthBox {
                    class: v.class,
                    bbox: v.bbox,
                })
                .collect();
            for d in &dets {
                proposals += 1;
                correct += truth.iter().any(|g| same_box(&g.bbox, &d.bbox) && g.class == d.class) as usize;
            }
            frames.push(FrameRecord {
                episode: e,
                step: s,
                detections: dets,
                truth,
            });
            index += 1;
        }
        if cfg.memory.policy == MemoryPolicy::ResetPerEpisode {
            memory.reset();
        }
    }

    let dets: Vec<Vec<Detection>> = frames.iter().map(|f| f.detections.clone()).collect();
    let truth: Vec<Vec<GroundTruthBox>> = frames.iter().map(|f| f.truth.clone()).collect();
    let recall_cfg = RecallTaskConfig {
        episode_len: cfg.episodes.length,
        ..cfg.recall
    };
    let recall = recall_task(&dets, &truth, &recall_cfg, stack.table.len())?;
    let report = RunReport {
        variant: cfg.memory.variant,
        policy: cfg.memory.policy,
        projection: cfg.memory.projection.mode,
        lambda: cfg.memory.lambda(),
        tau_s: cfg.memory.tau_s,
        tau_o: cfg.memory.tau_o,
        noise_scale: cfg.noise.scale,
        episodes: cfg.episodes.count,
        frames: frames.len(),
        class_names: (0..stack.table.len()).map(|c| stack.table.name(c).to_string()).collect(),
        ap: ap50(&dets, &truth),
        recall,
        classification_accuracy: if proposals == 0 {
            0.0
        } else {
            correct as f64 / proposals as f64
        },
    };
    Ok(RunOutput { report, frames, memory })
}

fn same_box(a: &BoundingBox, b: &BoundingBox) -> bool {
    a == b
}
