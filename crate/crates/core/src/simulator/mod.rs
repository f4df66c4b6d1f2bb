//! Synthetic embodied data: box-world scenes, random-walk episodes, depth
//! rendering by ray casting, ground-truth extraction and sensor noise.

mod episodes;
mod pack;
mod render;

pub use episodes::{
    apply_sensor_noise, generate_episodes, plan_trajectories, render_episode, Episode, EpisodeParams, Frame,
    NoiseConfig,
};
pub use pack::{read_frame_pack, write_frame_pack, PackError, PACK_MAGIC, PACK_VERSION};
pub use render::{ground_truth, ray_box, render_depth, Aabb, Hit, Ray, VisibleObject};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, GridGeometry};
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("placement failed: {0}")]
    PlacementFailure(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Axis-aligned wall segment standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub thickness: f64,
    pub height: f64,
}

impl Wall {
    pub fn aabb(&self) -> Aabb {
        let half = self.thickness / 2.0;
        Aabb {
            min: [
                self.from[0].min(self.to[0]) - half,
                self.from[1].min(self.to[1]) - half,
                0.0,
            ],
            max: [
                self.from[0].max(self.to[0]) + half,
                self.from[1].max(self.to[1]) + half,
                self.height,
            ],
        }
    }
}

/// A classed box standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: usize,
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub height: f64,
}

impl SceneObject {
    pub fn aabb(&self) -> Aabb {
        Aabb {
            min: [
                self.center[0] - self.size[0] / 2.0,
                self.center[1] - self.size[1] / 2.0,
                0.0,
            ],
            max: [
                self.center[0] + self.size[0] / 2.0,
                self.center[1] + self.size[1] / 2.0,
                self.height,
            ],
        }
    }

    pub fn footprint(&self) -> Rect {
        let a = self.aabb();
        Rect {
            min: [a.min[0], a.min[1]],
            max: [a.max[0], a.max[1]],
        }
    }
}

/// Immutable box world: a floor, enclosing walls and classed objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub extent: Rect,
    pub walls: Vec<Wall>,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Memory grid over the scene extent, padded by one cell.
    pub fn grid_geometry(&self, cell_size: f64) -> GridGeometry<f64> {
        GridGeometry::covering(self.extent.min, self.extent.max, cell_size)
    }

    /// Classes present in the scene, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.objects.iter().map(|o| o.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let e = &self.extent;
        if !(e.max[0] > e.min[0] && e.max[1] > e.min[1]) {
            return Err(SimError::InvalidParams("empty scene extent".into()));
        }
        for (k, o) in self.objects.iter().enumerate() {
            let f = o.footprint();
            if !(o.size[0] > 0.0 && o.size[1] > 0.0 && o.height > 0.0) {
                return Err(SimError::InvalidParams(format!("object {k} has non-positive size")));
            }
            if !(e.contains(f.min) && e.contains(f.max)) {
                return Err(SimError::InvalidParams(format!("object {k} lies outside the extent")));
            }
        }
        Ok(())
    }
}

/// Camera model and mounting shared by rendering, detection and memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics<f64>,
    /// Mounting height above the robot origin, meters.
    pub mount_height: f64,
    /// Downward tilt, radians.
    pub mount_pitch: f64,
    /// Image pixels per feature-map pixel.
    pub stride: usize,
    /// Returns beyond this range are treated as invalid.
    pub max_depth: f64,
    /// Feature-map pixels an object needs to count as visible.
    pub min_pixels: usize,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 80.0,
                cy: 60.0,
                width: 160,
                height: 120,
            },
            mount_height: 1.25,
            mount_pitch: 0.0,
            stride: 4,
            max_depth: 10.0,
            min_pixels: 16,
        }
    }
}

impl CameraRig {
    pub fn feature_intrinsics(&self) -> CameraIntrinsics<f64> {
        self.intrinsics.downscale(self.stride)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.intrinsics
            .validate()
            .map_err(|e| SimError::InvalidParams(e.to_string()))?;
        if self.stride == 0 || !self.intrinsics.width.is_multiple_of(self.stride) || !self.intrinsics.height.is_multiple_of(self.stride) {
            return Err(SimError::InvalidParams("stride must divide the image size".into()));
        }
        if !(self.max_depth > 0.0) {
            return Err(SimError::InvalidParams("max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Width (x) and depth (y) of the floor, meters.
    pub extent: [f64; 2],
    pub object_count: usize,
    pub class_count: usize,
    pub min_footprint: f64,
    pub max_footprint: f64,
    pub min_height: f64,
    pub max_height: f64,
    pub wall_height: f64,
    pub wall_thickness: f64,
    /// Minimum free gap between objects and to the walls.
    pub clearance: f64,
    pub max_retries: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            extent: [20.0, 20.0],
            object_count: 12,
            class_count: 8,
            min_footprint: 0.5,
            max_footprint: 1.4,
            min_height: 0.4,
            max_height: 1.6,
            wall_height: 2.5,
            wall_thickness: 0.1,
            clearance: 0.6,
            max_retries: 10_000,
        }
    }
}

/// Seeded random scene: enclosing walls plus non-overlapping objects placed by
/// rejection sampling. Classes cycle through `0..class_count` before being
/// shuffled, so every class appears when there are enough objects.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene, SimError> {
    let [w, d] = params.extent;
    if !(w > 0.0 && d > 0.0) {
        return Err(SimError::InvalidParams("extent must be positive".into()));
    }
    if params.object_count > 0 && params.class_count == 0 {
        return Err(SimError::InvalidParams("class_count must be positive".into()));
    }
    if !(params.min_footprint > 0.0 && params.max_footprint >= params.min_footprint) {
        return Err(SimError::InvalidParams("bad footprint range".into()));
    }
    if !(params.min_height > 0.0 && params.max_height >= params.min_height) {
        return Err(SimError::InvalidParams("bad height range".into()));
    }
    let extent = Rect {
        min: [0.0, 0.0],
        max: [w, d],
    };
    let wall = |from, to| Wall {
        from,
        to,
        thickness: params.wall_thickness,
        height: params.wall_height,
    };
    let walls = vec![
        wall([0.0, 0.0], [w, 0.0]),
        wall([0.0, d], [w, d]),
        wall([0.0, 0.0], [0.0, d]),
        wall([w, 0.0], [w, d]),
    ];

    let mut rng = rng_for(seed, Stream::Scene, 0);
    let mut classes: Vec<usize> = (0..params.object_count)
        .map(|k| k % params.class_count.max(1))
        .collect();
    classes.shuffle(&mut rng);

    let margin = params.clearance + params.wall_thickness / 2.0;
    let mut objects: Vec<SceneObject> = Vec::with_capacity(params.object_count);
    for (k, &class) in classes.iter().enumerate() {
        let mut placed = false;
        for _ in 0..params.max_retries.max(1) {
            let sx = rng.gen_range(params.min_footprint..=params.max_footprint);
            let sy = rng.gen_range(params.min_footprint..=params.max_footprint);
            let lo = [margin + sx / 2.0, margin + sy / 2.0];
            let hi = [w - margin - sx / 2.0, d - margin - sy / 2.0];
            if !(hi[0] > lo[0] && hi[1] > lo[1]) {
                continue;
            }
            let candidate = SceneObject {
                class,
                center: [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])],
                size: [sx, sy],
                height: rng.gen_range(params.min_height..=params.max_height),
            };
            let clear = objects
                .iter()
                .all(|o| !rects_overlap(&inflate(&o.footprint(), params.clearance), &candidate.footprint()));
            if clear {
                objects.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::PlacementFailure(format!(
                "could not place object {k} of {} after {} attempts",
                params.object_count, params.max_retries
            )));
        }
    }
    Ok(Scene {
        extent,
        walls,
        objects,
    })
}

pub(crate) fn inflate(r: &Rect, by: f64) -> Rect {
    Rect {
        min: [r.min[0] - by, r.min[1] - by],
        max: [r.max[0] + by, r.max[1] + by],
    }
}

/// Open-interval overlap test (touching edges do not overlap).
pub(crate) fn rects_overlap(a: &Rect, b: &Rect) -> bool {
    a.min[0] < b.max[0] && b.min[0] < a.max[0] && a.min[1] < b.max[1] && b.min[1] < a.max[1]
}
