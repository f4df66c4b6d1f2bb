use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::DepthMap;
use crate::geometry::{wrap_angle, Pose};
use crate::seeding::{rng_for, Stream};

use super::render::{ground_truth, render_depth, VisibleObject};
use super::{inflate, CameraRig, Scene, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeParams {
    pub count: usize,
    pub length: usize,
    /// Forward distance per step, meters.
    pub step_length: f64,
    /// Largest heading change per step, radians.
    pub max_turn: f64,
    /// Free space kept around the robot origin, meters.
    pub robot_radius: f64,
    pub max_retries: usize,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            count: 50,
            length: 20,
            step_length: 0.25,
            max_turn: 0.3,
            robot_radius: 0.25,
            max_retries: 1000,
        }
    }
}

/// One time step: true pose, rendered depth and the visible ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pose: Pose<f64>,
    pub depth: DepthMap<f64>,
    pub truth: Vec<VisibleObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub frames: Vec<Frame>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn is_free(scene: &Scene, p: [f64; 2], radius: f64) -> bool {
    let inner = inflate(&scene.extent, -radius);
    if !inner.contains(p) {
        return false;
    }
    let blocked = |min: [f64; 3], max: [f64; 3]| {
        p[0] >= min[0] - radius && p[0] <= max[0] + radius && p[1] >= min[1] - radius && p[1] <= max[1] + radius
    };
    !scene.objects.iter().any(|o| {
        let a = o.aabb();
        blocked(a.min, a.max)
    }) && !scene.walls.iter().any(|w| {
        let a = w.aabb();
        blocked(a.min, a.max)
    })
}

/// Random-walk poses for `params.count` episodes of `params.length` steps.
///
/// Each step turns by at most `max_turn` and then moves `step_length` forward.
/// When every sampled turn would collide, the robot turns in place by
/// `max_turn` instead, so consecutive poses always respect both bounds.
pub fn plan_trajectories(scene: &Scene, params: &EpisodeParams, seed: u64) -> Result<Vec<Vec<Pose<f64>>>, SimError> {
    if params.length == 0 {
        return Err(SimError::InvalidParams("episode length must be positive".into()));
    }
    let e = scene.extent;
    (0..params.count)
        .map(|k| {
            let mut rng = rng_for(seed, Stream::Trajectory, k as u64);
            let start = (0..params.max_retries.max(1))
                .map(|_| [rng.gen_range(e.min[0]..e.max[0]), rng.gen_range(e.min[1]..e.max[1])])
                .find(|&p| is_free(scene, p, params.robot_radius))
                .ok_or_else(|| SimError::PlacementFailure(format!("no free start pose for episode {k}")))?;
            let mut pose = Pose::new(start[0], start[1], 0.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
            let mut poses = vec![pose];
            while poses.len() < params.length {
                let mut moved = false;
                for _ in 0..32 {
                    let turn = rng.gen_range(-params.max_turn..=params.max_turn);
                    let theta = wrap_angle(pose.theta + turn);
                    let next = [
                        pose.x + params.step_length * theta.cos(),
                        pose.y + params.step_length * theta.sin(),
                    ];
                    if is_free(scene, next, params.robot_radius) {
                        pose = Pose::new(next[0], next[1], 0.0, theta);
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    pose = Pose::new(pose.x, pose.y, 0.0, pose.theta + params.max_turn);
                }
                poses.push(pose);
            }
            Ok(poses)
        })
        .collect()
}

/// Renders depth and ground truth for a list of poses.
pub fn render_episode(scene: &Scene, poses: &[Pose<f64>], rig: &CameraRig) -> Episode {
    let frames = poses
        .iter()
        .map(|pose| {
            let depth = render_depth(scene, pose, rig);
            let truth = ground_truth(scene, pose, &depth, rig);
            Frame {
                pose: *pose,
                depth,
                truth,
            }
        })
        .collect();
    Episode { frames }
}

/// Plans and renders `params.count` episodes.
pub fn generate_episodes(
    scene: &Scene,
    params: &EpisodeParams,
    rig: &CameraRig,
    seed: u64,
) -> Result<Vec<Episode>, SimError> {
    use rayon::prelude::*;
    let plans = plan_trajectories(scene, params, seed)?;
    Ok(plans.par_iter().map(|p| render_episode(scene, p, rig)).collect())
}

/// Gaussian sensor noise on depth, planar position and heading, each sigma
/// multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub depth_sigma: f64,
    pub position_sigma: f64,
    pub heading_sigma: f64,
    pub scale: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            depth_sigma: 0.1,
            position_sigma: 0.1,
            heading_sigma: 0.01,
            scale: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn is_noise_free(&self) -> bool {
        self.scale == 0.0 || (self.depth_sigma == 0.0 && self.position_sigma == 0.0 && self.heading_sigma == 0.0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = [self.depth_sigma, self.position_sigma, self.heading_sigma, self.scale]
            .iter()
            .all(|s| *s >= 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParams("noise sigmas and scale must be non-negative".into()))
        }
    }
}

/// Smallest depth a noisy return is clamped to, meters.
const MIN_NOISY_DEPTH: f64 = 1e-3;

/// Adds sensor noise for frame `frame_index`. Pixels without a return stay
/// without a return; perturbed depths are clamped positive. Position noise is
/// planar (`x`, `y`).
pub fn apply_sensor_noise(
    pose: &Pose<f64>,
    depth: &DepthMap<f64>,
    cfg: &NoiseConfig,
    frame_index: u64,
) -> (Pose<f64>, DepthMap<f64>) {
    if cfg.is_noise_free() {
        return (*pose, depth.clone());
    }
    let mut rng = rng_for(cfg.seed, Stream::SensorNoise, frame_index);
    let gauss = |sigma: f64| Normal::new(0.0, sigma * cfg.scale).expect("valid sigma");
    let (pos, head, dep) = (gauss(cfg.position_sigma), gauss(cfg.heading_sigma), gauss(cfg.depth_sigma));
    let noisy_pose = Pose::new(
        pose.x + pos.sample(&mut rng),
        pose.y + pos.sample(&mut rng),
        pose.z,
        pose.theta + head.sample(&mut rng),
    );
    let mut noisy = depth.clone();
    for d in noisy.as_mut_slice() {
        if *d > 0.0 {
            *d = (*d + dep.sample(&mut rng)).max(MIN_NOISY_DEPTH);
        }
    }
    (noisy_pose, noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_scene, SceneParams};

    fn scene() -> Scene {
        generate_scene(21, &SceneParams::default()).unwrap()
    }

    #[test]
    fn fifty_by_twenty_gives_thousand_poses() {
        let plans = plan_trajectories(&scene(), &EpisodeParams::default(), 3).unwrap();
        assert_eq!(plans.len(), 50);
        assert_eq!(plans.iter().map(Vec::len).sum::<usize>(), 1000);
    }

    #[test]
    fn single_step_episode() {
        let p = EpisodeParams {
            count: 2,
            length: 1,
            ..Default::default()
        };
        let plans = plan_trajectories(&scene(), &p, 3).unwrap();
        assert!(plans.iter().all(|e| e.len() == 1));
    }

    #[test]
    fn poses_are_collision_free_and_steps_bounded() {
        let s = scene();
        let p = EpisodeParams::default();
        for ep in plan_trajectories(&s, &p, 9).unwrap() {
            for pose in &ep {
                // point-in-box oracle
                for o in &s.objects {
                    let a = o.aabb();
                    let inside = pose.x >= a.min[0] && pose.x <= a.max[0] && pose.y >= a.min[1] && pose.y <= a.max[1];
                    assert!(!inside);
                }
                assert!(s.extent.contains([pose.x, pose.y]));
            }
            for w in ep.windows(2) {
                let step = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
                assert!(step <= p.step_length + 1e-12);
                assert!(wrap_angle(w[1].theta - w[0].theta).abs() <= p.max_turn + 1e-12);
            }
        }
    }

    #[test]
    fn no_free_space_is_a_placement_failure() {
        let mut s = scene();
        s.objects.push(crate::simulator::SceneObject {
            class: 0,
            center: [10.0, 10.0],
            size: [20.0, 20.0],
            height: 1.0,
        });
        let p = EpisodeParams {
            count: 1,
            max_retries: 50,
            ..Default::default()
        };
        assert!(matches!(plan_trajectories(&s, &p, 1), Err(SimError::PlacementFailure(_))));
    }

    #[test]
    fn zero_noise_is_identity() {
        let pose = Pose::new(1.0, 2.0, 0.0, 0.3);
        let depth = DepthMap::new(2, 1, vec![1.0, 0.0]);
        let cfg = NoiseConfig {
            scale: 3.0,
            depth_sigma: 0.0,
            position_sigma: 0.0,
            heading_sigma: 0.0,
            seed: 1,
        };
        assert_eq!(apply_sensor_noise(&pose, &depth, &cfg, 0), (pose, depth.clone()));
        let off = NoiseConfig::default();
        assert_eq!(apply_sensor_noise(&pose, &depth, &off, 0), (pose, depth));
    }

    #[test]
    fn noise_statistics_match_configuration() {
        let n = 100_000;
        let depth = DepthMap::filled(n, 1, 50.0);
        let cfg = NoiseConfig {
            scale: 2.0,
            seed: 4,
            ..Default::default()
        };
        let (_, noisy) = apply_sensor_noise(&Pose::new(0.0, 0.0, 0.0, 0.0), &depth, &cfg, 7);
        let resid: Vec<f64> = noisy.as_slice().iter().map(|d| d - 50.0).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let std = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let want = cfg.depth_sigma * cfg.scale;
        assert!(mean.abs() < 0.02 * want);
        assert!((std - want).abs() < 0.02 * want, "std {std}");

        let poses: Vec<Pose<f64>> = (0..n as u64)
            .map(|k| apply_sensor_noise(&Pose::new(0.0, 0.0, 0.0, 0.0), &DepthMap::filled(1, 1, 1.0), &cfg, k).0)
            .collect();
        let sx = (poses.iter().map(|p| p.x * p.x).sum::<f64>() / n as f64).sqrt();
        let st = (poses.iter().map(|p| p.theta * p.theta).sum::<f64>() / n as f64).sqrt();
        assert!((sx - 0.2).abs() < 0.02 * 0.2, "position std {sx}");
        assert!((st - 0.02).abs() < 0.02 * 0.02, "heading std {st}");
    }

    #[test]
    fn noise_is_deterministic_per_frame() {
        let depth = DepthMap::filled(4, 4, 2.0);
        let cfg = NoiseConfig {
            scale: 1.0,
            seed: 9,
            ..Default::default()
        };
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(apply_sensor_noise(&pose, &depth, &cfg, 3), apply_sensor_noise(&pose, &depth, &cfg, 3));
        assert_ne!(apply_sensor_noise(&pose, &depth, &cfg, 3), apply_sensor_noise(&pose, &depth, &cfg, 4));
    }
}
