use serde::{Deserialize, Serialize};

use crate::detector::BoundingBox;
use crate::features::{DepthMap, Mask};
use crate::geometry::{extrinsics_from_pose, feature_to_image_pixel, Extrinsics, Pose};

use super::{CameraRig, Scene};

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Ray `origin + t · direction`. Directions are not normalised: rays cast from
/// pixels have unit forward component, so `t` is z-depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
}

impl Ray {
    pub fn at(&self, t: f64) -> [f64; 3] {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }

    /// Ray through image pixel `(i, j)` for a camera at `extrinsics`.
    pub fn through_pixel(rig: &CameraRig, extrinsics: &Extrinsics<f64>, i: f64, j: f64) -> Self {
        let dir_cam = rig.intrinsics.ray_direction(i, j);
        Self {
            origin: extrinsics.camera_center(),
            direction: extrinsics.rotate_inverse(dir_cam),
        }
    }
}

/// What a ray struck first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hit {
    Floor,
    Wall(usize),
    Object(usize),
}

/// Slab-method entry distance of a ray into a box, or `None` on a miss or
/// when the box is entirely behind the origin.
pub fn ray_box(ray: &Ray, aabb: &Aabb) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        let o = ray.origin[k];
        let d = ray.direction[k];
        if d == 0.0 {
            if o < aabb.min[k] || o > aabb.max[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((aabb.min[k] - o) * inv, (aabb.max[k] - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far <= 0.0 {
        return None;
    }
    // origin inside the box: the camera is embedded in geometry, report contact
    Some(t_near.max(0.0))
}

/// Nearest surface along a ray: floor (inside the extent), walls, objects.
pub(crate) fn cast(scene: &Scene, ray: &Ray) -> Option<(f64, Hit)> {
    let mut best: Option<(f64, Hit)> = None;
    let mut consider = |t: f64, hit: Hit| {
        if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, hit));
        }
    };
    if ray.direction[2] < 0.0 {
        let t = -ray.origin[2] / ray.direction[2];
        let p = ray.at(t);
        if scene.extent.contains([p[0], p[1]]) {
            consider(t, Hit::Floor);
        }
    }
    for (k, w) in scene.walls.iter().enumerate() {
        if let Some(t) = ray_box(ray, &w.aabb()) {
            consider(t, Hit::Wall(k));
        }
    }
    for (k, o) in scene.objects.iter().enumerate() {
        if let Some(t) = ray_box(ray, &o.aabb()) {
            consider(t, Hit::Object(k));
        }
    }
    best
}

/// Z-depth image of the scene; `0` marks pixels whose ray hits nothing.
pub fn render_depth(scene: &Scene, pose: &Pose<f64>, rig: &CameraRig) -> DepthMap<f64> {
    let e = extrinsics_from_pose(pose, rig.mount_height, rig.mount_pitch);
    let (w, h) = (rig.intrinsics.width, rig.intrinsics.height);
    let mut data = Vec::with_capacity(w * h);
    for i in 0..h {
        for j in 0..w {
            let ray = Ray::through_pixel(rig, &e, i as f64, j as f64);
            data.push(cast(scene, &ray).map_or(0.0, |(t, _)| t));
        }
    }
    DepthMap::new(w, h, data)
}

/// A ground-truth object visible in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleObject {
    /// Index into `Scene::objects`.
    pub object: usize,
    pub class: usize,
    /// Tight bound of the visible image pixels.
    pub bbox: BoundingBox,
    /// Visible pixels at feature-map resolution.
    pub mask: Mask,
    /// Visible image pixels.
    pub pixel_count: usize,
}

/// Absolute depth agreement for a pixel to belong to a surface.
const DEPTH_TEST_TOLERANCE: f64 = 1e-3;

/// Per-pixel object labels by depth test: a pixel belongs to an object when
/// the object's surface along the pixel ray sits at the recorded depth.
pub(crate) fn label_image(scene: &Scene, pose: &Pose<f64>, depth: &DepthMap<f64>, rig: &CameraRig) -> Vec<Option<usize>> {
    let e = extrinsics_from_pose(pose, rig.mount_height, rig.mount_pitch);
    let (w, h) = (depth.width(), depth.height());
    let boxes: Vec<Aabb> = scene.objects.iter().map(|o| o.aabb()).collect();
    let mut labels = vec![None; w * h];
    for i in 0..h {
        for j in 0..w {
            let d = depth.get(i, j);
            if !(d > 0.0) {
                continue;
            }
            let ray = Ray::through_pixel(rig, &e, i as f64, j as f64);
            let mut best: Option<(f64, usize)> = None;
            for (k, b) in boxes.iter().enumerate() {
                if let Some(t) = ray_box(&ray, b) {
                    let err = (t - d).abs();
                    if err <= DEPTH_TEST_TOLERANCE && best.is_none_or(|(be, _)| err < be) {
                        best = Some((err, k));
                    }
                }
            }
            labels[i * w + j] = best.map(|(_, k)| k);
        }
    }
    labels
}

/// Objects with at least `rig.min_pixels` visible feature-map pixels, in scene
/// order.
pub fn ground_truth(scene: &Scene, pose: &Pose<f64>, depth: &DepthMap<f64>, rig: &CameraRig) -> Vec<VisibleObject> {
    let labels = label_image(scene, pose, depth, rig);
    let (w, h) = (depth.width(), depth.height());
    let (fw, fh) = (w / rig.stride, h / rig.stride);
    let n = scene.objects.len();
    let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n];
    let mut counts = vec![0usize; n];
    for i in 0..h {
        for j in 0..w {
            if let Some(k) = labels[i * w + j] {
                let b = &mut bounds[k];
                b.0 = b.0.min(i);
                b.1 = b.1.min(j);
                b.2 = b.2.max(i);
                b.3 = b.3.max(j);
                counts[k] += 1;
            }
        }
    }
    let mut masks: Vec<Mask> = (0..n).map(|_| Mask::empty(fw, fh)).collect();
    for i in 0..fh {
        for j in 0..fw {
            let (ii, jj) = feature_to_image_pixel(i, j, rig.stride);
            if let Some(k) = labels[ii * w + jj] {
                masks[k].set(i, j, true);
            }
        }
    }
    masks
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.count() >= rig.min_pixels.max(1))
        .map(|(k, mask)| {
            let (i0, j0, i1, j1) = bounds[k];
            VisibleObject {
                object: k,
                class: scene.objects[k].class,
                bbox: BoundingBox::new(j0 as f64, i0 as f64, (j1 + 1) as f64, (i1 + 1) as f64),
                mask,
                pixel_count: counts[k],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pixel_to_world;
    use crate::simulator::{generate_scene, Rect, SceneObject, SceneParams, Wall};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty_room() -> Scene {
        Scene {
            extent: Rect {
                min: [0.0, 0.0],
                max: [10.0, 10.0],
            },
            walls: vec![Wall {
                from: [6.0, 0.0],
                to: [6.0, 10.0],
                thickness: 0.0,
                height: 3.0,
            }],
            objects: vec![],
        }
    }

    // Brute force: intersect every face plane of every box and keep in-face hits.
    fn brute_force_nearest(boxes: &[Aabb], ray: &Ray) -> Option<f64> {
        let mut best: Option<f64> = None;
        for b in boxes {
            for axis in 0..3 {
                for plane in [b.min[axis], b.max[axis]] {
                    let d = ray.direction[axis];
                    if d == 0.0 {
                        continue;
                    }
                    let t = (plane - ray.origin[axis]) / d;
                    if t <= 0.0 {
                        continue;
                    }
                    let p = ray.at(t);
                    let inside = (0..3)
                        .filter(|&k| k != axis)
                        .all(|k| p[k] >= b.min[k] - 1e-12 && p[k] <= b.max[k] + 1e-12);
                    if inside && best.is_none_or(|bt| t < bt) {
                        best = Some(t);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn flat_wall_two_meters_ahead() {
        let rig = CameraRig::default();
        let pose = Pose::new(4.0, 5.0, 0.0, 0.0);
        let depth = render_depth(&empty_room(), &pose, &rig);
        let (ci, cj) = (rig.intrinsics.cy as usize, rig.intrinsics.cx as usize);
        assert!((depth.get(ci, cj) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn object_in_front_of_wall_is_nearer() {
        let rig = CameraRig::default();
        let mut scene = empty_room();
        scene.objects.push(SceneObject {
            class: 0,
            center: [5.0, 5.0],
            size: [0.5, 0.5],
            height: 2.0,
        });
        let pose = Pose::new(3.0, 5.0, 0.0, 0.0);
        let depth = render_depth(&scene, &pose, &rig);
        let truth = ground_truth(&scene, &pose, &depth, &rig);
        assert_eq!(truth.len(), 1);
        let wall_depth = 3.0;
        for (fi, fj) in truth[0].mask.pixels() {
            let (i, j) = feature_to_image_pixel(fi, fj, rig.stride);
            assert!(depth.get(i, j) < wall_depth);
        }
        // top of the image above the object still sees the wall
        assert!((depth.get(5, rig.intrinsics.cx as usize) - wall_depth).abs() < 1e-9);
    }

    #[test]
    fn slab_matches_brute_force_on_random_rays() {
        let scene = generate_scene(4, &SceneParams::default()).unwrap();
        let boxes: Vec<Aabb> = scene
            .objects
            .iter()
            .map(|o| o.aabb())
            .chain(scene.walls.iter().map(|w| w.aabb()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut hits = 0;
        for _ in 0..10_000 {
            let ray = Ray {
                origin: [rng.gen_range(0.5..19.5), rng.gen_range(0.5..19.5), rng.gen_range(0.1..2.0)],
                direction: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3)],
            };
            if boxes.iter().any(|b| b.contains(ray.origin)) {
                continue;
            }
            let slab = boxes
                .iter()
                .filter_map(|b| ray_box(&ray, b))
                .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
            let brute = brute_force_nearest(&boxes, &ray);
            match (slab, brute) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                    hits += 1;
                }
                (None, None) => {}
                other => panic!("disagreement {other:?}"),
            }
        }
        assert!(hits > 1000);
    }

    #[test]
    fn reprojected_hits_lie_on_surfaces() {
        let scene = generate_scene(8, &SceneParams::default()).unwrap();
        let rig = CameraRig::default();
        let pose = Pose::new(10.0, 10.0, 0.0, 0.8);
        let depth = render_depth(&scene, &pose, &rig);
        let e = extrinsics_from_pose(&pose, rig.mount_height, rig.mount_pitch);
        let truth = ground_truth(&scene, &pose, &depth, &rig);
        for v in &truth {
            let b = scene.objects[v.object].aabb();
            for (fi, fj) in v.mask.pixels() {
                let (i, j) = feature_to_image_pixel(fi, fj, rig.stride);
                let p = pixel_to_world(i as f64, j as f64, depth.get(i, j), &rig.intrinsics, &e).unwrap();
                let on_face = (0..3).any(|k| (p[k] - b.min[k]).abs() < 1e-6 || (p[k] - b.max[k]).abs() < 1e-6);
                let inside = (0..3).all(|k| p[k] >= b.min[k] - 1e-6 && p[k] <= b.max[k] + 1e-6);
                assert!(on_face && inside);
            }
        }
    }

    #[test]
    fn fully_occluded_object_is_absent() {
        let rig = CameraRig::default();
        let mut scene = empty_room();
        scene.objects.push(SceneObject {
            class: 0,
            center: [4.0, 5.0],
            size: [0.6, 3.0],
            height: 2.5,
        });
        scene.objects.push(SceneObject {
            class: 1,
            center: [5.0, 5.0],
            size: [0.3, 0.3],
            height: 0.5,
        });
        let pose = Pose::new(2.0, 5.0, 0.0, 0.0);
        let depth = render_depth(&scene, &pose, &rig);
        let truth = ground_truth(&scene, &pose, &depth, &rig);
        assert!(truth.iter().all(|v| v.object != 1));
        assert!(truth.iter().any(|v| v.object == 0));
    }

    #[test]
    fn box_is_tight_bound_of_visible_pixels() {
        let rig = CameraRig::default();
        let scene = generate_scene(2, &SceneParams::default()).unwrap();
        let pose = Pose::new(10.0, 10.0, 0.0, -2.0);
        let depth = render_depth(&scene, &pose, &rig);
        let labels = label_image(&scene, &pose, &depth, &rig);
        for v in ground_truth(&scene, &pose, &depth, &rig) {
            let pix: Vec<(usize, usize)> = (0..depth.height())
                .flat_map(|i| (0..depth.width()).map(move |j| (i, j)))
                .filter(|&(i, j)| labels[i * depth.width() + j] == Some(v.object))
                .collect();
            let x1 = pix.iter().map(|p| p.1).min().unwrap() as f64;
            let x2 = pix.iter().map(|p| p.1).max().unwrap() as f64 + 1.0;
            let y1 = pix.iter().map(|p| p.0).min().unwrap() as f64;
            let y2 = pix.iter().map(|p| p.0).max().unwrap() as f64 + 1.0;
            assert_eq!(v.bbox, BoundingBox::new(x1, y1, x2, y2));
            assert_eq!(v.pixel_count, pix.len());
        }
    }
}
