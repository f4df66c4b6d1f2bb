use objmem::geometry::{
    extrinsics_from_pose, pixel_to_world, world_to_cell, world_to_pixel, CameraIntrinsics, Extrinsics, Pose,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics::new(100.0, 100.0, 80.0, 60.0, 160, 120).unwrap()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn pose_strategy() -> impl Strategy<Value = (Pose<f64>, f64, f64)> {
    (-20.0..20.0f64, -20.0..20.0f64, -1.0..1.0f64, -PI..PI, 0.0..2.0f64, -0.6..0.6f64)
        .prop_map(|(x, y, z, t, h, p)| (Pose::new(x, y, z, t), h, p))
}

proptest! {
    #[test]
    fn pixel_round_trip((pose, h, p) in pose_strategy(), i in 0.0..120.0f64, j in 0.0..160.0f64, d in 0.05..30.0f64) {
        let k = intrinsics();
        let e = extrinsics_from_pose(&pose, h, p);
        let w = pixel_to_world(i, j, d, &k, &e).unwrap();
        let px = world_to_pixel(w, &k, &e).unwrap();
        prop_assert!((px.i - i).abs() < 1e-6);
        prop_assert!((px.j - j).abs() < 1e-6);
        prop_assert!((px.depth - d).abs() < 1e-6);
        let back = pixel_to_world(px.i, px.j, px.depth, &k, &e).unwrap();
        prop_assert!(dist(back, w) < 1e-6);
    }

    #[test]
    fn composition_stays_orthonormal(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
        let ea = extrinsics_from_pose(&a.0, a.1, a.2);
        let eb = extrinsics_from_pose(&b.0, b.1, b.2);
        let ec = extrinsics_from_pose(&c.0, c.1, c.2);
        let composed = ea.compose(&eb).compose(&ec).compose(&eb.inverse());
        prop_assert!(composed.orthonormality_error() < 1e-9);
        prop_assert!((composed.determinant() - 1.0).abs() < 1e-9);
        let id = ea.compose(&ea.inverse());
        let eye = Extrinsics::<f64>::identity();
        for r in 0..3 {
            for col in 0..3 {
                prop_assert!((id.rotation[r][col] - eye.rotation[r][col]).abs() < 1e-9);
            }
            prop_assert!(id.translation[r].abs() < 1e-9);
        }
    }

    #[test]
    fn cell_lookup_is_translation_equivariant(
        x in -50.0..50.0f64, y in -50.0..50.0f64,
        ox in -50.0..0.0f64, oy in -50.0..0.0f64,
        sx in -10.0..10.0f64, sy in -10.0..10.0f64,
    ) {
        let cell = 0.25;
        // shifts by whole multiples of a dyadic cell size are exact
        let (sx, sy) = ((sx / cell).round() * cell, (sy / cell).round() * cell);
        let a = world_to_cell(x, y, [ox, oy], cell, 1000, 1000);
        let b = world_to_cell(x + sx, y + sy, [ox + sx, oy + sy], cell, 1000, 1000);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cell_is_floor_of_offset(x in 0.0..10.0f64, y in 0.0..10.0f64) {
        let c = world_to_cell(x, y, [0.0, 0.0], 0.2, 100, 100).unwrap();
        prop_assert!(c.u as f64 * 0.2 <= x + 1e-12 && x < (c.u + 1) as f64 * 0.2 + 1e-12);
        prop_assert!(c.v as f64 * 0.2 <= y + 1e-12 && y < (c.v + 1) as f64 * 0.2 + 1e-12);
    }
}

#[test]
fn thousand_in_frustum_points_round_trip() {
    let k = intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pose = Pose::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), 0.0, rng.gen_range(-PI..PI));
        let e = extrinsics_from_pose(&pose, 1.25, rng.gen_range(-0.3..0.3));
        // sample in the camera frustum, then move to the world
        let (i, j, d) = (rng.gen_range(0.0..120.0), rng.gen_range(0.0..160.0), rng.gen_range(0.1..20.0));
        let w = pixel_to_world(i, j, d, &k, &e).unwrap();
        let px = world_to_pixel(w, &k, &e).unwrap();
        let back = pixel_to_world(px.i, px.j, px.depth, &k, &e).unwrap();
        worst = worst.max(dist(back, w));
    }
    assert!(worst < 1e-6, "max error {worst}");
}

#[test]
fn camera_center_is_degenerate() {
    let k = intrinsics();
    let e = extrinsics_from_pose(&Pose::new(3.0, -2.0, 0.0, 1.0), 1.25, 0.1);
    assert!(world_to_pixel(e.camera_center(), &k, &e).is_err());
}

#[test]
fn posed_back_projection_is_rigid_motion_of_identity() {
    let k = intrinsics();
    let posed = extrinsics_from_pose(&Pose::new(5.0, 5.0, 0.0, 0.0), 0.0, 0.0);
    let origin = Extrinsics::identity();
    for (i, j) in [(0.0, 0.0), (60.0, 80.0), (119.0, 3.0)] {
        let a = pixel_to_world(i, j, 3.0, &k, &origin).unwrap();
        let b = pixel_to_world(i, j, 3.0, &k, &posed).unwrap();
        assert!(dist([a[0] + 5.0, a[1] + 5.0, a[2]], b) < 1e-12);
    }
}
