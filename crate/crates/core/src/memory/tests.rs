use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::detector::{BoundingBox, DetectorOutput};
use crate::embedding::ClassEmbeddingTable;
use crate::features::{DepthMap, FeatureMap, Mask};
use crate::geometry::{extrinsics_from_pose, CameraIntrinsics, Extrinsics, Pose};
use crate::linalg::Matrix;

fn geometry(a: usize, l: usize) -> GridGeometry<f64> {
    GridGeometry::new([0.0, 0.0], 0.2, a, l)
}

fn random_frame(rng: &mut ChaCha8Rng, a: usize, l: usize, d: usize) -> ProjectedFeatureFrame<f64> {
    let mut cells = BTreeMap::new();
    let mut visible = vec![false; a * l];
    for (flat, vis) in visible.iter_mut().enumerate() {
        *vis = rng.gen_bool(0.6);
        if *vis && rng.gen_bool(0.4) {
            cells.insert(flat, (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
    }
    ProjectedFeatureFrame::from_cells(a, l, d, cells, visible)
}

#[test]
fn first_write_sets_feature_and_count() {
    let mut g = MemoryGrid::new(geometry(3, 3), 2);
    let mut cells = BTreeMap::new();
    cells.insert(4, vec![1.0, 0.0]);
    let mut visible = vec![false; 9];
    visible[4] = true;
    write(&mut g, &ProjectedFeatureFrame::from_cells(3, 3, 2, cells, visible)).unwrap();
    let c = CellIndex { u: 1, v: 1 };
    assert_eq!(g.cell_feature(c), &[1.0, 0.0]);
    assert_eq!(g.view_count(c), 1);
    assert_eq!(g.view_counts().iter().sum::<u32>(), 1);
}

#[test]
fn background_frame_only_counts_views() {
    let mut g = MemoryGrid::new(geometry(2, 2), 3);
    let frame = ProjectedFeatureFrame::from_cells(2, 2, 3, BTreeMap::new(), vec![true; 4]);
    write(&mut g, &frame).unwrap();
    assert!(g.is_blank());
    assert!(g.view_counts().iter().all(|&v| v == 1));
}

#[test]
fn write_rejects_mismatched_frames() {
    let mut g = MemoryGrid::new(geometry(2, 2), 3);
    let frame = ProjectedFeatureFrame::<f64>::empty(2, 3, 3);
    assert!(matches!(write(&mut g, &frame), Err(MemoryError::DimensionMismatch { .. })));
    let frame = ProjectedFeatureFrame::<f64>::empty(2, 2, 4);
    assert!(matches!(write(&mut g, &frame), Err(MemoryError::DimensionMismatch { .. })));
}

#[test]
fn k_detections_over_n_views() {
    let f = [0.6, 0.8];
    let (n, k) = (10usize, 3usize);
    let mut g = MemoryGrid::new(geometry(1, 1), 2);
    for i in 0..n {
        let mut cells = BTreeMap::new();
        if i < k {
            cells.insert(0, f.to_vec());
        }
        write(&mut g, &ProjectedFeatureFrame::from_cells(1, 1, 2, cells, vec![true])).unwrap();
    }
    let c = CellIndex { u: 0, v: 0 };
    assert_eq!(g.view_count(c), n as u32);
    let m = normalize(&g);
    for (got, want) in m.iter().zip(f) {
        assert!((got - want * k as f64 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn normalize_matches_replay_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (a, l, d) = (4, 3, 5);
        let frames: Vec<_> = (0..rng.gen_range(1..12)).map(|_| random_frame(&mut rng, a, l, d)).collect();
        let mut g = MemoryGrid::new(geometry(a, l), d);
        for f in &frames {
            write(&mut g, f).unwrap();
        }
        // replay oracle: same summation order, dense arrays
        let mut sum = vec![0.0; a * l * d];
        let mut views = vec![0u32; a * l];
        for f in &frames {
            let dense = f.dense_features();
            for (s, x) in sum.iter_mut().zip(&dense) {
                *s += x;
            }
            for (v, &vis) in views.iter_mut().zip(f.visible()) {
                *v += vis as u32;
            }
        }
        let want: Vec<f64> = (0..a * l * d)
            .map(|k| if views[k / d] == 0 { 0.0 } else { sum[k] / views[k / d] as f64 })
            .collect();
        assert_eq!(normalize(&g), want);
        assert_eq!(g.view_counts(), &views[..]);
        assert!(g.is_consistent());
    }
}

#[test]
fn unseen_cells_normalize_to_zero() {
    let g = MemoryGrid::<f64>::new(geometry(2, 2), 3);
    assert!(normalize(&g).iter().all(|&x| x == 0.0));
    assert_eq!(g.normalized_cell(CellIndex { u: 1, v: 1 }), None);
}

#[test]
fn reset_clears_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = MemoryGrid::new(geometry(3, 3), 4);
    write(&mut g, &random_frame(&mut rng, 3, 3, 4)).unwrap();
    g.reset();
    assert_eq!(g, MemoryGrid::new(geometry(3, 3), 4));
}

/// A 2×2 feature map whose rays all land about one metre ahead of `(0.1,
/// 0.1)`, inside cell (5, 0) of a 0.2 m grid.
struct Rig {
    depth: DepthMap<f64>,
    k: CameraIntrinsics<f64>,
    e: Extrinsics<f64>,
}

fn narrow_rig() -> Rig {
    Rig {
        depth: DepthMap::filled(2, 2, 1.0),
        k: CameraIntrinsics::new(1000.0, 1000.0, 1.0, 1.0, 2, 2).unwrap(),
        e: extrinsics_from_pose(&Pose::new(0.1, 0.1, 0.0, 0.0), 0.5, 0.0),
    }
}

impl Rig {
    fn view(&self) -> View<'_, f64> {
        View {
            depth: &self.depth,
            intrinsics: &self.k,
            extrinsics: &self.e,
            max_depth: 10.0,
        }
    }
}

fn mask(bits: [bool; 4]) -> Mask {
    Mask::from_bits(2, 2, bits.to_vec())
}

#[test]
fn narrow_rig_hits_one_cell() {
    let rig = narrow_rig();
    let g = geometry(10, 10);
    let cells = rig.view().cell_map(&g);
    assert!(cells.iter().all(|c| *c == Some(CellIndex { u: 5, v: 0 })));
}

#[test]
fn single_object_lands_in_its_cell() {
    let rig = narrow_rig();
    let g = geometry(10, 10);
    let f = vec![0.5, -0.25, 1.0];
    let m = mask([true, true, false, false]);
    let confident = [ConfidentObject {
        index: 0,
        score: 0.9,
        feature: &f,
        mask: &m,
    }];
    let frame = project_object_features(&confident, &rig.view(), &g, 3).unwrap();
    assert_eq!(frame.object_cells().len(), 1);
    assert_eq!(frame.feature_at(50), Some(&f[..]));
    assert_eq!(frame.skipped_pixels(), 0);
}

#[test]
fn overlapping_objects_average_per_pixel() {
    let rig = narrow_rig();
    let g = geometry(10, 10);
    let (f1, f2) = (vec![1.0, 0.0, 2.0], vec![0.0, 3.0, -1.0]);
    let (m1, m2) = (mask([true, true, false, false]), mask([false, false, true, true]));
    let confident = [
        ConfidentObject {
            index: 0,
            score: 0.9,
            feature: &f1,
            mask: &m1,
        },
        ConfidentObject {
            index: 1,
            score: 0.9,
            feature: &f2,
            mask: &m2,
        },
    ];
    let frame = project_object_features(&confident, &rig.view(), &g, 3).unwrap();
    // oracle: average over every contributing pixel
    let mut want = [0.0; 3];
    let pixels = [(&f1, &m1), (&f2, &m2)]
        .iter()
        .flat_map(|(f, m)| m.pixels().map(move |_| *f))
        .collect::<Vec<_>>();
    for f in &pixels {
        for k in 0..3 {
            want[k] += f[k] / pixels.len() as f64;
        }
    }
    assert_eq!(frame.feature_at(50), Some(&want[..]));
}

#[test]
fn empty_confident_set_still_marks_visibility() {
    let rig = narrow_rig();
    let g = geometry(10, 10);
    let frame = project_object_features::<f64>(&[], &rig.view(), &g, 3).unwrap();
    assert!(frame.object_cells().is_empty());
    assert_eq!(frame.visible().iter().filter(|&&v| v).count(), 1);
    assert!(frame.visible()[50]);
}

#[test]
fn invalid_depth_pixels_are_skipped_and_counted() {
    let mut rig = narrow_rig();
    rig.depth = DepthMap::new(2, 2, vec![1.0, 0.0, -1.0, 50.0]);
    let g = geometry(10, 10);
    let f = vec![1.0, 1.0, 1.0];
    let m = mask([true; 4]);
    let confident = [ConfidentObject {
        index: 0,
        score: 0.9,
        feature: &f,
        mask: &m,
    }];
    let frame = project_object_features(&confident, &rig.view(), &g, 3).unwrap();
    assert_eq!(frame.skipped_pixels(), 3);
    assert_eq!(frame.feature_at(50), Some(&f[..]));
}

fn one_class_table() -> ClassEmbeddingTable<f64> {
    ClassEmbeddingTable::new(vec!["chair".into()], vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap()
}

fn output_with(features: Vec<Vec<f64>>, objectness: Vec<f64>) -> DetectorOutput<f64> {
    let n = features.len();
    DetectorOutput {
        boxes: vec![BoundingBox::new(0.0, 0.0, 1.0, 1.0); n],
        masks: vec![mask([true; 4]); n],
        objectness,
        object_features: features,
        pixel_features: FeatureMap::zeros(2, 2, 4),
    }
}

#[test]
fn select_confident_threshold_fixture() {
    // sigmoid(ln 9) = 0.9, so o = s² / 0.9 gives score s
    let a = 9f64.ln();
    let scores = [0.25, 0.31, 0.90];
    let out = output_with(
        vec![vec![a, 0.0, 0.0, 0.0]; 3],
        scores.iter().map(|s| s * s / 0.9).collect(),
    );
    let table = one_class_table();
    let kept: Vec<usize> = select_confident(&out, &table, 0.3).iter().map(|c| c.index).collect();
    assert_eq!(kept, vec![1, 2]);
    assert_eq!(select_confident(&out, &table, 0.0).len(), 3);
    assert!(select_confident(&out, &table, 1.0).is_empty());
}

#[test]
fn zero_objectness_is_never_confident() {
    let out = output_with(vec![vec![1.0, 0.0, 0.0, 0.0]], vec![0.0]);
    assert!(select_confident(&out, &one_class_table(), 0.0).is_empty());
}

#[test]
fn score_closed_form() {
    let table = one_class_table();
    let oracle = (1.0 / (1.0 + (-1.0f64).exp())).sqrt();
    let s = score_one(&[1.0, 0.0, 0.0, 0.0], &table, 1.0);
    assert!((s[0] - oracle).abs() < 1e-9);
    assert!((s[0] - 0.855_019).abs() < 1e-6);
    assert_eq!(score_one(&[1.0, 0.0, 0.0, 0.0], &table, 0.0), vec![0.0]);
    let doubled = score_one(&[2.0, 0.0, 0.0, 0.0], &table, 1.0);
    assert!(doubled[0] > s[0]);
}

#[test]
fn max_class_score_breaks_ties_low() {
    let table =
        ClassEmbeddingTable::new(vec!["a".into(), "b".into()], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(max_class_score(&[0.5, 0.5], &table, 1.0).unwrap().0, 0);
    assert_eq!(max_class_score(&[0.4, 0.5], &table, 1.0).unwrap().0, 1);
}

fn identity_like(rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::identity(rows, cols)
}

fn filled_grid(m: &[f64]) -> MemoryGrid<f64> {
    let mut g = MemoryGrid::new(geometry(10, 10), m.len());
    let mut cells = BTreeMap::new();
    cells.insert(50, m.to_vec());
    let mut visible = vec![false; 100];
    visible[50] = true;
    write(&mut g, &ProjectedFeatureFrame::from_cells(10, 10, m.len(), cells, visible)).unwrap();
    g
}

fn random_pixels(rng: &mut ChaCha8Rng, d: usize) -> FeatureMap<f64> {
    FeatureMap::from_vec(2, 2, d, (0..4 * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

#[test]
fn read_closed_form_single_cell() {
    let rig = narrow_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = [0.3, -0.7, 0.2, 0.9];
    let grid = filled_grid(&m);
    let z = random_pixels(&mut rng, 3);
    let params = EnhancementParams::new(identity_like(4, 3), 5.0);
    let e = read(&z, &grid, &rig.view(), &params).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..3 {
                assert_eq!(e.pixel(i, j)[k], 5.0 * m[k] + z.pixel(i, j)[k]);
            }
        }
    }
}

#[test]
fn read_is_neutral_without_lambda_or_memory() {
    let rig = narrow_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random_pixels(&mut rng, 3);
    let params = EnhancementParams::seeded(4, 3, 1, 0.0);
    assert_eq!(read(&z, &filled_grid(&[1.0, 2.0, 3.0, 4.0]), &rig.view(), &params).unwrap(), z);
    let empty = MemoryGrid::new(geometry(10, 10), 4);
    let params = params.with_lambda(5.0);
    assert_eq!(read(&z, &empty, &rig.view(), &params).unwrap(), z);
}

#[test]
fn viewed_but_empty_cells_are_neutral() {
    let rig = narrow_rig();
    let mut g = MemoryGrid::new(geometry(10, 10), 4);
    write(&mut g, &ProjectedFeatureFrame::from_cells(10, 10, 4, BTreeMap::new(), vec![true; 100])).unwrap();
    let z = random_pixels(&mut ChaCha8Rng::seed_from_u64(8), 3);
    let params = EnhancementParams::seeded(4, 3, 1, 100.0);
    assert_eq!(read(&z, &g, &rig.view(), &params).unwrap(), z);
}

#[test]
fn read_is_linear_in_lambda() {
    let rig = narrow_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = filled_grid(&[0.1, 0.2, -0.4, 0.8]);
    let z = random_pixels(&mut rng, 3);
    let p = EnhancementParams::seeded(4, 3, 9, 0.0);
    let delta = |l: f64| -> Vec<f64> {
        let e = read(&z, &grid, &rig.view(), &p.with_lambda(l)).unwrap();
        e.as_slice().iter().zip(z.as_slice()).map(|(a, b)| a - b).collect()
    };
    let (a, b, ab) = (delta(1.5), delta(3.25), delta(4.75));
    for k in 0..ab.len() {
        assert!((ab[k] - a[k] - b[k]).abs() < 1e-12);
    }
}

#[test]
fn read_rejects_mismatched_dimensions() {
    let rig = narrow_rig();
    let grid = filled_grid(&[1.0, 0.0, 0.0, 0.0]);
    let z = FeatureMap::zeros(2, 2, 5);
    let params = EnhancementParams::seeded(4, 3, 1, 1.0);
    assert!(read(&z, &grid, &rig.view(), &params).is_err());
    let z = FeatureMap::zeros(3, 2, 3);
    assert!(read(&z, &grid, &rig.view(), &params).is_err());
}

#[test]
fn snapshot_round_trip_f32_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = MemoryGrid::<f32>::new(GridGeometry::new([-1.5, 2.25], 0.2, 4, 5), 6);
    for _ in 0..5 {
        let f = random_frame(&mut rng, 4, 5, 6);
        let cells = f
            .object_cells()
            .iter()
            .map(|(&k, v)| (k, v.iter().map(|&x| x as f32).collect()))
            .collect();
        write(&mut g, &ProjectedFeatureFrame::from_cells(4, 5, 6, cells, f.visible().to_vec())).unwrap();
    }
    let bytes = snapshot_save(&g);
    let back = snapshot_load::<f32>(&bytes).unwrap();
    assert_eq!(back, g);
    assert_eq!(snapshot_save(&back), bytes);
}

#[test]
fn empty_snapshot_is_header_only() {
    let g = MemoryGrid::<f32>::new(GridGeometry::new([0.0, 0.0], 0.2, 0, 0), 512);
    let bytes = snapshot_save(&g);
    assert_eq!(bytes.len(), 4 + 16 + 24);
    assert_eq!(snapshot_load::<f32>(&bytes).unwrap(), g);
}

#[test]
fn truncated_snapshot_is_malformed() {
    let g = MemoryGrid::<f32>::new(geometry(2, 2).cast(), 3);
    let bytes = snapshot_save(&g);
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(matches!(
            snapshot_load::<f32>(&bytes[..cut]),
            Err(SnapshotError::Malformed { .. })
        ));
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        snapshot_load::<f32>(&bad),
        Err(SnapshotError::Malformed { offset: 0, .. })
    ));
}
