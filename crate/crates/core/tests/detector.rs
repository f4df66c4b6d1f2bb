use std::collections::BTreeMap;

use objmem::detector::{
    detect_enhanced, detections, oracle_detect, CorruptionConfig, DetectionHead, DetectorOutput, PixelBasis,
};
use objmem::embedding::{make_embedding_table, ClassEmbeddingTable, TableError};
use objmem::geometry::{extrinsics_from_pose, CameraIntrinsics, Extrinsics, Pose};
use objmem::memories::{ExternalMemory, ImplicitObjectMemory, NoMemory};
use objmem::memory::{write, EnhancementParams, ProjectedFeatureFrame, View};
use objmem::simulator::{
    generate_episodes, generate_scene, render_depth, CameraRig, Episode, EpisodeParams, Rect, Scene, SceneObject,
    SceneParams,
};

const SEED7_MAX_ABS_COSINE: f64 = 0.10966153256063153;

#[test]
fn single_class_table_is_one_unit_vector() {
    let t = make_embedding_table::<f64>(1, 32, 0);
    assert_eq!(t.len(), 1);
    let n: f64 = t.row(0).iter().map(|x| x * x).sum();
    assert!((n - 1.0).abs() < 1e-12);
}

#[test]
fn seed_seven_table_fixture() {
    let t = make_embedding_table::<f64>(15, 512, 7);
    let mut worst = 0.0f64;
    for a in 0..15 {
        for b in a + 1..15 {
            let c: f64 = t.row(a).iter().zip(t.row(b)).map(|(x, y)| x * y).sum();
            worst = worst.max(c.abs());
        }
    }
    assert!(worst < 0.3);
    assert!((worst - SEED7_MAX_ABS_COSINE).abs() < 1e-12, "{worst}");
    assert_eq!(t, make_embedding_table::<f64>(15, 512, 7));
    assert_ne!(t, make_embedding_table::<f64>(15, 512, 8));
}

#[test]
fn loading_renormalises_and_keeps_cosines() {
    let t = make_embedding_table::<f32>(4, 16, 2);
    // stretch every row in the file body
    let mut bytes = t.to_bytes();
    let body = bytes.len() - t.len() * t.dim() * 4;
    for (c, row) in bytes[body..].chunks_mut(t.dim() * 4).enumerate() {
        for x in row.chunks_mut(4) {
            let v = f32::from_le_bytes([x[0], x[1], x[2], x[3]]) * (1.5 + c as f32);
            x.copy_from_slice(&v.to_le_bytes());
        }
    }
    let (loaded, warnings) = ClassEmbeddingTable::<f32>::from_bytes(&bytes).unwrap();
    assert_eq!(warnings.len(), 4);
    for a in 0..4 {
        let n: f32 = loaded.row(a).iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-6);
        for b in 0..4 {
            let want: f32 = t.row(a).iter().zip(t.row(b)).map(|(x, y)| x * y).sum();
            let got: f32 = loaded.row(a).iter().zip(loaded.row(b)).map(|(x, y)| x * y).sum();
            assert!((want - got).abs() < 1e-6);
        }
    }
}

#[test]
fn empty_table_file_is_malformed() {
    assert!(matches!(ClassEmbeddingTable::<f64>::from_bytes(&[]), Err(TableError::Malformed { .. })));
}

/// Two boxes in front of a camera at the origin looking along +x.
fn two_object_scene() -> Scene {
    Scene {
        extent: Rect {
            min: [-1.0, -4.0],
            max: [10.0, 4.0],
        },
        walls: Vec::new(),
        objects: vec![
            SceneObject {
                class: 1,
                center: [4.0, 1.0],
                size: [0.8, 0.8],
                height: 1.0,
            },
            SceneObject {
                class: 3,
                center: [5.0, -1.2],
                size: [0.8, 0.8],
                height: 1.2,
            },
        ],
    }
}

struct Setup {
    rig: CameraRig,
    table: ClassEmbeddingTable<f64>,
    head: DetectionHead<f64>,
}

fn setup() -> Setup {
    let table = make_embedding_table::<f64>(5, 64, 11);
    let basis = PixelBasis::new(&table, 32, 5).unwrap();
    Setup {
        rig: CameraRig::default(),
        table,
        head: DetectionHead::new(basis),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn clean_oracle_reproduces_class_embeddings() {
    let s = setup();
    let scene = two_object_scene();
    let pose = Pose::new(0.0, 0.0, 0.0, 0.0);
    let depth = render_depth(&scene, &pose, &s.rig);
    let corruption = CorruptionConfig {
        objectness_range: [0.6, 0.6],
        ..CorruptionConfig::default()
    };
    let out = oracle_detect(&scene, &pose, &depth, &s.rig, &s.table, s.head.basis(), &corruption, 0);
    assert_eq!(out.len(), 2);
    let mut classes = Vec::new();
    for (f, &o) in out.object_features.iter().zip(&out.objectness) {
        let class = (0..5).find(|&c| s.table.row(c) == &f[..]).expect("feature is a class embedding");
        classes.push(class);
        assert_eq!(o, 0.6);
    }
    classes.sort();
    assert_eq!(classes, vec![1, 3]);
    let want = (sigmoid(1.0) * 0.6).sqrt();
    for d in detections(&out, &s.table) {
        assert!((d.score - want).abs() < 1e-9);
    }
    // the head's pooled and lifted features land back on the same classes
    let base = s.head.base(&out).unwrap();
    let mut got: Vec<usize> = detections(&base, &s.table).iter().map(|d| d.class).collect();
    got.sort();
    assert_eq!(got, vec![1, 3]);
}

#[test]
fn full_dropout_gives_no_proposals() {
    let s = setup();
    let scene = two_object_scene();
    let corruption = CorruptionConfig {
        dropout_prob: 1.0,
        ..CorruptionConfig::default()
    };
    for (k, x) in [0.0, 0.5, 1.0, 1.5].into_iter().enumerate() {
        let pose = Pose::new(x, 0.0, 0.0, 0.05 * k as f64);
        let depth = render_depth(&scene, &pose, &s.rig);
        let out = oracle_detect(&scene, &pose, &depth, &s.rig, &s.table, s.head.basis(), &corruption, k as u64);
        assert_eq!(out.len(), 0);
    }
}

fn world(count: usize) -> (Scene, Vec<Episode>, CameraRig) {
    let scene = generate_scene(3, &SceneParams::default()).unwrap();
    let params = EpisodeParams {
        count,
        ..EpisodeParams::default()
    };
    let rig = CameraRig::default();
    let episodes = generate_episodes(&scene, &params, &rig, 4).unwrap();
    (scene, episodes, rig)
}

fn noisy() -> CorruptionConfig {
    CorruptionConfig {
        feature_noise_sigma: 0.5,
        dropout_prob: 0.2,
        misclass_prob: 0.1,
        objectness_range: [0.5, 1.0],
        seed: 9,
    }
}

#[test]
fn streams_are_deterministic() {
    let s = setup();
    let (scene, episodes, rig) = world(2);
    let stream = || -> Vec<DetectorOutput<f64>> {
        episodes
            .iter()
            .flat_map(|e| &e.frames)
            .enumerate()
            .map(|(k, f)| oracle_detect(&scene, &f.pose, &f.depth, &rig, &s.table, s.head.basis(), &noisy(), k as u64))
            .collect()
    };
    assert_eq!(stream(), stream());
}

#[test]
fn clean_scores_do_not_depend_on_pose() {
    let s = setup();
    let (scene, episodes, rig) = world(3);
    let mut seen: BTreeMap<usize, f64> = BTreeMap::new();
    let mut repeats = 0;
    for (k, f) in episodes.iter().flat_map(|e| &e.frames).enumerate() {
        let out = oracle_detect(&scene, &f.pose, &f.depth, &rig, &s.table, s.head.basis(), &CorruptionConfig::default(), k as u64);
        for (d, v) in detections(&out, &s.table).iter().zip(&f.truth) {
            if let Some(&prev) = seen.get(&v.object) {
                assert_eq!(prev, d.score);
                repeats += 1;
            }
            seen.insert(v.object, d.score);
        }
    }
    assert!(repeats > 0);
}

struct Cam {
    depth: objmem::features::DepthMap<f64>,
    k: CameraIntrinsics<f64>,
    e: Extrinsics<f64>,
}

impl Cam {
    fn new(rig: &CameraRig, frame: &objmem::simulator::Frame) -> Self {
        Self {
            depth: frame.depth.resample_nearest(rig.stride),
            k: rig.feature_intrinsics(),
            e: extrinsics_from_pose(&frame.pose, rig.mount_height, rig.mount_pitch),
        }
    }

    fn view(&self, rig: &CameraRig) -> View<'_, f64> {
        View {
            depth: &self.depth,
            intrinsics: &self.k,
            extrinsics: &self.e,
            max_depth: rig.max_depth,
        }
    }
}

fn memory_for(s: &Setup, scene: &Scene, lambda: f64) -> ImplicitObjectMemory<f64> {
    ImplicitObjectMemory::new(
        scene.grid_geometry(0.2),
        s.table.clone(),
        EnhancementParams::new(s.head.basis().matrix().clone(), lambda),
        0.3,
    )
}

#[test]
fn zero_lambda_and_empty_memory_match_the_base_pipeline() {
    let s = setup();
    let (scene, episodes, rig) = world(2);
    let mut populated = memory_for(&s, &scene, 0.0);
    let empty = memory_for(&s, &scene, 5.0);
    for (k, f) in episodes.iter().flat_map(|e| &e.frames).enumerate() {
        let raw = oracle_detect(&scene, &f.pose, &f.depth, &rig, &s.table, s.head.basis(), &noisy(), k as u64);
        let base = s.head.base(&raw).unwrap();
        let cam = Cam::new(&rig, f);
        let want = detections(&base, &s.table);
        for reader in [&populated as &dyn ExternalMemory<f64>, &empty, &NoMemory] {
            let got = detections(&detect_enhanced(&base, reader, &cam.view(&rig), &s.head).unwrap(), &s.table);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert_eq!(a.class, b.class);
                assert!((a.score - b.score).abs() < 1e-6);
            }
        }
        populated.write(&base, &cam.view(&rig)).unwrap();
    }
    assert!(!populated.grid.is_blank());
}

/// Fraction of proposals classified correctly, without and with `memory`.
fn accuracies(
    s: &Setup,
    scene: &Scene,
    episodes: &[Episode],
    rig: &CameraRig,
    memory: &mut dyn ExternalMemory<f64>,
    learn: bool,
) -> (f64, f64, usize) {
    let corruption = CorruptionConfig {
        feature_noise_sigma: 0.5,
        objectness_range: [0.5, 1.0],
        seed: 17,
        ..CorruptionConfig::default()
    };
    let (mut base_ok, mut mem_ok, mut total, mut frames) = (0, 0, 0, 0);
    for (k, f) in episodes.iter().flat_map(|e| &e.frames).enumerate() {
        let raw = oracle_detect(scene, &f.pose, &f.depth, rig, &s.table, s.head.basis(), &corruption, k as u64);
        let base = s.head.base(&raw).unwrap();
        let cam = Cam::new(rig, f);
        let enhanced = detect_enhanced(&base, &*memory, &cam.view(rig), &s.head).unwrap();
        // no dropout: proposals follow the ground-truth order
        for ((b, e), truth) in detections(&base, &s.table).iter().zip(detections(&enhanced, &s.table)).zip(&f.truth) {
            base_ok += (b.class == truth.class) as usize;
            mem_ok += (e.class == truth.class) as usize;
            total += 1;
        }
        if learn {
            memory.write(&base, &cam.view(rig)).unwrap();
        }
        frames += 1;
    }
    (base_ok as f64 / total as f64, mem_ok as f64 / total as f64, frames)
}

#[test]
fn populated_memory_beats_noisy_base() {
    let s = setup();
    let (scene, episodes, rig) = world(25);
    let mut memory = memory_for(&s, &scene, 5.0);
    let (base, with_memory, frames) = accuracies(&s, &scene, &episodes, &rig, &mut memory, true);
    assert!(frames >= 500);
    eprintln!("argmax accuracy over {frames} frames: base {base:.4}, memory {with_memory:.4}");
    assert!(with_memory > base, "memory {with_memory} vs base {base}");
}

#[test]
fn wrong_class_memory_does_not_help() {
    let s = setup();
    let (scene, episodes, rig) = world(25);
    let mut memory = memory_for(&s, &scene, 5.0);
    let geo = *memory.grid.geometry();
    let mut cells = BTreeMap::new();
    for obj in &scene.objects {
        let fp = obj.footprint();
        for cell in memory.grid.cells() {
            let [x, y] = geo.cell_center(cell);
            if fp.contains([x, y]) {
                cells.insert(geo.flat(cell), s.table.row((obj.class + 1) % s.table.len()).to_vec());
            }
        }
    }
    let frame = ProjectedFeatureFrame::from_cells(geo.breadth, geo.length, s.table.dim(), cells, vec![true; geo.cell_count()]);
    write(&mut memory.grid, &frame).unwrap();
    assert!(!memory.grid.is_blank());
    let (base, with_memory, _) = accuracies(&s, &scene, &episodes, &rig, &mut memory, false);
    eprintln!("argmax accuracy with wrong-class memory: base {base:.4}, memory {with_memory:.4}");
    assert!(with_memory <= base, "memory {with_memory} vs base {base}");
}
