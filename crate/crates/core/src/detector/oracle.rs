use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::ClassEmbeddingTable;
use crate::features::{DepthMap, FeatureMap};
use crate::geometry::Pose;
use crate::linalg::{extend_orthonormal, Matrix};
use crate::scalar::Scalar;
use crate::seeding::{rng_for, Stream};
use crate::simulator::{ground_truth, CameraRig, Scene, VisibleObject};

use super::{DetectorError, DetectorOutput};

/// How the oracle detector departs from perfect detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    /// Per-coordinate Gaussian noise on object and pixel features.
    pub feature_noise_sigma: f64,
    /// Probability a visible object produces no proposal.
    pub dropout_prob: f64,
    /// Probability a proposal's feature is built from a wrong class.
    pub misclass_prob: f64,
    /// Objectness is uniform in `[lo, hi]`.
    pub objectness_range: [f64; 2],
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            feature_noise_sigma: 0.0,
            dropout_prob: 0.0,
            misclass_prob: 0.0,
            objectness_range: [1.0, 1.0],
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let [lo, hi] = self.objectness_range;
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return Err(DetectorError::InvalidConfig("feature_noise_sigma must be >= 0".into()));
        }
        if !(prob(self.dropout_prob) && prob(self.misclass_prob)) {
            return Err(DetectorError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(prob(lo) && prob(hi) && lo <= hi) {
            return Err(DetectorError::InvalidConfig("objectness_range must satisfy 0 <= lo <= hi <= 1".into()));
        }
        Ok(())
    }
}

/// Fixed linear link between object features (`d2`) and pixel features (`d1`).
///
/// Columns are orthonormal and span every class embedding, so lifting a
/// projected class embedding returns it exactly: `(z_l · B) · Bᵀ = z_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBasis<T> {
    /// `d2 × d1`.
    matrix: Matrix<T>,
}

impl<T: Scalar> PixelBasis<T> {
    pub fn new(table: &ClassEmbeddingTable<T>, pixel_dim: usize, seed: u64) -> Result<Self, DetectorError> {
        let d2 = table.dim();
        if pixel_dim > d2 || table.len() > pixel_dim {
            return Err(DetectorError::InvalidConfig(format!(
                "need classes ({}) <= pixel dim ({pixel_dim}) <= object dim ({d2})",
                table.len()
            )));
        }
        let mut rng = rng_for(seed, Stream::PixelBasis, 0);
        let seeds: Vec<Vec<T>> = table.rows().map(<[T]>::to_vec).collect();
        let cols = extend_orthonormal(&seeds, d2, pixel_dim, &mut rng);
        Ok(Self {
            matrix: Matrix::from_columns(&cols),
        })
    }

    pub fn object_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn pixel_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    /// Object feature → pixel feature.
    pub fn project(&self, object_feature: &[T]) -> Vec<T> {
        self.matrix.apply(object_feature)
    }

    /// Pixel feature → object feature (transpose map).
    pub fn lift(&self, pixel_feature: &[T]) -> Vec<T> {
        self.matrix.apply_transpose(pixel_feature)
    }
}

/// Seeded stand-in for a trained detector that reads the simulator's ground
/// truth.
///
/// Per visible object, in scene order, it draws: misclassification, the
/// feature noise, objectness, then dropout. Pixel features under each visible
/// object (kept or dropped) are the projected object feature plus noise;
/// background pixels carry noise only. All randomness is keyed by
/// `(corruption.seed, frame_index)`.
pub fn oracle_detect_visible<T: Scalar>(
    truth: &[VisibleObject],
    rig: &CameraRig,
    table: &ClassEmbeddingTable<T>,
    basis: &PixelBasis<T>,
    corruption: &CorruptionConfig,
    frame_index: u64,
) -> DetectorOutput<T> {
    let (fw, fh) = (rig.intrinsics.width / rig.stride, rig.intrinsics.height / rig.stride);
    let d1 = basis.pixel_dim();
    let mut rng = rng_for(corruption.seed, Stream::Detector, frame_index);
    let sigma = corruption.feature_noise_sigma;
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma"));
    let c = table.len();

    let mut out = DetectorOutput::empty(FeatureMap::zeros(fw, fh, d1));
    let mut pixel_sources: Vec<(usize, Vec<T>)> = Vec::with_capacity(truth.len());
    for (k, obj) in truth.iter().enumerate() {
        let mut class = obj.class.min(c - 1);
        if c > 1 && rng.gen::<f64>() < corruption.misclass_prob {
            let shift = rng.gen_range(1..c);
            class = (class + shift) % c;
        }
        let feature: Vec<T> = table
            .row(class)
            .iter()
            .map(|&z| match &noise {
                Some(n) => z + T::lit(n.sample(&mut rng)),
                None => z,
            })
            .collect();
        let [lo, hi] = corruption.objectness_range;
        let objectness = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let dropped = rng.gen::<f64>() < corruption.dropout_prob;
        pixel_sources.push((k, basis.project(&feature)));
        if !dropped {
            out.boxes.push(obj.bbox);
            out.masks.push(obj.mask.clone());
            out.objectness.push(T::lit(objectness));
            out.object_features.push(feature);
        }
    }

    for (k, projected) in &pixel_sources {
        for (i, j) in truth[*k].mask.pixels() {
            out.pixel_features.pixel_mut(i, j).copy_from_slice(projected);
        }
    }
    if noise.is_some() {
        let mut data = out.pixel_features.as_slice().to_vec();
        for v in &mut data {
            let n: f64 = rng.sample(StandardNormal);
            *v = *v + T::lit(n * sigma);
        }
        out.pixel_features = FeatureMap::from_vec(fw, fh, d1, data);
    }
    out
}

/// [`oracle_detect_visible`] after extracting the ground truth for `pose`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_detect<T: Scalar>(
    scene: &Scene,
    pose: &Pose<f64>,
    depth: &DepthMap<f64>,
    rig: &CameraRig,
    table: &ClassEmbeddingTable<T>,
    basis: &PixelBasis<T>,
    corruption: &CorruptionConfig,
    frame_index: u64,
) -> DetectorOutput<T> {
    let truth = ground_truth(scene, pose, depth, rig);
    oracle_detect_visible(&truth, rig, table, basis, corruption, frame_index)
}
