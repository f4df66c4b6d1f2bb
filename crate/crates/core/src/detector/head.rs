use serde::{Deserialize, Serialize};

use crate::embedding::ClassEmbeddingTable;
use crate::features::FeatureMap;
use crate::memory::{max_class_score, View};
use crate::memories::MemoryReader;
use crate::scalar::Scalar;

use super::{BoundingBox, DetectorError, DetectorOutput, PixelBasis};

/// A scored, classified box as consumed by the evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: usize,
    pub score: f64,
    pub bbox: BoundingBox,
}

/// Fixed detection head: pools pixel features under each proposal mask and
/// lifts the pooled vector back into object-feature space with the transpose
/// of the pixel basis.
#[derive(Debug, Clone)]
pub struct DetectionHead<T> {
    basis: PixelBasis<T>,
}

impl<T: Scalar> DetectionHead<T> {
    pub fn new(basis: PixelBasis<T>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &PixelBasis<T> {
        &self.basis
    }

    /// Recomputes every proposal's object feature from `pixel_features`.
    /// Boxes, masks and objectness are carried over unchanged.
    pub fn rescore(
        &self,
        base: &DetectorOutput<T>,
        pixel_features: FeatureMap<T>,
    ) -> Result<DetectorOutput<T>, DetectorError> {
        let (w, h) = (base.pixel_features.width(), base.pixel_features.height());
        if pixel_features.width() != w || pixel_features.height() != h {
            return Err(DetectorError::DimensionMismatch {
                what: "enhanced feature map",
                expected: w * h,
                found: pixel_features.width() * pixel_features.height(),
            });
        }
        if pixel_features.dim() != self.basis.pixel_dim() {
            return Err(DetectorError::DimensionMismatch {
                what: "pixel feature dim",
                expected: self.basis.pixel_dim(),
                found: pixel_features.dim(),
            });
        }
        let object_features = base
            .masks
            .iter()
            .map(|m| {
                let pooled = pixel_features
                    .masked_mean(m)
                    .unwrap_or_else(|| vec![T::zero(); pixel_features.dim()]);
                self.basis.lift(&pooled)
            })
            .collect();
        Ok(DetectorOutput {
            boxes: base.boxes.clone(),
            masks: base.masks.clone(),
            objectness: base.objectness.clone(),
            object_features,
            pixel_features,
        })
    }

    /// Head applied to the unenhanced pixel features.
    pub fn base(&self, base: &DetectorOutput<T>) -> Result<DetectorOutput<T>, DetectorError> {
        self.rescore(base, base.pixel_features.clone())
    }
}

/// Runs the memory read on the base pixel features and re-scores every
/// proposal from the enhanced features.
pub fn detect_enhanced<T: Scalar, M: MemoryReader<T> + ?Sized>(
    base: &DetectorOutput<T>,
    memory: &M,
    view: &View<'_, T>,
    head: &DetectionHead<T>,
) -> Result<DetectorOutput<T>, DetectorError> {
    let enhanced = memory
        .read(&base.pixel_features, view)
        .map_err(|e| DetectorError::InvalidConfig(e.to_string()))?;
    head.rescore(base, enhanced)
}

/// One detection per proposal: the best-scoring class and its score.
pub fn detections<T: Scalar>(output: &DetectorOutput<T>, table: &ClassEmbeddingTable<T>) -> Vec<Detection> {
    output
        .object_features
        .iter()
        .zip(&output.objectness)
        .zip(&output.boxes)
        .filter_map(|((f, &o), b)| {
            let (class, score) = max_class_score(f, table, o)?;
            Some(Detection {
                class,
                score: score.to_f64_lossless(),
                bbox: *b,
            })
        })
        .collect()
}
