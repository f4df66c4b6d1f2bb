//! Base-detector contract, the synthetic oracle detector and the detection
//! head stub that turns (possibly enhanced) pixel features into scored boxes.

mod head;
mod oracle;

pub use head::{detect_enhanced, detections, Detection, DetectionHead};
pub use oracle::{oracle_detect, oracle_detect_visible, CorruptionConfig, PixelBasis};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMap, Mask};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned box in image pixels, `x` along columns and `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }
}

/// Per-frame output of the base detector.
///
/// Masks live at feature-map resolution; boxes are in image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput<T> {
    pub boxes: Vec<BoundingBox>,
    pub masks: Vec<Mask>,
    pub objectness: Vec<T>,
    pub object_features: Vec<Vec<T>>,
    pub pixel_features: FeatureMap<T>,
}

impl<T: Scalar> DetectorOutput<T> {
    pub fn empty(pixel_features: FeatureMap<T>) -> Self {
        Self {
            boxes: Vec::new(),
            masks: Vec::new(),
            objectness: Vec::new(),
            object_features: Vec::new(),
            pixel_features,
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Checks the structural invariants: parallel arrays, valid boxes,
    /// non-empty masks at feature resolution, finite features.
    pub fn validate(&self) -> Result<(), DetectorError> {
        let k = self.boxes.len();
        for (what, n) in [
            ("masks", self.masks.len()),
            ("objectness", self.objectness.len()),
            ("object features", self.object_features.len()),
        ] {
            if n != k {
                return Err(DetectorError::DimensionMismatch {
                    what,
                    expected: k,
                    found: n,
                });
            }
        }
        let (w, h) = (self.pixel_features.width(), self.pixel_features.height());
        for (b, m) in self.boxes.iter().zip(&self.masks) {
            if !b.is_valid() {
                return Err(DetectorError::InvalidConfig(format!("degenerate box {b:?}")));
            }
            if m.width() != w || m.height() != h {
                return Err(DetectorError::DimensionMismatch {
                    what: "mask width",
                    expected: w,
                    found: m.width(),
                });
            }
            if m.is_empty() {
                return Err(DetectorError::InvalidConfig("empty proposal mask".into()));
            }
        }
        let finite = self.object_features.iter().flatten().all(|v| v.is_finite())
            && self.pixel_features.as_slice().iter().all(|v| v.is_finite());
        if !finite {
            return Err(DetectorError::InvalidConfig("non-finite features".into()));
        }
        Ok(())
    }
}
