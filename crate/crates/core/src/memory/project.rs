use std::collections::BTreeMap;

use crate::detector::DetectorOutput;
use crate::embedding::ClassEmbeddingTable;
use crate::features::{DepthMap, Mask};
use crate::geometry::{pixel_to_world, CameraIntrinsics, CellIndex, Extrinsics, GridGeometry};
use crate::scalar::Scalar;

use super::{check_dim, max_class_score, MemoryError};

/// One camera view at feature-map resolution: depth, intrinsics rescaled to
/// the feature map, world→camera extrinsics and the usable depth range.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, T> {
    pub depth: &'a DepthMap<T>,
    pub intrinsics: &'a CameraIntrinsics<T>,
    pub extrinsics: &'a Extrinsics<T>,
    pub max_depth: T,
}

impl<'a, T: Scalar> View<'a, T> {
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    /// Cell hit by the depth ray of pixel `(i, j)`, if the depth is valid and
    /// the hit lies on the grid.
    #[inline]
    pub fn cell_of(&self, i: usize, j: usize, geometry: &GridGeometry<T>) -> Option<CellIndex> {
        let d = self.depth.valid(i, j, self.max_depth)?;
        let p = pixel_to_world(T::lit(i as f64), T::lit(j as f64), d, self.intrinsics, self.extrinsics).ok()?;
        geometry.world_to_cell(p[0], p[1]).ok()
    }

    /// [`View::cell_of`] for every pixel, row-major.
    pub fn cell_map(&self, geometry: &GridGeometry<T>) -> Vec<Option<CellIndex>> {
        let mut out = Vec::with_capacity(self.width() * self.height());
        for i in 0..self.height() {
            for j in 0..self.width() {
                out.push(self.cell_of(i, j, geometry));
            }
        }
        out
    }
}

/// A proposal that passed the confidence threshold.
#[derive(Debug, Clone, Copy)]
pub struct ConfidentObject<'a, T> {
    pub index: usize,
    pub score: T,
    pub feature: &'a [T],
    pub mask: &'a Mask,
}

/// Keeps proposals whose best class score is strictly above `tau_s`, in
/// proposal order.
pub fn select_confident<'a, T: Scalar>(
    output: &'a DetectorOutput<T>,
    table: &ClassEmbeddingTable<T>,
    tau_s: T,
) -> Vec<ConfidentObject<'a, T>> {
    output
        .object_features
        .iter()
        .zip(&output.objectness)
        .zip(&output.masks)
        .enumerate()
        .filter_map(|(index, ((feature, &o), mask))| {
            let (_, score) = max_class_score(feature, table, o)?;
            (score > tau_s).then_some(ConfidentObject {
                index,
                score,
                feature,
                mask,
            })
        })
        .collect()
}

/// Object features of one frame scattered onto the grid (`F`), plus the set of
/// cells the frame observed.
///
/// `F` is stored sparsely: only cells touched by at least one confident object
/// pixel carry a feature, everything else is implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFeatureFrame<T> {
    breadth: usize,
    length: usize,
    feature_dim: usize,
    cells: BTreeMap<usize, Vec<T>>,
    visible: Vec<bool>,
    skipped_pixels: usize,
}

impl<T: Scalar> ProjectedFeatureFrame<T> {
    /// Frame with no object features and no visible cells.
    pub fn empty(breadth: usize, length: usize, feature_dim: usize) -> Self {
        Self {
            breadth,
            length,
            feature_dim,
            cells: BTreeMap::new(),
            visible: vec![false; breadth * length],
            skipped_pixels: 0,
        }
    }

    /// Builds a frame directly from per-cell features and visibility.
    pub fn from_cells(
        breadth: usize,
        length: usize,
        feature_dim: usize,
        cells: BTreeMap<usize, Vec<T>>,
        visible: Vec<bool>,
    ) -> Self {
        assert_eq!(visible.len(), breadth * length, "visibility raster size");
        for (&flat, f) in &cells {
            assert!(flat < breadth * length, "cell out of range");
            assert_eq!(f.len(), feature_dim, "cell feature length");
        }
        Self {
            breadth,
            length,
            feature_dim,
            cells,
            visible,
            skipped_pixels: 0,
        }
    }

    pub fn breadth(&self) -> usize {
        self.breadth
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Cells carrying a projected feature, keyed by row-major flat index.
    pub fn object_cells(&self) -> &BTreeMap<usize, Vec<T>> {
        &self.cells
    }

    pub fn feature_at(&self, flat: usize) -> Option<&[T]> {
        self.cells.get(&flat).map(Vec::as_slice)
    }

    pub fn visible(&self) -> &[bool] {
        &self.visible
    }

    /// Object pixels dropped for invalid depth or for landing off the grid.
    pub fn skipped_pixels(&self) -> usize {
        self.skipped_pixels
    }

    /// Dense `a × l × d2` copy of `F`.
    pub fn dense_features(&self) -> Vec<T> {
        let d = self.feature_dim;
        let mut out = vec![T::zero(); self.breadth * self.length * d];
        for (&flat, f) in &self.cells {
            out[flat * d..(flat + 1) * d].copy_from_slice(f);
        }
        out
    }
}

/// Ray-casts every confident object pixel to the ground plane and averages
/// the object features landing in each cell. Every pixel of the frame with a
/// valid depth marks its cell visible, object or not.
pub fn project_object_features<T: Scalar>(
    confident: &[ConfidentObject<'_, T>],
    view: &View<'_, T>,
    geometry: &GridGeometry<T>,
    feature_dim: usize,
) -> Result<ProjectedFeatureFrame<T>, MemoryError> {
    let (w, h) = (view.width(), view.height());
    for obj in confident {
        check_dim("mask width", w, obj.mask.width())?;
        check_dim("mask height", h, obj.mask.height())?;
        check_dim("object feature", feature_dim, obj.feature.len())?;
    }
    let cell_map = view.cell_map(geometry);
    let mut frame = ProjectedFeatureFrame::empty(geometry.breadth, geometry.length, feature_dim);
    for cell in cell_map.iter().flatten() {
        frame.visible[geometry.flat(*cell)] = true;
    }

    let mut sums: BTreeMap<usize, (Vec<T>, usize)> = BTreeMap::new();
    for obj in confident {
        for (i, j) in obj.mask.pixels() {
            let Some(cell) = cell_map[i * w + j] else {
                frame.skipped_pixels += 1;
                continue;
            };
            let entry = sums
                .entry(geometry.flat(cell))
                .or_insert_with(|| (vec![T::zero(); feature_dim], 0));
            for (s, &f) in entry.0.iter_mut().zip(obj.feature) {
                *s = *s + f;
            }
            entry.1 += 1;
        }
    }
    frame.cells = sums
        .into_iter()
        .map(|(flat, (sum, n))| {
            let n = T::lit(n as f64);
            (flat, sum.into_iter().map(|s| s / n).collect())
        })
        .collect();
    Ok(frame)
}
