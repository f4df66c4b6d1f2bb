//! Implicit object memory.
//!
//! A [`MemoryGrid`] stores, per ground-plane cell, the running sum `M` of
//! projected object features and the number of frames `V` in which the cell
//! was observed. Writing adds one [`ProjectedFeatureFrame`]; reading divides
//! by the view count and splats the result back onto the pixel feature map
//! through each pixel's depth ray.
//!
//! A grid is single-writer: writes must be serialised in temporal order by
//! the caller. Concurrent reads are fine.

mod project;
mod read;
mod score;
mod snapshot;

pub use project::{project_object_features, select_confident, ConfidentObject, ProjectedFeatureFrame, View};
pub use read::{enhance_with, read, EnhancementParams};
pub use score::{max_class_score, score, score_one};
pub use snapshot::{snapshot_load, snapshot_save, SnapshotError, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use thiserror::Error;

use crate::geometry::{CellIndex, GridGeometry};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), MemoryError> {
    if expected == found {
        Ok(())
    } else {
        Err(MemoryError::DimensionMismatch { what, expected, found })
    }
}

/// Accumulated object features `M` (`a × l × d2`) and view counts `V` (`a × l`).
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryGrid<T> {
    geometry: GridGeometry<T>,
    feature_dim: usize,
    features: Vec<T>,
    view_counts: Vec<u32>,
}

impl<T: Scalar> MemoryGrid<T> {
    pub fn new(geometry: GridGeometry<T>, feature_dim: usize) -> Self {
        let n = geometry.cell_count();
        Self {
            geometry,
            feature_dim,
            features: vec![T::zero(); n * feature_dim],
            view_counts: vec![0; n],
        }
    }

    pub(crate) fn from_parts(
        geometry: GridGeometry<T>,
        feature_dim: usize,
        features: Vec<T>,
        view_counts: Vec<u32>,
    ) -> Self {
        assert_eq!(features.len(), geometry.cell_count() * feature_dim);
        assert_eq!(view_counts.len(), geometry.cell_count());
        Self {
            geometry,
            feature_dim,
            features,
            view_counts,
        }
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    pub fn breadth(&self) -> usize {
        self.geometry.breadth
    }

    pub fn length(&self) -> usize {
        self.geometry.length
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Raw `M`, row-major `(u, v, k)`.
    pub fn features(&self) -> &[T] {
        &self.features
    }

    /// Raw `V`, row-major `(u, v)`.
    pub fn view_counts(&self) -> &[u32] {
        &self.view_counts
    }

    #[inline]
    pub fn cell_feature(&self, cell: CellIndex) -> &[T] {
        let o = self.geometry.flat(cell) * self.feature_dim;
        &self.features[o..o + self.feature_dim]
    }

    #[inline]
    pub fn view_count(&self, cell: CellIndex) -> u32 {
        self.view_counts[self.geometry.flat(cell)]
    }

    /// `|M|` at one cell: `M / V`, or `None` when the cell was never viewed.
    pub fn normalized_cell(&self, cell: CellIndex) -> Option<Vec<T>> {
        let v = self.view_count(cell);
        if v == 0 {
            return None;
        }
        let inv = T::lit(v as f64);
        Some(self.cell_feature(cell).iter().map(|&m| m / inv).collect())
    }

    /// True when no cell holds a nonzero feature.
    pub fn is_blank(&self) -> bool {
        self.features.iter().all(|&m| m == T::zero())
    }

    /// Clears `M` and `V`.
    pub fn reset(&mut self) {
        self.features.iter_mut().for_each(|m| *m = T::zero());
        self.view_counts.iter_mut().for_each(|v| *v = 0);
    }

    /// `V = 0 ⇒ M = 0` and every entry finite.
    pub fn is_consistent(&self) -> bool {
        self.view_counts
            .iter()
            .zip(self.features.chunks(self.feature_dim.max(1)))
            .all(|(&v, m)| m.iter().all(|x| x.is_finite()) && (v > 0 || m.iter().all(|&x| x == T::zero())))
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> {
        let (a, l) = (self.geometry.breadth, self.geometry.length);
        (0..a).flat_map(move |u| (0..l).map(move |v| CellIndex { u, v }))
    }
}

/// Adds a projected frame: `M' = M + F`, and `V' = V + 1` on visible cells.
pub fn write<T: Scalar>(grid: &mut MemoryGrid<T>, frame: &ProjectedFeatureFrame<T>) -> Result<(), MemoryError> {
    check_dim("grid breadth", grid.breadth(), frame.breadth())?;
    check_dim("grid length", grid.length(), frame.length())?;
    check_dim("feature dim", grid.feature_dim, frame.feature_dim())?;
    let d = grid.feature_dim;
    for (&flat, f) in frame.object_cells() {
        let m = &mut grid.features[flat * d..(flat + 1) * d];
        for (mk, &fk) in m.iter_mut().zip(f) {
            *mk = *mk + fk;
        }
    }
    for (v, &seen) in grid.view_counts.iter_mut().zip(frame.visible()) {
        if seen {
            *v = v.saturating_add(1);
        }
    }
    Ok(())
}

/// `|M|` for every cell (`a × l × d2`, row-major); zero where `V = 0`.
pub fn normalize<T: Scalar>(grid: &MemoryGrid<T>) -> Vec<T> {
    let d = grid.feature_dim;
    let mut out = vec![T::zero(); grid.features.len()];
    for (flat, &v) in grid.view_counts.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let inv = T::lit(v as f64);
        for (o, &m) in out[flat * d..(flat + 1) * d].iter_mut().zip(&grid.features[flat * d..]) {
            *o = m / inv;
        }
    }
    out
}

#[cfg(test)]
mod tests;
