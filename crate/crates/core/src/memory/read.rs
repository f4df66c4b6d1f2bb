use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMap;
use crate::geometry::{CellIndex, GridGeometry};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::{check_dim, MemoryError, MemoryGrid, View};

/// Linear map from memory features to pixel features and the weight applied
/// to the projected memory features.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementParams<T> {
    /// `d_mem × d_pixel`.
    pub projection: Matrix<T>,
    pub lambda: T,
}

impl<T: Scalar> EnhancementParams<T> {
    /// Default implicit-object weight.
    pub const DEFAULT_LAMBDA: f64 = 5.0;

    pub fn new(projection: Matrix<T>, lambda: T) -> Self {
        assert!(lambda >= T::zero(), "lambda must be non-negative");
        Self { projection, lambda }
    }

    /// Seeded random projection with orthonormal columns.
    pub fn seeded(memory_dim: usize, pixel_dim: usize, seed: u64, lambda: T) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (memory_dim, pixel_dim);
        let projection = if rows >= cols {
            Matrix::random_orthonormal_columns(rows, cols, &mut rng)
        } else {
            Matrix::random_orthonormal_columns(cols, rows, &mut rng).transpose()
        };
        Self::new(projection, lambda)
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self::new(self.projection.clone(), lambda)
    }

    pub fn memory_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn pixel_dim(&self) -> usize {
        self.projection.cols()
    }
}

/// Adds `λ · (z_m · W)` to every pixel whose ray hits a cell for which
/// `cell_feature` returns a feature. Pixels without one keep their value
/// bit for bit, and `λ = 0` returns `z_p` unchanged.
///
/// The projected feature of each cell is computed once per call.
pub fn enhance_with<T, F>(
    pixel_features: &FeatureMap<T>,
    view: &View<'_, T>,
    geometry: &GridGeometry<T>,
    projection: &Matrix<T>,
    lambda: T,
    mut cell_feature: F,
) -> Result<FeatureMap<T>, MemoryError>
where
    T: Scalar,
    F: FnMut(CellIndex) -> Option<Vec<T>>,
{
    check_dim("depth width", pixel_features.width(), view.width())?;
    check_dim("depth height", pixel_features.height(), view.height())?;
    check_dim("pixel feature dim", projection.cols(), pixel_features.dim())?;
    let mut out = pixel_features.clone();
    if lambda == T::zero() {
        return Ok(out);
    }
    let mut cache: HashMap<usize, Option<Vec<T>>> = HashMap::new();
    for i in 0..view.height() {
        for j in 0..view.width() {
            let Some(cell) = view.cell_of(i, j, geometry) else {
                continue;
            };
            let projected = match cache.entry(geometry.flat(cell)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let value = match cell_feature(cell) {
                        Some(m) => {
                            check_dim("memory feature dim", projection.rows(), m.len())?;
                            Some(projection.apply(&m))
                        }
                        None => None,
                    };
                    e.insert(value)
                }
            };
            if let Some(p) = projected {
                for (z, &pk) in out.pixel_mut(i, j).iter_mut().zip(p.iter()) {
                    *z = pk * lambda + *z;
                }
            }
        }
    }
    Ok(out)
}

/// Enhances pixel features with the normalised implicit object memory.
///
/// Cells that were never viewed, or whose accumulated feature is zero, leave
/// their pixels untouched.
pub fn read<T: Scalar>(
    pixel_features: &FeatureMap<T>,
    grid: &MemoryGrid<T>,
    view: &View<'_, T>,
    params: &EnhancementParams<T>,
) -> Result<FeatureMap<T>, MemoryError> {
    check_dim("memory feature dim", params.memory_dim(), grid.feature_dim())?;
    enhance_with(
        pixel_features,
        view,
        grid.geometry(),
        &params.projection,
        params.lambda,
        |cell| {
            if grid.cell_feature(cell).iter().all(|&m| m == T::zero()) {
                return None;
            }
            grid.normalized_cell(cell)
        },
    )
}
