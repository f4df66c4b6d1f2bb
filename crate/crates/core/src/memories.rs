//! The four memory variants behind one read/write interface.

use serde::{Deserialize, Serialize};

use crate::baselines::{decode_cell, occupancy_ratio, pixel_write, GruCell, OccupancyRatio, PixelMemoryGrid};
use crate::detector::DetectorOutput;
use crate::embedding::ClassEmbeddingTable;
use crate::features::FeatureMap;
use crate::geometry::{CellIndex, GridGeometry};
use crate::memory::{
    enhance_with, project_object_features, select_confident, write, EnhancementParams, MemoryError, MemoryGrid, View,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryVariant {
    None,
    ImplicitObject,
    ExplicitObject,
    ImplicitPixel,
}

impl MemoryVariant {
    pub const ALL: [MemoryVariant; 4] = [
        MemoryVariant::None,
        MemoryVariant::ImplicitObject,
        MemoryVariant::ExplicitObject,
        MemoryVariant::ImplicitPixel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryVariant::None => "none",
            MemoryVariant::ImplicitObject => "implicit-object",
            MemoryVariant::ExplicitObject => "explicit-object",
            MemoryVariant::ImplicitPixel => "implicit-pixel",
        }
    }

    /// Enhancement weight used when none is configured.
    pub fn default_lambda(self) -> f64 {
        match self {
            MemoryVariant::None => 0.0,
            MemoryVariant::ImplicitObject => 5.0,
            MemoryVariant::ExplicitObject => 100.0,
            MemoryVariant::ImplicitPixel => 20.0,
        }
    }
}

impl std::str::FromStr for MemoryVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MemoryVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown memory variant `{s}`"))
    }
}

/// Anything that can enhance a pixel feature map for the current view.
pub trait MemoryReader<T> {
    fn read(&self, pixel_features: &FeatureMap<T>, view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError>;
}

/// A memory that is written once per frame after detection.
pub trait ExternalMemory<T>: MemoryReader<T> + Send {
    /// Updates the memory from the base detector's output for this frame.
    fn write(&mut self, base: &DetectorOutput<T>, view: &View<'_, T>) -> Result<(), MemoryError>;

    fn reset(&mut self);

    /// Grid the memory lives on; `None` for a memory without one.
    fn geometry(&self) -> Option<&GridGeometry<T>>;

    /// Memory feature (before projection) read back at `cell`, `None` when
    /// the cell must leave pixels untouched.
    fn cell_feature(&self, cell: CellIndex) -> Option<Vec<T>>;

    fn params(&self) -> Option<&EnhancementParams<T>>;

    fn params_mut(&mut self) -> Option<&mut EnhancementParams<T>>;

    /// Accumulated object grid, for memories that keep one.
    fn object_grid(&self) -> Option<&MemoryGrid<T>> {
        None
    }
}

fn read_via<T: Scalar, M: ExternalMemory<T> + ?Sized>(
    memory: &M,
    pixel_features: &FeatureMap<T>,
    view: &View<'_, T>,
) -> Result<FeatureMap<T>, MemoryError> {
    match (memory.geometry(), memory.params()) {
        (Some(geometry), Some(params)) => enhance_with(
            pixel_features,
            view,
            geometry,
            &params.projection,
            params.lambda,
            |cell| memory.cell_feature(cell),
        ),
        _ => Ok(pixel_features.clone()),
    }
}

/// Passes pixel features through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMemory;

impl<T: Scalar> MemoryReader<T> for NoMemory {
    fn read(&self, pixel_features: &FeatureMap<T>, _view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError> {
        Ok(pixel_features.clone())
    }
}

impl<T: Scalar> ExternalMemory<T> for NoMemory {
    fn write(&mut self, _base: &DetectorOutput<T>, _view: &View<'_, T>) -> Result<(), MemoryError> {
        Ok(())
    }

    fn reset(&mut self) {}

    fn geometry(&self) -> Option<&GridGeometry<T>> {
        None
    }

    fn cell_feature(&self, _cell: CellIndex) -> Option<Vec<T>> {
        None
    }

    fn params(&self) -> Option<&EnhancementParams<T>> {
        None
    }

    fn params_mut(&mut self) -> Option<&mut EnhancementParams<T>> {
        None
    }
}

/// Ground-plane grid of accumulated object features.
#[derive(Debug, Clone)]
pub struct ImplicitObjectMemory<T> {
    pub grid: MemoryGrid<T>,
    pub params: EnhancementParams<T>,
    pub table: ClassEmbeddingTable<T>,
    pub tau_s: T,
}

impl<T: Scalar> ImplicitObjectMemory<T> {
    pub fn new(geometry: GridGeometry<T>, table: ClassEmbeddingTable<T>, params: EnhancementParams<T>, tau_s: T) -> Self {
        Self {
            grid: MemoryGrid::new(geometry, table.dim()),
            params,
            table,
            tau_s,
        }
    }
}

fn write_objects<T: Scalar>(
    grid: &mut MemoryGrid<T>,
    table: &ClassEmbeddingTable<T>,
    tau_s: T,
    base: &DetectorOutput<T>,
    view: &View<'_, T>,
) -> Result<(), MemoryError> {
    let confident = select_confident(base, table, tau_s);
    let frame = project_object_features(&confident, view, grid.geometry(), grid.feature_dim())?;
    write(grid, &frame)
}

impl<T: Scalar> MemoryReader<T> for ImplicitObjectMemory<T> {
    fn read(&self, pixel_features: &FeatureMap<T>, view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError> {
        crate::memory::read(pixel_features, &self.grid, view, &self.params)
    }
}

impl<T: Scalar> ExternalMemory<T> for ImplicitObjectMemory<T> {
    fn write(&mut self, base: &DetectorOutput<T>, view: &View<'_, T>) -> Result<(), MemoryError> {
        write_objects(&mut self.grid, &self.table, self.tau_s, base, view)
    }

    fn reset(&mut self) {
        self.grid.reset();
    }

    fn geometry(&self) -> Option<&GridGeometry<T>> {
        Some(self.grid.geometry())
    }

    fn cell_feature(&self, cell: CellIndex) -> Option<Vec<T>> {
        if self.grid.cell_feature(cell).iter().all(|&m| m == T::zero()) {
            return None;
        }
        self.grid.normalized_cell(cell)
    }

    fn params(&self) -> Option<&EnhancementParams<T>> {
        Some(&self.params)
    }

    fn params_mut(&mut self) -> Option<&mut EnhancementParams<T>> {
        Some(&mut self.params)
    }

    fn object_grid(&self) -> Option<&MemoryGrid<T>> {
        Some(&self.grid)
    }
}

/// Same grid as the implicit memory, read back as hard class labels.
#[derive(Debug, Clone)]
pub struct ExplicitObjectMemory<T> {
    pub grid: MemoryGrid<T>,
    pub params: EnhancementParams<T>,
    pub table: ClassEmbeddingTable<T>,
    pub tau_s: T,
    pub tau_o: T,
    pub ratio: OccupancyRatio,
}

impl<T: Scalar> ExplicitObjectMemory<T> {
    pub fn new(
        geometry: GridGeometry<T>,
        table: ClassEmbeddingTable<T>,
        params: EnhancementParams<T>,
        tau_s: T,
        tau_o: T,
        ratio: OccupancyRatio,
    ) -> Self {
        Self {
            grid: MemoryGrid::new(geometry, table.dim()),
            params,
            table,
            tau_s,
            tau_o,
            ratio,
        }
    }

    /// Decoded class at `cell`, `None` when unoccupied.
    pub fn class_at(&self, cell: CellIndex) -> Option<usize> {
        if self.grid.view_count(cell) == 0 || occupancy_ratio(&self.grid, cell, self.ratio) < self.tau_o {
            return None;
        }
        decode_cell(self.grid.cell_feature(cell), &self.table)
    }
}

impl<T: Scalar> MemoryReader<T> for ExplicitObjectMemory<T> {
    fn read(&self, pixel_features: &FeatureMap<T>, view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError> {
        read_via(self, pixel_features, view)
    }
}

impl<T: Scalar> ExternalMemory<T> for ExplicitObjectMemory<T> {
    fn write(&mut self, base: &DetectorOutput<T>, view: &View<'_, T>) -> Result<(), MemoryError> {
        write_objects(&mut self.grid, &self.table, self.tau_s, base, view)
    }

    fn reset(&mut self) {
        self.grid.reset();
    }

    fn geometry(&self) -> Option<&GridGeometry<T>> {
        Some(self.grid.geometry())
    }

    fn cell_feature(&self, cell: CellIndex) -> Option<Vec<T>> {
        self.class_at(cell).map(|c| self.table.row(c).to_vec())
    }

    fn params(&self) -> Option<&EnhancementParams<T>> {
        Some(&self.params)
    }

    fn params_mut(&mut self) -> Option<&mut EnhancementParams<T>> {
        Some(&mut self.params)
    }

    fn object_grid(&self) -> Option<&MemoryGrid<T>> {
        Some(&self.grid)
    }
}

/// Recurrent per-cell merge of projected pixel features.
#[derive(Debug, Clone)]
pub struct ImplicitPixelMemory<T> {
    pub grid: PixelMemoryGrid<T>,
    pub params: EnhancementParams<T>,
}

impl<T: Scalar> ImplicitPixelMemory<T> {
    pub fn new(geometry: GridGeometry<T>, cell: GruCell<T>, params: EnhancementParams<T>) -> Self {
        Self {
            grid: PixelMemoryGrid::new(geometry, cell),
            params,
        }
    }
}

impl<T: Scalar> MemoryReader<T> for ImplicitPixelMemory<T> {
    fn read(&self, pixel_features: &FeatureMap<T>, view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError> {
        crate::baselines::pixel_read(pixel_features, &self.grid, view, &self.params)
    }
}

impl<T: Scalar> ExternalMemory<T> for ImplicitPixelMemory<T> {
    fn write(&mut self, base: &DetectorOutput<T>, view: &View<'_, T>) -> Result<(), MemoryError> {
        pixel_write(&mut self.grid, &base.pixel_features, view)
    }

    fn reset(&mut self) {
        self.grid.reset();
    }

    fn geometry(&self) -> Option<&GridGeometry<T>> {
        Some(self.grid.geometry())
    }

    fn cell_feature(&self, cell: CellIndex) -> Option<Vec<T>> {
        self.grid.is_observed(cell).then(|| self.grid.hidden(cell).to_vec())
    }

    fn params(&self) -> Option<&EnhancementParams<T>> {
        Some(&self.params)
    }

    fn params_mut(&mut self) -> Option<&mut EnhancementParams<T>> {
        Some(&mut self.params)
    }
}

impl<T: Scalar> MemoryReader<T> for Box<dyn ExternalMemory<T>> {
    fn read(&self, pixel_features: &FeatureMap<T>, view: &View<'_, T>) -> Result<FeatureMap<T>, MemoryError> {
        (**self).read(pixel_features, view)
    }
}
