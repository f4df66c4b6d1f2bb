use serde::{Deserialize, Serialize};

use crate::embedding::ClassEmbeddingTable;
use crate::features::FeatureMap;
use crate::geometry::CellIndex;
use crate::memory::{check_dim, enhance_with, EnhancementParams, MemoryError, MemoryGrid, View};
use crate::scalar::{dot, norm, Scalar};

/// Numerator of the occupancy ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyRatio {
    /// `‖M‖₂ / V`: the detection rate for unit-norm features.
    #[default]
    RawNorm,
    /// `‖M / V‖₂ / V`.
    NormalizedNorm,
}

/// Binary occupancy `O`, row-major `(u, v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    pub breadth: usize,
    pub length: usize,
    pub occupied: Vec<bool>,
}

impl OccupancyMap {
    pub fn get(&self, cell: CellIndex) -> bool {
        self.occupied[cell.u * self.length + cell.v]
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

/// Semantic map `S`, row-major `(u, v)`. `0` marks an unoccupied cell and
/// `c + 1` a cell labelled with class `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap {
    pub breadth: usize,
    pub length: usize,
    pub labels: Vec<u32>,
}

impl SemanticMap {
    /// Class at `cell`, or `None` when unoccupied.
    pub fn class_at(&self, cell: CellIndex) -> Option<usize> {
        match self.labels[cell.u * self.length + cell.v] {
            0 => None,
            s => Some(s as usize - 1),
        }
    }
}

/// `r_o` for one cell; zero where `V = 0`.
pub fn occupancy_ratio<T: Scalar>(grid: &MemoryGrid<T>, cell: CellIndex, mode: OccupancyRatio) -> T {
    let v = grid.view_count(cell);
    if v == 0 {
        return T::zero();
    }
    let v = T::lit(v as f64);
    let n = norm(grid.cell_feature(cell));
    match mode {
        OccupancyRatio::RawNorm => n / v,
        OccupancyRatio::NormalizedNorm => n / v / v,
    }
}

pub fn occupancy<T: Scalar>(grid: &MemoryGrid<T>, tau_o: T, mode: OccupancyRatio) -> OccupancyMap {
    let occupied = grid
        .cells()
        .map(|c| grid.view_count(c) > 0 && occupancy_ratio(grid, c, mode) >= tau_o)
        .collect();
    OccupancyMap {
        breadth: grid.breadth(),
        length: grid.length(),
        occupied,
    }
}

/// Class whose embedding has the highest cosine with `feature`; ties go to
/// the lowest index. `None` for a zero feature.
pub fn decode_cell<T: Scalar>(feature: &[T], table: &ClassEmbeddingTable<T>) -> Option<usize> {
    let n = norm(feature);
    if n == T::zero() {
        return None;
    }
    let mut best: Option<(usize, T)> = None;
    for (c, row) in table.rows().enumerate() {
        let cos = dot(feature, row) / (n * norm(row));
        match best {
            Some((_, b)) if cos <= b => {}
            _ => best = Some((c, cos)),
        }
    }
    best.map(|(c, _)| c)
}

pub fn decode_semantic_map<T: Scalar>(
    grid: &MemoryGrid<T>,
    occupancy: &OccupancyMap,
    table: &ClassEmbeddingTable<T>,
) -> SemanticMap {
    let labels = grid
        .cells()
        .map(|cell| {
            if !occupancy.get(cell) {
                return 0;
            }
            decode_cell(grid.cell_feature(cell), table).map_or(0, |c| c as u32 + 1)
        })
        .collect();
    SemanticMap {
        breadth: grid.breadth(),
        length: grid.length(),
        labels,
    }
}

/// Enhancement with the class embedding of each occupied cell as the memory
/// feature.
pub fn explicit_read<T: Scalar>(
    pixel_features: &FeatureMap<T>,
    map: &SemanticMap,
    grid: &MemoryGrid<T>,
    table: &ClassEmbeddingTable<T>,
    view: &View<'_, T>,
    params: &EnhancementParams<T>,
) -> Result<FeatureMap<T>, MemoryError> {
    check_dim("memory feature dim", params.memory_dim(), table.dim())?;
    check_dim("semantic map breadth", grid.breadth(), map.breadth)?;
    check_dim("semantic map length", grid.length(), map.length)?;
    enhance_with(
        pixel_features,
        view,
        grid.geometry(),
        &params.projection,
        params.lambda,
        |cell| map.class_at(cell).map(|c| table.row(c).to_vec()),
    )
}

/// Binary PPM (`P6`) with one pixel per cell: `x = u`, `y = v`. Background is
/// black; class colours are spread around the hue circle.
pub fn semantic_map_ppm(map: &SemanticMap, class_count: usize) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", map.breadth, map.length).into_bytes();
    for v in 0..map.length {
        for u in 0..map.breadth {
            let rgb = match map.labels[u * map.length + v] {
                0 => [0, 0, 0],
                s => class_colour(s as usize - 1, class_count),
            };
            out.extend_from_slice(&rgb);
        }
    }
    out
}

fn class_colour(class: usize, count: usize) -> [u8; 3] {
    let h = class as f64 / count.max(1) as f64 * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let s = |c: f64| (55.0 + 200.0 * c).round() as u8;
    [s(r), s(g), s(b)]
}
