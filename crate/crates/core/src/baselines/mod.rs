//! Comparison memories: the explicit object memory (occupancy plus semantic
//! map over the same `M`/`V` grid) and the recurrent implicit pixel memory.

mod explicit;
mod pixel;

pub use explicit::{
    decode_cell, decode_semantic_map, explicit_read, occupancy, occupancy_ratio, semantic_map_ppm, OccupancyMap,
    OccupancyRatio, SemanticMap,
};
pub use pixel::{pixel_read, pixel_write, GruCell, PixelMemoryGrid};
