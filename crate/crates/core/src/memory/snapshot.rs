//! Binary memory snapshots.
//!
//! Layout, little-endian throughout:
//!
//! | field       | type            |
//! |-------------|-----------------|
//! | magic       | `b"IOMS"`       |
//! | version     | `u32` (= 1)     |
//! | breadth a   | `u32`           |
//! | length l    | `u32`           |
//! | feature d2  | `u32`           |
//! | cell_size   | `f64`           |
//! | origin x, y | `f64`, `f64`    |
//! | M           | `f32 × a·l·d2`, row-major `(u, v, k)` |
//! | V           | `u32 × a·l`, row-major `(u, v)` |
//!
//! `M` is stored in single precision, so `f32` grids round-trip bit for bit
//! while `f64` grids are rounded to the nearest `f32`.

use thiserror::Error;

use crate::geometry::GridGeometry;
use crate::scalar::Scalar;

use super::MemoryGrid;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"IOMS";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 3 * 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("malformed snapshot at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

fn malformed(offset: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Malformed {
        offset,
        reason: reason.into(),
    }
}

pub fn snapshot_save<T: Scalar>(grid: &MemoryGrid<T>) -> Vec<u8> {
    let g = grid.geometry();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.features().len() * 4 + grid.view_counts().len() * 4);
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.breadth as u32).to_le_bytes());
    out.extend_from_slice(&(g.length as u32).to_le_bytes());
    out.extend_from_slice(&(grid.feature_dim() as u32).to_le_bytes());
    out.extend_from_slice(&g.cell_size.to_f64_lossless().to_le_bytes());
    out.extend_from_slice(&g.origin[0].to_f64_lossless().to_le_bytes());
    out.extend_from_slice(&g.origin[1].to_f64_lossless().to_le_bytes());
    for m in grid.features() {
        out.extend_from_slice(&m.to_f32_lossy().to_le_bytes());
    }
    for v in grid.view_counts() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn snapshot_load<T: Scalar>(bytes: &[u8]) -> Result<MemoryGrid<T>, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(malformed(4, format!("unsupported version {version}")));
    }
    let breadth = r.u32()? as usize;
    let length = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let cell_at = r.pos;
    let cell_size = r.f64()?;
    let ox = r.f64()?;
    let oy = r.f64()?;
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(malformed(cell_at, "cell size must be positive"));
    }
    if !(ox.is_finite() && oy.is_finite()) {
        return Err(malformed(cell_at + 8, "non-finite origin"));
    }
    let cells = breadth
        .checked_mul(length)
        .ok_or_else(|| malformed(8, "grid size overflows"))?;
    let values = cells
        .checked_mul(dim)
        .ok_or_else(|| malformed(16, "feature count overflows"))?;
    let expected = values
        .checked_add(cells)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| malformed(16, "payload size overflows"))?;
    if bytes.len() < expected {
        return Err(malformed(bytes.len(), format!("truncated: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(malformed(expected, "trailing bytes"));
    }
    let mut features = Vec::with_capacity(values);
    for _ in 0..values {
        let at = r.pos;
        let m = r.f32()?;
        if !m.is_finite() {
            return Err(malformed(at, "non-finite feature"));
        }
        features.push(T::lit(m as f64));
    }
    let mut counts = Vec::with_capacity(cells);
    for _ in 0..cells {
        counts.push(r.u32()?);
    }
    let geometry = GridGeometry {
        origin: [T::lit(ox), T::lit(oy)],
        cell_size: T::lit(cell_size),
        breadth,
        length,
    };
    Ok(MemoryGrid::from_parts(geometry, dim, features, counts))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.bytes.len() - self.pos < n {
            return Err(malformed(self.pos, "unexpected end of snapshot"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, SnapshotError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
