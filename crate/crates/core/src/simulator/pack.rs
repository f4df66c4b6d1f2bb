//! Binary episode cache ("frame pack").
//!
//! Same header scheme as memory snapshots, little-endian:
//!
//! | field          | type                     |
//! |----------------|--------------------------|
//! | magic          | `b"IOME"`                |
//! | version        | `u32` (= 1)              |
//! | episode count  | `u32`                    |
//! | width, height  | `u32`, `u32` (image px)  |
//!
//! then per episode a `u32` frame count followed by, per frame, the pose as
//! four `f64` (`x, y, z, theta`) and the depth image as row-major `f32`.
//! Ground truth is not stored; it is recomputed from the scene on load.

use thiserror::Error;

use crate::features::DepthMap;
use crate::geometry::Pose;

use super::render::ground_truth;
use super::{CameraRig, Episode, Frame, Scene};

pub const PACK_MAGIC: [u8; 4] = *b"IOME";
pub const PACK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("malformed frame pack at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("frame pack resolution {found:?} does not match the camera {expected:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

pub fn write_frame_pack(episodes: &[Episode], rig: &CameraRig) -> Vec<u8> {
    let (w, h) = (rig.intrinsics.width, rig.intrinsics.height);
    let mut out = Vec::new();
    out.extend_from_slice(&PACK_MAGIC);
    out.extend_from_slice(&PACK_VERSION.to_le_bytes());
    out.extend_from_slice(&(episodes.len() as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for ep in episodes {
        out.extend_from_slice(&(ep.frames.len() as u32).to_le_bytes());
        for f in &ep.frames {
            assert_eq!((f.depth.width(), f.depth.height()), (w, h), "depth resolution");
            for v in [f.pose.x, f.pose.y, f.pose.z, f.pose.theta] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for &d in f.depth.as_slice() {
                out.extend_from_slice(&(d as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Parses a frame pack and recomputes each frame's ground truth.
pub fn read_frame_pack(bytes: &[u8], scene: &Scene, rig: &CameraRig) -> Result<Vec<Episode>, PackError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != PACK_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    let version = r.u32()?;
    if version != PACK_VERSION {
        return Err(malformed(4, format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let expected = (rig.intrinsics.width, rig.intrinsics.height);
    if (w, h) != expected {
        return Err(PackError::ResolutionMismatch {
            expected,
            found: (w, h),
        });
    }
    let mut episodes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let frames = r.u32()? as usize;
        let mut ep = Vec::with_capacity(frames.min(1 << 16));
        for _ in 0..frames {
            let at = r.pos;
            let (x, y, z, theta) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let pose = Pose::new(x, y, z, theta);
            if !pose.is_finite() {
                return Err(malformed(at, "non-finite pose"));
            }
            let mut depth = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                depth.push(r.f32()? as f64);
            }
            let depth = DepthMap::new(w, h, depth);
            let truth = ground_truth(scene, &pose, &depth, rig);
            ep.push(Frame { pose, depth, truth });
        }
        episodes.push(Episode { frames: ep });
    }
    if r.pos != bytes.len() {
        return Err(malformed(r.pos, "trailing bytes"));
    }
    Ok(episodes)
}

fn malformed(offset: usize, reason: impl Into<String>) -> PackError {
    PackError::Malformed {
        offset,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PackError> {
        if self.bytes.len() - self.pos < n {
            return Err(malformed(self.pos, "unexpected end of frame pack"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PackError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, PackError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, PackError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
