//! Pinhole camera model, pose to extrinsics, pixel/world projection and
//! world to memory-cell indexing.
//!
//! # Frames and pixel convention
//!
//! * **World**: `x`, `y` span the ground plane, `z` points up.
//! * **Camera**: rigidly attached to the robot; `x` forward (optical axis),
//!   `y` left, `z` up. At the zero pose with zero mounting height and pitch the
//!   camera frame coincides with the world frame.
//! * **Optical**: the usual pinhole frame, `x` right, `y` down, `z` forward.
//!
//! Pixels are addressed as `(i, j) = (row, col)`. A pixel is back-projected as
//! `d · K⁻¹ (i, j, 1)` with `K` acting on the `(row, col)` pair, i.e. the
//! optical-frame point is `(d (j − cx)/fx, d (i − cy)/fy, d)`. Depth `d` is the
//! distance along the optical axis (z-depth), not the Euclidean ray length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("depth must be positive")]
    NonPositiveDepth,
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("point falls outside the grid")]
    OutOfBounds,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Planar robot pose: position in meters and heading about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub theta: T,
}

impl<T: Scalar> Pose<T> {
    /// Creates a pose with the heading wrapped into `[−π, π)`.
    pub fn new(x: T, y: T, z: T, theta: T) -> Self {
        Self {
            x,
            y,
            z,
            theta: wrap_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> Pose<U> {
        Pose {
            x: U::lit(self.x.to_f64_lossless()),
            y: U::lit(self.y.to_f64_lossless()),
            z: U::lit(self.z.to_f64_lossless()),
            theta: U::lit(self.theta.to_f64_lossless()),
        }
    }
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut t = (theta + T::PI()) % two_pi;
    if t < T::zero() {
        t = t + two_pi;
    }
    // `%` can land exactly on 2π after the correction above
    if t >= two_pi {
        t = t - two_pi;
    }
    t - T::PI()
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        if !(self.cx > T::zero() && self.cx < w) {
            return Err(GeometryError::InvalidIntrinsics("cx must lie inside the image"));
        }
        if !(self.cy > T::zero() && self.cy < h) {
            return Err(GeometryError::InvalidIntrinsics("cy must lie inside the image"));
        }
        Ok(())
    }

    /// Intrinsics of a feature map sampled every `stride` pixels.
    ///
    /// Feature pixel `(i, j)` sees exactly the ray of image pixel
    /// `(i·stride + stride/2, j·stride + stride/2)`, see [`feature_to_image_pixel`].
    pub fn downscale(&self, stride: usize) -> Self {
        assert!(stride >= 1, "stride must be at least 1");
        let s = T::lit(stride as f64);
        let half = T::lit((stride / 2) as f64);
        Self {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx - half) / s,
            cy: (self.cy - half) / s,
            width: self.width / stride,
            height: self.height / stride,
        }
    }

    pub fn cast<U: Scalar>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.to_f64_lossless()),
            fy: U::lit(self.fy.to_f64_lossless()),
            cx: U::lit(self.cx.to_f64_lossless()),
            cy: U::lit(self.cy.to_f64_lossless()),
            width: self.width,
            height: self.height,
        }
    }

    /// Camera-frame direction of the ray through pixel `(i, j)`, scaled so its
    /// forward component is one.
    pub fn ray_direction(&self, i: T, j: T) -> [T; 3] {
        let right = (j - self.cx) / self.fx;
        let down = (i - self.cy) / self.fy;
        optical_to_camera([right, down, T::one()])
    }
}

/// Image pixel sampled by feature-map pixel `(i, j)` at the given stride.
pub fn feature_to_image_pixel(i: usize, j: usize, stride: usize) -> (usize, usize) {
    (i * stride + stride / 2, j * stride + stride / 2)
}


#[inline]
fn optical_to_camera<T: Scalar>(p: [T; 3]) -> [T; 3] {
    [p[2], -p[0], -p[1]]
}

#[inline]
fn camera_to_optical<T: Scalar>(p: [T; 3]) -> [T; 3] {
    [-p[1], -p[2], p[0]]
}

/// Rigid world→camera transform: `p_cam = rotation · p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics<T> {
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Extrinsics<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            rotation: [[o, z, z], [z, o, z], [z, z, o]],
            translation: [z; 3],
        }
    }

    /// World point into the camera frame.
    #[inline]
    pub fn transform_point(&self, p: [T; 3]) -> [T; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Camera-frame point back into the world frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: [T; 3]) -> [T; 3] {
        let q = [
            p[0] - self.translation[0],
            p[1] - self.translation[1],
            p[2] - self.translation[2],
        ];
        self.rotate_inverse(q)
    }

    /// Camera-frame direction into the world frame (rotation only).
    #[inline]
    pub fn rotate_inverse(&self, q: [T; 3]) -> [T; 3] {
        let r = &self.rotation;
        [
            r[0][0] * q[0] + r[1][0] * q[1] + r[2][0] * q[2],
            r[0][1] * q[0] + r[1][1] * q[1] + r[2][1] * q[2],
            r[0][2] * q[0] + r[1][2] * q[1] + r[2][2] * q[2],
        ]
    }

    /// Camera center in world coordinates.
    pub fn camera_center(&self) -> [T; 3] {
        self.inverse_transform_point([T::zero(); 3])
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let mut rt = [[T::zero(); 3]; 3];
        for (a, row) in rt.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = r[b][a];
            }
        }
        let t = self.translation;
        let mut ti = [T::zero(); 3];
        for (a, v) in ti.iter_mut().enumerate() {
            *v = -(rt[a][0] * t[0] + rt[a][1] * t[1] + rt[a][2] * t[2]);
        }
        Self {
            rotation: rt,
            translation: ti,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        let translation = self.transform_point(other.translation);
        Self {
            rotation: r,
            translation,
        }
    }

    /// Largest deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let r = &self.rotation;
        let mut worst = T::zero();
        for a in 0..3 {
            for b in 0..3 {
                let d = r[0][a] * r[0][b] + r[1][a] * r[1][b] + r[2][a] * r[2][b];
                let want = if a == b { T::one() } else { T::zero() };
                worst = worst.max((d - want).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> T {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

/// World→camera transform for a camera mounted `camera_height` meters above
/// the robot origin, looking along the heading and pitched down by
/// `camera_pitch` radians.
pub fn extrinsics_from_pose<T: Scalar>(pose: &Pose<T>, camera_height: T, camera_pitch: T) -> Extrinsics<T> {
    let (st, ct) = pose.theta.sin_cos();
    let (sp, cp) = camera_pitch.sin_cos();
    let z = T::zero();
    // camera→world rotation Rz(theta)·Ry(pitch); columns are the camera axes
    let rz = [[ct, -st, z], [st, ct, z], [z, z, T::one()]];
    let ry = [[cp, z, sp], [z, T::one(), z], [-sp, z, cp]];
    let mut cam_to_world = [[z; 3]; 3];
    for (i, row) in cam_to_world.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rz[i][0] * ry[0][j] + rz[i][1] * ry[1][j] + rz[i][2] * ry[2][j];
        }
    }
    let center = [pose.x, pose.y, pose.z + camera_height];
    let placement = Extrinsics {
        rotation: cam_to_world,
        translation: center,
    };
    placement.inverse()
}

/// Back-projects pixel `(i, j)` (row, col) at z-depth `depth` into the world.
///
/// Pixel bounds are not checked; fractional and out-of-image coordinates are
/// projected along their ray like any other.
pub fn pixel_to_world<T: Scalar>(
    i: T,
    j: T,
    depth: T,
    intrinsics: &CameraIntrinsics<T>,
    extrinsics: &Extrinsics<T>,
) -> Result<[T; 3], GeometryError> {
    if !(depth > T::zero()) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let ray = intrinsics.ray_direction(i, j);
    let cam = [ray[0] * depth, ray[1] * depth, ray[2] * depth];
    Ok(extrinsics.inverse_transform_point(cam))
}

/// Continuous pixel coordinates plus z-depth of a projected world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord<T> {
    pub i: T,
    pub j: T,
    pub depth: T,
}

/// Projects a world point into the image. Points with non-positive camera
/// depth are reported as [`GeometryError::BehindCamera`].
pub fn world_to_pixel<T: Scalar>(
    point: [T; 3],
    intrinsics: &CameraIntrinsics<T>,
    extrinsics: &Extrinsics<T>,
) -> Result<PixelCoord<T>, GeometryError> {
    let opt = camera_to_optical(extrinsics.transform_point(point));
    let depth = opt[2];
    if !(depth > T::zero()) {
        return Err(GeometryError::BehindCamera);
    }
    Ok(PixelCoord {
        i: intrinsics.cy + intrinsics.fy * opt[1] / depth,
        j: intrinsics.cx + intrinsics.fx * opt[0] / depth,
        depth,
    })
}

/// Grid coordinates of a memory cell: `u` along world `x`, `v` along world `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub u: usize,
    pub v: usize,
}

/// Placement of a `breadth × length` raster of square cells on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<T> {
    pub origin: [T; 2],
    pub cell_size: T,
    pub breadth: usize,
    pub length: usize,
}

impl<T: Scalar> GridGeometry<T> {
    pub fn new(origin: [T; 2], cell_size: T, breadth: usize, length: usize) -> Self {
        assert!(cell_size > T::zero(), "cell size must be positive");
        Self {
            origin,
            cell_size,
            breadth,
            length,
        }
    }

    /// Grid covering the rectangle `[min, max]`, padded by one cell on every side.
    pub fn covering(min: [T; 2], max: [T; 2], cell_size: T) -> Self {
        assert!(cell_size > T::zero(), "cell size must be positive");
        let origin = [min[0] - cell_size, min[1] - cell_size];
        let span = |lo: T, hi: T| {
            let n = ((hi - lo) / cell_size).ceil().to_usize().unwrap_or(0);
            n + 2
        };
        Self {
            origin,
            cell_size,
            breadth: span(min[0], max[0]),
            length: span(min[1], max[1]),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.breadth * self.length
    }

    /// Row-major flat index of a cell (`u` slowest).
    #[inline]
    pub fn flat(&self, cell: CellIndex) -> usize {
        cell.u * self.length + cell.v
    }

    #[inline]
    pub fn world_to_cell(&self, x: T, y: T) -> Result<CellIndex, GeometryError> {
        world_to_cell(x, y, self.origin, self.cell_size, self.breadth, self.length)
    }

    /// World coordinates of a cell's center.
    pub fn cell_center(&self, cell: CellIndex) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.origin[0] + (T::lit(cell.u as f64) + half) * self.cell_size,
            self.origin[1] + (T::lit(cell.v as f64) + half) * self.cell_size,
        ]
    }

    pub fn cast<U: Scalar>(&self) -> GridGeometry<U> {
        GridGeometry {
            origin: [
                U::lit(self.origin[0].to_f64_lossless()),
                U::lit(self.origin[1].to_f64_lossless()),
            ],
            cell_size: U::lit(self.cell_size.to_f64_lossless()),
            breadth: self.breadth,
            length: self.length,
        }
    }
}

/// `floor((coord − origin) / cell_size)` per axis, or `OutOfBounds` when the
/// point is outside the `breadth × length` raster.
#[inline]
pub fn world_to_cell<T: Scalar>(
    x: T,
    y: T,
    origin: [T; 2],
    cell_size: T,
    breadth: usize,
    length: usize,
) -> Result<CellIndex, GeometryError> {
    let fu = ((x - origin[0]) / cell_size).floor();
    let fv = ((y - origin[1]) / cell_size).floor();
    if !(fu >= T::zero() && fv >= T::zero()) {
        return Err(GeometryError::OutOfBounds);
    }
    let (u, v) = match (fu.to_usize(), fv.to_usize()) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(GeometryError::OutOfBounds),
    };
    if u >= breadth || v >= length {
        return Err(GeometryError::OutOfBounds);
    }
    Ok(CellIndex { u, v })
}
