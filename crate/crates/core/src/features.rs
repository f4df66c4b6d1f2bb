//! Raster containers shared by the detector, the memories and the simulator.

use serde::{Deserialize, Serialize};

use crate::geometry::feature_to_image_pixel;
use crate::scalar::Scalar;

/// Per-pixel feature vectors over a `height × width` raster, row-major with
/// the feature index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(width: usize, height: usize, dim: usize) -> Self {
        Self {
            width,
            height,
            dim,
            data: vec![T::zero(); width * height * dim],
        }
    }

    pub fn from_vec(width: usize, height: usize, dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height * dim, "feature map data length");
        Self {
            width,
            height,
            dim,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[T] {
        let o = (i * self.width + j) * self.dim;
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = (i * self.width + j) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    /// Mean feature over the pixels set in `mask`; `None` for an empty mask.
    pub fn masked_mean(&self, mask: &Mask) -> Option<Vec<T>> {
        assert_eq!((mask.width(), mask.height()), (self.width, self.height), "mask size");
        let mut acc = vec![T::zero(); self.dim];
        let mut n = 0usize;
        for (i, j) in mask.pixels() {
            for (a, &v) in acc.iter_mut().zip(self.pixel(i, j)) {
                *a = *a + v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let inv = T::one() / T::lit(n as f64);
        acc.iter_mut().for_each(|a| *a = *a * inv);
        Some(acc)
    }
}

/// Z-depth image in meters. Non-positive or non-finite values mean "no return".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> DepthMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "depth data length");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.width + j]
    }

    /// Depth if it is a usable return: positive, finite and at most `max_depth`.
    #[inline]
    pub fn valid(&self, i: usize, j: usize, max_depth: T) -> Option<T> {
        let d = self.get(i, j);
        (d > T::zero() && d <= max_depth && d.is_finite()).then_some(d)
    }

    /// Nearest-neighbour resampling onto a feature map with the given stride.
    pub fn resample_nearest(&self, stride: usize) -> Self {
        let (w, h) = (self.width / stride, self.height / stride);
        let mut data = Vec::with_capacity(w * h);
        for i in 0..h {
            for j in 0..w {
                let (ii, jj) = feature_to_image_pixel(i, j, stride);
                data.push(self.get(ii, jj));
            }
        }
        Self::new(w, h, data)
    }

    pub fn cast<U: Scalar>(&self) -> DepthMap<U> {
        DepthMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossless())).collect(),
        }
    }
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask length");
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.width + j] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// `(row, col)` of every set pixel in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / w, k % w))
    }
}
