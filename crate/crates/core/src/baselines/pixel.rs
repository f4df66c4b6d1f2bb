use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::features::FeatureMap;
use crate::geometry::{CellIndex, GridGeometry};
use crate::linalg::Matrix;
use crate::memory::{check_dim, enhance_with, EnhancementParams, MemoryError, View};
use crate::scalar::{sigmoid, Scalar};
use crate::seeding::{rng_for, Stream};

/// Gated recurrent unit shared by every cell.
///
/// ```text
/// r  = σ(g·W_r + h·U_r + b_r)
/// z  = σ(g·W_z + h·U_z + b_z)
/// n  = tanh(g·W_n + r ∘ (h·U_n) + b_n)
/// h' = (1 − z) ∘ h + z ∘ n
/// ```
///
/// `W_*` are `d1 × d3`, `U_*` are `d3 × d3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub w_r: Matrix<T>,
    pub w_z: Matrix<T>,
    pub w_n: Matrix<T>,
    pub u_r: Matrix<T>,
    pub u_z: Matrix<T>,
    pub u_n: Matrix<T>,
    pub b_r: Vec<T>,
    pub b_z: Vec<T>,
    pub b_n: Vec<T>,
}

impl<T: Scalar> GruCell<T> {
    /// Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn seeded(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Recurrent, 0);
        let mut draw = |rows: usize, cols: usize| {
            let s = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * s))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let (w_r, w_z, w_n) = (
            draw(input_dim, hidden_dim),
            draw(input_dim, hidden_dim),
            draw(input_dim, hidden_dim),
        );
        let (u_r, u_z, u_n) = (
            draw(hidden_dim, hidden_dim),
            draw(hidden_dim, hidden_dim),
            draw(hidden_dim, hidden_dim),
        );
        Self {
            w_r,
            w_z,
            w_n,
            u_r,
            u_z,
            u_n,
            b_r: vec![T::zero(); hidden_dim],
            b_z: vec![T::zero(); hidden_dim],
            b_n: vec![T::zero(); hidden_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.cols()
    }

    pub fn step(&self, input: &[T], hidden: &[T]) -> Vec<T> {
        let gate = |w: &Matrix<T>, u: &Matrix<T>, b: &[T]| -> Vec<T> {
            let gx = w.apply(input);
            let hu = u.apply(hidden);
            gx.iter().zip(&hu).zip(b).map(|((&a, &c), &bb)| sigmoid(a + c + bb)).collect()
        };
        let r = gate(&self.w_r, &self.u_r, &self.b_r);
        let z = gate(&self.w_z, &self.u_z, &self.b_z);
        let gx = self.w_n.apply(input);
        let hu = self.u_n.apply(hidden);
        (0..self.hidden_dim())
            .map(|k| {
                let n = (gx[k] + r[k] * hu[k] + self.b_n[k]).tanh();
                (T::one() - z[k]) * hidden[k] + z[k] * n
            })
            .collect()
    }
}

/// Recurrent state `P` (`a × l × d3`) plus which cells were ever observed.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMemoryGrid<T> {
    geometry: GridGeometry<T>,
    cell: GruCell<T>,
    state: Vec<T>,
    observed: Vec<bool>,
}

impl<T: Scalar> PixelMemoryGrid<T> {
    pub fn new(geometry: GridGeometry<T>, cell: GruCell<T>) -> Self {
        let n = geometry.cell_count();
        let d3 = cell.hidden_dim();
        Self {
            geometry,
            cell,
            state: vec![T::zero(); n * d3],
            observed: vec![false; n],
        }
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    pub fn cell(&self) -> &GruCell<T> {
        &self.cell
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn state(&self) -> &[T] {
        &self.state
    }

    pub fn hidden(&self, cell: CellIndex) -> &[T] {
        let d = self.hidden_dim();
        let o = self.geometry.flat(cell) * d;
        &self.state[o..o + d]
    }

    pub fn is_observed(&self, cell: CellIndex) -> bool {
        self.observed[self.geometry.flat(cell)]
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|h| *h = T::zero());
        self.observed.iter_mut().for_each(|o| *o = false);
    }
}

/// Averages the pixel features landing in each cell and advances those
/// cells' recurrent state. Cells no pixel lands in are left untouched.
pub fn pixel_write<T: Scalar>(
    grid: &mut PixelMemoryGrid<T>,
    pixel_features: &FeatureMap<T>,
    view: &View<'_, T>,
) -> Result<(), MemoryError> {
    check_dim("depth width", pixel_features.width(), view.width())?;
    check_dim("depth height", pixel_features.height(), view.height())?;
    check_dim("pixel feature dim", grid.cell.input_dim(), pixel_features.dim())?;
    let d1 = pixel_features.dim();
    let mut sums: BTreeMap<usize, (Vec<T>, usize)> = BTreeMap::new();
    for i in 0..view.height() {
        for j in 0..view.width() {
            let Some(cell) = view.cell_of(i, j, &grid.geometry) else {
                continue;
            };
            let e = sums
                .entry(grid.geometry.flat(cell))
                .or_insert_with(|| (vec![T::zero(); d1], 0));
            for (s, &z) in e.0.iter_mut().zip(pixel_features.pixel(i, j)) {
                *s = *s + z;
            }
            e.1 += 1;
        }
    }
    let d3 = grid.hidden_dim();
    let cell = &grid.cell;
    let state = &grid.state;
    let updates: Vec<(usize, Vec<T>)> = sums
        .into_par_iter()
        .map(|(flat, (sum, n))| {
            let n = T::lit(n as f64);
            let g: Vec<T> = sum.into_iter().map(|s| s / n).collect();
            (flat, cell.step(&g, &state[flat * d3..(flat + 1) * d3]))
        })
        .collect();
    for (flat, h) in updates {
        grid.state[flat * d3..(flat + 1) * d3].copy_from_slice(&h);
        grid.observed[flat] = true;
    }
    Ok(())
}

/// Enhancement from the recurrent state of every observed cell, projected
/// `d3 → d1`.
pub fn pixel_read<T: Scalar>(
    pixel_features: &FeatureMap<T>,
    grid: &PixelMemoryGrid<T>,
    view: &View<'_, T>,
    params: &EnhancementParams<T>,
) -> Result<FeatureMap<T>, MemoryError> {
    check_dim("memory feature dim", params.memory_dim(), grid.hidden_dim())?;
    enhance_with(
        pixel_features,
        view,
        &grid.geometry,
        &params.projection,
        params.lambda,
        |cell| grid.is_observed(cell).then(|| grid.hidden(cell).to_vec()),
    )
}
