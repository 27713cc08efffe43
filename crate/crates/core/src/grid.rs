//! Discretization descriptor and the scalar field type shared by every solver.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3x3 cells, got {nx}x{ny}")]
    TooSmall { nx: usize, ny: usize },
    #[error("grid spacing must be positive and finite, got dx={dx}, dy={dy}")]
    BadSpacing { dx: f64, dy: f64 },
    #[error("field has {got} values, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at cell ({i}, {j})")]
    NonFinite { i: usize, j: usize },
}

/// Cell-centered uniform grid. Cell `(i, j)` has its center at
/// `((i + 0.5) dx, (j + 0.5) dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooSmall { nx, ny });
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(GridError::BadSpacing { dx, dy });
        }
        Ok(Self { nx, ny, dx, dy })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.dy
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Physical board extent `(width, height)` in meters.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Row-major flat index, `i` fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }
}

/// Real-valued field stored row-major on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = grid.coords(k);
            return Err(GridError::NonFinite { i, j });
        }
        Ok(Self { grid, values })
    }

    /// Builds a field by evaluating `f(i, j)` at every cell.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    /// Wraps values without the finiteness check. Kernels use this for
    /// freshly computed buffers and report non-finite values themselves.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = value;
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row `j` of a row-major buffer with its lower and upper neighbor rows.
/// Edge rows are their own mirror ghosts.
#[inline]
pub(crate) fn row_with_neighbors(
    field: &[f64],
    j: usize,
    nx: usize,
    ny: usize,
) -> (&[f64], &[f64], &[f64]) {
    let base = j * nx;
    let row = &field[base..base + nx];
    let down = if j == 0 { row } else { &field[base - nx..base] };
    let up = if j + 1 == ny {
        row
    } else {
        &field[base + nx..base + 2 * nx]
    };
    (row, down, up)
}
