//! Uniform node-centred grid on `[x_min, x_max] x [0, y_max]` and the
//! surfaces stored on it.
//!
//! The row `j = 0` is the `y = 0` Dirichlet row. Values are stored with `j`
//! varying fastest, so `index(i, j) = i * n_y + j`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub n_x: usize,
    pub n_y: usize,
}

impl Grid2D {
    pub fn new(x_min: f64, x_max: f64, y_max: f64, n_x: usize, n_y: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min ({x_min}) must be below x_max ({x_max})"
            )));
        }
        if y_max <= 0.0 {
            return Err(Error::InvalidGrid(format!("y_max ({y_max}) must be positive")));
        }
        if n_x < 3 || n_y < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per axis, got {n_x}x{n_y}"
            )));
        }
        Ok(Self { x_min, x_max, y_max, n_x, n_y })
    }

    pub fn h_x(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn h_y(&self) -> f64 {
        self.y_max / (self.n_y - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h_x()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.h_y()
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x(i), self.y(j))
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_y + j
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= 0.0 && y <= self.y_max
    }

    /// Projects a point onto the rectangle.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(0.0, self.y_max))
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && i + 1 < self.n_x && j >= 1 && j + 1 < self.n_y
    }

    /// Bilinear interpolation of node values over the cell containing `(x, y)`.
    pub fn bilinear(&self, values: &[f64], x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::OutOfGrid { x, y });
        }
        let (i, s) = locate(x - self.x_min, self.h_x(), self.n_x);
        let (j, t) = locate(y, self.h_y(), self.n_y);
        let v00 = values[self.index(i, j)];
        let v10 = values[self.index(i + 1, j)];
        let v01 = values[self.index(i, j + 1)];
        let v11 = values[self.index(i + 1, j + 1)];
        // Exact node hits return the stored value without blending.
        if s == 0.0 && t == 0.0 {
            return Ok(v00);
        }
        Ok((1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11))
    }
}

/// Returns the lower cell index and the local coordinate in `[0, 1]`.
fn locate(offset: f64, h: f64, n: usize) -> (usize, f64) {
    let cells = n - 1;
    let mut pos = offset / h;
    // Snap queries at node coordinates so node hits reproduce stored values.
    if (pos - pos.round()).abs() < 1e-9 {
        pos = pos.round();
    }
    let mut cell = pos.floor().max(0.0) as usize;
    if cell >= cells {
        cell = cells - 1;
    }
    let local = (pos - cell as f64).clamp(0.0, 1.0);
    (cell, local)
}

/// Node values of a scalar field on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ValueSurface {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "surface value", location: pos as f64 });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, mut u: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_x {
            for j in 0..grid.n_y {
                values.push(u(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.index(i, j);
        self.values[idx] = v;
    }

    pub fn sample(&self, x: f64, y: f64) -> Result<f64> {
        self.grid.bilinear(&self.values, x, y)
    }

    /// CSV with header `x,y,value`, rows ordered by `i` then `j`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for i in 0..self.grid.n_x {
            for j in 0..self.grid.n_y {
                let (x, y) = self.grid.node(i, j);
                let _ = writeln!(out, "{},{},{}", fmt_num(x), fmt_num(y), fmt_num(self.at(i, j)));
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "grid": self.grid, "values": self.values })
    }
}

/// Free function form of [`ValueSurface::sample`].
pub fn bilinear_sample(surface: &ValueSurface, x: f64, y: f64) -> Result<f64> {
    surface.sample(x, y)
}

/// Scientific notation with 15 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}
