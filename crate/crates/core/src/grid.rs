//! Periodic-in-x base grid and the discrete derivative operators used by
//! the verification and evolution modules: FFT differentiation along the
//! periodic x direction, 4th-order finite differences in y, and the
//! trapezoidal quadrature that is spectrally accurate for smooth periodic
//! integrands.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid.Nx must be ≥ 8 (got {0})")]
    NxTooSmall(usize),
    #[error("grid.Nx must be even (got {0})")]
    NxOdd(usize),
    #[error("grid.Ny must be ≥ 4 (got {0})")]
    NyTooSmall(usize),
    #[error("grid.kappa must be > 0 (got {0})")]
    BadKappa(f64),
    #[error("grid.y_max must exceed y_min (got [{0}, {1}])")]
    BadYRange(f64, f64),
    #[error("field length {got} does not match grid ({expected} nodes)")]
    FieldLength { expected: usize, got: usize },
}

/// Rectangular base grid: x periodic of period `kappa` with `nx` nodes
/// (x_i = i·κ/nx, the right endpoint is identified with 0), y an inclusive
/// range with `ny` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseGrid {
    pub kappa: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl BaseGrid {
    pub fn new(kappa: f64, nx: usize, y_min: f64, y_max: f64, ny: usize) -> Result<Self, GridError> {
        let g = Self { kappa, nx, y_min, y_max, ny };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        match self.validate_all().into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }

    /// Every violated invariant, for validators that report all problems.
    pub fn validate_all(&self) -> Vec<GridError> {
        let mut out = Vec::new();
        if !(self.kappa > 0.0) {
            out.push(GridError::BadKappa(self.kappa));
        }
        if self.nx < 8 {
            out.push(GridError::NxTooSmall(self.nx));
        } else if self.nx % 2 != 0 {
            out.push(GridError::NxOdd(self.nx));
        }
        if self.ny < 4 {
            out.push(GridError::NyTooSmall(self.ny));
        }
        if !(self.y_max > self.y_min) {
            out.push(GridError::BadYRange(self.y_min, self.y_max));
        }
        out
    }

    pub fn dx(&self) -> f64 {
        self.kappa / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y_min + iy as f64 * self.dy()
    }

    /// y rescaled to [-1, 1].
    pub fn y_normalized(&self, iy: usize) -> f64 {
        2.0 * (self.y(iy) - self.y_min) / (self.y_max - self.y_min) - 1.0
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Index of the y row nearest to the requested coordinate.
    pub fn nearest_y_index(&self, y: f64) -> usize {
        let raw = (y - self.y_min) / self.dy();
        raw.round().clamp(0.0, (self.ny - 1) as f64) as usize
    }

    /// Trapezoidal quadrature of one periodic x-row: (κ/nx)·Σ values.
    pub fn integrate_x(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.nx);
        row.iter().sum::<f64>() * self.dx()
    }

    /// Extracts the x-row of a node field at row `iy`.
    pub fn x_row<'a, T: Copy>(&self, field: &'a [T], iy: usize) -> &'a [T] {
        &field[iy * self.nx..(iy + 1) * self.nx]
    }
}

/// Real scalar field on the grid, row-major with x contiguous.
pub type ScalarField = Vec<f64>;
/// Complex scalar field on the grid.
pub type ComplexField = Vec<Complex64>;

/// Cached FFT plans plus the derivative operators for one grid size.
pub struct SpectralOps {
    nx: usize,
    kappa: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SpectralOps {
    pub fn new(grid: &BaseGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.nx);
        let inv = planner.plan_fft_inverse(grid.nx);
        Self { nx: grid.nx, kappa: grid.kappa, fwd, inv }
    }

    /// Signed integer wavenumber index of FFT bin `m`; the Nyquist bin maps
    /// to zero so differentiation stays real for real inputs.
    fn mode_number(&self, m: usize) -> i64 {
        let n = self.nx as i64;
        let m = m as i64;
        if 2 * m < n {
            m
        } else if 2 * m == n {
            0
        } else {
            m - n
        }
    }

    fn wavenumber(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode_number(m) as f64 / self.kappa
    }

    /// ∂/∂x of a complex field by spectral differentiation, row by row.
    pub fn ddx_complex(&self, grid: &BaseGrid, field: &[Complex64]) -> ComplexField {
        debug_assert_eq!(field.len(), grid.node_count());
        let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        let scale = 1.0 / self.nx as f64;
        for iy in 0..grid.ny {
            let row = grid.x_row(field, iy);
            buf.copy_from_slice(row);
            self.fwd.process(&mut buf);
            for (m, v) in buf.iter_mut().enumerate() {
                *v *= Complex64::new(0.0, self.wavenumber(m));
            }
            self.inv.process(&mut buf);
            for (ix, v) in buf.iter().enumerate() {
                out[grid.idx(ix, iy)] = v * scale;
            }
        }
        out
    }

    pub fn ddx_real(&self, grid: &BaseGrid, field: &[f64]) -> ScalarField {
        let complex: ComplexField = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.ddx_complex(grid, &complex).iter().map(|c| c.re).collect()
    }

    /// Zeroes every Fourier mode with |mode| > nx/3 (2/3-rule dealiasing),
    /// in place, row by row.
    pub fn dealias_complex(&self, grid: &BaseGrid, field: &mut [Complex64]) {
        let cutoff = (self.nx / 3) as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        let scale = 1.0 / self.nx as f64;
        for iy in 0..grid.ny {
            let row = grid.x_row(field, iy);
            buf.copy_from_slice(row);
            self.fwd.process(&mut buf);
            for (m, v) in buf.iter_mut().enumerate() {
                if self.mode_number(m).abs() > cutoff {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
            self.inv.process(&mut buf);
            for (ix, v) in buf.iter().enumerate() {
                field[grid.idx(ix, iy)] = v * scale;
            }
        }
    }

    pub fn dealias_real(&self, grid: &BaseGrid, field: &mut [f64]) {
        let mut complex: ComplexField = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.dealias_complex(grid, &mut complex);
        for (dst, src) in field.iter_mut().zip(&complex) {
            *dst = src.re;
        }
    }

    /// Largest Fourier amplitude above the nx/3 cutoff across all rows,
    /// normalised by row length. Zero for properly band-limited data.
    pub fn band_limit_excess(&self, grid: &BaseGrid, field: &[f64]) -> f64 {
        let cutoff = (self.nx / 3) as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        let mut worst = 0.0f64;
        for iy in 0..grid.ny {
            for (ix, v) in grid.x_row(field, iy).iter().enumerate() {
                buf[ix] = Complex64::new(*v, 0.0);
            }
            self.fwd.process(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                if self.mode_number(m).abs() > cutoff {
                    worst = worst.max(v.norm() / self.nx as f64);
                }
            }
        }
        worst
    }
}

/// ∂/∂y by finite differences: 4th-order centered stencils inside, 4th
/// order one-sided at the boundary rows. A grid with exactly four y rows
/// falls back to the full cubic stencil, which is exact for data that is
/// polynomial of degree ≤ 3 in y.
pub fn ddy_complex(grid: &BaseGrid, field: &[Complex64]) -> ComplexField {
    debug_assert_eq!(field.len(), grid.node_count());
    let h = grid.dy();
    let ny = grid.ny;
    let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
    let at = |ix: usize, iy: usize| field[grid.idx(ix, iy)];
    for ix in 0..grid.nx {
        if ny == 4 {
            for iy in 0..4 {
                let (f0, f1, f2, f3) = (at(ix, 0), at(ix, 1), at(ix, 2), at(ix, 3));
                let v = match iy {
                    0 => (-11.0 * f0 + 18.0 * f1 - 9.0 * f2 + 2.0 * f3) / (6.0 * h),
                    1 => (-2.0 * f0 - 3.0 * f1 + 6.0 * f2 - f3) / (6.0 * h),
                    2 => (f0 - 6.0 * f1 + 3.0 * f2 + 2.0 * f3) / (6.0 * h),
                    _ => (-2.0 * f0 + 9.0 * f1 - 18.0 * f2 + 11.0 * f3) / (6.0 * h),
                };
                out[grid.idx(ix, iy)] = v;
            }
            continue;
        }
        for iy in 0..ny {
            let v = if iy >= 2 && iy + 2 < ny {
                (at(ix, iy - 2) - 8.0 * at(ix, iy - 1) + 8.0 * at(ix, iy + 1) - at(ix, iy + 2))
                    / (12.0 * h)
            } else if iy == 0 {
                (-25.0 * at(ix, 0) + 48.0 * at(ix, 1) - 36.0 * at(ix, 2) + 16.0 * at(ix, 3)
                    - 3.0 * at(ix, 4))
                    / (12.0 * h)
            } else if iy == 1 {
                (-3.0 * at(ix, 0) - 10.0 * at(ix, 1) + 18.0 * at(ix, 2) - 6.0 * at(ix, 3)
                    + at(ix, 4))
                    / (12.0 * h)
            } else if iy == ny - 2 {
                (3.0 * at(ix, ny - 1) + 10.0 * at(ix, ny - 2) - 18.0 * at(ix, ny - 3)
                    + 6.0 * at(ix, ny - 4)
                    - at(ix, ny - 5))
                    / (12.0 * h)
            } else {
                (25.0 * at(ix, ny - 1) - 48.0 * at(ix, ny - 2) + 36.0 * at(ix, ny - 3)
                    - 16.0 * at(ix, ny - 4)
                    + 3.0 * at(ix, ny - 5))
                    / (12.0 * h)
            };
            out[grid.idx(ix, iy)] = v;
        }
    }
    out
}

pub fn ddy_real(grid: &BaseGrid, field: &[f64]) -> ScalarField {
    let complex: ComplexField = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ddy_complex(grid, &complex).iter().map(|c| c.re).collect()
}

/// ∂/∂u = ½(∂/∂x − i ∂/∂y) for u = x + iy.
pub fn d_du(ops: &SpectralOps, grid: &BaseGrid, field: &[Complex64]) -> ComplexField {
    let fx = ops.ddx_complex(grid, field);
    let fy = ddy_complex(grid, field);
    fx.iter()
        .zip(&fy)
        .map(|(a, b)| 0.5 * (a - Complex64::new(0.0, 1.0) * b))
        .collect()
}

/// ∂/∂ū = ½(∂/∂x + i ∂/∂y).
pub fn d_dubar(ops: &SpectralOps, grid: &BaseGrid, field: &[Complex64]) -> ComplexField {
    let fx = ops.ddx_complex(grid, field);
    let fy = ddy_complex(grid, field);
    fx.iter()
        .zip(&fy)
        .map(|(a, b)| 0.5 * (a + Complex64::new(0.0, 1.0) * b))
        .collect()
}

pub fn real_to_complex(field: &[f64]) -> ComplexField {
    field.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Sup norm over nodes.
pub fn sup_norm_complex(field: &[Complex64]) -> f64 {
    field.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn sup_norm_real(field: &[f64]) -> f64 {
    field.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Discrete L² norm: RMS over nodes in fixed index order (deterministic
/// regardless of thread count).
pub fn l2_norm_complex(field: &[Complex64]) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    (field.iter().map(|c| c.norm_sqr()).sum::<f64>() / field.len() as f64).sqrt()
}

pub fn l2_norm_real(field: &[f64]) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    (field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64).sqrt()
}
