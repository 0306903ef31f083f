//! Uniform periodic grid on `[0, 2π]²`, nodal fields, and the discrete
//! operators shared by every scheme.
//!
//! Node `(i, j)` sits at `(i·hx, j·hy)` and is stored at index `j·nx + i`
//! (row-major). All operators wrap periodically in both directions.
//!
//! The Laplacian is the classical 5-point stencil and the gradient energy
//! uses forward differences, so that
//! `grad_sq_norm(f) == -inner(f, laplacian(f))` holds exactly up to rounding
//! (summation by parts on the torus).

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 4 nodes per direction, got {nx}x{ny}")]
    TooSmall { nx: usize, ny: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("fields live on different grids ({0:?} vs {1:?})")]
    GridMismatch(GridSpec, GridSpec),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Uniform periodic grid. Both domain lengths are fixed at 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize) -> Result<Self, GridError> {
        if nx < 4 || ny < 4 {
            return Err(GridError::TooSmall { nx, ny });
        }
        Ok(Self {
            nx,
            ny,
            lx: 2.0 * PI,
            ly: 2.0 * PI,
        })
    }

    pub fn square(n: usize) -> Result<Self, GridError> {
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Area element `hx·hy` used by every quadrature.
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Coordinates of node `(i, j)`.
    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    /// Indices of the east, west, north and south neighbours of `k`.
    #[inline]
    pub fn neighbours(&self, k: usize) -> [usize; 4] {
        let (i, j) = (k % self.nx, k / self.nx);
        let east = if i + 1 == self.nx { 0 } else { i + 1 };
        let west = if i == 0 { self.nx - 1 } else { i - 1 };
        let north = if j + 1 == self.ny { 0 } else { j + 1 };
        let south = if j == 0 { self.ny - 1 } else { j - 1 };
        [
            self.index(east, j),
            self.index(west, j),
            self.index(i, north),
            self.index(i, south),
        ]
    }

    /// Row `k` of the 5-point Laplacian as `(column, coefficient)` pairs,
    /// diagonal first.
    pub fn laplacian_row(&self, k: usize) -> [(usize, f64); 5] {
        let cx = 1.0 / (self.hx() * self.hx());
        let cy = 1.0 / (self.hy() * self.hy());
        let [e, w, n, s] = self.neighbours(k);
        [
            (k, -2.0 * (cx + cy)),
            (e, cx),
            (w, cx),
            (n, cy),
            (s, cy),
        ]
    }
}

/// Nodal scalar function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Checks length and finiteness.
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { node, value });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.coords(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field, GridError> {
        same_grid(self, other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn same_grid(f: &Field, g: &Field) -> Result<(), GridError> {
    if f.grid != g.grid {
        return Err(GridError::GridMismatch(f.grid, g.grid));
    }
    Ok(())
}

/// Neumaier-compensated sum; the result does not depend on how the terms
/// were produced, only on their order.
pub fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// 5-point periodic Laplacian `Δ_h f`.
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid;
    let mut out = vec![0.0; grid.len()];
    laplacian_into(&grid, &f.values, &mut out);
    Field { grid, values: out }
}

/// Slice version of [`laplacian`] used inside the solvers.
pub fn laplacian_into(grid: &GridSpec, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = 1.0 / (grid.hx() * grid.hx());
    let cy = 1.0 / (grid.hy() * grid.hy());
    for j in 0..ny {
        let jn = if j + 1 == ny { 0 } else { j + 1 };
        let js = if j == 0 { ny - 1 } else { j - 1 };
        for i in 0..nx {
            let ie = if i + 1 == nx { 0 } else { i + 1 };
            let iw = if i == 0 { nx - 1 } else { i - 1 };
            let c = f[j * nx + i];
            out[j * nx + i] = (f[j * nx + ie] + f[j * nx + iw] - 2.0 * c) * cx
                + (f[jn * nx + i] + f[js * nx + i] - 2.0 * c) * cy;
        }
    }
}

/// Discrete L² inner product `Σ f·g·hx·hy`.
pub fn inner(f: &Field, g: &Field) -> Result<f64, GridError> {
    same_grid(f, g)?;
    Ok(inner_slices(&f.grid, &f.values, &g.values))
}

pub(crate) fn inner_slices(grid: &GridSpec, f: &[f64], g: &[f64]) -> f64 {
    compensated_sum(f.iter().zip(g).map(|(a, b)| a * b)) * grid.cell_area()
}

/// `‖∇_h f‖²` with forward differences and periodic wrap.
pub fn grad_sq_norm(f: &Field) -> f64 {
    let grid = &f.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let v = &f.values;
    let terms = (0..ny).flat_map(|j| {
        let jn = if j + 1 == ny { 0 } else { j + 1 };
        (0..nx).map(move |i| {
            let ie = if i + 1 == nx { 0 } else { i + 1 };
            let dx = (v[j * nx + ie] - v[j * nx + i]) / hx;
            let dy = (v[jn * nx + i] - v[j * nx + i]) / hy;
            dx * dx + dy * dy
        })
    });
    compensated_sum(terms) * grid.cell_area()
}

/// Discrete integral `Σ f·hx·hy`.
pub fn integrate(f: &Field) -> f64 {
    compensated_sum(f.values.iter().copied()) * f.grid.cell_area()
}

/// `sqrt(inner(f, f))`.
pub fn l2_norm(f: &Field) -> f64 {
    inner_slices(&f.grid, &f.values, &f.values).sqrt()
}

/// Writes a snapshot: a `nx ny t` header followed by one value per line in
/// row-major order with 17 significant digits.
pub fn write_snapshot<W: Write>(mut w: W, field: &Field, t: f64) -> std::io::Result<()> {
    writeln!(w, "{} {} {:?}", field.grid.nx(), field.grid.ny(), t)?;
    for v in &field.values {
        writeln!(w, "{:.16e}", v)?;
    }
    w.flush()
}

/// Reads a file produced by [`write_snapshot`].
pub fn read_snapshot<R: BufRead>(r: R) -> Result<(Field, f64), SnapshotError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SnapshotError::Format("empty file".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(SnapshotError::Format(format!("bad header {header:?}")));
    }
    let parse_err = |what: &str| SnapshotError::Format(format!("bad {what} in header {header:?}"));
    let nx: usize = parts[0].parse().map_err(|_| parse_err("nx"))?;
    let ny: usize = parts[1].parse().map_err(|_| parse_err("ny"))?;
    let t: f64 = parts[2].parse().map_err(|_| parse_err("time"))?;
    let grid = GridSpec::new(nx, ny)?;
    let mut values = Vec::with_capacity(grid.len());
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| SnapshotError::Format(format!("bad value on line {}", lineno + 2)))?;
        values.push(v);
    }
    Ok((Field::from_values(grid, values)?, t))
}
