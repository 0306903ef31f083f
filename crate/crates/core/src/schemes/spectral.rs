//! Exact inverses of operators that are polynomials in the periodic 5-point
//! Laplacian. Such operators are circulant, so the 2-D DFT diagonalises them.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

pub struct PeriodicSolver {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    /// Laplacian eigenvalues in transposed (column-major) layout.
    lambda: Vec<f64>,
}

impl std::fmt::Debug for PeriodicSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicSolver")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish_non_exhaustive()
    }
}

impl PeriodicSolver {
    pub fn new(grid: &GridSpec) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut planner = FftPlanner::new();
        let cx = 4.0 / (grid.hx() * grid.hx());
        let cy = 4.0 / (grid.hy() * grid.hy());
        let mut lambda = vec![0.0; nx * ny];
        for i in 0..nx {
            let sx = (std::f64::consts::PI * i as f64 / nx as f64).sin();
            for j in 0..ny {
                let sy = (std::f64::consts::PI * j as f64 / ny as f64).sin();
                lambda[i * ny + j] = -cx * sx * sx - cy * sy * sy;
            }
        }
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
            lambda,
        }
    }

    /// Laplacian eigenvalues in the internal mode ordering; feed a function
    /// of these to [`PeriodicSolver::solve`].
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Builds `1/σ(λ)` for every mode.
    pub fn inverse_symbol(&self, symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        self.lambda.iter().map(|&l| 1.0 / symbol(l)).collect()
    }

    /// `out = σ(Δ_h)⁻¹ rhs` given `inv_symbol` from [`Self::inverse_symbol`].
    pub fn solve(&self, rhs: &[f64], inv_symbol: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let mut a: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd_x.process(&mut a);
        let mut t = transpose(&a, nx, ny);
        self.fwd_y.process(&mut t);
        for (v, s) in t.iter_mut().zip(inv_symbol) {
            *v *= s;
        }
        self.inv_y.process(&mut t);
        let mut a = transpose(&t, ny, nx);
        self.inv_x.process(&mut a);
        let scale = 1.0 / (nx * ny) as f64;
        for (o, v) in out.iter_mut().zip(&a) {
            *o = v.re * scale;
        }
    }
}

/// `src` holds `rows` rows of length `cols`; returns the `cols × rows` transpose.
fn transpose(src: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    dst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian_into, Field};

    #[test]
    fn inverts_shifted_laplacian() {
        let g = GridSpec::new(12, 8).unwrap();
        let s = PeriodicSolver::new(&g);
        let f = Field::from_fn(g, |x, y| (x + 0.3).sin() * (2.0 * y).cos() + 0.2 * (3.0 * x).cos());
        let inv = s.inverse_symbol(|l| 2.0 - 0.7 * l + 0.1 * l * l);
        let mut u = vec![0.0; g.len()];
        s.solve(f.values(), &inv, &mut u);
        // apply 2 − 0.7Δ + 0.1Δ² and compare
        let mut lu = vec![0.0; g.len()];
        let mut llu = vec![0.0; g.len()];
        laplacian_into(&g, &u, &mut lu);
        laplacian_into(&g, &lu, &mut llu);
        for k in 0..g.len() {
            let back = 2.0 * u[k] - 0.7 * lu[k] + 0.1 * llu[k];
            assert!((back - f.values()[k]).abs() < 1e-12, "node {k}");
        }
    }

    #[test]
    fn eigenvalues_are_nonpositive_with_one_zero() {
        let g = GridSpec::square(10).unwrap();
        let s = PeriodicSolver::new(&g);
        assert!(s.eigenvalues().iter().all(|&l| l <= 0.0));
        assert_eq!(s.eigenvalues().iter().filter(|&&l| l == 0.0).count(), 1);
    }
}
