//! Sparse matrices in compressed-row form and a restarted GMRES solver with
//! right preconditioning. The per-step block systems are nonsymmetric, so a
//! Krylov method that needs no symmetry is the natural fit.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("GMRES did not converge: residual {residual:e} > target {target:e} after {iterations} iterations")]
    NonConvergence {
        residual: f64,
        target: f64,
        iterations: usize,
    },
    #[error("Krylov breakdown after {iterations} iterations (residual {residual:e})")]
    Breakdown { residual: f64, iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Builds a matrix one row at a time. Entries within a row may arrive in any
/// order; duplicates are summed. Explicit zeros are kept so that the sparsity
/// pattern depends only on the operator layout, not on the data.
#[derive(Debug)]
pub struct RowBuilder {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pending: Vec<(usize, f64)>,
}

impl RowBuilder {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn with_capacity(ncols: usize, nrows: usize, nnz: usize) -> Self {
        let mut b = Self::new(ncols);
        b.row_ptr.reserve(nrows);
        b.cols.reserve(nnz);
        b.vals.reserve(nnz);
        b
    }

    pub fn push(&mut self, col: usize, val: f64) {
        assert!(col < self.ncols, "column {col} out of range {}", self.ncols);
        self.pending.push((col, val));
    }

    pub fn finish_row(&mut self) {
        self.pending.sort_by_key(|&(c, _)| c);
        for &(c, v) in &self.pending {
            if self.cols.len() > *self.row_ptr.last().unwrap() && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.pending.clear();
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(mut self) -> SparseMatrix {
        if !self.pending.is_empty() {
            self.finish_row();
        }
        SparseMatrix {
            nrows: self.row_ptr.len() - 1,
            ncols: self.ncols,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            nrows: d.len(),
            ncols: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len()).collect(),
            vals: d.to_vec(),
        }
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows, "row {i} out of range {nrows}");
            by_row[i].push((j, v));
        }
        let mut b = RowBuilder::with_capacity(ncols, nrows, triplets.len());
        for row in by_row {
            for (j, v) in row {
                b.push(j, v);
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, value)` pairs of row `i` in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            *yi = s;
        }
    }
}

/// `y = M x`.
pub fn matvec(m: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>, SolveError> {
    if x.len() != m.ncols {
        return Err(SolveError::DimensionMismatch {
            expected: m.ncols,
            got: x.len(),
        });
    }
    let mut y = vec![0.0; m.nrows];
    m.matvec_into(x, &mut y);
    Ok(y)
}

/// Anything that can be applied to a vector.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl Operator for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y)
    }
}

/// Approximate inverse applied on the right: the solver iterates on `A M⁻¹`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(m: &SparseMatrix) -> Self {
        let inv_diag = m
            .diagonal_values()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn new(matrix: SparseMatrix, rhs: Vec<f64>) -> Result<Self, SolveError> {
        if matrix.nrows != matrix.ncols {
            return Err(SolveError::DimensionMismatch {
                expected: matrix.nrows,
                got: matrix.ncols,
            });
        }
        if rhs.len() != matrix.nrows {
            return Err(SolveError::DimensionMismatch {
                expected: matrix.nrows,
                got: rhs.len(),
            });
        }
        Ok(Self { matrix, rhs })
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        residual_norm(&self.matrix, &self.rhs, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `‖b − Ax‖₂` recomputed from the returned iterate.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves with Jacobi preconditioning and a zero initial guess.
pub fn solve(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>, SolveError> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    gmres(&system.matrix, &system.rhs, &Jacobi::new(&system.matrix), None, &opts).map(|s| s.x)
}

/// Solves with a caller-supplied preconditioner and optional initial guess.
pub fn solve_with(
    system: &LinearSystem,
    precond: &dyn Preconditioner,
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    gmres(&system.matrix, &system.rhs, precond, x0, opts)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual_norm(a: &dyn Operator, b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax);
    ax.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt()
}

/// Restarted GMRES(m) with right preconditioning, modified Gram–Schmidt and
/// Givens rotations. Convergence is declared on the true residual
/// `‖b − Ax‖ ≤ tol·max(1, ‖b‖)`.
pub fn gmres(
    a: &dyn Operator,
    b: &[f64],
    precond: &dyn Preconditioner,
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(SolveError::NonFinite("right-hand side"));
    }
    let mut x = match x0 {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => {
            return Err(SolveError::DimensionMismatch {
                expected: n,
                got: g.len(),
            })
        }
        None => vec![0.0; n],
    };
    let target = opts.tol * norm(b).max(1.0);
    let m = opts.restart.max(1);

    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut iterations = 0;

    loop {
        a.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        if !beta.is_finite() {
            return Err(SolveError::NonFinite("residual"));
        }
        if beta <= target {
            return Ok(Solution {
                x,
                residual: beta,
                iterations,
            });
        }
        if iterations >= opts.max_iter {
            return Err(SolveError::NonConvergence {
                residual: beta,
                target,
                iterations,
            });
        }

        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        let mut breakdown = false;

        for k in 0..m {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            precond.apply(&basis[k], &mut z);
            a.apply(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(&w, v);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(v) {
                    *wj -= hik * vj;
                }
            }
            let hnext = norm(&w);
            h[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                breakdown = true;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            // stop a little past the target so the recomputed residual passes
            if g[k + 1].abs() <= 0.5 * target || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        if k_used == 0 {
            return Err(SolveError::Breakdown {
                residual: beta,
                iterations,
            });
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            for (wj, vj) in w.iter_mut().zip(v) {
                *wj += yi * vj;
            }
        }
        precond.apply(&w, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        if breakdown {
            let res = residual_norm(a, b, &x);
            if res <= target {
                return Ok(Solution {
                    x,
                    residual: res,
                    iterations,
                });
            }
            return Err(SolveError::Breakdown {
                residual: res,
                iterations,
            });
        }
    }
}
