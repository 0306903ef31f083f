//! Dense reference machinery for the integration tests. Nothing here calls
//! into the solver paths it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use gradflow::model::{Flow, ModelParams};

pub fn potential(phi: f64) -> f64 {
    0.25 * (phi * phi - 1.0).powi(2)
}

pub fn dpotential(phi: f64) -> f64 {
    phi * phi * phi - phi
}

pub fn nodes(n: usize) -> Vec<(f64, f64)> {
    let h = 2.0 * PI / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push((i as f64 * h, j as f64 * h));
        }
    }
    out
}

/// Dense 5-point periodic Laplacian on an `n × n` grid of `[0, 2π]²`.
pub fn laplacian_matrix(n: usize) -> Vec<Vec<f64>> {
    let h2 = (2.0 * PI / n as f64).powi(2);
    let len = n * n;
    let mut a = vec![vec![0.0; len]; len];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            a[k][k] -= 4.0 / h2;
            a[k][j * n + (i + 1) % n] += 1.0 / h2;
            a[k][j * n + (i + n - 1) % n] += 1.0 / h2;
            a[k][((j + 1) % n) * n + i] += 1.0 / h2;
            a[k][((j + n - 1) % n) * n + i] += 1.0 / h2;
        }
    }
    a
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn scale(a: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    a.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

pub fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        assert!(a[piv][col].abs() > 1e-14, "singular at column {col}");
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Flow operator as a dense matrix: `−M·I` or `M·Δ_h`.
pub fn flow_matrix(n: usize, mobility: f64, cahn_hilliard: bool) -> Vec<Vec<f64>> {
    if cahn_hilliard {
        scale(&laplacian_matrix(n), mobility)
    } else {
        scale(&identity(n * n), -mobility)
    }
}

/// Places `blocks[r][c]` (each `n × n`) into one dense matrix.
fn blocks(parts: &[Vec<Option<Vec<Vec<f64>>>>], n: usize) -> Vec<Vec<f64>> {
    let nb = parts.len();
    let mut a = vec![vec![0.0; nb * n]; nb * n];
    for (bi, row) in parts.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some(m) = blk {
                for i in 0..n {
                    for j in 0..n {
                        a[bi * n + i][bj * n + j] = m[i][j];
                    }
                }
            }
        }
    }
    a
}

fn diag(v: &[f64]) -> Vec<Vec<f64>> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| if i == j { v[i] } else { 0.0 }).collect()).collect()
}

pub struct Dense {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Softplus IEC system in `[φ; μ; r]`, `A₁ = 1`, `L = 2`.
pub fn softplus_system(
    side: usize,
    dt: f64,
    phi: &[f64],
    params: &ModelParams,
    alpha: f64,
    source: Option<&[f64]>,
) -> Dense {
    let n = phi.len();
    let a1 = params.a1;
    let coef = alpha * 2.0;
    let level: Vec<f64> = phi.iter().map(|&v| potential(v) + a1).collect();
    let r: Vec<f64> = level.iter().map(|&y| (y.exp() - 1.0).ln()).collect();
    let p: Vec<f64> = phi
        .iter()
        .zip(&level)
        .map(|(&v, &y)| y.exp() / (y.exp() - 1.0) * dpotential(v))
        .collect();
    let cprime: Vec<f64> = r.iter().map(|&v| v.exp() / (1.0 + v.exp())).collect();
    let lap = laplacian_matrix(side);
    let flow = flow_matrix(side, params.mobility, params.flow == Flow::CahnHilliard);
    let eye = identity(n);
    let matrix = blocks(
        &[
            vec![Some(scale(&eye, 1.0 / dt)), Some(scale(&flow, -1.0)), None],
            vec![
                Some(scale(&lap, params.eps2())),
                Some(eye.clone()),
                Some(diag(&p.iter().map(|v| -coef * v).collect::<Vec<_>>())),
            ],
            vec![Some(diag(&p.iter().map(|v| -v).collect::<Vec<_>>())), None, Some(eye)],
        ],
        n,
    );
    let mut rhs = vec![0.0; 3 * n];
    for k in 0..n {
        rhs[k] = phi[k] / dt + source.map_or(0.0, |s| s[k]);
        rhs[n + k] = cprime[k] * p[k] - coef * r[k] * p[k];
        rhs[2 * n + k] = r[k] - p[k] * phi[k];
    }
    Dense { matrix, rhs }
}

/// IEF system in `[φ; μ; r; g]` with `g = r^(2k+1)` and `r⁰ = (F + A₁)^(1/(2k+2))`.
pub fn monomial_system(side: usize, dt: f64, phi: &[f64], params: &ModelParams, k: i32) -> Dense {
    let n = phi.len();
    let e = 2 * k + 1;
    let level: Vec<f64> = phi.iter().map(|&v| potential(v) + params.a1).collect();
    let r: Vec<f64> = level.iter().map(|&y| y.powf(1.0 / (e as f64 + 1.0))).collect();
    let g: Vec<f64> = r.iter().map(|&v| v.powi(e)).collect();
    let q: Vec<f64> = r.iter().map(|&v| e as f64 * v.powi(e - 1)).collect();
    let p: Vec<f64> = phi
        .iter()
        .zip(&level)
        .map(|(&v, &y)| dpotential(v) / ((e as f64 + 1.0) * y.powf(e as f64 / (e as f64 + 1.0))))
        .collect();
    let lap = laplacian_matrix(side);
    let flow = flow_matrix(side, params.mobility, params.flow == Flow::CahnHilliard);
    let eye = identity(n);
    let neg = |v: &[f64]| diag(&v.iter().map(|x| -x).collect::<Vec<_>>());
    let qp: Vec<f64> = q.iter().zip(&p).map(|(a, b)| a * b).collect();
    let matrix = blocks(
        &[
            vec![Some(scale(&eye, 1.0 / dt)), Some(scale(&flow, -1.0)), None, None],
            vec![Some(scale(&lap, params.eps2())), Some(eye.clone()), Some(neg(&qp)), Some(neg(&p))],
            vec![Some(neg(&p)), None, Some(eye.clone()), None],
            vec![None, None, Some(neg(&q)), Some(eye)],
        ],
        n,
    );
    let mut rhs = vec![0.0; 4 * n];
    for i in 0..n {
        rhs[i] = phi[i] / dt;
        rhs[2 * n + i] = r[i] - p[i] * phi[i];
        rhs[3 * n + i] = g[i] - q[i] * r[i];
    }
    Dense { matrix, rhs }
}

/// Matrix-free 5-point periodic Laplacian on an `n × n` grid.
pub fn apply_laplacian(n: usize, x: &[f64]) -> Vec<f64> {
    let h2 = (2.0 * PI / n as f64).powi(2);
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let s = x[j * n + (i + 1) % n] + x[j * n + (i + n - 1) % n] + x[((j + 1) % n) * n + i]
                + x[((j + n - 1) % n) * n + i]
                - 4.0 * x[j * n + i];
            out[j * n + i] = s / h2;
        }
    }
    out
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, c)| a * c).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * rr.sqrt();
    for _ in 0..10 * b.len() {
        if rr.sqrt() <= target {
            return x;
        }
        let ap = apply(&p);
        let step = rr / dot(&p, &ap);
        for k in 0..b.len() {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        let next = dot(&r, &r);
        for k in 0..b.len() {
            p[k] = r[k] + next / rr * p[k];
        }
        rr = next;
    }
    panic!("conjugate gradients did not converge");
}

/// Classical IEQ on the Allen–Cahn flow, `r = √(F + A₁)`, solved by CG on the
/// symmetric system `(I/Δt − Mε²Δ_h + (M/2)H²)φⁿ⁺¹ = φⁿ/Δt + S − M(H rⁿ − ½H²φⁿ)`.
pub struct IeqAllenCahn {
    pub side: usize,
    pub dt: f64,
    pub params: ModelParams,
    pub phi: Vec<f64>,
    pub r: Vec<f64>,
}

impl IeqAllenCahn {
    pub fn new(side: usize, dt: f64, params: ModelParams, phi: Vec<f64>) -> Self {
        assert_eq!(params.flow, Flow::AllenCahn);
        let r = phi.iter().map(|&v| (potential(v) + params.a1).sqrt()).collect();
        Self { side, dt, params, phi, r }
    }

    pub fn step(&mut self, source: Option<&[f64]>) {
        let (m, eps2, dt) = (self.params.mobility, self.params.eps2(), self.dt);
        let h: Vec<f64> = self
            .phi
            .iter()
            .map(|&v| dpotential(v) / (potential(v) + self.params.a1).sqrt())
            .collect();
        let rhs: Vec<f64> = (0..self.phi.len())
            .map(|k| {
                self.phi[k] / dt + source.map_or(0.0, |s| s[k])
                    - m * (h[k] * self.r[k] - 0.5 * h[k] * h[k] * self.phi[k])
            })
            .collect();
        let side = self.side;
        let next = conjugate_gradient(
            |x| {
                let lap = apply_laplacian(side, x);
                (0..x.len())
                    .map(|k| x[k] / dt - m * eps2 * lap[k] + 0.5 * m * h[k] * h[k] * x[k])
                    .collect()
            },
            &rhs,
            1e-14,
        );
        for k in 0..next.len() {
            self.r[k] += 0.5 * h[k] * (next[k] - self.phi[k]);
        }
        self.phi = next;
    }
}
