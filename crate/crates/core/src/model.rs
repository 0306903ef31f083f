//! Double-well phase-field model: potential, free energy, flow operators and
//! the manufactured solution `φ = sin(x)cos(y)cos(t)` with its source term.

use thiserror::Error;

use crate::grid::{self, Field, GridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Which gradient flow is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flow {
    /// L² flow, `𝒢 = −M·I`.
    AllenCahn,
    /// H⁻¹ flow, `𝒢 = M·Δ_h`.
    CahnHilliard,
}

impl Flow {
    pub fn name(&self) -> &'static str {
        match self {
            Flow::AllenCahn => "allen-cahn",
            Flow::CahnHilliard => "cahn-hilliard",
        }
    }

    /// Short label used in CSV rows.
    pub fn short(&self) -> &'static str {
        match self {
            Flow::AllenCahn => "AC",
            Flow::CahnHilliard => "CH",
        }
    }
}

impl std::str::FromStr for Flow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ac" | "allen-cahn" | "allen_cahn" | "allencahn" => Ok(Flow::AllenCahn),
            "ch" | "cahn-hilliard" | "cahn_hilliard" | "cahnhilliard" => Ok(Flow::CahnHilliard),
            other => Err(format!("unknown flow {other:?} (expected allen-cahn or cahn-hilliard)")),
        }
    }
}

/// How the manufactured-solution source term is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForcingMode {
    /// Continuous operators applied to the exact solution.
    Analytic,
    /// The grid's own operators applied to the nodal exact solution; the
    /// exact solution then solves the space-discrete equation exactly.
    Discrete,
}

impl std::str::FromStr for ForcingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(ForcingMode::Analytic),
            "discrete" => Ok(ForcingMode::Discrete),
            other => Err(format!("unknown forcing mode {other:?} (expected analytic or discrete)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Mobility `M`.
    pub mobility: f64,
    /// Interface parameter `ε`; `ε²` weights the gradient energy.
    pub epsilon: f64,
    pub flow: Flow,
    /// Shift `A₁` making `F + A₁` positive for the pointwise auxiliary variables.
    pub a1: f64,
    /// Shift `A₂` for the scalar auxiliary variable.
    pub a2: f64,
}

impl ModelParams {
    /// `M = 0.6`, `ε = 0.4`, `A₁ = A₂ = 1`.
    pub fn standard(flow: Flow) -> Self {
        Self {
            mobility: 0.6,
            epsilon: 0.4,
            flow,
            a1: 1.0,
            a2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("mobility", self.mobility),
            ("epsilon", self.epsilon),
            ("a1", self.a1),
            ("a2", self.a2),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NotPositive { name, value });
            }
        }
        Ok(())
    }

    pub fn eps2(&self) -> f64 {
        self.epsilon * self.epsilon
    }
}

/// `F(φ) = ¼(φ² − 1)²`.
#[inline]
pub fn potential(phi: f64) -> f64 {
    let w = phi * phi - 1.0;
    0.25 * w * w
}

/// `f(φ) = F′(φ) = φ³ − φ`.
#[inline]
pub fn dpotential(phi: f64) -> f64 {
    phi * (phi * phi - 1.0)
}

/// `E(φ) = (ε²/2)‖∇_h φ‖² + ∫ F(φ)`.
pub fn free_energy(phi: &Field, params: &ModelParams) -> f64 {
    0.5 * params.eps2() * grid::grad_sq_norm(phi) + grid::integrate(&phi.map(potential))
}

/// `𝒢_h μ`: `−M μ` for Allen–Cahn, `M Δ_h μ` for Cahn–Hilliard.
pub fn apply_flow(mu: &Field, params: &ModelParams) -> Field {
    match params.flow {
        Flow::AllenCahn => mu.map(|v| -params.mobility * v),
        Flow::CahnHilliard => grid::laplacian(mu).map(|v| params.mobility * v),
    }
}

/// Chemical potential `μ = −ε²Δ_h φ + f(φ)`.
pub fn chemical_potential(phi: &Field, params: &ModelParams) -> Field {
    let lap = grid::laplacian(phi);
    let eps2 = params.eps2();
    lap.zip_map(phi, |l, p| -eps2 * l + dpotential(p))
        .expect("same grid")
}

/// `−(𝒢_h μ, μ) ≥ 0`, the dissipation rate of a chemical potential.
pub fn dissipation_rate(mu: &Field, params: &ModelParams) -> f64 {
    match params.flow {
        Flow::AllenCahn => params.mobility * grid::inner(mu, mu).expect("same grid"),
        Flow::CahnHilliard => params.mobility * grid::grad_sq_norm(mu),
    }
}

/// Exact solution `sin(x)cos(y)cos(t)` at the nodes.
pub fn manufactured_state(t: f64, grid: GridSpec) -> Field {
    let ct = t.cos();
    Field::from_fn(grid, |x, y| x.sin() * y.cos() * ct)
}

/// `∂_t φ_e = −sin(x)cos(y)sin(t)`.
pub fn manufactured_rate(t: f64, grid: GridSpec) -> Field {
    let st = t.sin();
    Field::from_fn(grid, |x, y| -x.sin() * y.cos() * st)
}

/// Source term `S(t)` such that `φ_t = 𝒢μ + S` holds for the manufactured
/// solution. In [`ForcingMode::Discrete`] the residual vanishes for the
/// space-discrete equation; in [`ForcingMode::Analytic`] it vanishes for the
/// continuous one.
pub fn forcing(t: f64, grid: GridSpec, params: &ModelParams, mode: ForcingMode) -> Field {
    let rate = manufactured_rate(t, grid);
    let flow_term = match mode {
        ForcingMode::Discrete => {
            let mu = chemical_potential(&manufactured_state(t, grid), params);
            apply_flow(&mu, params)
        }
        ForcingMode::Analytic => analytic_flow_term(t, grid, params),
    };
    rate.zip_map(&flow_term, |a, b| a - b).expect("same grid")
}

/// `𝒢[−ε²Δφ_e + f(φ_e)]` evaluated with continuous derivatives.
fn analytic_flow_term(t: f64, grid: GridSpec, params: &ModelParams) -> Field {
    let ct = t.cos();
    let eps2 = params.eps2();
    let m = params.mobility;
    match params.flow {
        Flow::AllenCahn => Field::from_fn(grid, |x, y| {
            let phi = x.sin() * y.cos() * ct;
            // Δφ_e = −2φ_e
            -m * (2.0 * eps2 * phi + dpotential(phi))
        }),
        Flow::CahnHilliard => Field::from_fn(grid, |x, y| {
            let s = x.sin() * y.cos();
            let phi = s * ct;
            let grad_s_sq = (x.cos() * y.cos()).powi(2) + (x.sin() * y.sin()).powi(2);
            // Δ(s³) = 3s²Δs + 6s|∇s|² with Δs = −2s
            let lap_cube = ct.powi(3) * (-6.0 * s.powi(3) + 6.0 * s * grad_s_sq);
            // Δμ_e = −ε²Δ²φ_e + Δ(φ_e³) − Δφ_e
            let lap_mu = -4.0 * eps2 * phi + lap_cube + 2.0 * phi;
            m * lap_mu
        }),
    }
}
