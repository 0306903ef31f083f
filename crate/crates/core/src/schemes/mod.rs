//! First-order linear time steppers.
//!
//! * IEC: pointwise `c(r) = F(φ) + A₁` with convex, `L`-smooth `c`. With
//!   `c = r²` and `αL = 2` this is the IEQ scheme.
//! * IEF: pointwise `r·g(r) = F(φ) + A₁` with `g = r^{2k+1}`, `r` and `g`
//!   advanced as separate unknowns. `k = 0` is again IEQ.
//! * C-SAV: scalar `c(r) = ∫F(φ) + A₂`. With `c = r²` and `αL = 2` this is
//!   the SAV scheme.
//!
//! IEC and IEF assemble a sparse block system in `[φ; μ; r]` (and `g`) and
//! solve it with GMRES. The preconditioner eliminates `μ`, `r`, `g` exactly
//! and approximates the remaining `φ` operator by a circulant one, which the
//! FFT inverts. C-SAV needs only two circulant solves per step.

mod spectral;

pub use spectral::PeriodicSolver;

use thiserror::Error;

use crate::auxfun::{self, AuxError, AuxSpec, ConvexAux, MonoAux};
use crate::grid::{self, Field, GridError, GridSpec};
use crate::linalg::{self, LinearSystem, Operator, Preconditioner, RowBuilder, SolveError, SolverOptions};
use crate::model::{self, Flow, ForcingMode, ModelError, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Aux(#[from] AuxError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("state does not fit the scheme: {0}")]
    State(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    Iec(ConvexAux),
    Ief(MonoAux),
    Csav(ConvexAux),
}

impl SchemeKind {
    /// Resolves a scheme name (`iec`, `ieq`, `ief`, `csav`, `sav`) and an aux
    /// function. `ieq` and `sav` force the quadratic family.
    pub fn from_names(scheme: &str, aux: AuxSpec, lipschitz: f64) -> Result<Self, SchemeError> {
        use crate::auxfun::ConvexFamily::Quadratic;
        let convex = |aux: AuxSpec| match aux {
            AuxSpec::Convex(f) => Ok(ConvexAux::new(f).with_lipschitz(lipschitz)),
            AuxSpec::Monomial(_) => Err(SchemeError::Config(format!(
                "scheme {scheme} needs a convex auxiliary function, got {aux}"
            ))),
        };
        match scheme.trim().to_ascii_lowercase().as_str() {
            "iec" => Ok(SchemeKind::Iec(convex(aux)?)),
            "ieq" => Ok(SchemeKind::Iec(ConvexAux::new(Quadratic).with_lipschitz(lipschitz))),
            "csav" | "c-sav" => Ok(SchemeKind::Csav(convex(aux)?)),
            "sav" => Ok(SchemeKind::Csav(ConvexAux::new(Quadratic).with_lipschitz(lipschitz))),
            "ief" => match aux {
                AuxSpec::Monomial(m) => Ok(SchemeKind::Ief(m)),
                AuxSpec::Convex(_) => Err(SchemeError::Config(format!(
                    "scheme ief needs aux monomial:k=<int>, got {aux}"
                ))),
            },
            other => Err(SchemeError::Config(format!(
                "unknown scheme {other:?} (expected iec, ieq, ief, csav or sav)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::Iec(_) => "IEC",
            SchemeKind::Ief(_) => "IEF",
            SchemeKind::Csav(_) => "CSAV",
        }
    }

    pub fn aux_label(&self) -> String {
        match self {
            SchemeKind::Iec(a) | SchemeKind::Csav(a) => a.name().to_string(),
            SchemeKind::Ief(m) => m.name(),
        }
    }

    /// The `L` in `αL`; IEF has none.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            SchemeKind::Iec(a) | SchemeKind::Csav(a) => Some(a.lipschitz),
            SchemeKind::Ief(_) => None,
        }
    }
}

/// How IEC/IEF steps are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolvePath {
    /// GMRES on the assembled block system.
    #[default]
    Block,
    /// GMRES on the `φ`-only system after eliminating the other unknowns.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Relaxation factor on `L`; energy stability needs `α ≥ ½`.
    pub alpha: f64,
    pub dt: f64,
    pub params: ModelParams,
    /// Manufactured-solution source term, or `None` for the plain flow.
    pub forcing: Option<ForcingMode>,
    pub solver: SolverOptions,
    pub path: SolvePath,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, params: ModelParams, dt: f64) -> Self {
        Self {
            kind,
            alpha: 0.5,
            dt,
            params,
            forcing: None,
            solver: SolverOptions::default(),
            path: SolvePath::Block,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_forcing(mut self, forcing: Option<ForcingMode>) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        self.params.validate()?;
        if !(self.alpha >= 0.5) {
            return Err(SchemeError::Config(format!(
                "alpha = {} is below 1/2; the discrete energy law (and hence stability) requires alpha >= 1/2",
                self.alpha
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SchemeError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if let Some(l) = self.kind.lipschitz() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(SchemeError::Config(format!("L must be positive, got {l}")));
            }
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(SchemeError::Config("solver needs tol > 0 and max_iter > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuxState {
    /// Pointwise variable of IEC/IEF.
    Field(Field),
    /// Scalar variable of C-SAV.
    Scalar(f64),
}

impl AuxState {
    pub fn as_field(&self) -> Option<&Field> {
        match self {
            AuxState::Field(f) => Some(f),
            AuxState::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            AuxState::Scalar(r) => Some(*r),
            AuxState::Field(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub phi: Field,
    pub r: AuxState,
    /// IEF's separately advanced `g`.
    pub g: Option<Field>,
    pub step: usize,
    pub time: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// `‖b − Ax‖₂` of the accepted solution.
    pub residual: f64,
    pub rhs_norm: f64,
    pub iterations: usize,
    pub mu: Field,
    pub energy_modified: f64,
    pub energy_original: f64,
    /// `−(𝒢_h μⁿ⁺¹, μⁿ⁺¹)Δt ≥ 0`.
    pub dissipation: f64,
}

/// Sets up `r⁰` (and `g⁰`) from `φ⁰` at `t = 0`.
pub fn init_state(phi0: &Field, config: &SchemeConfig) -> Result<SchemeState, SchemeError> {
    init_state_at(phi0, config, 0.0)
}

pub fn init_state_at(phi0: &Field, config: &SchemeConfig, t0: f64) -> Result<SchemeState, SchemeError> {
    if !phi0.is_finite() {
        return Err(SchemeError::State("initial field is not finite"));
    }
    let a1 = config.params.a1;
    let (r, g) = match &config.kind {
        SchemeKind::Iec(aux) => (AuxState::Field(auxfun::r_of_phi(phi0, aux, a1)?), None),
        SchemeKind::Ief(m) => {
            let r = auxfun::r_of_phi_mono(phi0, m, a1)?;
            let g = r.map(|v| m.g(v));
            (AuxState::Field(r), Some(g))
        }
        SchemeKind::Csav(aux) => {
            let level = e1(phi0) + config.params.a2;
            let r = aux.cinv(level).ok_or(AuxError::ScalarDomain {
                family: aux.name(),
                level,
            })?;
            (AuxState::Scalar(r), None)
        }
    };
    Ok(SchemeState {
        phi: phi0.clone(),
        r,
        g,
        step: 0,
        time: t0,
        t0,
    })
}

fn e1(phi: &Field) -> f64 {
    grid::integrate(&phi.map(model::potential))
}

/// `(ε²/2)‖∇_h φ‖² + ∫c(r)`.
pub fn modified_energy_iec(state: &SchemeState, aux: &ConvexAux, params: &ModelParams) -> f64 {
    let r = state.r.as_field().expect("pointwise r");
    0.5 * params.eps2() * grid::grad_sq_norm(&state.phi) + grid::integrate(&r.map(|v| aux.c(v)))
}

/// `(ε²/2)‖∇_h φ‖² + ∫g·r`.
pub fn modified_energy_ief(state: &SchemeState, params: &ModelParams) -> f64 {
    let r = state.r.as_field().expect("pointwise r");
    let g = state.g.as_ref().expect("g present");
    0.5 * params.eps2() * grid::grad_sq_norm(&state.phi) + grid::inner(g, r).expect("same grid")
}

/// `(ε²/2)‖∇_h φ‖² + c(r)` with scalar `r`.
pub fn modified_energy_csav(state: &SchemeState, aux: &ConvexAux, params: &ModelParams) -> f64 {
    let r = state.r.as_scalar().expect("scalar r");
    0.5 * params.eps2() * grid::grad_sq_norm(&state.phi) + aux.c(r)
}

pub fn modified_energy(state: &SchemeState, config: &SchemeConfig) -> f64 {
    match &config.kind {
        SchemeKind::Iec(aux) => modified_energy_iec(state, aux, &config.params),
        SchemeKind::Ief(_) => modified_energy_ief(state, &config.params),
        SchemeKind::Csav(aux) => modified_energy_csav(state, aux, &config.params),
    }
}

/// Block system of one IEC step in the unknowns `[φ; μ; r]`.
pub fn assemble_iec(state: &SchemeState, config: &SchemeConfig) -> Result<LinearSystem, SchemeError> {
    match config.kind {
        SchemeKind::Iec(_) => Stepper::new(*config, *state.phi.grid())?.assemble(state),
        _ => Err(SchemeError::State("assemble_iec needs an IEC configuration")),
    }
}

/// Block system of one IEF step in the unknowns `[φ; μ; r; g]`.
pub fn assemble_ief(state: &SchemeState, config: &SchemeConfig) -> Result<LinearSystem, SchemeError> {
    match config.kind {
        SchemeKind::Ief(_) => Stepper::new(*config, *state.phi.grid())?.assemble(state),
        _ => Err(SchemeError::State("assemble_ief needs an IEF configuration")),
    }
}

pub fn step_iec(state: &SchemeState, config: &SchemeConfig) -> Result<(SchemeState, StepReport), SchemeError> {
    match config.kind {
        SchemeKind::Iec(_) => step(state, config),
        _ => Err(SchemeError::State("step_iec needs an IEC configuration")),
    }
}

pub fn step_ief(state: &SchemeState, config: &SchemeConfig) -> Result<(SchemeState, StepReport), SchemeError> {
    match config.kind {
        SchemeKind::Ief(_) => step(state, config),
        _ => Err(SchemeError::State("step_ief needs an IEF configuration")),
    }
}

pub fn step_csav(state: &SchemeState, config: &SchemeConfig) -> Result<(SchemeState, StepReport), SchemeError> {
    match config.kind {
        SchemeKind::Csav(_) => step(state, config),
        _ => Err(SchemeError::State("step_csav needs a C-SAV configuration")),
    }
}

/// One step with a throwaway [`Stepper`]; loops should keep a stepper.
pub fn step(state: &SchemeState, config: &SchemeConfig) -> Result<(SchemeState, StepReport), SchemeError> {
    Stepper::new(*config, *state.phi.grid())?.step(state)
}

/// Applies `𝒢_h` to a raw nodal vector.
fn apply_flow_into(grid: &GridSpec, params: &ModelParams, x: &[f64], out: &mut [f64]) {
    match params.flow {
        Flow::AllenCahn => {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -params.mobility * v;
            }
        }
        Flow::CahnHilliard => {
            grid::laplacian_into(grid, x, out);
            out.iter_mut().for_each(|o| *o *= params.mobility);
        }
    }
}

/// Symbol of `I/Δt + 𝒢(ε²Δ − w̄)` at Laplacian eigenvalue `λ`.
fn reduced_symbol(params: &ModelParams, dt: f64, wbar: f64, lambda: f64) -> f64 {
    let g = match params.flow {
        Flow::AllenCahn => -params.mobility,
        Flow::CahnHilliard => params.mobility * lambda,
    };
    1.0 / dt + g * (params.eps2() * lambda - wbar)
}

/// Pointwise data that lets `μ`, `r` (and `g`) be eliminated given `φ`.
struct Elimination {
    grid: GridSpec,
    params: ModelParams,
    dt: f64,
    p: Vec<f64>,
    kind: ElimKind,
}

enum ElimKind {
    /// `αL` of IEC.
    Iec { coef: f64 },
    /// `g′(rⁿ)` of IEF.
    Ief { q: Vec<f64> },
}

impl Elimination {
    fn blocks(&self) -> usize {
        match self.kind {
            ElimKind::Iec { .. } => 3,
            ElimKind::Ief { .. } => 4,
        }
    }

    /// `w` in `S = I/Δt + 𝒢(ε²Δ − diag(w))`.
    fn weight(&self) -> Vec<f64> {
        match &self.kind {
            ElimKind::Iec { coef } => self.p.iter().map(|p| coef * p * p).collect(),
            ElimKind::Ief { q } => self.p.iter().zip(q).map(|(p, q)| 2.0 * q * p * p).collect(),
        }
    }

    /// Right-hand side of the `φ` equation left after elimination.
    fn reduce(&self, v: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let (v1, v2, v3) = (&v[..n], &v[n..2 * n], &v[2 * n..3 * n]);
        let inner: Vec<f64> = match &self.kind {
            ElimKind::Iec { coef } => (0..n).map(|k| v2[k] + coef * self.p[k] * v3[k]).collect(),
            ElimKind::Ief { q } => {
                let v4 = &v[3 * n..4 * n];
                (0..n)
                    .map(|k| v2[k] + 2.0 * q[k] * self.p[k] * v3[k] + self.p[k] * v4[k])
                    .collect()
            }
        };
        let mut out = vec![0.0; n];
        apply_flow_into(&self.grid, &self.params, &inner, &mut out);
        for (o, a) in out.iter_mut().zip(v1) {
            *o += a;
        }
        out
    }

    /// Fills `x` with `φ` and the unknowns that rows 2.. determine from it.
    fn back_substitute(&self, phi: &[f64], v: &[f64], x: &mut [f64]) {
        let n = self.grid.len();
        let eps2 = self.params.eps2();
        let mut lap = vec![0.0; n];
        grid::laplacian_into(&self.grid, phi, &mut lap);
        x[..n].copy_from_slice(phi);
        let (v2, v3) = (&v[n..2 * n], &v[2 * n..3 * n]);
        match &self.kind {
            ElimKind::Iec { coef } => {
                for k in 0..n {
                    let r = v3[k] + self.p[k] * phi[k];
                    x[2 * n + k] = r;
                    x[n + k] = v2[k] - eps2 * lap[k] + coef * self.p[k] * r;
                }
            }
            ElimKind::Ief { q } => {
                let v4 = &v[3 * n..4 * n];
                for k in 0..n {
                    let r = v3[k] + self.p[k] * phi[k];
                    let g = v4[k] + q[k] * r;
                    x[2 * n + k] = r;
                    x[3 * n + k] = g;
                    x[n + k] = v2[k] - eps2 * lap[k] + q[k] * self.p[k] * r + self.p[k] * g;
                }
            }
        }
    }
}

/// Block preconditioner: exact elimination around a circulant `φ` solve.
struct BlockPrecond<'a> {
    elim: &'a Elimination,
    spectral: &'a PeriodicSolver,
    inv_symbol: Vec<f64>,
}

impl Preconditioner for BlockPrecond<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let rhs = self.elim.reduce(r);
        let mut phi = vec![0.0; rhs.len()];
        self.spectral.solve(&rhs, &self.inv_symbol, &mut phi);
        self.elim.back_substitute(&phi, r, z);
    }
}

/// `S = I/Δt + 𝒢(ε²Δ − diag(w))`, applied matrix-free.
struct ReducedOperator<'a> {
    elim: &'a Elimination,
    w: Vec<f64>,
}

impl Operator for ReducedOperator<'_> {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let e = self.elim;
        let eps2 = e.params.eps2();
        let mut t = vec![0.0; x.len()];
        grid::laplacian_into(&e.grid, x, &mut t);
        for ((tk, xk), wk) in t.iter_mut().zip(x).zip(&self.w) {
            *tk = eps2 * *tk - wk * xk;
        }
        apply_flow_into(&e.grid, &e.params, &t, y);
        for (yk, xk) in y.iter_mut().zip(x) {
            *yk += xk / e.dt;
        }
    }
}

struct SpectralPrecond<'a> {
    spectral: &'a PeriodicSolver,
    inv_symbol: Vec<f64>,
}

impl Preconditioner for SpectralPrecond<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.spectral.solve(r, &self.inv_symbol, z);
    }
}

/// Steps one scheme on one grid, reusing FFT plans across steps.
#[derive(Debug)]
pub struct Stepper {
    config: SchemeConfig,
    grid: GridSpec,
    spectral: PeriodicSolver,
}

impl Stepper {
    pub fn new(config: SchemeConfig, grid: GridSpec) -> Result<Self, SchemeError> {
        config.validate()?;
        Ok(Self {
            config,
            grid,
            spectral: PeriodicSolver::new(&grid),
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn init(&self, phi0: &Field) -> Result<SchemeState, SchemeError> {
        self.check_grid(phi0)?;
        init_state(phi0, &self.config)
    }

    pub fn modified_energy(&self, state: &SchemeState) -> f64 {
        modified_energy(state, &self.config)
    }

    fn check_grid(&self, phi: &Field) -> Result<(), SchemeError> {
        if *phi.grid() != self.grid {
            return Err(GridError::GridMismatch(self.grid, *phi.grid()).into());
        }
        Ok(())
    }

    fn check_state(&self, state: &SchemeState) -> Result<(), SchemeError> {
        self.check_grid(&state.phi)?;
        match (&self.config.kind, &state.r, &state.g) {
            (SchemeKind::Iec(_), AuxState::Field(r), _) => self.check_grid(r),
            (SchemeKind::Ief(_), AuxState::Field(r), Some(g)) => {
                self.check_grid(r)?;
                self.check_grid(g)
            }
            (SchemeKind::Ief(_), AuxState::Field(_), None) => Err(SchemeError::State("IEF state lacks g")),
            (SchemeKind::Csav(_), AuxState::Scalar(_), _) => Ok(()),
            (SchemeKind::Csav(_), _, _) => Err(SchemeError::State("C-SAV needs a scalar r")),
            _ => Err(SchemeError::State("IEC/IEF need a pointwise r")),
        }
    }

    fn forcing_at(&self, t: f64) -> Option<Field> {
        self.config
            .forcing
            .map(|mode| model::forcing(t, self.grid, &self.config.params, mode))
    }

    fn next_time(&self, state: &SchemeState) -> f64 {
        state.t0 + (state.step + 1) as f64 * self.config.dt
    }

    fn elimination(&self, state: &SchemeState) -> Result<Elimination, SchemeError> {
        let a1 = self.config.params.a1;
        let (p, kind) = match &self.config.kind {
            SchemeKind::Iec(aux) => (
                auxfun::p_of_phi(&state.phi, aux, a1)?.into_values(),
                ElimKind::Iec {
                    coef: self.config.alpha * aux.lipschitz,
                },
            ),
            SchemeKind::Ief(m) => {
                let r = state.r.as_field().ok_or(SchemeError::State("IEF needs a pointwise r"))?;
                (
                    auxfun::p_of_phi_mono(&state.phi, m, a1)?.into_values(),
                    ElimKind::Ief {
                        q: r.values().iter().map(|&v| m.gprime(v)).collect(),
                    },
                )
            }
            SchemeKind::Csav(_) => return Err(SchemeError::State("C-SAV has no block system")),
        };
        Ok(Elimination {
            grid: self.grid,
            params: self.config.params,
            dt: self.config.dt,
            p,
            kind,
        })
    }

    /// Assembles the block system for the step leaving `state`.
    pub fn assemble(&self, state: &SchemeState) -> Result<LinearSystem, SchemeError> {
        self.check_state(state)?;
        let elim = self.elimination(state)?;
        Ok(self.assemble_with(state, &elim))
    }

    fn assemble_with(&self, state: &SchemeState, elim: &Elimination) -> LinearSystem {
        let n = self.grid.len();
        let nb = elim.blocks();
        let dt = self.config.dt;
        let params = &self.config.params;
        let eps2 = params.eps2();
        let m = params.mobility;
        let p = &elim.p;
        let phi = state.phi.values();
        let r = state.r.as_field().expect("checked").values();

        let mut b = RowBuilder::with_capacity(nb * n, nb * n, 16 * n);
        // row 1: φ/Δt − 𝒢_h μ
        for k in 0..n {
            b.push(k, 1.0 / dt);
            match params.flow {
                Flow::AllenCahn => b.push(n + k, m),
                Flow::CahnHilliard => {
                    for (c, v) in self.grid.laplacian_row(k) {
                        b.push(n + c, -m * v);
                    }
                }
            }
            b.finish_row();
        }
        // row 2: ε²Δ_h φ + μ − (coupling to r, g)
        for k in 0..n {
            for (c, v) in self.grid.laplacian_row(k) {
                b.push(c, eps2 * v);
            }
            b.push(n + k, 1.0);
            match &elim.kind {
                ElimKind::Iec { coef } => b.push(2 * n + k, -coef * p[k]),
                ElimKind::Ief { q } => {
                    b.push(2 * n + k, -q[k] * p[k]);
                    b.push(3 * n + k, -p[k]);
                }
            }
            b.finish_row();
        }
        // row 3: −P φ + r
        for k in 0..n {
            b.push(k, -p[k]);
            b.push(2 * n + k, 1.0);
            b.finish_row();
        }
        // row 4 (IEF): −g′(rⁿ) r + g
        if let ElimKind::Ief { q } = &elim.kind {
            for k in 0..n {
                b.push(2 * n + k, -q[k]);
                b.push(3 * n + k, 1.0);
                b.finish_row();
            }
        }
        let matrix = b.build();

        let mut rhs = vec![0.0; nb * n];
        let forcing = self.forcing_at(self.next_time(state));
        for k in 0..n {
            rhs[k] = phi[k] / dt + forcing.as_ref().map_or(0.0, |s| s.values()[k]);
            rhs[2 * n + k] = r[k] - p[k] * phi[k];
        }
        match (&elim.kind, &self.config.kind) {
            (ElimKind::Iec { coef }, SchemeKind::Iec(aux)) => {
                for k in 0..n {
                    rhs[n + k] = aux.cprime(r[k]) * p[k] - coef * r[k] * p[k];
                }
            }
            (ElimKind::Ief { q }, _) => {
                let g = state.g.as_ref().expect("checked").values();
                for k in 0..n {
                    rhs[3 * n + k] = g[k] - q[k] * r[k];
                }
            }
            _ => unreachable!("elimination matches scheme"),
        }
        LinearSystem::new(matrix, rhs).expect("square by construction")
    }

    pub fn step(&self, state: &SchemeState) -> Result<(SchemeState, StepReport), SchemeError> {
        self.check_state(state)?;
        match self.config.kind {
            SchemeKind::Iec(_) | SchemeKind::Ief(_) => self.step_block(state),
            SchemeKind::Csav(aux) => self.step_csav(state, &aux),
        }
    }

    fn step_block(&self, state: &SchemeState) -> Result<(SchemeState, StepReport), SchemeError> {
        let n = self.grid.len();
        let elim = self.elimination(state)?;
        let sys = self.assemble_with(state, &elim);
        let w = elim.weight();
        let wbar = w.iter().sum::<f64>() / n as f64;
        let params = self.config.params;
        let dt = self.config.dt;
        let inv_symbol = self
            .spectral
            .inverse_symbol(|l| reduced_symbol(&params, dt, wbar, l));
        let opts = self.config.solver;
        let rhs_norm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();

        let (x, residual, iterations) = match self.config.path {
            SolvePath::Block => {
                let precond = BlockPrecond {
                    elim: &elim,
                    spectral: &self.spectral,
                    inv_symbol,
                };
                // Starting from M⁻¹b makes the initial residual vanish outside
                // the φ rows, and A·M⁻¹ keeps it that way, so the constraint
                // rows hold to rounding whatever the tolerance.
                let mut x0 = vec![0.0; sys.rhs.len()];
                precond.apply(&sys.rhs, &mut x0);
                let sol = linalg::solve_with(&sys, &precond, Some(&x0), &opts)?;
                (sol.x, sol.residual, sol.iterations)
            }
            SolvePath::Reduced => {
                let rhs1 = elim.reduce(&sys.rhs);
                let op = ReducedOperator { elim: &elim, w };
                let pre = SpectralPrecond {
                    spectral: &self.spectral,
                    inv_symbol,
                };
                let sol = linalg::gmres(&op, &rhs1, &pre, None, &opts)?;
                let mut x = vec![0.0; sys.rhs.len()];
                elim.back_substitute(&sol.x, &sys.rhs, &mut x);
                let residual = sys.residual_norm(&x);
                (x, residual, sol.iterations)
            }
        };

        let field = |k: usize| Field::from_values(self.grid, x[k * n..(k + 1) * n].to_vec());
        let phi = field(0)?;
        let mu = field(1)?;
        let r = field(2)?;
        let g = if elim.blocks() == 4 { Some(field(3)?) } else { None };
        let next = SchemeState {
            phi,
            r: AuxState::Field(r),
            g,
            step: state.step + 1,
            time: self.next_time(state),
            t0: state.t0,
        };
        let report = self.report(&next, mu, residual, rhs_norm, iterations);
        Ok((next, report))
    }

    fn step_csav(&self, state: &SchemeState, aux: &ConvexAux) -> Result<(SchemeState, StepReport), SchemeError> {
        let params = self.config.params;
        let dt = self.config.dt;
        let eps2 = params.eps2();
        let coef = self.config.alpha * aux.lipschitz;
        let rn = state.r.as_scalar().expect("checked");
        let phi_n = &state.phi;

        let level = e1(phi_n) + params.a2;
        let cp_phi = aux.cprime_at_level(level).ok_or(AuxError::ScalarDomain {
            family: aux.name(),
            level,
        })?;
        if cp_phi == 0.0 || !cp_phi.is_finite() {
            return Err(AuxError::ScalarSingularity {
                family: aux.name(),
                level,
            }
            .into());
        }
        let b = phi_n.map(|v| model::dpotential(v) / cp_phi);
        let gb = model::apply_flow(&b, &params);
        let b_phi_n = grid::inner(&b, phi_n)?;

        let forcing = self.forcing_at(self.next_time(state));
        let shift = aux.cprime(rn) - coef * b_phi_n;
        let n = self.grid.len();
        let rhs: Vec<f64> = (0..n)
            .map(|k| {
                phi_n.values()[k] / dt
                    + forcing.as_ref().map_or(0.0, |s| s.values()[k])
                    + gb.values()[k] * shift
            })
            .collect();

        let inv = self
            .spectral
            .inverse_symbol(|l| reduced_symbol(&params, dt, 0.0, l));
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        self.spectral.solve(&rhs, &inv, &mut u);
        self.spectral.solve(gb.values(), &inv, &mut v);
        let bu = grid::inner_slices(&self.grid, b.values(), &u);
        let bv = grid::inner_slices(&self.grid, b.values(), &v);
        // φ = u + αL·s·v with s = (b, φ); (b, v) ≤ 0 keeps the denominator ≥ 1
        let s = bu / (1.0 - coef * bv);
        let phi_vals: Vec<f64> = u.iter().zip(&v).map(|(a, c)| a + coef * s * c).collect();
        let phi = Field::from_values(self.grid, phi_vals)?;

        let dphi = phi.zip_map(phi_n, |a, c| a - c)?;
        let dr = grid::inner(&b, &dphi)?;
        let r = rn + dr;
        let lap = grid::laplacian(&phi);
        let factor = aux.cprime(rn) + coef * dr;
        let mu = lap.zip_map(&b, |l, bk| -eps2 * l + factor * bk)?;

        let gmu = model::apply_flow(&mu, &params);
        let residual = (0..n)
            .map(|k| {
                let lhs = phi.values()[k] / dt - gmu.values()[k];
                let e = lhs - rhs_plain(phi_n, &forcing, dt, k);
                e * e
            })
            .sum::<f64>()
            .sqrt();
        let rhs_norm = (0..n)
            .map(|k| rhs_plain(phi_n, &forcing, dt, k).powi(2))
            .sum::<f64>()
            .sqrt();

        let next = SchemeState {
            phi,
            r: AuxState::Scalar(r),
            g: None,
            step: state.step + 1,
            time: self.next_time(state),
            t0: state.t0,
        };
        let report = self.report(&next, mu, residual, rhs_norm, 0);
        Ok((next, report))
    }

    fn report(&self, next: &SchemeState, mu: Field, residual: f64, rhs_norm: f64, iterations: usize) -> StepReport {
        let params = &self.config.params;
        StepReport {
            residual,
            rhs_norm,
            iterations,
            energy_modified: self.modified_energy(next),
            energy_original: model::free_energy(&next.phi, params),
            dissipation: model::dissipation_rate(&mu, params) * self.config.dt,
            mu,
        }
    }
}

/// `φⁿ/Δt + Sⁿ⁺¹` at node `k`.
fn rhs_plain(phi_n: &Field, forcing: &Option<Field>, dt: f64, k: usize) -> f64 {
    phi_n.values()[k] / dt + forcing.as_ref().map_or(0.0, |s| s.values()[k])
}
