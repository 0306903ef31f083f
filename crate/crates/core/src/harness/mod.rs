//! Experiment drivers: manufactured-solution accuracy sweeps, energy traces,
//! modified-vs-original energy gaps, auxiliary consistency, coarsening runs
//! and a self-contained invariant suite.

mod ic;
pub mod output;
mod validate;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use ic::{count_components, InitialCondition, DEFAULT_R1, DEFAULT_SEED};
pub use validate::{run_validation, Check};

use crate::auxfun;
use crate::grid::{self, Field, GridSpec};
use crate::model::{self, Flow};
use crate::schemes::{AuxState, SchemeConfig, SchemeError, SchemeKind, SchemeState, Stepper};

/// Per-step tolerance on modified-energy increase.
pub const ENERGY_SLACK: f64 = 1e-9;
/// Tolerance on the accumulated dissipation exceeding `E⁰`.
pub const DISSIPATION_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("step {step} (t = {time}) failed: {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: SchemeError,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Number of steps of size `dt` that land exactly on `t_end`.
pub fn steps_for(t_end: f64, dt: f64) -> Result<usize, HarnessError> {
    if !(dt > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(HarnessError::Config(format!("need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(HarnessError::Config(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// `order_i = ln(e_i/e_{i+1}) / ln(dt_i/dt_{i+1})`.
pub fn observed_order(errors: &[f64], dts: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if errors.len() != dts.len() {
        return Err(HarnessError::Config(format!(
            "{} errors for {} time steps",
            errors.len(),
            dts.len()
        )));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0)) {
        return Err(HarnessError::Config(format!("errors must be positive, got {e}")));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) || dts.iter().any(|&d| !(d > 0.0)) {
        return Err(HarnessError::Config("time steps must be positive and strictly decreasing".into()));
    }
    Ok(errors
        .windows(2)
        .zip(dts.windows(2))
        .map(|(e, d)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect())
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub dt: f64,
    pub l2_error: f64,
    /// Observed order against the previous (larger) time step.
    pub order: Option<f64>,
}

/// Error at `t_end` of one forced run from the manufactured initial state.
pub fn manufactured_error(config: &SchemeConfig, grid: GridSpec, t_end: f64) -> Result<f64, HarnessError> {
    if config.forcing.is_none() {
        return Err(HarnessError::Config("accuracy runs need forcing enabled".into()));
    }
    let n = steps_for(t_end, config.dt)?;
    let stepper = Stepper::new(*config, grid)?;
    let mut state = stepper.init(&model::manufactured_state(0.0, grid))?;
    for _ in 0..n {
        state = advance(&stepper, &state)?.0;
    }
    let exact = model::manufactured_state(t_end, grid);
    let err = state.phi.zip_map(&exact, |a, b| a - b).expect("same grid");
    Ok(grid::l2_norm(&err))
}

/// One accuracy sweep over `dts` (largest first).
pub fn run_accuracy(
    config: &SchemeConfig,
    grid: GridSpec,
    dts: &[f64],
    t_end: f64,
    jobs: usize,
) -> Result<Vec<AccuracyRow>, HarnessError> {
    for &dt in dts {
        steps_for(t_end, dt)?;
    }
    let errors = parallel_map(dts, jobs, |&dt| {
        let mut c = *config;
        c.dt = dt;
        manufactured_error(&c, grid, t_end)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let orders = if errors.iter().all(|&e| e > 0.0) && dts.len() > 1 {
        observed_order(&errors, dts)?
    } else {
        Vec::new()
    };
    Ok(dts
        .iter()
        .zip(&errors)
        .enumerate()
        .map(|(i, (&dt, &l2_error))| AccuracyRow {
            dt,
            l2_error,
            order: if i == 0 { None } else { orders.get(i - 1).copied() },
        })
        .collect())
}

fn advance(stepper: &Stepper, state: &SchemeState) -> Result<(SchemeState, crate::schemes::StepReport), HarnessError> {
    stepper.step(state).map_err(|source| HarnessError::Step {
        step: state.step + 1,
        time: state.time + stepper.config().dt,
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub t_end: f64,
    /// Record every n-th step in the series (the first and last are always kept).
    pub record_every: usize,
    /// Snapshot interval in time units; snapshots go to `snapshot_dir`.
    pub snapshot_every: Option<f64>,
    pub snapshot_dir: Option<PathBuf>,
    pub run_id: String,
    /// Count `{φ > 0}` components every n steps.
    pub components_every: Option<usize>,
}

impl RunOptions {
    pub fn until(t_end: f64) -> Self {
        Self {
            t_end,
            record_every: 1,
            run_id: "run".into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub energy_modified: Vec<f64>,
    pub energy_original: Vec<f64>,
    /// Running `−∑(𝒢_h μᵏ, μᵏ)Δt`.
    pub dissipation_sum: Vec<f64>,
    pub mass: Vec<f64>,
    pub residuals: Vec<f64>,
    pub snapshots: Vec<PathBuf>,
    pub components: Vec<(f64, usize)>,
    /// Steps whose modified energy rose by more than [`ENERGY_SLACK`].
    pub energy_violations: Vec<usize>,
    /// Largest per-step `|∫φⁿ⁺¹ − ∫φⁿ|`.
    pub max_step_mass_change: f64,
    /// Range of `r` visited, for checking the assumed `L` after the fact.
    pub r_range: (f64, f64),
    pub final_state: SchemeState,
}

impl RunReport {
    pub fn energy_monotone(&self) -> bool {
        self.energy_violations.is_empty()
    }

    /// Partial sums nonnegative, nondecreasing and at most `E⁰ + 1e-8`.
    pub fn dissipation_bounded(&self) -> bool {
        let e0 = self.energy_modified[0];
        self.dissipation_sum.iter().all(|&d| d >= 0.0 && d <= e0 + DISSIPATION_SLACK)
            && self.dissipation_sum.windows(2).all(|w| w[1] >= w[0])
    }

    /// `max |mᵏ − m⁰| / |m⁰|` over the recorded series (absolute if `m⁰ = 0`).
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        let scale = if m0 == 0.0 { 1.0 } else { m0.abs() };
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / scale
    }

    /// First monitored time after which the component count stays at `target`.
    pub fn settled_at(&self, target: usize) -> Option<f64> {
        let last_other = self.components.iter().rposition(|&(_, c)| c != target);
        match last_other {
            Some(i) if i + 1 < self.components.len() => Some(self.components[i + 1].0),
            Some(_) => None,
            None => self.components.first().map(|&(t, _)| t),
        }
    }
}

fn r_bounds(state: &SchemeState) -> (f64, f64) {
    match &state.r {
        AuxState::Field(f) => (f.min(), f.max()),
        AuxState::Scalar(r) => (*r, *r),
    }
}

/// Time-steps `phi0` to `opts.t_end`, recording diagnostics.
pub fn run_simulation(config: &SchemeConfig, phi0: &Field, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    let grid = *phi0.grid();
    let n = steps_for(opts.t_end, config.dt)?;
    let snap_every = match opts.snapshot_every {
        Some(t) => Some(steps_for(t, config.dt)?.max(1)),
        None => None,
    };
    if snap_every.is_some() && opts.snapshot_dir.is_none() {
        return Err(HarnessError::Config("snapshots requested without an output directory".into()));
    }
    let stepper = Stepper::new(*config, grid)?;
    let mut state = stepper.init(phi0)?;
    let record_every = opts.record_every.max(1);

    let e0 = stepper.modified_energy(&state);
    let mut report = RunReport {
        steps: vec![0],
        times: vec![state.time],
        energy_modified: vec![e0],
        energy_original: vec![model::free_energy(&state.phi, &config.params)],
        dissipation_sum: vec![0.0],
        mass: vec![grid::integrate(&state.phi)],
        residuals: vec![0.0],
        snapshots: Vec::new(),
        components: Vec::new(),
        energy_violations: Vec::new(),
        max_step_mass_change: 0.0,
        r_range: r_bounds(&state),
        final_state: state.clone(),
    };
    if opts.components_every.is_some() {
        report.components.push((state.time, count_components(&state.phi, 0.0)));
    }

    let mut energy = e0;
    let mut dissipation = 0.0;
    let mut mass = report.mass[0];
    for s in 1..=n {
        let (next, rep) = advance(&stepper, &state)?;
        if rep.energy_modified > energy + ENERGY_SLACK {
            report.energy_violations.push(s);
        }
        energy = rep.energy_modified;
        dissipation += rep.dissipation;
        let m = grid::integrate(&next.phi);
        report.max_step_mass_change = report.max_step_mass_change.max((m - mass).abs());
        mass = m;
        let (lo, hi) = r_bounds(&next);
        report.r_range = (report.r_range.0.min(lo), report.r_range.1.max(hi));

        if s % record_every == 0 || s == n {
            report.steps.push(s);
            report.times.push(next.time);
            report.energy_modified.push(rep.energy_modified);
            report.energy_original.push(rep.energy_original);
            report.dissipation_sum.push(dissipation);
            report.mass.push(m);
            report.residuals.push(rep.residual);
        }
        if let Some(k) = opts.components_every {
            if s % k.max(1) == 0 || s == n {
                report.components.push((next.time, count_components(&next.phi, 0.0)));
            }
        }
        if let (Some(k), Some(dir)) = (snap_every, &opts.snapshot_dir) {
            if s % k == 0 {
                report.snapshots.push(write_snapshot_file(dir, &opts.run_id, &next.phi, next.time)?);
            }
        }
        state = next;
    }
    report.final_state = state;
    Ok(report)
}

fn write_snapshot_file(dir: &Path, run_id: &str, phi: &Field, t: f64) -> Result<PathBuf, HarnessError> {
    let path = dir.join(output::snapshot_name(run_id, t));
    let io = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    let file = File::create(&path).map_err(io)?;
    let mut w = BufWriter::new(file);
    grid::write_snapshot(&mut w, phi, t).map_err(io)?;
    std::io::Write::flush(&mut w).map_err(io)?;
    Ok(path)
}

/// Unforced run from `ic` recording the energy law diagnostics at every step.
pub fn run_energy_trace(
    config: &SchemeConfig,
    grid: GridSpec,
    ic: &InitialCondition,
    t_end: f64,
) -> Result<RunReport, HarnessError> {
    if config.forcing.is_some() {
        return Err(HarnessError::Config("energy traces must run without forcing".into()));
    }
    run_simulation(config, &ic.build(grid, &config.params), &RunOptions::until(t_end))
}

/// Two-circle or random-mixture Cahn–Hilliard run with snapshots.
pub fn run_coarsening(
    config: &SchemeConfig,
    grid: GridSpec,
    ic: &InitialCondition,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    if config.params.flow != Flow::CahnHilliard {
        return Err(HarnessError::Config("coarsening runs use the Cahn-Hilliard flow".into()));
    }
    if config.forcing.is_some() {
        return Err(HarnessError::Config("coarsening runs must run without forcing".into()));
    }
    run_simulation(config, &ic.build(grid, &config.params), opts)
}

/// `|∫c(r) − ∫(F(φ) + A₁)|`, or its IEF / C-SAV analogue.
pub fn energy_gap(state: &SchemeState, config: &SchemeConfig) -> f64 {
    let level = grid::integrate(&state.phi.map(model::potential));
    match (&config.kind, &state.r) {
        (SchemeKind::Iec(aux), AuxState::Field(r)) => {
            (grid::integrate(&r.map(|v| aux.c(v))) - level - config.params.a1 * area(&state.phi)).abs()
        }
        (SchemeKind::Ief(_), AuxState::Field(r)) => {
            let g = state.g.as_ref().expect("IEF state has g");
            (grid::inner(g, r).expect("same grid") - level - config.params.a1 * area(&state.phi)).abs()
        }
        (SchemeKind::Csav(aux), AuxState::Scalar(r)) => (aux.c(*r) - level - config.params.a2).abs(),
        _ => f64::NAN,
    }
}

fn area(f: &Field) -> f64 {
    f.grid().lx() * f.grid().ly()
}

fn ratios(values: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(values.windows(2).map(|w| Some(w[0] / w[1])))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub dt: f64,
    pub gap: f64,
    /// `gap(previous dt) / gap(dt)`.
    pub ratio: Option<f64>,
}

fn final_states(
    config: &SchemeConfig,
    grid: GridSpec,
    ic: &InitialCondition,
    dts: &[f64],
    t_end: f64,
    jobs: usize,
) -> Result<Vec<(SchemeConfig, SchemeState)>, HarnessError> {
    if config.forcing.is_some() {
        return Err(HarnessError::Config("gap and consistency runs must run without forcing".into()));
    }
    for &dt in dts {
        steps_for(t_end, dt)?;
    }
    let phi0 = ic.build(grid, &config.params);
    parallel_map(dts, jobs, |&dt| {
        let mut c = *config;
        c.dt = dt;
        let opts = RunOptions {
            record_every: usize::MAX,
            ..RunOptions::until(t_end)
        };
        run_simulation(&c, &phi0, &opts).map(|r| (c, r.final_state))
    })
    .into_iter()
    .collect()
}

/// Modified-vs-original energy gap at `t_end` for each time step.
pub fn run_energy_gap(
    config: &SchemeConfig,
    grid: GridSpec,
    ic: &InitialCondition,
    dts: &[f64],
    t_end: f64,
    jobs: usize,
) -> Result<Vec<GapRow>, HarnessError> {
    let gaps: Vec<f64> = final_states(config, grid, ic, dts, t_end, jobs)?
        .iter()
        .map(|(c, s)| energy_gap(s, c))
        .collect();
    Ok(dts
        .iter()
        .zip(&gaps)
        .zip(ratios(&gaps))
        .map(|((&dt, &gap), ratio)| GapRow { dt, gap, ratio })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub dt: f64,
    /// `‖r − r(φ)‖`.
    pub r_error: f64,
    /// `‖g − g(r(φ))‖`, IEF only.
    pub g_error: Option<f64>,
    pub r_ratio: Option<f64>,
    pub g_ratio: Option<f64>,
}

/// Drift of the evolved auxiliary variables from their definitions at `t_end`.
pub fn run_aux_consistency(
    config: &SchemeConfig,
    grid: GridSpec,
    ic: &InitialCondition,
    dts: &[f64],
    t_end: f64,
    jobs: usize,
) -> Result<Vec<ConsistencyRow>, HarnessError> {
    let a1 = config.params.a1;
    let mut r_err = Vec::new();
    let mut g_err = Vec::new();
    for (c, s) in final_states(config, grid, ic, dts, t_end, jobs)? {
        let r = s.r.as_field().ok_or_else(|| {
            HarnessError::Config("auxiliary consistency needs a pointwise auxiliary variable".into())
        })?;
        let diff = |a: &Field, b: &Field| grid::l2_norm(&a.zip_map(b, |x, y| x - y).expect("same grid"));
        match c.kind {
            SchemeKind::Iec(aux) => {
                r_err.push(diff(r, &auxfun::r_of_phi(&s.phi, &aux, a1).map_err(SchemeError::from)?));
            }
            SchemeKind::Ief(m) => {
                let exact_r = auxfun::r_of_phi_mono(&s.phi, &m, a1).map_err(SchemeError::from)?;
                r_err.push(diff(r, &exact_r));
                g_err.push(diff(s.g.as_ref().expect("IEF state has g"), &exact_r.map(|v| m.g(v))));
            }
            SchemeKind::Csav(_) => unreachable!("scalar r rejected above"),
        }
    }
    let r_ratio = ratios(&r_err);
    let g_ratio = ratios(&g_err);
    Ok(dts
        .iter()
        .enumerate()
        .map(|(i, &dt)| ConsistencyRow {
            dt,
            r_error: r_err[i],
            g_error: g_err.get(i).copied(),
            r_ratio: r_ratio[i],
            g_ratio: g_ratio.get(i).copied().flatten(),
        })
        .collect())
}
