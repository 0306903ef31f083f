//! Run configuration: a TOML file with `[grid]`, `[model]`, `[scheme]` and
//! `[run]` sections, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use gradflow::auxfun::{AuxSpec, ConvexAux};
use gradflow::grid::GridSpec;
use gradflow::harness::{self, InitialCondition};
use gradflow::model::{Flow, ForcingMode, ModelParams};
use gradflow::schemes::{SchemeConfig, SchemeKind};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub flow: Option<String>,
    pub mobility: Option<f64>,
    pub epsilon: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    /// `analytic`, `discrete` or `none`.
    pub forcing: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub name: Option<String>,
    pub aux: Option<String>,
    pub alpha: Option<f64>,
    pub lipschitz: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub dt: Option<f64>,
    pub dts: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub ic: Option<String>,
    pub seed: Option<u64>,
    pub snapshot_every: Option<f64>,
    pub record_every: Option<usize>,
    pub components_every: Option<usize>,
    pub label: Option<String>,
}

/// Flags shared by the experiment subcommands; each wins over the file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Config file path, or the name of one under `configs/`.
    #[arg(long)]
    pub config: Option<String>,
    /// iec, ieq, ief, csav or sav.
    #[arg(long)]
    pub scheme: Option<String>,
    /// quadratic, softplus, logsquare, exponential or monomial:k=N.
    #[arg(long)]
    pub aux: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// allen-cahn (ac) or cahn-hilliard (ch).
    #[arg(long)]
    pub flow: Option<String>,
    /// Grid points per side, or NXxNY.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Comma-separated time steps.
    #[arg(long, value_delimiter = ',')]
    pub dts: Option<Vec<f64>>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// manufactured, trig, two-circles[:r1=x], random[:seed=n], constant:x.
    #[arg(long)]
    pub ic: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// analytic, discrete or none.
    #[arg(long)]
    pub forcing: Option<String>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub mobility: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub components_every: Option<usize>,
}

/// Per-subcommand fallbacks for anything neither the file nor a flag sets.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub flow: Flow,
    pub forcing: Option<ForcingMode>,
    pub ic: InitialCondition,
    pub dts: Vec<f64>,
    pub t_end: f64,
    pub grid: usize,
    pub snapshot_every: Option<f64>,
    pub components_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Scheme settings; `dt` holds the first entry of `dts`.
    pub scheme: SchemeConfig,
    pub grid: GridSpec,
    pub ic: InitialCondition,
    pub dts: Vec<f64>,
    pub t_end: f64,
    pub snapshot_every: Option<f64>,
    pub record_every: usize,
    pub components_every: Option<usize>,
    pub label: Option<String>,
}

impl RunConfig {
    pub fn with_dt(&self, dt: f64) -> SchemeConfig {
        let mut c = self.scheme;
        c.dt = dt;
        c
    }
}

/// `path` as given, then `configs/<name>[.cfg]` under the working directory,
/// then the repository's `configs/`.
pub fn locate(name: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let file = if name.ends_with(".cfg") { name.to_string() } else { format!("{name}.cfg") };
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    [PathBuf::from("configs"), repo]
        .into_iter()
        .map(|dir| dir.join(&file))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Config(format!("config {name:?} not found (tried the path and configs/{file})")))
}

pub fn load(name: &str) -> Result<FileConfig, CliError> {
    let path = locate(name)?;
    let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
    parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| e.message().to_string())
}

fn parse_grid(s: &str) -> Result<GridSpec, CliError> {
    let bad = || CliError::Config(format!("grid {s:?}: expected N or NXxNY"));
    let (nx, ny) = match s.split_once(['x', 'X']) {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    GridSpec::new(nx, ny).map_err(|e| CliError::Config(e.to_string()))
}

fn parse_forcing(s: &str) -> Result<Option<ForcingMode>, CliError> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse().map(Some).map_err(CliError::Config)
}

/// Merges file, flags and defaults, then checks everything a run needs.
pub fn resolve(file: &FileConfig, flags: &Overrides, defaults: &Defaults) -> Result<RunConfig, CliError> {
    let cfg = |msg: String| CliError::Config(msg);

    let grid = match &flags.grid {
        Some(s) => parse_grid(s)?,
        None => {
            let g = &file.grid;
            let n = g.n.unwrap_or(defaults.grid);
            GridSpec::new(g.nx.unwrap_or(n), g.ny.unwrap_or(n)).map_err(|e| cfg(e.to_string()))?
        }
    };

    let flow = match flags.flow.as_ref().or(file.model.flow.as_ref()) {
        Some(s) => s.parse().map_err(cfg)?,
        None => defaults.flow,
    };
    let mut params = ModelParams::standard(flow);
    params.mobility = flags.mobility.or(file.model.mobility).unwrap_or(params.mobility);
    params.epsilon = flags.epsilon.or(file.model.epsilon).unwrap_or(params.epsilon);
    params.a1 = flags.a1.or(file.model.a1).unwrap_or(params.a1);
    params.a2 = flags.a2.or(file.model.a2).unwrap_or(params.a2);
    let forcing = match flags.forcing.as_ref().or(file.model.forcing.as_ref()) {
        Some(s) => parse_forcing(s)?,
        None => defaults.forcing,
    };

    let name = flags.scheme.as_ref().or(file.scheme.name.as_ref()).map_or("iec", String::as_str);
    let aux_name = flags.aux.as_ref().or(file.scheme.aux.as_ref());
    let aux: AuxSpec = match aux_name {
        Some(s) => s.parse().map_err(|e: gradflow::auxfun::AuxError| cfg(e.to_string()))?,
        None if name.eq_ignore_ascii_case("ief") => "monomial:k=3".parse().expect("builtin"),
        None => "softplus".parse().expect("builtin"),
    };
    let lipschitz = flags
        .lipschitz
        .or(file.scheme.lipschitz)
        .unwrap_or(ConvexAux::new(gradflow::auxfun::ConvexFamily::Quadratic).lipschitz);
    let kind = SchemeKind::from_names(name, aux, lipschitz)?;

    let dts = match (flags.dts.clone(), flags.dt) {
        (Some(v), _) => v,
        (None, Some(dt)) => vec![dt],
        (None, None) => match (file.run.dts.clone(), file.run.dt) {
            (Some(v), _) => v,
            (None, Some(dt)) => vec![dt],
            (None, None) => defaults.dts.clone(),
        },
    };
    if dts.is_empty() {
        return Err(cfg("need at least one time step".into()));
    }
    let t_end = flags.t_end.or(file.run.t_end).unwrap_or(defaults.t_end);

    let mut scheme = SchemeConfig::new(kind, params, dts[0])
        .with_alpha(flags.alpha.or(file.scheme.alpha).unwrap_or(0.5))
        .with_forcing(forcing);
    if let Some(tol) = flags.tol.or(file.scheme.tol) {
        scheme.solver.tol = tol;
    }
    for &dt in &dts {
        let mut c = scheme;
        c.dt = dt;
        c.validate()?;
        harness::steps_for(t_end, dt)?;
    }

    let mut ic = match flags.ic.as_ref().or(file.run.ic.as_ref()) {
        Some(s) => s.parse().map_err(cfg)?,
        None => defaults.ic,
    };
    if let (InitialCondition::Random { seed }, Some(s)) = (&mut ic, flags.seed.or(file.run.seed)) {
        *seed = s;
    }

    let snapshot_every = flags.snapshot_every.or(file.run.snapshot_every).or(defaults.snapshot_every);
    if let Some(s) = snapshot_every {
        if !(s > 0.0 && s.is_finite()) {
            return Err(cfg(format!("snapshot_every must be positive, got {s}")));
        }
    }
    let record_every = flags.record_every.or(file.run.record_every).unwrap_or(1);
    let components_every = flags.components_every.or(file.run.components_every).or(defaults.components_every);
    if record_every == 0 || components_every == Some(0) {
        return Err(cfg("record_every and components_every must be at least 1".into()));
    }

    Ok(RunConfig {
        scheme,
        grid,
        ic,
        dts,
        t_end,
        snapshot_every,
        record_every,
        components_every,
        label: file.run.label.clone(),
    })
}
