//! Invariant checks that need no reference data.

use crate::auxfun::{ConvexAux, ConvexFamily, MonoAux};
use crate::grid::{self, Field, GridSpec};
use crate::model::{Flow, ForcingMode, ModelParams};
use crate::schemes::{self, AuxState, SchemeConfig, SchemeKind, SolvePath};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn kinds() -> Vec<SchemeKind> {
    let mut v: Vec<SchemeKind> = ConvexFamily::ALL
        .iter()
        .map(|&f| SchemeKind::Iec(ConvexAux::new(f)))
        .collect();
    v.extend([0, 1, 3, 7].map(|k| SchemeKind::Ief(MonoAux::new(k))));
    v.push(SchemeKind::Csav(ConvexAux::new(ConvexFamily::Quadratic)));
    v.push(SchemeKind::Csav(ConvexAux::new(ConvexFamily::Softplus)));
    v
}

fn describe(kind: &SchemeKind, flow: Flow) -> String {
    format!("{}/{}/{}", kind.label(), kind.aux_label(), flow.short())
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    a.zip_map(b, |x, y| x - y).expect("same grid").max_abs()
}

fn trig(grid: GridSpec) -> Field {
    Field::from_fn(grid, |x, y| x.sin() * y.cos() + 0.3 * (2.0 * x).cos())
}

/// Runs every check and returns one entry per check; errors count as failures.
pub fn run_validation() -> Vec<Check> {
    let grid = GridSpec::square(8).expect("valid grid");
    let mut out = Vec::new();
    for flow in [Flow::AllenCahn, Flow::CahnHilliard] {
        let params = ModelParams::standard(flow);
        for kind in kinds() {
            let config = SchemeConfig::new(kind, params, 0.05);
            let name = describe(&kind, flow);
            out.push(fixed_points(&config, grid, &name));
            out.push(energy_decay(&config, grid, &name));
            if flow == Flow::CahnHilliard {
                out.push(mass_conservation(&config, grid, &name));
            }
        }
        out.push(ieq_equivalence(params, grid));
        out.push(path_equivalence(params, grid));
    }
    out
}

fn fixed_points(config: &SchemeConfig, grid: GridSpec, name: &str) -> Check {
    let mut worst: f64 = 0.0;
    for v in [0.0, 1.0, -1.0] {
        let res = schemes::init_state(&Field::constant(grid, v), config)
            .and_then(|s0| schemes::step(&s0, config).map(|(s1, _)| max_diff(&s1.phi, &s0.phi)));
        match res {
            Ok(d) => worst = worst.max(d),
            Err(e) => return Check::new(format!("fixed points {name}"), false, e.to_string()),
        }
    }
    Check::new(
        format!("fixed points {name}"),
        worst <= 1e-10,
        format!("max |phi1 - phi0| = {worst:.3e}"),
    )
}

fn energy_decay(config: &SchemeConfig, grid: GridSpec, name: &str) -> Check {
    let label = format!("energy decay {name}");
    let run = || -> Result<(f64, f64), schemes::SchemeError> {
        let mut s = schemes::init_state(&trig(grid), config)?;
        let mut e = schemes::modified_energy(&s, config);
        let mut worst_rise = f64::NEG_INFINITY;
        let mut worst_law = f64::NEG_INFINITY;
        for _ in 0..20 {
            let (next, rep) = schemes::step(&s, config)?;
            worst_rise = worst_rise.max(rep.energy_modified - e);
            worst_law = worst_law.max(rep.energy_modified - e + rep.dissipation);
            e = rep.energy_modified;
            s = next;
        }
        Ok((worst_rise, worst_law))
    };
    match run() {
        Ok((rise, law)) => Check::new(
            label,
            rise <= 1e-9 && law <= 1e-9,
            format!("max step change {rise:.3e}, max law defect {law:.3e}"),
        ),
        Err(e) => Check::new(label, false, e.to_string()),
    }
}

fn mass_conservation(config: &SchemeConfig, grid: GridSpec, name: &str) -> Check {
    let label = format!("mass conservation {name}");
    let run = || -> Result<f64, schemes::SchemeError> {
        let mut s = schemes::init_state(&trig(grid).map(|v| 0.5 * v + 0.2), config)?;
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let (next, _) = schemes::step(&s, config)?;
            let d = (grid::integrate(&next.phi) - grid::integrate(&s.phi)).abs() / grid::l2_norm(&s.phi);
            worst = worst.max(d);
            s = next;
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::new(label, w <= 1e-9, format!("max relative step drift {w:.3e}")),
        Err(e) => Check::new(label, false, e.to_string()),
    }
}

/// IEC with `c = r², αL = 2` and IEF with `k = 0` are the same IEQ scheme.
fn ieq_equivalence(params: ModelParams, grid: GridSpec) -> Check {
    let label = format!("IEQ equivalence {}", params.flow.short());
    let iec = SchemeConfig::new(SchemeKind::Iec(ConvexAux::new(ConvexFamily::Quadratic)), params, 0.05).with_alpha(1.0);
    let ief = SchemeConfig::new(SchemeKind::Ief(MonoAux::new(0)), params, 0.05);
    let run = || -> Result<f64, schemes::SchemeError> {
        let mut a = schemes::init_state(&trig(grid), &iec)?;
        let mut b = schemes::init_state(&trig(grid), &ief)?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            a = schemes::step(&a, &iec)?.0;
            b = schemes::step(&b, &ief)?.0;
            worst = worst.max(max_diff(&a.phi, &b.phi));
            if let (AuxState::Field(ra), AuxState::Field(rb)) = (&a.r, &b.r) {
                worst = worst.max(max_diff(ra, rb));
                worst = worst.max(max_diff(rb, b.g.as_ref().expect("IEF has g")));
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::new(label, w <= 1e-10, format!("max difference {w:.3e}")),
        Err(e) => Check::new(label, false, e.to_string()),
    }
}

fn path_equivalence(params: ModelParams, grid: GridSpec) -> Check {
    let label = format!("block vs reduced solve {}", params.flow.short());
    let run = || -> Result<f64, schemes::SchemeError> {
        let mut worst: f64 = 0.0;
        for kind in [
            SchemeKind::Iec(ConvexAux::new(ConvexFamily::Softplus)),
            SchemeKind::Ief(MonoAux::new(3)),
        ] {
            let mut c = SchemeConfig::new(kind, params, 0.05).with_forcing(Some(ForcingMode::Analytic));
            c.solver.tol = 1e-13;
            let s0 = schemes::init_state(&trig(grid), &c)?;
            let a = schemes::step(&s0, &c)?.0;
            c.path = SolvePath::Reduced;
            let b = schemes::step(&s0, &c)?.0;
            worst = worst.max(max_diff(&a.phi, &b.phi));
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::new(label, w <= 1e-10, format!("max difference {w:.3e}")),
        Err(e) => Check::new(label, false, e.to_string()),
    }
}
