use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gradflow::harness::{self, output, parallel_map, Check, RunOptions, RunReport};
use gradflow::schemes::{SchemeKind, Stepper};

use crate::config::RunConfig;
use crate::error::CliError;

/// Largest accepted relative mass drift in a Cahn–Hilliard run.
pub const MASS_DRIFT_LIMIT: f64 = 1e-8;

pub struct Context {
    pub out_root: PathBuf,
    pub jobs: usize,
    pub label: Option<String>,
}

fn aux_tag(kind: &SchemeKind) -> String {
    match kind {
        SchemeKind::Ief(m) => format!("k{}", m.k),
        _ => kind.aux_label(),
    }
}

/// `<out>/<subcommand>_<scheme>_<aux>_<label>`, created if missing.
pub fn run_dir(ctx: &Context, sub: &str, rc: &RunConfig) -> Result<(PathBuf, String), CliError> {
    let label = ctx.label.clone().or_else(|| rc.label.clone()).unwrap_or_else(|| {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        secs.to_string()
    });
    let id = format!(
        "{sub}_{}_{}_{label}",
        rc.scheme.kind.label().to_ascii_lowercase(),
        aux_tag(&rc.scheme.kind)
    );
    let dir = ctx.out_root.join(&id);
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    Ok((dir, id))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(CliError::io(path))
}

fn describe(rc: &RunConfig) -> String {
    format!(
        "{} {} {} alpha={} grid={}x{}",
        rc.scheme.kind.label(),
        rc.scheme.kind.aux_label(),
        rc.scheme.params.flow.short(),
        rc.scheme.alpha,
        rc.grid.nx(),
        rc.grid.ny()
    )
}

pub fn accuracy(ctx: &Context, rc: &RunConfig) -> Result<PathBuf, CliError> {
    if rc.scheme.forcing.is_none() {
        return Err(CliError::Config("accuracy runs need forcing = analytic or discrete".into()));
    }
    let (dir, _) = run_dir(ctx, "accuracy", rc)?;
    println!("accuracy: {} T={}", describe(rc), rc.t_end);
    let rows = harness::run_accuracy(&rc.scheme, rc.grid, &rc.dts, rc.t_end, ctx.jobs)?;
    write_file(&dir.join("accuracy.csv"), |w| output::write_accuracy_csv(w, &rc.scheme, &rows))?;
    for row in &rows {
        let order = row.order.map_or("-".to_string(), |o| format!("{o:.3}"));
        println!("dt={:<10} l2_error={:.6e} order={order}", row.dt, row.l2_error);
    }
    Ok(dir)
}

fn unforced(rc: &RunConfig, what: &str) -> Result<(), CliError> {
    match rc.scheme.forcing {
        Some(_) => Err(CliError::Config(format!("{what} runs must have forcing = none"))),
        None => Ok(()),
    }
}

pub fn energy(ctx: &Context, rc: &RunConfig) -> Result<PathBuf, CliError> {
    unforced(rc, "energy")?;
    let (dir, id) = run_dir(ctx, "energy", rc)?;
    println!("energy: {} ic={} T={}", describe(rc), rc.ic, rc.t_end);
    let phi0 = rc.ic.build(rc.grid, &rc.scheme.params);
    let reports: Vec<RunReport> = parallel_map(&rc.dts, ctx.jobs, |&dt| {
        let opts = RunOptions {
            record_every: rc.record_every,
            run_id: id.clone(),
            ..RunOptions::until(rc.t_end)
        };
        harness::run_simulation(&rc.with_dt(dt), &phi0, &opts)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut broken = Vec::new();
    for (&dt, rep) in rc.dts.iter().zip(&reports) {
        write_file(&dir.join(format!("energy_dt{dt}.csv")), |w| output::write_energy_csv(w, rep))?;
        let monotone = rep.energy_monotone();
        let bounded = rep.dissipation_bounded();
        println!(
            "dt={dt:<10} steps={} E0={:.6e} E_end={:.6e} monotone={} dissipation_bounded={}",
            rep.steps.last().unwrap_or(&0),
            rep.energy_modified[0],
            rep.energy_modified.last().unwrap_or(&f64::NAN),
            if monotone { "yes" } else { "no" },
            if bounded { "yes" } else { "no" },
        );
        if !monotone {
            broken.push(format!("dt={dt}: modified energy rose at steps {:?}", rep.energy_violations));
        }
        if !bounded {
            broken.push(format!("dt={dt}: dissipation sum exceeds the initial energy"));
        }
    }
    if broken.is_empty() {
        Ok(dir)
    } else {
        Err(CliError::Invariant(broken.join("; ")))
    }
}

pub fn energy_gap(ctx: &Context, rc: &RunConfig) -> Result<PathBuf, CliError> {
    unforced(rc, "energy-gap")?;
    let (dir, _) = run_dir(ctx, "energy-gap", rc)?;
    println!("energy-gap: {} ic={} T={}", describe(rc), rc.ic, rc.t_end);
    let rows = harness::run_energy_gap(&rc.scheme, rc.grid, &rc.ic, &rc.dts, rc.t_end, ctx.jobs)?;
    write_file(&dir.join("gap.csv"), |w| output::write_gap_csv(w, &rows))?;
    for row in &rows {
        let ratio = row.ratio.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!("dt={:<10} gap={:.6e} ratio={ratio}", row.dt, row.gap);
    }
    if !matches!(rc.scheme.kind, SchemeKind::Csav(_)) {
        let rows = harness::run_aux_consistency(&rc.scheme, rc.grid, &rc.ic, &rc.dts, rc.t_end, ctx.jobs)?;
        write_file(&dir.join("consistency.csv"), |w| output::write_consistency_csv(w, &rows))?;
        for row in &rows {
            let ratio = row.r_ratio.map_or("-".to_string(), |r| format!("{r:.3}"));
            let g = row.g_error.map_or(String::new(), |g| format!(" g_error={g:.6e}"));
            println!("dt={:<10} r_error={:.6e} r_ratio={ratio}{g}", row.dt, row.r_error);
        }
    }
    Ok(dir)
}

pub fn coarsen(ctx: &Context, rc: &RunConfig) -> Result<PathBuf, CliError> {
    if rc.dts.len() != 1 {
        return Err(CliError::Config(format!("coarsen takes one time step, got {}", rc.dts.len())));
    }
    let (dir, id) = run_dir(ctx, "coarsen", rc)?;
    println!("coarsen: {} ic={} dt={} T={}", describe(rc), rc.ic, rc.dts[0], rc.t_end);
    let opts = RunOptions {
        t_end: rc.t_end,
        record_every: rc.record_every,
        snapshot_every: rc.snapshot_every,
        snapshot_dir: Some(dir.clone()),
        run_id: id,
        components_every: rc.components_every,
    };
    let rep = harness::run_coarsening(&rc.scheme, rc.grid, &rc.ic, &opts)?;
    write_file(&dir.join("energy.csv"), |w| output::write_energy_csv(w, &rep))?;
    write_file(&dir.join("components.csv"), |w| {
        writeln!(w, "time,components")?;
        rep.components.iter().try_for_each(|(t, c)| writeln!(w, "{t:e},{c}"))
    })?;
    let drift = rep.mass_drift();
    let counts = match (rep.components.first(), rep.components.last()) {
        (Some(a), Some(b)) => format!(" components {} -> {}", a.1, b.1),
        _ => String::new(),
    };
    println!(
        "steps={} E0={:.6e} E_end={:.6e} mass_drift={drift:.1e} snapshots={}{counts}",
        rep.final_state.step,
        rep.energy_modified[0],
        rep.energy_modified.last().unwrap_or(&f64::NAN),
        rep.snapshots.len(),
    );
    if let Some(t) = rep.settled_at(1) {
        println!("single component from t={t:.3}");
    }
    let mut broken = Vec::new();
    if !rep.energy_monotone() {
        broken.push(format!("modified energy rose at steps {:?}", rep.energy_violations));
    }
    if drift > MASS_DRIFT_LIMIT {
        broken.push(format!("mass drift {drift:.2e} exceeds {MASS_DRIFT_LIMIT:e}"));
    }
    if broken.is_empty() {
        Ok(dir)
    } else {
        Err(CliError::Invariant(broken.join("; ")))
    }
}

/// One step on a small grid; dumps the block system and the solved unknowns.
pub fn step_debug(ctx: &Context, rc: &RunConfig) -> Result<PathBuf, CliError> {
    if matches!(rc.scheme.kind, SchemeKind::Csav(_)) {
        return Err(CliError::Config("step-debug needs a block-system scheme (iec, ieq or ief)".into()));
    }
    let (dir, _) = run_dir(ctx, "step-debug", rc)?;
    let stepper = Stepper::new(rc.scheme, rc.grid)?;
    let state = stepper.init(&rc.ic.build(rc.grid, &rc.scheme.params))?;
    let system = stepper.assemble(&state)?;
    let (next, report) = stepper.step(&state)?;

    let mut x = next.phi.values().to_vec();
    x.extend_from_slice(report.mu.values());
    x.extend_from_slice(next.r.as_field().expect("pointwise r").values());
    if let Some(g) = &next.g {
        x.extend_from_slice(g.values());
    }

    write_file(&dir.join("system.csv"), |w| {
        writeln!(w, "row,col,value")?;
        for i in 0..system.matrix.nrows() {
            for (j, v) in system.matrix.row(i) {
                writeln!(w, "{i},{j},{v:e}")?;
            }
        }
        Ok(())
    })?;
    write_file(&dir.join("rhs.csv"), |w| write_vector(w, &system.rhs))?;
    write_file(&dir.join("solution.csv"), |w| write_vector(w, &x))?;
    println!(
        "step-debug: {} dt={} unknowns={} nnz={} residual={:.3e} iterations={}",
        describe(rc),
        rc.scheme.dt,
        system.matrix.nrows(),
        system.matrix.nnz(),
        system.residual_norm(&x),
        report.iterations
    );
    Ok(dir)
}

fn write_vector(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,value")?;
    values.iter().enumerate().try_for_each(|(i, v)| writeln!(w, "{i},{v:e}"))
}

pub fn validate(checks: &[Check]) -> Result<(), CliError> {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}
