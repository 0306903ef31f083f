//! CSV and snapshot file conventions shared with downstream plotting.
//!
//! Floats are written in Rust's shortest round-trip scientific form, so the
//! files are byte-identical across runs and parse back to the exact values.

use std::io::{self, Write};

use super::{AccuracyRow, ConsistencyRow, GapRow, RunReport};
use crate::schemes::SchemeConfig;

pub const ACCURACY_HEADER: &str = "scheme,aux,alpha,L,flow,dt,l2_error,order";
pub const ENERGY_HEADER: &str = "step,time,energy_modified,energy_original,dissipation_sum,mass,residual";
pub const GAP_HEADER: &str = "dt,gap,ratio";
pub const CONSISTENCY_HEADER: &str = "dt,r_error,g_error,r_ratio,g_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_accuracy_csv<W: Write>(mut w: W, config: &SchemeConfig, rows: &[AccuracyRow]) -> io::Result<()> {
    writeln!(w, "{ACCURACY_HEADER}")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{:e},{},{},{:e},{:e},{}",
            config.kind.label(),
            config.kind.aux_label(),
            config.alpha,
            opt(config.kind.lipschitz()),
            config.params.flow.short(),
            row.dt,
            row.l2_error,
            opt(row.order),
        )?;
    }
    Ok(())
}

pub fn write_energy_csv<W: Write>(mut w: W, report: &RunReport) -> io::Result<()> {
    writeln!(w, "{ENERGY_HEADER}")?;
    for i in 0..report.times.len() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            report.steps[i],
            report.times[i],
            report.energy_modified[i],
            report.energy_original[i],
            report.dissipation_sum[i],
            report.mass[i],
            report.residuals[i],
        )?;
    }
    Ok(())
}

pub fn write_gap_csv<W: Write>(mut w: W, rows: &[GapRow]) -> io::Result<()> {
    writeln!(w, "{GAP_HEADER}")?;
    for row in rows {
        writeln!(w, "{:e},{:e},{}", row.dt, row.gap, opt(row.ratio))?;
    }
    Ok(())
}

pub fn write_consistency_csv<W: Write>(mut w: W, rows: &[ConsistencyRow]) -> io::Result<()> {
    writeln!(w, "{CONSISTENCY_HEADER}")?;
    for row in rows {
        writeln!(
            w,
            "{:e},{:e},{},{},{}",
            row.dt,
            row.r_error,
            opt(row.g_error),
            opt(row.r_ratio),
            opt(row.g_ratio)
        )?;
    }
    Ok(())
}

/// `<run-id>_t<time>.snap`, time with four decimals.
pub fn snapshot_name(run_id: &str, t: f64) -> String {
    format!("{run_id}_t{t:.4}.snap")
}
