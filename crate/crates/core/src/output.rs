//! CSV writers for experiment results. Floats use Rust's shortest
//! round-trip formatting, so identical results give identical bytes.

use std::io::Write;

use crate::error::Result;
use crate::fields::FieldModel;
use crate::harness::{grid_points, to_db, ComplexityRow, NmseCurve, SweepPoint, TrialOutput};

/// `iter,nmse_linear,nmse_db`
pub fn write_nmse_curve<W: Write>(mut out: W, curve: &NmseCurve) -> Result<()> {
    writeln!(out, "iter,nmse_linear,nmse_db")?;
    for (k, v) in curve.iters.iter().zip(&curve.nmse) {
        writeln!(out, "{k},{v},{}", to_db(*v))?;
    }
    Ok(())
}

/// `node,count`, the count averaged over trials.
pub fn write_updates<W: Write>(mut out: W, curve: &NmseCurve) -> Result<()> {
    writeln!(out, "node,count")?;
    for (j, c) in curve.updates.iter().enumerate() {
        writeln!(out, "{j},{c}")?;
    }
    Ok(())
}

/// `x1,x2,true,estimate` on a `resolution × resolution` lattice, using the
/// network-average estimate of one trial at time `k`.
pub fn write_field_grid<W: Write>(
    mut out: W,
    trial: &TrialOutput,
    field: &FieldModel,
    k: usize,
    resolution: usize,
) -> Result<()> {
    writeln!(out, "x1,x2,true,estimate")?;
    for p in grid_points(resolution) {
        writeln!(
            out,
            "{},{},{},{}",
            p[0],
            p[1],
            field.eval(&p, k),
            trial.estimate(&p)?
        )?;
    }
    Ok(())
}

/// `epsilon,mean_updates,steady_nmse_db`
pub fn write_sweep<W: Write>(mut out: W, points: &[SweepPoint]) -> Result<()> {
    writeln!(out, "epsilon,mean_updates,steady_nmse_db")?;
    for p in points {
        writeln!(out, "{},{},{}", p.epsilon, p.mean_updates, p.steady_nmse_db)?;
    }
    Ok(())
}

/// `algorithm,multiplications,overhead`
pub fn write_complexity<W: Write>(mut out: W, rows: &[ComplexityRow]) -> Result<()> {
    writeln!(out, "algorithm,multiplications,overhead")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.algorithm, r.multiplications, r.overhead)?;
    }
    Ok(())
}
