//! Flat text outputs of an experiment. Numbers use Rust's shortest
//! round-trip formatting; failed cells are written as `NA`.

use std::io::{self, Write};

use crate::adjust::Strategy;
use crate::harness::{ResultRow, Summary};

fn num(v: f64) -> String {
    if v.is_finite() { format!("{v}") } else { "NA".into() }
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], mut w: W) -> io::Result<()> {
    writeln!(w, "replication,strategy,env,metric,value")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.replication,
            r.strategy,
            r.env,
            r.metric.name(),
            r.value.map_or_else(|| "NA".into(), num)
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &Summary, mut w: W) -> io::Result<()> {
    writeln!(w, "strategy,env,mean,sd,n_ok,n_failed")?;
    for c in &summary.cells {
        writeln!(w, "{},{},{},{},{},{}", c.strategy, c.env, num(c.mean), num(c.sd), c.n_ok, c.n_failed)?;
    }
    Ok(())
}

/// Per-strategy stability error (mean and sd of the per-replication sd).
pub fn write_stability_csv<W: Write>(summary: &Summary, mut w: W) -> io::Result<()> {
    writeln!(w, "strategy,stability_error,stability_sd,complete_replications")?;
    for s in &summary.stability {
        let (mean, sd) = s.report.as_ref().map_or((f64::NAN, f64::NAN), |r| {
            (r.stability_error, crate::metrics::sample_sd(&r.per_rep_sd.to_vec()))
        });
        writeln!(w, "{},{},{},{}", s.strategy, num(mean), num(sd), s.complete_replications)?;
    }
    Ok(())
}

/// Tab-separated `env mean sd` for one strategy.
pub fn write_plotdata<W: Write>(summary: &Summary, strategy: Strategy, mut w: W) -> io::Result<()> {
    writeln!(w, "env\tmean\tsd")?;
    for c in summary.cells_of(strategy) {
        writeln!(w, "{}\t{}\t{}", c.env, num(c.mean), num(c.sd))?;
    }
    Ok(())
}
