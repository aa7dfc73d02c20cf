use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{relax_method_name, Aggregate, ExperimentReport};
use crate::error::Result;
use crate::sdp::SolveStatus;

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Infeasible => "infeasible",
    }
}

/// Writes `report.csv`, `timings.csv`, `aggregate.json`, `roc.csv` and one
/// solver trace per realization and order under `trace/`.
///
/// Everything except `timings.csv` and the timing fields of `aggregate.json`
/// is a deterministic function of the configuration.
pub fn write_outputs(rep: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("trace"))?;

    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record(["realization", "method", "objective", "bound", "gap", "status", "trusted", "mse", "error"])?;
    let mut t = csv::Writer::from_path(dir.join("timings.csv"))?;
    t.write_record(["realization", "method", "assemble_secs", "solve_secs", "total_secs", "iterations"])?;
    for r in &rep.realizations {
        let idx = r.index.to_string();
        if let Some(e) = &r.error {
            w.write_record([idx.as_str(), "", "", "", "", "", "", "", e.as_str()])?;
        }
        for m in &r.methods {
            let relax = r.relax.iter().find(|x| relax_method_name(x.order) == m.method);
            let (bound, gap, status, trusted) = match relax {
                Some(x) => (
                    x.bound.to_string(),
                    x.gap.to_string(),
                    status_name(x.status).to_string(),
                    x.trusted().to_string(),
                ),
                None => Default::default(),
            };
            w.write_record([
                idx.clone(),
                m.method.clone(),
                m.objective.to_string(),
                bound,
                gap,
                status,
                trusted,
                m.mse.to_string(),
                String::new(),
            ])?;
            let (asm, solve, iters) = match relax {
                Some(x) => (x.assemble_secs.to_string(), x.solve_secs.to_string(), x.iterations.to_string()),
                None => Default::default(),
            };
            t.write_record([idx.clone(), m.method.clone(), asm, solve, m.secs.to_string(), iters])?;
        }
        for x in &r.relax {
            let f = File::create(dir.join("trace").join(format!("r{}_k{}.csv", r.index, x.order)))?;
            x.trace.write_csv(BufWriter::new(f))?;
        }
    }
    w.flush()?;
    t.flush()?;

    let mut w = csv::Writer::from_path(dir.join("roc.csv"))?;
    w.write_record(["method", "threshold", "false_alarm_rate", "detection_rate"])?;
    for c in &rep.roc {
        for (tau, (far, dr)) in c.thresholds.iter().zip(&c.points) {
            w.write_record([c.method.clone(), tau.to_string(), far.to_string(), dr.to_string()])?;
        }
    }
    w.flush()?;

    let f = BufWriter::new(File::create(dir.join("aggregate.json"))?);
    serde_json::to_writer_pretty(f, &rep.aggregate)?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<Aggregate> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}
