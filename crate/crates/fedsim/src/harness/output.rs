//! Plot-ready CSV emission and the JSON run summary.
//!
//! Per-seed CSV schema: `round,gamma,loss_gap,grad_norm_sq,err_norm_sq,test_acc`
//! with one row per recorded state (gamma and test_acc empty when not
//! applicable). Aggregate CSV carries mean and sample standard deviation per
//! metric. Floats use the shortest round-trip rendering, so identical runs
//! produce identical bytes.

use crate::error::{Error, Result};
use crate::federated::RunRecord;

pub const RUN_HEADER: &str = "round,gamma,loss_gap,grad_norm_sq,err_norm_sq,test_acc";
pub const AGG_HEADER: &str = "round,gamma,loss_gap_mean,loss_gap_std,grad_norm_sq_mean,grad_norm_sq_std,err_norm_sq_mean,err_norm_sq_std,test_acc_mean,test_acc_std";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_run_csv(r: &RunRecord) -> String {
    let mut out = String::from(RUN_HEADER);
    out.push('\n');
    for k in 0..r.loss_gap.len() {
        let gamma = r.gammas.get(k).map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{k},{gamma},{},{},{},{}\n",
            r.loss_gap[k],
            r.grad_norm_sq[k],
            r.err_norm_sq[k],
            opt(r.test_acc[k]),
        ));
    }
    out
}

/// Per-round sample means and standard deviations across seeds.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub rows: usize,
    pub seeds: usize,
    pub gamma: Vec<f64>,
    pub loss_gap_mean: Vec<f64>,
    pub loss_gap_std: Vec<f64>,
    pub grad_norm_sq_mean: Vec<f64>,
    pub grad_norm_sq_std: Vec<f64>,
    pub err_norm_sq_mean: Vec<f64>,
    pub err_norm_sq_std: Vec<f64>,
    pub test_acc_mean: Vec<Option<f64>>,
    pub test_acc_std: Vec<Option<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates per-seed records over the rounds every seed completed.
pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    if records.is_empty() {
        return Err(Error::config("aggregate: no run records"));
    }
    let rows = records
        .iter()
        .map(|r| r.loss_gap.len())
        .min()
        .expect("non-empty");
    let steps = rows.saturating_sub(1);
    for r in records {
        for k in 0..steps {
            if r.gammas[k] != records[0].gammas[k] {
                return Err(Error::config(
                    "aggregate: seeds disagree on the step sequence",
                ));
            }
        }
    }
    let mut agg = Aggregate {
        rows,
        seeds: records.len(),
        gamma: records[0].gammas[..steps].to_vec(),
        loss_gap_mean: Vec::with_capacity(rows),
        loss_gap_std: Vec::with_capacity(rows),
        grad_norm_sq_mean: Vec::with_capacity(rows),
        grad_norm_sq_std: Vec::with_capacity(rows),
        err_norm_sq_mean: Vec::with_capacity(rows),
        err_norm_sq_std: Vec::with_capacity(rows),
        test_acc_mean: Vec::with_capacity(rows),
        test_acc_std: Vec::with_capacity(rows),
    };
    for k in 0..rows {
        let col: Vec<f64> = records.iter().map(|r| r.loss_gap[k]).collect();
        let (m, s) = mean_std(&col);
        agg.loss_gap_mean.push(m);
        agg.loss_gap_std.push(s);
        let col: Vec<f64> = records.iter().map(|r| r.grad_norm_sq[k]).collect();
        let (m, s) = mean_std(&col);
        agg.grad_norm_sq_mean.push(m);
        agg.grad_norm_sq_std.push(s);
        let col: Vec<f64> = records.iter().map(|r| r.err_norm_sq[k]).collect();
        let (m, s) = mean_std(&col);
        agg.err_norm_sq_mean.push(m);
        agg.err_norm_sq_std.push(s);
        let accs: Option<Vec<f64>> = records.iter().map(|r| r.test_acc[k]).collect();
        match accs {
            Some(col) => {
                let (m, s) = mean_std(&col);
                agg.test_acc_mean.push(Some(m));
                agg.test_acc_std.push(Some(s));
            }
            None => {
                agg.test_acc_mean.push(None);
                agg.test_acc_std.push(None);
            }
        }
    }
    Ok(agg)
}

pub fn render_aggregate_csv(a: &Aggregate) -> String {
    let mut out = String::from(AGG_HEADER);
    out.push('\n');
    for k in 0..a.rows {
        let gamma = a.gamma.get(k).map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{k},{gamma},{},{},{},{},{},{},{},{}\n",
            a.loss_gap_mean[k],
            a.loss_gap_std[k],
            a.grad_norm_sq_mean[k],
            a.grad_norm_sq_std[k],
            a.err_norm_sq_mean[k],
            a.err_norm_sq_std[k],
            opt(a.test_acc_mean[k]),
            opt(a.test_acc_std[k]),
        ));
    }
    out
}

/// One parsed per-seed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub round: usize,
    pub gamma: Option<f64>,
    pub loss_gap: f64,
    pub grad_norm_sq: f64,
    pub err_norm_sq: f64,
    pub test_acc: Option<f64>,
}

/// Parses text produced by [`render_run_csv`]; float round-trips are exact.
pub fn parse_run_csv(text: &str) -> Result<Vec<RunRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RUN_HEADER => {}
        other => {
            return Err(Error::config(format!(
                "run csv: unexpected header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::config(format!(
                "run csv row {}: expected 6 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::config(format!("run csv row {}: bad {what} '{s}'", i + 1)))
        };
        rows.push(RunRow {
            round: fields[0]
                .parse()
                .map_err(|_| Error::config(format!("run csv row {}: bad round", i + 1)))?,
            gamma: if fields[1].is_empty() {
                None
            } else {
                Some(parse_f(fields[1], "gamma")?)
            },
            loss_gap: parse_f(fields[2], "loss_gap")?,
            grad_norm_sq: parse_f(fields[3], "grad_norm_sq")?,
            err_norm_sq: parse_f(fields[4], "err_norm_sq")?,
            test_acc: if fields[5].is_empty() {
                None
            } else {
                Some(parse_f(fields[5], "test_acc")?)
            },
        });
    }
    Ok(rows)
}
