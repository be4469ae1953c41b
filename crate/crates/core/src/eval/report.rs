use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DegradationTable, EvalResult};
use crate::envs::TaskKind;
use crate::error::{Error, Result};
use crate::report::{fmt6, write_lines};

pub const RESULTS_HEADER: &str = "method,task,p,success_rate,success_std,mean_return,return_std";
pub const DEGRADATION_HEADER: &str = "method,task,p,success_degradation_pct,return_degradation_pct";

fn pct(v: Option<f64>) -> String {
    match v {
        Some(d) => format!("{:.1}", 100.0 * d),
        None => "N/A".into(),
    }
}

/// One `results.csv` row.
pub fn result_line(r: &EvalResult) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.method,
        r.task,
        fmt6(r.p),
        fmt6(r.success_rate),
        fmt6(r.success_std),
        fmt6(r.mean_return),
        fmt6(r.return_std)
    )
}

/// A sweep cell that failed to evaluate; written as an N/A row.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedCell {
    pub method: String,
    pub task: TaskKind,
    pub p: f64,
}

/// Writes `results.csv`, `degradation.csv` and one `plotdata/<task>_<metric>.tsv`
/// per task and metric. Returns the paths written.
pub fn emit_report(
    results: &[EvalResult],
    table: &DegradationTable,
    failed: &[FailedCell],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if results.is_empty() && failed.is_empty() {
        return Err(Error::contract("nothing to report"));
    }
    fs::create_dir_all(out_dir.join("plotdata"))?;
    let mut written = Vec::new();

    let mut lines = vec![RESULTS_HEADER.to_string()];
    lines.extend(results.iter().map(result_line));
    for f in failed {
        lines.push(format!(
            "{},{},{},N/A,N/A,N/A,N/A",
            f.method,
            f.task,
            fmt6(f.p)
        ));
    }
    let path = out_dir.join("results.csv");
    write_lines(&path, &lines)?;
    written.push(path);

    let mut lines = vec![DEGRADATION_HEADER.to_string()];
    for e in &table.entries {
        lines.push(format!(
            "{},{},{},{},{}",
            e.method,
            e.task,
            fmt6(e.p),
            pct(e.success),
            pct(e.reward)
        ));
    }
    let path = out_dir.join("degradation.csv");
    write_lines(&path, &lines)?;
    written.push(path);

    let tasks: BTreeSet<TaskKind> = results.iter().map(|r| r.task).collect();
    for task in tasks {
        let rows: Vec<&EvalResult> = results.iter().filter(|r| r.task == task).collect();
        let mut methods: Vec<&str> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let mut grid: Vec<f64> = rows.iter().map(|r| r.p).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let series: [(&str, Box<dyn Fn(&str, f64) -> String>); 4] = [
            (
                "success_rate",
                Box::new(|m, p| cell(&rows, m, p, |r| fmt6(r.success_rate))),
            ),
            (
                "mean_return",
                Box::new(|m, p| cell(&rows, m, p, |r| fmt6(r.mean_return))),
            ),
            (
                "success_degradation",
                Box::new(|m, p| degradation_cell(table, task, m, p, |e| e.success)),
            ),
            (
                "return_degradation",
                Box::new(|m, p| degradation_cell(table, task, m, p, |e| e.reward)),
            ),
        ];
        for (metric, value) in series.iter() {
            let mut lines = vec![format!("p\t{}", methods.join("\t"))];
            for &p in &grid {
                let cols: Vec<String> = methods.iter().map(|m| value(m, p)).collect();
                lines.push(format!("{}\t{}", fmt6(p), cols.join("\t")));
            }
            let path = out_dir
                .join("plotdata")
                .join(format!("{task}_{metric}.tsv"));
            write_lines(&path, &lines)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn cell(rows: &[&EvalResult], method: &str, p: f64, f: impl Fn(&EvalResult) -> String) -> String {
    rows.iter()
        .find(|r| r.method == method && r.p == p)
        .map(|r| f(r))
        .unwrap_or_else(|| "N/A".into())
}

fn degradation_cell(
    table: &DegradationTable,
    task: TaskKind,
    method: &str,
    p: f64,
    f: impl Fn(&super::DegradationEntry) -> Option<f64>,
) -> String {
    table
        .entries
        .iter()
        .find(|e| e.task == task && e.method == method && e.p == p)
        .and_then(f)
        .map(|d| format!("{:.1}", 100.0 * d))
        .unwrap_or_else(|| "N/A".into())
}

/// One parsed `results.csv` row; N/A cells come back as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub task: TaskKind,
    pub p: f64,
    pub values: Option<[f64; 4]>,
}

pub fn parse_results_csv(text: &str, path: &Path) -> Result<Vec<ResultRow>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(err(1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(n, "expected 7 fields"));
        }
        let task: TaskKind = f[1].parse().map_err(|_| err(n, "unknown task"))?;
        let p: f64 = f[2].parse().map_err(|_| err(n, "bad probability"))?;
        let values = if f[3] == "N/A" {
            None
        } else {
            let mut v = [0.0; 4];
            for (k, s) in f[3..].iter().enumerate() {
                v[k] = s.parse().map_err(|_| err(n, "bad number"))?;
            }
            Some(v)
        };
        out.push(ResultRow {
            method: f[0].to_string(),
            task,
            p,
            values,
        });
    }
    Ok(out)
}
