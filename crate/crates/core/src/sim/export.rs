use std::fs;
use std::path::Path;

use serde::Serialize;

use super::run::{Comparison, PerformanceReport, RunOutcome, SetSnapshot, TraceRow};
use crate::error::SimError;
use crate::linalg::mat_to_rows;

/// Snapshot indices exported by default.
pub const DEFAULT_SNAPSHOTS: [usize; 4] = [0, 3, 7, 20];

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> SimError {
    let context = context.into();
    move |source| SimError::Io { context, source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SimError + '_ {
    move |e| SimError::Io {
        context: format!("writing {}", path.display()),
        source: e.into(),
    }
}

/// CSV header for the given dimensions.
pub fn trace_header(n_x: usize, n_u: usize, n_theta: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((1..=n_x).map(|i| format!("x{i}")));
    h.extend((1..=n_u).map(|i| format!("u{i}")));
    for name in [
        "stage",
        "cost",
        "horizon_ext",
        "gamma",
        "n_c",
        "qp_iterations",
        "updated",
        "lyapunov_residual",
    ] {
        h.push(name.to_string());
    }
    h.extend((1..=n_theta).map(|i| format!("theta_hat{i}")));
    h.push("bound".to_string());
    h
}

fn trace_record(row: &TraceRow) -> Vec<String> {
    let mut r = vec![row.k.to_string()];
    r.extend(row.x.iter().map(|v| v.to_string()));
    r.extend(row.u.iter().map(|v| v.to_string()));
    r.push(row.stage.to_string());
    r.push(row.cost.to_string());
    r.push(row.horizon_ext.to_string());
    r.push(row.gamma.to_string());
    r.push(row.n_c.to_string());
    r.push(row.qp_iterations.to_string());
    r.push(row.updated.to_string());
    r.push(
        row.lyapunov_residual
            .map(|v| v.to_string())
            .unwrap_or_default(),
    );
    r.extend(row.theta_hat.iter().map(|v| v.to_string()));
    r.push(row.bound.to_string());
    r
}

/// Write the per-step trace; an empty trace gives a header-only file.
pub fn write_trace_csv(
    path: &Path,
    trace: &[TraceRow],
    n_x: usize,
    n_u: usize,
    n_theta: usize,
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(trace_header(n_x, n_u, n_theta))
        .map_err(csv_err(path))?;
    for row in trace {
        w.write_record(trace_record(row)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(format!("writing {}", path.display())))
}

#[derive(Serialize)]
struct SetFile<'a> {
    k: usize,
    vertices: Vec<&'a [f64]>,
    normals: Vec<Vec<f64>>,
    offsets: &'a [f64],
}

/// JSON text of a parameter-set snapshot.
pub fn snapshot_json(s: &SetSnapshot) -> String {
    let file = SetFile {
        k: s.k,
        vertices: s.vertices.iter().map(|v| v.as_slice()).collect(),
        normals: mat_to_rows(s.set.normals()),
        offsets: s.set.offsets().as_slice(),
    };
    serde_json::to_string_pretty(&file).expect("snapshot serializes") + "\n"
}

fn write_text(path: &Path, text: &str) -> Result<(), SimError> {
    fs::write(path, text).map_err(io(format!("writing {}", path.display())))
}

/// JSON text of a report.
pub fn report_json(report: &PerformanceReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// Write `trace.csv`, `report.json` and `sets_k{k}.json` for the requested steps.
pub fn export_run(
    out_dir: &Path,
    run: &RunOutcome,
    n_theta: usize,
    at: &[usize],
) -> Result<(), SimError> {
    fs::create_dir_all(out_dir).map_err(io(format!("creating {}", out_dir.display())))?;
    let (n_x, n_u) = run
        .trace
        .first()
        .map(|r| (r.x.len(), r.u.len()))
        .unwrap_or((0, 0));
    write_trace_csv(&out_dir.join("trace.csv"), &run.trace, n_x, n_u, n_theta)?;
    for &k in at {
        if let Some(s) = run.snapshots.iter().find(|s| s.k == k) {
            write_text(&out_dir.join(format!("sets_k{k}.json")), &snapshot_json(s))?;
        } else {
            log::warn!("no parameter-set snapshot at k = {k}");
        }
    }
    write_text(&out_dir.join("report.json"), &report_json(&run.report))
}

#[derive(Serialize)]
struct ComparisonFile<'a> {
    reports: Vec<&'a PerformanceReport>,
    ordering_holds: bool,
}

/// One sub-directory per mode plus `comparison.json` and `summary.txt`.
pub fn export_comparison(
    out_dir: &Path,
    cmp: &Comparison,
    n_theta: usize,
    at: &[usize],
) -> Result<(), SimError> {
    fs::create_dir_all(out_dir).map_err(io(format!("creating {}", out_dir.display())))?;
    for run in &cmp.runs {
        export_run(&out_dir.join(run.report.mode.name()), run, n_theta, at)?;
    }
    let file = ComparisonFile {
        reports: cmp.runs.iter().map(|r| &r.report).collect(),
        ordering_holds: cmp.check_ordering().is_ok(),
    };
    write_text(
        &out_dir.join("comparison.json"),
        &(serde_json::to_string_pretty(&file).expect("comparison serializes") + "\n"),
    )?;
    write_text(&out_dir.join("summary.txt"), &cmp.summary())
}

/// Recompute `J̄ₚ` from an exported trace.
pub fn performance_from_csv(
    path: &Path,
    q: &nalgebra::DMatrix<f64>,
    r: &nalgebra::DMatrix<f64>,
    steps: usize,
) -> Result<f64, SimError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| SimError::Io {
        context: format!("reading {}", path.display()),
        source: e.into(),
    })?;
    let n_x = q.nrows();
    let n_u = r.nrows();
    let mut stages = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| SimError::Io {
            context: format!("reading {}", path.display()),
            source: e.into(),
        })?;
        let parse = |i: usize| -> Result<f64, SimError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SimError::Schema {
                    path: format!("{}:{}", path.display(), i),
                    message: "expected a number".into(),
                })
        };
        let mut x = nalgebra::DVector::zeros(n_x);
        let mut u = nalgebra::DVector::zeros(n_u);
        for i in 0..n_x {
            x[i] = parse(1 + i)?;
        }
        for i in 0..n_u {
            u[i] = parse(1 + n_x + i)?;
        }
        stages.push(x.dot(&(q * &x)) + u.dot(&(r * &u)));
    }
    Ok(super::run::performance_index(stages, steps))
}
