//! Metrics rows, CSV emission, and seed-sweep summaries.
//!
//! One row per `(run, phase, epoch)`. The column set is fixed for a given
//! probe configuration, so every pipeline in an experiment shares one
//! schema and identical configs reproduce identical bytes. Files are
//! UTF-8 with LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use prunelab_core::dataset::{DatasetHandle, Targets};

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Teacher,
    Student,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Teacher => "teacher",
            Self::Student => "student",
        }
    }
}

/// One epoch's measurements for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub pipeline: String,
    pub seed: u64,
    pub phase: Phase,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub val_loss: f64,
    pub val_acc: Option<f64>,
    pub test_loss: f64,
    pub test_acc: Option<f64>,
    /// Removed-weight fraction of the live mask (0 when unmasked).
    pub removed_fraction: f64,
    /// Spectral norm of the ordered weight product.
    pub flow_norm: f64,
    /// Product of per-layer spectral norms.
    pub norm_product: f64,
    /// Max-norm chain bound.
    pub max_norm_bound: f64,
    /// Flow drift against the reference network, when one applies.
    pub flow_drift: Option<f64>,
    /// Per-band relative spectral errors, aligned with the probe bands.
    pub band_errors: Vec<f64>,
}

fn push_opt(line: &mut String, v: Option<f64>) {
    match v {
        Some(x) => {
            let _ = write!(line, ",{x}");
        }
        None => line.push(','),
    }
}

/// Header for the fixed schema plus one `band_err_k{K}` column per probe
/// band.
pub fn csv_header(bands: &[usize]) -> String {
    let mut h = String::from(
        "run_id,pipeline,seed,phase,epoch,train_loss,train_acc,val_loss,val_acc,\
         test_loss,test_acc,removed_fraction,flow_norm,norm_product,max_norm_bound,flow_drift",
    );
    for k in bands {
        let _ = write!(h, ",band_err_k{k}");
    }
    h
}

pub fn to_csv_line(row: &MetricsRow) -> String {
    let mut line = String::new();
    let _ = write!(
        line,
        "{},{},{},{},{}",
        row.run_id,
        row.pipeline,
        row.seed,
        row.phase.as_str(),
        row.epoch
    );
    let _ = write!(line, ",{}", row.train_loss);
    push_opt(&mut line, row.train_acc);
    let _ = write!(line, ",{}", row.val_loss);
    push_opt(&mut line, row.val_acc);
    let _ = write!(line, ",{}", row.test_loss);
    push_opt(&mut line, row.test_acc);
    let _ = write!(
        line,
        ",{},{},{},{}",
        row.removed_fraction, row.flow_norm, row.norm_product, row.max_norm_bound
    );
    push_opt(&mut line, row.flow_drift);
    for b in &row.band_errors {
        let _ = write!(line, ",{b}");
    }
    line
}

pub fn write_metrics_csv(
    path: &Path,
    bands: &[usize],
    rows: &[MetricsRow],
) -> Result<(), HarnessError> {
    let mut out = csv_header(bands);
    out.push('\n');
    for row in rows {
        out.push_str(&to_csv_line(row));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Aggregate over seeds of each pipeline's terminal accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub pipeline: String,
    pub n_seeds: usize,
    pub mean_test_acc: f64,
    pub sd_test_acc: f64,
    /// Runs whose accuracy is statistically indistinguishable from random
    /// guessing at `1/classes`.
    pub collapsed_runs: usize,
}

/// Final-epoch test accuracy per `(pipeline, seed)`: the last student row
/// when a run has a student phase, otherwise the last teacher row.
pub fn final_accuracies(rows: &[MetricsRow]) -> Vec<(String, u64, f64)> {
    let mut out: Vec<(String, u64, f64)> = Vec::new();
    let mut runs: Vec<(String, u64)> = rows
        .iter()
        .map(|r| (r.pipeline.clone(), r.seed))
        .collect();
    runs.sort();
    runs.dedup();
    for (pipeline, seed) in runs {
        let terminal = rows
            .iter()
            .filter(|r| r.pipeline == pipeline && r.seed == seed)
            .max_by_key(|r| (matches!(r.phase, Phase::Student), r.epoch));
        if let Some(row) = terminal {
            if let Some(acc) = row.test_acc {
                out.push((pipeline.clone(), seed, acc));
            }
        }
    }
    out
}

/// A run counts as collapsed when its accuracy is within two binomial
/// standard deviations of the `1/classes` guessing floor.
pub fn is_collapsed(acc: f64, classes: usize, test_n: usize) -> bool {
    let floor = 1.0 / classes as f64;
    let sd = (floor * (1.0 - floor) / test_n as f64).sqrt();
    acc <= floor + 2.0 * sd
}

pub fn summarize(rows: &[MetricsRow], classes: Option<usize>, test_n: usize) -> Vec<SummaryRow> {
    let finals = final_accuracies(rows);
    let mut pipelines: Vec<String> = finals.iter().map(|(p, _, _)| p.clone()).collect();
    pipelines.sort();
    pipelines.dedup();
    pipelines
        .into_iter()
        .map(|pipeline| {
            let accs: Vec<f64> = finals
                .iter()
                .filter(|(p, _, _)| *p == pipeline)
                .map(|(_, _, a)| *a)
                .collect();
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let collapsed_runs = match classes {
                Some(c) => accs.iter().filter(|&&a| is_collapsed(a, c, test_n)).count(),
                None => 0,
            };
            SummaryRow {
                pipeline,
                n_seeds: n,
                mean_test_acc: mean,
                sd_test_acc: var.sqrt(),
                collapsed_runs,
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut out = String::from("pipeline,n_seeds,mean_test_acc,sd_test_acc,collapsed_runs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.pipeline, r.n_seeds, r.mean_test_acc, r.sd_test_acc, r.collapsed_runs
        );
    }
    fs::write(path, out).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Generated-dataset CSV: `x,y` for 1-D regression, `p0..pN,label` for
/// images.
#[allow(clippy::needless_range_loop)]
pub fn dataset_to_csv(data: &DatasetHandle) -> String {
    let mut out = String::new();
    match &data.targets {
        Targets::Values(y) if data.inputs.cols() <= 2 => {
            out.push_str("x,y\n");
            for r in 0..data.len() {
                let _ = writeln!(out, "{},{}", data.inputs.get(r, 0), y.get(r, 0));
            }
        }
        Targets::Values(y) => {
            for c in 0..data.inputs.cols() {
                let _ = write!(out, "x{c},");
            }
            out.push_str("y\n");
            for r in 0..data.len() {
                for c in 0..data.inputs.cols() {
                    let _ = write!(out, "{},", data.inputs.get(r, c));
                }
                let _ = writeln!(out, "{}", y.get(r, 0));
            }
        }
        Targets::Labels { labels, .. } => {
            for c in 0..data.inputs.cols() {
                let _ = write!(out, "p{c},");
            }
            out.push_str("label\n");
            for r in 0..data.len() {
                for c in 0..data.inputs.cols() {
                    let _ = write!(out, "{},", data.inputs.get(r, c));
                }
                let _ = writeln!(out, "{}", labels[r]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pipeline: &str, seed: u64, phase: Phase, epoch: usize, acc: f64) -> MetricsRow {
        MetricsRow {
            run_id: format!("{pipeline}-s{seed}"),
            pipeline: pipeline.into(),
            seed,
            phase,
            epoch,
            train_loss: 0.5,
            train_acc: Some(0.9),
            val_loss: 0.6,
            val_acc: Some(0.88),
            test_loss: 0.7,
            test_acc: Some(acc),
            removed_fraction: 0.9,
            flow_norm: 1.0,
            norm_product: 2.0,
            max_norm_bound: 100.0,
            flow_drift: None,
            band_errors: vec![],
        }
    }

    #[test]
    fn header_is_stable_and_bands_extend_it() {
        assert!(csv_header(&[]).ends_with("flow_drift"));
        assert!(csv_header(&[1, 5]).ends_with("band_err_k1,band_err_k5"));
    }

    #[test]
    fn terminal_row_prefers_student_phase() {
        let rows = vec![
            row("wilton", 1, Phase::Teacher, 40, 0.96),
            row("wilton", 1, Phase::Student, 39, 0.91),
            row("wilton", 1, Phase::Student, 40, 0.93),
        ];
        let finals = final_accuracies(&rows);
        assert_eq!(finals, vec![("wilton".to_string(), 1, 0.93)]);
    }

    #[test]
    fn summary_mean_and_sd() {
        let rows = vec![
            row("vanilla-mbp", 1, Phase::Student, 5, 0.90),
            row("vanilla-mbp", 2, Phase::Student, 5, 0.94),
        ];
        let s = summarize(&rows, Some(10), 2000);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean_test_acc - 0.92).abs() < 1e-12);
        assert!((s[0].sd_test_acc - (0.0008f64).sqrt()).abs() < 1e-12);
        assert_eq!(s[0].collapsed_runs, 0);
    }

    #[test]
    fn collapse_floor_uses_binomial_sd() {
        // 10 classes, 2000 test samples: floor 0.1, sd ~ 0.0067.
        assert!(is_collapsed(0.1, 10, 2000));
        assert!(is_collapsed(0.11, 10, 2000));
        assert!(!is_collapsed(0.2, 10, 2000));
    }

    #[test]
    fn csv_lines_are_deterministic() {
        let r = row("wilton", 3, Phase::Student, 7, 0.5);
        assert_eq!(to_csv_line(&r), to_csv_line(&r));
        assert!(to_csv_line(&r).starts_with("wilton-s3,wilton,3,student,7,"));
    }

    #[test]
    fn empty_optionals_leave_empty_cells() {
        let mut r = row("dense-baseline", 1, Phase::Teacher, 1, 0.9);
        r.train_acc = None;
        r.flow_drift = None;
        let line = to_csv_line(&r);
        // train_loss then empty train_acc cell.
        assert!(line.contains(",0.5,,"), "{line}");
        assert!(line.ends_with(','), "{line}");
    }
}
