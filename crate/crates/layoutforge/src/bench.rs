//! Iteration-sweep benchmark: refine a corpus at several iteration counts
//! and aggregate per-iteration and per-difficulty-split metric means.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::error::Result;
use crate::ingest::{is_difficult, DEFAULT_DIFFICULTY_THRESHOLD};
use crate::layout::Layout;
use crate::metrics::{ContentPlanes, MetricSummary, MetricVector};
use crate::refine::{refine_with_planes, RefineConfig};

/// One benchmark input.
#[derive(Debug, Clone)]
pub struct BenchSample {
    pub id: String,
    pub layout: Layout,
    pub assets: Option<BackgroundAssets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Iteration counts to sweep.
    pub iterations: Vec<usize>,
    pub refine: RefineConfig,
    pub split_threshold: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            iterations: vec![0, 1, 2, 3],
            refine: RefineConfig::default(),
            split_threshold: DEFAULT_DIFFICULTY_THRESHOLD,
        }
    }
}

/// Mean metrics at one iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iterations: usize,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<IterationRow>,
    pub easy_rows: Vec<IterationRow>,
    pub hard_rows: Vec<IterationRow>,
    pub easy_count: usize,
    pub hard_count: usize,
    /// Per-sample failures (id, error); failed samples are excluded from
    /// the aggregates.
    pub errors: Vec<(String, String)>,
}

/// Refine every sample at every requested iteration count and aggregate.
/// Per-sample errors are collected, not fatal. Sample order does not
/// affect the aggregates; output rows follow the requested counts.
pub fn run_benchmark(samples: &[BenchSample], opts: &BenchOptions) -> Result<BenchReport> {
    opts.refine.validate()?;
    let mut report = BenchReport::default();
    // metrics per iteration, split into (all, easy, hard)
    let mut all: Vec<Vec<MetricVector>> = vec![Vec::new(); opts.iterations.len()];
    let mut easy: Vec<Vec<MetricVector>> = vec![Vec::new(); opts.iterations.len()];
    let mut hard: Vec<Vec<MetricVector>> = vec![Vec::new(); opts.iterations.len()];

    for sample in samples {
        let planes = sample.assets.as_ref().map(ContentPlanes::new);
        let difficult = is_difficult(&sample.layout, opts.split_threshold);
        let mut metrics_per_iter = Vec::with_capacity(opts.iterations.len());
        let mut failed = false;
        for &iters in &opts.iterations {
            let cfg = RefineConfig {
                iterations: iters,
                ..opts.refine.clone()
            };
            match refine_with_planes(&sample.layout, planes.as_ref(), &cfg) {
                Ok((_, trace)) => metrics_per_iter.push(trace.final_state().metrics),
                Err(e) => {
                    report.errors.push((sample.id.clone(), e.to_string()));
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        if difficult {
            report.hard_count += 1;
        } else {
            report.easy_count += 1;
        }
        for (i, m) in metrics_per_iter.into_iter().enumerate() {
            all[i].push(m);
            if difficult {
                hard[i].push(m);
            } else {
                easy[i].push(m);
            }
        }
    }

    for (i, &iters) in opts.iterations.iter().enumerate() {
        report.rows.push(IterationRow {
            iterations: iters,
            summary: MetricSummary::from_vectors(all[i].iter()),
        });
        report.easy_rows.push(IterationRow {
            iterations: iters,
            summary: MetricSummary::from_vectors(easy[i].iter()),
        });
        report.hard_rows.push(IterationRow {
            iterations: iters,
            summary: MetricSummary::from_vectors(hard[i].iter()),
        });
    }
    Ok(report)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn summary_cells(s: &MetricSummary) -> String {
    format!(
        "{},{:.6},{:.6},{},{},{},{},{:.6},{},{},{}",
        s.samples,
        s.ali,
        s.ove,
        opt_cell(s.und_l),
        opt_cell(s.und_s),
        opt_cell(s.read),
        opt_cell(s.occ),
        s.composite,
        s.und_defined,
        s.read_defined,
        s.occ_defined,
    )
}

pub const SWEEP_CSV_HEADER: &str =
    "iterations,samples,ali,ove,und_l,und_s,read,occ,composite,und_defined,read_defined,occ_defined";

/// Per-iteration means as CSV (deterministic formatting).
pub fn sweep_csv(rows: &[IterationRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{},{}", row.iterations, summary_cells(&row.summary));
    }
    out
}

/// Easy/hard split table as CSV, one row per (split, iteration count).
pub fn split_csv(report: &BenchReport) -> String {
    let mut out = format!("split,{SWEEP_CSV_HEADER}\n");
    for (name, rows) in [("easy", &report.easy_rows), ("hard", &report.hard_rows)] {
        for row in rows {
            let _ = writeln!(
                out,
                "{name},{},{}",
                row.iterations,
                summary_cells(&row.summary)
            );
        }
    }
    out
}

/// Plot-ready whitespace-separated data: one block per metric trend.
pub fn gnuplot_data(rows: &[IterationRow]) -> String {
    let mut out = String::from("# iterations ove und_s ali composite\n");
    for row in rows {
        let s = &row.summary;
        let _ = writeln!(
            out,
            "{} {:.6} {} {:.6} {:.6}",
            row.iterations,
            s.ove,
            s.und_s.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into()),
            s.ali,
            s.composite,
        );
    }
    out
}
