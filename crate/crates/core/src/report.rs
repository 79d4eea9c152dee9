//! Rendering of evaluation, confusion, loss and efficiency results.
//!
//! JSON and CSV carry full `f64` precision. Markdown rounds metrics to three
//! decimals, latency to one, ratios to two. Every markdown cell equals the
//! machine value formatted at that precision.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::bench::{EfficiencyReport, LatencyStats};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::{ConfusionMatrix, EvalReport, PrPoint};

pub const METRIC_DECIMALS: usize = 3;
pub const LATENCY_DECIMALS: usize = 1;
pub const RATIO_DECIMALS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Markdown,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Markdown => "markdown",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(Error::Usage(format!(
                "unknown format `{other}` (expected json, csv or markdown)"
            ))),
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

pub fn render_eval(report: &EvalReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(report),
        OutputFormat::Csv => {
            let mut out = String::from("class,instances,precision,recall,map50,map50_95,operating_confidence\n");
            let a = &report.aggregate;
            let total: usize = report.per_class.iter().map(|c| c.instances).sum();
            let _ = writeln!(out, "all,{total},{},{},{},{},", a.precision, a.recall, a.map50, a.map50_95);
            for c in &report.per_class {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_field(&c.name),
                    c.instances,
                    c.precision,
                    c.recall,
                    c.ap50,
                    c.ap50_95,
                    opt(c.operating_confidence)
                );
            }
            out
        }
        OutputFormat::Markdown => {
            let d = METRIC_DECIMALS;
            let mut out = String::new();
            let _ = writeln!(out, "<!-- interpolation: {} -->", report.interpolation);
            let _ = writeln!(out, "<!-- precision/recall read at the max-F1 confidence on the IoU 0.50 curve -->");
            let _ = writeln!(out, "<!-- images: {} -->", report.images);
            out.push('\n');
            out.push_str("| Precision | Recall | mAP@50 | mAP@50-95 |\n");
            out.push_str("|---|---|---|---|\n");
            let a = &report.aggregate;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                fixed(a.precision, d),
                fixed(a.recall, d),
                fixed(a.map50, d),
                fixed(a.map50_95, d)
            );
            out.push('\n');
            out.push_str("| Class | Instances | Precision | Recall | mAP@50 | mAP@50-95 | Confidence |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for c in &report.per_class {
                let conf = c.operating_confidence.map(|v| fixed(v, d)).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    c.name,
                    c.instances,
                    fixed(c.precision, d),
                    fixed(c.recall, d),
                    fixed(c.ap50, d),
                    fixed(c.ap50_95, d),
                    conf
                );
            }
            if !report.skipped_classes.is_empty() {
                let _ = writeln!(
                    out,
                    "\nSkipped (no ground-truth instances): {}",
                    report.skipped_classes.join(", ")
                );
            }
            out
        }
    }
}

/// PR curves (IoU 0.5) of every evaluated class as CSV rows.
pub fn render_pr_curves(report: &EvalReport) -> String {
    let mut out = String::from("class,confidence,precision,recall\n");
    for c in &report.per_class {
        for PrPoint { confidence, precision, recall } in &c.pr_curve {
            let _ = writeln!(out, "{},{confidence},{precision},{recall}", csv_field(&c.name));
        }
    }
    out
}

#[derive(Serialize)]
struct ConfusionJson<'a> {
    labels: &'a [String],
    counts: &'a [Vec<u64>],
    normalized: Vec<Vec<f64>>,
}

pub fn render_confusion(cm: &ConfusionMatrix, format: OutputFormat) -> String {
    let normalized = cm.normalized();
    match format {
        OutputFormat::Json => json(&ConfusionJson {
            labels: &cm.labels,
            counts: &cm.counts,
            normalized,
        }),
        OutputFormat::Csv => {
            let mut out = String::from("view,true,");
            out.push_str(&cm.labels.iter().map(|l| csv_field(l)).collect::<Vec<_>>().join(","));
            out.push('\n');
            for (label, row) in cm.labels.iter().zip(&cm.counts) {
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                let _ = writeln!(out, "counts,{},{}", csv_field(label), cells.join(","));
            }
            for (label, row) in cm.labels.iter().zip(&normalized) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                let _ = writeln!(out, "normalized,{},{}", csv_field(label), cells.join(","));
            }
            out
        }
        OutputFormat::Markdown => {
            let header = |title: &str| {
                let mut h = format!("| {title} | {} |\n", cm.labels.join(" | "));
                h.push_str(&"|---".repeat(cm.labels.len() + 1));
                h.push_str("|\n");
                h
            };
            let mut out = String::from("Counts (rows: true class, columns: predicted class)\n\n");
            out.push_str(&header("true \\ pred"));
            for (label, row) in cm.labels.iter().zip(&cm.counts) {
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
            }
            out.push_str("\nRow-normalized\n\n");
            out.push_str(&header("true \\ pred"));
            for (label, row) in cm.labels.iter().zip(&normalized) {
                let cells: Vec<String> = row.iter().map(|v| fixed(*v, 2)).collect();
                let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
            }
            out
        }
    }
}

pub fn render_losses(breakdowns: &[LossBreakdown], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(&breakdowns),
        OutputFormat::Csv => {
            let mut out = String::from("mode,pairs,giou_term,l1_term,cls_term,total\n");
            for b in breakdowns {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    b.mode, b.pairs, b.giou_term, b.l1_term, b.cls_term, b.total
                );
            }
            out
        }
        OutputFormat::Markdown => {
            let mut out = String::from("| Mode | Pairs | GIoU term | L1 term | Cls term | Total |\n|---|---|---|---|---|---|\n");
            for b in breakdowns {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.6} | {:.6} | {:.6} | {:.6} |",
                    b.mode, b.pairs, b.giou_term, b.l1_term, b.cls_term, b.total
                );
            }
            out
        }
    }
}

pub fn render_efficiency(report: &EfficiencyReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(report),
        OutputFormat::Csv => {
            let mut out = String::from(
                "model,params_m,gflops,latency_ms,fps,params_ratio,gflops_ratio,latency_increase_pct\n",
            );
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(&r.name),
                    r.params_m,
                    r.gflops,
                    r.latency_ms,
                    r.fps,
                    r.params_ratio,
                    r.gflops_ratio,
                    r.latency_increase_pct
                );
            }
            out
        }
        OutputFormat::Markdown => {
            let r2 = RATIO_DECIMALS;
            let mut out = String::from(
                "| Model | Parameters (M) | GFLOPs | Inference Time (ms) | FPS | Params vs base | GFLOPs vs base | Latency vs base |\n",
            );
            out.push_str("|---|---|---|---|---|---|---|---|\n");
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "| {} | {:.1} | {:.1} | {} | {} | {}x | {}x | {:+.1}% |",
                    r.name,
                    r.params_m,
                    r.gflops,
                    fixed(r.latency_ms, LATENCY_DECIMALS),
                    fixed(r.fps, r2),
                    fixed(r.params_ratio, r2),
                    fixed(r.gflops_ratio, r2),
                    r.latency_increase_pct
                );
            }
            let _ = writeln!(out, "\nRatios relative to `{}`.", report.baseline);
            out
        }
    }
}

pub fn render_latency(stats: &LatencyStats, label: &str, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(stats),
        OutputFormat::Csv => format!(
            "label,samples,mean_ms,median_ms,p95_ms,min_ms,max_ms,fps\n{},{},{},{},{},{},{},{}\n",
            csv_field(label),
            stats.samples,
            stats.mean_ms,
            stats.median_ms,
            stats.p95_ms,
            stats.min_ms,
            stats.max_ms,
            stats.fps
        ),
        OutputFormat::Markdown => {
            let l = LATENCY_DECIMALS;
            format!(
                "<!-- end-to-end adapter wall-clock time, harness-measured -->\n\n\
                 | Adapter | Samples | Mean (ms) | Median (ms) | p95 (ms) | FPS |\n\
                 |---|---|---|---|---|---|\n\
                 | {label} | {} | {} | {} | {} | {} |\n",
                stats.samples,
                fixed(stats.mean_ms, l),
                fixed(stats.median_ms, l),
                fixed(stats.p95_ms, l),
                fixed(stats.fps, RATIO_DECIMALS)
            )
        }
    }
}
