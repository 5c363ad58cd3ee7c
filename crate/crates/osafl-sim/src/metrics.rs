//! Per-round metric rows, CSV persistence, and cross-seed summaries.
//! Files use `.` decimals, LF line endings, and Rust's shortest
//! round-trip float formatting, so identical runs produce byte-identical
//! output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Header of a per-run metrics file.
pub const METRICS_HEADER: &str =
    "round,protocol,test_accuracy,test_loss,train_loss,straggler_count,mean_kappa,mean_lambda";

/// Header of a cross-seed summary file.
pub const SUMMARY_HEADER: &str = "round,protocol,test_accuracy_mean,test_accuracy_std,\
test_loss_mean,test_loss_std,train_loss_mean,train_loss_std,straggler_count_mean,\
straggler_count_std,mean_kappa_mean,mean_kappa_std,mean_lambda_mean,mean_lambda_std";

/// One round of one run, as written to CSV. Rounds are 1-based in files.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub round: u64,
    pub protocol: String,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub train_loss: f64,
    pub straggler_count: usize,
    /// Mean local step count over this round's participants (0 if none).
    pub mean_kappa: f64,
    /// Mean similarity score over all clients (0 for score-free protocols).
    pub mean_lambda: f64,
}

impl MetricRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.round,
            self.protocol,
            self.test_accuracy,
            self.test_loss,
            self.train_loss,
            self.straggler_count,
            self.mean_kappa,
            self.mean_lambda
        )
    }
}

/// Write rows (possibly none) under the standard header.
pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(METRICS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.csv_line());
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing metrics to {}", path.display()))
}

/// Parse a metrics file written by [`write_metrics`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading metrics from {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => bail!(
            "{}: expected metrics header, found {:?}",
            path.display(),
            other
        ),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!("{} line {}: expected 8 fields, got {}", path.display(), i + 2, fields.len());
        }
        let parse = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .with_context(|| format!("{} line {}: bad number {:?}", path.display(), i + 2, fields[j]))
        };
        rows.push(MetricRow {
            round: fields[0].parse().with_context(|| format!("{} line {}: bad round", path.display(), i + 2))?,
            protocol: fields[1].to_string(),
            test_accuracy: parse(2)?,
            test_loss: parse(3)?,
            train_loss: parse(4)?,
            straggler_count: fields[5]
                .parse()
                .with_context(|| format!("{} line {}: bad straggler count", path.display(), i + 2))?,
            mean_kappa: parse(6)?,
            mean_lambda: parse(7)?,
        });
    }
    Ok(rows)
}

/// Mean ± sample standard deviation of each metric at one round index,
/// across independent seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub round: u64,
    pub protocol: String,
    pub stats: [(f64, f64); 6],
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

/// Collapse runs of the same experiment under different seeds into
/// per-round means and sample standard deviations.
pub fn summarize(runs: &[Vec<MetricRow>]) -> Result<Vec<SummaryRow>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    for run in runs {
        if run.len() != first.len() {
            bail!("summary inputs disagree on round count");
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for (i, head) in first.iter().enumerate() {
        let column = |f: fn(&MetricRow) -> f64| -> Vec<f64> {
            runs.iter().map(|run| f(&run[i])).collect()
        };
        for run in runs {
            if run[i].round != head.round || run[i].protocol != head.protocol {
                bail!("summary inputs disagree on round/protocol at index {i}");
            }
        }
        out.push(SummaryRow {
            round: head.round,
            protocol: head.protocol.clone(),
            stats: [
                mean_std(&column(|r| r.test_accuracy)),
                mean_std(&column(|r| r.test_loss)),
                mean_std(&column(|r| r.train_loss)),
                mean_std(&column(|r| r.straggler_count as f64)),
                mean_std(&column(|r| r.mean_kappa)),
                mean_std(&column(|r| r.mean_lambda)),
            ],
        });
    }
    Ok(out)
}

/// Write a cross-seed summary file.
pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(96 * (rows.len() + 1));
    text.push_str(SUMMARY_HEADER);
    text.push('\n');
    for row in rows {
        write!(text, "{},{}", row.round, row.protocol).expect("string write");
        for (mean, std) in row.stats {
            write!(text, ",{mean},{std}").expect("string write");
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing summary to {}", path.display()))
}
