use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SplitScores;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::pipeline::BenchResult;

pub const REPORT_SCHEMA: &str = "evalreport/1";

/// Results of one model at one channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub model: ModelKind,
    pub channels: usize,
    pub val: Option<SplitScores>,
    pub test: Option<SplitScores>,
    pub bench: Option<BenchResult>,
}

impl EvalEntry {
    pub fn new(model: ModelKind, channels: usize) -> Self {
        Self {
            model,
            channels,
            val: None,
            test: None,
            bench: None,
        }
    }

    fn key(&self) -> (ModelKind, usize) {
        (self.model, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub cloudy_threshold: f64,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn new(cloudy_threshold: f64) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            cloudy_threshold,
            entries: Vec::new(),
        }
    }

    /// Adds `entry`, filling in the fields of an existing entry with the
    /// same model and channel count. Entries stay sorted by that key.
    pub fn insert(&mut self, entry: EvalEntry) {
        match self.entries.iter_mut().find(|e| e.key() == entry.key()) {
            Some(e) => {
                if entry.val.is_some() {
                    e.val = entry.val;
                }
                if entry.test.is_some() {
                    e.test = entry.test;
                }
                if entry.bench.is_some() {
                    e.bench = entry.bench;
                }
            }
            None => self.entries.push(entry),
        }
        self.entries.sort_by_key(EvalEntry::key);
    }

    /// Combines reports; later ones win on overlapping fields.
    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> Result<Self> {
        let mut out: Option<EvalReport> = None;
        for r in reports {
            match &mut out {
                None => out = Some(r),
                Some(acc) => {
                    if acc.cloudy_threshold != r.cloudy_threshold {
                        return Err(Error::InvalidArgument(format!(
                            "cannot merge reports with cloudy thresholds {} and {}",
                            acc.cloudy_threshold, r.cloudy_threshold
                        )));
                    }
                    for e in r.entries {
                        acc.insert(e);
                    }
                }
            }
        }
        out.ok_or(Error::EmptyReport)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::UnsupportedFormat(format!("schema {:?}", r.schema)));
        }
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

const LABEL_WIDTH: usize = 22;
const METRIC_WIDTH: usize = 12;
const CELL_WIDTH: usize = 17;

fn pair(val: Option<String>, test: Option<String>) -> String {
    let dash = || "-".to_string();
    format!(
        "{} / {}",
        val.unwrap_or_else(dash),
        test.unwrap_or_else(dash)
    )
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn frac(v: f64) -> String {
    format!("{v:.3}")
}

fn write_row(out: &mut String, label: &str, metric: &str, cells: &[String]) {
    let _ = write!(out, "{label:<LABEL_WIDTH$}{metric:<METRIC_WIDTH$}");
    for c in cells {
        let _ = write!(out, "{c:>CELL_WIDTH$}");
    }
    out.push('\n');
}

type Getter = fn(&EvalEntry) -> String;

fn section(
    out: &mut String,
    title: &str,
    report: &EvalReport,
    columns: &[usize],
    rows: &[(&str, Getter)],
) {
    out.push_str(title);
    out.push('\n');
    let header: Vec<String> = columns.iter().map(|c| format!("{c} ch")).collect();
    write_row(out, "Model", "Metric", &header);
    let models: BTreeSet<ModelKind> = report.entries.iter().map(|e| e.model).collect();
    for model in models {
        for (i, (metric, get)) in rows.iter().enumerate() {
            let cells: Vec<String> = columns
                .iter()
                .map(|&c| {
                    report
                        .entries
                        .iter()
                        .find(|e| e.model == model && e.channels == c)
                        .map(get)
                        .unwrap_or_else(|| "-".into())
                })
                .collect();
            write_row(out, if i == 0 { model.title() } else { "" }, metric, &cells);
        }
    }
}

/// Plain-text tables: one row group per model, one column per channel
/// count. Scores are shown as `validation / test`; the size and timing
/// table is added when any entry carries a benchmark.
pub fn render_report(report: &EvalReport) -> Result<String> {
    if report.entries.is_empty() {
        return Err(Error::EmptyReport);
    }
    let columns: Vec<usize> = report
        .entries
        .iter()
        .map(|e| e.channels)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = String::new();

    let scores: [(&str, Getter); 5] = [
        ("PA [%]", |e| {
            pair(
                e.val.as_ref().map(|s| pct(s.segmentation.pixel_accuracy)),
                e.test.as_ref().map(|s| pct(s.segmentation.pixel_accuracy)),
            )
        }),
        ("DC", |e| {
            pair(
                e.val
                    .as_ref()
                    .and_then(|s| s.segmentation.dice_macro)
                    .map(frac),
                e.test
                    .as_ref()
                    .and_then(|s| s.segmentation.dice_macro)
                    .map(frac),
            )
        }),
        ("DC cloud", |e| {
            pair(
                e.val
                    .as_ref()
                    .and_then(|s| s.segmentation.dice_cloud)
                    .map(frac),
                e.test
                    .as_ref()
                    .and_then(|s| s.segmentation.dice_cloud)
                    .map(frac),
            )
        }),
        ("CA [%]", |e| {
            pair(
                e.val.as_ref().map(|s| pct(s.classification.accuracy)),
                e.test.as_ref().map(|s| pct(s.classification.accuracy)),
            )
        }),
        ("CF1", |e| {
            pair(
                e.val.as_ref().map(|s| frac(s.classification.f1)),
                e.test.as_ref().map(|s| frac(s.classification.f1)),
            )
        }),
    ];
    section(
        &mut out,
        &format!(
            "Model performance (validation / test, cloudy tile: cloud cover > {:.0} %)",
            100.0 * report.cloudy_threshold
        ),
        report,
        &columns,
        &scores,
    );

    if report.entries.iter().any(|e| e.bench.is_some()) {
        let sizes: [(&str, Getter); 4] = [
            ("Disk [MB]", |e| {
                e.bench
                    .as_ref()
                    .map_or("-".into(), |b| format!("{:.3}", b.size.megabytes_on_disk()))
            }),
            ("Memory [MB]", |e| {
                e.bench.as_ref().map_or("-".into(), |b| {
                    format!("{:.3}", b.size.megabytes_in_memory())
                })
            }),
            ("Params", |e| {
                e.bench
                    .as_ref()
                    .map_or("-".into(), |b| b.size.parameter_count.to_string())
            }),
            ("Time [s]", |e| {
                e.bench
                    .as_ref()
                    .map_or("-".into(), |b| format!("{:.3}", b.mean_seconds))
            }),
        ];
        out.push('\n');
        section(
            &mut out,
            "Model size and mean inference time per tile",
            report,
            &columns,
            &sizes,
        );
    }
    Ok(out)
}
