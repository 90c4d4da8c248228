//! Backtest output files.
//!
//! ```text
//! <out>/reports/<scenario>.json   full report
//! <out>/alerts/<scenario>.jsonl   one alert per line
//! <out>/weights/<scenario>.csv    tick,source_id,weight
//! <out>/summary.csv               scenario,predictions,accuracy,recall,f1,mean_reliability
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crossrisk_core::{Alert, BacktestReport};
use serde::Serialize;

pub const SUMMARY_HEADER: [&str; 6] = ["scenario", "predictions", "accuracy", "recall", "f1", "mean_reliability"];

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub predictions: usize,
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_reliability: f64,
}

impl SummaryRow {
    pub fn from_report(r: &BacktestReport) -> Self {
        SummaryRow {
            scenario: r.scenario.clone(),
            predictions: r.predictions,
            accuracy: r.metrics.accuracy,
            recall: r.metrics.recall,
            f1: r.metrics.f1,
            mean_reliability: r.mean_reliability,
        }
    }

    fn from_json(v: &serde_json::Value) -> Option<Self> {
        Some(SummaryRow {
            scenario: v["scenario"].as_str()?.to_string(),
            predictions: v["predictions"].as_u64()? as usize,
            accuracy: v["metrics"]["accuracy"].as_f64()?,
            recall: v["metrics"]["recall"].as_f64()?,
            f1: v["metrics"]["f1"].as_f64()?,
            mean_reliability: v["mean_reliability"].as_f64()?,
        })
    }
}

pub fn alert_line(alert: &Alert) -> String {
    serde_json::to_string(alert).expect("alerts serialize")
}

pub fn report_json(report: &BacktestReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn weights_csv(report: &BacktestReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tick", "source_id", "weight"]).expect("in-memory write");
    for point in &report.weight_trajectory {
        for (src, weight) in &point.weights {
            w.write_record([point.timestamp.to_string(), src.to_string(), weight.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Writes the report, alert log and weight table of one scenario.
pub fn write_scenario(out: &Path, report: &BacktestReport) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dir in ["reports", "alerts", "weights"] {
        fs::create_dir_all(out.join(dir))?;
    }
    let path = out.join("reports").join(format!("{}.json", report.scenario));
    fs::write(&path, report_json(report))?;
    written.push(path);
    let path = out.join("alerts").join(format!("{}.jsonl", report.scenario));
    let mut f = io::BufWriter::new(fs::File::create(&path)?);
    for a in &report.alerts {
        writeln!(f, "{}", alert_line(a))?;
    }
    f.flush()?;
    written.push(path);
    let path = out.join("weights").join(format!("{}.csv", report.scenario));
    fs::write(&path, weights_csv(report))?;
    written.push(path);
    Ok(written)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.predictions.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.f1),
            format!("{:.6}", r.mean_reliability),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Rebuilds summary rows from the JSON reports under `<out>/reports`, sorted by scenario.
pub fn read_summary(out: &Path) -> io::Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for entry in fs::read_dir(out.join("reports"))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        let row = SummaryRow::from_json(&v)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("{}: not a backtest report", path.display())))?;
        rows.push(row);
    }
    rows.sort_by(|a, b| a.scenario.cmp(&b.scenario));
    Ok(rows)
}
