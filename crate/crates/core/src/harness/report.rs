// SPDX-License-Identifier: Apache-2.0

//! Relative-to-native tables in CSV, Markdown and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EngineKind, HarnessError, Metric, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    #[serde(alias = "md")]
    Markdown,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json];

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "csv" => Some(ReportFormat::Csv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
        }
    }
}

/// One (program, engine) row. A row without `absolute` is NA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub program: String,
    pub engine: EngineKind,
    pub samples: usize,
    pub absolute: Option<Metrics>,
    pub relative: Option<Metrics>,
    pub min: Option<Metrics>,
    pub max: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportRow {
    pub fn na(program: &str, engine: EngineKind, note: impl Into<String>) -> Self {
        ReportRow {
            program: program.to_string(),
            engine,
            samples: 0,
            absolute: None,
            relative: None,
            min: None,
            max: None,
            note: Some(note.into()),
        }
    }

    pub fn is_na(&self) -> bool {
        self.absolute.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    pub fn row(&self, program: &str, engine: EngineKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|row| row.program == program && row.engine == engine)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|err| HarnessError::Config(format!("report json: {err}")))
    }
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn md_cell(value: Option<f64>, precision: usize) -> String {
    value.map_or_else(|| "NA".to_string(), |v| format!("{v:.precision$}"))
}

pub fn emit_report(report: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv(report),
        ReportFormat::Markdown => markdown(report),
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
    }
}

fn csv(report: &MetricReport) -> String {
    let mut out = String::from("program,engine,metric,absolute,relative\n");
    for row in &report.rows {
        for metric in Metric::ALL {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.program,
                row.engine,
                metric.name(),
                cell(row.absolute.map(|m| m.get(metric))),
                cell(row.relative.map(|m| m.get(metric))),
            );
        }
    }
    out
}

fn markdown(report: &MetricReport) -> String {
    let mut out = String::from(
        "| program | engine | n | rel. max RSS | rel. startup | rel. exec | rel. total | rel. size \
         | max RSS (KiB) | startup (ms) | exec (ms) | total (ms) | size (B) |\n\
         |---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for row in &report.rows {
        let _ = write!(out, "| {} | {} | {} |", row.program, row.engine, row.samples);
        for metric in Metric::ALL {
            let _ = write!(out, " {} |", md_cell(row.relative.map(|m| m.get(metric)), 2));
        }
        for metric in Metric::ALL {
            let value = row.absolute.map(|m| match metric {
                Metric::MaxRss => m.get(metric) / 1024.0,
                _ => m.get(metric),
            });
            let precision = match metric {
                Metric::MaxRss | Metric::BinarySize => 0,
                _ => 3,
            };
            let _ = write!(out, " {} |", md_cell(value, precision));
        }
        out.push('\n');
    }
    let notes: Vec<_> = report
        .rows
        .iter()
        .filter_map(|row| row.note.as_ref().map(|note| (row, note)))
        .collect();
    if !notes.is_empty() {
        out.push('\n');
        for (row, note) in notes {
            let _ = writeln!(out, "- {}/{}: {}", row.program, row.engine, note.replace('\n', " "));
        }
    }
    out
}
