//! Text and JSON rendering of [`MetricsReport`]s.

use std::fmt::Write;

use super::dataset::TaskKind;
use super::metrics::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" | "text" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown report format {s:?} (table|json)")),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{:.2}%", v * 100.0))
}

fn frac(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

fn row_label(r: &MetricsReport) -> String {
    let mut s = match r.task {
        TaskKind::Obstruction => r.method.clone(),
        TaskKind::Manipulation => r.model.clone().unwrap_or_else(|| r.method.clone()),
    };
    if r.partial {
        s.push_str(" (partial)");
    }
    s
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut l = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(l, "{cell:<w$}");
            } else {
                let _ = write!(l, "  {cell:>w$}");
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

/// Renders reports of one task as an aligned table. Obstruction tables list
/// recognition accuracy, mIoU and detection accuracy per method;
/// manipulation tables list accuracy, precision and recall per model.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    match first.task {
        TaskKind::Obstruction => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        row_label(r),
                        pct(r.key_object_recognition_accuracy),
                        frac(r.segmentation_miou),
                        pct(r.accuracy),
                    ]
                })
                .collect();
            table(&["method", "recognition accuracy", "mIoU", "detection accuracy"], &rows)
        }
        TaskKind::Manipulation => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| vec![row_label(r), pct(r.accuracy), pct(r.precision), pct(r.recall)])
                .collect();
            table(&["model", "accuracy", "precision", "recall"], &rows)
        }
    }
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Table => {
            let mut out = render_table(std::slice::from_ref(report));
            let c = report.counts;
            let _ = writeln!(
                out,
                "\nsamples {}/{}  tp {}  fp {}  tn {}  fn {}  no-verdict {}",
                report.evaluated, report.samples, c.tp, c.fp, c.tn, c.fn_, report.no_verdict
            );
            if let Some(nf) = report.not_found_rate {
                let _ = writeln!(out, "not found {}", pct(Some(nf)));
            }
            if let Some(reason) = &report.abort_reason {
                let _ = writeln!(out, "aborted: {reason}");
            }
            let _ = writeln!(out, "fixtures {}", report.fixture_digest);
            let _ = writeln!(out, "digest {}", report.digest());
            out
        }
    }
}

pub fn parse_report(json: &str) -> Result<MetricsReport, serde_json::Error> {
    serde_json::from_str(json)
}
