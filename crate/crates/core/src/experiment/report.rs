use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::eval::{EvalCell, EvaluationReport};
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 9] = [
    "condition",
    "noise",
    "snr_db",
    "reverb_ms",
    "clip_kind",
    "clip_fraction",
    "n_correct",
    "n_total",
    "accuracy_pct",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Pretty,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "pretty" => Ok(ReportFormat::Pretty),
            other => Err(Error::InvalidParam(format!("unknown report format {other:?}"))),
        }
    }
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub noise: Option<String>,
    pub snr_db: Option<f64>,
    pub reverb_ms: Option<f64>,
    pub clip_kind: Option<String>,
    pub clip_fraction: Option<f64>,
    pub n_correct: usize,
    pub n_total: usize,
    pub accuracy_pct: f64,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_fields(c: &EvalCell) -> [String; 9] {
    let s = &c.spec;
    [
        c.condition(),
        opt(s.noise.as_ref().map(|n| n.source.to_string())),
        opt(s.noise.as_ref().map(|n| n.snr_db)),
        opt(s.reverb_ms),
        opt(s.clip.map(|k| k.kind)),
        opt(s.clip.map(|k| k.fraction)),
        c.n_correct.to_string(),
        c.n_total.to_string(),
        format!("{:.4}", c.accuracy_pct),
    ]
}

/// CSV text in grid order.
pub fn report_csv(report: &EvaluationReport) -> Result<String> {
    if report.cells.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for c in &report.cells {
        w.write_record(row_fields(c))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Row and column labels placing a cell in a Table-I style layout: reverb
/// delays (or noises, or clip kinds) down, SNRs (or fractions) across.
fn pivot_keys(c: &EvalCell) -> (String, String) {
    let s = &c.spec;
    let snr = s.noise.as_ref().map(|n| format!("{} {}dB", n.source.label(), n.snr_db));
    match (s.reverb_ms, &s.noise, s.clip) {
        (Some(ms), _, _) => (format!("{ms} ms"), snr.unwrap_or_else(|| "clean".into())),
        (None, Some(n), _) => (n.source.label(), format!("{}dB", n.snr_db)),
        (None, None, Some(k)) => (k.kind.to_string(), format!("{}%", k.fraction * 100.0)),
        (None, None, None) => ("clean".into(), "clean".into()),
    }
}

/// Aligned accuracy table, one row per reverb delay / noise / clip kind.
pub fn render_pretty(report: &EvaluationReport) -> Result<String> {
    if report.cells.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for c in &report.cells {
        let (r, k) = pivot_keys(c);
        if !rows.contains(&r) {
            rows.push(r.clone());
        }
        if !cols.contains(&k) {
            cols.push(k.clone());
        }
        values.push((r, k, c.accuracy_pct));
    }
    let head = "condition".to_string();
    let w0 = rows.iter().chain([&head]).map(String::len).max().unwrap_or(0);
    let widths: Vec<usize> = cols.iter().map(|c| c.len().max(8)).collect();
    let mut out = format!("{head:<w0$}");
    for (c, w) in cols.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');
    for r in &rows {
        let _ = write!(out, "{r:<w0$}");
        for (c, w) in cols.iter().zip(&widths) {
            match values.iter().find(|(vr, vc, _)| vr == r && vc == c) {
                Some((_, _, a)) => {
                    let _ = write!(out, "  {a:>w$.2}");
                }
                None => {
                    let _ = write!(out, "  {:>w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "accuracy in percent over {} test utterances; seed {}", report.cells[0].n_total, report.seed);
    Ok(out)
}

pub fn write_report(report: &EvaluationReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(report)?,
        ReportFormat::Pretty => render_pretty(report)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_opt<T: FromStr>(s: &str, what: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad {what} {s:?}")))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()?.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::Format("unexpected report header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let req = |i: usize, what: &str| -> Result<String> {
            let v = rec.get(i).unwrap_or("");
            if v.is_empty() {
                Err(Error::Format(format!("missing {what}")))
            } else {
                Ok(v.to_string())
            }
        };
        rows.push(ReportRow {
            condition: req(0, "condition")?,
            noise: parse_opt(&rec[1], "noise")?,
            snr_db: parse_opt(&rec[2], "snr_db")?,
            reverb_ms: parse_opt(&rec[3], "reverb_ms")?,
            clip_kind: parse_opt(&rec[4], "clip_kind")?,
            clip_fraction: parse_opt(&rec[5], "clip_fraction")?,
            n_correct: parse_opt(&rec[6], "n_correct")?.ok_or_else(|| Error::Format("missing n_correct".into()))?,
            n_total: parse_opt(&rec[7], "n_total")?.ok_or_else(|| Error::Format("missing n_total".into()))?,
            accuracy_pct: parse_opt(&rec[8], "accuracy_pct")?.ok_or_else(|| Error::Format("missing accuracy".into()))?,
        });
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report_csv(&text)
}

/// Long-format accuracy-vs-SNR data for gnuplot: one block per series
/// (noise, plus reverb delay when present), blocks separated by two blank
/// lines so `index` selects a series.
pub fn gnuplot_curves(report: &EvaluationReport) -> Result<String> {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for c in &report.cells {
        let Some(n) = &c.spec.noise else { continue };
        let name = match c.spec.reverb_ms {
            Some(ms) => format!("{} reverb {ms}ms", n.source.label()),
            None => n.source.label(),
        };
        match series.iter_mut().find(|(s, _)| *s == name) {
            Some((_, pts)) => pts.push((n.snr_db, c.accuracy_pct)),
            None => series.push((name, vec![(n.snr_db, c.accuracy_pct)])),
        }
    }
    if series.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut out = String::new();
    for (i, (name, pts)) in series.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# series \"{name}\"\n# snr_db accuracy_pct");
        for (snr, acc) in pts {
            let _ = writeln!(out, "{snr} {acc:.4}");
        }
    }
    Ok(out)
}
