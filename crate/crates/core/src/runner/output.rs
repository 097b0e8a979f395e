//! Run artifacts: JSON-lines manifest, CSV tables, PGM heatmaps and SVG
//! line plots. Every writer is byte-deterministic for fixed input.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Append-only record of one run. Records go to disk as they are pushed.
#[derive(Debug)]
pub struct RunManifest {
    dir: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    records: Vec<Value>,
    aborted: Option<String>,
}

impl RunManifest {
    /// Starts `manifest.jsonl` in `dir`, replacing any earlier run's manifest.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let file = File::create(dir.join(MANIFEST_NAME))?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            writer: Some(BufWriter::new(file)),
            records: Vec::new(),
            aborted: None,
        })
    }

    /// A manifest that is never written, for library callers.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            writer: None,
            records: Vec::new(),
            aborted: None,
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn push(&mut self, record: Value) -> Result<()> {
        if let Some(w) = &mut self.writer {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn check(&mut self, name: &str, value: f64, tolerance: f64, pass: bool) -> Result<()> {
        self.push(json!({
            "record": "check",
            "name": name,
            "value": finite_or_null(value),
            "tolerance": tolerance,
            "pass": pass,
        }))
    }

    /// `value <= tolerance`, with NaN failing.
    pub fn check_at_most(&mut self, name: &str, value: f64, tolerance: f64) -> Result<bool> {
        let pass = value <= tolerance;
        self.check(name, value, tolerance, pass)?;
        Ok(pass)
    }

    pub fn abort(&mut self, error: &Error) -> Result<()> {
        let msg = error.to_string();
        self.aborted = Some(msg.clone());
        self.push(json!({"record": "check", "name": "run", "pass": false, "error": msg}))
    }

    pub fn timing(&mut self, phase: &str, seconds: f64) -> Result<()> {
        self.push(json!({"record": "timing", "phase": phase, "seconds": seconds}))
    }

    /// Writes `bytes` to `name` under the run directory and records its hash.
    /// In-memory manifests only record the hash.
    pub fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        if let Some(dir) = &self.dir {
            fs::write(dir.join(name), bytes)?;
        }
        let digest = sha256_hex(bytes);
        self.push(json!({"record": "file", "path": name, "sha256": digest, "bytes": bytes.len()}))?;
        Ok(digest)
    }

    pub fn records(&self) -> &[Value] {
        &self.records
    }

    pub fn checks(&self) -> impl Iterator<Item = &Value> {
        self.records.iter().filter(|r| r["record"] == "check")
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.checks()
            .filter(|r| r["pass"] != true)
            .map(|r| r["name"].as_str().unwrap_or("?").to_string())
            .collect()
    }

    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    /// 0 when every check passes, 2 on a failed check, 4 on an abort.
    pub fn exit_code(&self) -> i32 {
        if self.aborted.is_some() {
            4
        } else if self.failed_checks().is_empty() {
            0
        } else {
            2
        }
    }

    /// Closes the run with a summary record.
    pub fn finish(&mut self) -> Result<()> {
        let failed = self.failed_checks();
        let status = match self.exit_code() {
            0 => "pass",
            2 => "fail",
            _ => "abort",
        };
        let total = self.checks().count();
        let code = self.exit_code();
        self.push(json!({
            "record": "summary",
            "checks": total,
            "failed": failed,
            "status": status,
            "exit_code": code,
        }))?;
        if let Some(w) = &mut self.writer {
            w.flush()?;
        }
        Ok(())
    }

    /// The records as JSON lines with timing records left out, for
    /// comparing runs.
    pub fn reproducible_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r["record"] != "timing")
            .map(|r| r.to_string())
            .collect()
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// RFC-4180 CSV with a header row.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Shortest round-trip formatting, so CSV values parse back exactly.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PlotKind<'a> {
    Line {
        title: &'a str,
        x_label: &'a str,
        y_label: &'a str,
        series: &'a [Series],
    },
    /// Row-major, `height` rows of `width` values; row 0 is drawn at the top.
    Heatmap {
        width: usize,
        height: usize,
        values: &'a [f64],
    },
}

/// Renders a plot to bytes: SVG for line plots, PGM for heatmaps.
pub fn emit_plot(kind: PlotKind<'_>) -> Result<Vec<u8>> {
    match kind {
        PlotKind::Line {
            title,
            x_label,
            y_label,
            series,
        } => line_svg(title, x_label, y_label, series).map(String::into_bytes),
        PlotKind::Heatmap {
            width,
            height,
            values,
        } => heatmap_pgm(width, height, values),
    }
}

/// Binary PGM (P5), gray scaled linearly from the minimum (0) to the
/// maximum (255).
pub fn heatmap_pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.is_empty() || width == 0 || height == 0 {
        return Err(Error::NoData);
    }
    if values.len() != width * height {
        return Err(Error::InvalidArgument(format!(
            "heatmap of {width}x{height} given {} values",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("heatmap data must be finite".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let span = hi - lo;
    out.extend(values.iter().map(|v| {
        if span > 0.0 {
            (255.0 * (v - lo) / span).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn label(x: f64) -> String {
    if x == 0.0 || (1e-3..1e4).contains(&x.abs()) {
        let s = format!("{x:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{x:.3e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// SVG 1.1 line plot with a frame, min/max tick labels and a legend.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if points.is_empty() {
        return Err(Error::NoData);
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("plot data must be finite".into()));
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let pad = y0.abs().max(1.0) * 0.5;
        y0 -= pad;
        y1 += pad;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let font = r#"font-family="sans-serif" font-size="12""#;
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" {font} text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" {font} text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" {font} text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="{anchor}">{}</text>"#,
            sx(x),
            top + ph + 16.0,
            label(x)
        );
    }
    for y in [y0, y1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(y) + 4.0,
            label(y)
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.is_empty() {
            continue;
        }
        let mut path = String::new();
        for (k, &(x, y)) in ser.points.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2}",
                if k == 0 { "" } else { " " },
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            left + pw - 120.0,
            left + pw - 100.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" {font}>{}</text>"#,
            left + pw - 94.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
