//! Report artifacts: metrics tables (CSV/JSON), neighbor-IoU histogram
//! dumps (CSV and an SVG small-multiples chart), and training loss logs.
//!
//! All renderers return strings so callers can print or write them; every
//! one accepts an optional [`Provenance`] block that is embedded as leading
//! `#` comment lines (CSV), a `provenance` object (JSON), or an XML comment
//! (SVG), so any artifact can be traced back to the run that produced it.
//! Floats are written with Rust's shortest round-trip formatting, which
//! keeps files diffable and parses back to the exact value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::IoUHistogram;
use crate::metrics::{ClassMetrics, MetricReport};
use crate::toy::EpochStats;

/// Identifies the run that produced an artifact: a hash of the effective
/// configuration, the RNG seed, and the crate version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    /// Builds a block for the current crate version.
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            seed,
            version: crate::VERSION.to_string(),
        }
    }

    /// The `#`-comment form used at the top of line-oriented artifacts
    /// (CSV, beat annotation files).
    pub fn comment_lines(&self) -> String {
        format!(
            "# config-hash: {}\n# seed: {}\n# version: {}\n",
            self.config_hash, self.seed, self.version
        )
    }

    /// The single-line form embedded in SVG comments.
    fn inline(&self) -> String {
        format!(
            "config-hash: {}; seed: {}; version: {}",
            self.config_hash, self.seed, self.version
        )
    }
}

fn prepend_comments(body: String, provenance: Option<&Provenance>) -> String {
    match provenance {
        Some(p) => format!("{}{body}", p.comment_lines()),
        None => body,
    }
}

/// A possibly-undefined metric as a CSV/table cell: the shortest exact
/// float form, or `na`.
pub fn metric_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "na".to_string(),
    }
}

/// Renders labeled per-class metrics as CSV. The header row is fixed as
/// `class,f1,cmlc,cmlt,amlc,amlt`; metrics that are undefined for a row
/// (e.g. continuity of an empty sequence) appear as `na`. An empty slice
/// yields a header-only file.
pub fn metrics_csv(rows: &[(&str, &ClassMetrics)], provenance: Option<&Provenance>) -> String {
    let mut out = String::from("class,f1,cmlc,cmlt,amlc,amlt\n");
    for (label, m) in rows {
        out.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            metric_cell(m.f_measure),
            metric_cell(m.cmlc),
            metric_cell(m.cmlt),
            metric_cell(m.amlc),
            metric_cell(m.amlt),
        ));
    }
    prepend_comments(out, provenance)
}

/// The rows of a [`MetricReport`] in the layout [`metrics_csv`] expects:
/// always a `beat` row, plus a `downbeat` row when that class was scored.
pub fn report_rows(report: &MetricReport) -> Vec<(&'static str, &ClassMetrics)> {
    let mut rows = vec![("beat", &report.beat)];
    if let Some(db) = &report.downbeat {
        rows.push(("downbeat", db));
    }
    rows
}

/// Wraps any serializable payload as a JSON artifact: a schema version
/// field, the optional provenance object, then the payload's own fields
/// (payloads that are not JSON objects appear under a `payload` key).
pub fn json_artifact<T: Serialize>(payload: &T, provenance: Option<&Provenance>) -> Result<String> {
    let mut root = serde_json::Map::new();
    root.insert("schema_version".into(), "1".into());
    if let Some(p) = provenance {
        root.insert("provenance".into(), serde_json::to_value(p)?);
    }
    match serde_json::to_value(payload)? {
        serde_json::Value::Object(fields) => root.extend(fields),
        other => {
            root.insert("payload".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(root))?;
    text.push('\n');
    Ok(text)
}

/// Renders a [`MetricReport`] as JSON with a schema version field, so
/// downstream consumers can detect layout changes.
pub fn metrics_json(report: &MetricReport, provenance: Option<&Provenance>) -> Result<String> {
    json_artifact(report, provenance)
}

/// Renders histograms as CSV: one row per confidence bin per histogram,
/// with the bin's pair count and its row-normalized mass per IoU bin.
///
/// All histograms must share the same number of IoU bins (they normally
/// share a whole [`crate::histogram::HistogramConfig`]).
pub fn histogram_csv(hists: &[&IoUHistogram], provenance: Option<&Provenance>) -> Result<String> {
    let iou_bins = match hists.first() {
        Some(h) => h.config.iou_bins,
        None => 0,
    };
    if hists.iter().any(|h| h.config.iou_bins != iou_bins) {
        return Err(Error::InvalidConfig(
            "histograms in one CSV must share an IoU bin count".into(),
        ));
    }
    let mut out = String::from("class,conf_low,conf_high,pairs");
    for b in 0..iou_bins {
        out.push_str(&format!(",mass_{b}"));
    }
    out.push('\n');
    for h in hists {
        let mass = h.mass();
        for row in 0..h.num_rows() {
            out.push_str(&format!(
                "{},{},{},{}",
                h.class,
                h.config.confidence_edges[row],
                h.config.confidence_edges[row + 1],
                h.row_total(row)
            ));
            for m in &mass[row] {
                out.push_str(&format!(",{m}"));
            }
            out.push('\n');
        }
    }
    Ok(prepend_comments(out, provenance))
}

const PANEL_W: f64 = 180.0;
const PANEL_H: f64 = 110.0;
const PANEL_PAD: f64 = 14.0;
const PLOT_TOP: f64 = 22.0;
const PLOT_BOTTOM: f64 = 16.0;

/// Renders histograms as an SVG small-multiples grid: one column per
/// histogram (class), one panel per confidence bin, each panel a bar chart
/// of the row-normalized IoU mass. Bars scale to the panel's own maximum so
/// valley structure stays visible in sparse rows.
pub fn histogram_svg(hists: &[&IoUHistogram], provenance: Option<&Provenance>) -> String {
    let rows = hists.iter().map(|h| h.num_rows()).max().unwrap_or(0);
    let width = PANEL_PAD + (PANEL_W + PANEL_PAD) * hists.len().max(1) as f64;
    let height = PANEL_PAD + (PANEL_H + PANEL_PAD) * rows.max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"10\">\n"
    );
    if let Some(p) = provenance {
        svg.push_str(&format!("<!-- {} -->\n", p.inline()));
    }
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    for (col, h) in hists.iter().enumerate() {
        let mass = h.mass();
        let x0 = PANEL_PAD + (PANEL_W + PANEL_PAD) * col as f64;
        for row in 0..h.num_rows() {
            let y0 = PANEL_PAD + (PANEL_H + PANEL_PAD) * row as f64;
            let plot_h = PANEL_H - PLOT_TOP - PLOT_BOTTOM;
            let peak = mass[row].iter().cloned().fold(0.0, f64::max).max(1e-12);
            svg.push_str(&format!(
                "<text x=\"{x0}\" y=\"{:.1}\">{} c∈[{}, {}) n={}</text>\n",
                y0 + 12.0,
                h.class,
                h.config.confidence_edges[row],
                h.config.confidence_edges[row + 1],
                h.row_total(row)
            ));
            let bins = h.config.iou_bins.max(1) as f64;
            let bar_w = PANEL_W / bins;
            for (b, &m) in mass[row].iter().enumerate() {
                let bar_h = plot_h * m / peak;
                svg.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"#4878a8\"/>\n",
                    x0 + bar_w * b as f64,
                    y0 + PLOT_TOP + plot_h - bar_h,
                    bar_w * 0.9,
                    bar_h
                ));
            }
            let base = y0 + PLOT_TOP + plot_h;
            svg.push_str(&format!(
                "<line x1=\"{x0}\" y1=\"{base:.1}\" x2=\"{:.1}\" y2=\"{base:.1}\" \
                 stroke=\"black\"/>\n",
                x0 + PANEL_W
            ));
            svg.push_str(&format!(
                "<text x=\"{x0}\" y=\"{:.1}\">0</text>\n",
                base + 12.0
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">IoU 1</text>\n",
                x0 + PANEL_W,
                base + 12.0
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Renders a training log as CSV, one row per epoch. The validation column
/// is `na` on epochs where validation did not run.
pub fn loss_log_csv(log: &[EpochStats], provenance: Option<&Provenance>) -> String {
    let mut out = String::from("epoch,lr,cls,reg,lft,total,val_joint_f\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch,
            e.lr,
            e.cls,
            e.reg,
            e.lft,
            e.total,
            metric_cell(e.val_joint_f)
        ));
    }
    prepend_comments(out, provenance)
}

/// Writes a rendered artifact to disk, mapping failures to an I/O error
/// that names the path.
pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
