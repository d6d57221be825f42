//! Metric reports: JSON document, CSV rows and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{AspectMatch, AspectOverlapReport, OpinionReport, PositionReport, DEFAULT_CUTOFF, DEFAULT_K, DEFAULT_T};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub k: usize,
    pub t: f64,
    pub quantile_cutoff: f64,
    pub seed: u64,
    pub aspect_match: AspectMatch,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            k: DEFAULT_K,
            t: DEFAULT_T,
            quantile_cutoff: DEFAULT_CUTOFF,
            seed: 0,
            aspect_match: AspectMatch::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthReport {
    pub word_count: usize,
    pub sentence_count: usize,
}

/// All metrics for one (summary, source) pair. Absent metrics are `null`;
/// `qags` and `summac` are reserved for externally computed scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub parameters: MetricParams,
    pub rouge1: Option<f64>,
    pub rouge1_docasref: Option<f64>,
    pub aspect_overlap: Option<AspectOverlapReport>,
    pub opinion_coverage: Option<OpinionReport>,
    pub position: Option<PositionReport>,
    pub length: Option<LengthReport>,
    pub qags: Option<f64>,
    pub summac: Option<f64>,
    #[serde(default)]
    pub errors: BTreeMap<String, String>,
}

/// Scalar columns of the CSV form, in output order.
pub const COLUMNS: &[&str] = &[
    "rouge1",
    "rouge1_docasref",
    "aspect_overlap",
    "opinion_coverage",
    "position_not_represented",
    "position_represented_fraction",
    "word_count",
    "sentence_count",
    "qags",
    "summac",
];

impl MetricReport {
    pub fn scalars(&self) -> BTreeMap<&'static str, Option<f64>> {
        let mut m = BTreeMap::new();
        m.insert("rouge1", self.rouge1);
        m.insert("rouge1_docasref", self.rouge1_docasref);
        m.insert("aspect_overlap", self.aspect_overlap.as_ref().map(|a| a.score));
        m.insert("opinion_coverage", self.opinion_coverage.as_ref().map(|o| o.coverage));
        m.insert(
            "position_not_represented",
            self.position.as_ref().map(|p| p.not_represented_indices.len() as f64),
        );
        m.insert(
            "position_represented_fraction",
            self.position
                .as_ref()
                .map(|p| p.represented_count() as f64 / p.sentences.len() as f64),
        );
        m.insert("word_count", self.length.map(|l| l.word_count as f64));
        m.insert("sentence_count", self.length.map(|l| l.sentence_count as f64));
        m.insert("qags", self.qags);
        m.insert("summac", self.summac);
        m
    }

    /// Number of metrics that produced a value.
    pub fn succeeded(&self) -> usize {
        [
            self.rouge1.is_some(),
            self.rouge1_docasref.is_some(),
            self.aspect_overlap.is_some(),
            self.opinion_coverage.is_some(),
            self.position.is_some(),
            self.length.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a leading `run` column; missing values are empty cells.
pub fn to_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricReport)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run"];
    header.extend_from_slice(COLUMNS);
    w.write_record(&header).expect("in-memory write");
    for (name, report) in rows {
        let scalars = report.scalars();
        let mut record = vec![name.to_string()];
        record.extend(COLUMNS.iter().map(|c| cell(scalars[c])));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const REPRESENTED: &str = "#2b8cbe";
const MISSED: &str = "#e34a33";

/// Scatter of max similarity by sentence index; one `<circle>` per sentence,
/// colored by whether the sentence is represented.
pub fn position_svg(report: &PositionReport) -> String {
    let (w, h, pad) = (720.0, 320.0, 40.0);
    let n = report.sentences.len().max(1);
    let step = if n > 1 { (w - 2.0 * pad) / (n - 1) as f64 } else { 0.0 };
    let lo = report
        .sentences
        .iter()
        .map(|s| s.max_similarity)
        .fold(0.0f64, f64::min);
    let span = (1.0 - lo).max(1e-9);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    )
    .unwrap();
    writeln!(out, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#, y = h - pad).unwrap();
    writeln!(
        out,
        r#"<text x="{x}" y="{y}" font-size="12" text-anchor="middle">sentence index</text>"#,
        x = w / 2.0,
        y = h - 8.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="12" y="{y}" font-size="12" transform="rotate(-90 12 {y})" text-anchor="middle">max similarity</text>"#,
        y = h / 2.0
    )
    .unwrap();
    for (i, s) in report.sentences.iter().enumerate() {
        let x = pad + step * i as f64;
        let y = (h - pad) - (s.max_similarity - lo) / span * (h - 2.0 * pad);
        let (fill, label) = if s.represented {
            (REPRESENTED, "represented")
        } else {
            (MISSED, "not represented")
        };
        writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{fill}"><title>sentence {} ({label}, {:.3})</title></circle>"#,
            s.global_index, s.max_similarity
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<rect x="{x}" y="10" width="10" height="10" fill="{REPRESENTED}"/><text x="{tx}" y="19" font-size="11">represented</text>"#,
        x = w - 200.0,
        tx = w - 185.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect x="{x}" y="26" width="10" height="10" fill="{MISSED}"/><text x="{tx}" y="35" font-size="11">not represented</text>"#,
        x = w - 200.0,
        tx = w - 185.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

/// One bar per source aspect, full height when retained in the summary.
pub fn aspects_svg(report: &AspectOverlapReport) -> String {
    let n = report.source_aspects.len().max(1);
    let bar = 28.0;
    let gap = 8.0;
    let (w, pad) = (560.0, 12.0);
    let h = pad * 2.0 + n as f64 * (bar + gap) + 20.0;
    let label_w = 220.0;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    for (i, a) in report.source_aspects.iter().enumerate() {
        let y = pad + i as f64 * (bar + gap);
        let kept = report.common.contains(a);
        let (len, fill) = if kept { (w - label_w - pad, REPRESENTED) } else { (6.0, MISSED) };
        writeln!(
            out,
            r#"<text x="{tx}" y="{ty}" font-size="12" text-anchor="end">{}</text><rect class="bar" x="{label_w}" y="{y}" width="{len}" height="{bar}" fill="{fill}"/>"#,
            escape(a),
            tx = label_w - 6.0,
            ty = y + bar * 0.65
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{pad}" y="{y}" font-size="12">aspect retention {:.3} ({} of {})</text>"#,
        report.score,
        report.common.len(),
        report.source_aspects.len(),
        y = h - 8.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
