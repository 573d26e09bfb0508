//! Report files: JSON with a `_meta` block, plain-text tables, and SVG
//! histograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::write_file;
use crate::error::Result;
use crate::leaderboard::{fmt_score, render_table, LeaderboardRow};
use crate::metaeval::MetaEvalResult;
use crate::metrics::MetricReport;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub world_seed: u64,
    pub code_version: String,
    pub format_version: u32,
}

impl ReportMeta {
    pub fn new(config_hash: &str, seed: u64, world_seed: u64) -> Self {
        ReportMeta {
            config_hash: config_hash.to_string(),
            seed,
            world_seed,
            code_version: crate::CODE_VERSION.to_string(),
            format_version: REPORT_FORMAT_VERSION,
        }
    }

    fn comment(&self) -> String {
        format!(
            "config_hash={} seed={} world_seed={} code_version={}",
            self.config_hash, self.seed, self.world_seed, self.code_version
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
    Plots,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Table, ReportFormat::Plots];
}

#[derive(Debug, Clone)]
pub enum Results {
    /// Written as `<name>.json`; several eval reports may share a run.
    Eval {
        name: String,
        reports: Vec<MetricReport>,
    },
    MetaEval(Vec<MetaEvalResult>),
    Leaderboard(Vec<LeaderboardRow>),
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// `{metric_key: {agg_value, value_by_index}, "_meta": {...}}`.
pub fn eval_report_json(reports: &[MetricReport], meta: &ReportMeta) -> Result<String> {
    let mut out = BTreeMap::new();
    for r in reports {
        out.insert(
            r.metric_key.clone(),
            json!({ "agg_value": r.agg_value, "value_by_index": r.value_by_index }),
        );
    }
    out.insert("_meta".to_string(), serde_json::to_value(meta)?);
    pretty(&serde_json::to_value(out)?)
}

/// Inverse of [`eval_report_json`], without the metadata.
pub fn parse_eval_report(text: &str) -> Result<(BTreeMap<String, f64>, ReportMeta)> {
    let v: Value = serde_json::from_str(text)?;
    let mut aggs = BTreeMap::new();
    let mut meta = None;
    if let Value::Object(map) = v {
        for (k, entry) in map {
            if k == "_meta" {
                meta = Some(serde_json::from_value(entry)?);
            } else if let Some(a) = entry.get("agg_value") {
                aggs.insert(k, a.as_f64().unwrap_or(f64::NAN));
            }
        }
    }
    let meta = meta.ok_or_else(|| crate::error::data_err!("eval report has no _meta block"))?;
    Ok((aggs, meta))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_score).unwrap_or_else(|| "-".into())
}

pub fn meta_eval_table(results: &[MetaEvalResult]) -> String {
    let width = results.iter().map(|r| r.metric_key.len()).max().unwrap_or(6).max(6);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>7}  {:>7}  {:>7}  {:>10}  {:>7}\n",
        "metric", "faithful", "relearn", "quant", "probe", "robustness", "overall"
    );
    for r in results {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>7}  {:>7}  {:>7}  {:>10}  {:>7}",
            r.metric_key,
            fmt_score(r.faithfulness),
            opt(r.relearn),
            opt(r.quant),
            opt(r.probe),
            opt(r.robustness_agg),
            opt(r.overall)
        );
    }
    out
}

pub fn eval_table(reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.metric_key.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>10}\n", "metric", "value");
    for r in reports {
        let _ = writeln!(out, "{:<width$}  {:>10.4}", r.metric_key, r.agg_value);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Side-by-side histogram of labelled score series, with an optional
/// vertical marker.
pub fn histogram_svg(title: &str, series: &[(&str, &[f64])], marker: Option<(&str, f64)>, meta: &ReportMeta) -> String {
    const W: f64 = 520.0;
    const H: f64 = 320.0;
    const LEFT: f64 = 50.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 50.0;
    const BOTTOM: f64 = 40.0;
    const BINS: usize = 10;
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let bin_of = |v: f64| (((v - lo) / (hi - lo) * BINS as f64) as usize).min(BINS - 1);
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, vals)| {
            let mut c = vec![0; BINS];
            for &v in vals.iter().filter(|v| v.is_finite()) {
                c[bin_of(v)] += 1;
            }
            c
        })
        .collect();
    let peak = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let bin_w = plot_w / BINS as f64;
    let bar_w = bin_w / series.len().max(1) as f64;
    let x_of = |v: f64| LEFT + (v - lo) / (hi - lo) * plot_w;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", escape(&meta.comment()));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, (label, vals)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let lx = LEFT + 120.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="30" width="10" height="10" fill="{color}"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="39">{} (n={})</text>"#,
            lx + 14.0,
            escape(label),
            vals.len()
        );
        for (b, &c) in counts[i].iter().enumerate() {
            if c == 0 {
                continue;
            }
            let h = c as f64 / peak * plot_h;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.8"/>"#,
                LEFT + b as f64 * bin_w + i as f64 * bar_w,
                TOP + plot_h - h,
                bar_w,
                h
            );
        }
    }
    let base = TOP + plot_h;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}">{lo:.3}</text>"#, base + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.3}</text>"#,
        LEFT + plot_w,
        base + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{peak}</text>"#,
        LEFT - 4.0,
        TOP + 4.0
    );
    if let Some((label, at)) = marker.filter(|(_, v)| v.is_finite()) {
        let x = x_of(at.clamp(lo, hi));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{base}" stroke="black" stroke-dasharray="4 3"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{} {at:.3}</text>"#,
            x + 3.0,
            TOP + 12.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One histogram of P and N pool scores for a metric.
pub fn faithfulness_plot(r: &MetaEvalResult, meta: &ReportMeta) -> String {
    histogram_svg(
        &format!("{}: faithfulness AUC {:.3}", r.metric_key, r.faithfulness),
        &[("P", &r.p_scores), ("N", &r.n_scores)],
        Some(("threshold", r.threshold)),
        meta,
    )
}

/// Writes the requested formats under `dir`; plots go to `dir/plots/`.
pub fn emit_report(results: &Results, formats: &[ReportFormat], dir: &Path, meta: &ReportMeta) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
        Ok(())
    };
    let header = format!("# {}\n", meta.comment());
    for &format in formats {
        match (format, results) {
            (ReportFormat::Json, Results::Eval { name, reports }) => {
                put(format!("{name}.json"), eval_report_json(reports, meta)?)?
            }
            (ReportFormat::Json, Results::MetaEval(rs)) => put(
                "meta_eval.json".into(),
                pretty(&json!({ "results": rs, "_meta": meta }))?,
            )?,
            (ReportFormat::Json, Results::Leaderboard(rows)) => put(
                "leaderboard.json".into(),
                pretty(&json!({ "rows": rows, "_meta": meta }))?,
            )?,
            (ReportFormat::Table, Results::Eval { name, reports }) => {
                put(format!("{name}.txt"), header.clone() + &eval_table(reports))?
            }
            (ReportFormat::Table, Results::MetaEval(rs)) => {
                put("meta_eval.txt".into(), header.clone() + &meta_eval_table(rs))?
            }
            (ReportFormat::Table, Results::Leaderboard(rows)) => {
                put("leaderboard.txt".into(), header.clone() + &render_table(rows))?
            }
            (ReportFormat::Plots, Results::MetaEval(rs)) => {
                for r in rs {
                    put(format!("plots/{}.svg", r.metric_key), faithfulness_plot(r, meta))?;
                }
            }
            (ReportFormat::Plots, Results::Eval { name, reports }) => {
                for r in reports.iter().filter(|r| !r.value_by_index.is_empty()) {
                    let vals = r.values();
                    let svg = histogram_svg(
                        &format!("{} on {}", r.metric_key, r.dataset_id),
                        &[(name.as_str(), &vals)],
                        Some(("mean", r.agg_value)),
                        meta,
                    );
                    put(format!("plots/{name}_{}.svg", r.metric_key), svg)?;
                }
            }
            (ReportFormat::Plots, Results::Leaderboard(_)) => {}
        }
    }
    Ok(written)
}
