//! Text, CSV and JSON renderings of candidate lists and tuning results.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::graph::NetworkGraph;
use crate::harness::wire;
use crate::partition::PartitionPoint;
use crate::tuner::TuneResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected text, csv or json)")),
        }
    }
}

#[derive(Debug, Serialize)]
struct CandidateRow {
    point: String,
    merged_tail: Vec<String>,
    transmit: String,
    upload_bytes: usize,
    edge_params: usize,
}

fn candidate_rows(net: &NetworkGraph, points: &[PartitionPoint]) -> Vec<CandidateRow> {
    points
        .iter()
        .map(|p| {
            let edge_params = crate::partition::edge_set(net, p)
                .map(|mask| {
                    net.info()
                        .iter()
                        .zip(mask)
                        .filter(|(_, e)| *e)
                        .map(|(i, _)| i.param_count())
                        .sum()
                })
                .unwrap_or(0);
            CandidateRow {
                point: p.layer.clone(),
                merged_tail: p.merged_tail.clone(),
                transmit: p.transmit_summary(),
                upload_bytes: wire::message_len(&p.transmit),
                edge_params,
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_candidates(net: &NetworkGraph, points: &[PartitionPoint], format: Format) -> String {
    let rows = candidate_rows(net, points);
    let mut out = String::new();
    match format {
        Format::Json => {
            out = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
        }
        Format::Csv => {
            out.push_str("point,merged_tail,transmit,upload_bytes,edge_params\n");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&r.point),
                    csv_field(&r.merged_tail.join(";")),
                    csv_field(&r.transmit),
                    r.upload_bytes,
                    r.edge_params
                );
            }
        }
        Format::Text => {
            let tail_w = rows.iter().map(|r| r.merged_tail.join("+").len()).max().unwrap_or(0).max(11);
            let name_w = rows.iter().map(|r| r.point.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(
                out,
                "{:<name_w$}  {:<tail_w$}  {:<18}  {:>12}  {:>12}",
                "point", "merged tail", "transmit", "upload B", "edge params"
            );
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{:<name_w$}  {:<tail_w$}  {:<18}  {:>12}  {:>12}",
                    r.point,
                    r.merged_tail.join("+"),
                    r.transmit,
                    r.upload_bytes,
                    r.edge_params
                );
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    point: &'a str,
    merged_tail: &'a [String],
    edge_ms: f64,
    upload_ms: f64,
    cloud_ms: f64,
    total_ms: f64,
    upload_bytes: usize,
    edge_model_kb: f64,
    storage_reduction_pct: f64,
    accuracy: Option<f64>,
    fastest: bool,
    best: bool,
}

#[derive(Debug, Serialize)]
struct ResultDoc<'a> {
    network: &'a str,
    uplink_bytes_per_s: f64,
    fixed_rtt_ms: f64,
    objective: String,
    fastest: &'a str,
    best: &'a str,
    infeasible: bool,
    baseline_cloud_only_ms: f64,
    speedup: f64,
    rows: Vec<ResultRow<'a>>,
    /// Full result, so the document can be read back with [`parse_result`].
    result: &'a TuneResult,
}

fn result_rows(r: &TuneResult) -> Vec<ResultRow<'_>> {
    r.evaluations
        .iter()
        .enumerate()
        .map(|(i, e)| ResultRow {
            point: &e.point.layer,
            merged_tail: &e.point.merged_tail,
            edge_ms: e.cost.edge_ms,
            upload_ms: e.cost.upload_ms,
            cloud_ms: e.cost.cloud_ms,
            total_ms: e.cost.total_ms,
            upload_bytes: e.cost.upload_bytes,
            edge_model_kb: e.cost.edge_model_bytes as f64 / 1024.0,
            storage_reduction_pct: e.storage_reduction * 100.0,
            accuracy: e.accuracy,
            fastest: i == r.fastest,
            best: i == r.best,
        })
        .collect()
}

const BAR_WIDTH: usize = 40;

/// `e` for edge, `u` for upload, `c` for cloud, scaled to the slowest row.
fn stacked_bar(edge: f64, upload: f64, cloud: f64, max_total: f64) -> String {
    if max_total <= 0.0 {
        return String::new();
    }
    let cells = |v: f64| ((v / max_total) * BAR_WIDTH as f64).round() as usize;
    let (e, u) = (cells(edge), cells(edge + upload));
    let t = cells(edge + upload + cloud);
    format!("{}{}{}", "e".repeat(e), "u".repeat(u.saturating_sub(e)), "c".repeat(t.saturating_sub(u)))
}

/// Reads back a JSON document written by [`render_result`].
pub fn parse_result(json: &str) -> Result<TuneResult, String> {
    #[derive(serde::Deserialize)]
    struct Doc {
        result: TuneResult,
    }
    let doc: Doc = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let r = doc.result;
    let n = r.evaluations.len();
    if n == 0 || r.fastest >= n || r.best >= n {
        return Err(format!("{n} rows but rows {} and {} are marked", r.fastest, r.best));
    }
    Ok(r)
}

pub fn render_result(r: &TuneResult, format: Format) -> String {
    let rows = result_rows(r);
    let mut out = String::new();
    match format {
        Format::Json => {
            let doc = ResultDoc {
                network: &r.network,
                uplink_bytes_per_s: r.environment.uplink_bytes_per_s,
                fixed_rtt_ms: r.environment.fixed_rtt_ms,
                objective: r.objective.to_string(),
                fastest: &r.fastest().point.layer,
                best: &r.best().point.layer,
                infeasible: r.infeasible,
                baseline_cloud_only_ms: r.baseline_cloud_only_ms,
                speedup: r.speedup,
                rows,
                result: r,
            };
            out = serde_json::to_string_pretty(&doc).expect("result serializes") + "\n";
        }
        Format::Csv => {
            out.push_str(
                "point,edge_ms,upload_ms,cloud_ms,total_ms,upload_bytes,edge_model_kb,storage_reduction_pct,accuracy,fastest,best\n",
            );
            for row in &rows {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{:.6},{},{:.3},{:.4},{},{},{}",
                    csv_field(row.point),
                    row.edge_ms,
                    row.upload_ms,
                    row.cloud_ms,
                    row.total_ms,
                    row.upload_bytes,
                    row.edge_model_kb,
                    row.storage_reduction_pct,
                    row.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default(),
                    row.fastest as u8,
                    row.best as u8
                );
            }
        }
        Format::Text => {
            let _ = writeln!(
                out,
                "{}  uplink {:.0} B/s  rtt {} ms  objective {}",
                r.network, r.environment.uplink_bytes_per_s, r.environment.fixed_rtt_ms, r.objective
            );
            let name_w = rows.iter().map(|x| x.point.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>8}  {:>6}  {:<2}  bar (e=edge u=upload c=cloud)",
                "point", "edge ms", "upload ms", "cloud ms", "total ms", "upload B", "edge KB", "storage", "acc", ""
            );
            let max_total = rows.iter().map(|x| x.total_ms).fold(0.0, f64::max);
            for row in &rows {
                let mark = format!(
                    "{}{}",
                    if row.fastest { "F" } else { "" },
                    if row.best { "B" } else { "" }
                );
                let _ = writeln!(
                    out,
                    "{:<name_w$}  {:>10.3}  {:>10.3}  {:>10.3}  {:>10.3}  {:>10}  {:>10.1}  {:>7.2}%  {:>6}  {:<2}  {}",
                    row.point,
                    row.edge_ms,
                    row.upload_ms,
                    row.cloud_ms,
                    row.total_ms,
                    row.upload_bytes,
                    row.edge_model_kb,
                    row.storage_reduction_pct,
                    row.accuracy.map(|a| format!("{:.2}", a)).unwrap_or_else(|| "-".into()),
                    mark,
                    stacked_bar(row.edge_ms, row.upload_ms, row.cloud_ms, max_total)
                );
            }
            let _ = writeln!(
                out,
                "fastest: {} ({:.3} ms, speed-up {:.2}x over cloud-only {:.3} ms)",
                r.fastest().point.layer,
                r.fastest().cost.total_ms,
                r.speedup,
                r.baseline_cloud_only_ms
            );
            let _ = writeln!(
                out,
                "best:    {} ({} bytes uploaded){}",
                r.best().point.layer,
                r.best().cost.upload_bytes,
                if r.infeasible { ", budget infeasible, fell back to fastest" } else { "" }
            );
        }
    }
    out
}
