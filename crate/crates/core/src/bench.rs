//! Evaluation reports: latency percentiles, tail-query classification and
//! tail-set overlap between systems.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::overlap_pct;
use crate::numeric::{mean, nearest_rank_sorted, rmse};
use crate::router::LogRow;

/// Nearest-rank summary of a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub p99_9: f64,
    pub p99_99: f64,
    pub max: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Percentiles {
        if values.is_empty() {
            return Percentiles::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Percentiles {
            mean: mean(&v),
            median: nearest_rank_sorted(&v, 0.5),
            p95: nearest_rank_sorted(&v, 0.95),
            p99: nearest_rank_sorted(&v, 0.99),
            p99_9: nearest_rank_sorted(&v, 0.999),
            p99_99: nearest_rank_sorted(&v, 0.9999),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub system: String,
    pub queries: usize,
    pub time_ms: Percentiles,
    pub postings: Percentiles,
    pub pct_over_budget: f64,
    pub mean_k: f64,
    pub median_k: f64,
}

/// Per-system latency summary. Unroutable queries did no work and are
/// left out.
pub fn percentile_report(system: &str, log: &[LogRow], budget_ms: f64) -> Result<LatencyReport> {
    let rows: Vec<&LogRow> = log.iter().filter(|r| r.isn.is_some()).collect();
    if rows.is_empty() {
        return Err(Error::Parameter(format!("no routed queries in log for {system}")));
    }
    let times: Vec<f64> = rows.iter().map(|r| r.time_ms).collect();
    let postings: Vec<f64> = rows.iter().map(|r| r.postings_touched as f64).collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.k_used as f64).collect();
    let over = times.iter().filter(|&&t| t > budget_ms).count();
    Ok(LatencyReport {
        system: system.to_string(),
        queries: rows.len(),
        time_ms: Percentiles::of(&times),
        postings: Percentiles::of(&postings),
        pct_over_budget: 100.0 * over as f64 / rows.len() as f64,
        mean_k: mean(&ks),
        median_k: Percentiles::of(&ks).median,
    })
}

const LATENCY_HEADER: [&str; 14] = [
    "system",
    "queries",
    "mean_ms",
    "median_ms",
    "p95_ms",
    "p99_ms",
    "p99.9_ms",
    "p99.99_ms",
    "pct_over_budget",
    "mean_k",
    "median_k",
    "mean_postings",
    "p99_postings",
    "max_postings",
];

fn latency_fields(r: &LatencyReport) -> Vec<String> {
    let t = &r.time_ms;
    vec![
        r.system.clone(),
        r.queries.to_string(),
        t.mean.to_string(),
        t.median.to_string(),
        t.p95.to_string(),
        t.p99.to_string(),
        t.p99_9.to_string(),
        t.p99_99.to_string(),
        r.pct_over_budget.to_string(),
        r.mean_k.to_string(),
        r.median_k.to_string(),
        r.postings.mean.to_string(),
        r.postings.p99.to_string(),
        r.postings.max.to_string(),
    ]
}

pub fn write_latency_csv(path: &Path, reports: &[LatencyReport]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(LATENCY_HEADER)?;
    for r in reports {
        w.write_record(latency_fields(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Fixed-width text table.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

pub fn format_latency_table(reports: &[LatencyReport]) -> String {
    let header = ["system", "queries", "mean_ms", "median_ms", "p99_ms", "p99.99_ms", "%>budget", "mean_k", "median_k", "p99_postings"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.system.clone(),
                r.queries.to_string(),
                short(r.time_ms.mean),
                short(r.time_ms.median),
                short(r.time_ms.p99),
                short(r.time_ms.p99_99),
                format!("{:.2}", r.pct_over_budget),
                format!("{:.1}", r.mean_k),
                format!("{:.0}", r.median_k),
                format!("{:.0}", r.postings.p99),
            ]
        })
        .collect();
    format_table(&header, &rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub rmse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Absent when the truth holds a single class.
    pub auc: Option<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mann–Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting half. Uses mid-ranks, O(n log n).
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&o| positive[o]).count() as f64 * mid;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Tail-query classification: truth is positive iff `truth >= threshold`,
/// prediction iff `predicted >= threshold`. RMSE is over the raw values.
pub fn classification_metrics(predicted: &[f64], truth: &[f64], threshold: f64) -> Result<ClassificationReport> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Parameter("prediction and truth must be non-empty and of equal length".into()));
    }
    let actual: Vec<bool> = truth.iter().map(|&t| t >= threshold).collect();
    let guess: Vec<bool> = predicted.iter().map(|&p| p >= threshold).collect();
    let count = |a: bool, g: bool| actual.iter().zip(&guess).filter(|(x, y)| **x == a && **y == g).count();
    let (tp, fp, fneg, tn) = (count(true, true), count(false, true), count(true, false), count(false, false));
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let neg_precision = ratio(tn, tn + fneg);
    let neg_recall = ratio(tn, tn + fp);
    let macro_precision = (precision + neg_precision) / 2.0;
    let macro_recall = (recall + neg_recall) / 2.0;
    Ok(ClassificationReport {
        rmse: rmse(predicted, truth),
        precision,
        recall,
        f1: harmonic(precision, recall),
        macro_precision,
        macro_recall,
        macro_f1: harmonic(macro_precision, macro_recall),
        auc: auc(predicted, &actual),
    })
}

/// Queries at or above the `percentile` time of a log.
pub fn tail_set(log: &[LogRow], percentile: f64) -> HashSet<String> {
    let mut times: Vec<f64> = log.iter().map(|r| r.time_ms).collect();
    if times.is_empty() {
        return HashSet::new();
    }
    times.sort_by(f64::total_cmp);
    let cut = nearest_rank_sorted(&times, percentile);
    log.iter().filter(|r| r.time_ms >= cut).map(|r| r.query_id.clone()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub a: String,
    pub b: String,
    pub overlap_pct: f64,
}

/// Pairwise overlap of the tail-query sets of several systems, including
/// each system with itself.
pub fn overlap_report(logs: &[(String, Vec<LogRow>)], percentile: f64) -> Result<Vec<OverlapEntry>> {
    let sets: Vec<BTreeSet<&str>> = logs
        .iter()
        .map(|(_, l)| l.iter().map(|r| r.query_id.as_str()).collect())
        .collect();
    if let Some(first) = sets.first() {
        if let Some(i) = sets.iter().position(|s| s != first) {
            return Err(Error::Usage(format!(
                "systems {} and {} were run on different query sets",
                logs[0].0, logs[i].0
            )));
        }
    }
    let tails: Vec<HashSet<String>> = logs.iter().map(|(_, l)| tail_set(l, percentile)).collect();
    let mut out = Vec::new();
    for i in 0..logs.len() {
        for j in i..logs.len() {
            out.push(OverlapEntry {
                a: logs[i].0.clone(),
                b: logs[j].0.clone(),
                overlap_pct: overlap_pct(&tails[i], &tails[j]),
            });
        }
    }
    Ok(out)
}
