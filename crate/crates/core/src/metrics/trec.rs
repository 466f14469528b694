//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid grade`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Judgments, RankedList};
use crate::error::{Error, Result};

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parse a run; lists are ordered by the rank column (score breaks ties).
pub fn parse_run(text: &str, path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let mut rows: BTreeMap<String, Vec<(u64, f64, String)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(malformed(path, i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let rank: u64 = f[3].parse().map_err(|_| malformed(path, i + 1, "bad rank"))?;
        let score: f64 = f[4].parse().map_err(|_| malformed(path, i + 1, "bad score"))?;
        rows.entry(f[0].to_string()).or_default().push((rank, score, f[2].to_string()));
    }
    Ok(rows
        .into_iter()
        .map(|(qid, mut v)| {
            v.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            let mut seen = std::collections::HashSet::new();
            let items = v
                .into_iter()
                .filter(|(_, _, d)| seen.insert(d.clone()))
                .map(|(_, s, d)| (d, s))
                .collect();
            (qid.clone(), RankedList { query_id: qid, items })
        })
        .collect())
}

pub fn read_run(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

pub fn format_run<'a>(lists: impl IntoIterator<Item = &'a RankedList>, tag: &str) -> String {
    let mut out = String::new();
    for l in lists {
        for (i, (d, s)) in l.items.iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", l.query_id, d, i + 1, s, tag).unwrap();
        }
    }
    out
}

pub fn write_run<'a>(path: &Path, lists: impl IntoIterator<Item = &'a RankedList>, tag: &str) -> Result<()> {
    fs::write(path, format_run(lists, tag)).map_err(|e| Error::io(path, e))
}

pub fn parse_qrels(text: &str, path: &Path) -> Result<Judgments> {
    let mut j = Judgments::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(malformed(path, i + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let grade: i64 = f[3].parse().map_err(|_| malformed(path, i + 1, "bad grade"))?;
        j.insert(f[0], f[2], grade.max(0) as u32);
    }
    Ok(j)
}

pub fn read_qrels(path: &Path) -> Result<Judgments> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, path)
}

/// Qrels text with queries and docs in sorted order.
pub fn format_qrels(rows: &[(String, String, u32)]) -> String {
    let mut rows = rows.to_vec();
    rows.sort();
    let mut out = String::new();
    for (q, d, g) in rows {
        writeln!(out, "{q} 0 {d} {g}").unwrap();
    }
    out
}
