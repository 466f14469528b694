//! Query sets as `qid<TAB>text` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
        }
    }
}

pub fn parse_queries(text: &str, path: &Path) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, q) = line.split_once('\t').ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected qid<TAB>query".into(),
        })?;
        out.push(Query::new(id.trim(), q.trim()));
    }
    Ok(out)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_queries(&text, path)
}

pub fn format_queries(queries: &[Query]) -> String {
    let mut out = String::new();
    for q in queries {
        writeln!(out, "{}\t{}", q.id, q.text).unwrap();
    }
    out
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<()> {
    fs::write(path, format_queries(queries)).map_err(|e| Error::io(path, e))
}
