//! Pre-retrieval query features.
//!
//! Layout (schema `tailcut-features-v1`), 147 values:
//!
//! * `f000..f143`: for each similarity in [`Similarity::ALL`] order, for each
//!   list statistic in [`ScoreSummary::STATS`] order, the query-level
//!   aggregates max, min, mean and sum over the query's in-vocabulary terms
//!   (`index = sim * 24 + stat * 4 + agg`).
//! * `f144`: number of query terms (out-of-vocabulary terms included).
//! * `f145`: sum of document frequencies of in-vocabulary terms.
//! * `f146`: minimum document frequency of in-vocabulary terms.
//!
//! Query terms form a bag: a repeated term is aggregated once per
//! occurrence. Out-of-vocabulary terms are left out of every aggregate.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::similarity::Similarity;
use crate::index::{Index, ScoreSummary, Stat, TermStats};
use crate::text::tokenize;

pub const SCHEMA_VERSION: &str = "tailcut-features-v1";
pub const NUM_FEATURES: usize = 147;
const AGGREGATORS: [&str; 4] = ["max", "min", "mean", "sum"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub query_id: String,
    pub values: Vec<f64>,
    pub schema_version: String,
}

/// CSV column names `f000..f146`.
pub fn column_names() -> Vec<String> {
    (0..NUM_FEATURES).map(|i| format!("f{i:03}")).collect()
}

/// Human-readable meaning of feature `i`, e.g. `bm25.geo_mean.max`.
pub fn describe(i: usize) -> String {
    match i {
        144 => "query.terms".into(),
        145 => "query.sum_df".into(),
        146 => "query.min_df".into(),
        _ if i < 144 => {
            let sim = Similarity::ALL[i / 24];
            let stat = ScoreSummary::STATS[(i % 24) / 4];
            let stat = match stat {
                Stat::Max => "max",
                Stat::Mean => "mean",
                Stat::GeoMean => "geo_mean",
                Stat::HarmonicMean => "harmonic_mean",
                Stat::Median => "median",
                Stat::Variance => "variance",
            };
            format!("{}.{}.{}", sim.name(), stat, AGGREGATORS[i % 4])
        }
        _ => panic!("feature index {i} out of range"),
    }
}

/// Aggregate per-term statistics into the feature layout.
pub fn assemble(query_id: &str, term_count: usize, stats: &[&TermStats]) -> Result<FeatureVector> {
    if stats.is_empty() {
        return Err(Error::Unroutable);
    }
    let mut values = Vec::with_capacity(NUM_FEATURES);
    let n = stats.len() as f64;
    for s in 0..Similarity::ALL.len() {
        for st in ScoreSummary::STATS {
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            let mut sum = 0.0;
            for t in stats {
                let v = t.summaries[s].get(st);
                max = max.max(v);
                min = min.min(v);
                sum += v;
            }
            values.extend([max, min, sum / n, sum]);
        }
    }
    values.push(term_count as f64);
    values.push(stats.iter().map(|t| t.doc_freq as f64).sum());
    values.push(stats.iter().map(|t| t.doc_freq).min().unwrap() as f64);
    debug_assert_eq!(values.len(), NUM_FEATURES);
    Ok(FeatureVector {
        query_id: query_id.to_string(),
        values,
        schema_version: SCHEMA_VERSION.to_string(),
    })
}

/// Extract the feature vector of a query. Errors with [`Error::Unroutable`]
/// when no query term is in the vocabulary.
pub fn extract(index: &Index, query_id: &str, text: &str) -> Result<FeatureVector> {
    // Sorted so the aggregates do not depend on term order.
    let mut tokens = tokenize(text);
    tokens.sort_unstable();
    let stats: Vec<&TermStats> = tokens.iter().filter_map(|t| index.term_stats(t)).collect();
    assemble(query_id, tokens.len(), &stats)
}

pub fn write_csv(path: &Path, rows: &[FeatureVector]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["qid".to_string()];
    header.extend(column_names());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.query_id.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    let expected: Vec<String> = std::iter::once("qid".to_string()).chain(column_names()).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: format!("header with {} columns", header.len()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
        out.push(FeatureVector {
            query_id: rec[0].to_string(),
            values,
            schema_version: SCHEMA_VERSION.to_string(),
        });
    }
    Ok(out)
}
