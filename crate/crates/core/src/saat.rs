//! Score-at-a-time anytime retrieval over impact-ordered postings.
//!
//! Segments of all query terms are processed in globally decreasing impact
//! order. Processing stops before the first segment that would push the
//! number of postings scored past the budget `rho`, so
//! `postings_touched <= rho` always holds.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::index::{DocId, ImpactSegment, Index, TermId};
use crate::topk::{Hit, TraversalReport};

/// Budget meaning "no limit".
pub const UNLIMITED: u64 = u64::MAX;

/// Dense per-document accumulators, reset between queries by bumping an
/// epoch instead of zeroing.
#[derive(Debug, Clone)]
pub struct AccumulatorTable {
    values: Vec<u32>,
    stamps: Vec<u32>,
    epoch: u32,
    touched: Vec<DocId>,
}

impl AccumulatorTable {
    pub fn new(num_docs: usize) -> Self {
        AccumulatorTable {
            values: vec![0; num_docs],
            stamps: vec![0; num_docs],
            epoch: 0,
            touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.touched.clear();
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn add(&mut self, doc: DocId, impact: u32) {
        let d = doc as usize;
        if self.stamps[d] != self.epoch {
            self.stamps[d] = self.epoch;
            self.values[d] = 0;
            self.touched.push(doc);
        }
        self.values[d] += impact;
    }

    /// Current accumulated impact of `doc` for the running query.
    pub fn get(&self, doc: DocId) -> u32 {
        let d = doc as usize;
        if self.stamps[d] == self.epoch {
            self.values[d]
        } else {
            0
        }
    }

    /// Documents with a non-zero accumulator, in first-touch order.
    pub fn touched(&self) -> &[DocId] {
        &self.touched
    }

    fn top_k(&self, k: usize) -> Vec<Hit> {
        let mut docs = self.touched.clone();
        let key = |d: &DocId| (std::cmp::Reverse(self.values[*d as usize]), *d);
        if docs.len() > k {
            docs.select_nth_unstable_by_key(k, key);
            docs.truncate(k);
        }
        docs.sort_unstable_by_key(key);
        docs.into_iter()
            .map(|d| Hit {
                doc: d,
                score: self.values[d as usize] as f64,
            })
            .collect()
    }
}

/// One (term, segment) unit in processing order.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRef<'a> {
    pub slot: usize,
    pub term: TermId,
    pub segment: &'a ImpactSegment,
}

/// Processing order for a query: impact descending, then lower document
/// frequency, then term string, then query slot.
pub fn segment_order<'a>(index: &'a Index, terms: &[TermId]) -> Vec<SegmentRef<'a>> {
    let mut units: Vec<SegmentRef<'a>> = terms
        .iter()
        .enumerate()
        .flat_map(|(slot, &t)| {
            index.term(t).impacts.segments.iter().map(move |s| SegmentRef {
                slot,
                term: t,
                segment: s,
            })
        })
        .collect();
    units.sort_by(|a, b| {
        let ea = index.term(a.term);
        let eb = index.term(b.term);
        b.segment
            .impact
            .cmp(&a.segment.impact)
            .then(ea.stats.doc_freq.cmp(&eb.stats.doc_freq))
            .then(ea.term.cmp(&eb.term))
            .then(a.slot.cmp(&b.slot))
    });
    units
}

/// Cumulative posting counts after each segment in processing order; the
/// distinct budgets at which the output of `jass` can change.
pub fn segment_boundaries(index: &Index, terms: &[TermId]) -> Vec<u64> {
    let mut total = 0u64;
    segment_order(index, terms)
        .iter()
        .map(|u| {
            total += u.segment.docs.len() as u64;
            total
        })
        .collect()
}

/// Total postings across the query's impact lists (duplicates counted).
pub fn query_postings(index: &Index, terms: &[TermId]) -> u64 {
    terms.iter().map(|&t| index.term(t).stats.doc_freq as u64).sum()
}

fn validate(k: usize, rho: u64) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if rho == 0 {
        return Err(Error::Parameter("rho must be at least 1".into()));
    }
    Ok(())
}

/// JASS traversal using a caller-owned accumulator table.
pub fn jass_with(
    index: &Index,
    terms: &[TermId],
    k: usize,
    rho: u64,
    acc: &mut AccumulatorTable,
) -> Result<(Vec<Hit>, TraversalReport)> {
    validate(k, rho)?;
    let started = Instant::now();
    acc.reset();
    let mut touched = 0u64;
    for unit in segment_order(index, terms) {
        let len = unit.segment.docs.len() as u64;
        if touched + len > rho {
            break;
        }
        let impact = u32::from(unit.segment.impact);
        for &d in &unit.segment.docs {
            acc.add(d, impact);
        }
        touched += len;
    }
    let hits = acc.top_k(k);
    let report = TraversalReport {
        docs_scored: acc.touched().len() as u64,
        postings_touched: touched,
        blocks_skipped: 0,
        wall_time_us: started.elapsed().as_micros() as u64,
    };
    Ok((hits, report))
}

/// Anytime JASS with postings budget `rho`.
pub fn jass(index: &Index, terms: &[TermId], k: usize, rho: u64) -> Result<(Vec<Hit>, TraversalReport)> {
    let mut acc = AccumulatorTable::new(index.num_docs() as usize);
    jass_with(index, terms, k, rho, &mut acc)
}

/// JASS with the budget set to every posting of the query.
pub fn jass_exhaustive(index: &Index, terms: &[TermId], k: usize) -> Result<(Vec<Hit>, TraversalReport)> {
    let rho = query_postings(index, terms).max(1);
    jass(index, terms, k, rho)
}

/// Single-term shortcut: the first `k` postings of the impact list, at
/// most `rho` of them.
pub fn impact_prefix(index: &Index, term: TermId, k: usize, rho: u64) -> Result<(Vec<Hit>, TraversalReport)> {
    validate(k, rho)?;
    let started = Instant::now();
    let take = (k as u64).min(rho) as usize;
    let hits: Vec<Hit> = index
        .term(term)
        .impacts
        .segments
        .iter()
        .flat_map(|s| s.docs.iter().map(move |&d| Hit {
            doc: d,
            score: f64::from(s.impact),
        }))
        .take(take)
        .collect();
    let report = TraversalReport {
        docs_scored: hits.len() as u64,
        postings_touched: hits.len() as u64,
        blocks_skipped: 0,
        wall_time_us: started.elapsed().as_micros() as u64,
    };
    Ok((hits, report))
}
