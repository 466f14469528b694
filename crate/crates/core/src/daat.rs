//! Document-at-a-time disjunctive top-k: exhaustive, WAND and Block-Max WAND.
//!
//! `theta` scales the heap threshold when deciding whether a document may
//! enter the top-k. At `theta == 1.0` WAND and BMW are rank-safe. Scores of
//! a document are always summed in query-slot order so every traversal
//! produces bit-identical totals.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::index::{DocId, Index, PostingsList, TermId};
use crate::topk::{Hit, TopK, TraversalReport};

const END: DocId = DocId::MAX;

/// Relative slack on upper-bound comparisons. Bounds are summed in a
/// different order than the exact score, so a bound equal to the score can
/// round one ulp below it.
const BOUND_SLACK: f64 = 1e-9;

#[inline]
fn may_beat(bound: f64, threshold: f64) -> bool {
    bound * (1.0 + BOUND_SLACK) > threshold
}

struct Cursor<'a> {
    list: &'a PostingsList,
    block_size: usize,
    pos: usize,
    touched: u64,
    touched_blocks: u64,
    last_block: usize,
}

impl<'a> Cursor<'a> {
    fn new(list: &'a PostingsList, block_size: usize) -> Self {
        let mut c = Cursor {
            list,
            block_size,
            pos: 0,
            touched: 0,
            touched_blocks: 0,
            last_block: usize::MAX,
        };
        c.touch();
        c
    }

    #[inline]
    fn doc(&self) -> DocId {
        self.list.docs.get(self.pos).copied().unwrap_or(END)
    }

    #[inline]
    fn touch(&mut self) {
        if self.pos < self.list.docs.len() {
            self.touched += 1;
            let b = self.pos / self.block_size;
            if b != self.last_block {
                self.touched_blocks += 1;
                self.last_block = b;
            }
        }
    }

    fn next(&mut self) {
        if self.pos < self.list.docs.len() {
            self.pos += 1;
            self.touch();
        }
    }

    /// Move to the first posting with doc >= target, jumping whole blocks
    /// via their `last_doc` without reading their postings.
    fn seek(&mut self, target: DocId) {
        if self.doc() >= target {
            return;
        }
        let cur_block = self.pos / self.block_size;
        let blocks = &self.list.blocks;
        let b = if blocks[cur_block].last_doc >= target {
            cur_block
        } else {
            cur_block + 1 + blocks[cur_block + 1..].partition_point(|m| m.last_doc < target)
        };
        if b >= blocks.len() {
            self.pos = self.list.docs.len();
            return;
        }
        if b != cur_block {
            self.pos = b * self.block_size;
        } else {
            self.pos += 1;
        }
        self.touch();
        while self.list.docs[self.pos] < target {
            self.pos += 1;
            self.touch();
        }
    }

    /// Block covering `target` without moving: (block max, block last doc).
    /// A list that ends before `target` contributes nothing and does not
    /// bound the skip.
    fn shallow(&self, target: DocId) -> (f64, DocId) {
        let cur_block = self.pos.min(self.list.docs.len().saturating_sub(1)) / self.block_size;
        let blocks = &self.list.blocks;
        let b = cur_block + blocks[cur_block..].partition_point(|m| m.last_doc < target);
        match blocks.get(b) {
            Some(m) => (m.max_score, m.last_doc),
            None => (0.0, END),
        }
    }
}

fn validate(k: usize, theta: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::Parameter(format!("theta must be >= 1.0, got {theta}")));
    }
    Ok(())
}

fn cursors<'a>(index: &'a Index, terms: &[TermId]) -> Vec<Cursor<'a>> {
    let bs = index.config().block_size;
    terms
        .iter()
        .map(|&t| Cursor::new(&index.term(t).postings, bs))
        .collect()
}

fn finish(cursors: &[Cursor<'_>], docs_scored: u64, started: Instant) -> TraversalReport {
    TraversalReport {
        docs_scored,
        postings_touched: cursors.iter().map(|c| c.touched).sum(),
        blocks_skipped: cursors
            .iter()
            .map(|c| c.list.blocks.len() as u64 - c.touched_blocks)
            .sum(),
        wall_time_us: started.elapsed().as_micros() as u64,
    }
}

/// Sum contributions of all cursors sitting on `doc`, in slot order.
#[inline]
fn score_doc(index: &Index, cursors: &[Cursor<'_>], doc: DocId) -> f64 {
    let mut s = 0.0;
    for c in cursors {
        if c.doc() == doc {
            s += index.posting_score(c.list, c.pos);
        }
    }
    s
}

/// Score every document containing a query term. The rank-safe reference.
pub fn daat_exhaustive(index: &Index, terms: &[TermId], k: usize) -> Result<(Vec<Hit>, TraversalReport)> {
    validate(k, 1.0)?;
    let started = Instant::now();
    let mut cs = cursors(index, terms);
    let mut top = TopK::new(k);
    let mut scored = 0u64;
    loop {
        let doc = cs.iter().map(|c| c.doc()).min().unwrap_or(END);
        if doc == END {
            break;
        }
        let score = score_doc(index, &cs, doc);
        scored += 1;
        top.push(Hit { doc, score });
        for c in cs.iter_mut().filter(|c| c.doc() == doc) {
            c.next();
        }
    }
    let report = finish(&cs, scored, started);
    Ok((top.into_sorted(), report))
}

/// Cursor order by current doc; ties by slot keep it deterministic.
fn sort_order(order: &mut Vec<usize>, cs: &[Cursor<'_>]) {
    order.sort_by_key(|&i| (cs[i].doc(), i));
    while order.last().is_some_and(|&i| cs[i].doc() == END) {
        order.pop();
    }
}

/// Smallest prefix of `order` whose list upper bounds may beat `threshold`.
fn find_pivot(order: &[usize], cs: &[Cursor<'_>], threshold: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (i, &c) in order.iter().enumerate() {
        acc += cs[c].list.max_score;
        if may_beat(acc, threshold) {
            return Some(i);
        }
    }
    None
}

/// WAND with aggression `theta`.
pub fn wand(index: &Index, terms: &[TermId], k: usize, theta: f64) -> Result<(Vec<Hit>, TraversalReport)> {
    validate(k, theta)?;
    let started = Instant::now();
    let mut cs = cursors(index, terms);
    let mut order: Vec<usize> = (0..cs.len()).collect();
    let mut top = TopK::new(k);
    let mut scored = 0u64;
    loop {
        sort_order(&mut order, &cs);
        if order.is_empty() {
            break;
        }
        let Some(p) = find_pivot(&order, &cs, theta * top.threshold()) else {
            break;
        };
        let pivot_doc = cs[order[p]].doc();
        if cs[order[0]].doc() == pivot_doc {
            let score = score_doc(index, &cs, pivot_doc);
            scored += 1;
            top.push(Hit { doc: pivot_doc, score });
            for c in cs.iter_mut().filter(|c| c.doc() == pivot_doc) {
                c.next();
            }
        } else {
            for &i in &order[..p] {
                cs[i].seek(pivot_doc);
            }
        }
    }
    let report = finish(&cs, scored, started);
    Ok((top.into_sorted(), report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmwParams {
    pub theta: f64,
    /// Apply `theta` to the block-level check as well as pivot selection.
    pub theta_on_blocks: bool,
}

impl BmwParams {
    pub fn new(theta: f64) -> Self {
        BmwParams {
            theta,
            theta_on_blocks: true,
        }
    }
}

/// Block-Max WAND with aggression `theta` (applied to both checks).
pub fn bmw(index: &Index, terms: &[TermId], k: usize, theta: f64) -> Result<(Vec<Hit>, TraversalReport)> {
    bmw_with(index, terms, k, BmwParams::new(theta))
}

pub fn bmw_with(index: &Index, terms: &[TermId], k: usize, params: BmwParams) -> Result<(Vec<Hit>, TraversalReport)> {
    validate(k, params.theta)?;
    let started = Instant::now();
    let mut cs = cursors(index, terms);
    let mut order: Vec<usize> = (0..cs.len()).collect();
    let mut top = TopK::new(k);
    let mut scored = 0u64;
    loop {
        sort_order(&mut order, &cs);
        if order.is_empty() {
            break;
        }
        let threshold = top.threshold();
        let Some(mut p) = find_pivot(&order, &cs, params.theta * threshold) else {
            break;
        };
        let pivot_doc = cs[order[p]].doc();
        while p + 1 < order.len() && cs[order[p + 1]].doc() == pivot_doc {
            p += 1;
        }

        let mut block_bound = 0.0;
        let mut skip_to = order.get(p + 1).map_or(END, |&i| cs[i].doc());
        for &i in &order[..=p] {
            let (max, last) = cs[i].shallow(pivot_doc);
            block_bound += max;
            skip_to = skip_to.min(last.saturating_add(1));
        }
        let block_threshold = if params.theta_on_blocks {
            params.theta * threshold
        } else {
            threshold
        };

        if may_beat(block_bound, block_threshold) {
            if cs[order[0]].doc() == pivot_doc {
                let score = score_doc(index, &cs, pivot_doc);
                scored += 1;
                top.push(Hit { doc: pivot_doc, score });
                for c in cs.iter_mut().filter(|c| c.doc() == pivot_doc) {
                    c.next();
                }
            } else {
                for &i in &order[..p] {
                    cs[i].seek(pivot_doc);
                }
            }
        } else {
            // No document in [pivot_doc, skip_to) can enter the heap.
            debug_assert!(skip_to > pivot_doc);
            for &i in &order[..=p] {
                cs[i].seek(skip_to);
            }
        }
    }
    let report = finish(&cs, scored, started);
    Ok((top.into_sorted(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::IndexConfig;

    fn tiny() -> Index {
        Index::from_documents([("d0", "a b"), ("d1", "b b c"), ("d2", "c")], IndexConfig::default()).unwrap()
    }

    fn ids(idx: &Index, q: &str) -> Vec<TermId> {
        idx.resolve_query(q)
    }

    #[test]
    fn single_term_returns_whole_list_ranked() {
        let idx = tiny();
        let (hits, rep) = daat_exhaustive(&idx, &ids(&idx, "b"), 10).unwrap();
        assert_eq!(hits.iter().map(|h| h.doc).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(rep.postings_touched, 2);
        assert_eq!(rep.docs_scored, 2);
    }

    #[test]
    fn k1_picks_bm25_argmax() {
        // "b c": doc1 holds both terms (tf b=2, c=1), docs 0 and 2 one term each.
        let idx = tiny();
        let (hits, _) = daat_exhaustive(&idx, &ids(&idx, "b c"), 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc, 1);
    }

    #[test]
    fn repeated_term_doubles_contribution() {
        let idx = tiny();
        let (one, _) = daat_exhaustive(&idx, &ids(&idx, "b"), 10).unwrap();
        let (two, _) = daat_exhaustive(&idx, &ids(&idx, "b b"), 10).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert_eq!(a.doc, b.doc);
            assert_eq!(b.score, 2.0 * a.score);
        }
    }

    #[test]
    fn empty_query_is_empty_result() {
        let idx = tiny();
        let (hits, rep) = wand(&idx, &[], 5, 1.0).unwrap();
        assert!(hits.is_empty());
        assert_eq!(rep.postings_touched, 0);
    }

    #[test]
    fn parameter_errors() {
        let idx = tiny();
        let q = ids(&idx, "b");
        assert!(matches!(wand(&idx, &q, 3, 0.9), Err(Error::Parameter(_))));
        assert!(matches!(bmw(&idx, &q, 3, 0.5), Err(Error::Parameter(_))));
        assert!(matches!(daat_exhaustive(&idx, &q, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn k_beyond_universe_returns_everything_without_skipping() {
        let idx = tiny();
        let q = ids(&idx, "a b c");
        let (ex, _) = daat_exhaustive(&idx, &q, 100).unwrap();
        let (bm, rep) = bmw(&idx, &q, 100, 1.0).unwrap();
        assert_eq!(ex, bm);
        assert_eq!(bm.len(), 3);
        assert_eq!(rep.blocks_skipped, 0);
        assert_eq!(rep.postings_touched, 5);
    }

    fn dominated_corpus() -> Index {
        // "hot" appears in a few short documents with high tf; "cold" is in
        // every document once, so its U_t cannot beat the heap threshold
        // once the hot documents fill it.
        let mut docs = Vec::new();
        for i in 0..400 {
            let text = if i < 5 { "hot hot hot cold".to_string() } else { format!("cold filler{i} x y z w") };
            docs.push((format!("d{i}"), text));
        }
        let cfg = IndexConfig {
            block_size: 16,
            ..IndexConfig::default()
        };
        Index::from_documents(docs, cfg).unwrap()
    }

    #[test]
    fn dominated_term_is_skipped() {
        let idx = dominated_corpus();
        let q = ids(&idx, "hot cold");
        let (ex, ex_rep) = daat_exhaustive(&idx, &q, 3).unwrap();
        let (w, w_rep) = wand(&idx, &q, 3, 1.0).unwrap();
        assert_eq!(ex, w);
        assert!(w_rep.blocks_skipped > 0);
        assert!(w_rep.postings_touched < ex_rep.postings_touched);
    }

    #[test]
    fn block_maxima_let_bmw_touch_fewer_postings() {
        // Term "t" has one strong block (short docs, tf 4) early and long weak
        // blocks after; "u" is a weak filler term everywhere. The U_t of "t"
        // keeps WAND scanning its weak postings, BMW skips them per block.
        let mut docs = Vec::new();
        for i in 0..640 {
            let text = if i < 8 {
                "t t t t u".to_string()
            } else if i % 2 == 0 {
                format!("t u pad{i} pad pad pad pad pad pad pad pad pad")
            } else {
                format!("u pad{i} pad pad")
            };
            docs.push((format!("d{i}"), text));
        }
        let cfg = IndexConfig {
            block_size: 8,
            ..IndexConfig::default()
        };
        let idx = Index::from_documents(docs, cfg).unwrap();
        let q = ids(&idx, "t u");
        let (ex, _) = daat_exhaustive(&idx, &q, 5).unwrap();
        let (w, w_rep) = wand(&idx, &q, 5, 1.0).unwrap();
        let (b, b_rep) = bmw(&idx, &q, 5, 1.0).unwrap();
        assert_eq!(ex, w);
        assert_eq!(ex, b);
        assert!(b_rep.postings_touched < w_rep.postings_touched, "{b_rep:?} vs {w_rep:?}");
    }
}
