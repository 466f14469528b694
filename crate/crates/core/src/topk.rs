use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::index::{DocId, Index};
use crate::metrics::RankedList;

/// A scored document.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub doc: DocId,
    pub score: f64,
}

/// Canonical result order: score descending, then doc id ascending.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc))
}

/// Cost accounting for one traversal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalReport {
    pub docs_scored: u64,
    pub postings_touched: u64,
    pub blocks_skipped: u64,
    pub wall_time_us: u64,
}

#[derive(Debug)]
struct Worst(Hit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    // "greater" means ranked lower, so the heap top is the current k-th hit
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Bounded min-heap of the best `k` hits seen so far.
#[derive(Debug)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
    last_threshold: f64,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::new(),
            last_threshold: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Score of the k-th best hit, 0 until the heap is full.
    pub fn threshold(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(0.0, |w| w.0.score)
        } else {
            0.0
        }
    }

    /// Offer a hit; returns true when it entered the heap.
    pub fn push(&mut self, hit: Hit) -> bool {
        if self.k == 0 {
            return false;
        }
        let entered = if !self.is_full() {
            self.heap.push(Worst(hit));
            true
        } else {
            let worst = &self.heap.peek().unwrap().0;
            if rank_order(&hit, worst) == Ordering::Less {
                self.heap.pop();
                self.heap.push(Worst(hit));
                true
            } else {
                false
            }
        };
        let t = self.threshold();
        debug_assert!(t >= self.last_threshold, "heap threshold decreased");
        self.last_threshold = t;
        entered
    }

    pub fn into_sorted(self) -> Vec<Hit> {
        let mut hits: Vec<Hit> = self.heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(rank_order);
        hits
    }
}

/// Convert internal hits into a metrics-level ranked list.
pub fn to_ranked_list(index: &Index, query_id: &str, hits: &[Hit]) -> RankedList {
    RankedList {
        query_id: query_id.to_string(),
        items: hits
            .iter()
            .map(|h| (index.external_id(h.doc).to_string(), h.score))
            .collect(),
    }
}
