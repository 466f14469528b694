//! Response-time measurement.
//!
//! Wall-clock time depends on the machine and its load, which makes
//! anything trained or reported from it non-reproducible. The default
//! clock is therefore a linear cost model over the deterministic traversal
//! counters; the wall clock is available wherever timings are taken.

use serde::{Deserialize, Serialize};

use crate::topk::TraversalReport;

/// Linear cost model: fixed overhead plus per-posting, per-scored-document
/// and per-skipped-block costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub base_us: f64,
    pub posting_ns: f64,
    pub doc_ns: f64,
    pub block_skip_ns: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            base_us: 20.0,
            posting_ns: 4.0,
            doc_ns: 25.0,
            block_skip_ns: 2.0,
        }
    }
}

impl CostModel {
    pub fn millis(&self, r: &TraversalReport) -> f64 {
        (self.base_us * 1e3
            + self.posting_ns * r.postings_touched as f64
            + self.doc_ns * r.docs_scored as f64
            + self.block_skip_ns * r.blocks_skipped as f64)
            / 1e6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Clock {
    /// Time derived from traversal counters; bit-reproducible.
    Model(CostModel),
    /// Measured elapsed time of the traversal.
    Wall,
}

impl Default for Clock {
    fn default() -> Self {
        Clock::Model(CostModel::default())
    }
}

impl Clock {
    /// Milliseconds charged for one traversal.
    pub fn millis(&self, r: &TraversalReport) -> f64 {
        match self {
            Clock::Model(m) => m.millis(r),
            Clock::Wall => r.wall_time_us as f64 / 1e3,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Clock::Model(_))
    }

    /// Parse `model` or `wall`.
    pub fn parse(s: &str) -> Option<Clock> {
        match s {
            "model" => Some(Clock::default()),
            "wall" => Some(Clock::Wall),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_clock_is_linear_in_counters() {
        let m = CostModel {
            base_us: 1.0,
            posting_ns: 10.0,
            doc_ns: 100.0,
            block_skip_ns: 1.0,
        };
        let r = TraversalReport {
            docs_scored: 10,
            postings_touched: 1000,
            blocks_skipped: 5,
            wall_time_us: 999_999,
        };
        assert!((m.millis(&r) - (1000.0 + 10_000.0 + 1000.0 + 5.0) / 1e6).abs() < 1e-15);
        assert_eq!(Clock::Wall.millis(&r), 999.999);
        assert!(Clock::parse("model").unwrap().is_deterministic());
        assert!(Clock::parse("bogus").is_none());
    }
}
