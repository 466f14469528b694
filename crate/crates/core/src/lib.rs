//! Stage-0 candidate generation toolkit.
//!
//! Builds a document-ordered block-max index and an impact-ordered
//! quantized index over the same corpus, traverses them with WAND/BMW and
//! JASS, labels queries against reference rankings with MED-RBP, trains
//! tree-ensemble predictors for depth, budget and latency, and routes each
//! query to the traversal that keeps both candidate depth and tail latency
//! in check.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod daat;
pub mod desk;
pub mod error;
pub mod features;
pub mod index;
pub mod labels;
pub mod learn;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod queries;
pub mod router;
pub mod saat;
pub mod text;
pub mod timing;
pub mod topk;

pub use error::{Error, Result};
pub use index::{build_index, quantize, DocId, Index, IndexConfig, TermId};
pub use metrics::{Judgments, RankedList};
pub use topk::{Hit, TraversalReport};
