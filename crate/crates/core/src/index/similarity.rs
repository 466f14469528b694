//! Term-document similarity functions used for index statistics.
//!
//! Only BM25 drives retrieval. The other five exist to populate
//! per-term statistics for feature extraction. All of them are clamped at
//! zero when summarized so that geometric and harmonic means stay defined.

use serde::{Deserialize, Serialize};

/// Similarity functions, in the fixed order used by statistics and features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Bm25,
    TfIdf,
    QlDirichlet,
    BoseEinstein,
    Dph,
    Dfr,
}

impl Similarity {
    pub const ALL: [Similarity; 6] = [
        Similarity::Bm25,
        Similarity::TfIdf,
        Similarity::QlDirichlet,
        Similarity::BoseEinstein,
        Similarity::Dph,
        Similarity::Dfr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Similarity::Bm25 => "bm25",
            Similarity::TfIdf => "tfidf",
            Similarity::QlDirichlet => "ql",
            Similarity::BoseEinstein => "be",
            Similarity::Dph => "dph",
            Similarity::Dfr => "dfr",
        }
    }
}

/// BM25 with Robertson/Lucene-style non-negative idf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Bm25 { k1: 0.9, b: 0.4 }
    }
}

impl Bm25 {
    pub fn idf(&self, doc_freq: u32, num_docs: u32) -> f64 {
        let df = doc_freq as f64;
        (1.0 + (num_docs as f64 - df + 0.5) / (df + 0.5)).ln()
    }

    /// Per-document length normalization `k1 * (1 - b + b * len / avgdl)`.
    pub fn length_norm(&self, doc_len: u32, avg_doc_len: f64) -> f64 {
        self.k1 * (1.0 - self.b + self.b * doc_len as f64 / avg_doc_len)
    }

    /// Contribution of one posting given a precomputed idf and length norm.
    #[inline]
    pub fn term_score(&self, idf: f64, tf: u32, length_norm: f64) -> f64 {
        let tf = tf as f64;
        idf * tf * (self.k1 + 1.0) / (tf + length_norm)
    }
}

/// Collection-level quantities the similarity functions need.
#[derive(Clone, Copy, Debug)]
pub struct CollectionContext {
    pub num_docs: u32,
    pub avg_doc_len: f64,
    pub total_tokens: u64,
    pub bm25: Bm25,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct TermContext {
    pub doc_freq: u32,
    pub coll_freq: u64,
}

impl CollectionContext {
    /// Raw (unclamped) score of a posting under `sim`.
    pub fn score(&self, sim: Similarity, term: TermContext, tf: u32, doc_len: u32) -> f64 {
        let n = self.num_docs as f64;
        let tf_f = tf as f64;
        let len = doc_len as f64;
        let df = term.doc_freq as f64;
        let cf = term.coll_freq as f64;
        match sim {
            Similarity::Bm25 => {
                let idf = self.bm25.idf(term.doc_freq, self.num_docs);
                let norm = self.bm25.length_norm(doc_len, self.avg_doc_len);
                self.bm25.term_score(idf, tf, norm)
            }
            Similarity::TfIdf => (1.0 + tf_f.ln()) * (1.0 + n / df).ln(),
            Similarity::QlDirichlet => {
                let p_c = cf / self.total_tokens as f64;
                (1.0 + tf_f / (self.mu * p_c)).ln() + (self.mu / (len + self.mu)).ln()
            }
            Similarity::BoseEinstein => {
                // Geometric Bose-Einstein model, Laplace after-effect, normalization 2.
                let tfn = tf_f * (1.0 + self.avg_doc_len / len).log2();
                let lambda = cf / n;
                ((1.0 + lambda).log2() + tfn * ((1.0 + lambda) / lambda).log2()) / (tfn + 1.0)
            }
            Similarity::Dph => {
                let f = tf_f / len;
                if f >= 1.0 {
                    return 0.0;
                }
                let norm = (1.0 - f) * (1.0 - f) / (tf_f + 1.0);
                norm * (tf_f * ((tf_f * self.avg_doc_len / len) * (n / cf)).log2()
                    + 0.5 * (2.0 * std::f64::consts::PI * tf_f * (1.0 - f)).log2())
            }
            Similarity::Dfr => {
                // PL2: Poisson model, Laplace after-effect, normalization 2.
                let tfn = tf_f * (1.0 + self.avg_doc_len / len).log2();
                let lambda = cf / n;
                (tfn * (tfn / lambda).log2()
                    + (lambda - tfn) * std::f64::consts::LOG2_E
                    + 0.5 * (2.0 * std::f64::consts::PI * tfn).log2())
                    / (tfn + 1.0)
            }
        }
    }

    /// Score clamped to be non-negative and finite, as used for statistics.
    pub fn stat_score(&self, sim: Similarity, term: TermContext, tf: u32, doc_len: u32) -> f64 {
        let s = self.score(sim, term, tf, doc_len);
        if s.is_finite() && s > 0.0 {
            s
        } else {
            0.0
        }
    }
}
