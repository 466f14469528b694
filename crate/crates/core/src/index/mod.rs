//! Corpus ingestion and the twin index organizations.
//!
//! Every term gets a document-ordered postings list with per-block score
//! maxima (for WAND/BMW) and an impact-ordered list of quantized segments
//! (for score-at-a-time traversal), plus score statistics for features.
//!
//! DAAT traversal scores postings with real-valued BM25; only the impact
//! view is quantized.

pub mod similarity;
pub mod stats;
mod storage;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;
use similarity::{Bm25, CollectionContext, Similarity, TermContext};
pub use stats::{ScoreSummary, Stat, TermStats};

pub type DocId = u32;
pub type TermId = u32;

pub const MIN_BITS: u32 = 4;
pub const MAX_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub block_size: usize,
    pub bits: u32,
    pub bm25: Bm25,
    /// Dirichlet smoothing for the query-likelihood statistics.
    pub mu: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            block_size: 64,
            bits: 8,
            bm25: Bm25::default(),
            mu: 2500.0,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return Err(Error::Config(format!(
                "quantization bits {} outside [{MIN_BITS}, {MAX_BITS}]",
                self.bits
            )));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        if !(self.bm25.k1 > 0.0) || !(0.0..=1.0).contains(&self.bm25.b) {
            return Err(Error::Config(format!("bad BM25 parameters {:?}", self.bm25)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("mu must be positive".into()));
        }
        Ok(())
    }

    pub fn max_impact(&self) -> u16 {
        ((1u32 << self.bits) - 1) as u16
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub num_docs: u32,
    pub skipped_docs: u32,
    pub total_tokens: u64,
    pub avg_doc_len: f64,
    pub num_terms: u32,
    pub total_postings: u64,
    /// Global BM25 range used for quantization.
    pub min_score: f64,
    pub max_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub external_id: String,
    pub length: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMeta {
    pub last_doc: DocId,
    pub max_score: f64,
}

/// Document-ordered postings with block-max metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PostingsList {
    pub docs: Vec<DocId>,
    pub freqs: Vec<u32>,
    pub blocks: Vec<BlockMeta>,
    pub idf: f64,
    /// Largest BM25 contribution of any posting in the list.
    pub max_score: f64,
}

impl PostingsList {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpactSegment {
    pub impact: u16,
    pub docs: Vec<DocId>,
}

/// Impact-ordered postings: segments by strictly decreasing impact.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImpactList {
    pub segments: Vec<ImpactSegment>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermEntry {
    pub term: String,
    pub postings: PostingsList,
    pub impacts: ImpactList,
    pub stats: TermStats,
}

/// Immutable twin-view index.
#[derive(Clone, Debug)]
pub struct Index {
    config: IndexConfig,
    collection: CollectionStats,
    docs: Vec<Document>,
    length_norms: Vec<f64>,
    terms: Vec<TermEntry>,
    lookup: HashMap<String, TermId>,
}

/// Map a score into `[1, 2^bits - 1]` by uniform linear quantization.
pub fn quantize(w: f64, w_min: f64, w_max: f64, bits: u32) -> Result<u16> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!("quantization bits {bits} outside [{MIN_BITS}, {MAX_BITS}]")));
    }
    let top = (1u32 << bits) - 1;
    if w_max == w_min {
        if w != w_min {
            return Err(Error::Range {
                value: w,
                min: w_min,
                max: w_max,
            });
        }
        return Ok(top as u16);
    }
    if !(w >= w_min && w <= w_max) {
        return Err(Error::Range {
            value: w,
            min: w_min,
            max: w_max,
        });
    }
    let levels = (top - 1) as f64;
    let q = ((w - w_min) / (w_max - w_min) * levels).floor() as u32 + 1;
    Ok(q.min(top) as u16)
}

#[derive(Debug, Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    #[allow(dead_code)]
    url: Option<String>,
}

/// Read a JSON Lines corpus and build both index views.
pub fn build_index(corpus_path: &Path, config: IndexConfig) -> Result<Index> {
    config.validate()?;
    let file = File::open(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(corpus_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: corpus_path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push((rec.id, rec.text));
    }
    Index::from_documents(docs, config)
}

impl Index {
    /// Build from `(external id, text)` pairs in ingestion order.
    pub fn from_documents<I, S, T>(documents: I, config: IndexConfig) -> Result<Index>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        config.validate()?;
        let mut docs = Vec::new();
        let mut skipped = 0u32;
        let mut total_tokens = 0u64;
        let mut raw: HashMap<String, (Vec<DocId>, Vec<u32>)> = HashMap::new();
        let mut tf: HashMap<String, u32> = HashMap::new();
        for (id, text) in documents {
            let tokens = tokenize(text.as_ref());
            if tokens.is_empty() {
                skipped += 1;
                continue;
            }
            let doc_id = docs.len() as DocId;
            docs.push(Document {
                external_id: id.into(),
                length: tokens.len() as u32,
            });
            total_tokens += tokens.len() as u64;
            tf.clear();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, f) in tf.drain() {
                let e = raw.entry(t).or_default();
                e.0.push(doc_id);
                e.1.push(f);
            }
        }
        let num_docs = docs.len() as u32;
        let avg_doc_len = if num_docs == 0 {
            0.0
        } else {
            total_tokens as f64 / num_docs as f64
        };
        let length_norms: Vec<f64> = docs
            .iter()
            .map(|d| config.bm25.length_norm(d.length, avg_doc_len))
            .collect();

        #[allow(clippy::type_complexity)]
        let mut vocab: Vec<(String, (Vec<DocId>, Vec<u32>))> = raw.into_iter().collect();
        vocab.sort_by(|a, b| a.0.cmp(&b.0));

        let ctx = CollectionContext {
            num_docs,
            avg_doc_len,
            total_tokens,
            bm25: config.bm25,
            mu: config.mu,
        };

        // First pass: BM25 contributions and the global score range.
        let mut scored = Vec::with_capacity(vocab.len());
        let mut min_score = f64::INFINITY;
        let mut max_score = f64::NEG_INFINITY;
        for (term, (pdocs, freqs)) in vocab {
            let idf = config.bm25.idf(pdocs.len() as u32, num_docs);
            let scores: Vec<f64> = pdocs
                .iter()
                .zip(&freqs)
                .map(|(&d, &f)| config.bm25.term_score(idf, f, length_norms[d as usize]))
                .collect();
            for &s in &scores {
                min_score = min_score.min(s);
                max_score = max_score.max(s);
            }
            scored.push((term, pdocs, freqs, idf, scores));
        }
        if scored.is_empty() {
            min_score = 0.0;
            max_score = 0.0;
        }

        let mut terms = Vec::with_capacity(scored.len());
        let mut total_postings = 0u64;
        for (term, pdocs, freqs, idf, scores) in scored {
            total_postings += pdocs.len() as u64;
            let blocks: Vec<BlockMeta> = pdocs
                .chunks(config.block_size)
                .zip(scores.chunks(config.block_size))
                .map(|(d, s)| BlockMeta {
                    last_doc: *d.last().unwrap(),
                    max_score: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
                .collect();
            let list_max = blocks.iter().map(|b| b.max_score).fold(f64::NEG_INFINITY, f64::max);

            let mut by_impact: Vec<(u16, DocId)> = Vec::with_capacity(pdocs.len());
            for (&d, &s) in pdocs.iter().zip(&scores) {
                by_impact.push((quantize(s, min_score, max_score, config.bits)?, d));
            }
            by_impact.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut segments: Vec<ImpactSegment> = Vec::new();
            for (imp, d) in by_impact {
                match segments.last_mut() {
                    Some(seg) if seg.impact == imp => seg.docs.push(d),
                    _ => segments.push(ImpactSegment {
                        impact: imp,
                        docs: vec![d],
                    }),
                }
            }

            let term_ctx = TermContext {
                doc_freq: pdocs.len() as u32,
                coll_freq: freqs.iter().map(|&f| f as u64).sum(),
            };
            let mut buf = Vec::with_capacity(pdocs.len());
            let summaries = Similarity::ALL.map(|sim| {
                buf.clear();
                buf.extend(
                    pdocs
                        .iter()
                        .zip(&freqs)
                        .map(|(&d, &f)| ctx.stat_score(sim, term_ctx, f, docs[d as usize].length)),
                );
                ScoreSummary::from_scores(&buf)
            });

            terms.push(TermEntry {
                term,
                postings: PostingsList {
                    docs: pdocs,
                    freqs,
                    blocks,
                    idf,
                    max_score: list_max,
                },
                impacts: ImpactList { segments },
                stats: TermStats {
                    doc_freq: term_ctx.doc_freq,
                    coll_freq: term_ctx.coll_freq,
                    summaries,
                },
            });
        }

        let collection = CollectionStats {
            num_docs,
            skipped_docs: skipped,
            total_tokens,
            avg_doc_len,
            num_terms: terms.len() as u32,
            total_postings,
            min_score,
            max_score,
        };
        Ok(Self::assemble(config, collection, docs, terms))
    }

    fn assemble(
        config: IndexConfig,
        collection: CollectionStats,
        docs: Vec<Document>,
        terms: Vec<TermEntry>,
    ) -> Index {
        let length_norms = docs
            .iter()
            .map(|d| config.bm25.length_norm(d.length, collection.avg_doc_len))
            .collect();
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.term.clone(), i as TermId))
            .collect();
        Index {
            config,
            collection,
            docs,
            length_norms,
            terms,
            lookup,
        }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn collection(&self) -> &CollectionStats {
        &self.collection
    }

    pub fn num_docs(&self) -> u32 {
        self.collection.num_docs
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn external_id(&self, doc: DocId) -> &str {
        &self.docs[doc as usize].external_id
    }

    pub fn terms(&self) -> &[TermEntry] {
        &self.terms
    }

    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.lookup.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &TermEntry {
        &self.terms[id as usize]
    }

    pub fn entry(&self, term: &str) -> Option<&TermEntry> {
        self.term_id(term).map(|id| self.term(id))
    }

    /// Precomputed statistics; `None` means out of vocabulary.
    pub fn term_stats(&self, term: &str) -> Option<&TermStats> {
        self.entry(term).map(|e| &e.stats)
    }

    /// BM25 length normalization of a document.
    #[inline]
    pub fn length_norm(&self, doc: DocId) -> f64 {
        self.length_norms[doc as usize]
    }

    /// BM25 contribution of posting `pos` in `list`.
    #[inline]
    pub fn posting_score(&self, list: &PostingsList, pos: usize) -> f64 {
        self.config
            .bm25
            .term_score(list.idf, list.freqs[pos], self.length_norms[list.docs[pos] as usize])
    }

    /// Resolve query text into in-vocabulary term ids, keeping duplicates
    /// and dropping out-of-vocabulary tokens.
    pub fn resolve_query(&self, text: &str) -> Vec<TermId> {
        tokenize(text).iter().filter_map(|t| self.term_id(t)).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        storage::save(self, dir)
    }

    pub fn load(dir: &Path) -> Result<Index> {
        storage::load(dir)
    }
}
