//! Seeded synthetic test collection: a topical Zipf corpus, a query set,
//! a reference run from a noisy topic-aware scorer, and graded qrels.
//!
//! The reference scorer mixes normalized BM25 with the document's affinity
//! to the query topic, so some reference documents sit deep in the BM25
//! ranking. That is what gives per-query depth labels their long tail.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::daat::daat_exhaustive;
use crate::error::{Error, Result};
use crate::index::{Index, IndexConfig};
use crate::metrics::trec::{format_qrels, write_run};
use crate::metrics::RankedList;
use crate::queries::{write_queries, Query};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub docs: usize,
    pub queries: usize,
    pub vocab: usize,
    pub topics: usize,
    pub topic_words: usize,
    pub mean_doc_len: f64,
    pub reference_depth: usize,
    pub single_term_frac: f64,
    pub frequent_term_frac: f64,
    pub seed: u64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            docs: 10_000,
            queries: 500,
            vocab: 6_000,
            topics: 60,
            topic_words: 80,
            mean_doc_len: 120.0,
            reference_depth: 100,
            single_term_frac: 0.08,
            frequent_term_frac: 0.3,
            seed: 7,
        }
    }
}

pub struct Desk {
    pub docs: Vec<(String, String)>,
    pub queries: Vec<Query>,
    pub reference: BTreeMap<String, RankedList>,
    pub qrels: Vec<(String, String, u32)>,
    pub index: Index,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "po", "si", "de", "fu", "go", "hi", "ba", "ve", "zo", "xi",
];

/// Distinct pronounceable token for each id (at least two syllables, so
/// every word survives tokenization unchanged).
pub fn word(id: usize) -> String {
    let mut digits = Vec::new();
    let mut v = id;
    loop {
        digits.push(v % 16);
        v /= 16;
        if v == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    digits.iter().rev().map(|&d| SYLLABLES[d]).collect()
}

struct Topic {
    words: Vec<usize>,
    zipf: Zipf<f64>,
}

impl Topic {
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.words[self.zipf.sample(rng) as usize - 1]
    }
}

fn zipf(n: usize, s: f64) -> Zipf<f64> {
    Zipf::new(n as f64, s).expect("valid zipf parameters")
}

/// Generate the collection and build its index with `index_config`.
pub fn generate(cfg: &DeskConfig, index_config: IndexConfig) -> Result<Desk> {
    if cfg.docs == 0 || cfg.queries == 0 || cfg.vocab < 300 || cfg.topics == 0 {
        return Err(Error::Parameter("desk corpus needs docs, queries, topics and a vocabulary of 300+".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background = zipf(cfg.vocab, 1.05);
    let topics: Vec<Topic> = (0..cfg.topics)
        .map(|_| {
            // topical words come from the mid/low frequency range
            let words = sample(&mut rng, cfg.vocab - 200, cfg.topic_words)
                .into_iter()
                .map(|w| w + 200)
                .collect();
            Topic {
                words,
                zipf: zipf(cfg.topic_words, 0.8),
            }
        })
        .collect();

    let sigma: f64 = 0.6;
    let lengths = LogNormal::new(cfg.mean_doc_len.ln() - sigma * sigma / 2.0, sigma).unwrap();
    let mut docs = Vec::with_capacity(cfg.docs);
    let mut affinity: Vec<Vec<(usize, f64)>> = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let len = (lengths.sample(&mut rng) as usize).clamp(8, 1500);
        let t1 = rng.random_range(0..cfg.topics);
        let t2 = rng.random_bool(0.3).then(|| rng.random_range(0..cfg.topics));
        let lambda = rng.random_range(0.05..0.6);
        let mut counts = [0usize; 2];
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let w = if rng.random_bool(lambda) {
                match t2 {
                    Some(t2) if rng.random_bool(0.3) => {
                        counts[1] += 1;
                        topics[t2].draw(&mut rng)
                    }
                    _ => {
                        counts[0] += 1;
                        topics[t1].draw(&mut rng)
                    }
                }
            } else {
                background.sample(&mut rng) as usize - 1
            };
            words.push(word(w));
        }
        let mut aff = vec![(t1, counts[0] as f64 / len as f64)];
        if let Some(t2) = t2 {
            aff.push((t2, counts[1] as f64 / len as f64));
        }
        affinity.push(aff);
        docs.push((format!("D{i:05}"), words.join(" ")));
    }
    let index = Index::from_documents(docs.iter().map(|(a, b)| (a.as_str(), b.as_str())), index_config)?;

    let lengths_q = [2usize, 2, 3, 3, 3, 4, 4, 5];
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut queries = Vec::with_capacity(cfg.queries);
    let mut reference = BTreeMap::new();
    let mut qrels = Vec::new();
    let mut attempts = 0;
    while queries.len() < cfg.queries {
        attempts += 1;
        if attempts > cfg.queries * 20 {
            return Err(Error::Parameter("could not generate enough matching queries".into()));
        }
        let topic = rng.random_range(0..cfg.topics);
        let n = if rng.random_bool(cfg.single_term_frac) {
            1
        } else {
            lengths_q[rng.random_range(0..lengths_q.len())]
        };
        let mut terms: Vec<usize> = Vec::with_capacity(n);
        while terms.len() < n {
            let w = topics[topic].draw(&mut rng);
            if !terms.contains(&w) {
                terms.push(w);
            }
        }
        if n > 1 && rng.random_bool(cfg.frequent_term_frac) {
            terms[n - 1] = rng.random_range(0..40);
        }
        let text = terms.iter().map(|&w| word(w)).collect::<Vec<_>>().join(" ");
        let ids = index.resolve_query(&text);
        if ids.is_empty() {
            continue;
        }
        let qid = (queries.len() + 1).to_string();

        let (hits, _) = daat_exhaustive(&index, &ids, index.num_docs() as usize)?;
        let top = hits[0].score;
        let beta = rng.random_range(0.2..1.2);
        let mut scored: Vec<(f64, u32, f64)> = hits
            .iter()
            .map(|h| {
                let aff = affinity[h.doc as usize]
                    .iter()
                    .filter(|(t, _)| *t == topic)
                    .map(|(_, a)| *a)
                    .sum::<f64>();
                let s = h.score / top + beta * aff + 0.05 * noise.sample(&mut rng);
                (s, h.doc, aff)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let depth = cfg.reference_depth.min(scored.len());
        let items = scored[..depth]
            .iter()
            .map(|(s, d, _)| (index.external_id(*d).to_string(), (s * 1e6).round() / 1e6))
            .collect();
        reference.insert(
            qid.clone(),
            RankedList {
                query_id: qid.clone(),
                items,
            },
        );
        for (rank, (_, d, aff)) in scored.iter().take(30).enumerate() {
            let g = if *aff > 0.4 && rank < 20 {
                2
            } else if *aff > 0.15 {
                1
            } else {
                0
            };
            qrels.push((qid.clone(), index.external_id(*d).to_string(), g));
        }
        for _ in 0..10.min(scored.len().saturating_sub(30)) {
            let (_, d, aff) = scored[rng.random_range(30..scored.len())];
            qrels.push((qid.clone(), index.external_id(d).to_string(), u32::from(aff > 0.3)));
        }
        queries.push(Query::new(qid, text));
    }
    qrels.sort();
    qrels.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    Ok(Desk {
        docs,
        queries,
        reference,
        qrels,
        index,
    })
}

impl Desk {
    /// Write `corpus.jsonl`, `queries.tsv`, `reference.run` and `qrels.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("corpus.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (id, text) in &self.docs {
            let line = serde_json::json!({ "id": id, "text": text });
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_queries(&dir.join("queries.tsv"), &self.queries)?;
        write_run(&dir.join("reference.run"), self.reference.values(), "desk-ref")?;
        let p = dir.join("qrels.txt");
        fs::write(&p, format_qrels(&self.qrels)).map_err(|e| Error::io(&p, e))
    }
}
