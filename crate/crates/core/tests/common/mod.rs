#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailcut::{Index, IndexConfig, TermId};

/// Random corpus with at most `max_docs` documents over at most
/// `max_terms` vocabulary words, skewed so some lists are long.
pub fn random_corpus(seed: u64, max_docs: usize, max_terms: usize) -> Index {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_docs = rng.random_range(1..=max_docs);
    let n_terms = rng.random_range(2..=max_terms);
    let block_size = [2usize, 4, 8, 16, 64][rng.random_range(0..5)];
    let docs: Vec<(String, String)> = (0..n_docs)
        .map(|i| {
            let len = rng.random_range(1..=12);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    // squared uniform skews toward low term ids
                    let u: f64 = rng.random();
                    format!("w{}", (u * u * n_terms as f64) as usize)
                })
                .collect();
            (format!("doc{i}"), words.join(" "))
        })
        .collect();
    let cfg = IndexConfig {
        block_size,
        ..IndexConfig::default()
    };
    Index::from_documents(docs, cfg).unwrap()
}

pub fn random_query(rng: &mut ChaCha8Rng, index: &Index) -> Vec<TermId> {
    let len = rng.random_range(1..=5);
    (0..len)
        .map(|_| rng.random_range(0..index.num_terms() as TermId))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
