//! Effectiveness measures: RBP, MED-RBP, NDCG@k, ERR@k, set overlap and
//! TOST equivalence testing.

pub mod trec;

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A rank-ordered list of (external doc id, score) for one query.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, docs: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let items = docs.into_iter().map(|d| (d.into(), 0.0)).collect();
        RankedList {
            query_id: query_id.into(),
            items,
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(d, _)| d.as_str())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// First `k` items.
    pub fn truncated(&self, k: usize) -> RankedList {
        RankedList {
            query_id: self.query_id.clone(),
            items: self.items.iter().take(k).cloned().collect(),
        }
    }
}

/// Graded relevance judgments keyed by query then document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Judgments {
    by_query: HashMap<String, HashMap<String, u32>>,
    max_grade: u32,
}

impl Judgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc: &str, grade: u32) {
        self.max_grade = self.max_grade.max(grade);
        self.by_query
            .entry(query_id.to_string())
            .or_default()
            .insert(doc.to_string(), grade);
    }

    pub fn grade(&self, query_id: &str, doc: &str) -> Option<u32> {
        self.by_query.get(query_id)?.get(doc).copied()
    }

    /// Binary view: `Some(true)` relevant, `Some(false)` judged non-relevant.
    pub fn relevant(&self, query_id: &str, doc: &str) -> Option<bool> {
        self.grade(query_id, doc).map(|g| g > 0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.by_query.get(query_id)
    }

    /// Largest grade anywhere in the judgment set.
    pub fn max_grade(&self) -> u32 {
        self.max_grade
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }
}

fn check_persistence(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("persistence must lie in (0,1), got {p}")))
    }
}

/// RBP weight of 1-based rank `rank`.
#[inline]
pub fn rbp_weight(rank: usize, p: f64) -> f64 {
    (1.0 - p) * p.powi(rank as i32 - 1)
}

/// Rank-biased precision over binary relevance; unjudged counts as 0.
pub fn rbp(list: &RankedList, judgments: &Judgments, p: f64) -> Result<f64> {
    check_persistence(p)?;
    Ok(list
        .doc_ids()
        .enumerate()
        .filter(|(_, d)| judgments.relevant(&list.query_id, d) == Some(true))
        .map(|(i, _)| rbp_weight(i + 1, p))
        .sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MedDirection {
    /// max RBP(reference) - RBP(candidate)
    #[default]
    Directed,
    /// max |RBP(reference) - RBP(candidate)|
    Symmetric,
}

/// Directed MED-RBP over generic ids. `judged(d)` returns the binary
/// relevance of a judged document and `None` for unjudged ones.
pub fn med_rbp_ids<T, F>(reference: &[T], candidate: &[T], p: f64, judged: F) -> f64
where
    T: Eq + Hash,
    F: Fn(&T) -> Option<bool>,
{
    let cand_rank: HashMap<&T, usize> = candidate.iter().enumerate().map(|(i, d)| (d, i + 1)).collect();
    let ref_set: HashSet<&T> = reference.iter().collect();
    let mut total = 0.0;
    for (i, d) in reference.iter().enumerate() {
        let w_ref = rbp_weight(i + 1, p);
        let w_cand = cand_rank.get(d).map_or(0.0, |&r| rbp_weight(r, p));
        let diff = w_ref - w_cand;
        total += match judged(d) {
            Some(true) => diff,
            Some(false) => 0.0,
            None => diff.max(0.0),
        };
    }
    for (i, d) in candidate.iter().enumerate() {
        if !ref_set.contains(d) && judged(d) == Some(true) {
            total -= rbp_weight(i + 1, p);
        }
    }
    total
}

/// Maximized effectiveness difference under RBP between a reference and a
/// candidate list, consistent with any supplied judgments.
pub fn med_rbp(
    reference: &RankedList,
    candidate: &RankedList,
    p: f64,
    judgments: Option<&Judgments>,
) -> Result<f64> {
    med_rbp_with(reference, candidate, p, judgments, MedDirection::Directed)
}

pub fn med_rbp_with(
    reference: &RankedList,
    candidate: &RankedList,
    p: f64,
    judgments: Option<&Judgments>,
    direction: MedDirection,
) -> Result<f64> {
    check_persistence(p)?;
    if reference.query_id != candidate.query_id {
        return Err(Error::Usage(format!(
            "MED between different queries: {} vs {}",
            reference.query_id, candidate.query_id
        )));
    }
    let r: Vec<&str> = reference.doc_ids().collect();
    let c: Vec<&str> = candidate.doc_ids().collect();
    let qid = reference.query_id.as_str();
    let judged = |d: &&str| judgments.and_then(|j| j.relevant(qid, d));
    let forward = med_rbp_ids(&r, &c, p, judged);
    Ok(match direction {
        MedDirection::Directed => forward,
        MedDirection::Symmetric => forward.max(med_rbp_ids(&c, &r, p, judged)),
    })
}

/// The reference order restricted to a candidate pool: what a later stage
/// that reproduces the reference ranking would output if it could only
/// rerank `pool`.
pub fn rerank_pool<T: Eq + Hash + Clone>(reference: &[T], pool: &HashSet<T>) -> Vec<T> {
    reference.iter().filter(|d| pool.contains(*d)).cloned().collect()
}

/// MED-RBP between `reference` and its reranking of a candidate pool,
/// without judgments. Equals the RBP weight of reference documents missing
/// from the pool, so it is non-increasing as the pool grows.
pub fn pool_med_rbp<T: Eq + Hash + Clone>(reference: &[T], pool: &HashSet<T>, p: f64) -> f64 {
    med_rbp_ids(reference, &rerank_pool(reference, pool), p, |_| None)
}

/// A graded metric value; `judged` is false when the query had no
/// judgments at all (the value is then 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Graded {
    pub value: f64,
    pub judged: bool,
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// NDCG with exponential gain and log2 discount.
pub fn ndcg_at(list: &RankedList, judgments: &Judgments, cutoff: usize) -> Graded {
    let Some(qrels) = judgments.for_query(&list.query_id).filter(|q| !q.is_empty()) else {
        return Graded {
            value: 0.0,
            judged: false,
        };
    };
    let dcg: f64 = list
        .doc_ids()
        .take(cutoff)
        .enumerate()
        .map(|(i, d)| gain(qrels.get(d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = qrels.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    Graded {
        value: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        judged: true,
    }
}

/// Expected reciprocal rank, stop probability `(2^g - 1) / 2^g_max` with
/// `g_max` the largest grade in the judgment set.
pub fn err_at(list: &RankedList, judgments: &Judgments, cutoff: usize) -> Graded {
    let Some(qrels) = judgments.for_query(&list.query_id).filter(|q| !q.is_empty()) else {
        return Graded {
            value: 0.0,
            judged: false,
        };
    };
    let norm = 2f64.powi(judgments.max_grade() as i32);
    let mut not_stopped = 1.0;
    let mut err = 0.0;
    for (i, d) in list.doc_ids().take(cutoff).enumerate() {
        let r = gain(qrels.get(d).copied().unwrap_or(0)) / norm;
        err += not_stopped * r / (i + 1) as f64;
        not_stopped *= 1.0 - r;
    }
    Graded {
        value: err,
        judged: true,
    }
}

/// Jaccard overlap of two id sets, in percent.
pub fn overlap_pct<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    100.0 * a.intersection(b).count() as f64 / union as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TostResult {
    pub equivalent: bool,
    /// H0: mean difference <= -epsilon
    pub p_lower: f64,
    /// H0: mean difference >= +epsilon
    pub p_upper: f64,
    pub epsilon: f64,
    pub mean_diff: f64,
}

/// Two one-sided paired t-tests of `a - b` against `±epsilon_fraction·|mean(a)|`.
pub fn tost(a: &[f64], b: &[f64], epsilon_fraction: f64, alpha: f64) -> Result<TostResult> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Parameter("TOST needs at least two pairs".into()));
    }
    let nf = n as f64;
    let mean_a = a.iter().sum::<f64>() / nf;
    let epsilon = epsilon_fraction * mean_a.abs();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0);
    let (p_lower, p_upper) = if var <= 0.0 {
        (
            if mean_diff > -epsilon { 0.0 } else { 1.0 },
            if mean_diff < epsilon { 0.0 } else { 1.0 },
        )
    } else {
        let se = (var / nf).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 1.0).expect("valid degrees of freedom");
        let t_lower = (mean_diff + epsilon) / se;
        let t_upper = (mean_diff - epsilon) / se;
        (1.0 - t.cdf(t_lower), t.cdf(t_upper))
    };
    Ok(TostResult {
        equivalent: p_lower < alpha && p_upper < alpha,
        p_lower,
        p_upper,
        epsilon,
        mean_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn judge(qid: &str, rel: &[(&str, u32)]) -> Judgments {
        let mut j = Judgments::new();
        for (d, g) in rel {
            j.insert(qid, d, *g);
        }
        j
    }

    #[test]
    fn rbp_examples() {
        let j = judge("q", &[("d1", 1), ("d2", 1)]);
        let one = RankedList::new("q", ["d1", "x"]);
        assert!((rbp(&one, &j, 0.95).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(rbp(&RankedList::new("q", ["x", "y"]), &j, 0.95).unwrap(), 0.0);
        let two = RankedList::new("q", ["d1", "d2"]);
        assert_eq!(rbp(&two, &j, 0.5).unwrap(), 0.75);
        assert!(rbp(&two, &j, 1.0).is_err());
    }

    #[test]
    fn med_examples() {
        let a = RankedList::new("q", ["d1", "d2", "d3"]);
        assert_eq!(med_rbp(&a, &a, 0.95, None).unwrap(), 0.0);
        let r = RankedList::new("q", ["d1"]);
        let c = RankedList::new("q", ["d2"]);
        assert_eq!(med_rbp(&r, &c, 0.5, None).unwrap(), 0.5);
        let r = RankedList::new("q", ["d1", "d2"]);
        let c = RankedList::new("q", ["d2", "d1"]);
        assert_eq!(med_rbp(&r, &c, 0.5, None).unwrap(), 0.25);
        assert!(med_rbp(&r, &RankedList::new("other", ["d1"]), 0.5, None).is_err());
    }

    #[test]
    fn med_respects_judgments() {
        let r = RankedList::new("q", ["d1", "d2"]);
        let c = RankedList::new("q", ["d3", "d1"]);
        // d1 judged non-relevant: removes its positive difference.
        let j = judge("q", &[("d1", 0)]);
        let unjudged = med_rbp(&r, &c, 0.5, None).unwrap();
        let judged = med_rbp(&r, &c, 0.5, Some(&j)).unwrap();
        assert_eq!(unjudged, 0.25 + 0.25);
        assert_eq!(judged, 0.25);
        // d3 judged relevant in the candidate only: fixed negative term.
        let j = judge("q", &[("d3", 2)]);
        assert_eq!(med_rbp(&r, &c, 0.5, Some(&j)).unwrap(), 0.5 - 0.5);
    }

    #[test]
    fn symmetric_med_takes_larger_direction() {
        let r = RankedList::new("q", ["d1"]);
        let c = RankedList::new("q", ["d2", "d3"]);
        let fwd = med_rbp(&r, &c, 0.5, None).unwrap();
        let sym = med_rbp_with(&r, &c, 0.5, None, MedDirection::Symmetric).unwrap();
        assert_eq!(fwd, 0.5);
        assert_eq!(sym, 0.75);
    }

    /// Exhaustive maximization over binary assignments of unjudged docs.
    fn brute_med(r: &[u32], c: &[u32], p: f64, fixed: &HashMap<u32, bool>) -> f64 {
        let mut universe: Vec<u32> = r.iter().chain(c).copied().collect();
        universe.sort_unstable();
        universe.dedup();
        let free: Vec<u32> = universe.iter().copied().filter(|d| !fixed.contains_key(d)).collect();
        let rbp_of = |list: &[u32], rel: &dyn Fn(u32) -> bool| -> f64 {
            list.iter()
                .enumerate()
                .filter(|(_, d)| rel(**d))
                .map(|(i, _)| (1.0 - p) * p.powi(i as i32))
                .sum()
        };
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << free.len()) {
            let rel = |d: u32| match fixed.get(&d) {
                Some(&b) => b,
                None => mask >> free.iter().position(|&x| x == d).unwrap() & 1 == 1,
            };
            best = best.max(rbp_of(r, &rel) - rbp_of(c, &rel));
        }
        best
    }

    #[test]
    fn med_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let d = rng.random_range(1..=8u32);
            let p = rng.random_range(0.05..0.99);
            let pick = |rng: &mut ChaCha8Rng| {
                let mut v: Vec<u32> = (0..d).collect();
                let len = rng.random_range(0..=d as usize);
                for i in 0..v.len() {
                    let j = rng.random_range(i..v.len());
                    v.swap(i, j);
                }
                v.truncate(len);
                v
            };
            let r = pick(&mut rng);
            let c = pick(&mut rng);
            let mut fixed = HashMap::new();
            for x in 0..d {
                if rng.random_bool(0.3) {
                    fixed.insert(x, rng.random_bool(0.5));
                }
            }
            let closed = med_rbp_ids(&r, &c, p, |x| fixed.get(x).copied());
            let brute = brute_med(&r, &c, p, &fixed);
            assert!((closed - brute).abs() < 1e-12, "{r:?} {c:?} {closed} {brute}");
        }
    }

    proptest::proptest! {
        #[test]
        fn med_non_increasing_under_prefix_extension(
            r in proptest::collection::vec(0u32..30, 0..15),
            c in proptest::collection::vec(0u32..30, 0..20),
            p in 0.1f64..0.99,
        ) {
            let dedup = |v: Vec<u32>| { let mut s = HashSet::new(); v.into_iter().filter(|x| s.insert(*x)).collect::<Vec<_>>() };
            let r = dedup(r);
            let c = dedup(c);
            let mut last = f64::INFINITY;
            for k in 0..=c.len() {
                let m = med_rbp_ids(&r, &c[..k], p, |_| None);
                proptest::prop_assert!(m <= last + 1e-15);
                proptest::prop_assert!(m >= 0.0);
                last = m;
            }
            proptest::prop_assert!(med_rbp_ids(&r, &r, p, |_| None).abs() < 1e-15);
        }

        #[test]
        fn rbp_monotone_in_relevance(
            rels in proptest::collection::vec(proptest::bool::ANY, 1..20),
            flip in 0usize..20,
            p in 0.05f64..0.99,
        ) {
            let docs: Vec<String> = (0..rels.len()).map(|i| format!("d{i}")).collect();
            let list = RankedList::new("q", docs.clone());
            let mut j = Judgments::new();
            for (d, r) in docs.iter().zip(&rels) { j.insert("q", d, u32::from(*r)); }
            let before = rbp(&list, &j, p).unwrap();
            let flip = flip % rels.len();
            j.insert("q", &docs[flip], 1);
            let after = rbp(&list, &j, p).unwrap();
            proptest::prop_assert!(after >= before);
            proptest::prop_assert!((0.0..1.0).contains(&after));
        }
    }

    #[test]
    fn pool_med_is_missing_reference_mass() {
        let r = ["a", "b", "c", "d"];
        let pool: HashSet<&str> = ["d", "b", "x"].into_iter().collect();
        assert_eq!(rerank_pool(&r, &pool), vec!["b", "d"]);
        let expect = rbp_weight(1, 0.95) + rbp_weight(3, 0.95);
        assert!((pool_med_rbp(&r, &pool, 0.95) - expect).abs() < 1e-15);
        let all: HashSet<&str> = r.into_iter().collect();
        assert_eq!(pool_med_rbp(&r, &all, 0.95), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let j = judge("q", &[("a", 2), ("b", 1), ("c", 0)]);
        let perfect = RankedList::new("q", ["a", "b", "c"]);
        assert!((ndcg_at(&perfect, &j, 10).value - 1.0).abs() < 1e-12);
        let swapped = RankedList::new("q", ["b", "a", "c"]);
        assert!(ndcg_at(&swapped, &j, 10).value < ndcg_at(&perfect, &j, 10).value);
        let unjudged = ndcg_at(&RankedList::new("z", ["a"]), &j, 10);
        assert_eq!(unjudged, Graded { value: 0.0, judged: false });
    }

    #[test]
    fn err_examples() {
        let j = judge("q", &[("a", 2), ("b", 3)]);
        let one = RankedList::new("q", ["a", "x"]);
        assert!((err_at(&one, &j, 10).value - 3.0 / 8.0).abs() < 1e-12);
        assert!(!err_at(&RankedList::new("z", ["a"]), &j, 10).judged);
    }

    #[test]
    fn overlap_examples() {
        let a: HashSet<u32> = [1, 2].into();
        let b: HashSet<u32> = [2, 3].into();
        assert_eq!(overlap_pct(&a, &a), 100.0);
        assert_eq!(overlap_pct(&a, &[7].into()), 0.0);
        assert!((overlap_pct(&a, &b) - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(overlap_pct::<u32>(&HashSet::new(), &HashSet::new()), 0.0);
    }

    #[test]
    fn tost_examples() {
        let a = vec![0.3, 0.5, 0.4, 0.6];
        let r = tost(&a, &a, 0.1, 0.05).unwrap();
        assert!(r.equivalent);
        let b: Vec<f64> = a.iter().map(|x| x - 0.2 * 0.45).collect();
        let r = tost(&a, &b, 0.1, 0.05).unwrap();
        assert!(!r.equivalent);
        assert!(tost(&a, &a[..3], 0.1, 0.05).is_err());
    }

    #[test]
    fn tost_accepts_small_noise() {
        // mean(a) = 1 so epsilon = 0.1; differences ~ N(0, 0.01).
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut accepted = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..50).map(|_| 1.0).collect();
            let b: Vec<f64> = a.iter().map(|x| x - noise.sample(&mut rng)).collect();
            if tost(&a, &b, 0.1, 0.05).unwrap().equivalent {
                accepted += 1;
            }
        }
        assert_eq!(accepted, 200);
    }
}
