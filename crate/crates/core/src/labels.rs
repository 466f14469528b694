//! Ground-truth labels: minimal candidate depth, minimal JASS budget,
//! response times and the tail threshold.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::daat::{bmw, daat_exhaustive};
use crate::error::{Error, Result};
use crate::index::{DocId, Index, TermId};
use crate::learn::TargetKind;
use crate::metrics::{med_rbp_ids, pool_med_rbp, rbp_weight, RankedList};
use crate::numeric::{mean, nearest_rank};
use crate::queries::Query;
use crate::saat::{jass_exhaustive, jass_with, segment_boundaries, AccumulatorTable};
use crate::timing::Clock;
use crate::topk::TraversalReport;

pub const DEFAULT_K_GRID: [usize; 10] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000];

/// How a candidate list is compared with its reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MedMode {
    /// The later stage reranks the candidate pool, so only membership
    /// matters: loss is the reference mass missing from the pool.
    #[default]
    Pool,
    /// Compare the candidate ranking itself against the reference.
    List,
}

impl MedMode {
    fn med<T: Eq + std::hash::Hash + Clone>(self, reference: &[T], candidate: &[T], p: f64) -> f64 {
        match self {
            MedMode::Pool => pool_med_rbp(reference, &candidate.iter().cloned().collect::<HashSet<T>>(), p),
            MedMode::List => med_rbp_ids(reference, candidate, p, |_| None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub epsilon: f64,
    pub persistence: f64,
    pub k_grid: Vec<usize>,
    pub mode: MedMode,
    pub clock: Clock,
    pub repetitions: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            epsilon: 0.001,
            persistence: 0.95,
            k_grid: DEFAULT_K_GRID.to_vec(),
            mode: MedMode::Pool,
            clock: Clock::default(),
            repetitions: 5,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("epsilon must be positive".into()));
        }
        if !(self.persistence > 0.0 && self.persistence < 1.0) {
            return Err(Error::Parameter("persistence must lie in (0,1)".into()));
        }
        if self.k_grid.is_empty() || self.k_grid[0] == 0 || self.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("k grid must be non-empty, positive and strictly ascending".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Parameter("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        *self.k_grid.last().unwrap()
    }
}

/// Pool MED of one reference against every prefix of a first-stage
/// ranking, in O(|reference|) per depth.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthProfile {
    /// Per reference document, in reference order: its 0-based position in
    /// the ranking (`usize::MAX` if absent) and its RBP weight.
    entries: Vec<(usize, f64)>,
}

impl DepthProfile {
    pub fn new(reference: &[&str], ranking: &[&str], p: f64) -> Self {
        let pos: HashMap<&str, usize> = ranking.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let entries = reference
            .iter()
            .enumerate()
            .map(|(i, d)| (pos.get(d).copied().unwrap_or(usize::MAX), rbp_weight(i + 1, p)))
            .collect();
        DepthProfile { entries }
    }

    /// MED of the top-`k` pool; equals `pool_med_rbp` on that prefix.
    pub fn med(&self, k: usize) -> f64 {
        self.entries.iter().filter(|(pos, _)| *pos >= k).map(|(_, w)| w).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KLabel {
    /// `None` when no grid depth reaches epsilon.
    pub k_star: Option<usize>,
    /// MED at `k_star`, or at the deepest grid point when unattainable.
    pub med: f64,
    /// MED at `k_star - 1` (absent for `k_star = 1`).
    pub med_previous: Option<f64>,
}

/// Smallest k whose exhaustive top-k meets epsilon against `reference`:
/// scan the grid, then bisect between the bracketing grid points.
pub fn label_k(index: &Index, terms: &[TermId], reference: &RankedList, cfg: &LabelConfig) -> Result<KLabel> {
    cfg.validate()?;
    if reference.is_empty() {
        return Err(Error::Parameter(format!("empty reference for query {}", reference.query_id)));
    }
    let (hits, _) = daat_exhaustive(index, terms, cfg.max_k())?;
    let ranking: Vec<&str> = hits.iter().map(|h| index.external_id(h.doc)).collect();
    let reference: Vec<&str> = reference.doc_ids().collect();
    let med = |k: usize| cfg.mode.med(&reference, &ranking[..k.min(ranking.len())], cfg.persistence);

    let mut lo = 0;
    let mut hi = None;
    for &g in &cfg.k_grid {
        if med(g) <= cfg.epsilon {
            hi = Some(g);
            break;
        }
        lo = g;
    }
    let Some(mut hi) = hi else {
        return Ok(KLabel {
            k_star: None,
            med: med(cfg.max_k()),
            med_previous: None,
        });
    };
    // invariant: med(lo) > eps (or lo = 0), med(hi) <= eps
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if med(mid) <= cfg.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(KLabel {
        k_star: Some(hi),
        med: med(hi),
        med_previous: (hi > 1).then(|| med(hi - 1)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoLabel {
    pub rho_star: u64,
    pub med: f64,
    /// The next smaller segment boundary and its MED, if any.
    pub previous: Option<(u64, f64)>,
}

/// Smallest segment-boundary budget whose JASS top-`k` meets epsilon
/// against exhaustive JASS top-`k`. The bisection keeps an adjacent pair
/// (failing, passing), so the result is minimal at segment granularity.
pub fn label_rho(index: &Index, terms: &[TermId], k: usize, cfg: &LabelConfig) -> Result<RhoLabel> {
    cfg.validate()?;
    let (exhaustive, _) = jass_exhaustive(index, terms, k)?;
    let reference: Vec<DocId> = exhaustive.iter().map(|h| h.doc).collect();
    let bounds = segment_boundaries(index, terms);
    if bounds.is_empty() {
        return Err(Error::Unroutable);
    }
    let mut acc = AccumulatorTable::new(index.num_docs() as usize);
    let mut med = |i: usize| -> Result<f64> {
        let (hits, _) = jass_with(index, terms, k, bounds[i], &mut acc)?;
        let cand: Vec<DocId> = hits.iter().map(|h| h.doc).collect();
        Ok(cfg.mode.med(&reference, &cand, cfg.persistence))
    };
    let mut lo: isize = -1;
    let mut hi = bounds.len() - 1;
    let mut hi_med = med(hi)?;
    let mut lo_med = f64::NAN;
    while hi as isize - lo > 1 {
        let mid = ((lo + hi as isize) / 2) as usize;
        let m = med(mid)?;
        if m <= cfg.epsilon {
            hi = mid;
            hi_med = m;
        } else {
            lo = mid as isize;
            lo_med = m;
        }
    }
    Ok(RhoLabel {
        rho_star: bounds[hi],
        med: hi_med,
        previous: (lo >= 0).then(|| (bounds[lo as usize], lo_med)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeLabel {
    pub ms: f64,
    pub report: TraversalReport,
}

/// Mean time of `run` over `repetitions`; counters come from the last run.
pub fn time_runs<F>(clock: &Clock, repetitions: usize, mut run: F) -> Result<TimeLabel>
where
    F: FnMut() -> Result<TraversalReport>,
{
    let mut times = Vec::with_capacity(repetitions);
    let mut report = TraversalReport::default();
    for _ in 0..repetitions.max(1) {
        report = run()?;
        times.push(clock.millis(&report));
    }
    Ok(TimeLabel { ms: mean(&times), report })
}

/// Nearest-rank percentile of training times; queries at or above it are
/// tail queries.
pub fn tail_threshold(times: &[f64], percentile: f64) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::Parameter("tail threshold of an empty sample".into()));
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::Parameter(format!("percentile {percentile} outside (0,1]")));
    }
    Ok(nearest_rank(times, percentile))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryLabel {
    pub query_id: String,
    pub k_star: Option<usize>,
    pub med_k: f64,
    pub rho_star: Option<u64>,
    pub med_rho: Option<f64>,
    pub time_ms_bmw: f64,
    pub time_ms_jass: f64,
}

impl QueryLabel {
    pub fn attainable(&self) -> bool {
        self.k_star.is_some()
    }
}

/// Label every multi-term query that has a reference list. Single-term
/// and fully out-of-vocabulary queries are skipped. Times are BMW (θ=1) at
/// `k_star` and JASS at (`k_star`, `rho_star`); unattainable queries are
/// timed at the deepest grid k with exhaustive JASS.
pub fn label_queries(
    index: &Index,
    queries: &[Query],
    references: &HashMap<String, RankedList>,
    cfg: &LabelConfig,
) -> Result<Vec<QueryLabel>> {
    cfg.validate()?;
    let work: Vec<(&Query, Vec<TermId>, &RankedList)> = queries
        .iter()
        .filter_map(|q| {
            let terms = index.resolve_query(&q.text);
            let r = references.get(&q.id)?;
            (terms.len() > 1 && !r.is_empty()).then_some((q, terms, r))
        })
        .collect();
    let search: Vec<(KLabel, Option<RhoLabel>)> = work
        .par_iter()
        .map(|(_, terms, r)| {
            let k = label_k(index, terms, r, cfg)?;
            let rho = k.k_star.map(|ks| label_rho(index, terms, ks, cfg)).transpose()?;
            Ok((k, rho))
        })
        .collect::<Result<_>>()?;
    // Timing runs serially so wall-clock measurements do not contend.
    let mut acc = AccumulatorTable::new(index.num_docs() as usize);
    let mut out = Vec::with_capacity(work.len());
    for ((q, terms, _), (k, rho)) in work.iter().zip(search) {
        let kt = k.k_star.unwrap_or(cfg.max_k());
        let rho_t = rho.map_or(u64::MAX, |r| r.rho_star);
        let t_bmw = time_runs(&cfg.clock, cfg.repetitions, || Ok(bmw(index, terms, kt, 1.0)?.1))?;
        let t_jass = time_runs(&cfg.clock, cfg.repetitions, || Ok(jass_with(index, terms, kt, rho_t, &mut acc)?.1))?;
        out.push(QueryLabel {
            query_id: q.id.clone(),
            k_star: k.k_star,
            med_k: k.med,
            rho_star: rho.map(|r| r.rho_star),
            med_rho: rho.map(|r| r.med),
            time_ms_bmw: t_bmw.ms,
            time_ms_jass: t_jass.ms,
        });
    }
    Ok(out)
}

const HEADER: [&str; 6] = ["qid", "k_star", "rho_star", "time_ms_bmw", "time_ms_jass", "attainable"];

/// Labels CSV; unattainable queries leave `k_star` and `rho_star` empty.
pub fn write_labels(path: &Path, labels: &[QueryLabel]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(HEADER)?;
    for l in labels {
        w.write_record([
            l.query_id.clone(),
            l.k_star.map_or(String::new(), |k| k.to_string()),
            l.rho_star.map_or(String::new(), |r| r.to_string()),
            l.time_ms_bmw.to_string(),
            l.time_ms_jass.to_string(),
            l.attainable().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a labels CSV. MED values are not stored and come back as NaN.
pub fn read_labels(path: &Path) -> Result<Vec<QueryLabel>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::Format(format!("{}: expected header {}", path.display(), HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 2,
            message: m.into(),
        };
        let opt = |s: &str| -> Result<Option<u64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad integer"))
            }
        };
        let float = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad("bad number")) };
        let k_star = opt(&rec[1])?.map(|k| k as usize);
        out.push(QueryLabel {
            query_id: rec[0].to_string(),
            k_star,
            med_k: f64::NAN,
            rho_star: opt(&rec[2])?,
            med_rho: None,
            time_ms_bmw: float(&rec[3])?,
            time_ms_jass: float(&rec[4])?,
        });
    }
    Ok(out)
}

/// Regression targets by query id; unattainable queries are left out of
/// the depth and budget targets.
pub fn targets(labels: &[QueryLabel], kind: TargetKind) -> HashMap<String, f64> {
    labels
        .iter()
        .filter_map(|l| {
            let v = match kind {
                TargetKind::K => l.k_star? as f64,
                TargetKind::Rho => l.rho_star? as f64,
                TargetKind::LogTime => l.time_ms_bmw.max(1e-6).ln(),
                TargetKind::Raw => return None,
            };
            Some((l.query_id.clone(), v))
        })
        .collect()
}
