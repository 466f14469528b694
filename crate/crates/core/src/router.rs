//! Stage-0 routing: predict per-query depth (and, for the second
//! algorithm, run time) and send the query either to rank-safe BMW or to
//! budgeted JASS.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::daat::bmw;
use crate::error::{Error, Result};
use crate::features::extract;
use crate::index::Index;
use crate::learn::{Predictor, TargetKind};
use crate::metrics::RankedList;
use crate::queries::Query;
use crate::saat::{impact_prefix, jass, UNLIMITED};
use crate::timing::Clock;
use crate::topk::{to_ranked_list, Hit, TraversalReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isn {
    Bmw,
    Jass,
}

impl Isn {
    pub fn name(self) -> &'static str {
        match self {
            Isn::Bmw => "BMW",
            Isn::Jass => "JASS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Route on predicted depth only.
    PredictK,
    /// Route on predicted depth, then on predicted BMW time.
    PredictKAndTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    /// Depth threshold: predicted k strictly above it goes to JASS.
    pub t_k: f64,
    /// Time threshold in ms: predicted time strictly above it goes to JASS.
    pub t_t: f64,
    /// Postings cap for every JASS-routed query.
    pub rho_max: u64,
    /// BMW aggression; 1.0 is rank-safe.
    pub theta: f64,
    /// Optional ascending grid; predicted k is rounded up onto it.
    pub k_grid: Option<Vec<usize>>,
    pub budget_ms: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            t_k: 1000.0,
            t_t: f64::INFINITY,
            rho_max: 10_000_000,
            theta: 1.0,
            k_grid: None,
            budget_ms: 200.0,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho_max < 1 {
            return Err(Error::Config("rho_max must be at least 1".into()));
        }
        if !(self.t_k >= 1.0) {
            return Err(Error::Config("T_k must be at least 1".into()));
        }
        if self.theta < 1.0 {
            return Err(Error::Config("theta must be at least 1".into()));
        }
        Ok(())
    }

    /// `max(1, ceil(P_k))`, snapped up to the grid when one is set (values
    /// past the grid keep the ceiling).
    pub fn k_used(&self, p_k: f64) -> usize {
        let k = if p_k.is_finite() { p_k.ceil().max(1.0).min(u32::MAX as f64) as usize } else { 1 };
        match &self.k_grid {
            Some(g) => g.iter().copied().find(|&v| v >= k).unwrap_or(k),
            None => k,
        }
    }

    /// `min(max(1, ceil(P_ρ)), ρ_max)`.
    pub fn rho_used(&self, p_rho: f64) -> u64 {
        let r = if p_rho.is_nan() { 1.0 } else { p_rho.ceil().max(1.0) };
        if r >= self.rho_max as f64 {
            self.rho_max
        } else {
            r as u64
        }
    }
}

/// The predictors a router consults. Time may be absent for the depth-only
/// algorithm.
#[derive(Clone)]
pub struct Models {
    pub k: Arc<dyn Predictor>,
    pub rho: Arc<dyn Predictor>,
    pub time: Option<Arc<dyn Predictor>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingDecision {
    pub query_id: String,
    pub p_k: Option<f64>,
    pub p_rho: Option<f64>,
    /// Predicted time in ms.
    pub p_t: Option<f64>,
    /// `None` for unroutable queries.
    pub isn: Option<Isn>,
    pub k_used: usize,
    pub rho_used: Option<u64>,
    /// Single-term query answered from the impact-list prefix.
    pub shortcut: bool,
    pub hits: Vec<Hit>,
    pub candidates: RankedList,
    pub report: TraversalReport,
    pub time_ms: f64,
    /// Feature extraction plus model evaluation, wall clock.
    pub predict_us: u64,
}

impl RoutingDecision {
    fn unroutable(query_id: &str) -> Self {
        RoutingDecision {
            query_id: query_id.to_string(),
            p_k: None,
            p_rho: None,
            p_t: None,
            isn: None,
            k_used: 0,
            rho_used: None,
            shortcut: false,
            hits: Vec::new(),
            candidates: RankedList {
                query_id: query_id.to_string(),
                items: Vec::new(),
            },
            report: TraversalReport::default(),
            time_ms: 0.0,
            predict_us: 0,
        }
    }

    pub fn is_unroutable(&self) -> bool {
        self.isn.is_none()
    }
}

/// A configured router; immutable and shareable across threads.
pub struct Router {
    pub config: RouterConfig,
    pub models: Models,
    pub clock: Clock,
}

fn predict_ms(model: &dyn Predictor, f: &crate::features::FeatureVector) -> Result<f64> {
    let v = model.predict(f)?;
    Ok(if model.target() == TargetKind::LogTime { v.exp() } else { v })
}

impl Router {
    pub fn new(config: RouterConfig, models: Models, clock: Clock) -> Result<Router> {
        config.validate()?;
        Ok(Router { config, models, clock })
    }

    pub fn route(&self, alg: Algorithm, index: &Index, query: &Query) -> Result<RoutingDecision> {
        let terms = index.resolve_query(&query.text);
        if terms.is_empty() {
            return Ok(RoutingDecision::unroutable(&query.id));
        }
        let cfg = &self.config;
        let started = Instant::now();
        let f = extract(index, &query.id, &query.text)?;
        let p_k = self.models.k.predict(&f)?;
        let k = cfg.k_used(p_k);
        let mut d = RoutingDecision::unroutable(&query.id);
        d.p_k = Some(p_k);
        d.k_used = k;

        let to_jass = if terms.len() == 1 {
            None
        } else if p_k > cfg.t_k {
            Some(true)
        } else {
            match alg {
                Algorithm::PredictK => Some(false),
                Algorithm::PredictKAndTime => {
                    let model = self
                        .models
                        .time
                        .as_deref()
                        .ok_or_else(|| Error::Config("time-aware routing needs a time model".into()))?;
                    let p_t = predict_ms(model, &f)?;
                    d.p_t = Some(p_t);
                    Some(p_t > cfg.t_t)
                }
            }
        };
        if to_jass == Some(true) {
            let p_rho = self.models.rho.predict(&f)?;
            d.p_rho = Some(p_rho);
            d.rho_used = Some(cfg.rho_used(p_rho));
        }
        d.predict_us = started.elapsed().as_micros() as u64;

        let (hits, report) = match to_jass {
            None => {
                d.shortcut = true;
                d.isn = Some(Isn::Jass);
                d.rho_used = Some(cfg.rho_max);
                impact_prefix(index, terms[0], k, cfg.rho_max)?
            }
            Some(true) => {
                d.isn = Some(Isn::Jass);
                jass(index, &terms, k, d.rho_used.unwrap())?
            }
            Some(false) => {
                d.isn = Some(Isn::Bmw);
                bmw(index, &terms, k, cfg.theta)?
            }
        };
        d.candidates = to_ranked_list(index, &query.id, &hits);
        d.time_ms = self.clock.millis(&report);
        d.hits = hits;
        d.report = report;
        Ok(d)
    }

    /// Route every query in parallel; output order follows `queries`.
    pub fn route_all(&self, alg: Algorithm, index: &Index, queries: &[Query]) -> Result<Vec<RoutingDecision>> {
        queries.par_iter().map(|q| self.route(alg, index, q)).collect()
    }
}

/// A baseline that processes every query with one fixed configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FixedSystem {
    Bmw { theta: f64 },
    Jass { rho: u64 },
}

impl FixedSystem {
    pub fn label(&self) -> String {
        match self {
            FixedSystem::Bmw { theta } => format!("BMW_{theta}"),
            FixedSystem::Jass { rho } if *rho == UNLIMITED => "JASS_exh".to_string(),
            FixedSystem::Jass { rho } => format!("JASS_{rho}"),
        }
    }
}

/// Run one fixed system at depth `k`. No features are extracted.
pub fn run_fixed(system: FixedSystem, k: usize, index: &Index, query: &Query, clock: &Clock) -> Result<RoutingDecision> {
    let terms = index.resolve_query(&query.text);
    let mut d = RoutingDecision::unroutable(&query.id);
    if terms.is_empty() {
        return Ok(d);
    }
    let (hits, report) = match system {
        FixedSystem::Bmw { theta } => {
            d.isn = Some(Isn::Bmw);
            bmw(index, &terms, k, theta)?
        }
        FixedSystem::Jass { rho } => {
            d.isn = Some(Isn::Jass);
            d.rho_used = Some(rho);
            jass(index, &terms, k, rho)?
        }
    };
    d.k_used = k;
    d.candidates = to_ranked_list(index, &query.id, &hits);
    d.time_ms = clock.millis(&report);
    d.hits = hits;
    d.report = report;
    Ok(d)
}

pub fn run_fixed_all(
    system: FixedSystem,
    k: usize,
    index: &Index,
    queries: &[Query],
    clock: &Clock,
) -> Result<Vec<RoutingDecision>> {
    queries.par_iter().map(|q| run_fixed(system, k, index, q, clock)).collect()
}

pub const LOG_HEADER: [&str; 9] = [
    "qid",
    "P_k",
    "P_rho",
    "P_t",
    "isn",
    "k_used",
    "rho_used",
    "postings_touched",
    "time_ms",
];

/// One row of a decision log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub query_id: String,
    pub p_k: Option<f64>,
    pub p_rho: Option<f64>,
    pub p_t: Option<f64>,
    pub isn: Option<Isn>,
    pub k_used: usize,
    pub rho_used: Option<u64>,
    pub postings_touched: u64,
    pub time_ms: f64,
}

impl From<&RoutingDecision> for LogRow {
    fn from(d: &RoutingDecision) -> Self {
        LogRow {
            query_id: d.query_id.clone(),
            p_k: d.p_k,
            p_rho: d.p_rho,
            p_t: d.p_t,
            isn: d.isn,
            k_used: d.k_used,
            rho_used: d.rho_used,
            postings_touched: d.report.postings_touched,
            time_ms: d.time_ms,
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.query_id.clone(),
            opt(r.p_k),
            opt(r.p_rho),
            opt(r.p_t),
            r.isn.map_or("NONE", Isn::name).to_string(),
            r.k_used.to_string(),
            opt(r.rho_used),
            r.postings_touched.to_string(),
            r.time_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(LOG_HEADER) {
        return Err(Error::Format(format!("{}: not a decision log", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Malformed {
            path: path.to_path_buf(),
            line: i + 2,
            message: "bad field".into(),
        };
        fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        out.push(LogRow {
            query_id: rec[0].to_string(),
            p_k: parse_opt(&rec[1]).map_err(|_| bad())?,
            p_rho: parse_opt(&rec[2]).map_err(|_| bad())?,
            p_t: parse_opt(&rec[3]).map_err(|_| bad())?,
            isn: match &rec[4] {
                "BMW" => Some(Isn::Bmw),
                "JASS" => Some(Isn::Jass),
                "NONE" => None,
                _ => return Err(bad()),
            },
            k_used: rec[5].parse().map_err(|_| bad())?,
            rho_used: parse_opt(&rec[6]).map_err(|_| bad())?,
            postings_touched: rec[7].parse().map_err(|_| bad())?,
            time_ms: rec[8].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daat::daat_exhaustive;
    use crate::index::IndexConfig;
    use crate::learn::{ConstantPredictor, TablePredictor};
    use crate::saat::jass_exhaustive;

    fn index() -> Index {
        let docs: Vec<(String, String)> = (0..200)
            .map(|i| (format!("d{i}"), format!("red{} blue{} green{}", " red".repeat(i % 3), " blue".repeat(i % 5), " x".repeat(i % 2))))
            .collect();
        Index::from_documents(docs, IndexConfig { block_size: 8, ..Default::default() }).unwrap()
    }

    fn router(k: f64, rho: f64, t: Option<f64>, cfg: RouterConfig) -> Router {
        Router::new(
            cfg,
            Models {
                k: Arc::new(ConstantPredictor(k)),
                rho: Arc::new(ConstantPredictor(rho)),
                time: t.map(|t| Arc::new(ConstantPredictor(t)) as Arc<dyn Predictor>),
            },
            Clock::default(),
        )
        .unwrap()
    }

    #[test]
    fn boundary_prediction_stays_on_bmw() {
        let idx = index();
        let q = Query::new("1", "red blue");
        let cfg = RouterConfig { t_k: 50.0, ..Default::default() };
        let d = router(50.0, 100.0, None, cfg.clone()).route(Algorithm::PredictK, &idx, &q).unwrap();
        assert_eq!(d.isn, Some(Isn::Bmw));
        let d = router(50.000001, 100.0, None, cfg).route(Algorithm::PredictK, &idx, &q).unwrap();
        assert_eq!(d.isn, Some(Isn::Jass));
        assert_eq!(d.k_used, 51);
    }

    #[test]
    fn rho_is_capped() {
        let idx = index();
        let q = Query::new("1", "red blue");
        let cfg = RouterConfig {
            t_k: 10.0,
            rho_max: 37,
            ..Default::default()
        };
        let d = router(20.0, 370.0, None, cfg).route(Algorithm::PredictK, &idx, &q).unwrap();
        assert_eq!(d.rho_used, Some(37));
        assert!(d.report.postings_touched <= 37);
    }

    #[test]
    fn time_escape_branch() {
        let idx = index();
        let q = Query::new("1", "red blue");
        let cfg = RouterConfig {
            t_k: 100.0,
            t_t: 5.0,
            ..Default::default()
        };
        let d = router(10.0, 60.0, Some(5.0), cfg.clone()).route(Algorithm::PredictKAndTime, &idx, &q).unwrap();
        assert_eq!((d.isn, d.p_t), (Some(Isn::Bmw), Some(5.0)));
        let d = router(10.0, 60.0, Some(5.5), cfg).route(Algorithm::PredictKAndTime, &idx, &q).unwrap();
        assert_eq!((d.isn, d.rho_used), (Some(Isn::Jass), Some(60)));
    }

    #[test]
    fn log_time_models_are_exponentiated() {
        struct LogModel;
        impl Predictor for LogModel {
            fn predict(&self, _: &crate::features::FeatureVector) -> Result<f64> {
                Ok(2.0f64.ln())
            }
            fn target(&self) -> TargetKind {
                TargetKind::LogTime
            }
        }
        let idx = index();
        let r = Router::new(
            RouterConfig { t_t: 1.5, ..Default::default() },
            Models {
                k: Arc::new(ConstantPredictor(5.0)),
                rho: Arc::new(ConstantPredictor(5.0)),
                time: Some(Arc::new(LogModel)),
            },
            Clock::default(),
        )
        .unwrap();
        let d = r.route(Algorithm::PredictKAndTime, &idx, &Query::new("1", "red blue")).unwrap();
        assert!((d.p_t.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(d.isn, Some(Isn::Jass));
    }

    #[test]
    fn unroutable_and_single_term() {
        let idx = index();
        let r = router(7.0, 1.0, None, RouterConfig::default());
        let d = r.route(Algorithm::PredictK, &idx, &Query::new("1", "zzz the")).unwrap();
        assert!(d.is_unroutable() && d.candidates.is_empty());
        let d = r.route(Algorithm::PredictK, &idx, &Query::new("2", "red")).unwrap();
        assert!(d.shortcut);
        let t = idx.resolve_query("red");
        assert_eq!(d.hits, jass_exhaustive(&idx, &t, 7).unwrap().0);
    }

    #[test]
    fn candidates_match_direct_invocation() {
        let idx = index();
        let queries: Vec<Query> = ["red blue", "blue green", "red green x"]
            .iter()
            .enumerate()
            .map(|(i, t)| Query::new(i.to_string(), *t))
            .collect();
        let k = TablePredictor {
            values: [("0".to_string(), 5.0), ("1".to_string(), 80.0), ("2".to_string(), 12.2)].into(),
            fallback: Arc::new(ConstantPredictor(1.0)),
            target: TargetKind::K,
        };
        let r = Router::new(
            RouterConfig { t_k: 20.0, ..Default::default() },
            Models {
                k: Arc::new(k),
                rho: Arc::new(ConstantPredictor(40.0)),
                time: None,
            },
            Clock::default(),
        )
        .unwrap();
        let ds = r.route_all(Algorithm::PredictK, &idx, &queries).unwrap();
        let isns: Vec<_> = ds.iter().map(|d| (d.isn.unwrap(), d.k_used)).collect();
        assert_eq!(isns, vec![(Isn::Bmw, 5), (Isn::Jass, 80), (Isn::Bmw, 13)]);
        for (d, q) in ds.iter().zip(&queries) {
            let t = idx.resolve_query(&q.text);
            let direct = match d.isn.unwrap() {
                Isn::Bmw => bmw(&idx, &t, d.k_used, 1.0).unwrap().0,
                Isn::Jass => jass(&idx, &t, d.k_used, d.rho_used.unwrap()).unwrap().0,
            };
            assert_eq!(d.hits, direct);
        }
    }

    #[test]
    fn fixed_systems() {
        let idx = index();
        let q = Query::new("1", "red blue green");
        let t = idx.resolve_query(&q.text);
        let clock = Clock::default();
        let d = run_fixed(FixedSystem::Bmw { theta: 1.0 }, 15, &idx, &q, &clock).unwrap();
        assert_eq!(d.hits, daat_exhaustive(&idx, &t, 15).unwrap().0);
        assert_eq!(d.p_k, None);
        let d = run_fixed(FixedSystem::Jass { rho: UNLIMITED }, 15, &idx, &q, &clock).unwrap();
        assert_eq!(d.hits, jass_exhaustive(&idx, &t, 15).unwrap().0);
    }

    #[test]
    fn k_rounding_and_grid() {
        let mut c = RouterConfig::default();
        assert_eq!(c.k_used(0.2), 1);
        assert_eq!(c.k_used(-3.0), 1);
        assert_eq!(c.k_used(10.0), 10);
        assert_eq!(c.k_used(10.01), 11);
        c.k_grid = Some(vec![10, 20, 50]);
        assert_eq!(c.k_used(10.01), 20);
        assert_eq!(c.k_used(60.0), 60);
        c.rho_max = 100;
        assert_eq!(c.rho_used(1e12), 100);
        assert_eq!(c.rho_used(0.0), 1);
    }

    #[test]
    fn log_round_trip() {
        let idx = index();
        let r = router(30.0, 50.0, None, RouterConfig { t_k: 10.0, ..Default::default() });
        let qs = vec![Query::new("a", "red blue"), Query::new("b", "nothing")];
        let rows: Vec<LogRow> = r.route_all(Algorithm::PredictK, &idx, &qs).unwrap().iter().map(LogRow::from).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_log(&p, &rows).unwrap();
        assert_eq!(read_log(&p).unwrap(), rows);
    }
}
