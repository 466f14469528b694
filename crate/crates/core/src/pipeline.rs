//! End-to-end orchestration: features, labels, model training,
//! cross-validated routing and reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{
    classification_metrics, format_latency_table, format_table, overlap_report, percentile_report, write_latency_csv,
    ClassificationReport, LatencyReport, OverlapEntry,
};
use crate::daat::daat_exhaustive;
use crate::desk::{generate, Desk, DeskConfig};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureVector};
use crate::index::{Index, IndexConfig};
use crate::labels::{label_queries, tail_threshold, targets, write_labels, DepthProfile, LabelConfig, QueryLabel};
use crate::learn::{
    cross_validate, train_gbrt_quantile, train_linear, train_rf, GbrtParams, Predictor, RfParams, TablePredictor,
    TargetKind, TrainingSet, TreeEnsemble,
};
use crate::metrics::{err_at, ndcg_at, pool_med_rbp, rerank_pool, tost, Judgments, RankedList};
use crate::numeric::mean;
use crate::queries::Query;
use crate::router::{run_fixed_all, Algorithm, FixedSystem, LogRow, Models, Router, RouterConfig, RoutingDecision};
use crate::saat::UNLIMITED;
use crate::timing::{Clock, CostModel};

/// Feature vectors of all routable queries, in query order.
pub fn extract_all(index: &Index, queries: &[Query]) -> Vec<FeatureVector> {
    queries
        .par_iter()
        .filter_map(|q| extract(index, &q.id, &q.text).ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub folds: usize,
    pub seed: u64,
    pub rf: RfParams,
    /// Depth model (quantile regression).
    pub qr_k: GbrtParams,
    pub qr_rho: GbrtParams,
    /// Time model, fit on log-ms.
    pub qr_time: GbrtParams,
    pub ridge: f64,
    pub tail_percentile: f64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            folds: 10,
            seed,
            rf: RfParams {
                seed: seed.wrapping_add(1),
                ..Default::default()
            },
            qr_k: GbrtParams {
                tau: 0.55,
                seed: seed.wrapping_add(2),
                ..Default::default()
            },
            qr_rho: GbrtParams {
                tau: 0.55,
                seed: seed.wrapping_add(3),
                ..Default::default()
            },
            qr_time: GbrtParams {
                tau: 0.5,
                seed: seed.wrapping_add(4),
                ..Default::default()
            },
            ridge: 1.0,
            tail_percentile: 0.95,
        }
    }
}

/// Models trained on every labeled query.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModels {
    pub k: TreeEnsemble,
    pub k_rf: TreeEnsemble,
    pub rho: TreeEnsemble,
    pub time: TreeEnsemble,
    pub time_linear: TreeEnsemble,
}

const MODEL_FILES: [&str; 5] = ["k.json", "k_rf.json", "rho.json", "time.json", "time_linear.json"];

impl TrainedModels {
    fn all(&self) -> [&TreeEnsemble; 5] {
        [&self.k, &self.k_rf, &self.rho, &self.time, &self.time_linear]
    }

    pub fn tail_threshold_ms(&self) -> Option<f64> {
        self.time.tail_threshold_ms
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (m, name) in self.all().into_iter().zip(MODEL_FILES) {
            m.save(&dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TrainedModels> {
        let l = |n: &str| TreeEnsemble::load(&dir.join(n));
        Ok(TrainedModels {
            k: l(MODEL_FILES[0])?,
            k_rf: l(MODEL_FILES[1])?,
            rho: l(MODEL_FILES[2])?,
            time: l(MODEL_FILES[3])?,
            time_linear: l(MODEL_FILES[4])?,
        })
    }
}

struct Sets {
    k: TrainingSet,
    rho: TrainingSet,
    time: TrainingSet,
}

fn training_sets(features: &[FeatureVector], labels: &[QueryLabel]) -> Result<Sets> {
    Ok(Sets {
        k: TrainingSet::join(features, &targets(labels, TargetKind::K), TargetKind::K)?,
        rho: TrainingSet::join(features, &targets(labels, TargetKind::Rho), TargetKind::Rho)?,
        time: TrainingSet::join(features, &targets(labels, TargetKind::LogTime), TargetKind::LogTime)?,
    })
}

pub fn train_all(features: &[FeatureVector], labels: &[QueryLabel], cfg: &TrainConfig) -> Result<TrainedModels> {
    let sets = training_sets(features, labels)?;
    let threshold = tail_threshold(
        &labels.iter().map(|l| l.time_ms_bmw).collect::<Vec<_>>(),
        cfg.tail_percentile,
    )?;
    let mut time = train_gbrt_quantile(&sets.time, &cfg.qr_time)?;
    time.tail_threshold_ms = Some(threshold);
    let mut time_linear = train_linear(&sets.time, cfg.ridge)?;
    time_linear.tail_threshold_ms = Some(threshold);
    Ok(TrainedModels {
        k: train_gbrt_quantile(&sets.k, &cfg.qr_k)?,
        k_rf: train_rf(&sets.k, &cfg.rf)?,
        rho: train_gbrt_quantile(&sets.rho, &cfg.qr_rho)?,
        time,
        time_linear,
    })
}

/// Out-of-fold predictions per query id. Time columns are log-ms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CvTable {
    pub k_qr: BTreeMap<String, f64>,
    pub k_rf: BTreeMap<String, f64>,
    pub rho: BTreeMap<String, f64>,
    pub time_qr: BTreeMap<String, f64>,
    pub time_lr: BTreeMap<String, f64>,
}

fn oof(set: &TrainingSet, folds: usize, seed: u64, trainer: impl Fn(&TrainingSet) -> Result<TreeEnsemble> + Sync) -> Result<BTreeMap<String, f64>> {
    let preds = cross_validate(set, folds, seed, trainer)?;
    Ok(set.ids.iter().cloned().zip(preds).collect())
}

pub fn cross_validate_all(features: &[FeatureVector], labels: &[QueryLabel], cfg: &TrainConfig) -> Result<CvTable> {
    let sets = training_sets(features, labels)?;
    let folds = cfg.folds;
    Ok(CvTable {
        k_qr: oof(&sets.k, folds, cfg.seed, |d| train_gbrt_quantile(d, &cfg.qr_k))?,
        k_rf: oof(&sets.k, folds, cfg.seed, |d| train_rf(d, &cfg.rf))?,
        rho: oof(&sets.rho, folds, cfg.seed, |d| train_gbrt_quantile(d, &cfg.qr_rho))?,
        time_qr: oof(&sets.time, folds, cfg.seed, |d| train_gbrt_quantile(d, &cfg.qr_time))?,
        time_lr: oof(&sets.time, folds, cfg.seed, |d| train_linear(d, cfg.ridge))?,
    })
}

impl CvTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["qid", "k_qr", "k_rf", "rho_qr", "log_time_qr", "log_time_lr"])?;
        let ids: std::collections::BTreeSet<&String> = self.k_qr.keys().chain(self.time_qr.keys()).collect();
        let cell = |m: &BTreeMap<String, f64>, q: &String| m.get(q).map_or(String::new(), f64::to_string);
        for q in ids {
            w.write_record([
                q.clone(),
                cell(&self.k_qr, q),
                cell(&self.k_rf, q),
                cell(&self.rho, q),
                cell(&self.time_qr, q),
                cell(&self.time_lr, q),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<CvTable> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let mut t = CvTable::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let qid = rec.get(0).unwrap_or_default().to_string();
            let columns = [&mut t.k_qr, &mut t.k_rf, &mut t.rho, &mut t.time_qr, &mut t.time_lr];
            for (c, map) in columns.into_iter().enumerate() {
                match rec.get(c + 1) {
                    Some("") | None => {}
                    Some(v) => {
                        let v = v.parse::<f64>().map_err(|e| Error::Malformed {
                            path: path.to_path_buf(),
                            line: i + 2,
                            message: e.to_string(),
                        })?;
                        map.insert(qid.clone(), v);
                    }
                }
            }
        }
        Ok(t)
    }

    /// Router models answering labeled queries from the out-of-fold table
    /// and everything else from the full models.
    pub fn router_models(&self, full: &TrainedModels) -> Models {
        let table = |values: &BTreeMap<String, f64>, fallback: &TreeEnsemble, target| -> Arc<dyn Predictor> {
            Arc::new(TablePredictor {
                values: values.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                fallback: Arc::new(fallback.clone()),
                target,
            })
        };
        Models {
            k: table(&self.k_qr, &full.k, TargetKind::K),
            rho: table(&self.rho, &full.rho, TargetKind::Rho),
            time: Some(table(&self.time_qr, &full.time, TargetKind::LogTime)),
        }
    }
}

pub fn models_from(full: &TrainedModels) -> Models {
    Models {
        k: Arc::new(full.k.clone()),
        rho: Arc::new(full.rho.clone()),
        time: Some(Arc::new(full.time.clone())),
    }
}

/// Largest budget whose worst-case cost (every posting also creates an
/// accumulator) fits in `budget_ms` under `model`; at least 1.
pub fn rho_for_budget(model: &CostModel, budget_ms: f64) -> u64 {
    let per = (model.posting_ns + model.doc_ns) / 1e6;
    let spare = budget_ms - model.base_us / 1e3;
    if spare <= 0.0 || per <= 0.0 {
        return 1;
    }
    ((spare / per).floor() as u64).max(1)
}

/// Smallest depth whose mean pool MED over `profiles` is at most `target`
/// (mean MED is non-increasing in depth); `max_k` if none is.
pub fn matched_fixed_k(profiles: &[DepthProfile], target: f64, max_k: usize) -> usize {
    let mean_med = |k: usize| profiles.iter().map(|p| p.med(k)).sum::<f64>() / profiles.len().max(1) as f64;
    if mean_med(max_k) > target {
        return max_k;
    }
    let (mut lo, mut hi) = (0, max_k);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mean_med(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if mean_med(lo) <= target && lo >= 1 {
        lo
    } else {
        hi
    }
}

/// Pool MED profiles of each labeled query against its exhaustive
/// ranking to depth `max_k`.
pub fn depth_profiles(
    index: &Index,
    queries: &[Query],
    references: &BTreeMap<String, RankedList>,
    ids: &HashSet<String>,
    max_k: usize,
    p: f64,
) -> Result<BTreeMap<String, DepthProfile>> {
    queries
        .par_iter()
        .filter(|q| ids.contains(&q.id))
        .map(|q| {
            let terms = index.resolve_query(&q.text);
            let (hits, _) = daat_exhaustive(index, &terms, max_k)?;
            let ranking: Vec<&str> = hits.iter().map(|h| index.external_id(h.doc)).collect();
            let reference: Vec<&str> = references[&q.id].doc_ids().collect();
            Ok((q.id.clone(), DepthProfile::new(&reference, &ranking, p)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub router: RouterConfig,
    /// `None`: derive the cap from the tail threshold and the cost model.
    pub rho_max: Option<u64>,
    /// `None`: use the learned tail threshold.
    pub t_t: Option<f64>,
    /// `None`: match the fixed-k baselines to the hybrid's mean MED.
    pub fixed_k: Option<usize>,
    pub max_k: usize,
    pub persistence: f64,
    pub overlap_percentile: f64,
    pub tost_epsilon: f64,
    pub tost_alpha: f64,
    /// Upper bound on the hybrid's mean pool MED.
    pub med_band: f64,
    pub clock: Clock,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            router: RouterConfig::default(),
            rho_max: None,
            t_t: None,
            fixed_k: None,
            max_k: 10_000,
            persistence: 0.95,
            overlap_percentile: 0.95,
            tost_epsilon: 0.05,
            tost_alpha: 0.05,
            med_band: 0.01,
            clock: Clock::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemRun {
    pub name: String,
    pub decisions: Vec<RoutingDecision>,
}

impl SystemRun {
    pub fn log(&self) -> Vec<LogRow> {
        self.decisions.iter().map(LogRow::from).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effectiveness {
    pub system: String,
    pub queries: usize,
    pub mean_med: f64,
    pub mean_k: f64,
    pub ndcg10: f64,
    pub err10: f64,
    pub tost_equivalent: bool,
    pub tost_p: f64,
}

/// One query's candidate pool and the depth that produced it.
pub struct Pool<'a> {
    pub query_id: &'a str,
    pub k: usize,
    pub candidates: &'a RankedList,
}

/// Mean pool MED, mean depth, and NDCG/ERR@10 of the reference reranked
/// within each pool (what a later stage reproducing the reference would
/// output), with a TOST of NDCG@10 against the full reference. Returns
/// the per-query MED too.
pub fn score_pools(
    system: &str,
    pools: &[Pool],
    references: &BTreeMap<String, RankedList>,
    qrels: &Judgments,
    cfg: &EvalConfig,
) -> Result<(Effectiveness, BTreeMap<String, f64>)> {
    let mut pools: Vec<&Pool> = pools.iter().collect();
    pools.sort_by_key(|p| p.query_id);
    let mut per_query = BTreeMap::new();
    let (mut meds, mut ks, mut nd, mut er, mut base) = (vec![], vec![], vec![], vec![], vec![]);
    for p in pools {
        let reference = references
            .get(p.query_id)
            .ok_or_else(|| Error::Parameter(format!("no reference for query {}", p.query_id)))?;
        let ref_ids: Vec<String> = reference.doc_ids().map(str::to_string).collect();
        let pool: HashSet<String> = p.candidates.doc_ids().map(str::to_string).collect();
        let m = pool_med_rbp(&ref_ids, &pool, cfg.persistence);
        per_query.insert(p.query_id.to_string(), m);
        meds.push(m);
        ks.push(p.k as f64);
        let reranked = RankedList::new(p.query_id.to_string(), rerank_pool(&ref_ids, &pool));
        nd.push(ndcg_at(&reranked, qrels, 10).value);
        er.push(err_at(&reranked, qrels, 10).value);
        base.push(ndcg_at(reference, qrels, 10).value);
    }
    let t = tost(&base, &nd, cfg.tost_epsilon, cfg.tost_alpha)?;
    let e = Effectiveness {
        system: system.to_string(),
        queries: meds.len(),
        mean_med: mean(&meds),
        mean_k: mean(&ks),
        ndcg10: mean(&nd),
        err10: mean(&er),
        tost_equivalent: t.equivalent,
        tost_p: t.p_lower.max(t.p_upper),
    };
    Ok((e, per_query))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub model: String,
    pub report: ClassificationReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rho_max: u64,
    /// Mean pool MED of `Hybrid_k` over the labeled queries.
    pub hybrid_mean_med: f64,
    pub med_band: f64,
    pub t_t: f64,
    pub fixed_k: usize,
    pub systems: Vec<SystemRun>,
    pub latency: Vec<LatencyReport>,
    pub effectiveness: Vec<Effectiveness>,
    pub classification: Vec<ClassificationRow>,
    pub overlap: Vec<OverlapEntry>,
    /// Per labeled query MED of each system's candidate pool.
    pub med: BTreeMap<String, BTreeMap<String, f64>>,
}

pub const HYBRID_K: &str = "Hybrid_k";
pub const HYBRID_H: &str = "Hybrid_h";
pub const FIXED_BMW: &str = "BMW_1.0";

/// Route every query with the hybrid systems and the fixed baselines, and
/// score them against the references.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    index: &Index,
    queries: &[Query],
    references: &BTreeMap<String, RankedList>,
    qrels: &Judgments,
    labels: &[QueryLabel],
    models: Models,
    cv: &CvTable,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let times: Vec<f64> = labels.iter().map(|l| l.time_ms_bmw).collect();
    let t_t = match cfg.t_t {
        Some(t) => t,
        None => tail_threshold(&times, 0.95)?,
    };
    let cost = match cfg.clock {
        Clock::Model(m) => m,
        Clock::Wall => CostModel::default(),
    };
    let rho_max = cfg.rho_max.unwrap_or_else(|| rho_for_budget(&cost, t_t));
    let router_cfg = RouterConfig {
        t_t,
        rho_max,
        ..cfg.router.clone()
    };
    let router = Router::new(router_cfg, models, cfg.clock)?;
    let hybrid_k = router.route_all(Algorithm::PredictK, index, queries)?;
    let hybrid_h = router.route_all(Algorithm::PredictKAndTime, index, queries)?;

    let eval_ids: HashSet<String> = labels
        .iter()
        .filter(|l| l.attainable() && references.contains_key(&l.query_id))
        .map(|l| l.query_id.clone())
        .collect();
    let pool_med = |d: &RoutingDecision| -> f64 {
        let reference: Vec<&str> = references[&d.query_id].doc_ids().collect();
        pool_med_rbp(&reference, &d.candidates.doc_ids().collect(), cfg.persistence)
    };
    let hybrid_mean_med = mean(
        &hybrid_k
            .iter()
            .filter(|d| eval_ids.contains(&d.query_id))
            .map(pool_med)
            .collect::<Vec<_>>(),
    );
    let fixed_k = match cfg.fixed_k {
        Some(k) => k,
        None => {
            let profiles = depth_profiles(index, queries, references, &eval_ids, cfg.max_k, cfg.persistence)?;
            matched_fixed_k(&profiles.into_values().collect::<Vec<_>>(), hybrid_mean_med, cfg.max_k)
        }
    };

    let fixed = [
        (FIXED_BMW.to_string(), FixedSystem::Bmw { theta: 1.0 }),
        ("BMW_1.2".to_string(), FixedSystem::Bmw { theta: 1.2 }),
        ("JASS_exh".to_string(), FixedSystem::Jass { rho: UNLIMITED }),
        (format!("JASS_{rho_max}"), FixedSystem::Jass { rho: rho_max }),
    ];
    let mut systems = vec![
        SystemRun {
            name: HYBRID_K.into(),
            decisions: hybrid_k,
        },
        SystemRun {
            name: HYBRID_H.into(),
            decisions: hybrid_h,
        },
    ];
    for (name, sys) in fixed {
        systems.push(SystemRun {
            name,
            decisions: run_fixed_all(sys, fixed_k, index, queries, &cfg.clock)?,
        });
    }

    let latency = systems
        .iter()
        .map(|s| percentile_report(&s.name, &s.log(), router.config.budget_ms))
        .collect::<Result<Vec<_>>>()?;

    let mut med = BTreeMap::new();
    let mut effectiveness = Vec::new();
    for s in &systems {
        let by_id: HashMap<&str, &RoutingDecision> = s.decisions.iter().map(|d| (d.query_id.as_str(), d)).collect();
        let pools: Vec<Pool> = eval_ids
            .iter()
            .map(|q| {
                let d = by_id[q.as_str()];
                Pool {
                    query_id: q,
                    k: d.k_used,
                    candidates: &d.candidates,
                }
            })
            .collect();
        let (e, per_query) = score_pools(&s.name, &pools, references, qrels, cfg)?;
        effectiveness.push(e);
        med.insert(s.name.clone(), per_query);
    }

    // Tail classification of out-of-fold time predictions, on log-ms.
    let truth: BTreeMap<&str, f64> = labels.iter().map(|l| (l.query_id.as_str(), l.time_ms_bmw.max(1e-6).ln())).collect();
    let mut classification = Vec::new();
    for (name, preds) in [("QR", &cv.time_qr), ("LR", &cv.time_lr)] {
        let ids: Vec<&String> = preds.keys().filter(|q| truth.contains_key(q.as_str())).collect();
        if ids.is_empty() {
            continue;
        }
        let p: Vec<f64> = ids.iter().map(|q| preds[*q]).collect();
        let t: Vec<f64> = ids.iter().map(|q| truth[q.as_str()]).collect();
        classification.push(ClassificationRow {
            model: name.into(),
            report: classification_metrics(&p, &t, t_t.max(1e-6).ln())?,
        });
    }

    let fixed_logs: Vec<(String, Vec<LogRow>)> = systems[2..].iter().map(|s| (s.name.clone(), s.log())).collect();
    let overlap = overlap_report(&fixed_logs, cfg.overlap_percentile)?;

    Ok(Evaluation {
        rho_max,
        hybrid_mean_med,
        med_band: cfg.med_band,
        t_t,
        fixed_k,
        systems,
        latency,
        effectiveness,
        classification,
        overlap,
        med,
    })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

const EFFECTIVENESS_HEADER: [&str; 8] = ["system", "queries", "mean_med", "mean_k", "ndcg10", "err10", "tost_equivalent", "tost_p"];
const CLASSIFICATION_HEADER: [&str; 9] = [
    "model",
    "rmse",
    "precision",
    "recall",
    "f1",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "auc",
];

impl Evaluation {
    pub fn system(&self, name: &str) -> Option<&SystemRun> {
        self.systems.iter().find(|s| s.name == name)
    }

    fn effectiveness_rows(&self) -> Vec<Vec<String>> {
        self.effectiveness
            .iter()
            .map(|e| {
                vec![
                    e.system.clone(),
                    e.queries.to_string(),
                    e.mean_med.to_string(),
                    e.mean_k.to_string(),
                    e.ndcg10.to_string(),
                    e.err10.to_string(),
                    e.tost_equivalent.to_string(),
                    e.tost_p.to_string(),
                ]
            })
            .collect()
    }

    fn classification_rows(&self) -> Vec<Vec<String>> {
        self.classification
            .iter()
            .map(|c| {
                let r = &c.report;
                vec![
                    c.model.clone(),
                    r.rmse.to_string(),
                    r.precision.to_string(),
                    r.recall.to_string(),
                    r.f1.to_string(),
                    r.macro_precision.to_string(),
                    r.macro_recall.to_string(),
                    r.macro_f1.to_string(),
                    r.auc.map_or(String::new(), |a| a.to_string()),
                ]
            })
            .collect()
    }

    /// Plain-text summary of every table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "T_t = {:.4} ms   rho_max = {}   fixed k = {}   hybrid mean MED = {:.5} (band {})\n",
            self.t_t, self.rho_max, self.fixed_k, self.hybrid_mean_med, self.med_band
        )
        .unwrap();
        writeln!(out, "Latency and depth\n{}", format_latency_table(&self.latency)).unwrap();
        let eff: Vec<Vec<String>> = self
            .effectiveness
            .iter()
            .map(|e| {
                vec![
                    e.system.clone(),
                    e.queries.to_string(),
                    format!("{:.5}", e.mean_med),
                    format!("{:.1}", e.mean_k),
                    format!("{:.4}", e.ndcg10),
                    format!("{:.4}", e.err10),
                    e.tost_equivalent.to_string(),
                ]
            })
            .collect();
        writeln!(
            out,
            "Effectiveness (labeled queries)\n{}",
            format_table(&["system", "queries", "mean_MED", "mean_k", "NDCG@10", "ERR@10", "TOST_equiv"], &eff)
        )
        .unwrap();
        let cls: Vec<Vec<String>> = self
            .classification
            .iter()
            .map(|c| {
                let r = &c.report;
                vec![
                    c.model.clone(),
                    format!("{:.3}", r.rmse),
                    format!("{:.3}", r.precision),
                    format!("{:.3}", r.recall),
                    format!("{:.3}", r.f1),
                    format!("{:.3}", r.macro_f1),
                    r.auc.map_or("-".into(), |a| format!("{a:.3}")),
                ]
            })
            .collect();
        writeln!(
            out,
            "Tail classification (log-ms)\n{}",
            format_table(&["model", "RMSE", "P", "R", "F", "macro_F", "AUC"], &cls)
        )
        .unwrap();
        let ov: Vec<Vec<String>> = self
            .overlap
            .iter()
            .map(|o| vec![o.a.clone(), o.b.clone(), format!("{:.1}", o.overlap_pct)])
            .collect();
        write!(out, "Tail overlap (%)\n{}", format_table(&["a", "b", "overlap"], &ov)).unwrap();
        out
    }

    /// Write decision logs under `dir/decisions` and reports under
    /// `dir/reports`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let decisions = dir.join("decisions");
        let reports = dir.join("reports");
        for d in [&decisions, &reports] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        for s in &self.systems {
            crate::router::write_log(&decisions.join(format!("{}.csv", s.name)), &s.log())?;
        }
        write_latency_csv(&reports.join("latency.csv"), &self.latency)?;
        write_csv(&reports.join("effectiveness.csv"), &EFFECTIVENESS_HEADER, &self.effectiveness_rows())?;
        write_csv(&reports.join("classification.csv"), &CLASSIFICATION_HEADER, &self.classification_rows())?;
        let ov: Vec<Vec<String>> = self
            .overlap
            .iter()
            .map(|o| vec![o.a.clone(), o.b.clone(), o.overlap_pct.to_string()])
            .collect();
        write_csv(&reports.join("overlap.csv"), &["a", "b", "overlap_pct"], &ov)?;
        let p = reports.join("summary.txt");
        fs::write(&p, self.summary()).map_err(|e| Error::io(&p, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub desk: DeskConfig,
    pub index: IndexConfig,
    pub labels: LabelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Defaults throughout, with every seed derived from `seed`.
    pub fn new(seed: u64) -> Self {
        PipelineConfig {
            desk: DeskConfig {
                seed,
                ..Default::default()
            },
            index: IndexConfig::default(),
            labels: LabelConfig::default(),
            train: TrainConfig::new(seed),
            eval: EvalConfig::default(),
        }
    }
}

/// Everything one pipeline run produces.
pub struct PipelineRun {
    pub desk: Desk,
    pub judgments: Judgments,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<QueryLabel>,
    pub models: TrainedModels,
    pub cv: CvTable,
    pub eval: Evaluation,
}

/// Generate the desk collection, label, train, cross-validate, route and
/// evaluate. With `out`, every artifact is written below it.
pub fn run_pipeline(cfg: &PipelineConfig, out: Option<&Path>) -> Result<PipelineRun> {
    let desk = generate(&cfg.desk, cfg.index)?;
    let references: HashMap<String, RankedList> = desk.reference.clone().into_iter().collect();
    let mut judgments = Judgments::new();
    for (q, d, g) in &desk.qrels {
        judgments.insert(q, d, *g);
    }
    let features = extract_all(&desk.index, &desk.queries);
    let labels = label_queries(&desk.index, &desk.queries, &references, &cfg.labels)?;
    let models = train_all(&features, &labels, &cfg.train)?;
    let cv = cross_validate_all(&features, &labels, &cfg.train)?;
    let eval = evaluate(
        &desk.index,
        &desk.queries,
        &desk.reference,
        &judgments,
        &labels,
        cv.router_models(&models),
        &cv,
        &cfg.eval,
    )?;
    let run = PipelineRun {
        desk,
        judgments,
        features,
        labels,
        models,
        cv,
        eval,
    };
    if let Some(dir) = out {
        run.write(cfg, dir)?;
    }
    Ok(run)
}

impl PipelineRun {
    pub fn write(&self, cfg: &PipelineConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("config.json");
        let json = serde_json::to_string_pretty(cfg)?;
        fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
        self.desk.write(&dir.join("desk"))?;
        self.desk.index.save(&dir.join("index"))?;
        crate::features::write_csv(&dir.join("features.csv"), &self.features)?;
        write_labels(&dir.join("labels.csv"), &self.labels)?;
        self.models.save(&dir.join("models"))?;
        self.cv.write_csv(&dir.join("cv.csv"))?;
        self.eval.write(dir)
    }
}
