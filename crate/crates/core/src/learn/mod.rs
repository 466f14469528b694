//! Tree-ensemble regressors: CART, random forests, quantile GBRT, plus a
//! ridge baseline and k-fold cross-validation.

pub mod linear;
pub mod model;
pub mod tree;

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, SCHEMA_VERSION};
use crate::numeric::nearest_rank;

pub use linear::LinearModel;
pub use model::{ConstantPredictor, ModelKind, Predictor, TablePredictor, TargetKind, TreeEnsemble, MODEL_FORMAT_VERSION};
pub use tree::{best_split, fit_tree, TreeNode, TreeParams};

/// Feature rows with one real target each.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub target: TargetKind,
    pub schema_version: String,
}

impl TrainingSet {
    pub fn new(ids: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>, target: TargetKind, schema_version: &str) -> Result<Self> {
        if ids.len() != x.len() || x.len() != y.len() {
            return Err(Error::Parameter("ids, rows and targets differ in length".into()));
        }
        if let Some(first) = x.first() {
            if x.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Parameter("inconsistent feature dimension".into()));
            }
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite feature or target".into()));
        }
        Ok(TrainingSet {
            ids,
            x,
            y,
            target,
            schema_version: schema_version.to_string(),
        })
    }

    /// Join feature vectors with targets by query id, keeping feature order.
    /// Queries without a target are dropped.
    pub fn join(features: &[FeatureVector], targets: &HashMap<String, f64>, target: TargetKind) -> Result<Self> {
        let mut ids = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for f in features {
            if let Some(&t) = targets.get(&f.query_id) {
                ids.push(f.query_id.clone());
                x.push(f.values.clone());
                y.push(t);
            }
        }
        let schema = features.first().map_or(SCHEMA_VERSION, |f| f.schema_version.as_str());
        Self::new(ids, x, y, target, schema)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            x: rows.iter().map(|&r| self.x[r].clone()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            target: self.target,
            schema_version: self.schema_version.clone(),
        }
    }
}

/// Read a `qid,target` CSV into a map.
pub fn read_targets(path: &Path) -> Result<HashMap<String, f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 2,
            message: m.to_string(),
        };
        if rec.len() < 2 {
            return Err(bad("expected qid,target"));
        }
        let v: f64 = rec[1].trim().parse().map_err(|_| bad("bad target"))?;
        out.insert(rec[0].to_string(), v);
    }
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("quantile {tau} outside (0, 1)")))
    }
}

/// Pinball loss of predicting `f` when the truth is `y`.
pub fn pinball_loss(y: f64, f: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(if y >= f { (y - f) * tau } else { (f - y) * (1.0 - tau) })
}

fn check_data(data: &TrainingSet) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 training rows, got {}", data.len())));
    }
    Ok(())
}

fn ensemble(data: &TrainingSet, kind: ModelKind) -> TreeEnsemble {
    TreeEnsemble {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        target: data.target,
        schema_version: data.schema_version.clone(),
        n_features: data.n_features(),
        tau: None,
        learning_rate: None,
        initial: 0.0,
        trees: Vec::new(),
        linear: None,
        tail_threshold_ms: None,
    }
}

/// Per-tree generator: one ChaCha stream per tree so trees can be grown in
/// any order (or in parallel) with identical results.
fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub trees: usize,
    /// Features tried per split; `None` means ⌈p/3⌉.
    pub max_features: Option<usize>,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            trees: 100,
            max_features: None,
            max_depth: 12,
            min_leaf: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

pub fn train_rf(data: &TrainingSet, params: &RfParams) -> Result<TreeEnsemble> {
    check_data(data)?;
    if params.trees == 0 {
        return Err(Error::Parameter("forest needs at least one tree".into()));
    }
    let n = data.len();
    let p = data.n_features();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(params.max_features.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))),
    };
    let trees: Vec<TreeNode> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(&data.x, &data.y, &rows, &tree_params, &mut rng, &|r| tree::mean_of(&data.y, r))
        })
        .collect();
    let mut m = ensemble(data, ModelKind::RandomForest);
    m.trees = trees;
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// Each leaf moves by the τ-quantile of the residuals it holds.
    LeafQuantile,
    /// Leaves hold mean gradients; one scalar step per tree minimizes the
    /// training pinball loss.
    LineSearch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub tau: f64,
    pub trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` uses all.
    pub max_features: Option<usize>,
    pub step: StepMode,
    pub seed: u64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            tau: 0.5,
            trees: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_leaf: 5,
            max_features: None,
            step: StepMode::LeafQuantile,
            seed: 0,
        }
    }
}

fn map_leaves(node: &mut TreeNode, f: &dyn Fn(f64) -> f64) {
    match node {
        TreeNode::Leaf { value } => *value = f(*value),
        TreeNode::Split { left, right, .. } => {
            map_leaves(left, f);
            map_leaves(right, f);
        }
    }
}

/// Minimizer over γ of Σ pinball(r_i − γ·h_i). The objective is convex and
/// piecewise linear with kinks at r_i/h_i; sweep them in order until the
/// subgradient turns non-negative.
pub fn pinball_line_search(residuals: &[f64], direction: &[f64], tau: f64) -> f64 {
    let mut kinks: Vec<(f64, f64)> = residuals
        .iter()
        .zip(direction)
        .filter(|(_, h)| **h != 0.0)
        .map(|(r, h)| (r / h, h.abs()))
        .collect();
    if kinks.is_empty() {
        return 0.0;
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = -residuals
        .iter()
        .zip(direction)
        .map(|(_, &h)| if h > 0.0 { h * tau } else { -h * (1.0 - tau) })
        .sum::<f64>();
    for (z, w) in &kinks {
        slope += w;
        if slope >= 0.0 {
            return *z;
        }
    }
    kinks.last().unwrap().0
}

pub fn train_gbrt_quantile(data: &TrainingSet, params: &GbrtParams) -> Result<TreeEnsemble> {
    check_tau(params.tau)?;
    check_data(data)?;
    if !(params.learning_rate > 0.0) {
        return Err(Error::Parameter("learning rate must be positive".into()));
    }
    let tau = params.tau;
    let n = data.len();
    let initial = nearest_rank(&data.y, tau);
    let mut f = vec![initial; n];
    let rows: Vec<usize> = (0..n).collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: params.max_features,
    };
    let mut trees = Vec::with_capacity(params.trees);
    for t in 0..params.trees {
        let mut rng = tree_rng(params.seed, t as u64);
        let grad: Vec<f64> = data
            .y
            .iter()
            .zip(&f)
            .map(|(y, f)| if y > f { tau } else { tau - 1.0 })
            .collect();
        let residual: Vec<f64> = data.y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let mut tree = match params.step {
            StepMode::LeafQuantile => fit_tree(&data.x, &grad, &rows, &tree_params, &mut rng, &|r| {
                let v: Vec<f64> = r.iter().map(|&i| residual[i]).collect();
                nearest_rank(&v, tau)
            }),
            StepMode::LineSearch => {
                let mut tree = fit_tree(&data.x, &grad, &rows, &tree_params, &mut rng, &|r| tree::mean_of(&grad, r));
                let h: Vec<f64> = data.x.iter().map(|x| tree.predict(x)).collect();
                let gamma = pinball_line_search(&residual, &h, tau);
                map_leaves(&mut tree, &|v| v * gamma);
                tree
            }
        };
        // Canonicalize -0.0 so serialized models are stable.
        map_leaves(&mut tree, &|v| v + 0.0);
        for (fi, x) in f.iter_mut().zip(&data.x) {
            *fi += params.learning_rate * tree.predict(x);
        }
        trees.push(tree);
    }
    let mut m = ensemble(data, ModelKind::GbrtQuantile);
    m.tau = Some(tau);
    m.learning_rate = Some(params.learning_rate);
    m.initial = initial;
    m.trees = trees;
    Ok(m)
}

pub fn train_linear(data: &TrainingSet, ridge: f64) -> Result<TreeEnsemble> {
    check_data(data)?;
    let mut m = ensemble(data, ModelKind::Linear);
    m.linear = Some(LinearModel::fit(&data.x, &data.y, ridge)?);
    Ok(m)
}

/// Seeded fold assignment: a shuffled permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

/// Out-of-fold predictions, aligned with `data` rows.
pub fn cross_validate<F>(data: &TrainingSet, folds: usize, seed: u64, trainer: F) -> Result<Vec<f64>>
where
    F: Fn(&TrainingSet) -> Result<TreeEnsemble> + Sync,
{
    if folds < 2 || data.len() < folds {
        return Err(Error::Parameter(format!("cannot split {} rows into {folds} folds", data.len())));
    }
    let assign = fold_assignment(data.len(), folds, seed);
    let per_fold: Vec<Vec<(usize, f64)>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| assign[i] != k).collect();
            let model = trainer(&data.subset(&train))?;
            Ok((0..data.len())
                .filter(|&i| assign[i] == k)
                .map(|i| (i, model.predict_row(&data.x[i])))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; data.len()];
    for (i, v) in per_fold.into_iter().flatten() {
        out[i] = v;
    }
    Ok(out)
}
