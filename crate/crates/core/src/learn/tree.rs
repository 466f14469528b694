//! CART regression trees with squared-error splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// `x[feature] <= threshold` goes left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features sampled (without replacement) per split; `None` uses all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf: 5,
            max_features: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction in sum of squared errors.
    pub gain: f64,
}

/// Best squared-error split of `rows` over `features`. Thresholds are
/// midpoints between consecutive distinct values; each side keeps at least
/// `min_leaf` rows. Ties keep the earliest candidate.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let cols = columns(x);
    let sorted: Vec<Vec<usize>> = (0..cols.len()).map(|f| sorted_rows(&cols[f], rows)).collect();
    split_presorted(&cols, y, &sorted, features, min_leaf)
}

fn columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x.first().map_or(0, Vec::len);
    (0..p).map(|f| x.iter().map(|row| row[f]).collect()).collect()
}

/// `rows` stably sorted by `col`.
fn sorted_rows(col: &[f64], rows: &[usize]) -> Vec<usize> {
    let mut v = rows.to_vec();
    v.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    v
}

/// `sorted[f]` holds the node's rows in (stable) increasing order of
/// feature `f`.
fn split_presorted(
    cols: &[Vec<f64>],
    y: &[f64],
    sorted: &[Vec<usize>],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let min_leaf = min_leaf.max(1);
    let n = sorted.first().map_or(0, Vec::len);
    if n < 2 * min_leaf || features.is_empty() {
        return None;
    }
    let total: f64 = sorted[features[0]].iter().map(|&r| y[r]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let col = &cols[f];
        let order = &sorted[f];
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += y[order[i]];
            let nl = i + 1;
            let nr = n - nl;
            let (a, b) = (col[order[i]], col[order[i + 1]]);
            if nl < min_leaf || nr < min_leaf || a == b {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
            let gain = score - parent;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: 0.5 * (a + b),
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 1e-12 * parent.abs().max(1e-300))
}

/// Grow a tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
/// Splits are fit to `y`; leaf values come from `leaf_value(rows_in_leaf)`.
pub fn fit_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> TreeNode {
    let cols = columns(x);
    let sorted: Vec<Vec<usize>> = cols.iter().map(|c| sorted_rows(c, rows)).collect();
    let grower = Grower {
        cols: &cols,
        y,
        params,
        leaf_value,
    };
    grower.grow(rows.to_vec(), sorted, 0, rng)
}

struct Grower<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a TreeParams,
    leaf_value: &'a dyn Fn(&[usize]) -> f64,
}

impl Grower<'_> {
    fn grow<R: Rng>(&self, rows: Vec<usize>, sorted: Vec<Vec<usize>>, depth: usize, rng: &mut R) -> TreeNode {
        let leaf = |rows: &[usize]| TreeNode::Leaf {
            value: (self.leaf_value)(rows),
        };
        let params = self.params;
        if depth >= params.max_depth || rows.len() < 2 * params.min_leaf.max(1) {
            return leaf(&rows);
        }
        let n_features = self.cols.len();
        let features: Vec<usize> = match params.max_features {
            Some(m) if m < n_features => {
                let mut f = sample(rng, n_features, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let Some(split) = split_presorted(self.cols, self.y, &sorted, &features, params.min_leaf) else {
            return leaf(&rows);
        };
        let col = &self.cols[split.feature];
        let goes_left = |r: &usize| col[*r] <= split.threshold;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|r| goes_left(r));
        let (mut sl, mut sr) = (Vec::with_capacity(n_features), Vec::with_capacity(n_features));
        for s in sorted {
            let (a, b): (Vec<usize>, Vec<usize>) = s.into_iter().partition(goes_left);
            sl.push(a);
            sr.push(b);
        }
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(l, sl, depth + 1, rng)),
            right: Box::new(self.grow(r, sr, depth + 1, rng)),
        }
    }
}

pub fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sse(y: &[f64], rows: &[usize]) -> f64 {
        let m = mean_of(y, rows);
        rows.iter().map(|&r| (y[r] - m).powi(2)).sum()
    }

    #[test]
    fn chosen_split_is_exhaustively_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(6..40);
            let p = rng.random_range(1..5);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| (rng.random_range(0..8)) as f64).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let rows: Vec<usize> = (0..n).collect();
            let feats: Vec<usize> = (0..p).collect();
            let min_leaf = rng.random_range(1..4);
            let Some(choice) = best_split(&x, &y, &rows, &feats, min_leaf) else { continue };
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| x[i][choice.feature] <= choice.threshold);
            let chosen = sse(&y, &l) + sse(&y, &r);
            // brute force: every feature, every midpoint of distinct values
            #[allow(clippy::needless_range_loop)]
            for f in 0..p {
                let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    let t = 0.5 * (w[0] + w[1]);
                    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
                    if l.len() < min_leaf || r.len() < min_leaf {
                        continue;
                    }
                    assert!(chosen <= sse(&y, &l) + sse(&y, &r) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y = vec![4.0; 30];
        let rows: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = fit_tree(&x, &y, &rows, &TreeParams::default(), &mut rng, &|r| mean_of(&y, r));
        assert_eq!(t, TreeNode::Leaf { value: 4.0 });
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.1).sin()).collect();
        let rows: Vec<usize> = (0..200).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = TreeParams {
            max_depth: 3,
            min_leaf: 10,
            max_features: None,
        };
        let t = fit_tree(&x, &y, &rows, &params, &mut rng, &|r| r.len() as f64);
        assert!(t.depth() <= 3);
        fn check(n: &TreeNode) {
            match n {
                TreeNode::Leaf { value } => assert!(*value >= 10.0),
                TreeNode::Split { left, right, .. } => {
                    check(left);
                    check(right);
                }
            }
        }
        check(&t);
    }
}
