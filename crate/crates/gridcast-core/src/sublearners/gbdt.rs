//! Gradient-boosted regression trees on squared error.
//!
//! Boosting starts from the target mean and fits one depth-limited tree per
//! round to the current residuals, scaled by the learning rate. Splits are
//! exact greedy variance-reduction over sorted unique values; ties resolve
//! to the lowest feature index, then the lowest threshold, so training is
//! bit-deterministic. Per-feature sorted index lists are built once and
//! stably partitioned per node instead of re-sorting.
//!
//! When the input is large enough, the chronological last tenth of the rows
//! is held out to pick the best round count (early stopping); the fitted
//! subset excludes that tail.

use ndarray::ArrayView2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    holdout_split, int_param, real_param, reject_unknown_keys, SublearnerError, SublearnerKind,
    SublearnerSpec,
};
use crate::features::{FeatureMatrix, TargetVector};

/// Early stopping needs at least this many validation rows to be meaningful.
const MIN_VALIDATION_ROWS: usize = 5;

#[derive(Debug, Clone, Copy)]
struct GbdtParams {
    rounds: usize,
    learning_rate: f64,
    max_depth: usize,
    subsample: f64,
    l2_leaf_reg: f64,
    early_stop_patience: usize,
}

impl GbdtParams {
    fn from_spec(spec: &SublearnerSpec) -> Result<Self, SublearnerError> {
        let defaults = match spec.kind {
            SublearnerKind::GbdtA => GbdtParams {
                rounds: 500,
                learning_rate: 0.05,
                max_depth: 6,
                subsample: 0.8,
                l2_leaf_reg: 0.0,
                early_stop_patience: 20,
            },
            SublearnerKind::GbdtB => GbdtParams {
                rounds: 800,
                learning_rate: 0.03,
                max_depth: 8,
                subsample: 1.0,
                l2_leaf_reg: 1.0,
                early_stop_patience: 20,
            },
            SublearnerKind::Mlp => {
                return Err(SublearnerError::WrongKind {
                    expected: "gbdt_a or gbdt_b",
                    got: spec.kind.name().to_string(),
                })
            }
        };
        let h = &spec.hyperparameters;
        reject_unknown_keys(
            h,
            &[
                "rounds",
                "learning_rate",
                "max_depth",
                "subsample",
                "l2_leaf_reg",
                "early_stop_patience",
            ],
            spec.kind,
        )?;
        Ok(GbdtParams {
            rounds: int_param(h, "rounds", defaults.rounds, 1, 100_000)?,
            learning_rate: real_param(h, "learning_rate", defaults.learning_rate, 1e-6, 10.0)?,
            max_depth: int_param(h, "max_depth", defaults.max_depth, 0, 32)?,
            subsample: {
                let v = real_param(h, "subsample", defaults.subsample, 0.0, 1.0)?;
                if v <= 0.0 {
                    return Err(SublearnerError::BadHyperparameter {
                        key: "subsample".to_string(),
                        reason: "must be in (0, 1]".to_string(),
                    });
                }
                v
            },
            l2_leaf_reg: real_param(h, "l2_leaf_reg", defaults.l2_leaf_reg, 0.0, 1e9)?,
            early_stop_patience: int_param(
                h,
                "early_stop_patience",
                defaults.early_stop_patience,
                0,
                100_000,
            )?,
        })
    }
}

/// One tree node. Children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Routes one row to a leaf. Values equal to a threshold go left.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".to_string());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(format!("leaf {i} is not finite"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features {
                        return Err(format!(
                            "node {i} splits feature {feature}, only {n_features} exist"
                        ));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} threshold is not finite"));
                    }
                    // Children after parents makes cycles impossible.
                    if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len()
                    {
                        return Err(format!("node {i} has out-of-order child indices"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fitted boosted-tree model. Leaf values already include the learning
/// rate, so prediction is the base score plus a plain sum over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += tree.predict_row(row);
        }
        acc
    }

    pub fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        let standard = rows.as_standard_layout();
        standard
            .rows()
            .into_iter()
            .map(|r| self.predict_row(r.as_slice().expect("standard layout")))
            .collect()
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        if !self.base_score.is_finite() {
            return Err("base score is not finite".to_string());
        }
        if self.trees.len() > 1_000_000 {
            return Err("implausible tree count".to_string());
        }
        for tree in &self.trees {
            tree.validate(n_features)?;
        }
        Ok(())
    }
}

/// Workspace for one boosting run over the fitted subset.
struct Grower<'a> {
    columns: &'a [Vec<f64>],
    residuals: &'a [f64],
    max_depth: usize,
    scale: f64, // learning rate applied at the leaves
    l2: f64,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// Sum of residuals over a node's rows, accumulated in the order of the
    /// first feature list (a fixed order, for bit determinism).
    fn node_sum(&self, rows: &[u32]) -> f64 {
        rows.iter().map(|&i| self.residuals[i as usize]).sum()
    }

    fn push_leaf(&mut self, sum: f64, n: usize) -> usize {
        let value = self.scale * sum / (n as f64 + self.l2);
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    /// Grows a subtree over `lists` (one sorted row-index list per feature,
    /// all holding the same row set) and returns its root node index.
    fn grow(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let n = lists[0].len();
        let sum = self.node_sum(&lists[0]);
        if depth >= self.max_depth || n < 2 {
            return self.push_leaf(sum, n);
        }

        // Exact greedy scan: best positive variance-reduction gain wins;
        // scanning features then thresholds in increasing order makes a
        // strict comparison implement the tie-breaks.
        let l2 = self.l2;
        let parent_score = sum * sum / (n as f64 + l2);
        let mut best: Option<(f64, usize, f64, usize)> = None; // gain, feature, threshold, left count
        for (j, list) in lists.iter().enumerate() {
            let col = &self.columns[j];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = list[k] as usize;
                left_sum += self.residuals[i];
                let v1 = col[i];
                let v2 = col[list[k + 1] as usize];
                if v1 == v2 {
                    continue;
                }
                let n_left = (k + 1) as f64;
                let n_right = (n - k - 1) as f64;
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / (n_left + l2)
                    + right_sum * right_sum / (n_right + l2)
                    - parent_score;
                if gain > 0.0 && best.map_or(true, |(g, ..)| gain > g) {
                    let mut threshold = v1 + (v2 - v1) * 0.5;
                    // Adjacent floats can round the midpoint onto v2.
                    if threshold >= v2 {
                        threshold = v1;
                    }
                    best = Some((gain, j, threshold, k + 1));
                }
            }
        }

        let Some((_, feature, threshold, n_left)) = best else {
            return self.push_leaf(sum, n);
        };

        // Stable partition of every feature list preserves sortedness.
        let col = &self.columns[feature];
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in &lists {
            let mut l = Vec::with_capacity(n_left);
            let mut r = Vec::with_capacity(n - n_left);
            for &i in list {
                if col[i as usize] <= threshold {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);

        let node_idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
        let left = self.grow(left_lists, depth + 1);
        let right = self.grow(right_lists, depth + 1);
        self.nodes[node_idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_idx
    }
}

/// Draws `k` distinct row indices from `0..n`, returned sorted.
fn sample_rows(rng: &mut ChaCha20Rng, n: usize, k: usize) -> Vec<u32> {
    use rand::Rng;
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

pub(crate) fn train(
    x: &FeatureMatrix,
    y: &TargetVector,
    spec: &SublearnerSpec,
) -> Result<GbdtModel, SublearnerError> {
    let params = GbdtParams::from_spec(spec)?;
    let n = x.n_rows();
    if n < 10 {
        return Err(SublearnerError::TooFewRows { needed: 10, got: n });
    }

    // Constant target: nothing to fit beyond the mean.
    let y_all = &y.values;
    let first = y_all[0];
    if y_all.iter().all(|&v| v == first) {
        log::warn!(
            "{}: target is constant ({first}); returning a mean-only model",
            spec.kind
        );
        return Ok(GbdtModel {
            base_score: first,
            trees: Vec::new(),
        });
    }

    let (n_fit, n_val) =
        holdout_split(n, params.early_stop_patience, MIN_VALIDATION_ROWS);

    // Column-major copy of the fitted subset for cache-friendly scans.
    let d = x.n_cols();
    let rows = x.rows();
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..n_fit).map(|i| rows[(i, j)]).collect())
        .collect();
    let y_fit = &y_all[..n_fit];
    let base_score = y_fit.iter().sum::<f64>() / n_fit as f64;

    // Per-feature index lists sorted by (value, row); partitioned per node.
    let sorted_lists: Vec<Vec<u32>> = (0..d)
        .map(|j| {
            let mut idx: Vec<u32> = (0..n_fit as u32).collect();
            idx.sort_by(|&a, &b| {
                let (va, vb) = (columns[j][a as usize], columns[j][b as usize]);
                va.partial_cmp(&vb).expect("finite features").then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut residuals: Vec<f64> = y_fit.iter().map(|&v| v - base_score).collect();
    let mut val_pred = vec![base_score; n_val];
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let subsampled = params.subsample < 1.0;
    let k_sample = ((params.subsample * n_fit as f64).floor() as usize).max(2);

    let mut trees: Vec<Tree> = Vec::new();
    let mut best_val_mse = f64::INFINITY;
    let mut best_len = 0usize;
    let mut stale = 0usize;
    if n_val > 0 {
        best_val_mse = val_mse(&val_pred, &y_all[n_fit..]);
    }

    for _round in 0..params.rounds {
        let root_lists: Vec<Vec<u32>> = if subsampled {
            let chosen = sample_rows(&mut rng, n_fit, k_sample);
            let mut mask = vec![false; n_fit];
            for &i in &chosen {
                mask[i as usize] = true;
            }
            sorted_lists
                .iter()
                .map(|list| list.iter().copied().filter(|&i| mask[i as usize]).collect())
                .collect()
        } else {
            sorted_lists.clone()
        };

        let mut grower = Grower {
            columns: &columns,
            residuals: &residuals,
            max_depth: params.max_depth,
            scale: params.learning_rate,
            l2: params.l2_leaf_reg,
            nodes: Vec::new(),
        };
        grower.grow(root_lists, 0);
        let tree = Tree {
            nodes: grower.nodes,
        };

        // Update fitted-subset predictions (all rows, sampled or not).
        for (i, r) in residuals.iter_mut().enumerate() {
            *r -= predict_col_major(&tree, &columns, i);
        }

        trees.push(tree);

        if n_val > 0 {
            let tree = trees.last().expect("just pushed");
            for (k, pred) in val_pred.iter_mut().enumerate() {
                let row = rows.row(n_fit + k);
                let row = row.as_slice().expect("standard layout");
                *pred += tree.predict_row(row);
            }
            let mse = val_mse(&val_pred, &y_all[n_fit..]);
            if mse < best_val_mse {
                best_val_mse = mse;
                best_len = trees.len();
                stale = 0;
            } else {
                stale += 1;
                if stale >= params.early_stop_patience {
                    break;
                }
            }
        }
    }

    if n_val > 0 {
        trees.truncate(best_len);
    }
    Ok(GbdtModel { base_score, trees })
}

/// Tree traversal against column-major training data (no row gather).
fn predict_col_major(tree: &Tree, columns: &[Vec<f64>], row: usize) -> f64 {
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Leaf { value } => return *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                i = if columns[*feature][row] <= *threshold {
                    *left
                } else {
                    *right
                };
            }
        }
    }
}

fn val_mse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}
