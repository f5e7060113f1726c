//! Random-forest FCS imputer: CART forests per incomplete variable with an
//! optional predictive-mean-matching refinement on the forest predictions.
//!
//! Stochasticity for multiple imputation comes from bootstrap resampling,
//! random split candidates, a single randomly chosen tree per regression
//! draw, and sampling from class proportions for classification targets.

use super::{Drawn, ImputedSet, SurvivalInModel, SweepOptions, TargetTask, VisitOrder};
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{ColumnKind, Dataset};
use ndarray::Array2;
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestTask {
    Regression,
    Classification { n_classes: usize },
}

fn default_trees() -> usize {
    50
}
fn default_min_leaf() -> usize {
    5
}
fn default_max_iter() -> usize {
    21
}
fn default_m() -> usize {
    5
}
fn default_tol() -> f64 {
    // imputed-mean jitter from single-tree draws never settles below the
    // chained-equations tolerance; the forest sweep is converged for
    // practical purposes once systematic drift is within a couple percent
    0.02
}
fn default_true() -> bool {
    true
}
fn default_visit() -> VisitOrder {
    VisitOrder::Monotone
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// 0 disables the pmm refinement.
    #[serde(default)]
    pub pmm_donors: usize,
    #[serde(default = "default_true")]
    pub include_outcomes: bool,
    #[serde(default)]
    pub one_hot_numeric_bins: bool,
    #[serde(default)]
    pub one_hot_categorical: bool,
    #[serde(default = "default_visit")]
    pub visit_order: VisitOrder,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    /// Split candidates per node; defaults to sqrt(p) for classification and
    /// p/3 for regression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_tol")]
    pub early_stop_tol: f64,
    #[serde(default)]
    pub survival_in_model: SurvivalInModel,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: default_trees(),
            pmm_donors: 0,
            include_outcomes: true,
            one_hot_numeric_bins: false,
            one_hot_categorical: false,
            visit_order: VisitOrder::Monotone,
            max_iter: default_max_iter(),
            m: default_m(),
            seed: 0,
            mtry: None,
            min_leaf: default_min_leaf(),
            early_stop_tol: default_tol(),
            survival_in_model: SurvivalInModel::EventAndTime,
        }
    }
}

enum Node {
    Leaf {
        /// mean (regression) or class proportions (classification)
        value: f64,
        proportions: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct Tree {
    nodes: Vec<Node>,
    in_bag: Vec<bool>,
}

pub struct Forest {
    trees: Vec<Tree>,
    task: ForestTask,
    /// constant-target stub: every prediction equals this value
    stub: Option<f64>,
    n_rows: usize,
}

struct TreeBuilder<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    task: ForestTask,
    mtry: usize,
    min_leaf: usize,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&self, rows: &[usize]) -> Node {
        match self.task {
            ForestTask::Regression => {
                let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
                Node::Leaf {
                    value: mean,
                    proportions: Vec::new(),
                }
            }
            ForestTask::Classification { n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &r in rows {
                    counts[self.y[r] as usize] += 1.0;
                }
                let total = rows.len() as f64;
                counts.iter_mut().for_each(|c| *c /= total);
                Node::Leaf {
                    value: 0.0,
                    proportions: counts,
                }
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y[rows[0]];
        rows.iter().all(|&r| self.y[r] == first)
    }

    /// Best (threshold, score) for one feature, or None when no admissible
    /// split exists. Lower score is better.
    fn best_split_on(&self, rows: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = rows
            .iter()
            .map(|&r| (self.x[[r, feature]], self.y[r]))
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = pairs.len();
        match self.task {
            ForestTask::Regression => {
                let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
                let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
                let mut left_sum = 0.0;
                let mut left_sq = 0.0;
                let mut best: Option<(f64, f64)> = None;
                for i in 0..n - 1 {
                    left_sum += pairs[i].1;
                    left_sq += pairs[i].1 * pairs[i].1;
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = (n - i - 1) as f64;
                    if (i + 1) < self.min_leaf || (n - i - 1) < self.min_leaf {
                        continue;
                    }
                    let sse_l = left_sq - left_sum * left_sum / nl;
                    let right_sum = total_sum - left_sum;
                    let sse_r = (total_sq - left_sq) - right_sum * right_sum / nr;
                    let score = sse_l + sse_r;
                    if best.map_or(true, |(_, s)| score < s) {
                        best = Some((0.5 * (pairs[i].0 + pairs[i + 1].0), score));
                    }
                }
                best
            }
            ForestTask::Classification { n_classes } => {
                let mut total = vec![0.0f64; n_classes];
                for p in &pairs {
                    total[p.1 as usize] += 1.0;
                }
                let mut left = vec![0.0f64; n_classes];
                let mut best: Option<(f64, f64)> = None;
                for i in 0..n - 1 {
                    left[pairs[i].1 as usize] += 1.0;
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    if (i + 1) < self.min_leaf || (n - i - 1) < self.min_leaf {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = (n - i - 1) as f64;
                    let gini = |counts: &[f64], size: f64| {
                        1.0 - counts
                            .iter()
                            .map(|c| (c / size) * (c / size))
                            .sum::<f64>()
                    };
                    let right: Vec<f64> =
                        total.iter().zip(left.iter()).map(|(t, l)| t - l).collect();
                    let score = nl * gini(&left, nl) + nr * gini(&right, nr);
                    if best.map_or(true, |(_, s)| score < s) {
                        best = Some((0.5 * (pairs[i].0 + pairs[i + 1].0), score));
                    }
                }
                best
            }
        }
    }

    fn node_score(&self, rows: &[usize]) -> f64 {
        match self.task {
            ForestTask::Regression => {
                let n = rows.len() as f64;
                let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
                let sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
                sq - sum * sum / n
            }
            ForestTask::Classification { n_classes } => {
                let mut counts = vec![0.0f64; n_classes];
                for &r in rows {
                    counts[self.y[r] as usize] += 1.0;
                }
                let n = rows.len() as f64;
                n * (1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>())
            }
        }
    }

    fn build(&self, rows: Vec<usize>, nodes: &mut Vec<Node>, rng: &mut ChaCha12Rng) -> usize {
        if rows.len() < 2 * self.min_leaf || self.is_pure(&rows) {
            nodes.push(self.leaf(&rows));
            return nodes.len() - 1;
        }
        let p = self.x.ncols();
        // partial Fisher-Yates for mtry distinct features
        let mut feats: Vec<usize> = (0..p).collect();
        let take = self.mtry.min(p);
        for i in 0..take {
            let j = rng.random_range(i..p);
            feats.swap(i, j);
        }
        let parent_score = self.node_score(&rows);
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &feats[..take] {
            if let Some((threshold, score)) = self.best_split_on(&rows, f) {
                if best.map_or(true, |(_, _, s)| score < s) {
                    best = Some((f, threshold, score));
                }
            }
        }
        match best {
            Some((feature, threshold, score)) if parent_score - score > 1e-12 => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .into_iter()
                    .partition(|&r| self.x[[r, feature]] < threshold);
                let placeholder = nodes.len();
                nodes.push(Node::Leaf {
                    value: 0.0,
                    proportions: Vec::new(),
                });
                let left = self.build(left_rows, nodes, rng);
                let right = self.build(right_rows, nodes, rng);
                nodes[placeholder] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                placeholder
            }
            _ => {
                nodes.push(self.leaf(&rows));
                nodes.len() - 1
            }
        }
    }
}

impl Forest {
    fn predict_tree<'t>(&self, tree: &'t Tree, row: impl Fn(usize) -> f64) -> (f64, &'t [f64]) {
        let mut idx = 0;
        loop {
            match &tree.nodes[idx] {
                Node::Leaf { value, proportions } => return (*value, proportions),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row(*feature) < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Mean prediction (regression) over all trees.
    pub fn predict_mean(&self, x: &Array2<f64>, r: usize) -> f64 {
        if let Some(c) = self.stub {
            return c;
        }
        let total: f64 = self
            .trees
            .iter()
            .map(|t| self.predict_tree(t, |f| x[[r, f]]).0)
            .sum();
        total / self.trees.len() as f64
    }

    /// Prediction of a single tree, the stochastic regression draw.
    pub fn predict_single_tree(&self, x: &Array2<f64>, r: usize, tree_index: usize) -> f64 {
        if let Some(c) = self.stub {
            return c;
        }
        self.predict_tree(&self.trees[tree_index], |f| x[[r, f]]).0
    }

    /// Averaged class proportions over trees.
    pub fn predict_proportions(&self, x: &Array2<f64>, r: usize) -> Vec<f64> {
        let ForestTask::Classification { n_classes } = self.task else {
            panic!("predict_proportions on a regression forest");
        };
        let mut acc = vec![0.0; n_classes];
        for t in &self.trees {
            let (_, props) = self.predict_tree(t, |f| x[[r, f]]);
            for (a, p) in acc.iter_mut().zip(props.iter()) {
                *a += p;
            }
        }
        let nt = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= nt);
        acc
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Out-of-bag mean predictions (regression); rows never out of bag fall
    /// back to the full-forest mean.
    pub fn oob_predictions(&self, x: &Array2<f64>) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| {
                if self.stub.is_some() {
                    return self.stub.unwrap();
                }
                let mut total = 0.0;
                let mut count = 0usize;
                for t in &self.trees {
                    if !t.in_bag[r] {
                        total += self.predict_tree(t, |f| x[[r, f]]).0;
                        count += 1;
                    }
                }
                if count == 0 {
                    self.predict_mean(x, r)
                } else {
                    total / count as f64
                }
            })
            .collect()
    }
}

/// Fit a bootstrap CART forest.
pub fn fit_forest(
    x: &Array2<f64>,
    y: &[f64],
    task: ForestTask,
    cfg: &ForestConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Forest> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Contract("x/y length mismatch".into()));
    }
    if n < 2 * cfg.min_leaf {
        return Err(Error::Contract(format!(
            "forest needs at least {} rows",
            2 * cfg.min_leaf
        )));
    }
    if task == ForestTask::Regression {
        let first = y[0];
        if y.iter().all(|&v| v == first) {
            log::warn!("constant regression target: forest degenerates to a stub predictor");
            return Ok(Forest {
                trees: Vec::new(),
                task,
                stub: Some(first),
                n_rows: n,
            });
        }
    }
    let p = x.ncols();
    let mtry = cfg.mtry.unwrap_or(match task {
        ForestTask::Regression => (p / 3).max(1),
        ForestTask::Classification { .. } => (p as f64).sqrt().floor() as usize,
    });
    let mtry = mtry.clamp(1, p.max(1));
    let builder = TreeBuilder {
        x,
        y,
        task,
        mtry,
        min_leaf: cfg.min_leaf,
    };
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _t in 0..cfg.n_trees {
        let tree_seed: u64 = rng.random();
        let mut tree_rng = ChaCha12Rng::seed_from_u64(tree_seed);
        let mut in_bag = vec![false; n];
        let rows: Vec<usize> = (0..n)
            .map(|_| {
                let r = tree_rng.random_range(0..n);
                in_bag[r] = true;
                r
            })
            .collect();
        let mut nodes = Vec::new();
        builder.build(rows, &mut nodes, &mut tree_rng);
        trees.push(Tree { nodes, in_bag });
    }
    Ok(Forest {
        trees,
        task,
        stub: None,
        n_rows: n,
    })
}

/// Forest-based chained imputation.
pub fn run_forest_imputer(ds: &Dataset, cfg: &ForestConfig) -> Result<Vec<ImputedSet>> {
    if cfg.n_trees < 1 {
        return Err(Error::Config("forest needs n_trees >= 1".into()));
    }
    let opts = SweepOptions {
        include_outcomes: cfg.include_outcomes,
        survival: cfg.survival_in_model,
        visit_order: cfg.visit_order,
        max_iter: cfg.max_iter,
        early_stop_tol: cfg.early_stop_tol,
        m: cfg.m,
        seed: cfg.seed,
        min_obs_warn_ratio: 2,
    };
    let cfg = cfg.clone();
    super::run_chained(
        ds,
        cfg.one_hot_numeric_bins,
        cfg.one_hot_categorical,
        &opts,
        move || {
            let cfg = cfg.clone();
            Box::new(move |task: &TargetTask, rng: &mut ChaCha12Rng| {
                match task.kind {
                    ColumnKind::Numeric => {
                        let forest = fit_forest(
                            &task.x_obs,
                            &task.y_obs,
                            ForestTask::Regression,
                            &cfg,
                            rng,
                        )?;
                        if cfg.pmm_donors > 0 {
                            let pred_obs: Vec<f64> = (0..task.x_obs.nrows())
                                .map(|r| forest.predict_mean(&task.x_obs, r))
                                .collect();
                            let pred_mis: Vec<f64> = (0..task.x_mis.nrows())
                                .map(|r| forest.predict_mean(&task.x_mis, r))
                                .collect();
                            Ok(Drawn::Donors(super::match_donors(
                                &pred_obs,
                                &pred_mis,
                                cfg.pmm_donors,
                                rng,
                            )?))
                        } else {
                            let out = (0..task.x_mis.nrows())
                                .map(|r| {
                                    let t = rng.random_range(0..forest.n_trees().max(1));
                                    forest.predict_single_tree(&task.x_mis, r, t)
                                })
                                .collect();
                            Ok(Drawn::Values(out))
                        }
                    }
                    ColumnKind::Binary => {
                        let forest = fit_forest(
                            &task.x_obs,
                            &task.y_obs,
                            ForestTask::Classification { n_classes: 2 },
                            &cfg,
                            rng,
                        )?;
                        if cfg.pmm_donors > 0 {
                            let pred_obs: Vec<f64> = (0..task.x_obs.nrows())
                                .map(|r| forest.predict_proportions(&task.x_obs, r)[1])
                                .collect();
                            let pred_mis: Vec<f64> = (0..task.x_mis.nrows())
                                .map(|r| forest.predict_proportions(&task.x_mis, r)[1])
                                .collect();
                            Ok(Drawn::Donors(super::match_donors(
                                &pred_obs,
                                &pred_mis,
                                cfg.pmm_donors,
                                rng,
                            )?))
                        } else {
                            let out = (0..task.x_mis.nrows())
                                .map(|r| {
                                    let p1 = forest.predict_proportions(&task.x_mis, r)[1];
                                    if rng.random::<f64>() < p1 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                })
                                .collect();
                            Ok(Drawn::Values(out))
                        }
                    }
                    ColumnKind::Categorical => {
                        // class-proportion sampling; the scalar pmm refinement
                        // does not extend to multi-class targets
                        let forest = fit_forest(
                            &task.x_obs,
                            &task.y_obs,
                            ForestTask::Classification {
                                n_classes: task.n_categories,
                            },
                            &cfg,
                            rng,
                        )?;
                        let out = (0..task.x_mis.nrows())
                            .map(|r| {
                                let props = forest.predict_proportions(&task.x_mis, r);
                                rng::draw_categorical(rng, &props)
                            })
                            .collect();
                        Ok(Drawn::Categories(out))
                    }
                }
            })
        },
    )
}
