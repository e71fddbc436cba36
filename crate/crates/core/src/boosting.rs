//! Stochastic boosting of shallow trees. Regression fits residuals
//! (gradient boosting without line search); binary classification fits the
//! log-loss gradient and refits each leaf with a Newton step. The fitted
//! model doubles as the oracle that labels generated data.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Task};
use crate::seed;
use crate::tree::{fit_tree, BoundTree, TreeConfig, TreeNode};
use crate::{Error, Result};

/// Logits are clamped to ±`LOGIT_CLAMP` before the logistic transform.
pub const LOGIT_CLAMP: f64 = 36.0;
/// Floor for the hessian sum of a Newton leaf refit.
pub const HESSIAN_FLOOR: f64 = 1e-6;

pub fn sigmoid(logit: f64) -> f64 {
    1.0 / (1.0 + (-logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub subsample_fraction: f64,
    /// Draw each tree's subsample with replacement instead of without.
    pub with_replacement: bool,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            learning_rate: 0.01,
            subsample_fraction: 0.5,
            with_replacement: false,
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        self.tree.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub config: BoostConfig,
    pub task: Task,
    /// Initial prediction: mean outcome, or the log-odds of the positive rate.
    pub baseline: f64,
    pub learning_rate: f64,
    pub features: Vec<FeatureSpec>,
    pub trees: Vec<TreeNode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Regression values, or probabilities for classification.
    Value,
    /// Regression values, or logits for classification.
    Logit,
}

fn draw_subsample(rng: &mut seed::Rng, n: usize, cfg: &BoostConfig) -> Vec<usize> {
    let m = ((cfg.subsample_fraction * n as f64).round() as usize).clamp(1, n);
    if cfg.with_replacement {
        let mut rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        rows.sort_unstable();
        rows
    } else if m == n {
        (0..n).collect()
    } else {
        let mut rows = index::sample(rng, n, m).into_vec();
        rows.sort_unstable();
        rows
    }
}

pub fn fit_boost(train: &Dataset, cfg: &BoostConfig) -> Result<BoostModel> {
    fit_boost_observed(train, cfg, |_, _| {})
}

/// As [`fit_boost`], calling `observe(b, pseudo_response)` before tree `b`
/// (zero-based) is fit.
pub fn fit_boost_observed<F>(train: &Dataset, cfg: &BoostConfig, mut observe: F) -> Result<BoostModel>
where
    F: FnMut(usize, &[f64]),
{
    cfg.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let y = train.outcome_values()?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("outcome contains missing values".into()));
    }
    let task = train.task();
    let baseline = match task {
        Task::Regression => y.iter().sum::<f64>() / n as f64,
        Task::BinaryClassification => {
            let p = y.iter().sum::<f64>() / n as f64;
            if p <= 0.0 || p >= 1.0 {
                return Err(Error::InvalidData("training outcome has a single class".into()));
            }
            (p / (1.0 - p)).ln()
        }
    };
    let features = train
        .features()
        .map(|c| FeatureSpec {
            name: c.name().to_string(),
            kind: c.kind(),
            levels: c.levels().to_vec(),
        })
        .collect();

    let mut rng = seed::rng(cfg.seed);
    let mut f = vec![baseline; n];
    let mut pseudo = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for b in 0..cfg.n_trees {
        match task {
            Task::Regression => pseudo.iter_mut().zip(&y).zip(&f).for_each(|((r, y), f)| *r = y - f),
            Task::BinaryClassification => {
                pseudo.iter_mut().zip(&y).zip(&f).for_each(|((r, y), f)| *r = y - sigmoid(*f))
            }
        }
        observe(b, &pseudo);
        let rows = draw_subsample(&mut rng, n, cfg);
        let mut tree = fit_tree(train, &pseudo, &rows, &cfg.tree)?;
        if task == Task::BinaryClassification {
            newton_refit(&mut tree, train, &rows, &pseudo, &f)?;
        }
        let bound = tree.bind(train)?;
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += cfg.learning_rate * bound.predict(i);
        }
        trees.push(tree);
    }
    Ok(BoostModel {
        config: cfg.clone(),
        task,
        baseline,
        learning_rate: cfg.learning_rate,
        features,
        trees,
    })
}

/// Replace each leaf value by Σ gradient / Σ hessian over the leaf's subsample rows.
fn newton_refit(tree: &mut TreeNode, train: &Dataset, rows: &[usize], gradient: &[f64], f: &[f64]) -> Result<()> {
    let leaves = {
        let bound = tree.bind(train)?;
        rows.iter().map(|&r| bound.leaf_of(r)).collect::<Vec<_>>()
    };
    let n_leaves = tree.n_leaves();
    let mut num = vec![0.0; n_leaves];
    let mut den = vec![0.0; n_leaves];
    for (&r, &leaf) in rows.iter().zip(&leaves) {
        let p = sigmoid(f[r]);
        num[leaf] += gradient[r];
        den[leaf] += p * (1.0 - p);
    }
    for (i, v) in tree.leaf_values_mut().into_iter().enumerate() {
        *v = num[i] / den[i].max(HESSIAN_FLOOR);
    }
    Ok(())
}

impl BoostModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Check that `data` carries every feature the model was trained on with the same kind.
    pub fn check_schema(&self, data: &Dataset) -> Result<()> {
        for f in &self.features {
            let col = data
                .column(&f.name)
                .ok_or_else(|| Error::SchemaMismatch(format!("feature '{}' is absent", f.name)))?;
            if col.kind() != f.kind {
                return Err(Error::SchemaMismatch(format!(
                    "feature '{}' is {:?}, model expects {:?}",
                    f.name,
                    col.kind(),
                    f.kind
                )));
            }
        }
        Ok(())
    }

    fn bind_all<'a>(&self, data: &'a Dataset) -> Result<Vec<BoundTree<'a>>> {
        self.trees.iter().map(|t| t.bind(data)).collect()
    }

    /// Baseline plus the learning-rate-weighted sum of tree predictions:
    /// regression values, or logits for classification.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let bound = self.bind_all(data)?;
        Ok((0..data.n_rows())
            .map(|r| self.baseline + self.learning_rate * bound.iter().map(|t| t.predict(r)).sum::<f64>())
            .collect())
    }

    /// Predicted class codes (1 = positive) for classification, `logit > 0`.
    pub fn predict_class(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict(data)?.into_iter().map(|l| if l > 0.0 { 1.0 } else { 0.0 }).collect())
    }

    /// Oracle labels for (generated) rows.
    pub fn oracle_label(&self, data: &Dataset, mode: LabelMode) -> Result<Vec<f64>> {
        let raw = self.predict(data)?;
        Ok(match (self.task, mode) {
            (Task::BinaryClassification, LabelMode::Value) => raw.into_iter().map(sigmoid).collect(),
            _ => raw,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict_boost(model: &BoostModel, data: &Dataset) -> Result<Vec<f64>> {
    model.predict(data)
}

pub fn oracle_label(model: &BoostModel, data: &Dataset, mode: LabelMode) -> Result<Vec<f64>> {
    model.oracle_label(data, mode)
}
