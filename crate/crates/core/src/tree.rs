//! Depth-limited regression trees grown "test first, then split": at each
//! node a correlation test with Bonferroni correction picks the split
//! feature (and decides whether to split at all), then an exhaustive
//! SSE search picks the cutpoint on that feature.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Cell, ColumnData, Dataset, RowValues, MISSING_CODE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "threshold")]
pub enum Test {
    #[serde(rename = "<=")]
    LessEq(f64),
    #[serde(rename = ">")]
    Greater(f64),
    #[serde(rename = "in")]
    In(Vec<String>),
    #[serde(rename = "not in")]
    NotIn(Vec<String>),
}

impl Test {
    pub fn negate(&self) -> Test {
        match self {
            Test::LessEq(t) => Test::Greater(*t),
            Test::Greater(t) => Test::LessEq(*t),
            Test::In(s) => Test::NotIn(s.clone()),
            Test::NotIn(s) => Test::In(s.clone()),
        }
    }

    /// Missing cells satisfy no test.
    pub fn holds(&self, cell: Cell<'_>) -> Result<bool> {
        match (self, cell) {
            (_, Cell::Missing) => Ok(false),
            (Test::LessEq(t), Cell::Number(x)) => Ok(x <= *t),
            (Test::Greater(t), Cell::Number(x)) => Ok(x > *t),
            (Test::In(s), Cell::Level(l)) => Ok(s.iter().any(|v| v == l)),
            (Test::NotIn(s), Cell::Level(l)) => Ok(!s.iter().any(|v| v == l)),
            _ => Err(Error::SchemaMismatch(format!("test {self:?} applied to {cell:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCondition {
    pub feature: String,
    #[serde(flatten)]
    pub test: Test,
}

impl SplitCondition {
    pub fn new(feature: impl Into<String>, test: Test) -> Self {
        Self {
            feature: feature.into(),
            test,
        }
    }

    pub fn negate(&self) -> SplitCondition {
        SplitCondition {
            feature: self.feature.clone(),
            test: self.test.negate(),
        }
    }

    pub fn holds(&self, row: &impl RowValues) -> Result<bool> {
        let cell = row
            .cell(&self.feature)
            .ok_or_else(|| Error::MissingColumn(self.feature.clone()))?;
        self.test.holds(cell)
    }

    /// Resolve the feature against a dataset for fast bulk evaluation.
    pub fn bind<'a>(&self, data: &'a Dataset) -> Result<BoundCondition<'a>> {
        let col = data
            .column(&self.feature)
            .ok_or_else(|| Error::MissingColumn(self.feature.clone()))?;
        let mismatch = || Error::SchemaMismatch(format!("condition '{self}' does not fit column '{}'", col.name()));
        match (&self.test, col.data()) {
            (Test::LessEq(t), ColumnData::Continuous(v)) => Ok(BoundCondition::LessEq(v, *t)),
            (Test::Greater(t), ColumnData::Continuous(v)) => Ok(BoundCondition::Greater(v, *t)),
            (Test::In(s) | Test::NotIn(s), ColumnData::Categorical { levels, codes }) => {
                let negate = matches!(self.test, Test::NotIn(_));
                let mask = levels.iter().map(|l| s.contains(l) != negate).collect();
                Ok(BoundCondition::Levels { codes, mask })
            }
            _ => Err(mismatch()),
        }
    }
}

impl fmt::Display for SplitCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.test {
            Test::LessEq(t) => write!(f, "{} <= {:?}", self.feature, t),
            Test::Greater(t) => write!(f, "{} > {:?}", self.feature, t),
            Test::In(s) => write!(f, "{} in {{{}}}", self.feature, s.join(",")),
            Test::NotIn(s) => write!(f, "{} not in {{{}}}", self.feature, s.join(",")),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BoundCondition<'a> {
    LessEq(&'a [f64], f64),
    Greater(&'a [f64], f64),
    /// `mask[code]` is true when the level satisfies the test.
    Levels { codes: &'a [u32], mask: Vec<bool> },
}

impl BoundCondition<'_> {
    #[inline]
    pub fn holds(&self, row: usize) -> bool {
        match self {
            // NaN comparisons are false, so missing cells fail both tests.
            BoundCondition::LessEq(v, t) => v[row] <= *t,
            BoundCondition::Greater(v, t) => v[row] > *t,
            BoundCondition::Levels { codes, mask } => {
                let c = codes[row];
                c != MISSING_CODE && mask[c as usize]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub alpha: f64,
    pub min_node_size: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            alpha: 0.05,
            min_node_size: 7,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.min_node_size < 1 {
            return Err(Error::Config("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeKind {
    Split {
        /// Rows satisfying the condition go left.
        condition: SplitCondition,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn leaf(depth: usize, value: f64) -> Self {
        Self {
            depth,
            kind: NodeKind::Leaf { value },
        }
    }

    pub fn split(depth: usize, condition: SplitCondition, left: TreeNode, right: TreeNode) -> Self {
        Self {
            depth,
            kind: NodeKind::Split {
                condition,
                left: Box::new(left),
                right: Box::new(right),
            },
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn n_internal(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { .. } => 0,
            NodeKind::Split { left, right, .. } => 1 + left.n_internal() + right.n_internal(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { .. } => 1,
            NodeKind::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Longest root-to-leaf path, counted in conditions.
    pub fn height(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { .. } => 0,
            NodeKind::Split { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    /// Leaf values in preorder.
    pub fn leaf_values_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a mut TreeNode, out: &mut Vec<&'a mut f64>) {
            match &mut n.kind {
                NodeKind::Leaf { value } => out.push(value),
                NodeKind::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Route a single row. Errors if the row lacks a feature the path needs.
    pub fn predict_row(&self, row: &impl RowValues) -> Result<f64> {
        let mut node = self;
        loop {
            match &node.kind {
                NodeKind::Leaf { value } => return Ok(*value),
                NodeKind::Split { condition, left, right } => {
                    node = if condition.holds(row)? { left } else { right };
                }
            }
        }
    }

    pub fn bind<'a>(&self, data: &'a Dataset) -> Result<BoundTree<'a>> {
        let mut nodes = Vec::new();
        let mut n_leaves = 0;
        fn walk<'a>(n: &TreeNode, data: &'a Dataset, nodes: &mut Vec<BoundNode<'a>>, leaves: &mut usize) -> Result<usize> {
            let id = nodes.len();
            match &n.kind {
                NodeKind::Leaf { value } => {
                    nodes.push(BoundNode::Leaf { leaf: *leaves, value: *value });
                    *leaves += 1;
                }
                NodeKind::Split { condition, left, right } => {
                    nodes.push(BoundNode::Split {
                        condition: condition.bind(data)?,
                        left: 0,
                        right: 0,
                    });
                    let l = walk(left, data, nodes, leaves)?;
                    let r = walk(right, data, nodes, leaves)?;
                    if let BoundNode::Split { left, right, .. } = &mut nodes[id] {
                        *left = l;
                        *right = r;
                    }
                }
            }
            Ok(id)
        }
        walk(self, data, &mut nodes, &mut n_leaves)?;
        Ok(BoundTree { nodes, n_leaves })
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let bound = self.bind(data)?;
        Ok((0..data.n_rows()).map(|r| bound.predict(r)).collect())
    }
}

#[derive(Clone, Debug)]
enum BoundNode<'a> {
    Leaf { leaf: usize, value: f64 },
    Split { condition: BoundCondition<'a>, left: usize, right: usize },
}

/// A tree whose conditions are resolved against one dataset.
#[derive(Clone, Debug)]
pub struct BoundTree<'a> {
    nodes: Vec<BoundNode<'a>>,
    n_leaves: usize,
}

impl BoundTree<'_> {
    fn reach(&self, row: usize) -> (usize, f64) {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                BoundNode::Leaf { leaf, value } => return (*leaf, *value),
                BoundNode::Split { condition, left, right } => {
                    i = if condition.holds(row) { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub fn predict(&self, row: usize) -> f64 {
        self.reach(row).1
    }

    /// Preorder index of the leaf reached by `row`.
    #[inline]
    pub fn leaf_of(&self, row: usize) -> usize {
        self.reach(row).0
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }
}

#[derive(Clone, Copy)]
enum FeatureValues<'a> {
    Num(&'a [f64]),
    Cat { codes: &'a [u32], levels: &'a [String] },
}

#[derive(Clone, Copy)]
struct Feature<'a> {
    name: &'a str,
    values: FeatureValues<'a>,
}

fn features_of(data: &Dataset) -> Vec<Feature<'_>> {
    data.features()
        .map(|c| Feature {
            name: c.name(),
            values: match c.data() {
                ColumnData::Continuous(v) => FeatureValues::Num(v),
                ColumnData::Categorical { levels, codes } => FeatureValues::Cat { codes, levels },
            },
        })
        .collect()
}

/// The feature picked for a split and its Bonferroni-adjusted p-value.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: String,
    pub p_value: f64,
}

/// Two-sided p-value of a Pearson correlation `r` over `n` observations,
/// via the t statistic with n − 2 degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 || !r.is_finite() {
        return 1.0;
    }
    let r2 = r * r;
    if r2 >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r2)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t)).min(1.0)
}

/// Score vector for the association test: raw values for continuous
/// features, per-level mean response for categorical ones.
fn correlation_with_response(f: &FeatureValues<'_>, response: &[f64], rows: &[usize]) -> Option<f64> {
    let n = rows.len() as f64;
    let score: Box<dyn Fn(usize) -> f64> = match *f {
        FeatureValues::Num(v) => Box::new(move |r| v[r]),
        FeatureValues::Cat { codes, levels } => {
            let mut sum = vec![0.0; levels.len()];
            let mut cnt = vec![0usize; levels.len()];
            for &r in rows {
                let c = codes[r] as usize;
                sum[c] += response[r];
                cnt[c] += 1;
            }
            let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
            Box::new(move |r| means[codes[r] as usize])
        }
    };
    let (mut sx, mut sy) = (0.0, 0.0);
    for &r in rows {
        sx += score(r);
        sy += response[r];
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &r in rows {
        let dx = score(r) - mx;
        let dy = response[r] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Near-constant scores come from rounding, not from signal.
    if sxx <= 1e-24 * n * (1.0 + mx * mx) || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn select_feature(features: &[Feature<'_>], response: &[f64], rows: &[usize], alpha: f64) -> Option<(usize, f64)> {
    let m = features.len() as f64;
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in features.iter().enumerate() {
        let p = match correlation_with_response(&f.values, response, rows) {
            Some(r) => correlation_p_value(r, rows.len()),
            None => 1.0,
        };
        let adjusted = (p * m).min(1.0);
        if best.map_or(true, |(_, b)| adjusted < b) {
            best = Some((i, adjusted));
        }
    }
    best.filter(|&(_, p)| p <= alpha)
}

/// Pick the feature with the smallest Bonferroni-adjusted correlation-test
/// p-value among all features of `data`; `None` if it exceeds `alpha`.
/// `response` is indexed by dataset row; `rows` selects (possibly repeated) node rows.
pub fn select_split_feature(data: &Dataset, response: &[f64], rows: &[usize], alpha: f64) -> Option<SplitChoice> {
    let features = features_of(data);
    select_feature(&features, response, rows, alpha).map(|(i, p)| SplitChoice {
        feature: features[i].name.to_string(),
        p_value: p,
    })
}

/// Tracks the best cut while scanning sorted groups.
struct CutScan {
    total_sum: f64,
    total_n: usize,
    min_child: usize,
    best: Option<(usize, f64)>,
}

impl CutScan {
    /// `pos` is the scan position; left holds `n_left` rows summing to `s_left`.
    fn offer(&mut self, pos: usize, n_left: usize, s_left: f64) {
        let n_right = self.total_n - n_left;
        if n_left < self.min_child || n_right < self.min_child {
            return;
        }
        let s_right = self.total_sum - s_left;
        // Maximising this is equivalent to maximising the SSE reduction.
        let gain = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64;
        let better = match self.best {
            None => true,
            Some((_, b)) => gain > b + 1e-12 * b.abs().max(1e-300),
        };
        if better {
            self.best = Some((pos, gain));
        }
    }
}

fn best_cut(f: &Feature<'_>, response: &[f64], rows: &[usize], min_child: usize) -> Option<SplitCondition> {
    let total_sum: f64 = rows.iter().map(|&r| response[r]).sum();
    let mut scan = CutScan {
        total_sum,
        total_n: rows.len(),
        min_child,
        best: None,
    };
    match f.values {
        FeatureValues::Num(v) => {
            let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&r| (v[r], response[r])).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut s = 0.0;
            for i in 0..pairs.len() - 1 {
                s += pairs[i].1;
                if pairs[i].0 < pairs[i + 1].0 {
                    scan.offer(i, i + 1, s);
                }
            }
            scan.best
                .map(|(i, _)| SplitCondition::new(f.name, Test::LessEq(pairs[i].0)))
        }
        FeatureValues::Cat { codes, levels } => {
            let mut sum = vec![0.0; levels.len()];
            let mut cnt = vec![0usize; levels.len()];
            for &r in rows {
                let c = codes[r] as usize;
                sum[c] += response[r];
                cnt[c] += 1;
            }
            let mut present: Vec<usize> = (0..levels.len()).filter(|&c| cnt[c] > 0).collect();
            present.sort_by(|&a, &b| {
                let (ma, mb) = (sum[a] / cnt[a] as f64, sum[b] / cnt[b] as f64);
                ma.total_cmp(&mb).then(a.cmp(&b))
            });
            let (mut s, mut n) = (0.0, 0);
            for (k, &c) in present.iter().enumerate().take(present.len().saturating_sub(1)) {
                s += sum[c];
                n += cnt[c];
                scan.offer(k, n, s);
            }
            scan.best.map(|(k, _)| {
                let chosen: HashSet<usize> = present[..=k].iter().copied().collect();
                let subset = (0..levels.len())
                    .filter(|c| chosen.contains(c))
                    .map(|c| levels[c].clone())
                    .collect();
                SplitCondition::new(f.name, Test::In(subset))
            })
        }
    }
}

/// SSE-optimal binary cut of `feature` over the node rows. Continuous
/// features cut at observed values (`x <= v` goes left); categorical levels
/// are ordered by mean response and scanned the same way. Ties go to the
/// smaller threshold. Each side must keep at least `min_child` rows.
pub fn best_threshold(
    data: &Dataset,
    feature: &str,
    response: &[f64],
    rows: &[usize],
    min_child: usize,
) -> Result<Option<SplitCondition>> {
    let features = features_of(data);
    let f = features
        .iter()
        .find(|f| f.name == feature)
        .ok_or_else(|| Error::MissingColumn(feature.to_string()))?;
    let constant = match f.values {
        FeatureValues::Num(v) => rows.iter().all(|&r| v[r] == v[rows[0]]),
        FeatureValues::Cat { codes, .. } => rows.iter().all(|&r| codes[r] == codes[rows[0]]),
    };
    if rows.is_empty() || constant {
        return Err(Error::InvalidArgument(format!("feature '{feature}' is constant on the node")));
    }
    Ok(best_cut(f, response, rows, min_child.max(1)))
}

/// Grow a tree on the (possibly repeated) `rows` of `data`, fitting `response`
/// (indexed by dataset row). Leaves predict the mean response of their rows.
pub fn fit_tree(data: &Dataset, response: &[f64], rows: &[usize], cfg: &TreeConfig) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    if response.len() != data.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "response has {} values for {} rows",
            response.len(),
            data.n_rows()
        )));
    }
    if rows.iter().any(|&r| !response[r].is_finite()) {
        return Err(Error::InvalidData("non-finite response".into()));
    }
    cfg.validate()?;
    let features = features_of(data);
    Ok(grow(&features, response, rows.to_vec(), 0, cfg))
}

fn grow(features: &[Feature<'_>], response: &[f64], rows: Vec<usize>, depth: usize, cfg: &TreeConfig) -> TreeNode {
    let n = rows.len();
    let mean = rows.iter().map(|&r| response[r]).sum::<f64>() / n as f64;
    let first = response[rows[0]];
    let constant = rows.iter().all(|&r| response[r] == first);
    if depth >= cfg.max_depth || n < 2 * cfg.min_node_size || constant {
        return TreeNode::leaf(depth, mean);
    }
    let Some((fi, _)) = select_feature(features, response, &rows, cfg.alpha) else {
        return TreeNode::leaf(depth, mean);
    };
    let Some(condition) = best_cut(&features[fi], response, &rows, cfg.min_node_size) else {
        return TreeNode::leaf(depth, mean);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = {
        let test = &condition.test;
        rows.iter().partition(|&&r| match (&features[fi].values, test) {
            (FeatureValues::Num(v), Test::LessEq(t)) => v[r] <= *t,
            (FeatureValues::Cat { codes, levels }, Test::In(s)) => s.contains(&levels[codes[r] as usize]),
            _ => unreachable!("best_cut emits <= or in"),
        })
    };
    let l = grow(features, response, left, depth + 1, cfg);
    let r = grow(features, response, right, depth + 1, cfg);
    TreeNode::split(depth, condition, l, r)
}
