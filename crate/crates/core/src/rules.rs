//! Rule harvesting from a boosted ensemble and construction of the term
//! matrix (rule indicators plus winsorized, rescaled linear terms) that the
//! Lasso selects from.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boosting::BoostModel;
use crate::data::{column_quantile, ColumnData, Dataset, RowValues};
use crate::matrix::{sample_sd, DenseMatrix};
use crate::tree::{BoundCondition, NodeKind, SplitCondition, Test, TreeNode};
use crate::{Error, Result};

pub const WINSOR_LOWER_Q: f64 = 0.025;
pub const WINSOR_UPPER_Q: f64 = 0.975;
/// Linear terms are rescaled to this standard deviation on the training data.
pub const LINEAR_TERM_SD: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSource {
    pub tree: usize,
    /// Preorder index of the node the rule describes (root = 0).
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<SplitCondition>,
    pub source: RuleSource,
}

impl Rule {
    /// Distinct features referenced by the rule, sorted.
    pub fn features(&self) -> BTreeSet<&str> {
        self.conditions.iter().map(|c| c.feature.as_str()).collect()
    }

    pub fn holds(&self, row: &impl RowValues) -> Result<bool> {
        for c in &self.conditions {
            if !c.holds(row)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn bind<'a>(&self, data: &'a Dataset) -> Result<BoundRule<'a>> {
        Ok(BoundRule {
            conditions: self.conditions.iter().map(|c| c.bind(data)).collect::<Result<_>>()?,
        })
    }

    /// 0/1 indicator over every row of `data`.
    pub fn evaluate(&self, data: &Dataset) -> Result<Vec<f64>> {
        let b = self.bind(data)?;
        Ok((0..data.n_rows()).map(|r| if b.holds(r) { 1.0 } else { 0.0 }).collect())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

pub struct BoundRule<'a> {
    conditions: Vec<BoundCondition<'a>>,
}

impl BoundRule<'_> {
    #[inline]
    pub fn holds(&self, row: usize) -> bool {
        self.conditions.iter().all(|c| c.holds(row))
    }
}

/// Append `cond` to a path, merging it with an earlier condition on the
/// same feature and operator so each (feature, op) appears once.
fn push_merged(path: &mut Vec<SplitCondition>, cond: SplitCondition) {
    let same = path
        .iter_mut()
        .find(|c| c.feature == cond.feature && std::mem::discriminant(&c.test) == std::mem::discriminant(&cond.test));
    let Some(existing) = same else {
        path.push(cond);
        return;
    };
    existing.test = match (&existing.test, cond.test) {
        (Test::LessEq(a), Test::LessEq(b)) => Test::LessEq(a.min(b)),
        (Test::Greater(a), Test::Greater(b)) => Test::Greater(a.max(b)),
        (Test::In(a), Test::In(b)) => Test::In(a.iter().filter(|l| b.contains(l)).cloned().collect()),
        (Test::NotIn(a), Test::NotIn(b)) => {
            let mut u = a.clone();
            u.extend(b.into_iter().filter(|l| !a.contains(l)));
            Test::NotIn(u)
        }
        _ => unreachable!("discriminants match"),
    };
}

/// Every non-root node of every tree becomes a rule: the conjunction of
/// conditions from the root to that node. Order is tree index, then preorder.
pub fn extract_rules(model: &BoostModel) -> Vec<Rule> {
    let mut rules = Vec::new();
    for (t, tree) in model.trees.iter().enumerate() {
        let mut counter = 0usize;
        harvest(tree, t, &mut counter, &mut Vec::new(), &mut rules);
    }
    rules
}

fn harvest(node: &TreeNode, tree: usize, counter: &mut usize, path: &mut Vec<SplitCondition>, out: &mut Vec<Rule>) {
    let id = *counter;
    *counter += 1;
    if id > 0 {
        out.push(Rule {
            conditions: path.clone(),
            source: RuleSource { tree, node: id },
        });
    }
    if let NodeKind::Split { condition, left, right } = &node.kind {
        for (child, cond) in [(left, condition.clone()), (right, condition.negate())] {
            let mut child_path = path.clone();
            push_merged(&mut child_path, cond);
            harvest(child, tree, counter, &mut child_path, out);
        }
    }
}

fn bitset(rule: &Rule, data: &Dataset) -> Result<Vec<u64>> {
    let b = rule.bind(data)?;
    let n = data.n_rows();
    let mut bits = vec![0u64; n.div_ceil(64)];
    for r in 0..n {
        if b.holds(r) {
            bits[r / 64] |= 1 << (r % 64);
        }
    }
    Ok(bits)
}

fn complement(bits: &[u64], n: usize) -> Vec<u64> {
    let mut c: Vec<u64> = bits.iter().map(|w| !w).collect();
    if n % 64 != 0 {
        if let Some(last) = c.last_mut() {
            *last &= (1u64 << (n % 64)) - 1;
        }
    }
    c
}

/// Keep the first occurrence of each distinct indicator column on `train`,
/// dropping exact duplicates, exact complements of kept columns, and
/// constant columns.
pub fn dedup_and_decollinearize(rules: Vec<Rule>, train: &Dataset) -> Result<Vec<Rule>> {
    let n = train.n_rows();
    let zeros = vec![0u64; n.div_ceil(64)];
    let ones = complement(&zeros, n);
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut kept = Vec::new();
    for rule in rules {
        let bits = bitset(&rule, train)?;
        if bits == zeros || bits == ones {
            continue;
        }
        let comp = complement(&bits, n);
        if seen.contains(&bits) || seen.contains(&comp) {
            continue;
        }
        seen.insert(bits);
        kept.push(rule);
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub feature: String,
    pub lower: f64,
    pub upper: f64,
    /// 0.4 / sd of the winsorized training values.
    pub scale: f64,
}

impl LinearTerm {
    #[inline]
    pub fn transform(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper) * self.scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Rule(Rule),
    Linear(LinearTerm),
}

impl Term {
    pub fn features(&self) -> BTreeSet<&str> {
        match self {
            Term::Rule(r) => r.features(),
            Term::Linear(l) => BTreeSet::from([l.feature.as_str()]),
        }
    }

    pub fn is_rule(&self) -> bool {
        matches!(self, Term::Rule(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Rule(r) => write!(f, "{r}"),
            Term::Linear(l) => write!(f, "linear({}, [{:?}, {:?}])", l.feature, l.lower, l.upper),
        }
    }
}

/// Frozen term metadata: everything needed to evaluate terms on new rows
/// in the training split's coordinate system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub terms: Vec<Term>,
}

impl TermSpec {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn restrict(&self, keep: &[usize]) -> TermSpec {
        TermSpec {
            terms: keep.iter().map(|&i| self.terms[i].clone()).collect(),
        }
    }

    pub fn n_rules(&self) -> usize {
        self.terms.iter().filter(|t| t.is_rule()).count()
    }

    /// Evaluate every term on `data`, one column per term.
    pub fn evaluate(&self, data: &Dataset) -> Result<DenseMatrix> {
        let n = data.n_rows();
        let mut m = DenseMatrix::zeros(n, self.terms.len());
        for (j, term) in self.terms.iter().enumerate() {
            let col = m.col_mut(j);
            match term {
                Term::Rule(rule) => {
                    let b = rule.bind(data)?;
                    for (r, v) in col.iter_mut().enumerate() {
                        *v = if b.holds(r) { 1.0 } else { 0.0 };
                    }
                }
                Term::Linear(lin) => {
                    let src = data
                        .column(&lin.feature)
                        .ok_or_else(|| Error::MissingColumn(lin.feature.clone()))?;
                    let ColumnData::Continuous(x) = src.data() else {
                        return Err(Error::SchemaMismatch(format!("linear term on categorical '{}'", lin.feature)));
                    };
                    for (v, &xi) in col.iter_mut().zip(x) {
                        *v = lin.transform(xi);
                    }
                }
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermMatrix {
    pub spec: TermSpec,
    /// Term values on the training rows.
    pub values: DenseMatrix,
}

/// Rule columns first, then (optionally) one winsorized, rescaled linear
/// term per continuous feature. Constant features get no linear term.
pub fn build_term_matrix(rules: Vec<Rule>, train: &Dataset, include_linear: bool) -> Result<TermMatrix> {
    let mut terms: Vec<Term> = rules.into_iter().map(Term::Rule).collect();
    if include_linear {
        for col in train.features() {
            let Some(x) = col.as_continuous() else { continue };
            let lower = column_quantile(col, WINSOR_LOWER_Q)?;
            let upper = column_quantile(col, WINSOR_UPPER_Q)?;
            let clamped: Vec<f64> = x.iter().map(|v| v.clamp(lower, upper)).collect();
            let sd = sample_sd(&clamped);
            if !(sd.is_finite() && sd > 0.0) {
                log::warn!("feature '{}' has zero variance after winsorizing; no linear term", col.name());
                continue;
            }
            terms.push(Term::Linear(LinearTerm {
                feature: col.name().to_string(),
                lower,
                upper,
                scale: LINEAR_TERM_SD / sd,
            }));
        }
    }
    let spec = TermSpec { terms };
    let values = spec.evaluate(train)?;
    Ok(TermMatrix { spec, values })
}

pub fn evaluate_terms(spec: &TermSpec, data: &Dataset) -> Result<DenseMatrix> {
    spec.evaluate(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::{fit_boost, BoostConfig};
    use crate::data::{Column, Task, Value};
    use crate::seed;
    use crate::tree::TreeConfig;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn model_with(trees: Vec<TreeNode>) -> BoostModel {
        BoostModel {
            config: BoostConfig::default(),
            task: Task::Regression,
            baseline: 0.0,
            learning_rate: 0.01,
            features: vec![],
            trees,
        }
    }

    fn le(f: &str, t: f64) -> SplitCondition {
        SplitCondition::new(f, Test::LessEq(t))
    }

    fn stump() -> TreeNode {
        TreeNode::split(0, le("x", 2.0), TreeNode::leaf(1, 0.0), TreeNode::leaf(1, 1.0))
    }

    #[test]
    fn stump_yields_both_sides() {
        let rules = extract_rules(&model_with(vec![stump()]));
        let text: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(text, vec!["x <= 2.0", "x > 2.0"]);
        assert_eq!(rules[1].source, RuleSource { tree: 0, node: 2 });
    }

    #[test]
    fn depth_two_tree_enumeration() {
        // Root on x, left child splits on z, right child is a leaf... plus a
        // right-side split on w: three internal nodes, six rules.
        let tree = TreeNode::split(
            0,
            le("x", 2.0),
            TreeNode::split(1, le("z", 1.0), TreeNode::leaf(2, 0.0), TreeNode::leaf(2, 1.0)),
            TreeNode::split(1, le("w", 5.0), TreeNode::leaf(2, 2.0), TreeNode::leaf(2, 3.0)),
        );
        let rules = extract_rules(&model_with(vec![tree.clone()]));
        // Enumeration oracle: every non-root node is a rule.
        fn count_nodes(t: &TreeNode) -> usize {
            match &t.kind {
                NodeKind::Leaf { .. } => 1,
                NodeKind::Split { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
            }
        }
        assert_eq!(rules.len(), count_nodes(&tree) - 1);
        assert_eq!(rules.len(), 2 * tree.n_internal());
        let text: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "x <= 2.0",
                "x <= 2.0 & z <= 1.0",
                "x <= 2.0 & z > 1.0",
                "x > 2.0",
                "x > 2.0 & w <= 5.0",
                "x > 2.0 & w > 5.0",
            ]
        );
    }

    #[test]
    fn repeated_feature_conditions_merge() {
        let tree = TreeNode::split(
            0,
            le("x", 5.0),
            TreeNode::split(1, le("x", 3.0), TreeNode::leaf(2, 0.0), TreeNode::leaf(2, 1.0)),
            TreeNode::leaf(1, 2.0),
        );
        let rules = extract_rules(&model_with(vec![tree]));
        let text: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(text[1], "x <= 3.0");
        assert_eq!(text[2], "x <= 5.0 & x > 3.0");
    }

    #[test]
    fn leaf_only_model_has_no_rules() {
        assert!(extract_rules(&model_with(vec![TreeNode::leaf(0, 1.0)])).is_empty());
    }

    fn xz_data() -> Dataset {
        Dataset::new(
            vec![
                Column::continuous("x", vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
                Column::continuous("z", vec![0.0, 1.0, 2.0, 0.0, 9.0]).unwrap(),
            ],
            None,
            Task::Regression,
        )
        .unwrap()
    }

    fn rule(conds: Vec<SplitCondition>) -> Rule {
        Rule {
            conditions: conds,
            source: RuleSource { tree: 0, node: 1 },
        }
    }

    #[test]
    fn dedup_examples() {
        let d = xz_data();
        let kept = dedup_and_decollinearize(vec![rule(vec![le("x", 2.0)]), rule(vec![le("x", 2.0)])], &d).unwrap();
        assert_eq!(kept.len(), 1);
        let gt = rule(vec![SplitCondition::new("x", Test::Greater(2.0))]);
        let kept = dedup_and_decollinearize(vec![rule(vec![le("x", 2.0)]), gt], &d).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].to_string(), "x <= 2.0");
        // Different text, same indicator on these rows: x <= 2.5 vs x <= 2.0.
        let kept = dedup_and_decollinearize(vec![rule(vec![le("x", 2.0)]), rule(vec![le("x", 2.5)])], &d).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn dedup_matches_bruteforce_on_random_rules() {
        let mut rng = seed::rng(17);
        let n = 70;
        let d = Dataset::new(
            vec![
                Column::continuous("a", (0..n).map(|_| rng.random_range(0..6) as f64).collect()).unwrap(),
                Column::continuous("b", (0..n).map(|_| rng.random_range(0..6) as f64).collect()).unwrap(),
            ],
            None,
            Task::Regression,
        )
        .unwrap();
        let mut rules = Vec::new();
        for _ in 0..300 {
            let mut conds = vec![le("a", rng.random_range(0..6) as f64)];
            if rng.random::<bool>() {
                conds.push(SplitCondition::new("b", Test::Greater(rng.random_range(0..6) as f64)));
            }
            rules.push(rule(conds));
        }
        let cols: Vec<Vec<f64>> = rules.iter().map(|r| r.evaluate(&d).unwrap()).collect();
        let kept = dedup_and_decollinearize(rules.clone(), &d).unwrap();
        // Brute force: walk the list, keep a column unless it equals or
        // complements an already-kept column or is constant.
        let mut oracle: Vec<&Vec<f64>> = Vec::new();
        let mut oracle_rules = Vec::new();
        for (r, c) in rules.iter().zip(&cols) {
            let constant = c.iter().all(|&v| v == c[0]);
            let clash = oracle.iter().any(|k| {
                k.iter().zip(c.iter()).all(|(a, b)| a == b) || k.iter().zip(c.iter()).all(|(a, b)| *a == 1.0 - *b)
            });
            if !constant && !clash {
                oracle.push(c);
                oracle_rules.push(r.clone());
            }
        }
        assert_eq!(kept, oracle_rules);
    }

    fn linear_data() -> Dataset {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.731).sin() * 3.0 + if i == 7 { 50.0 } else { 0.0 }).collect();
        Dataset::new(
            vec![
                Column::continuous("x", x).unwrap(),
                Column::continuous("k", vec![4.0; 200]).unwrap(),
                Column::from_labels("g", &vec![Some("a"); 200]),
            ],
            None,
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn linear_terms_scaled_to_point_four() {
        let d = linear_data();
        let tm = build_term_matrix(vec![], &d, true).unwrap();
        // Constant and categorical features get no linear term.
        assert_eq!(tm.spec.len(), 1);
        let col = tm.values.col(0);
        assert!((sample_sd(col) - 0.4).abs() < 1e-9);
        let Term::Linear(lin) = &tm.spec.terms[0] else { panic!() };
        assert!(lin.upper < 50.0);
        assert!((lin.scale - 0.4 / sample_sd(&d.column("x").unwrap().as_continuous().unwrap().iter().map(|v| v.clamp(lin.lower, lin.upper)).collect::<Vec<_>>())).abs() < 1e-12);
        let without = build_term_matrix(vec![], &d, false).unwrap();
        assert_eq!(without.spec.len(), 0);
    }

    #[test]
    fn sd_two_gives_scale_point_two() {
        // Values ±2 alternating have sample sd 2·sqrt(n/(n-1)); rescale the
        // values so the winsorized sample sd is exactly 2.
        let n = 40;
        let base: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = sample_sd(&base);
        let x: Vec<f64> = base.iter().map(|v| v * 2.0 / s).collect();
        let d = Dataset::new(vec![Column::continuous("x", x).unwrap()], None, Task::Regression).unwrap();
        let tm = build_term_matrix(vec![], &d, true).unwrap();
        let Term::Linear(lin) = &tm.spec.terms[0] else { panic!() };
        assert!((lin.scale - 0.2).abs() < 1e-12);
    }

    #[test]
    fn evaluation_reuses_training_bounds() {
        let d = linear_data();
        let tm = build_term_matrix(vec![rule(vec![le("x", 0.0)])], &d, true).unwrap();
        assert_eq!(evaluate_terms(&tm.spec, &d).unwrap(), tm.values);
        let Term::Linear(lin) = &tm.spec.terms[1] else { panic!() };
        let test = Dataset::new(
            vec![
                Column::continuous("x", vec![1e6, -1e6]).unwrap(),
                Column::continuous("k", vec![0.0, 0.0]).unwrap(),
                Column::from_labels("g", &[Some("a"), Some("a")]),
            ],
            None,
            Task::Regression,
        )
        .unwrap();
        let m = evaluate_terms(&tm.spec, &test).unwrap();
        assert_eq!(m.get(0, 1), lin.upper * lin.scale);
        assert_eq!(m.get(1, 1), lin.lower * lin.scale);
        let missing = test.drop_columns(&["x".to_string()]).unwrap();
        assert!(matches!(evaluate_terms(&tm.spec, &missing), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn conjunction_semantics() {
        let r = rule(vec![le("x", 2.0), SplitCondition::new("z", Test::Greater(1.0))]);
        let row = BTreeMap::from([("x".to_string(), Value::Number(2.0)), ("z".to_string(), Value::Number(1.0))]);
        assert!(!r.holds(&row).unwrap());
        let row = BTreeMap::from([("x".to_string(), Value::Number(2.0)), ("z".to_string(), Value::Number(1.5))]);
        assert!(r.holds(&row).unwrap());
    }

    #[test]
    fn categorical_rule_rendering() {
        let r = rule(vec![le("x1", 2.0), SplitCondition::new("x3", Test::In(vec!["A".into(), "B".into()]))]);
        assert_eq!(r.to_string(), "x1 <= 2.0 & x3 in {A,B}");
    }

    #[test]
    fn boosted_rules_pass_invariants() {
        let mut rng = seed::rng(3);
        let n = 150;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let g: Vec<Option<&str>> = (0..n).map(|_| Some(["p", "q", "r"][rng.random_range(0..3)])).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] * 4.0 + z[i] + if g[i] == Some("q") { 2.0 } else { 0.0 }).collect();
        let d = Dataset::new(
            vec![
                Column::continuous("x", x).unwrap(),
                Column::continuous("z", z).unwrap(),
                Column::from_labels("g", &g),
                Column::continuous("y", y).unwrap(),
            ],
            Some("y"),
            Task::Regression,
        )
        .unwrap();
        let cfg = BoostConfig {
            n_trees: 40,
            learning_rate: 0.1,
            tree: TreeConfig {
                min_node_size: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = fit_boost(&d, &cfg).unwrap();
        let rules = extract_rules(&model);
        let internal: usize = model.trees.iter().map(TreeNode::n_internal).sum();
        assert_eq!(rules.len(), 2 * internal);
        for r in &rules {
            assert!((1..=3).contains(&r.conditions.len()));
            let mut keys = HashSet::new();
            for c in &r.conditions {
                assert!(keys.insert((c.feature.clone(), std::mem::discriminant(&c.test))));
            }
        }
        let kept = dedup_and_decollinearize(rules, &d).unwrap();
        let tm = build_term_matrix(kept, &d, true).unwrap();
        let n_rules = tm.spec.n_rules();
        for a in 0..n_rules {
            let ca = tm.values.col(a);
            assert!(ca.iter().all(|&v| v == 0.0 || v == 1.0));
            for b in 0..a {
                let cb = tm.values.col(b);
                assert!(ca != cb);
                assert!(!ca.iter().zip(cb).all(|(p, q)| *p == 1.0 - *q));
            }
        }
        // Row order independence of evaluation.
        let rev: Vec<usize> = (0..n).rev().collect();
        let m_rev = evaluate_terms(&tm.spec, &d.select_rows(&rev)).unwrap();
        for j in 0..tm.spec.len() {
            for i in 0..n {
                assert_eq!(m_rev.get(i, j), tm.values.get(n - 1 - i, j));
            }
        }
    }
}
