//! Marginal-resampling data generation labelled by a boosted oracle, and the
//! surrogate (two-level) and nested term-selection pipelines built on it.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boosting::{BoostModel, LabelMode};
use crate::data::{Column, ColumnData, Dataset, Task};
use crate::lasso::{cv_lasso, Family, LassoConfig, LassoFit};
use crate::matrix::DenseMatrix;
use crate::rules::{TermMatrix, TermSpec};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Rows drawn before duplicate removal.
    pub n_gen: usize,
    pub seed: u64,
    /// Defaults to values for regression and logits for classification.
    pub label_mode: Option<LabelMode>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_gen: 10_000,
            seed: 0,
            label_mode: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_gen == 0 {
            return Err(Error::InvalidArgument("n_gen must be >= 1".into()));
        }
        Ok(())
    }

    pub fn mode_for(&self, task: Task) -> LabelMode {
        self.label_mode.unwrap_or(match task {
            Task::Regression => LabelMode::Value,
            Task::BinaryClassification => LabelMode::Logit,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the training features as CSV.
    pub source_id: String,
    /// SHA-256 of the oracle model JSON.
    pub oracle_id: String,
    pub seed: u64,
    pub requested_rows: usize,
    pub realized_rows: usize,
    pub label_mode: LabelMode,
}

#[derive(Clone, Debug)]
pub struct GeneratedDataset {
    pub features: Dataset,
    pub labels: Vec<f64>,
    pub provenance: Provenance,
}

impl GeneratedDataset {
    /// Features plus an `oracle_label` column.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut name = "oracle_label".to_string();
        while self.features.column(&name).is_some() {
            name.push('_');
        }
        let mut cols = self.features.columns().to_vec();
        cols.push(Column::continuous(name, self.labels.clone())?);
        Dataset::new(cols, None, Task::Regression)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_dataset()?.write_csv(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dataset_id(data: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    data.to_csv_writer(&mut buf)?;
    Ok(hex(&Sha256::digest(&buf)))
}

pub fn model_id(model: &BoostModel) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(model)?)))
}

fn cell_key(col: &Column, row: usize) -> u64 {
    match col.data() {
        ColumnData::Continuous(v) => {
            let x = v[row];
            // Fold -0.0 onto 0.0 and every NaN onto one payload.
            if x.is_nan() {
                f64::NAN.to_bits()
            } else {
                (x + 0.0).to_bits()
            }
        }
        ColumnData::Categorical { codes, .. } => codes[row] as u64,
    }
}

/// Resample each feature independently with replacement `n_gen` times, then
/// keep the first occurrence of every distinct row.
pub fn generate_features(train: &Dataset, cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut rng = seed::rng(cfg.seed);
    let drawn: Vec<Column> = train
        .features()
        .map(|c| {
            let idx: Vec<usize> = (0..cfg.n_gen).map(|_| rng.random_range(0..n)).collect();
            c.select(&idx)
        })
        .collect();
    let mut seen = HashSet::with_capacity(cfg.n_gen);
    let mut keep = Vec::new();
    for r in 0..cfg.n_gen {
        let key: Vec<u64> = drawn.iter().map(|c| cell_key(c, r)).collect();
        if seen.insert(key) {
            keep.push(r);
        }
    }
    let cols = drawn.iter().map(|c| c.select(&keep)).collect();
    Dataset::new(cols, None, train.task())
}

/// Generated features labelled by `oracle`.
pub fn make_generated(train: &Dataset, oracle: &BoostModel, cfg: &GenConfig) -> Result<GeneratedDataset> {
    oracle.check_schema(train)?;
    let features = generate_features(train, cfg)?;
    let mode = cfg.mode_for(oracle.task);
    let labels = oracle.oracle_label(&features, mode)?;
    let provenance = Provenance {
        source_id: dataset_id(&train.features_only())?,
        oracle_id: model_id(oracle)?,
        seed: cfg.seed,
        requested_rows: cfg.n_gen,
        realized_rows: features.n_rows(),
        label_mode: mode,
    };
    Ok(GeneratedDataset {
        features,
        labels,
        provenance,
    })
}

/// A Lasso fit over a subset of a full term list. `term_ids[j]` is the
/// full-list index of the fit's column `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub term_ids: Vec<usize>,
    pub fit: LassoFit,
}

impl Selection {
    /// Full-list indices of the nonzero terms.
    pub fn active_term_ids(&self) -> Vec<usize> {
        self.fit.active_terms().into_iter().map(|j| self.term_ids[j]).collect()
    }

    pub fn n_terms(&self) -> usize {
        self.fit.n_active_terms()
    }

    pub fn is_intercept_only(&self) -> bool {
        self.fit.is_intercept_only()
    }

    /// Nonzero (full-list index, coefficient) pairs.
    pub fn coefficients(&self) -> Vec<(usize, f64)> {
        self.fit.coefficients.iter().map(|(&j, &c)| (self.term_ids[j], c)).collect()
    }

    /// Predictions on `data` for `task`: values for regression, 0/1 classes
    /// (link > 0) for classification regardless of the fit family.
    pub fn predict(&self, full: &TermSpec, data: &Dataset, task: Task) -> Result<Vec<f64>> {
        let x = full.restrict(&self.term_ids).evaluate(data)?;
        let link = self.fit.predict_link(&x);
        Ok(match task {
            Task::Regression => link,
            Task::BinaryClassification => link.into_iter().map(|e| if e > 0.0 { 1.0 } else { 0.0 }).collect(),
        })
    }
}

pub fn family_for(task: Task) -> Family {
    match task {
        Task::Regression => Family::Gaussian,
        Task::BinaryClassification => Family::Binomial,
    }
}

/// Cross-validated Lasso on the real training outcome over all terms.
pub fn regular_select(tm: &TermMatrix, y: &[f64], task: Task, cfg: &LassoConfig) -> Result<Selection> {
    Ok(Selection {
        term_ids: (0..tm.spec.len()).collect(),
        fit: cv_lasso(&tm.values, y, family_for(task), cfg)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub selection: Selection,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstLevel {
    pub level: Level,
    /// Full-list indices of the level-1 nonzero terms.
    pub survivors: Vec<usize>,
    /// Survivors outnumber real training rows.
    pub survivor_warning: bool,
}

/// Seeds for the two generated datasets and their CV fold assignments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSeeds {
    pub level1_gen: u64,
    pub level1_cv: u64,
    pub level2_gen: u64,
    pub level2_cv: u64,
}

impl SurrogateSeeds {
    pub fn derive(master: u64) -> Self {
        Self {
            level1_gen: seed::derive(master, seed::tag::SURROGATE_L1_GEN),
            level1_cv: seed::derive(master, seed::tag::SURROGATE_L1_CV),
            level2_gen: seed::derive(master, seed::tag::SURROGATE_L2_GEN),
            level2_cv: seed::derive(master, seed::tag::SURROGATE_L2_CV),
        }
    }
}

fn select_on_generated(
    spec: &TermSpec,
    term_ids: Vec<usize>,
    train: &Dataset,
    oracle: &BoostModel,
    gen: &GenConfig,
    lasso: &LassoConfig,
) -> Result<Level> {
    let data = make_generated(train, oracle, gen)?;
    let x = if term_ids.is_empty() {
        DenseMatrix::zeros(data.features.n_rows(), 0)
    } else {
        spec.restrict(&term_ids).evaluate(&data.features)?
    };
    // Generated labels are continuous (values or logits).
    let fit = cv_lasso(&x, &data.labels, Family::Gaussian, lasso)?;
    Ok(Level {
        selection: Selection { term_ids, fit },
        provenance: data.provenance,
    })
}

/// Level 1: all terms, fresh generated data, CV on oracle labels.
pub fn first_level(
    spec: &TermSpec,
    train: &Dataset,
    oracle: &BoostModel,
    gen: &GenConfig,
    lasso: &LassoConfig,
    seeds: SurrogateSeeds,
) -> Result<FirstLevel> {
    let level = select_on_generated(
        spec,
        (0..spec.len()).collect(),
        train,
        oracle,
        &gen.with_seed(seeds.level1_gen),
        &LassoConfig {
            seed: seeds.level1_cv,
            ..lasso.clone()
        },
    )?;
    let survivors = level.selection.active_term_ids();
    let survivor_warning = survivors.len() > train.n_rows();
    if survivor_warning {
        log::warn!(
            "level-1 surrogate kept {} terms, more than the {} training rows",
            survivors.len(),
            train.n_rows()
        );
    }
    if survivors.is_empty() {
        log::info!("level-1 surrogate selection is intercept-only");
    }
    Ok(FirstLevel {
        level,
        survivors,
        survivor_warning,
    })
}

/// Level 2: a second, independently generated dataset, restricted to the
/// level-1 survivors.
pub fn second_level(
    spec: &TermSpec,
    first: &FirstLevel,
    train: &Dataset,
    oracle: &BoostModel,
    gen: &GenConfig,
    lasso: &LassoConfig,
    seeds: SurrogateSeeds,
) -> Result<Level> {
    select_on_generated(
        spec,
        first.survivors.clone(),
        train,
        oracle,
        &gen.with_seed(seeds.level2_gen),
        &LassoConfig {
            seed: seeds.level2_cv,
            ..lasso.clone()
        },
    )
}

/// Real-data CV restricted to the level-1 survivors.
pub fn nested_from_first(tm: &TermMatrix, y: &[f64], task: Task, first: &FirstLevel, lasso: &LassoConfig) -> Result<Selection> {
    let x = tm.values.select_cols(&first.survivors);
    Ok(Selection {
        term_ids: first.survivors.clone(),
        fit: cv_lasso(&x, y, family_for(task), lasso)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateResult {
    pub first: FirstLevel,
    pub second: Level,
}

impl SurrogateResult {
    pub fn selection(&self) -> &Selection {
        &self.second.selection
    }
}

/// Two-level surrogate selection; the returned fit is the level-2 one.
pub fn surrogate_select(
    spec: &TermSpec,
    train: &Dataset,
    oracle: &BoostModel,
    gen: &GenConfig,
    lasso: &LassoConfig,
) -> Result<SurrogateResult> {
    let seeds = SurrogateSeeds::derive(gen.seed);
    let first = first_level(spec, train, oracle, gen, lasso, seeds)?;
    let second = second_level(spec, &first, train, oracle, gen, lasso, seeds)?;
    Ok(SurrogateResult { first, second })
}

/// Level-1 surrogate selection followed by real-data CV on its survivors.
/// Uses the same level-1 seeds as [`surrogate_select`].
pub fn nested_select(
    tm: &TermMatrix,
    train: &Dataset,
    oracle: &BoostModel,
    gen: &GenConfig,
    surrogate_lasso: &LassoConfig,
    nested_lasso: &LassoConfig,
) -> Result<(FirstLevel, Selection)> {
    let seeds = SurrogateSeeds::derive(gen.seed);
    let first = first_level(&tm.spec, train, oracle, gen, surrogate_lasso, seeds)?;
    let y = train.outcome_values()?;
    let nested = nested_from_first(tm, &y, train.task(), &first, nested_lasso)?;
    Ok((first, nested))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::{fit_boost, BoostConfig};
    use crate::rules::{build_term_matrix, dedup_and_decollinearize, extract_rules};
    use crate::tree::TreeConfig;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn distinct(c: &Column) -> BTreeSet<u64> {
        (0..c.len()).map(|r| cell_key(c, r)).collect()
    }

    fn check_invariants(train: &Dataset, gen: &Dataset) {
        for src in train.features() {
            let g = gen.column(src.name()).unwrap();
            let (a, b) = (distinct(src), distinct(g));
            assert!(b.is_subset(&a), "column {} drew unseen values", src.name());
        }
        let mut rows = HashSet::new();
        for r in 0..gen.n_rows() {
            let key: Vec<u64> = gen.columns().iter().map(|c| cell_key(c, r)).collect();
            assert!(rows.insert(key), "duplicate generated row {r}");
        }
    }

    #[test]
    fn constant_columns_give_one_row() {
        let d = Dataset::new(
            vec![
                Column::continuous("a", vec![3.0; 12]).unwrap(),
                Column::from_labels("b", &vec![Some("z"); 12]),
            ],
            None,
            Task::Regression,
        )
        .unwrap();
        let g = generate_features(&d, &GenConfig::default()).unwrap();
        assert_eq!(g.n_rows(), 1);
    }

    #[test]
    fn binary_column_has_at_most_two_rows() {
        let d = Dataset::new(
            vec![Column::continuous("a", (0..30).map(|i| (i % 2) as f64).collect()).unwrap()],
            None,
            Task::Regression,
        )
        .unwrap();
        let g = generate_features(&d, &GenConfig::default()).unwrap();
        assert_eq!(g.n_rows(), 2);
    }

    #[test]
    fn unique_count_matches_collision_simulation() {
        // Two columns with 100 distinct values each: 10^4 possible tuples.
        let vals: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = Dataset::new(
            vec![
                Column::continuous("a", vals.clone()).unwrap(),
                Column::continuous("b", vals.iter().rev().copied().collect()).unwrap(),
            ],
            None,
            Task::Regression,
        )
        .unwrap();
        // Independent simulation of the same occupancy process.
        let mut rng = seed::rng(999);
        let mut sims = Vec::new();
        for _ in 0..20 {
            let mut s = HashSet::new();
            for _ in 0..10_000 {
                s.insert((rng.random_range(0..100u32), rng.random_range(0..100u32)));
            }
            sims.push(s.len() as f64);
        }
        let expected = sims.iter().sum::<f64>() / sims.len() as f64;
        // Analytic occupancy: 10^4·(1 − (1 − 10^-4)^(10^4)) ≈ 6321.
        assert!((expected - 6321.0).abs() < 60.0);
        let mut realized = Vec::new();
        for s in 0..20 {
            let g = generate_features(&d, &GenConfig { seed: s, ..Default::default() }).unwrap();
            realized.push(g.n_rows() as f64);
        }
        let got = realized.iter().sum::<f64>() / realized.len() as f64;
        assert!((got - expected).abs() < 40.0, "{got} vs {expected}");
    }

    fn arbitrary_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..25, 1usize..4, 0usize..3).prop_flat_map(|(n, nc, nk)| {
            let conts = proptest::collection::vec(proptest::collection::vec(0i32..5, n), nc);
            let cats = proptest::collection::vec(proptest::collection::vec(0usize..3, n), nk);
            (conts, cats).prop_map(|(conts, cats)| {
                let mut cols = Vec::new();
                for (i, c) in conts.into_iter().enumerate() {
                    cols.push(Column::continuous(format!("c{i}"), c.into_iter().map(|v| v as f64 * 0.5).collect()).unwrap());
                }
                for (i, c) in cats.into_iter().enumerate() {
                    let labels: Vec<Option<&str>> = c.into_iter().map(|v| Some(["p", "q", "r"][v])).collect();
                    cols.push(Column::from_labels(format!("k{i}"), &labels));
                }
                Dataset::new(cols, None, Task::Regression).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn generated_rows_are_unique_and_marginal(d in arbitrary_dataset(), s in 0u64..1000, n_gen in 1usize..300) {
            let g = generate_features(&d, &GenConfig { n_gen, seed: s, label_mode: None }).unwrap();
            prop_assert!(g.n_rows() <= n_gen);
            prop_assert!(g.n_rows() >= 1);
            check_invariants(&d, &g);
        }
    }

    fn regression_setup(n: usize) -> (Dataset, BoostModel, TermMatrix) {
        let mut rng = seed::rng(21);
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| if x1[i] > 10.0 { 3.0 } else { 0.0 } + x2[i] + rng.random::<f64>()).collect();
        let d = Dataset::new(
            vec![
                Column::continuous("x1", x1).unwrap(),
                Column::continuous("x2", x2).unwrap(),
                Column::continuous("y", y).unwrap(),
            ],
            Some("y"),
            Task::Regression,
        )
        .unwrap();
        let cfg = BoostConfig {
            n_trees: 30,
            learning_rate: 0.1,
            tree: TreeConfig {
                min_node_size: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = fit_boost(&d, &cfg).unwrap();
        let rules = dedup_and_decollinearize(extract_rules(&model), &d).unwrap();
        let tm = build_term_matrix(rules, &d, true).unwrap();
        (d, model, tm)
    }

    #[test]
    fn labels_are_deterministic_and_baseline_only_oracle_is_constant() {
        let (d, mut model, _) = regression_setup(80);
        let gen = GenConfig {
            n_gen: 500,
            seed: 5,
            label_mode: None,
        };
        let a = make_generated(&d, &model, &gen).unwrap();
        let b = make_generated(&d, &model, &gen).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.provenance, b.provenance);
        assert_eq!(a.provenance.realized_rows, a.features.n_rows());
        model.trees.clear();
        let c = make_generated(&d, &model, &gen).unwrap();
        assert!(c.labels.iter().all(|&l| l == model.baseline));
        let mut buf = Vec::new();
        a.to_dataset().unwrap().to_csv_writer(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x1,x2,oracle_label"));
    }

    #[test]
    fn constant_oracle_is_intercept_only_at_both_levels() {
        let (d, mut model, tm) = regression_setup(80);
        model.trees.clear();
        let gen = GenConfig { n_gen: 300, ..Default::default() };
        let lasso = LassoConfig { folds: 3, ..Default::default() };
        let r = surrogate_select(&tm.spec, &d, &model, &gen, &lasso).unwrap();
        assert!(r.first.survivors.is_empty());
        assert!(r.selection().is_intercept_only());
    }

    #[test]
    fn restriction_contracts() {
        let (d, model, tm) = regression_setup(120);
        let gen = GenConfig { n_gen: 800, seed: 3, ..Default::default() };
        let sl = LassoConfig { folds: 3, n_lambda: 50, ..Default::default() };
        let nl = LassoConfig { folds: 5, n_lambda: 50, ..Default::default() };
        let r = surrogate_select(&tm.spec, &d, &model, &gen, &sl).unwrap();
        assert!(!r.first.survivors.is_empty());
        let survivors: BTreeSet<usize> = r.first.survivors.iter().copied().collect();
        assert!(r.selection().active_term_ids().iter().all(|t| survivors.contains(t)));
        assert_ne!(r.first.level.provenance.seed, r.second.provenance.seed);
        let (first, nested) = nested_select(&tm, &d, &model, &gen, &sl, &nl).unwrap();
        assert_eq!(first, r.first);
        assert!(nested.active_term_ids().iter().all(|t| survivors.contains(t)));
        let preds = nested.predict(&tm.spec, &d, Task::Regression).unwrap();
        assert_eq!(preds.len(), d.n_rows());
    }

    #[test]
    fn identity_restriction_matches_regular() {
        let (d, model, tm) = regression_setup(100);
        let y = d.outcome_values().unwrap();
        let lasso = LassoConfig { n_lambda: 40, seed: 77, ..Default::default() };
        let regular = regular_select(&tm, &y, Task::Regression, &lasso).unwrap();
        let all = FirstLevel {
            level: Level {
                selection: regular.clone(),
                provenance: make_generated(&d, &model, &GenConfig { n_gen: 10, ..Default::default() }).unwrap().provenance,
            },
            survivors: (0..tm.spec.len()).collect(),
            survivor_warning: false,
        };
        let nested = nested_from_first(&tm, &y, Task::Regression, &all, &lasso).unwrap();
        assert_eq!(nested, regular);
    }
}
