//! Repeated split / fit / select / evaluate protocol, with aggregation into
//! per-method summaries, paired comparisons and stability indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::boosting::{fit_boost, BoostConfig, BoostModel};
use crate::data::{ColumnKind, Dataset, Schema, Task};
use crate::eval::{
    accuracy, importance_slope_correlation, nogueira_stability, paired_ci, quality_per_term, selection_rates,
    simulate_outcome, used_features, variable_importances, PairedStats, SimSpec,
};
use crate::lasso::{LassoConfig, SelectionRule};
use crate::matrix::{mean, sample_sd};
use crate::rules::{build_term_matrix, dedup_and_decollinearize, extract_rules, TermMatrix};
use crate::surrogate::{first_level, nested_from_first, regular_select, second_level, GenConfig, Selection, SurrogateSeeds};
use crate::tree::{NodeKind, TreeNode};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Boosting,
    Regular,
    Surrogate,
    Nested,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Boosting, Method::Regular, Method::Surrogate, Method::Nested];
    pub const LASSOS: [Method; 3] = [Method::Regular, Method::Surrogate, Method::Nested];

    pub fn name(self) -> &'static str {
        match self {
            Method::Boosting => "boosting",
            Method::Regular => "regular",
            Method::Surrogate => "surrogate",
            Method::Nested => "nested",
        }
    }

    pub fn is_lasso(self) -> bool {
        self != Method::Boosting
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    /// (iterations, trees, rows generated per surrogate dataset)
    pub fn settings(self) -> (usize, usize, usize) {
        match self {
            Profile::Desk => (20, 100, 2_000),
            Profile::Paper => (200, 500, 10_000),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV path; relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub outcome: String,
    pub task: Task,
    #[serde(default)]
    pub default_kind: ColumnKind,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub continuous: Vec<String>,
    /// Columns dropped before anything else.
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl DatasetConfig {
    pub fn schema(&self) -> Schema {
        let mut s = Schema {
            default_kind: self.default_kind,
            ..Default::default()
        };
        for c in &self.categorical {
            s = s.with(c.clone(), ColumnKind::Categorical);
        }
        for c in &self.continuous {
            s = s.with(c.clone(), ColumnKind::Continuous);
        }
        s
    }

    /// Load, drop excluded columns, then drop rows with missing cells.
    pub fn load(&self) -> Result<Dataset> {
        let raw = Dataset::load_csv(&self.path, &self.schema(), &self.outcome, self.task)?;
        self.tidy(raw)
    }

    /// As [`DatasetConfig::load`], reading CSV text from `reader` instead of `path`.
    pub fn read(&self, reader: impl std::io::Read) -> Result<Dataset> {
        let raw = Dataset::read_csv(reader, &self.schema(), Some(&self.outcome), self.task)?;
        self.tidy(raw)
    }

    fn tidy(&self, raw: Dataset) -> Result<Dataset> {
        let trimmed = if self.exclude.is_empty() {
            raw
        } else {
            raw.drop_columns(&self.exclude)?
        };
        let clean = trimmed.drop_missing()?;
        if clean.n_rows() < trimmed.n_rows() {
            log::info!(
                "dropped {} rows with missing values from {}",
                trimmed.n_rows() - clean.n_rows(),
                self.path.display()
            );
        }
        Ok(clean)
    }
}

/// Which outcome each iteration models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// The configured outcome column.
    #[default]
    Observed,
    /// Linear outcome from three random continuous features plus noise,
    /// drawn on the full data before splitting.
    Simulated,
    /// A randomly chosen continuous feature, predicted from the others.
    RandomFeature,
}

/// Per-method Lasso settings layered over the method's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_lambda: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<SelectionRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl LassoOverrides {
    fn apply(&self, mut base: LassoConfig) -> LassoConfig {
        if let Some(v) = self.n_lambda {
            base.n_lambda = v;
        }
        if self.lambda_min_ratio.is_some() {
            base.lambda_min_ratio = self.lambda_min_ratio;
        }
        if let Some(v) = self.folds {
            base.folds = v;
        }
        if let Some(v) = self.rule {
            base.rule = v;
        }
        if let Some(v) = self.tol {
            base.tol = v;
        }
        if let Some(v) = self.max_iter {
            base.max_iter = v;
        }
        base
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSettings {
    pub regular: LassoOverrides,
    pub surrogate: LassoOverrides,
    pub nested: LassoOverrides,
}

impl LassoSettings {
    /// Resolved config: 5 folds for regular and nested, 3 for surrogate.
    pub fn for_method(&self, method: Method) -> LassoConfig {
        let base = LassoConfig::default();
        match method {
            Method::Surrogate => self.surrogate.apply(LassoConfig { folds: 3, ..base }),
            Method::Nested => self.nested.apply(base),
            _ => self.regular.apply(base),
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_true() -> bool {
    true
}
fn default_iterations() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub outcome: OutcomeMode,
    #[serde(default = "default_true")]
    pub include_linear_terms: bool,
    #[serde(default = "default_iterations")]
    pub n_iterations: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// `seed` is replaced per iteration.
    #[serde(default)]
    pub boost: BoostConfig,
    /// `seed` is replaced per iteration.
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default)]
    pub lasso: LassoSettings,
    /// Not part of the report, so reports from different directories compare equal.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base_dir {
            if cfg.dataset.path.is_relative() {
                cfg.dataset.path = base.join(&cfg.dataset.path);
            }
            if let Some(out) = &cfg.output_dir {
                if out.is_relative() {
                    cfg.output_dir = Some(base.join(out));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        let (iters, trees, n_gen) = profile.settings();
        self.n_iterations = iters;
        self.boost.n_trees = trees;
        self.gen.n_gen = n_gen;
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        self.boost.validate()?;
        self.gen.validate()?;
        for m in Method::LASSOS {
            self.lasso.for_method(m).validate()?;
        }
        Ok(())
    }

    pub fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    /// Requested methods in canonical order.
    pub fn method_list(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.wants(*m)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// MSE for regression, CCR for classification.
    pub accuracy: f64,
    pub n_terms: usize,
    /// ESS/T or CCR/T; absent when T = 0.
    pub quality_per_term: Option<f64>,
    pub intercept_only: bool,
    pub selected_features: BTreeSet<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub importances: BTreeMap<String, f64>,
    /// Indices into the iteration's full term list.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub active_terms: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub importance_slope_correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateInfo {
    pub level1_survivors: Vec<usize>,
    pub survivor_warning: bool,
    pub level1_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level2_rows: Option<usize>,
    pub oracle_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub outcome: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_rules_extracted: usize,
    pub n_candidate_terms: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simulation: Option<SimSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surrogate: Option<SurrogateInfo>,
    pub methods: Vec<MethodResult>,
}

impl IterationResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IterationStatus {
    Ok(IterationResult),
    Failed { kind: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: IterationStatus,
}

impl IterationRecord {
    pub fn result(&self) -> Option<&IterationResult> {
        match &self.status {
            IterationStatus::Ok(r) => Some(r),
            IterationStatus::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample sd; absent for a single value.
    pub sd: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let sd = if values.len() > 1 { Some(sample_sd(values)) } else { None };
        Some(Stat {
            mean: mean(values),
            sd,
            n: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub accuracy: Option<Stat>,
    pub n_terms: Option<Stat>,
    pub quality_per_term: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tpr: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fpr: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub importance_slope_correlation: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stability: Option<f64>,
    /// Metrics on which this method is best among the Lassos.
    pub best: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub metric: String,
    pub first: Method,
    pub second: Method,
    #[serde(flatten)]
    pub stats: PairedStats,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub iteration: usize,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub task: Task,
    pub dataset_rows: usize,
    pub features: Vec<String>,
    pub config: ExperimentConfig,
    pub iterations: Vec<IterationRecord>,
    pub excluded: Vec<Exclusion>,
    pub summaries: Vec<MethodSummary>,
    pub pairwise: Vec<PairedComparison>,
    /// Wall-clock timings; kept out of the JSON report so it stays reproducible.
    #[serde(skip)]
    pub runtimes: Vec<Runtime>,
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Features referenced by any split of any tree.
pub fn boosting_features(model: &BoostModel) -> BTreeSet<String> {
    fn walk(node: &TreeNode, out: &mut BTreeSet<String>) {
        if let NodeKind::Split { condition, left, right } = &node.kind {
            out.insert(condition.feature.clone());
            walk(left, out);
            walk(right, out);
        }
    }
    let mut out = BTreeSet::new();
    for t in &model.trees {
        walk(t, &mut out);
    }
    out
}

/// The dataset an iteration models, after applying the outcome mode.
pub fn iteration_dataset(cfg: &ExperimentConfig, data: &Dataset, iter_seed: u64) -> Result<(Dataset, Option<SimSpec>)> {
    let s = seed::derive(iter_seed, seed::tag::SIMULATE);
    match cfg.outcome {
        OutcomeMode::Observed => Ok((data.clone(), None)),
        OutcomeMode::Simulated => {
            let (d, spec) = simulate_outcome(data, s)?;
            Ok((d, Some(spec)))
        }
        OutcomeMode::RandomFeature => {
            let features = data.features_only();
            let candidates: Vec<String> = features
                .features()
                .filter(|c| c.as_continuous().is_some())
                .map(|c| c.name().to_string())
                .collect();
            if candidates.is_empty() {
                return Err(Error::InvalidData("no continuous feature to use as outcome".into()));
            }
            let pick = candidates[seed::rng(s).random_range(0..candidates.len())].clone();
            let target = features.column(&pick).expect("candidate exists").clone();
            let rest = features.drop_columns(std::slice::from_ref(&pick))?;
            Ok((rest.with_outcome(target, Task::Regression)?, None))
        }
    }
}

struct Evaluated<'a> {
    tm: &'a TermMatrix,
    test: &'a Dataset,
    truth: &'a [f64],
    task: Task,
    features: &'a [String],
    sim: Option<&'a SimSpec>,
}

impl Evaluated<'_> {
    fn lasso(&self, method: Method, sel: &Selection) -> Result<MethodResult> {
        let pred = sel.predict(&self.tm.spec, self.test, self.task)?;
        let n_terms = sel.n_terms();
        let acc = accuracy(&pred, self.truth, self.task)?;
        let q = if n_terms > 0 {
            Some(quality_per_term(&pred, self.truth, n_terms, self.task)?)
        } else {
            None
        };
        let importances = variable_importances(sel, &self.tm.spec, &self.tm.values, self.features);
        let used = used_features(sel, &self.tm.spec);
        let (tpr, fpr, corr) = match self.sim {
            Some(sim) => {
                let (t, f) = selection_rates(&used, sim, self.features);
                (Some(t), Some(f), importance_slope_correlation(&importances, sim))
            }
            None => (None, None, None),
        };
        Ok(MethodResult {
            method,
            accuracy: acc,
            n_terms,
            quality_per_term: q,
            intercept_only: sel.is_intercept_only(),
            selected_features: used,
            importances,
            active_terms: sel.active_term_ids(),
            tpr,
            fpr,
            importance_slope_correlation: corr,
        })
    }
}

/// One full iteration: split, boost, build terms, select, evaluate.
pub fn run_iteration(cfg: &ExperimentConfig, data: &Dataset, iteration: usize) -> (IterationRecord, Vec<Runtime>) {
    let iter_seed = seed::derive(cfg.master_seed, iteration as u64);
    let mut runtimes = Vec::new();
    let status = match iteration_body(cfg, data, iteration, iter_seed, &mut runtimes) {
        Ok(r) => IterationStatus::Ok(r),
        Err(e) => {
            log::warn!("iteration {iteration} failed: {e}");
            IterationStatus::Failed {
                kind: e.kind().to_string(),
                message: e.to_string(),
            }
        }
    };
    (
        IterationRecord {
            iteration,
            seed: iter_seed,
            status,
        },
        runtimes,
    )
}

/// Everything an iteration needs before any selection method runs.
pub struct PreparedIteration {
    pub iteration: usize,
    pub seed: u64,
    /// The modelled dataset (after simulation or outcome substitution).
    pub data: Dataset,
    pub simulation: Option<SimSpec>,
    pub train: Dataset,
    pub test: Dataset,
    pub model: BoostModel,
    pub n_rules_extracted: usize,
    pub terms: TermMatrix,
    boost_secs: f64,
    term_secs: f64,
}

impl PreparedIteration {
    /// Split, fit (or reuse) the boosting model, and build candidate terms.
    pub fn new(cfg: &ExperimentConfig, data: &Dataset, iteration: usize, oracle: Option<BoostModel>) -> Result<Self> {
        let iter_seed = seed::derive(cfg.master_seed, iteration as u64);
        let (d, simulation) = iteration_dataset(cfg, data, iter_seed)?;
        let split = d.split_half(seed::derive(iter_seed, seed::tag::SPLIT))?;

        let clock = Stopwatch::start();
        let model = match oracle {
            Some(m) => {
                m.check_schema(&split.train)?;
                m
            }
            None => {
                let boost_cfg = BoostConfig {
                    seed: seed::derive(iter_seed, seed::tag::BOOST),
                    ..cfg.boost.clone()
                };
                fit_boost(&split.train, &boost_cfg)?
            }
        };
        let boost_secs = clock.seconds();

        let clock = Stopwatch::start();
        let rules = extract_rules(&model);
        let n_rules_extracted = rules.len();
        let kept = dedup_and_decollinearize(rules, &split.train)?;
        let terms = build_term_matrix(kept, &split.train, cfg.include_linear_terms)?;
        let term_secs = clock.seconds();

        Ok(Self {
            iteration,
            seed: iter_seed,
            data: d,
            simulation,
            train: split.train,
            test: split.test,
            model,
            n_rules_extracted,
            terms,
            boost_secs,
            term_secs,
        })
    }

    /// Run one Lasso method on this iteration's terms.
    pub fn select(&self, cfg: &ExperimentConfig, method: Method) -> Result<Selection> {
        let task = self.data.task();
        let y = self.train.outcome_values()?;
        let seeds = SurrogateSeeds::derive(self.seed);
        let slasso = cfg.lasso.for_method(Method::Surrogate);
        match method {
            Method::Boosting => Err(Error::InvalidArgument("boosting has no Lasso selection".into())),
            Method::Regular => {
                let lasso = LassoConfig {
                    seed: seed::derive(self.seed, seed::tag::REGULAR),
                    ..cfg.lasso.for_method(Method::Regular)
                };
                regular_select(&self.terms, &y, task, &lasso)
            }
            Method::Surrogate => {
                let first = first_level(&self.terms.spec, &self.train, &self.model, &cfg.gen, &slasso, seeds)?;
                Ok(second_level(&self.terms.spec, &first, &self.train, &self.model, &cfg.gen, &slasso, seeds)?.selection)
            }
            Method::Nested => {
                let first = first_level(&self.terms.spec, &self.train, &self.model, &cfg.gen, &slasso, seeds)?;
                let lasso = LassoConfig {
                    seed: seed::derive(self.seed, seed::tag::NESTED),
                    ..cfg.lasso.for_method(Method::Nested)
                };
                nested_from_first(&self.terms, &y, task, &first, &lasso)
            }
        }
    }
}

fn iteration_body(
    cfg: &ExperimentConfig,
    data: &Dataset,
    iteration: usize,
    iter_seed: u64,
    runtimes: &mut Vec<Runtime>,
) -> Result<IterationResult> {
    let prep = PreparedIteration::new(cfg, data, iteration, None)?;
    debug_assert_eq!(prep.seed, iter_seed);
    let (d, sim, model, tm) = (&prep.data, prep.simulation.clone(), &prep.model, &prep.terms);
    let (train, test) = (&prep.train, &prep.test);
    let (boost_secs, term_secs, n_rules_extracted) = (prep.boost_secs, prep.term_secs, prep.n_rules_extracted);
    let task = d.task();
    let y_train = train.outcome_values()?;
    let y_test = test.outcome_values()?;
    let features = d.feature_names();
    let mut time = |method: Method, secs: f64| {
        runtimes.push(Runtime {
            iteration,
            method,
            seconds: secs,
        })
    };

    let mut methods = Vec::new();
    if cfg.wants(Method::Boosting) {
        let pred = match task {
            Task::Regression => model.predict(test)?,
            Task::BinaryClassification => model.predict_class(test)?,
        };
        let q = if n_rules_extracted > 0 {
            Some(quality_per_term(&pred, &y_test, n_rules_extracted, task)?)
        } else {
            None
        };
        let used = boosting_features(model);
        let (tpr, fpr) = match &sim {
            Some(s) => {
                let (t, f) = selection_rates(&used, s, &features);
                (Some(t), Some(f))
            }
            None => (None, None),
        };
        methods.push(MethodResult {
            method: Method::Boosting,
            accuracy: accuracy(&pred, &y_test, task)?,
            n_terms: n_rules_extracted,
            quality_per_term: q,
            intercept_only: false,
            selected_features: used,
            importances: BTreeMap::new(),
            active_terms: Vec::new(),
            tpr,
            fpr,
            importance_slope_correlation: None,
        });
        time(Method::Boosting, boost_secs);
    }

    let ev = Evaluated {
        tm,
        test,
        truth: &y_test,
        task,
        features: &features,
        sim: sim.as_ref(),
    };
    // Every Lasso method shares the boosting fit and term construction.
    let shared = boost_secs + term_secs;

    if cfg.wants(Method::Regular) {
        let clock = Stopwatch::start();
        let lasso = LassoConfig {
            seed: seed::derive(iter_seed, seed::tag::REGULAR),
            ..cfg.lasso.for_method(Method::Regular)
        };
        let sel = regular_select(tm, &y_train, task, &lasso)?;
        let secs = clock.seconds() + shared;
        methods.push(ev.lasso(Method::Regular, &sel)?);
        time(Method::Regular, secs);
    }

    let mut surrogate_info = None;
    if cfg.wants(Method::Surrogate) || cfg.wants(Method::Nested) {
        let seeds = SurrogateSeeds::derive(iter_seed);
        let gen = cfg.gen.clone();
        let slasso = cfg.lasso.for_method(Method::Surrogate);
        let clock = Stopwatch::start();
        let first = first_level(&tm.spec, train, model, &gen, &slasso, seeds)?;
        let level1_secs = clock.seconds();
        let mut info = SurrogateInfo {
            level1_survivors: first.survivors.clone(),
            survivor_warning: first.survivor_warning,
            level1_rows: first.level.provenance.realized_rows,
            level2_rows: None,
            oracle_id: first.level.provenance.oracle_id.clone(),
        };
        if cfg.wants(Method::Surrogate) {
            let clock = Stopwatch::start();
            let second = second_level(&tm.spec, &first, train, model, &gen, &slasso, seeds)?;
            let secs = clock.seconds() + level1_secs + shared;
            info.level2_rows = Some(second.provenance.realized_rows);
            methods.push(ev.lasso(Method::Surrogate, &second.selection)?);
            time(Method::Surrogate, secs);
        }
        if cfg.wants(Method::Nested) {
            let clock = Stopwatch::start();
            let nlasso = LassoConfig {
                seed: seed::derive(iter_seed, seed::tag::NESTED),
                ..cfg.lasso.for_method(Method::Nested)
            };
            let sel = nested_from_first(tm, &y_train, task, &first, &nlasso)?;
            let secs = clock.seconds() + level1_secs + shared;
            methods.push(ev.lasso(Method::Nested, &sel)?);
            time(Method::Nested, secs);
        }
        surrogate_info = Some(info);
    }

    Ok(IterationResult {
        outcome: d.outcome_name().unwrap_or_default().to_string(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        n_rules_extracted,
        n_candidate_terms: tm.spec.len(),
        simulation: sim,
        surrogate: surrogate_info,
        methods,
    })
}

/// Iteration excluded from every summary and comparison, with the reason.
fn exclusion_reason(rec: &IterationRecord) -> Option<String> {
    match &rec.status {
        IterationStatus::Failed { message, .. } => Some(format!("failed: {message}")),
        IterationStatus::Ok(r) => {
            let empty: Vec<&str> = r
                .methods
                .iter()
                .filter(|m| m.method.is_lasso() && m.intercept_only)
                .map(|m| m.method.name())
                .collect();
            if empty.is_empty() {
                None
            } else {
                Some(format!("intercept-only model: {}", empty.join(", ")))
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn map_iterations<F>(n: usize, parallel: bool, f: F) -> Vec<(IterationRecord, Vec<Runtime>)>
where
    F: Fn(usize) -> (IterationRecord, Vec<Runtime>) + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_iterations<F>(n: usize, _parallel: bool, f: F) -> Vec<(IterationRecord, Vec<Runtime>)>
where
    F: Fn(usize) -> (IterationRecord, Vec<Runtime>),
{
    (0..n).map(f).collect()
}

/// Run every iteration (in parallel when `parallel` is set and the crate
/// feature is enabled) and aggregate. Results are ordered by iteration.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = cfg.dataset.load()?;
    run_experiment_on(cfg, &data, parallel)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, data: &Dataset, parallel: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outputs = map_iterations(cfg.n_iterations, parallel, |i| {
        log::info!("{}: iteration {}/{}", cfg.name, i + 1, cfg.n_iterations);
        run_iteration(cfg, data, i)
    });
    let mut iterations = Vec::with_capacity(outputs.len());
    let mut runtimes = Vec::new();
    for (rec, rt) in outputs {
        iterations.push(rec);
        runtimes.extend(rt);
    }
    let task = match cfg.outcome {
        OutcomeMode::Observed => data.task(),
        _ => Task::Regression,
    };
    let features = match cfg.outcome {
        OutcomeMode::RandomFeature => data.features_only().feature_names(),
        _ => data.feature_names(),
    };
    Ok(aggregate(cfg, task, data.n_rows(), features, iterations, runtimes))
}

pub fn metric_names(task: Task) -> [&'static str; 3] {
    match task {
        Task::Regression => ["mse", "terms", "ess_per_term"],
        Task::BinaryClassification => ["ccr", "terms", "ccr_per_term"],
    }
}

/// Summaries and paired comparisons over the non-excluded iterations.
pub fn aggregate(
    cfg: &ExperimentConfig,
    task: Task,
    dataset_rows: usize,
    features: Vec<String>,
    iterations: Vec<IterationRecord>,
    runtimes: Vec<Runtime>,
) -> ExperimentReport {
    let mut excluded = Vec::new();
    let mut kept: Vec<&IterationResult> = Vec::new();
    for rec in &iterations {
        match exclusion_reason(rec) {
            Some(reason) => excluded.push(Exclusion {
                iteration: rec.iteration,
                reason,
            }),
            None => kept.extend(rec.result()),
        }
    }
    let methods = cfg.method_list();
    let per = |m: Method| -> Vec<&MethodResult> { kept.iter().filter_map(|r| r.method(m)).collect() };
    let stability_applies = cfg.outcome == OutcomeMode::Observed;
    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&m| {
            let rs = per(m);
            let collect = |f: &dyn Fn(&MethodResult) -> Option<f64>| -> Option<Stat> {
                Stat::of(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let stability = if stability_applies && rs.len() >= 2 {
                let sets: Vec<Vec<usize>> = rs
                    .iter()
                    .map(|r| {
                        r.selected_features
                            .iter()
                            .filter_map(|f| features.iter().position(|g| g == f))
                            .collect()
                    })
                    .collect();
                nogueira_stability(&sets, features.len().max(1)).ok()
            } else {
                None
            };
            MethodSummary {
                method: m,
                accuracy: collect(&|r| Some(r.accuracy)),
                n_terms: collect(&|r| Some(r.n_terms as f64)),
                quality_per_term: collect(&|r| r.quality_per_term),
                tpr: collect(&|r| r.tpr),
                fpr: collect(&|r| r.fpr),
                importance_slope_correlation: collect(&|r| r.importance_slope_correlation),
                stability,
                best: Vec::new(),
            }
        })
        .collect();

    // Winners among the Lasso methods only.
    let names = metric_names(task);
    let higher_accuracy_better = task == Task::BinaryClassification;
    let pick = |summaries: &[MethodSummary], get: &dyn Fn(&MethodSummary) -> Option<f64>, higher: bool| -> Option<Method> {
        summaries
            .iter()
            .filter(|s| s.method.is_lasso())
            .filter_map(|s| get(s).map(|v| (s.method, v)))
            .fold(None, |best: Option<(Method, f64)>, (m, v)| match best {
                Some((_, b)) if (higher && v <= b) || (!higher && v >= b) => best,
                _ => Some((m, v)),
            })
            .map(|(m, _)| m)
    };
    let winners = [
        (names[0], pick(&summaries, &|s| s.accuracy.as_ref().map(|x| x.mean), higher_accuracy_better)),
        (names[1], pick(&summaries, &|s| s.n_terms.as_ref().map(|x| x.mean), false)),
        (names[2], pick(&summaries, &|s| s.quality_per_term.as_ref().map(|x| x.mean), true)),
        ("stability", pick(&summaries, &|s| s.stability, true)),
    ];
    for (metric, winner) in winners {
        if let Some(w) = winner {
            if let Some(s) = summaries.iter_mut().find(|s| s.method == w) {
                s.best.push(metric.to_string());
            }
        }
    }

    let lassos: Vec<Method> = methods.iter().copied().filter(|m| m.is_lasso()).collect();
    let mut pairwise = Vec::new();
    let getters: [(&str, fn(&MethodResult) -> Option<f64>); 3] = [
        (names[0], |r| Some(r.accuracy)),
        (names[1], |r| Some(r.n_terms as f64)),
        (names[2], |r| r.quality_per_term),
    ];
    for (metric, get) in getters {
        for (i, &a) in lassos.iter().enumerate() {
            for &b in &lassos[i + 1..] {
                let pairs: Vec<(f64, f64)> = kept
                    .iter()
                    .filter_map(|r| Some((get(r.method(a)?)?, get(r.method(b)?)?)))
                    .collect();
                let (xa, xb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                if let Ok(stats) = paired_ci(&xa, &xb) {
                    pairwise.push(PairedComparison {
                        metric: metric.to_string(),
                        first: a,
                        second: b,
                        significant: stats.significant(),
                        stats,
                    });
                }
            }
        }
    }

    ExperimentReport {
        name: cfg.name.clone(),
        task,
        dataset_rows,
        features,
        config: cfg.clone(),
        iterations,
        excluded,
        summaries,
        pairwise,
        runtimes,
    }
}

/// Enough decimals to show three significant digits of small means.
fn decimals(v: f64, digits: usize) -> usize {
    let a = v.abs();
    if a > 0.0 && a < 1.0 {
        digits.max((-a.log10()).floor() as usize + 3)
    } else {
        digits
    }
}

fn cell(stat: &Option<Stat>, best: bool, digits: usize) -> String {
    let body = match stat {
        None => "NA".to_string(),
        Some(s) => {
            let d = decimals(s.mean, digits);
            match s.sd {
                Some(sd) => format!("{:.*} ({:.*})", d, s.mean, d, sd),
                None => format!("{:.*} (-)", d, s.mean),
            }
        }
    };
    if best {
        format!("**{body}**")
    } else {
        body
    }
}

impl ExperimentReport {
    pub fn summary(&self, m: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == m)
    }

    pub fn included_iterations(&self) -> usize {
        let ex: BTreeSet<usize> = self.excluded.iter().map(|e| e.iteration).collect();
        self.iterations.iter().filter(|r| !ex.contains(&r.iteration)).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Mean (sd) tables, winner marks (`**`), and paired comparison lines.
    pub fn summarize(&self) -> String {
        let names = metric_names(self.task);
        let digits = match self.task {
            Task::Regression => 2,
            Task::BinaryClassification => 3,
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({}): {} iterations, {} excluded",
            self.name,
            match self.task {
                Task::Regression => "regression",
                Task::BinaryClassification => "classification",
            },
            self.iterations.len(),
            self.excluded.len()
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>22} {:>22} {:>22}", "method", names[0], names[1], names[2]);
        for s in &self.summaries {
            let is_best = |k: &str| s.best.iter().any(|b| b == k);
            let _ = writeln!(
                out,
                "{:<10} {:>22} {:>22} {:>22}",
                s.method.name(),
                cell(&s.accuracy, is_best(names[0]), digits),
                cell(&s.n_terms, is_best(names[1]), 2),
                cell(&s.quality_per_term, is_best(names[2]), digits),
            );
        }
        let sim = self.summaries.iter().any(|s| s.tpr.is_some());
        if sim {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<10} {:>22} {:>22} {:>22}", "method", "tpr", "fpr", "importance_corr");
            for s in &self.summaries {
                let _ = writeln!(
                    out,
                    "{:<10} {:>22} {:>22} {:>22}",
                    s.method.name(),
                    cell(&s.tpr, false, 3),
                    cell(&s.fpr, false, 3),
                    cell(&s.importance_slope_correlation, false, 3),
                );
            }
        }
        if self.summaries.iter().any(|s| s.method.is_lasso() && s.stability.is_some()) {
            let _ = writeln!(out);
            let _ = writeln!(out, "selection stability");
            for s in self.summaries.iter().filter(|s| s.method.is_lasso()) {
                let v = s.stability.map_or("NA".to_string(), |v| format!("{v:.3}"));
                let v = if s.best.iter().any(|b| b == "stability") { format!("**{v}**") } else { v };
                let _ = writeln!(out, "  {:<10} {}", s.method.name(), v);
            }
        }
        let mut runtime: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
        for r in &self.runtimes {
            runtime.entry(r.method).or_default().push(r.seconds);
        }
        if !runtime.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "mean runtime (s)");
            for (m, v) in &runtime {
                let _ = writeln!(out, "  {:<10} {:.2}", m.name(), mean(v));
            }
        }
        let mut current = "";
        for p in &self.pairwise {
            if p.metric != current {
                let _ = writeln!(out);
                let _ = writeln!(out, "paired differences: {}", p.metric);
                current = &p.metric;
            }
            let _ = writeln!(out, "  {}", pairwise_line(p));
        }
        if !self.excluded.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "excluded iterations");
            for e in &self.excluded {
                let _ = writeln!(out, "  {}: {}", e.iteration, e.reason);
            }
        }
        out
    }

    /// One CSV row per (experiment, iteration, method).
    pub fn write_results_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "experiment",
            "iteration",
            "method",
            "excluded",
            "accuracy",
            "n_terms",
            "quality_per_term",
            "n_selected_features",
            "tpr",
            "fpr",
            "importance_slope_correlation",
        ])?;
        let ex: BTreeSet<usize> = self.excluded.iter().map(|e| e.iteration).collect();
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        for rec in &self.iterations {
            let Some(r) = rec.result() else { continue };
            for m in &r.methods {
                w.write_record([
                    self.name.clone(),
                    rec.iteration.to_string(),
                    m.method.name().to_string(),
                    ex.contains(&rec.iteration).to_string(),
                    format!("{:?}", m.accuracy),
                    m.n_terms.to_string(),
                    opt(m.quality_per_term),
                    m.selected_features.len().to_string(),
                    opt(m.tpr),
                    opt(m.fpr),
                    opt(m.importance_slope_correlation),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<results csv>", e))?;
        Ok(())
    }

    pub fn write_runtimes_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "method", "seconds"])?;
        for r in &self.runtimes {
            w.write_record([r.iteration.to_string(), r.method.name().to_string(), format!("{:.6}", r.seconds)])?;
        }
        w.flush().map_err(|e| Error::io("<runtimes csv>", e))?;
        Ok(())
    }

    /// Write report.json, summary.json, results.csv, runtimes.csv and
    /// summary.txt into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("report.json", self.to_json()?.as_bytes())?;
        let summary = serde_json::json!({
            "name": self.name,
            "task": self.task,
            "iterations": self.iterations.len(),
            "included": self.included_iterations(),
            "excluded": self.excluded,
            "summaries": self.summaries,
            "pairwise": self.pairwise,
        });
        write("summary.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
        let mut buf = Vec::new();
        self.write_results_csv(&mut buf)?;
        write("results.csv", &buf)?;
        let mut buf = Vec::new();
        self.write_runtimes_csv(&mut buf)?;
        write("runtimes.csv", &buf)?;
        write("summary.txt", self.summarize().as_bytes())?;
        Ok(())
    }
}

/// `first-second: D̄ [lo, hi]`, with a trailing ` *` when the interval excludes 0.
pub fn pairwise_line(p: &PairedComparison) -> String {
    let s = &p.stats;
    let d = decimals(s.ci_high.abs().max(s.ci_low.abs()), 4);
    let mut line = format!(
        "{}-{}: {:.*} [{:.*}, {:.*}]",
        p.first.name(),
        p.second.name(),
        d,
        s.mean_diff,
        d,
        s.ci_low,
        d,
        s.ci_high
    );
    if p.significant {
        line.push_str(" *");
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_data(n: usize) -> Dataset {
        let mut rng = seed::rng(8);
        let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                2.0 * cols[0][i] + if cols[1][i] > 0.0 { 1.5 } else { 0.0 } + 0.5 * e
            })
            .collect();
        let mut columns: Vec<Column> = cols
            .into_iter()
            .enumerate()
            .map(|(j, c)| Column::continuous(format!("x{j}"), c).unwrap())
            .collect();
        columns.push(Column::continuous("y", y).unwrap());
        Dataset::new(columns, Some("y"), Task::Regression).unwrap()
    }

    fn toy_config() -> ExperimentConfig {
        let text = r#"
            name = "toy"
            n_iterations = 3
            master_seed = 11
            [dataset]
            path = "unused.csv"
            outcome = "y"
            task = "regression"
            [boost]
            n_trees = 20
            learning_rate = 0.1
            [gen]
            n_gen = 300
            [lasso.regular]
            n_lambda = 30
            [lasso.surrogate]
            n_lambda = 30
            [lasso.nested]
            n_lambda = 30
        "#;
        ExperimentConfig::from_toml_str(text, None).unwrap()
    }

    #[test]
    fn config_defaults_and_profiles() {
        let mut cfg = toy_config();
        assert_eq!(cfg.lasso.for_method(Method::Surrogate).folds, 3);
        assert_eq!(cfg.lasso.for_method(Method::Regular).folds, 5);
        assert_eq!(cfg.lasso.for_method(Method::Nested).n_lambda, 30);
        assert_eq!(cfg.method_list(), Method::ALL.to_vec());
        cfg.apply_profile(Profile::Desk);
        assert_eq!((cfg.n_iterations, cfg.boost.n_trees, cfg.gen.n_gen), (20, 100, 2000));
        cfg.apply_profile(Profile::Paper);
        assert_eq!((cfg.n_iterations, cfg.boost.n_trees, cfg.gen.n_gen), (200, 500, 10_000));
        assert!("desk".parse::<Profile>().is_ok());
        assert!("huge".parse::<Profile>().is_err());
        let bad = "[dataset]\npath='a'\noutcome='y'\ntask='regression'\nbogus=1\n";
        assert!(matches!(ExperimentConfig::from_toml_str(bad, None), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_toml_str(
            "output_dir='out'\n[dataset]\npath='d.csv'\noutcome='y'\ntask='regression'\n",
            Some(Path::new("/tmp/x")),
        )
        .unwrap();
        assert_eq!(cfg.dataset.path, PathBuf::from("/tmp/x/d.csv"));
        assert_eq!(cfg.output_dir, Some(PathBuf::from("/tmp/x/out")));
    }

    #[test]
    fn small_experiment_runs_and_is_deterministic() {
        let cfg = toy_config();
        let data = toy_data(120);
        let a = run_experiment_on(&cfg, &data, false).unwrap();
        let b = run_experiment_on(&cfg, &data, true).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.iterations.len(), 3);
        for rec in &a.iterations {
            let r = rec.result().unwrap_or_else(|| panic!("iteration failed: {:?}", rec.status));
            assert_eq!(r.methods.len(), 4);
            let survivors: BTreeSet<usize> = r.surrogate.as_ref().unwrap().level1_survivors.iter().copied().collect();
            for m in [Method::Surrogate, Method::Nested] {
                assert!(r.method(m).unwrap().active_terms.iter().all(|t| survivors.contains(t)));
            }
            assert_eq!(r.n_train + r.n_test, 120);
        }
        let back = ExperimentReport::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.iterations, a.iterations);
        let text = a.summarize();
        assert!(text.contains("mse"));
        assert!(text.contains("regular-nested: "));
        let mut csv = Vec::new();
        a.write_results_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 3 * 4);
    }

    #[test]
    fn prepared_selection_matches_iteration() {
        let cfg = toy_config();
        let data = toy_data(100);
        let (rec, runtimes) = run_iteration(&cfg, &data, 1);
        let r = rec.result().unwrap();
        assert_eq!(runtimes.len(), 4);
        let prep = PreparedIteration::new(&cfg, &data, 1, None).unwrap();
        assert_eq!(prep.n_rules_extracted, r.n_rules_extracted);
        for m in Method::LASSOS {
            let sel = prep.select(&cfg, m).unwrap();
            assert_eq!(sel.active_term_ids(), r.method(m).unwrap().active_terms, "{m:?}");
        }
        assert!(prep.select(&cfg, Method::Boosting).is_err());
        // Reusing the fitted model reproduces the same terms.
        let again = PreparedIteration::new(&cfg, &data, 1, Some(prep.model.clone())).unwrap();
        assert_eq!(again.terms.spec, prep.terms.spec);
    }

    #[test]
    fn small_values_keep_significant_digits() {
        assert_eq!(decimals(15.06, 2), 2);
        assert_eq!(decimals(0.5, 2), 3);
        assert_eq!(decimals(0.00452, 2), 5);
        assert_eq!(decimals(0.0, 2), 2);
        let s = Some(Stat { mean: 0.00452, sd: Some(0.0034), n: 3 });
        assert_eq!(cell(&s, false, 2), "0.00452 (0.00340)");
    }

    #[test]
    fn boosting_only_reports_rule_count() {
        let mut cfg = toy_config();
        cfg.methods = vec![Method::Boosting];
        cfg.n_iterations = 1;
        let rep = run_experiment_on(&cfg, &toy_data(80), false).unwrap();
        let r = rep.iterations[0].result().unwrap();
        assert_eq!(r.methods.len(), 1);
        assert_eq!(r.methods[0].n_terms, r.n_rules_extracted);
        assert!(r.surrogate.is_none());
        // A single iteration has no sd.
        assert!(rep.summarize().contains("(-)"));
        assert!(rep.pairwise.is_empty());
    }

    #[test]
    fn simulated_and_random_feature_outcomes() {
        let data = toy_data(60);
        let mut cfg = toy_config();
        cfg.outcome = OutcomeMode::Simulated;
        let (d, sim) = iteration_dataset(&cfg, &data, 5).unwrap();
        assert!(sim.is_some());
        assert_eq!(d.outcome_name(), Some(crate::eval::SIM_OUTCOME));
        assert!(d.column("y").is_none());
        cfg.outcome = OutcomeMode::RandomFeature;
        let (d, sim) = iteration_dataset(&cfg, &data, 5).unwrap();
        assert!(sim.is_none());
        let target = d.outcome_name().unwrap().to_string();
        assert!(target.starts_with('x'));
        assert_eq!(d.feature_names().len(), 4);
    }

    fn fake_record(iteration: usize, accs: [f64; 3], intercept_only: bool) -> IterationRecord {
        let methods = Method::LASSOS
            .iter()
            .zip(accs)
            .map(|(&m, a)| MethodResult {
                method: m,
                accuracy: a,
                n_terms: if intercept_only && m == Method::Nested { 0 } else { 3 },
                quality_per_term: Some(1.0),
                intercept_only: intercept_only && m == Method::Nested,
                selected_features: BTreeSet::from(["a".to_string()]),
                importances: BTreeMap::new(),
                active_terms: vec![],
                tpr: None,
                fpr: None,
                importance_slope_correlation: None,
            })
            .collect();
        IterationRecord {
            iteration,
            seed: 0,
            status: IterationStatus::Ok(IterationResult {
                outcome: "y".into(),
                n_train: 10,
                n_test: 10,
                n_rules_extracted: 6,
                n_candidate_terms: 6,
                simulation: None,
                surrogate: None,
                methods,
            }),
        }
    }

    #[test]
    fn exclusion_winners_and_pairwise() {
        let mut cfg = toy_config();
        cfg.methods = Method::LASSOS.to_vec();
        let records = vec![
            fake_record(0, [1.0, 3.0, 2.0], false),
            fake_record(1, [1.5, 3.5, 1.0], false),
            fake_record(2, [100.0, 100.0, 100.0], true),
            IterationRecord {
                iteration: 3,
                seed: 0,
                status: IterationStatus::Failed {
                    kind: "invalid_data".into(),
                    message: "bad".into(),
                },
            },
        ];
        let rep = aggregate(&cfg, Task::Regression, 20, vec!["a".into(), "b".into()], records, vec![]);
        assert_eq!(rep.excluded.iter().map(|e| e.iteration).collect::<Vec<_>>(), vec![2, 3]);
        let reg = rep.summary(Method::Regular).unwrap();
        assert_eq!(reg.accuracy.as_ref().unwrap().n, 2);
        assert_eq!(reg.accuracy.as_ref().unwrap().mean, 1.25);
        assert!(reg.best.contains(&"mse".to_string()));
        assert!(!rep.summary(Method::Surrogate).unwrap().best.contains(&"mse".to_string()));
        let p = rep
            .pairwise
            .iter()
            .find(|p| p.metric == "mse" && p.first == Method::Regular && p.second == Method::Nested)
            .unwrap();
        assert_eq!(p.stats.n, 2);
        assert!((p.stats.mean_diff - (-0.25)).abs() < 1e-12);
        let line = pairwise_line(p);
        assert!(line.starts_with("regular-nested: -0.2500 ["));
        let sig = PairedComparison {
            significant: true,
            ..p.clone()
        };
        assert!(pairwise_line(&sig).ends_with(" *"));
        let text = rep.summarize();
        assert!(text.contains("**1.25 (0.35)**"));
        assert!(text.contains("excluded iterations"));
    }
}
