use std::collections::BTreeMap;
use std::path::PathBuf;

use pre_core::boosting::BoostConfig;
use pre_core::data::{ColumnData, ColumnKind, Dataset, Task};
use pre_core::experiment::{run_iteration, DatasetConfig, ExperimentConfig, LassoSettings, Method, OutcomeMode, PreparedIteration};
use pre_core::matrix::{mean, sample_sd};
use pre_core::surrogate::{make_generated, GenConfig, Provenance, SurrogateSeeds};
use pre_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_trees() -> usize {
    100
}
fn default_n_gen() -> usize {
    1_000
}
fn default_true() -> bool {
    true
}
fn default_method() -> Method {
    Method::Regular
}
fn default_preview() -> usize {
    10
}

/// Request shared by all three operations. Sizes default small so the page
/// stays responsive.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub outcome: String,
    pub task: Task,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub iteration: usize,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_n_gen")]
    pub n_gen: usize,
    #[serde(default = "default_true")]
    pub include_linear_terms: bool,
    #[serde(default)]
    pub simulate: bool,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_preview")]
    pub preview_rows: usize,
}

impl Request {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            name: "browser".into(),
            dataset: DatasetConfig {
                path: PathBuf::new(),
                outcome: self.outcome.clone(),
                task: self.task,
                default_kind: ColumnKind::Continuous,
                categorical: self.categorical.clone(),
                continuous: Vec::new(),
                exclude: self.exclude.clone(),
            },
            outcome: if self.simulate { OutcomeMode::Simulated } else { OutcomeMode::Observed },
            include_linear_terms: self.include_linear_terms,
            n_iterations: self.iteration + 1,
            master_seed: self.seed,
            methods: Method::ALL.to_vec(),
            boost: BoostConfig {
                n_trees: self.n_trees,
                ..BoostConfig::default()
            },
            gen: GenConfig {
                n_gen: self.n_gen,
                ..GenConfig::default()
            },
            lasso: LassoSettings::default(),
            output_dir: None,
        }
    }

    fn load(&self, csv: &str) -> Result<(ExperimentConfig, Dataset)> {
        let cfg = self.config();
        cfg.validate()?;
        let data = cfg.dataset.read(csv.as_bytes())?;
        Ok((cfg, data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub cv_mean: f64,
    pub cv_se: f64,
    pub n_active: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectedTerm {
    pub term: usize,
    pub coefficient: f64,
    pub description: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CvCurve {
    pub method: Method,
    pub candidate_terms: usize,
    pub lambda_chosen: f64,
    pub lambda_min: f64,
    pub intercept: f64,
    pub points: Vec<CurvePoint>,
    pub terms: Vec<SelectedTerm>,
}

pub fn cv_curve(csv: &str, request: &str) -> Result<String> {
    let req = Request::parse(request)?;
    let (cfg, data) = req.load(csv)?;
    let prep = PreparedIteration::new(&cfg, &data, req.iteration, None)?;
    let sel = prep.select(&cfg, req.method)?;
    let fit = &sel.fit;
    let points = fit
        .lambda_path
        .iter()
        .enumerate()
        .map(|(i, &lambda)| CurvePoint {
            lambda,
            cv_mean: fit.cv_mean[i],
            cv_se: fit.cv_se[i],
            n_active: fit.n_active[i],
        })
        .collect();
    let mut terms: Vec<SelectedTerm> = sel
        .coefficients()
        .into_iter()
        .map(|(term, coefficient)| SelectedTerm {
            term,
            coefficient,
            description: prep.terms.spec.terms[term].to_string(),
        })
        .collect();
    terms.sort_by(|a, b| b.coefficient.abs().total_cmp(&a.coefficient.abs()));
    let out = CvCurve {
        method: req.method,
        candidate_terms: prep.terms.spec.len(),
        lambda_chosen: fit.lambda_chosen,
        lambda_min: fit.lambda_min,
        intercept: fit.intercept,
        points,
        terms,
    };
    Ok(serde_json::to_string(&out)?)
}

pub fn compare_methods(csv: &str, request: &str) -> Result<String> {
    let req = Request::parse(request)?;
    let (cfg, data) = req.load(csv)?;
    let (record, _) = run_iteration(&cfg, &data, req.iteration);
    Ok(serde_json::to_string(&record)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Continuous {
        name: String,
        real_mean: f64,
        real_sd: f64,
        generated_mean: f64,
        generated_sd: f64,
    },
    Categorical {
        name: String,
        real_counts: BTreeMap<String, usize>,
        generated_counts: BTreeMap<String, usize>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GeneratedPreview {
    pub provenance: Provenance,
    pub marginals: Vec<Marginal>,
    /// First rows as CSV, with the oracle label as the last column.
    pub preview_csv: String,
}

fn present(values: &[f64]) -> Vec<f64> {
    values.iter().copied().filter(|v| !v.is_nan()).collect()
}

fn counts(levels: &[String], codes: &[u32]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = levels.iter().map(|l| (l.clone(), 0)).collect();
    for &c in codes {
        if let Some(l) = levels.get(c as usize) {
            *out.entry(l.clone()).or_default() += 1;
        }
    }
    out
}

fn marginal(real: &ColumnData, generated: &ColumnData, name: &str) -> Option<Marginal> {
    match (real, generated) {
        (ColumnData::Continuous(r), ColumnData::Continuous(g)) => {
            let (r, g) = (present(r), present(g));
            Some(Marginal::Continuous {
                name: name.to_string(),
                real_mean: mean(&r),
                real_sd: sample_sd(&r),
                generated_mean: mean(&g),
                generated_sd: sample_sd(&g),
            })
        }
        (ColumnData::Categorical { levels, codes }, ColumnData::Categorical { levels: gl, codes: gc }) => {
            Some(Marginal::Categorical {
                name: name.to_string(),
                real_counts: counts(levels, codes),
                generated_counts: counts(gl, gc),
            })
        }
        _ => None,
    }
}

pub fn generate_preview(csv: &str, request: &str) -> Result<String> {
    let req = Request::parse(request)?;
    let (cfg, data) = req.load(csv)?;
    let prep = PreparedIteration::new(&cfg, &data, req.iteration, None)?;
    let gen = cfg.gen.with_seed(SurrogateSeeds::derive(prep.seed).level1_gen);
    let generated = make_generated(&prep.train, &prep.model, &gen)?;
    let marginals = prep
        .train
        .features()
        .filter_map(|c| {
            let g = generated.features.column(c.name())?;
            marginal(c.data(), g.data(), c.name())
        })
        .collect();
    let full = generated.to_dataset()?;
    let head: Vec<usize> = (0..full.n_rows().min(req.preview_rows)).collect();
    let mut buf = Vec::new();
    full.select_rows(&head).to_csv_writer(&mut buf)?;
    let out = GeneratedPreview {
        provenance: generated.provenance,
        marginals,
        preview_csv: String::from_utf8_lossy(&buf).into_owned(),
    };
    Ok(serde_json::to_string(&out)?)
}
