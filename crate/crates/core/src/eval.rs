//! Performance indicators: accuracy, quality per term, paired differences,
//! selection stability, variable importances and the simulated-outcome
//! generator used by the simulation experiments.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, Task};
use crate::matrix::{mean, pearson, sample_sd, sample_variance, DenseMatrix};
use crate::rules::{Term, TermSpec};
use crate::surrogate::Selection;
use crate::{seed, Error, Result};

pub const SIM_OUTCOME: &str = "y_sim";
pub const SIM_FEATURES: usize = 3;
pub const SLOPE_RANGE: (f64, f64) = (0.5, 2.0);
/// Noise standard deviation (variance 25).
pub const SIM_NOISE_SD: f64 = 5.0;
pub const Z_95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub features: Vec<String>,
    pub slopes: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Pick three continuous features and their signed slopes.
    pub fn draw(d: &Dataset, rng: &mut seed::Rng, seed: u64) -> Result<SimSpec> {
        let candidates: Vec<&str> = d.features().filter(|c| c.as_continuous().is_some()).map(|c| c.name()).collect();
        if candidates.len() < SIM_FEATURES {
            return Err(Error::InvalidData(format!(
                "simulation needs {SIM_FEATURES} continuous features, found {}",
                candidates.len()
            )));
        }
        let picked = index::sample(rng, candidates.len(), SIM_FEATURES).into_vec();
        let features = picked.iter().map(|&i| candidates[i].to_string()).collect();
        let slopes = (0..SIM_FEATURES)
            .map(|_| {
                let mag = rng.random_range(SLOPE_RANGE.0..=SLOPE_RANGE.1);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        Ok(SimSpec {
            features,
            slopes,
            noise_sd: SIM_NOISE_SD,
            seed,
        })
    }

    /// Σ B_k·X_k for every row.
    pub fn linear_part(&self, d: &Dataset) -> Result<Vec<f64>> {
        let mut y = vec![0.0; d.n_rows()];
        for (f, b) in self.features.iter().zip(&self.slopes) {
            let col = d.column(f).ok_or_else(|| Error::MissingColumn(f.clone()))?;
            let x = col
                .as_continuous()
                .ok_or_else(|| Error::SchemaMismatch(format!("simulated feature '{f}' is categorical")))?;
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi += b * xi;
            }
        }
        Ok(y)
    }

    /// Linear part plus N(0, noise_sd²) noise.
    pub fn generate(&self, d: &Dataset, rng: &mut seed::Rng) -> Result<Vec<f64>> {
        let noise = Normal::new(0.0, self.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut y = self.linear_part(d)?;
        for v in &mut y {
            *v += noise.sample(rng);
        }
        Ok(y)
    }

    pub fn abs_slope_of(&self, feature: &str) -> f64 {
        self.features
            .iter()
            .position(|f| f == feature)
            .map_or(0.0, |i| self.slopes[i].abs())
    }
}

/// Replace the outcome of `d` by a simulated one. The original outcome
/// column, if any, is dropped.
pub fn simulate_outcome(d: &Dataset, seed: u64) -> Result<(Dataset, SimSpec)> {
    let features = d.features_only();
    let mut rng = seed::rng(seed);
    let spec = SimSpec::draw(&features, &mut rng, seed)?;
    let y = spec.generate(&features, &mut rng)?;
    let mut name = SIM_OUTCOME.to_string();
    while features.column(&name).is_some() {
        name.push('_');
    }
    let out = features.with_outcome(Column::continuous(name, y)?, Task::Regression)?;
    Ok((out, spec))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::InvalidArgument("empty prediction vector".into()));
    }
    Ok(())
}

/// MSE for regression, correct classification rate for classification.
pub fn accuracy(pred: &[f64], truth: &[f64], task: Task) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    Ok(match task {
        Task::Regression => pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n,
        Task::BinaryClassification => pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / n,
    })
}

/// ESS/T for regression (ESS = TSS − RSS about the test mean), CCR/T for
/// classification.
pub fn quality_per_term(pred: &[f64], truth: &[f64], n_terms: usize, task: Task) -> Result<f64> {
    if n_terms == 0 {
        return Err(Error::InvalidArgument("quality per term needs at least one term".into()));
    }
    let t = n_terms as f64;
    match task {
        Task::Regression => {
            check_lengths(pred.len(), truth.len())?;
            let m = mean(truth);
            let tss: f64 = truth.iter().map(|y| (y - m) * (y - m)).sum();
            let rss: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p) * (y - p)).sum();
            Ok((tss - rss) / t)
        }
        Task::BinaryClassification => Ok(accuracy(pred, truth, task)? / t),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub mean_diff: f64,
    pub se_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl PairedStats {
    pub fn significant(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// Mean paired difference a − b with a normal 95% interval.
pub fn paired_ci(a: &[f64], b: &[f64]) -> Result<PairedStats> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired comparison needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean_diff = mean(&d);
    let se_diff = (sample_variance(&d) / n as f64).sqrt();
    Ok(PairedStats {
        mean_diff,
        se_diff,
        ci_low: mean_diff - Z_95 * se_diff,
        ci_high: mean_diff + Z_95 * se_diff,
        n,
    })
}

/// Stability of feature selection across runs. Each selection lists the
/// selected feature indices in `0..d`; duplicates are ignored.
pub fn nogueira_stability<S: AsRef<[usize]>>(selections: &[S], d: usize) -> Result<f64> {
    let m = selections.len();
    if m < 2 {
        return Err(Error::InvalidArgument("stability needs at least 2 runs".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("feature universe is empty".into()));
    }
    let mut counts = vec![0usize; d];
    let mut total = 0usize;
    let sets: Vec<BTreeSet<usize>> = selections.iter().map(|s| s.as_ref().iter().copied().collect()).collect();
    for s in &sets {
        for &f in s {
            if f >= d {
                return Err(Error::InvalidArgument(format!("feature index {f} outside universe of {d}")));
            }
            counts[f] += 1;
        }
        total += s.len();
    }
    let mf = m as f64;
    let kbar = total as f64 / mf;
    let q = kbar / d as f64;
    let denom = q * (1.0 - q);
    if denom <= 0.0 {
        // Every run selected nothing, or everything.
        return Ok(1.0);
    }
    let mean_var = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / mf;
            mf / (mf - 1.0) * p * (1.0 - p)
        })
        .sum::<f64>()
        / d as f64;
    Ok(1.0 - mean_var / denom)
}

/// Features appearing in at least one nonzero term.
pub fn used_features(sel: &Selection, spec: &TermSpec) -> BTreeSet<String> {
    sel.active_term_ids()
        .into_iter()
        .flat_map(|t| spec.terms[t].features().into_iter().map(str::to_string).collect::<Vec<_>>())
        .collect()
}

/// Term importance |coef|·sd(train column); rule importance is split
/// equally among its distinct features. Every feature in `features` is
/// present in the result.
pub fn variable_importances(sel: &Selection, spec: &TermSpec, train_values: &DenseMatrix, features: &[String]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = features.iter().map(|f| (f.clone(), 0.0)).collect();
    for (t, coef) in sel.coefficients() {
        let sd = sample_sd(train_values.col(t));
        let imp = coef.abs() * if sd.is_finite() { sd } else { 0.0 };
        let term = &spec.terms[t];
        let feats = term.features();
        let share = match term {
            Term::Rule(_) => imp / feats.len() as f64,
            Term::Linear(_) => imp,
        };
        for f in feats {
            *out.entry(f.to_string()).or_insert(0.0) += share;
        }
    }
    out
}

/// (true positive rate, false positive rate) of the used features against
/// the simulated ones.
pub fn selection_rates(used: &BTreeSet<String>, sim: &SimSpec, all: &[String]) -> (f64, f64) {
    let truth: BTreeSet<&str> = sim.features.iter().map(String::as_str).collect();
    let tp = used.iter().filter(|f| truth.contains(f.as_str())).count();
    let noise: Vec<&String> = all.iter().filter(|f| !truth.contains(f.as_str())).collect();
    let fp = noise.iter().filter(|f| used.contains(f.as_str())).count();
    let tpr = tp as f64 / truth.len() as f64;
    let fpr = if noise.is_empty() { 0.0 } else { fp as f64 / noise.len() as f64 };
    (tpr, fpr)
}

/// Pearson correlation of importances with |B| (0 for unselected
/// features). `None` when either side has zero variance.
pub fn importance_slope_correlation(importances: &BTreeMap<String, f64>, sim: &SimSpec) -> Option<f64> {
    let imp: Vec<f64> = importances.values().copied().collect();
    let slopes: Vec<f64> = importances.keys().map(|f| sim.abs_slope_of(f)).collect();
    pearson(&imp, &slopes)
}
