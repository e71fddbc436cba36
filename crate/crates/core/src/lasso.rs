//! L1-penalized linear and logistic regression by cyclic coordinate descent
//! on standardized columns, with a log-spaced lambda path, k-fold
//! cross-validation and min / one-standard-error selection.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::matrix::{mean, sample_sd, DenseMatrix};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
    Binomial,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Min,
    #[default]
    OneSe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max. `None` picks 1e-3 when
    /// there are more rows than columns and 1e-2 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub folds: usize,
    pub rule: SelectionRule,
    /// Convergence threshold on the largest standardized coefficient change
    /// (gaussian changes are measured with the response scaled to unit sd).
    pub tol: f64,
    /// Maximum coordinate-descent sweeps per fit.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: None,
            folds: 5,
            rule: SelectionRule::OneSe,
            tol: 1e-7,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds must be >= 2, got {}", self.folds)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.n_lambda == 0 {
            return Err(Error::InvalidArgument("n_lambda must be >= 1".into()));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!("lambda_min_ratio must be in (0, 1), got {r}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    pub fn min_ratio_for(&self, n_rows: usize, n_cols: usize) -> f64 {
        self.lambda_min_ratio
            .unwrap_or(if n_rows > n_cols { 1e-3 } else { 1e-2 })
    }

    fn validate_family(&self, family: Family, y: &[f64]) -> Result<()> {
        self.validate()?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite response".into()));
        }
        if family == Family::Binomial && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData("binomial response must be 0/1".into()));
        }
        Ok(())
    }
}

/// S(z, γ) = sign(z)·max(|z| − γ, 0).
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    crate::boosting::sigmoid(x)
}

const WEIGHT_FLOOR: f64 = 1e-5;

/// Per-column centering and scaling (population sd) used by the solver.
/// Constant columns keep sd 0 and never enter the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &DenseMatrix) -> Self {
        let n = x.n_rows() as f64;
        let mut means = Vec::with_capacity(x.n_cols());
        let mut sds = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let c = x.col(j);
            let m = mean(c);
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            let constant = !(sd.is_finite() && sd > 1e-10 * m.abs().max(1.0));
            means.push(m);
            sds.push(if constant { 0.0 } else { sd });
        }
        Self { means, sds }
    }

    pub fn is_usable(&self, j: usize) -> bool {
        self.sds[j] > 0.0
    }
}

struct Design {
    z: DenseMatrix,
    stats: Standardization,
    usable: Vec<usize>,
}

impl Design {
    fn new(x: &DenseMatrix) -> Self {
        let stats = Standardization::fit(x);
        let mut z = DenseMatrix::zeros(x.n_rows(), x.n_cols());
        let mut usable = Vec::new();
        for j in 0..x.n_cols() {
            if !stats.is_usable(j) {
                continue;
            }
            usable.push(j);
            let (m, s) = (stats.means[j], stats.sds[j]);
            for (dst, v) in z.col_mut(j).iter_mut().zip(x.col(j)) {
                *dst = (v - m) / s;
            }
        }
        Self { z, stats, usable }
    }

    fn n(&self) -> usize {
        self.z.n_rows()
    }

    fn lambda_max(&self, y: &[f64]) -> f64 {
        // Same expression for both families: the null-model gradient.
        let ybar = mean(y);
        let n = self.n() as f64;
        self.usable
            .iter()
            .map(|&j| {
                let dot: f64 = self.z.col(j).iter().zip(y).map(|(z, y)| z * (y - ybar)).sum();
                dot.abs() / n
            })
            .fold(0.0, f64::max)
    }

    fn to_point(&self, b0: f64, beta: &[f64]) -> PathPoint {
        let mut coefficients = vec![0.0; beta.len()];
        let mut intercept = b0;
        for &j in &self.usable {
            if beta[j] != 0.0 {
                let c = beta[j] / self.stats.sds[j];
                coefficients[j] = c;
                intercept -= c * self.stats.means[j];
            }
        }
        PathPoint {
            intercept,
            coefficients,
            std_intercept: b0,
            std_beta: beta.to_vec(),
        }
    }
}

/// Solution at one lambda. `intercept`/`coefficients` are on the original
/// column scale; the standardized values are kept for warm starts.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    std_intercept: f64,
    std_beta: Vec<f64>,
}

impl PathPoint {
    pub fn n_active(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    pub fn standardized(&self) -> (f64, &[f64]) {
        (self.std_intercept, &self.std_beta)
    }

    /// Linear predictor on rows of `x`.
    pub fn predict_link(&self, x: &DenseMatrix) -> Vec<f64> {
        let mut out = vec![self.intercept; x.n_rows()];
        for (j, &c) in self.coefficients.iter().enumerate() {
            if c != 0.0 {
                for (o, v) in out.iter_mut().zip(x.col(j)) {
                    *o += c * v;
                }
            }
        }
        out
    }
}

fn not_converged(iterations: usize, max_change: f64, b0: f64, beta: &[f64]) -> Error {
    let mut last = Vec::with_capacity(beta.len() + 1);
    last.push(b0);
    last.extend_from_slice(beta);
    Error::NotConverged {
        iterations,
        max_change,
        last,
    }
}

/// Gaussian coordinate descent. `resid` must equal y − ȳ − Zβ on entry.
fn cd_gaussian(d: &Design, lambda: f64, beta: &mut [f64], resid: &mut [f64], b0: f64, tol: f64, max_iter: usize) -> Result<()> {
    let n = d.n() as f64;
    let mut sweeps = 0usize;
    let sweep = |cols: &[usize], beta: &mut [f64], resid: &mut [f64]| -> f64 {
        let mut dmax = 0.0f64;
        for &j in cols {
            let zj = d.z.col(j);
            let g: f64 = zj.iter().zip(resid.iter()).map(|(z, r)| z * r).sum::<f64>() / n;
            let old = beta[j];
            let new = soft_threshold(g + old, lambda);
            if new != old {
                let delta = new - old;
                for (r, z) in resid.iter_mut().zip(zj) {
                    *r -= delta * z;
                }
                beta[j] = new;
                dmax = dmax.max(delta.abs());
            }
        }
        dmax
    };
    loop {
        let dmax = sweep(&d.usable, beta, resid);
        sweeps += 1;
        if dmax < tol {
            return Ok(());
        }
        if sweeps >= max_iter {
            return Err(not_converged(sweeps, dmax, b0, beta));
        }
        let active: Vec<usize> = d.usable.iter().copied().filter(|&j| beta[j] != 0.0).collect();
        loop {
            let dmax = sweep(&active, beta, resid);
            sweeps += 1;
            if dmax < tol {
                break;
            }
            if sweeps >= max_iter {
                return Err(not_converged(sweeps, dmax, b0, beta));
            }
        }
    }
}

/// Inner products reused across a gaussian path:
/// z_j·(y − ȳ)/n for every column, and Gram columns z_j·z_k/n filled in the
/// first time variable k moves.
struct Covariance {
    zy: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
}

impl Covariance {
    fn new(d: &Design, y: &[f64]) -> Self {
        let n = d.n() as f64;
        let ybar = mean(y);
        let mut zy = vec![0.0; d.z.n_cols()];
        for &j in &d.usable {
            zy[j] = d.z.col(j).iter().zip(y).map(|(z, y)| z * (y - ybar)).sum::<f64>() / n;
        }
        Self {
            zy,
            gram: vec![None; d.z.n_cols()],
        }
    }

    fn gram_col(&mut self, d: &Design, k: usize) -> &[f64] {
        self.gram[k].get_or_insert_with(|| {
            let n = d.n() as f64;
            let zk = d.z.col(k);
            let mut g = vec![0.0; d.z.n_cols()];
            for &j in &d.usable {
                g[j] = d.z.col(j).iter().zip(zk).map(|(a, b)| a * b).sum::<f64>() / n;
            }
            g
        })
    }

    /// Gradient z_j·(y − ȳ − Zβ)/n for every column.
    fn gradient(&mut self, d: &Design, beta: &[f64]) -> Vec<f64> {
        let mut grad = self.zy.clone();
        for &k in &d.usable {
            if beta[k] != 0.0 {
                let g = self.gram_col(d, k);
                for &j in &d.usable {
                    grad[j] -= g[j] * beta[k];
                }
            }
        }
        grad
    }
}

fn cov_sweep(d: &Design, cov: &mut Covariance, cols: &[usize], lambda: f64, beta: &mut [f64], grad: &mut [f64]) -> f64 {
    let mut dmax = 0.0f64;
    for &j in cols {
        let old = beta[j];
        let new = soft_threshold(grad[j] + old, lambda);
        if new != old {
            let delta = new - old;
            let g = cov.gram_col(d, j);
            for &i in &d.usable {
                grad[i] -= delta * g[i];
            }
            beta[j] = new;
            dmax = dmax.max(delta.abs());
        }
    }
    dmax
}

/// Penalized objective up to a constant, from the maintained gradient:
/// (1/2n)‖y − ȳ − Zβ‖² = const − ½ zy·β − ½ β·grad.
fn cov_objective(cov: &Covariance, lambda: f64, beta: &[f64], grad: &[f64]) -> f64 {
    beta.iter()
        .zip(&cov.zy)
        .zip(grad)
        .filter(|((b, _), _)| **b != 0.0)
        .map(|((b, zy), g)| -0.5 * b * (zy + g) + lambda * b.abs())
        .sum()
}

fn shift(d: &Design, cov: &mut Covariance, j: usize, delta: f64, beta: &mut [f64], grad: &mut [f64]) {
    let g = cov.gram_col(d, j);
    for &i in &d.usable {
        grad[i] -= delta * g[i];
    }
    beta[j] += delta;
}

/// Move toward the minimizer over the current active set with signs held
/// fixed, stopping where the first coefficient reaches zero. The step is
/// kept only if the objective decreases.
fn active_set_step(d: &Design, cov: &mut Covariance, lambda: f64, beta: &mut [f64], grad: &mut [f64]) -> bool {
    let active: Vec<usize> = d.usable.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    let m = active.len();
    if m == 0 {
        return false;
    }
    let mut g = DMatrix::<f64>::zeros(m, m);
    for (b, &k) in active.iter().enumerate() {
        let col = cov.gram_col(d, k);
        for (a, &j) in active.iter().enumerate() {
            g[(a, b)] = col[j];
        }
    }
    let rhs = DVector::from_iterator(m, active.iter().map(|&j| cov.zy[j] - lambda * beta[j].signum()));
    // Exactly collinear rules (a parent and its two children) make G_AA
    // singular. A tiny ridge then points along the null space, where the
    // objective falls linearly until a redundant coefficient reaches zero.
    let chol = match g.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridge = 1e-9 * (0..m).map(|a| g[(a, a)]).fold(0.0, f64::max);
            for a in 0..m {
                g[(a, a)] += ridge;
            }
            match g.cholesky() {
                Some(c) => c,
                None => return false,
            }
        }
    };
    let target = chol.solve(&rhs);
    if !target.iter().all(|v| v.is_finite()) {
        return false;
    }
    let mut t = 1.0;
    let mut blocked = None;
    for (a, &j) in active.iter().enumerate() {
        let (b, x) = (beta[j], target[a]);
        if x == 0.0 || x.signum() != b.signum() {
            let tj = b / (b - x);
            if tj < t {
                t = tj;
                blocked = Some(j);
            }
        }
    }
    let before = cov_objective(cov, lambda, beta, grad);
    let old: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
    for (a, &j) in active.iter().enumerate() {
        let new = if blocked == Some(j) { 0.0 } else { old[a] + t * (target[a] - old[a]) };
        let delta = new - beta[j];
        if delta != 0.0 {
            shift(d, cov, j, delta, beta, grad);
            beta[j] = new;
        }
    }
    if cov_objective(cov, lambda, beta, grad) < before {
        return true;
    }
    for (a, &j) in active.iter().enumerate() {
        let delta = old[a] - beta[j];
        if delta != 0.0 {
            shift(d, cov, j, delta, beta, grad);
            beta[j] = old[a];
        }
    }
    false
}

/// Active-set sweeps between attempts at an active-set step.
const STEP_EVERY: usize = 10;

/// Gaussian coordinate descent with covariance updates, O(p) rather than
/// O(n) per coordinate update. Active-set steps shortcut the slow tail on
/// correlated columns; convergence is still judged by a full sweep.
fn cd_gaussian_cov(
    d: &Design,
    cov: &mut Covariance,
    lambda: f64,
    beta: &mut [f64],
    b0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let mut grad = cov.gradient(d, beta);
    let mut sweeps = 0usize;
    loop {
        let dmax = cov_sweep(d, cov, &d.usable, lambda, beta, &mut grad);
        sweeps += 1;
        if dmax < tol {
            return Ok(());
        }
        if sweeps >= max_iter {
            return Err(not_converged(sweeps, dmax, b0, beta));
        }
        let active: Vec<usize> = d.usable.iter().copied().filter(|&j| beta[j] != 0.0).collect();
        let mut inner = 0usize;
        loop {
            if inner % STEP_EVERY == 0 {
                active_set_step(d, cov, lambda, beta, &mut grad);
            }
            inner += 1;
            let dmax = cov_sweep(d, cov, &active, lambda, beta, &mut grad);
            sweeps += 1;
            if dmax < tol {
                break;
            }
            if sweeps >= max_iter {
                return Err(not_converged(sweeps, dmax, b0, beta));
            }
        }
    }
}

fn linear_predictor(d: &Design, b0: f64, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![b0; d.n()];
    for &j in &d.usable {
        if beta[j] != 0.0 {
            for (e, z) in eta.iter_mut().zip(d.z.col(j)) {
                *e += beta[j] * z;
            }
        }
    }
    eta
}

/// Binomial fit: IRLS outer loop, weighted coordinate descent inside.
fn cd_binomial(d: &Design, y: &[f64], lambda: f64, b0: &mut f64, beta: &mut [f64], tol: f64, max_iter: usize) -> Result<()> {
    let n = d.n() as f64;
    let mut sweeps = 0usize;
    let mut w = vec![0.0; d.n()];
    let mut r = vec![0.0; d.n()];
    let mut xv = vec![0.0; beta.len()];
    loop {
        let eta = linear_predictor(d, *b0, beta);
        for i in 0..d.n() {
            let p = sigmoid(eta[i]);
            w[i] = (p * (1.0 - p)).max(WEIGHT_FLOOR);
            r[i] = (y[i] - p) / w[i];
        }
        let wsum: f64 = w.iter().sum();
        for &j in &d.usable {
            xv[j] = d.z.col(j).iter().zip(&w).map(|(z, w)| w * z * z).sum::<f64>() / n;
        }
        let old_b0 = *b0;
        let old_beta = beta.to_vec();

        let sweep = |cols: &[usize], b0: &mut f64, beta: &mut [f64], r: &mut [f64]| -> f64 {
            let d0 = r.iter().zip(&w).map(|(r, w)| r * w).sum::<f64>() / wsum;
            *b0 += d0;
            for ri in r.iter_mut() {
                *ri -= d0;
            }
            let mut dmax = d0.abs();
            for &j in cols {
                if xv[j] <= 0.0 {
                    continue;
                }
                let zj = d.z.col(j);
                let g: f64 = zj.iter().zip(r.iter()).zip(&w).map(|((z, r), w)| w * z * r).sum::<f64>() / n;
                let old = beta[j];
                let new = soft_threshold(g + xv[j] * old, lambda) / xv[j];
                if new != old {
                    let delta = new - old;
                    for (ri, z) in r.iter_mut().zip(zj) {
                        *ri -= delta * z;
                    }
                    beta[j] = new;
                    dmax = dmax.max(delta.abs());
                }
            }
            dmax
        };
        'inner: loop {
            let dmax = sweep(&d.usable, b0, beta, &mut r);
            sweeps += 1;
            if dmax < tol {
                break;
            }
            if sweeps >= max_iter {
                return Err(not_converged(sweeps, dmax, *b0, beta));
            }
            let active: Vec<usize> = d.usable.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            loop {
                let dmax = sweep(&active, b0, beta, &mut r);
                sweeps += 1;
                if dmax < tol {
                    continue 'inner;
                }
                if sweeps >= max_iter {
                    return Err(not_converged(sweeps, dmax, *b0, beta));
                }
            }
        }
        let change = beta
            .iter()
            .zip(&old_beta)
            .map(|(a, b)| (a - b).abs())
            .fold((*b0 - old_b0).abs(), f64::max);
        if change < tol {
            return Ok(());
        }
        if sweeps >= max_iter {
            return Err(not_converged(sweeps, change, *b0, beta));
        }
    }
}

fn fit_design(d: &Design, y: &[f64], lambda: f64, warm: Option<&PathPoint>, family: Family, cfg: &LassoConfig) -> Result<PathPoint> {
    let mut cov = None;
    fit_design_with(d, y, lambda, warm, family, cfg, &mut cov)
}

/// `cov` caches gaussian inner products between calls on the same design and response.
fn fit_design_with(
    d: &Design,
    y: &[f64],
    lambda: f64,
    warm: Option<&PathPoint>,
    family: Family,
    cfg: &LassoConfig,
    cov: &mut Option<Covariance>,
) -> Result<PathPoint> {
    let p = d.z.n_cols();
    let mut beta = match warm {
        Some(w) if w.std_beta.len() == p => w.std_beta.clone(),
        _ => vec![0.0; p],
    };
    match family {
        Family::Gaussian => {
            let ybar = mean(y);
            // Coefficient changes are compared on the standardized-response scale.
            let sy = population_sd(y);
            let tol = if sy > 0.0 { cfg.tol * sy } else { cfg.tol };
            if d.n() > d.usable.len() || d.usable.len() <= COV_MAX_COLS {
                let cov = cov.get_or_insert_with(|| Covariance::new(d, y));
                cd_gaussian_cov(d, cov, lambda, &mut beta, ybar, tol, cfg.max_iter)?;
            } else {
                let eta = linear_predictor(d, ybar, &beta);
                let mut resid: Vec<f64> = y.iter().zip(&eta).map(|(y, e)| y - e).collect();
                cd_gaussian(d, lambda, &mut beta, &mut resid, ybar, tol, cfg.max_iter)?;
            }
            Ok(d.to_point(ybar, &beta))
        }
        Family::Binomial => {
            let mut b0 = match warm {
                Some(w) if w.std_beta.len() == p => w.std_intercept,
                _ => null_binomial_intercept(y),
            };
            cd_binomial(d, y, lambda, &mut b0, &mut beta, cfg.tol, cfg.max_iter)?;
            Ok(d.to_point(b0, &beta))
        }
    }
}

/// Widest design solved with covariance updates when columns outnumber rows.
/// Gram columns are only built for variables that move, so memory stays at
/// (moved variables) x (columns).
const COV_MAX_COLS: usize = 2_000;

fn population_sd(y: &[f64]) -> f64 {
    let m = mean(y);
    (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64).sqrt()
}

fn null_binomial_intercept(y: &[f64]) -> f64 {
    let p = mean(y).clamp(1e-10, 1.0 - 1e-10);
    (p / (1.0 - p)).ln().clamp(-crate::boosting::LOGIT_CLAMP, crate::boosting::LOGIT_CLAMP)
}

fn null_intercept(y: &[f64], family: Family) -> f64 {
    match family {
        Family::Gaussian => mean(y),
        Family::Binomial => null_binomial_intercept(y),
    }
}

/// Smallest lambda at which every coefficient is zero.
pub fn lambda_max(x: &DenseMatrix, y: &[f64]) -> f64 {
    Design::new(x).lambda_max(y)
}

fn log_spaced(lmax: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lmax];
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda).map(|i| lmax * (step * i as f64).exp()).collect()
}

/// Decreasing log-spaced path from lambda_max down to lambda_max·ratio.
pub fn lambda_path(x: &DenseMatrix, y: &[f64], n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if x.n_rows() != y.len() {
        return Err(Error::InvalidArgument("row count differs from response length".into()));
    }
    let d = Design::new(x);
    if d.usable.is_empty() {
        return Err(Error::InvalidData("every column is constant".into()));
    }
    Ok(log_spaced(d.lambda_max(y), n_lambda, ratio))
}

pub fn fit_at_lambda(
    x: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    warm: Option<&PathPoint>,
    family: Family,
    cfg: &LassoConfig,
) -> Result<PathPoint> {
    cfg.validate_family(family, y)?;
    fit_design(&Design::new(x), y, lambda, warm, family, cfg)
}

/// Warm-started fits along `lambdas` (assumed decreasing).
pub fn fit_path(x: &DenseMatrix, y: &[f64], lambdas: &[f64], family: Family, cfg: &LassoConfig) -> Result<Vec<PathPoint>> {
    cfg.validate_family(family, y)?;
    let d = Design::new(x);
    path_on_design(&d, y, lambdas, family, cfg)
}

fn path_on_design(d: &Design, y: &[f64], lambdas: &[f64], family: Family, cfg: &LassoConfig) -> Result<Vec<PathPoint>> {
    let mut out: Vec<PathPoint> = Vec::with_capacity(lambdas.len());
    let mut cov = None;
    for &lambda in lambdas {
        let point = fit_design_with(d, y, lambda, out.last(), family, cfg, &mut cov)?;
        out.push(point);
    }
    Ok(out)
}

/// Penalized objective at an original-scale solution. The penalty is on
/// standardized coefficients, so it reads λ·Σ|c_j|·sd_j.
pub fn objective(x: &DenseMatrix, y: &[f64], point: &PathPoint, lambda: f64, family: Family) -> f64 {
    let stats = Standardization::fit(x);
    let eta = point.predict_link(x);
    let n = y.len() as f64;
    let loss = match family {
        Family::Gaussian => eta.iter().zip(y).map(|(e, y)| (y - e) * (y - e)).sum::<f64>() / (2.0 * n),
        Family::Binomial => eta.iter().zip(y).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / n,
    };
    let penalty: f64 = point
        .coefficients
        .iter()
        .zip(&stats.sds)
        .map(|(c, s)| c.abs() * s)
        .sum();
    loss + lambda * penalty
}

/// Largest violation of the optimality conditions on the standardized
/// scale: |g_j + λ·sign(β_j)| for active terms, max(|g_j| − λ, 0) otherwise.
pub fn kkt_violation(x: &DenseMatrix, y: &[f64], point: &PathPoint, lambda: f64, family: Family) -> f64 {
    let d = Design::new(x);
    let eta = point.predict_link(x);
    let mu: Vec<f64> = match family {
        Family::Gaussian => eta,
        Family::Binomial => eta.into_iter().map(sigmoid).collect(),
    };
    let n = y.len() as f64;
    let mut worst = 0.0f64;
    for &j in &d.usable {
        let g = -d.z.col(j).iter().zip(y).zip(&mu).map(|((z, y), m)| z * (y - m)).sum::<f64>() / n;
        let b = point.coefficients[j];
        let v = if b != 0.0 {
            (g + lambda * b.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Mean loss of predictions on held-out rows.
pub fn loss(eta: &[f64], y: &[f64], family: Family) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::Gaussian => eta.iter().zip(y).map(|(e, y)| (y - e) * (y - e)).sum::<f64>() / n,
        Family::Binomial => 2.0 * eta.iter().zip(y).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / n,
    }
}

/// Seeded fold labels. Binomial responses are stratified by class.
pub fn assign_folds(y: &[f64], k: usize, family: Family, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut folds = vec![0usize; y.len()];
    let groups: Vec<Vec<usize>> = match family {
        Family::Gaussian => vec![(0..y.len()).collect()],
        Family::Binomial => vec![
            (0..y.len()).filter(|&i| y[i] == 0.0).collect(),
            (0..y.len()).filter(|&i| y[i] != 0.0).collect(),
        ],
    };
    let mut next = 0usize;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub family: Family,
    pub rule: SelectionRule,
    pub folds: usize,
    /// Original-scale intercept.
    pub intercept: f64,
    /// Nonzero original-scale coefficients keyed by term index.
    pub coefficients: BTreeMap<usize, f64>,
    pub lambda_chosen: f64,
    pub lambda_min: f64,
    pub lambda_path: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    /// Active terms of the full-data fit at each path value.
    pub n_active: Vec<usize>,
    pub standardization: Standardization,
    pub n_terms: usize,
}

impl LassoFit {
    fn intercept_only(y: &[f64], family: Family, cfg: &LassoConfig, stats: Standardization) -> Self {
        let n_terms = stats.means.len();
        LassoFit {
            family,
            rule: cfg.rule,
            folds: cfg.folds,
            intercept: null_intercept(y, family),
            coefficients: BTreeMap::new(),
            lambda_chosen: 0.0,
            lambda_min: 0.0,
            lambda_path: Vec::new(),
            cv_mean: Vec::new(),
            cv_se: Vec::new(),
            n_active: Vec::new(),
            standardization: stats,
            n_terms,
        }
    }

    pub fn n_active_terms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_intercept_only(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn active_terms(&self) -> Vec<usize> {
        self.coefficients.keys().copied().collect()
    }

    pub fn predict_link(&self, x: &DenseMatrix) -> Vec<f64> {
        let mut out = vec![self.intercept; x.n_rows()];
        for (&j, &c) in &self.coefficients {
            for (o, v) in out.iter_mut().zip(x.col(j)) {
                *o += c * v;
            }
        }
        out
    }

    /// Regression: fitted values. Binomial: 0/1 class at link > 0.
    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        let eta = self.predict_link(x);
        match self.family {
            Family::Gaussian => eta,
            Family::Binomial => eta.into_iter().map(|e| if e > 0.0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn write_cv_curve<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "cv_mean", "cv_se", "n_active"])?;
        for i in 0..self.lambda_path.len() {
            w.write_record([
                format!("{:?}", self.lambda_path[i]),
                format!("{:?}", self.cv_mean[i]),
                format!("{:?}", self.cv_se[i]),
                self.n_active[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<cv curve>", e))?;
        Ok(())
    }
}

/// Index of the chosen lambda given a CV curve over a decreasing path.
/// Returns (chosen, argmin).
pub fn select_lambda(cv_mean: &[f64], cv_se: &[f64], rule: SelectionRule) -> (usize, usize) {
    let mut argmin = 0;
    for (i, &m) in cv_mean.iter().enumerate() {
        if m < cv_mean[argmin] {
            argmin = i;
        }
    }
    let chosen = match rule {
        SelectionRule::Min => argmin,
        SelectionRule::OneSe => {
            let bound = cv_mean[argmin] + cv_se[argmin];
            cv_mean.iter().position(|&m| m <= bound).unwrap_or(argmin)
        }
    };
    (chosen, argmin)
}

fn fold_losses(x: &DenseMatrix, y: &[f64], folds: &[usize], fold: usize, lambdas: &[f64], family: Family, cfg: &LassoConfig) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
    let xtr = x.select_rows(&train);
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let xte = x.select_rows(&test);
    let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let d = Design::new(&xtr);
    let constant_y = ytr.iter().all(|&v| v == ytr[0]);
    if d.usable.is_empty() || constant_y {
        let eta = vec![null_intercept(&ytr, family); yte.len()];
        return Ok(vec![loss(&eta, &yte, family); lambdas.len()]);
    }
    let path = path_on_design(&d, &ytr, lambdas, family, cfg)?;
    Ok(path.iter().map(|p| loss(&p.predict_link(&xte), &yte, family)).collect())
}

#[cfg(feature = "parallel")]
fn map_folds<F>(k: usize, f: F) -> Vec<Result<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    use rayon::prelude::*;
    (0..k).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_folds<F>(k: usize, f: F) -> Vec<Result<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    (0..k).map(f).collect()
}

/// Cross-validated Lasso: path from the full data, fold losses per lambda,
/// selection by `cfg.rule`, final fit on all rows at the chosen lambda.
pub fn cv_lasso(x: &DenseMatrix, y: &[f64], family: Family, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate_family(family, y)?;
    let n = y.len();
    if x.n_rows() != n {
        return Err(Error::InvalidArgument("row count differs from response length".into()));
    }
    if n < 2 * cfg.folds {
        return Err(Error::TooFewRows {
            needed: 2 * cfg.folds,
            have: n,
        });
    }
    let d = Design::new(x);
    let lmax = d.lambda_max(y);
    if d.usable.is_empty() || !(lmax > 0.0) {
        return Ok(LassoFit::intercept_only(y, family, cfg, d.stats));
    }
    let lambdas = log_spaced(lmax, cfg.n_lambda, cfg.min_ratio_for(n, x.n_cols()));
    let folds = assign_folds(y, cfg.folds, family, cfg.seed);
    let per_fold: Vec<Vec<f64>> = map_folds(cfg.folds, |f| fold_losses(x, y, &folds, f, &lambdas, family, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let k = cfg.folds as f64;
    let mut cv_mean = Vec::with_capacity(lambdas.len());
    let mut cv_se = Vec::with_capacity(lambdas.len());
    for i in 0..lambdas.len() {
        let l: Vec<f64> = per_fold.iter().map(|f| f[i]).collect();
        cv_mean.push(mean(&l));
        cv_se.push(sample_sd(&l) / k.sqrt());
    }
    let (chosen, argmin) = select_lambda(&cv_mean, &cv_se, cfg.rule);
    let path = path_on_design(&d, y, &lambdas, family, cfg)?;
    let best = &path[chosen];
    let coefficients = best
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| (j, *c))
        .collect();
    Ok(LassoFit {
        family,
        rule: cfg.rule,
        folds: cfg.folds,
        intercept: best.intercept,
        coefficients,
        lambda_chosen: lambdas[chosen],
        lambda_min: lambdas[argmin],
        n_active: path.iter().map(PathPoint::n_active).collect(),
        lambda_path: lambdas,
        cv_mean,
        cv_se,
        standardization: d.stats,
        n_terms: x.n_cols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rng: &mut seed::Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn random_matrix(n: usize, p: usize, rng: &mut seed::Rng) -> DenseMatrix {
        DenseMatrix::from_columns(n, (0..p).map(|_| (0..n).map(|_| normal(rng)).collect()).collect())
    }

    /// Centered columns with (1/n)·ZᵀZ = I via Gram-Schmidt.
    fn orthonormal(n: usize, p: usize, rng: &mut seed::Rng) -> DenseMatrix {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for _ in 0..p {
            let mut v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
            let m = mean(&v);
            v.iter_mut().for_each(|x| *x -= m);
            for u in &cols {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = (v.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        DenseMatrix::from_columns(n, cols)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn lambda_max_of_self_response_is_one() {
        let mut rng = seed::rng(1);
        let x = random_matrix(50, 1, &mut rng);
        let s = Standardization::fit(&x);
        let y: Vec<f64> = x.col(0).iter().map(|v| (v - s.means[0]) / s.sds[0]).collect();
        assert!((lambda_max(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_spacing() {
        let mut rng = seed::rng(2);
        let x = random_matrix(30, 3, &mut rng);
        let y: Vec<f64> = (0..30).map(|_| normal(&mut rng)).collect();
        let path = lambda_path(&x, &y, 3, 0.01).unwrap();
        let lmax = lambda_max(&x, &y);
        assert!((path[0] - lmax).abs() < 1e-15);
        assert!((path[1] - 0.1 * lmax).abs() < 1e-12 * lmax);
        assert!((path[2] - 0.01 * lmax).abs() < 1e-12 * lmax);
        let constant = DenseMatrix::from_columns(30, vec![vec![1.0; 30]]);
        assert!(lambda_path(&constant, &y, 3, 0.01).is_err());
    }

    #[test]
    fn at_lambda_max_everything_is_zero() {
        let mut rng = seed::rng(3);
        let x = random_matrix(40, 5, &mut rng);
        let y: Vec<f64> = (0..40).map(|i| x.get(i, 0) + normal(&mut rng)).collect();
        let lmax = lambda_max(&x, &y);
        for fam in [Family::Gaussian] {
            let p = fit_at_lambda(&x, &y, lmax, None, fam, &LassoConfig::default()).unwrap();
            assert_eq!(p.n_active(), 0);
            let p = fit_at_lambda(&x, &y, lmax * 0.999, None, fam, &LassoConfig::default()).unwrap();
            assert!(p.n_active() >= 1);
        }
    }

    #[test]
    fn orthonormal_closed_form() {
        let mut rng = seed::rng(4);
        for _ in 0..20 {
            let (n, p) = (60, 6);
            let x = orthonormal(n, p, &mut rng);
            let y: Vec<f64> = (0..n).map(|i| 2.0 * x.get(i, 0) - x.get(i, 3) + normal(&mut rng)).collect();
            let lambda = rng.random_range(0.01..0.8);
            let fit = fit_at_lambda(&x, &y, lambda, None, Family::Gaussian, &LassoConfig::default()).unwrap();
            for j in 0..p {
                let xy: f64 = x.col(j).iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                // Population sd of an orthonormal column is 1, so scales agree.
                assert!((fit.coefficients[j] - soft_threshold(xy, lambda)).abs() < 1e-8);
            }
        }
    }

    fn grid_min(x: &DenseMatrix, y: &[f64], lambda: f64) -> f64 {
        // Coarse-to-fine grid search over [−3, 3]² on standardized inputs.
        let n = y.len() as f64;
        let (x1, x2) = (x.col(0), x.col(1));
        let s11 = x1.iter().map(|a| a * a).sum::<f64>() / n;
        let s22 = x2.iter().map(|a| a * a).sum::<f64>() / n;
        let s12 = x1.iter().zip(x2).map(|(a, b)| a * b).sum::<f64>() / n;
        let ybar = mean(y);
        let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let s1y = x1.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / n;
        let s2y = x2.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / n;
        let syy = yc.iter().map(|a| a * a).sum::<f64>() / n;
        let f = |b1: f64, b2: f64| {
            0.5 * (syy - 2.0 * (b1 * s1y + b2 * s2y) + b1 * b1 * s11 + b2 * b2 * s22 + 2.0 * b1 * b2 * s12)
                + lambda * (b1.abs() + b2.abs())
        };
        let (mut c1, mut c2, mut half, mut best) = (0.0, 0.0, 3.0, f64::INFINITY);
        for _ in 0..4 {
            let steps = 300;
            let h = 2.0 * half / steps as f64;
            let (mut n1, mut n2) = (c1, c2);
            for a in 0..=steps {
                let b1 = (c1 - half + a as f64 * h).clamp(-3.0, 3.0);
                for b in 0..=steps {
                    let b2 = (c2 - half + b as f64 * h).clamp(-3.0, 3.0);
                    let v = f(b1, b2);
                    if v < best {
                        best = v;
                        n1 = b1;
                        n2 = b2;
                    }
                }
            }
            c1 = n1;
            c2 = n2;
            half = 10.0 * h;
        }
        best
    }

    #[test]
    fn two_column_grid_oracle() {
        let mut rng = seed::rng(5);
        for _ in 0..5 {
            let n = 40;
            let mut cols = orthonormal(n, 2, &mut rng);
            // Correlate the second column with the first, then restandardize.
            let rho = rng.random_range(-0.8..0.8);
            let mixed: Vec<f64> = (0..n).map(|i| rho * cols.get(i, 0) + (1.0 - rho * rho).sqrt() * cols.get(i, 1)).collect();
            cols.col_mut(1).copy_from_slice(&mixed);
            let x = cols;
            let y: Vec<f64> = (0..n).map(|i| x.get(i, 0) - 0.5 * x.get(i, 1) + 0.7 * normal(&mut rng)).collect();
            let lmax = lambda_max(&x, &y);
            for &frac in &[0.9, 0.5, 0.2, 0.05, 0.01] {
                let lambda = lmax * frac;
                let fit = fit_at_lambda(&x, &y, lambda, None, Family::Gaussian, &LassoConfig::default()).unwrap();
                let obj = objective(&x, &y, &fit, lambda, Family::Gaussian);
                let g = grid_min(&x, &y, lambda);
                assert!(obj <= g + 1e-9, "cd {obj} worse than grid {g}");
                assert!(g - obj < 1e-6, "grid {g} vs cd {obj}");
            }
        }
    }

    #[test]
    fn kkt_holds_along_paths() {
        let mut rng = seed::rng(6);
        let n = 80;
        let x = random_matrix(n, 12, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| 1.5 * x.get(i, 0) - x.get(i, 4) + normal(&mut rng)).collect();
        let lambdas = lambda_path(&x, &y, 30, 1e-3).unwrap();
        let path = fit_path(&x, &y, &lambdas, Family::Gaussian, &LassoConfig::default()).unwrap();
        assert_eq!(path[0].n_active(), 0);
        for (p, &l) in path.iter().zip(&lambdas) {
            assert!(kkt_violation(&x, &y, p, l, Family::Gaussian) < 1e-4);
        }
        let yb: Vec<f64> = (0..n)
            .map(|i| if x.get(i, 0) + 0.5 * normal(&mut rng) > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let lambdas = lambda_path(&x, &yb, 30, 1e-2).unwrap();
        let path = fit_path(&x, &yb, &lambdas, Family::Binomial, &LassoConfig::default()).unwrap();
        assert_eq!(path[0].n_active(), 0);
        for (p, &l) in path.iter().zip(&lambdas) {
            assert!(kkt_violation(&x, &yb, p, l, Family::Binomial) < 1e-4);
        }
    }

    #[test]
    fn collinear_rule_columns_converge() {
        // Each parent indicator is the sum of its two children, in both the
        // tall and the wide case.
        let mut rng = seed::rng(16);
        for n in [300, 40] {
            let raw = random_matrix(n, 20, &mut rng);
            let mut cols = Vec::new();
            for k in 0..20 {
                let a = k;
                let b = (k + 7) % 20;
                let parent: Vec<f64> = (0..n).map(|i| f64::from(raw.get(i, a) > 0.0)).collect();
                let left: Vec<f64> = (0..n).map(|i| parent[i] * f64::from(raw.get(i, b) > 0.3)).collect();
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                cols.extend([parent, left, right]);
            }
            let x = DenseMatrix::from_columns(n, cols);
            let y: Vec<f64> = (0..n)
                .map(|i| 2.0 * x.get(i, 0) - x.get(i, 4) + 0.5 * x.get(i, 9) + 0.3 * normal(&mut rng))
                .collect();
            let lambdas = lambda_path(&x, &y, 40, 1e-3).unwrap();
            let path = fit_path(&x, &y, &lambdas, Family::Gaussian, &LassoConfig::default()).unwrap();
            for (p, &l) in path.iter().zip(&lambdas) {
                assert!(kkt_violation(&x, &y, p, l, Family::Gaussian) < 1e-5, "n = {n}, lambda = {l}");
            }
        }
    }

    #[test]
    fn objective_non_increasing_across_sweeps() {
        let mut rng = seed::rng(7);
        let n = 50;
        let x = random_matrix(n, 8, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| x.get(i, 1) + x.get(i, 2) + normal(&mut rng)).collect();
        let lambda = 0.05;
        let d = Design::new(&x);
        let ybar = mean(&y);
        let mut prev = f64::INFINITY;
        for sweeps in 1..40 {
            let cfg = LassoConfig {
                max_iter: sweeps,
                ..Default::default()
            };
            let point = match fit_at_lambda(&x, &y, lambda, None, Family::Gaussian, &cfg) {
                Ok(p) => p,
                Err(Error::NotConverged { last, .. }) => d.to_point(ybar, &last[1..]),
                Err(e) => panic!("{e}"),
            };
            let obj = objective(&x, &y, &point, lambda, Family::Gaussian);
            assert!(obj <= prev + 1e-12);
            prev = obj;
        }
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let mut rng = seed::rng(8);
        let x = random_matrix(30, 4, &mut rng);
        let y: Vec<f64> = (0..30).map(|i| x.get(i, 0) + x.get(i, 1)).collect();
        let cfg = LassoConfig {
            max_iter: 1,
            ..Default::default()
        };
        match fit_at_lambda(&x, &y, 0.01, None, Family::Gaussian, &cfg) {
            Err(Error::NotConverged { last, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last.len(), 5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn destandardized_predictions_match() {
        let mut rng = seed::rng(9);
        let n = 60;
        let mut x = random_matrix(n, 5, &mut rng);
        for i in 0..n {
            x.set(i, 2, x.get(i, 2) * 40.0 + 100.0);
        }
        let y: Vec<f64> = (0..n).map(|i| x.get(i, 2) * 0.1 + normal(&mut rng)).collect();
        let p = fit_at_lambda(&x, &y, 0.05, None, Family::Gaussian, &LassoConfig::default()).unwrap();
        let d = Design::new(&x);
        let (b0, beta) = p.standardized();
        let std_pred = linear_predictor(&d, b0, beta);
        for (a, b) in std_pred.iter().zip(p.predict_link(&x)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_response_is_mostly_intercept_only() {
        let mut rng = seed::rng(10);
        let mut empty = 0;
        for run in 0..100 {
            let n = 100;
            let x = random_matrix(n, 20, &mut rng);
            let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let cfg = LassoConfig {
                seed: run,
                n_lambda: 40,
                ..Default::default()
            };
            if cv_lasso(&x, &y, Family::Gaussian, &cfg).unwrap().is_intercept_only() {
                empty += 1;
            }
        }
        assert!(empty > 50, "intercept-only in {empty}/100 runs");
    }

    #[test]
    fn linear_signal_is_selected_with_sign() {
        let mut rng = seed::rng(11);
        let n = 100;
        let x = random_matrix(n, 10, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| -3.0 * x.get(i, 6)).collect();
        let fit = cv_lasso(&x, &y, Family::Gaussian, &LassoConfig::default()).unwrap();
        assert!(fit.coefficients[&6] < 0.0);
        let min = cv_lasso(&x, &y, Family::Gaussian, &LassoConfig { rule: SelectionRule::Min, ..Default::default() }).unwrap();
        assert!(fit.lambda_chosen >= min.lambda_chosen);
        assert_eq!(fit.lambda_min, min.lambda_chosen);
    }

    #[test]
    fn one_se_never_below_min() {
        let mut rng = seed::rng(12);
        for _ in 0..200 {
            let m: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let s: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 0.2).collect();
            let (one, argmin) = select_lambda(&m, &s, SelectionRule::OneSe);
            assert!(one <= argmin);
            assert!(m[one] <= m[argmin] + s[argmin]);
            assert!(m[..one].iter().all(|&v| v > m[argmin] + s[argmin]));
        }
    }

    #[test]
    fn constant_response_gives_intercept_only() {
        let mut rng = seed::rng(13);
        let x = random_matrix(30, 4, &mut rng);
        let fit = cv_lasso(&x, &[2.5; 30], Family::Gaussian, &LassoConfig::default()).unwrap();
        assert!(fit.is_intercept_only());
        assert_eq!(fit.intercept, 2.5);
        assert_eq!(fit.predict(&x), vec![2.5; 30]);
    }

    #[test]
    fn stratified_folds_hold_both_classes() {
        let y: Vec<f64> = (0..23).map(|i| if i < 6 { 1.0 } else { 0.0 }).collect();
        let folds = assign_folds(&y, 5, Family::Binomial, 3);
        for f in 0..5 {
            let members: Vec<usize> = (0..23).filter(|&i| folds[i] == f).collect();
            assert!(members.len() >= 4);
            assert!(members.iter().any(|&i| y[i] == 1.0));
            assert!(members.iter().any(|&i| y[i] == 0.0));
        }
        assert_eq!(folds, assign_folds(&y, 5, Family::Binomial, 3));
    }

    #[test]
    fn binomial_cv_separates_classes() {
        let mut rng = seed::rng(14);
        let n = 120;
        let x = random_matrix(n, 6, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| if 2.0 * x.get(i, 3) + normal(&mut rng) * 0.5 > 0.0 { 1.0 } else { 0.0 }).collect();
        let fit = cv_lasso(&x, &y, Family::Binomial, &LassoConfig::default()).unwrap();
        assert!(fit.coefficients[&3] > 0.0);
        let pred = fit.predict(&x);
        let ccr = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / n as f64;
        assert!(ccr > 0.8);
        let mut buf = Vec::new();
        fit.write_cv_curve(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,cv_mean,cv_se,n_active\n"));
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DenseMatrix::zeros(6, 1);
        assert!(matches!(cv_lasso(&x, &[0.0; 6], Family::Gaussian, &LassoConfig::default()), Err(Error::TooFewRows { .. })));
        assert!(LassoConfig { folds: 1, ..Default::default() }.validate().is_err());
        assert!(LassoConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        let x = DenseMatrix::zeros(12, 1);
        assert!(cv_lasso(&x, &[0.5; 12], Family::Binomial, &LassoConfig::default()).is_err());
    }

    #[test]
    fn fit_is_deterministic_and_serializable() {
        let mut rng = seed::rng(15);
        let n = 50;
        let x = random_matrix(n, 8, &mut rng);
        let y: Vec<f64> = (0..n).map(|i| x.get(i, 0) + normal(&mut rng)).collect();
        let a = cv_lasso(&x, &y, Family::Gaussian, &LassoConfig::default()).unwrap();
        let b = cv_lasso(&x, &y, Family::Gaussian, &LassoConfig::default()).unwrap();
        assert_eq!(a, b);
        let back: LassoFit = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
