//! One-dimensional Gaussian mixture over normalized expenditures.
//!
//! Each mixture component is an expenditure grade. [`fit_gmm`] estimates the
//! grades with EM; [`positioning_matrix`] turns a business pricing into its
//! posterior distribution over grades.

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of expenditure grades.
pub const DEFAULT_GRADES: usize = 5;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const DENOMINATOR_FLOOR: f64 = 1e-300;
/// Inputs may sit this far outside `[0, 1]` from rounding before they count as off-scale.
const SCALE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    #[serde(rename = "T")]
    pub num_components: usize,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub phi: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    /// `None` selects `max(1e-6, 1e-4 * data variance)`.
    pub variance_floor: Option<f64>,
    pub seed: u64,
    /// Extra EM runs whose initial means are distinct data points drawn
    /// with `seed`; the best final likelihood wins.
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            tol: 1e-8,
            max_iters: 500,
            variance_floor: None,
            seed: 0,
            restarts: 10,
        }
    }
}

/// A fitted model together with the log-likelihood after every EM iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// `trace[0]` is the initial parameters' likelihood; the last entry is the returned model's.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
}

/// Posterior grade membership for a single observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(pub Vec<f64>);

impl Responsibilities {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Row-stochastic `n x T` matrix of business positioning over grades.
#[derive(Debug, Clone, PartialEq)]
pub struct PositioningMatrix {
    rows: usize,
    grades: usize,
    data: Vec<f64>,
}

impl PositioningMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let grades = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != grades) {
            return Err(Error::ShapeMismatch("positioning rows differ in length".into()));
        }
        Ok(PositioningMatrix {
            rows: rows.len(),
            grades,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_grades(&self) -> usize {
        self.grades
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.grades..(j + 1) * self.grades]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        let t = self.num_components;
        if t == 0 || self.mu.len() != t || self.sigma2.len() != t || self.phi.len() != t {
            return Err(Error::ShapeMismatch(format!(
                "mixture with T={} has {} means, {} variances, {} weights",
                t,
                self.mu.len(),
                self.sigma2.len(),
                self.phi.len()
            )));
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0)) || self.phi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument("variances and weights must be positive".into()));
        }
        let total: f64 = self.phi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    fn log_joint(&self, x: f64, out: &mut [f64]) {
        for (t, slot) in out.iter_mut().enumerate() {
            let d = x - self.mu[t];
            *slot = self.phi[t].ln() - 0.5 * (LN_2PI + self.sigma2[t].ln()) - d * d / (2.0 * self.sigma2[t]);
        }
    }

    fn log_density(&self, x: f64, scratch: &mut [f64]) -> f64 {
        self.log_joint(x, scratch);
        log_sum_exp(scratch)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn check_scale(values: &[f64], what: &str) -> Result<()> {
    for &v in values {
        if !(v >= -SCALE_SLACK && v <= 1.0 + SCALE_SLACK) {
            return Err(Error::InvalidArgument(format!(
                "{what} value {v} is outside the normalized [0, 1] scale"
            )));
        }
    }
    Ok(())
}

/// Sum over `values` of `log sum_t phi_t N(x; mu_t, sigma2_t)`.
pub fn log_likelihood(model: &GmmModel, values: &[f64]) -> f64 {
    let mut scratch = vec![0.0; model.num_components];
    values.iter().map(|&x| model.log_density(x, &mut scratch)).sum()
}

pub fn responsibilities(model: &GmmModel, x: f64) -> Responsibilities {
    let mut out = vec![0.0; model.num_components];
    write_responsibilities(model, x, &mut out);
    Responsibilities(out)
}

fn write_responsibilities(model: &GmmModel, x: f64, out: &mut [f64]) {
    model.log_joint(x, out);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in out.iter_mut() {
        *v = (*v - max).exp();
    }
    let denom = out.iter().sum::<f64>().max(DENOMINATOR_FLOOR);
    for v in out.iter_mut() {
        *v /= denom;
    }
}

/// Row `j` is the grade posterior evaluated at normalized pricing `v[j]`.
pub fn positioning_matrix(model: &GmmModel, v_normalized: &[f64]) -> Result<PositioningMatrix> {
    model.validate()?;
    check_scale(v_normalized, "pricing")?;
    let grades = model.num_components;
    let mut data = vec![0.0; v_normalized.len() * grades];
    for (row, &v) in data.chunks_mut(grades).zip(v_normalized) {
        write_responsibilities(model, v, row);
    }
    Ok(PositioningMatrix {
        rows: v_normalized.len(),
        grades,
        data,
    })
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn default_variance_floor(values: &[f64]) -> f64 {
    (1e-4 * population_variance(values)).max(1e-6)
}

pub fn fit_gmm(values: &[f64], num_components: usize, config: &GmmConfig) -> Result<GmmModel> {
    fit_gmm_with_trace(values, num_components, config).map(|fit| fit.model)
}

pub fn fit_gmm_with_trace(values: &[f64], num_components: usize, config: &GmmConfig) -> Result<GmmFit> {
    if num_components == 0 {
        return Err(Error::InvalidArgument("number of grades must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a mixture to no values".into()));
    }
    check_scale(values, "expenditure")?;

    let floor = config.variance_floor.unwrap_or_else(|| default_variance_floor(values));
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!("variance floor {floor} must be positive")));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = num_components;
    let base_means: Vec<f64> = (1..=t)
        .map(|z| quantile(&sorted, (2 * z - 1) as f64 / (2 * t) as f64))
        .collect();
    let init_var = (population_variance(values) / (t * t) as f64).max(floor);

    let initial = |means: Vec<f64>| GmmModel {
        num_components: t,
        mu: means,
        sigma2: vec![init_var; t],
        phi: vec![1.0 / t as f64; t],
        converged: false,
    };

    let mut best = run_em(values, initial(base_means.clone()), floor, config);
    if config.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.restarts {
            let mut means: Vec<f64> = index::sample(&mut rng, values.len(), t.min(values.len()))
                .iter()
                .map(|i| values[i])
                .collect();
            means.resize(t, sorted[sorted.len() / 2]);
            means.sort_by(f64::total_cmp);
            let candidate = run_em(values, initial(means), floor, config);
            if candidate.log_likelihood_trace.last() > best.log_likelihood_trace.last() {
                best = candidate;
            }
        }
    }
    canonicalize(&mut best.model);
    Ok(best)
}

fn run_em(values: &[f64], mut model: GmmModel, floor: f64, config: &GmmConfig) -> GmmFit {
    let t = model.num_components;
    let n = values.len() as f64;
    let mut omega = vec![0.0; t];
    let mut weight = vec![0.0; t];
    let mut first = vec![0.0; t];
    let mut second = vec![0.0; t];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        // E-step, accumulating sufficient statistics around the current means.
        weight.iter_mut().for_each(|v| *v = 0.0);
        first.iter_mut().for_each(|v| *v = 0.0);
        second.iter_mut().for_each(|v| *v = 0.0);
        let offset: Vec<f64> = (0..t)
            .map(|z| model.phi[z].ln() - 0.5 * (LN_2PI + model.sigma2[z].ln()))
            .collect();
        let inv_two_var: Vec<f64> = model.sigma2.iter().map(|s| 0.5 / s).collect();
        let mut ll = 0.0;
        for &x in values {
            let mut max = f64::NEG_INFINITY;
            for z in 0..t {
                let d = x - model.mu[z];
                omega[z] = offset[z] - d * d * inv_two_var[z];
                max = max.max(omega[z]);
            }
            let mut total = 0.0;
            for w in omega.iter_mut() {
                *w = (*w - max).exp();
                total += *w;
            }
            ll += max + total.ln();
            for z in 0..t {
                let w = omega[z] / total;
                let d = x - model.mu[z];
                weight[z] += w;
                first[z] += w * d;
                second[z] += w * d * d;
            }
        }

        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.tol {
                model.converged = true;
                trace.push(ll);
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iters {
            break;
        }
        iterations += 1;

        // M-step.
        for z in 0..t {
            if weight[z] > 0.0 {
                let shift = first[z] / weight[z];
                model.mu[z] += shift;
                model.sigma2[z] = (second[z] / weight[z] - shift * shift).max(floor);
            }
            model.phi[z] = (weight[z] / n).max(DENOMINATOR_FLOOR);
        }
    }

    GmmFit {
        model,
        log_likelihood_trace: trace,
        iterations,
    }
}

fn canonicalize(model: &mut GmmModel) {
    let mut order: Vec<usize> = (0..model.num_components).collect();
    order.sort_by(|&a, &b| model.mu[a].total_cmp(&model.mu[b]));
    model.mu = order.iter().map(|&i| model.mu[i]).collect();
    model.sigma2 = order.iter().map(|&i| model.sigma2[i]).collect();
    model.phi = order.iter().map(|&i| model.phi[i]).collect();
}
