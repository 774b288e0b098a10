//! Metrics and experiment protocols.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, SparseReviews};
use crate::error::{Error, Result};
use crate::model::{self, EarpModel, ExpenditureWeights, MeanBaseline, Predictor, TrainConfig, Variant};

fn check_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no (truth, prediction) pairs to score".into()));
    }
    Ok(())
}

/// Root mean squared error over `(truth, prediction)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    check_pairs(pairs)?;
    let sse: f64 = pairs.iter().map(|(r, p)| (r - p) * (r - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Mean absolute error over `(truth, prediction)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    check_pairs(pairs)?;
    let sae: f64 = pairs.iter().map(|(r, p)| (r - p).abs()).sum();
    Ok(sae / pairs.len() as f64)
}

/// A rating predictor the harness knows how to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    UserMean,
    ItemMean,
    #[serde(untagged)]
    Model(Variant),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::UserMean,
        Method::ItemMean,
        Method::Model(Variant::Pmf),
        Method::Model(Variant::EarpE),
        Method::Model(Variant::EarpU),
        Method::Model(Variant::EarpM),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::UserMean => "user-mean",
            Method::ItemMean => "item-mean",
            Method::Model(v) => v.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user-mean" | "usermean" => Ok(Method::UserMean),
            "item-mean" | "itemmean" => Ok(Method::ItemMean),
            other => other.parse().map(Method::Model),
        }
    }
}

/// Outcome of training one method on one split and scoring it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub train_ratio: f64,
    pub drop_ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub train_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Hash of the training entries; equal across methods of one trial.
    pub train_hash: String,
    /// Hash of the test ratings.
    pub test_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub train_ratio: f64,
    pub drop_ratio: f64,
    pub trials: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rmse_se: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub mae_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<TrialResult>,
    pub summary: Vec<Aggregate>,
}

pub const TRIALS_CSV_HEADER: &str =
    "method,train_ratio,drop_ratio,trial,seed,rmse,mae,train_seconds,iterations,converged,train_hash,test_hash";
pub const SUMMARY_CSV_HEADER: &str =
    "method,train_ratio,drop_ratio,trials,rmse_mean,rmse_std,rmse_se,mae_mean,mae_std,mae_se";

/// Sample mean, sample standard deviation and standard error.
pub fn mean_std_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, std, std / n.sqrt())
}

impl EvalReport {
    fn from_rows(mut rows: Vec<TrialResult>) -> Self {
        rows.sort_by(|a, b| {
            (a.method, a.train_ratio.to_bits(), a.drop_ratio.to_bits(), a.trial)
                .cmp(&(b.method, b.train_ratio.to_bits(), b.drop_ratio.to_bits(), b.trial))
        });
        let mut summary: Vec<Aggregate> = Vec::new();
        for chunk in rows.chunk_by(|a, b| {
            a.method == b.method && a.train_ratio == b.train_ratio && a.drop_ratio == b.drop_ratio
        }) {
            let rmses: Vec<f64> = chunk.iter().map(|r| r.rmse).collect();
            let maes: Vec<f64> = chunk.iter().map(|r| r.mae).collect();
            let (rmse_mean, rmse_std, rmse_se) = mean_std_se(&rmses);
            let (mae_mean, mae_std, mae_se) = mean_std_se(&maes);
            summary.push(Aggregate {
                method: chunk[0].method,
                train_ratio: chunk[0].train_ratio,
                drop_ratio: chunk[0].drop_ratio,
                trials: chunk.len(),
                rmse_mean,
                rmse_std,
                rmse_se,
                mae_mean,
                mae_std,
                mae_se,
            });
        }
        EvalReport { rows, summary }
    }

    pub fn aggregate(&self, method: Method, train_ratio: f64, drop_ratio: f64) -> Option<&Aggregate> {
        self.summary
            .iter()
            .find(|a| a.method == method && a.train_ratio == train_ratio && a.drop_ratio == drop_ratio)
    }

    pub fn cells(&self, method: Method) -> impl Iterator<Item = &TrialResult> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn write_trials_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRIALS_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.train_ratio,
                r.drop_ratio,
                r.trial,
                r.seed,
                r.rmse,
                r.mae,
                r.train_seconds,
                r.iterations,
                r.converged,
                r.train_hash,
                r.test_hash
            )?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SUMMARY_CSV_HEADER}")?;
        for a in &self.summary {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                a.method,
                a.train_ratio,
                a.drop_ratio,
                a.trials,
                a.rmse_mean,
                a.rmse_std,
                a.rmse_se,
                a.mae_mean,
                a.mae_std,
                a.mae_se
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub train_ratios: Vec<f64>,
    pub trials: usize,
    /// Trial `t` splits and initializes with seed `base_seed + t`.
    pub base_seed: u64,
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: Method::ALL.to_vec(),
            train_ratios: vec![0.6, 0.7, 0.8, 0.9],
            trials: 10,
            base_seed: 0,
            train: TrainConfig::default(),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub drop_ratios: Vec<f64>,
    pub train_ratio: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: vec![
                Method::Model(Variant::EarpE),
                Method::Model(Variant::EarpU),
                Method::Model(Variant::EarpM),
            ],
            drop_ratios: (1..=9).map(|k| k as f64 / 10.0).collect(),
            train_ratio: 0.8,
            trials: 10,
            base_seed: 0,
            train: TrainConfig::default(),
            threads: 1,
        }
    }
}

/// Trains `method` on `train` and scores clamped predictions on `test`.
pub fn evaluate_method(
    method: Method,
    train: &SparseReviews,
    test: &SparseReviews,
    config: &TrainConfig,
) -> Result<(f64, f64, f64, usize, bool)> {
    let start = Instant::now();
    let (predictor, iterations, converged): (Box<dyn Predictor>, usize, bool) = match method {
        Method::UserMean => (Box::new(MeanBaseline::user_mean(train)?), 0, true),
        Method::ItemMean => (Box::new(MeanBaseline::item_mean(train)?), 0, true),
        Method::Model(variant) => {
            let fitted = model::train(train, variant, config)?;
            let (it, conv) = (fitted.iterations, fitted.converged);
            (Box::new(fitted), it, conv)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let pairs = test
        .entries()
        .iter()
        .map(|e| predictor.predict(e.user, e.business).map(|p| (e.rating, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok((rmse(&pairs)?, mae(&pairs)?, seconds, iterations, converged))
}

fn with_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn validate_methods(methods: &[Method], trials: usize) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to evaluate".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    Ok(())
}

/// Repeated random splits: every method is trained on the same split per
/// (ratio, trial) and scored on the held-out entries.
pub fn run_experiment(data: &SparseReviews, config: &ExperimentConfig) -> Result<EvalReport> {
    validate_methods(&config.methods, config.trials)?;
    if config.train_ratios.is_empty() {
        return Err(Error::InvalidArgument("no train ratios given".into()));
    }
    let jobs: Vec<(f64, usize)> = config
        .train_ratios
        .iter()
        .flat_map(|&r| (0..config.trials).map(move |t| (r, t)))
        .collect();

    let results: Result<Vec<Vec<TrialResult>>> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(ratio, trial)| {
                let seed = config.base_seed + trial as u64;
                let (train, test) = data::split(data, ratio, seed)?;
                let train_hash = train.content_hash();
                let test_hash = test.ratings_hash();
                let train_config = TrainConfig {
                    seed,
                    ..config.train.clone()
                };
                config
                    .methods
                    .iter()
                    .map(|&method| {
                        let (rmse, mae, secs, iterations, converged) =
                            evaluate_method(method, &train, &test, &train_config)
                                .map_err(|e| e.context(format!("{method}, train ratio {ratio}, trial {trial}")))?;
                        info!("{method} ratio={ratio} trial={trial} rmse={rmse:.4} mae={mae:.4}");
                        Ok(TrialResult {
                            method,
                            train_ratio: ratio,
                            drop_ratio: 0.0,
                            trial,
                            seed,
                            rmse,
                            mae,
                            train_seconds: secs,
                            iterations,
                            converged,
                            train_hash: train_hash.clone(),
                            test_hash: test_hash.clone(),
                        })
                    })
                    .collect()
            })
            .collect()
    })?;
    Ok(EvalReport::from_rows(results?.into_iter().flatten().collect()))
}

/// Expenditure dropout on the training side only, at a fixed train ratio.
///
/// A drop ratio of zero reproduces the matching cell of [`run_experiment`]
/// with the same base seed.
pub fn run_dropout_sweep(data: &SparseReviews, config: &SweepConfig) -> Result<EvalReport> {
    validate_methods(&config.methods, config.trials)?;
    if config.drop_ratios.is_empty() {
        return Err(Error::InvalidArgument("no drop ratios given".into()));
    }
    let jobs: Vec<(usize, f64)> = (0..config.trials)
        .flat_map(|t| config.drop_ratios.iter().map(move |&d| (t, d)))
        .collect();

    let results: Result<Vec<Vec<TrialResult>>> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(trial, drop)| {
                let seed = config.base_seed + trial as u64;
                let (train, test) = data::split(data, config.train_ratio, seed)?;
                let train = data::drop_expenditures(&train, drop, seed)?;
                let train_hash = train.content_hash();
                let test_hash = test.ratings_hash();
                let train_config = TrainConfig {
                    seed,
                    ..config.train.clone()
                };
                config
                    .methods
                    .iter()
                    .map(|&method| {
                        let (rmse, mae, secs, iterations, converged) =
                            evaluate_method(method, &train, &test, &train_config)
                                .map_err(|e| e.context(format!("{method}, drop ratio {drop}, trial {trial}")))?;
                        info!("{method} drop={drop} trial={trial} rmse={rmse:.4}");
                        Ok(TrialResult {
                            method,
                            train_ratio: config.train_ratio,
                            drop_ratio: drop,
                            trial,
                            seed,
                            rmse,
                            mae,
                            train_seconds: secs,
                            iterations,
                            converged,
                            train_hash: train_hash.clone(),
                            test_hash: test_hash.clone(),
                        })
                    })
                    .collect()
            })
            .collect()
    })?;
    Ok(EvalReport::from_rows(results?.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub bucket_width: f64,
    pub bucket_count: usize,
    /// Centres of the user spending types to profile.
    pub user_types: Vec<f64>,
    /// Half-width of the spending window around each user type centre.
    pub window: f64,
    /// Target pricings whose nearest business's positioning row is reported.
    pub pricings: Vec<f64>,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            bucket_width: 20.0,
            bucket_count: 7,
            user_types: vec![20.0, 70.0, 120.0],
            window: 10.0,
            pricings: vec![20.0, 150.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendingGroup {
    /// Inclusive lower spending bound.
    pub lower: f64,
    /// Exclusive upper bound; `None` for the open-ended last bucket.
    pub upper: Option<f64>,
    pub users: usize,
    pub avg_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningRow {
    pub target_pricing: f64,
    pub business_id: String,
    pub pricing: f64,
    pub probabilities: Vec<f64>,
    pub peak_grade: usize,
    /// Grade whose mean lies closest to the target pricing on the mixture's scale.
    pub nearest_grade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    /// Grade means mapped back to currency units.
    pub grade_centers: Vec<f64>,
    /// `1/m sum_i W[i, t]`.
    pub avg_weight_per_grade: Vec<f64>,
    pub spending_buckets: Vec<SpendingGroup>,
    pub user_types: Vec<SpendingGroup>,
    pub positioning_rows: Vec<PositioningRow>,
}

fn mean_rows(weights: &crate::matrix::Matrix, users: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; weights.cols()];
    for &i in users {
        for (a, w) in acc.iter_mut().zip(weights.row(i)) {
            *a += w;
        }
    }
    if !users.is_empty() {
        acc.iter_mut().for_each(|a| *a /= users.len() as f64);
    }
    acc
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

/// Summaries of the sentiment matrix `W` and positioning matrix `D` of an
/// EARP-M model. Spending buckets are in currency units; the last bucket
/// collects every spending at or above its lower bound. Users whose
/// spending was imputed are left out of the spending tables.
pub fn case_study(model: &EarpModel, business_ids: &[String], config: &CaseStudyConfig) -> Result<CaseStudyReport> {
    let weights = match (&model.weights, model.variant) {
        (ExpenditureWeights::PerGrade(w), Variant::EarpM) => w,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "case study needs an earp-m model, got {}",
                model.variant
            )))
        }
    };
    let side = model
        .side
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model carries no expenditure statistics".into()))?;
    let (gmm, scale, d) = match (&side.gmm, &side.expenditure_scale, &side.positioning) {
        (Some(g), Some(s), Some(d)) => (g, s, d),
        _ => return Err(Error::InvalidArgument("model carries no expenditure mixture".into())),
    };
    if business_ids.len() != d.num_rows() || side.raw_pricing.len() != d.num_rows() {
        return Err(Error::ShapeMismatch("business ids and pricing do not match the model".into()));
    }
    if config.bucket_count == 0 || !(config.bucket_width > 0.0) {
        return Err(Error::InvalidArgument("need a positive bucket width and count".into()));
    }

    let all: Vec<usize> = (0..weights.rows()).collect();
    let avg_weight_per_grade = mean_rows(weights, &all);

    let known: Vec<usize> = (0..weights.rows())
        .filter(|&i| !side.spending_imputed.get(i).copied().unwrap_or(false))
        .collect();
    let spending = |i: usize| side.spending.get(i).copied().unwrap_or(f64::NAN);

    let spending_buckets = (0..config.bucket_count)
        .map(|b| {
            let lower = b as f64 * config.bucket_width;
            let upper = (b + 1 < config.bucket_count).then(|| lower + config.bucket_width);
            let members: Vec<usize> = known
                .iter()
                .copied()
                .filter(|&i| spending(i) >= lower && upper.is_none_or(|u| spending(i) < u))
                .collect();
            SpendingGroup {
                lower,
                upper,
                users: members.len(),
                avg_weights: mean_rows(weights, &members),
            }
        })
        .collect();

    let user_types = config
        .user_types
        .iter()
        .map(|&center| {
            let members: Vec<usize> = known
                .iter()
                .copied()
                .filter(|&i| (spending(i) - center).abs() <= config.window)
                .collect();
            SpendingGroup {
                lower: center - config.window,
                upper: Some(center + config.window),
                users: members.len(),
                avg_weights: mean_rows(weights, &members),
            }
        })
        .collect();

    let positioning_rows = config
        .pricings
        .iter()
        .map(|&target| {
            let j = (0..d.num_rows())
                .filter(|&j| !side.pricing_imputed.get(j).copied().unwrap_or(false))
                .min_by(|&a, &b| {
                    (side.raw_pricing[a] - target)
                        .abs()
                        .total_cmp(&(side.raw_pricing[b] - target).abs())
                })
                .unwrap_or(0);
            let at = scale.apply(target);
            let nearest_grade = (0..gmm.num_components)
                .min_by(|&a, &b| (gmm.mu[a] - at).abs().total_cmp(&(gmm.mu[b] - at).abs()))
                .unwrap_or(0);
            PositioningRow {
                target_pricing: target,
                business_id: business_ids[j].clone(),
                pricing: side.raw_pricing[j],
                probabilities: d.row(j).to_vec(),
                peak_grade: argmax(d.row(j)),
                nearest_grade,
            }
        })
        .collect();

    Ok(CaseStudyReport {
        grade_centers: gmm.mu.iter().map(|&y| scale.invert(y)).collect(),
        avg_weight_per_grade,
        spending_buckets,
        user_types,
        positioning_rows,
    })
}

impl CaseStudyReport {
    pub fn write_grade_weights_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "grade,center,avg_weight")?;
        for (t, (c, w)) in self.grade_centers.iter().zip(&self.avg_weight_per_grade).enumerate() {
            writeln!(out, "{t},{c},{w}")?;
        }
        Ok(())
    }

    fn write_groups<W: Write>(groups: &[SpendingGroup], grades: usize, mut out: W) -> Result<()> {
        let cols: Vec<String> = (0..grades).map(|t| format!("grade_{t}")).collect();
        writeln!(out, "lower,upper,users,{}", cols.join(","))?;
        for g in groups {
            let upper = g.upper.map(|u| u.to_string()).unwrap_or_default();
            let w: Vec<String> = g.avg_weights.iter().map(f64::to_string).collect();
            writeln!(out, "{},{},{},{}", g.lower, upper, g.users, w.join(","))?;
        }
        Ok(())
    }

    pub fn write_spending_buckets_csv<W: Write>(&self, out: W) -> Result<()> {
        Self::write_groups(&self.spending_buckets, self.grade_centers.len(), out)
    }

    pub fn write_user_types_csv<W: Write>(&self, out: W) -> Result<()> {
        Self::write_groups(&self.user_types, self.grade_centers.len(), out)
    }

    pub fn write_positioning_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cols: Vec<String> = (0..self.grade_centers.len()).map(|t| format!("grade_{t}")).collect();
        writeln!(
            out,
            "target_pricing,business_id,pricing,peak_grade,nearest_grade,{}",
            cols.join(",")
        )?;
        for r in &self.positioning_rows {
            let p: Vec<String> = r.probabilities.iter().map(f64::to_string).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.target_pricing,
                r.business_id,
                r.pricing,
                r.peak_grade,
                r.nearest_grade,
                p.join(",")
            )?;
        }
        Ok(())
    }
}
