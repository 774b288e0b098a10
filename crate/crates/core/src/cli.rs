//! The `earp` command line tool.
//!
//! Data products go to files under `-o`; stdout carries a single JSON line
//! summarizing the run. Every output directory gets a `manifest.json`.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::data::{self, SparseReviews, DEFAULT_MAX_EXPENDITURE};
use crate::error::{Error, Result};
use crate::eval::{self, CaseStudyConfig, EvalReport, ExperimentConfig, Method, SweepConfig};
use crate::gmm::{self, GmmConfig};
use crate::model::{self, TrainConfig, Variant};
use crate::store;
use crate::synth::{self, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "earp", version, about = "Expenditure-aware rating prediction")]
pub struct Cli {
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic review corpus.
    Synth(SynthArgs),
    /// Fit the expenditure mixture and positioning matrix only.
    Gmm(GmmArgs),
    /// Train one model and save it.
    Fit(FitArgs),
    /// Score a reviews file with a saved model.
    Predict(PredictArgs),
    /// Repeated random-split evaluation.
    Eval(EvalArgs),
    /// Expenditure dropout sweep.
    Sweep(SweepArgs),
    /// Case-study tables for a saved EARP-M model.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 1000)]
    pub businesses: usize,
    #[arg(long, default_value_t = 0.005)]
    pub density: f64,
    #[arg(long, default_value = "50,150,300")]
    pub grade_means: String,
    #[arg(long, default_value = "5,15,30")]
    pub grade_sigmas: String,
    #[arg(long, default_value = "0.5,0.35,0.15")]
    pub grade_weights: String,
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 2.0)]
    pub base_rating: f64,
    #[arg(long, default_value_t = 0.0)]
    pub activity_skew: f64,
    #[arg(long, default_value_t = 0.0)]
    pub popularity_skew: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GmmArgs {
    #[arg(long, required = true)]
    pub train: PathBuf,
    #[arg(long, default_value_t = gmm::DEFAULT_GRADES)]
    pub grades: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

/// Hyperparameters shared by every training command.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = gmm::DEFAULT_GRADES)]
    pub grades: usize,
    #[arg(long, default_value_t = 10)]
    pub factors: usize,
    #[arg(long, default_value_t = 0.08)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.005)]
    pub lr0: f64,
    #[arg(long, default_value_t = 0.005)]
    pub lr1: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    /// Upper bound of the uniform initialization (default sqrt(12/k)).
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    fn config(&self) -> std::result::Result<TrainConfig, Usage> {
        let config = TrainConfig {
            k: self.factors,
            grades: self.grades,
            gamma: self.gamma,
            beta: self.beta,
            alpha0: self.lr0,
            alpha1: self.lr1,
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
            init_scale: self.init_scale,
        };
        config.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, required = true)]
    pub model: Variant,
    #[arg(long, required = true)]
    pub train: PathBuf,
    #[command(flatten)]
    pub hyper: TrainArgs,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Saved model directory.
    #[arg(long, required = true)]
    pub model: PathBuf,
    /// Reviews CSV whose (user, business) pairs are scored.
    #[arg(long, required = true)]
    pub input: PathBuf,
    /// Output predictions CSV.
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required = true)]
    pub data: PathBuf,
    /// Comma list of methods: user-mean, item-mean, pmf, earp-e, earp-u, earp-m.
    #[arg(long, default_value = "user-mean,item-mean,pmf,earp-e,earp-u,earp-m")]
    pub variants: String,
    /// Training ratios as a comma list or `start:end:step`.
    #[arg(long, default_value = "0.6,0.7,0.8,0.9")]
    pub ratios: String,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub hyper: TrainArgs,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, required = true)]
    pub data: PathBuf,
    #[arg(long, default_value = "earp-e,earp-u,earp-m")]
    pub variants: String,
    /// Dropout ratios as a comma list or `start:end:step`; a 0 baseline is always added.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub drop_ratios: String,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub hyper: TrainArgs,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, required = true)]
    pub model: PathBuf,
    /// Number of spending buckets; the last one is open-ended.
    #[arg(long, default_value_t = 7)]
    pub spending_buckets: usize,
    #[arg(long, default_value_t = 20.0)]
    pub bucket_width: f64,
    #[arg(long, default_value = "20,70,120")]
    pub user_types: String,
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    #[arg(long, default_value = "20,150,300")]
    pub pricings: String,
    #[arg(short = 'o', long = "out", required = true)]
    pub out: PathBuf,
}

/// A flag value that parsed but makes no sense.
#[derive(Debug)]
pub struct Usage(pub String);

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<Value, Failure>;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_seconds: f64,
}

/// Parses a comma list (`0.6,0.7`) or an inclusive range (`0.1:0.9:0.1`).
pub fn parse_values(spec: &str) -> std::result::Result<Vec<f64>, Usage> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Usage(format!("not a number: {s:?}")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [_] => spec.split(',').map(number).collect(),
        [start, end, step] => {
            let (start, end, step) = (number(start)?, number(end)?, number(step)?);
            if !(step > 0.0) || end < start {
                return Err(Usage(format!("bad range {spec:?}: need start <= end and step > 0")));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            // Round away accumulated binary noise so 0.1:0.9:0.1 prints as 0.3, not 0.30000000000000004.
            Ok((0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(Usage(format!("expected a comma list or start:end:step, got {spec:?}"))),
    }
}

pub fn parse_methods(spec: &str) -> std::result::Result<Vec<Method>, Usage> {
    let methods: Vec<Method> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| Usage(e.to_string())))
        .collect::<std::result::Result<_, _>>()?;
    if methods.is_empty() {
        return Err(Usage("variant list is empty".into()));
    }
    Ok(methods)
}

fn unit_interval(name: &str, values: &[f64], closed_low: bool) -> std::result::Result<(), Usage> {
    for &x in values {
        let ok = if closed_low { (0.0..1.0).contains(&x) } else { x > 0.0 && x < 1.0 };
        if !ok {
            return Err(Usage(format!("{name} value {x} outside the allowed range")));
        }
    }
    if values.is_empty() {
        return Err(Usage(format!("{name} list is empty")));
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::file(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = create_file(path)?;
    f(&mut out)?;
    out.flush().map_err(|e| Error::file(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)?;
        Ok(())
    })
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: Value,
    inputs: &[&Path],
    seed: u64,
    started: Instant,
) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for path in inputs {
        hashes.insert(path.display().to_string(), sha256_file(path)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        inputs: hashes,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

fn load(path: &Path) -> Result<SparseReviews> {
    let (data, summary) =
        data::load_reviews(path, DEFAULT_MAX_EXPENDITURE).map_err(|e| e.context(format!("loading {}", path.display())))?;
    if summary.dropped() > 0 {
        log::warn!("{}: dropped {} of {} rows", path.display(), summary.dropped(), summary.rows_read);
    }
    log::info!(
        "{}: {} reviews, {} users, {} businesses",
        path.display(),
        data.len(),
        data.num_users(),
        data.num_businesses()
    );
    Ok(data)
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let started = Instant::now();
    let config = SynthConfig {
        users: args.users,
        businesses: args.businesses,
        density: args.density,
        grade_means: parse_values(&args.grade_means)?,
        grade_sigmas: parse_values(&args.grade_sigmas)?,
        grade_weights: parse_values(&args.grade_weights)?,
        a: args.a,
        b: args.b,
        noise_sigma: args.noise,
        base_rating: args.base_rating,
        activity_skew: args.activity_skew,
        popularity_skew: args.popularity_skew,
        seed: args.seed,
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    let output = synth::generate(&config)?;
    create_dir(&args.out)?;
    let reviews = args.out.join("reviews.csv");
    write_with(&reviews, |out| output.data.write_csv(out))?;
    write_json(&args.out.join("truth.json"), &output.truth)?;
    write_manifest(
        &args.out,
        "synth",
        serde_json::to_value(&config)?,
        &[],
        args.seed,
        started,
    )?;
    Ok(json!({
        "command": "synth",
        "rows": output.data.len(),
        "users": output.data.num_users(),
        "businesses": output.data.num_businesses(),
        "reviews": reviews,
    }))
}

fn cmd_gmm(args: &GmmArgs) -> CmdResult {
    let started = Instant::now();
    if args.grades == 0 {
        return Err(Usage("--grades must be positive".into()).into());
    }
    let data = load(&args.train)?;
    let observed: Vec<f64> = data.observed_expenditures().collect();
    let scale = data::LogMinMax::fit(&observed)?;
    let scaled: Vec<f64> = observed.iter().map(|&x| scale.apply(x)).collect();
    let config = GmmConfig {
        seed: args.seed,
        ..GmmConfig::default()
    };
    let fit = gmm::fit_gmm_with_trace(&scaled, args.grades, &config)?;
    let pricing = data::business_pricing(&data)?;
    let d = model::business_positioning(&fit.model, &scale, &pricing.raw, &pricing.imputed)?;

    create_dir(&args.out)?;
    write_json(&args.out.join(store::GMM_FILE), &fit.model)?;
    write_json(&args.out.join("scale.json"), &scale)?;
    write_with(&args.out.join("em_trace.csv"), |out| {
        writeln!(out, "iteration,log_likelihood")?;
        for (i, ll) in fit.log_likelihood_trace.iter().enumerate() {
            writeln!(out, "{i},{ll}")?;
        }
        Ok(())
    })?;
    write_with(&args.out.join("positioning.csv"), |out| {
        let cols: Vec<String> = (0..args.grades).map(|t| format!("grade_{t}")).collect();
        writeln!(out, "business_id,pricing,imputed,{}", cols.join(","))?;
        for (j, id) in data.business_ids().iter().enumerate() {
            let row: Vec<String> = d.row(j).iter().map(f64::to_string).collect();
            writeln!(out, "{id},{},{},{}", pricing.raw[j], pricing.imputed[j], row.join(","))?;
        }
        Ok(())
    })?;
    write_manifest(
        &args.out,
        "gmm",
        json!({"grades": args.grades, "tol": config.tol, "max_iters": config.max_iters, "restarts": config.restarts}),
        &[&args.train],
        args.seed,
        started,
    )?;
    Ok(json!({
        "command": "gmm",
        "T": args.grades,
        "iterations": fit.iterations,
        "converged": fit.model.converged,
        "log_likelihood": fit.log_likelihood_trace.last(),
        "mu_currency": fit.model.mu.iter().map(|&m| scale.invert(m)).collect::<Vec<_>>(),
    }))
}

fn cmd_fit(args: &FitArgs) -> CmdResult {
    let started = Instant::now();
    let config = args.hyper.config()?;
    let data = load(&args.train)?;
    let fitted = model::train(&data, args.model, &config).map_err(|e| e.context(format!("fitting {}", args.model)))?;
    store::save_model(&args.out, &fitted, data.user_ids(), data.business_ids())?;
    write_manifest(
        &args.out,
        "fit",
        json!({"model": args.model, "train": config}),
        &[&args.train],
        config.seed,
        started,
    )?;
    Ok(json!({
        "command": "fit",
        "model": args.model,
        "objective": fitted.trace.last(),
        "iterations": fitted.iterations,
        "converged": fitted.converged,
        "out": args.out,
    }))
}

fn cmd_predict(args: &PredictArgs) -> CmdResult {
    let started = Instant::now();
    let saved = store::load_model(&args.model)?;
    let input = load(&args.input)?;
    let user_lookup: BTreeMap<&str, usize> =
        saved.user_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let business_lookup: BTreeMap<&str, usize> =
        saved.business_ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();

    let mut pairs = Vec::new();
    let mut unknown = 0usize;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_with(&args.out, |out| {
        writeln!(out, "user_id,business_id,rating,prediction")?;
        for r in input.entries() {
            let uid = &input.user_ids()[r.user];
            let bid = &input.business_ids()[r.business];
            match (user_lookup.get(uid.as_str()), business_lookup.get(bid.as_str())) {
                (Some(&i), Some(&j)) => {
                    let p = saved.model.predict(i, j)?;
                    pairs.push((p, r.rating));
                    writeln!(out, "{uid},{bid},{},{p}", r.rating)?;
                }
                _ => {
                    unknown += 1;
                    writeln!(out, "{uid},{bid},{},", r.rating)?;
                }
            }
        }
        Ok(())
    })?;
    if unknown > 0 {
        log::warn!("{unknown} rows name users or businesses the model has not seen");
    }
    let (rmse, mae) = if pairs.is_empty() {
        (None, None)
    } else {
        (Some(eval::rmse(&pairs)?), Some(eval::mae(&pairs)?))
    };
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_manifest(
        dir,
        "predict",
        json!({"model": args.model, "input": args.input, "out": args.out}),
        &[&args.input, &args.model.join(store::MODEL_FILE)],
        saved.model.config.seed,
        started,
    )?;
    Ok(json!({
        "command": "predict",
        "scored": pairs.len(),
        "unknown": unknown,
        "rmse": rmse,
        "mae": mae,
    }))
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    create_dir(dir)?;
    write_with(&dir.join("trials.csv"), |out| report.write_trials_csv(out))?;
    write_with(&dir.join("summary.csv"), |out| report.write_summary_csv(out))?;
    write_json(&dir.join("report.json"), report)
}

fn summary_json(report: &EvalReport) -> Value {
    let cells: Vec<Value> = report
        .summary
        .iter()
        .map(|a| {
            let degradation = report
                .aggregate(a.method, a.train_ratio, 0.0)
                .filter(|_| a.drop_ratio > 0.0)
                .map(|base| (a.rmse_mean - base.rmse_mean) / base.rmse_mean);
            json!({
                "method": a.method.name(),
                "train_ratio": a.train_ratio,
                "drop_ratio": a.drop_ratio,
                "rmse": a.rmse_mean,
                "rmse_se": a.rmse_se,
                "mae": a.mae_mean,
                "relative_degradation": degradation,
            })
        })
        .collect();
    Value::Array(cells)
}

fn cmd_eval(args: &EvalArgs, threads: usize) -> CmdResult {
    let started = Instant::now();
    let methods = parse_methods(&args.variants)?;
    let ratios = parse_values(&args.ratios)?;
    unit_interval("--ratios", &ratios, false)?;
    if args.trials == 0 {
        return Err(Usage("--trials must be positive".into()).into());
    }
    let config = ExperimentConfig {
        methods,
        train_ratios: ratios,
        trials: args.trials,
        base_seed: args.hyper.seed,
        train: args.hyper.config()?,
        threads: threads.max(1),
    };
    let data = load(&args.data)?;
    let report = eval::run_experiment(&data, &config)?;
    write_report(&args.out, &report)?;
    write_manifest(
        &args.out,
        "eval",
        serde_json::to_value(&config)?,
        &[&args.data],
        config.base_seed,
        started,
    )?;
    Ok(json!({"command": "eval", "trials": report.rows.len(), "summary": summary_json(&report)}))
}

fn cmd_sweep(args: &SweepArgs, threads: usize) -> CmdResult {
    let started = Instant::now();
    let methods = parse_methods(&args.variants)?;
    let mut drops = parse_values(&args.drop_ratios)?;
    unit_interval("--drop-ratios", &drops, true)?;
    if !drops.contains(&0.0) {
        drops.insert(0, 0.0);
    }
    unit_interval("--ratio", &[args.ratio], false)?;
    if args.trials == 0 {
        return Err(Usage("--trials must be positive".into()).into());
    }
    let config = SweepConfig {
        methods,
        drop_ratios: drops,
        train_ratio: args.ratio,
        trials: args.trials,
        base_seed: args.hyper.seed,
        train: args.hyper.config()?,
        threads: threads.max(1),
    };
    let data = load(&args.data)?;
    let report = eval::run_dropout_sweep(&data, &config)?;
    write_report(&args.out, &report)?;
    write_manifest(
        &args.out,
        "sweep",
        serde_json::to_value(&config)?,
        &[&args.data],
        config.base_seed,
        started,
    )?;
    Ok(json!({"command": "sweep", "trials": report.rows.len(), "summary": summary_json(&report)}))
}

fn cmd_inspect(args: &InspectArgs) -> CmdResult {
    let started = Instant::now();
    if args.spending_buckets == 0 || !(args.bucket_width > 0.0) || !(args.window >= 0.0) {
        return Err(Usage("spending buckets, bucket width and window must be positive".into()).into());
    }
    let config = CaseStudyConfig {
        bucket_width: args.bucket_width,
        bucket_count: args.spending_buckets,
        user_types: parse_values(&args.user_types)?,
        window: args.window,
        pricings: parse_values(&args.pricings)?,
    };
    let saved = store::load_model(&args.model)?;
    if saved.model.variant != Variant::EarpM {
        return Err(Error::InvalidArgument(format!(
            "inspect needs an earp-m model, {} holds a {} model",
            args.model.display(),
            saved.model.variant
        ))
        .into());
    }
    let report = eval::case_study(&saved.model, &saved.business_ids, &config)?;
    create_dir(&args.out)?;
    write_with(&args.out.join("grade_weights.csv"), |out| report.write_grade_weights_csv(out))?;
    write_with(&args.out.join("spending_buckets.csv"), |out| report.write_spending_buckets_csv(out))?;
    write_with(&args.out.join("user_types.csv"), |out| report.write_user_types_csv(out))?;
    write_with(&args.out.join("positioning.csv"), |out| report.write_positioning_csv(out))?;
    write_json(&args.out.join("case_study.json"), &report)?;
    write_manifest(
        &args.out,
        "inspect",
        serde_json::to_value(&config)?,
        &[&args.model.join(store::MODEL_FILE)],
        saved.model.config.seed,
        started,
    )?;
    Ok(json!({
        "command": "inspect",
        "grades": report.grade_centers.len(),
        "spending_buckets": report.spending_buckets.len(),
        "positioning_rows": report.positioning_rows.len(),
    }))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("EARP_LOG", "warn");
    // A second call (tests running several commands in one process) is harmless.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let threads = cli.threads;
    if threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return 2;
    }
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Gmm(a) => cmd_gmm(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a, threads),
        Command::Sweep(a) => cmd_sweep(a, threads),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            if let Error::Divergence { trace_tail, .. } = e.root() {
                eprintln!("objective trace tail: {trace_tail:?}");
            }
            1
        }
    }
}
