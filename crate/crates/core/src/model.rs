//! Low-rank factorization with an expenditure correction term.
//!
//! All four variants share the prediction `P_i . Q_j + e(i, j)` and differ
//! only in the expenditure term `e`:
//!
//! | variant | term            | learned weights        |
//! |---------|-----------------|------------------------|
//! | PMF     | `0`             | none                   |
//! | EARP-E  | `w * v_j`       | one shared scalar      |
//! | EARP-U  | `w_i * v_j`     | one scalar per user    |
//! | EARP-M  | `W_i . D_j`     | `m x T` sentiment matrix |
//!
//! `v` is the normalized business pricing and `D` the grade positioning
//! matrix derived from the expenditure mixture. The loss is
//! `1/2 sum (R_ij - pred_ij)^2 + gamma/2 (|P|^2 + |Q|^2) + beta/2 |W|^2`
//! over observed cells, whose gradient is `sum (pred - R) Q_j + gamma P_i`
//! and so on. The shared scalar of EARP-E is not regularized.

use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, LogMinMax, SparseReviews, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::gmm::{self, GmmConfig, GmmModel, PositioningMatrix};
use crate::matrix::{axpy, dot, Matrix};

/// Step-size halvings tried before an iteration gives up.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Pmf,
    EarpE,
    EarpU,
    EarpM,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pmf, Variant::EarpE, Variant::EarpU, Variant::EarpM];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pmf => "pmf",
            Variant::EarpE => "earp-e",
            Variant::EarpU => "earp-u",
            Variant::EarpM => "earp-m",
        }
    }

    pub fn uses_expenditure(self) -> bool {
        self != Variant::Pmf
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pmf" => Ok(Variant::Pmf),
            "earp-e" => Ok(Variant::EarpE),
            "earp-u" => Ok(Variant::EarpU),
            "earp-m" => Ok(Variant::EarpM),
            other => Err(Error::InvalidArgument(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    /// Number of expenditure grades `T`.
    pub grades: usize,
    pub gamma: f64,
    pub beta: f64,
    /// Step size for `P` and `Q`.
    pub alpha0: f64,
    /// Step size for the expenditure weights.
    pub alpha1: f64,
    /// L1 parameter-change tolerance.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Upper bound of the uniform initialization; `None` picks `sqrt(12 / k)`,
    /// which puts the expected initial `P_i . Q_j` at 3.
    pub init_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 10,
            grades: gmm::DEFAULT_GRADES,
            gamma: 0.08,
            beta: 0.1,
            alpha0: 0.005,
            alpha1: 0.005,
            tol: 1e-4,
            max_iters: 2000,
            seed: 0,
            init_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_init_scale(&self) -> f64 {
        self.init_scale.unwrap_or_else(|| (12.0 / self.k.max(1) as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("tol", self.tol),
            ("init_scale", self.effective_init_scale()),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [("gamma", self.gamma), ("beta", self.beta)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {value}")));
            }
        }
        if self.k == 0 || self.grades == 0 {
            return Err(Error::InvalidArgument("k and the number of grades must be positive".into()));
        }
        Ok(())
    }
}

/// Learned weights of the expenditure term.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpenditureWeights {
    None,
    Shared(f64),
    PerUser(Vec<f64>),
    PerGrade(Matrix),
}

impl ExpenditureWeights {
    fn zeros_like(&self) -> Self {
        match self {
            ExpenditureWeights::None => ExpenditureWeights::None,
            ExpenditureWeights::Shared(_) => ExpenditureWeights::Shared(0.0),
            ExpenditureWeights::PerUser(w) => ExpenditureWeights::PerUser(vec![0.0; w.len()]),
            ExpenditureWeights::PerGrade(w) => ExpenditureWeights::PerGrade(Matrix::zeros(w.rows(), w.cols())),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            ExpenditureWeights::None => &[],
            ExpenditureWeights::Shared(w) => std::slice::from_ref(w),
            ExpenditureWeights::PerUser(w) => w,
            ExpenditureWeights::PerGrade(w) => w.as_slice(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            ExpenditureWeights::None => &mut [],
            ExpenditureWeights::Shared(w) => std::slice::from_mut(w),
            ExpenditureWeights::PerUser(w) => w,
            ExpenditureWeights::PerGrade(w) => w.as_mut_slice(),
        }
    }
}

/// Business-level expenditure statistics the expenditure term reads.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    /// Normalized pricing `v`, one entry per business.
    pub v: Vec<f64>,
    pub positioning: Option<PositioningMatrix>,
    pub gmm: Option<GmmModel>,
    /// Map from raw expenditures to the scale the mixture lives on.
    pub expenditure_scale: Option<LogMinMax>,
    pub raw_pricing: Vec<f64>,
    pub pricing_imputed: Vec<bool>,
    pub spending: Vec<f64>,
    pub spending_imputed: Vec<bool>,
}

impl SideInfo {
    pub fn new(v: Vec<f64>, positioning: Option<PositioningMatrix>) -> Self {
        SideInfo {
            v,
            positioning,
            gmm: None,
            expenditure_scale: None,
            raw_pricing: Vec::new(),
            pricing_imputed: Vec::new(),
            spending: Vec::new(),
            spending_imputed: Vec::new(),
        }
    }
}

/// Pricing, normalization, mixture and positioning for one training set.
///
/// Returns `None` for PMF, which reads no expenditure information. The
/// mixture is fitted on every observed expenditure mapped through a
/// log+min-max scale spanning the observed range; business pricings are
/// mapped through the same scale before the positioning matrix is evaluated.
pub fn prepare_side_info(train: &SparseReviews, variant: Variant, config: &TrainConfig) -> Result<Option<SideInfo>> {
    if !variant.uses_expenditure() {
        return Ok(None);
    }
    let pricing = data::business_pricing(train)?;
    let spending = data::user_spending(train)?;
    let mut side = SideInfo {
        v: pricing.normalized,
        positioning: None,
        gmm: None,
        expenditure_scale: None,
        raw_pricing: pricing.raw,
        pricing_imputed: pricing.imputed,
        spending: spending.values,
        spending_imputed: spending.imputed,
    };
    if variant == Variant::EarpM {
        let observed: Vec<f64> = train.observed_expenditures().collect();
        let scale = LogMinMax::fit(&observed)?;
        let scaled: Vec<f64> = observed.iter().map(|&x| scale.apply(x)).collect();
        let gmm_config = GmmConfig {
            seed: config.seed,
            ..GmmConfig::default()
        };
        let mixture = gmm::fit_gmm(&scaled, config.grades, &gmm_config)?;
        side.positioning = Some(business_positioning(&mixture, &scale, &side.raw_pricing, &side.pricing_imputed)?);
        side.gmm = Some(mixture);
        side.expenditure_scale = Some(scale);
    }
    Ok(Some(side))
}

/// Positioning of each business at its pricing on the mixture's scale.
/// Businesses without any observed expenditure get the mixture weights.
pub fn business_positioning(
    mixture: &GmmModel,
    scale: &LogMinMax,
    raw_pricing: &[f64],
    imputed: &[bool],
) -> Result<PositioningMatrix> {
    let at: Vec<f64> = raw_pricing.iter().map(|&x| scale.apply(x)).collect();
    let d = gmm::positioning_matrix(mixture, &at)?;
    if !imputed.iter().any(|&x| x) {
        return Ok(d);
    }
    let rows = (0..d.num_rows())
        .map(|j| if imputed[j] { mixture.phi.clone() } else { d.row(j).to_vec() })
        .collect();
    PositioningMatrix::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub p: Matrix,
    pub q: Matrix,
    pub weights: ExpenditureWeights,
}

impl Gradients {
    /// `P`, then `Q`, then the expenditure weights, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.p.as_slice().to_vec();
        out.extend_from_slice(self.q.as_slice());
        out.extend_from_slice(self.weights.as_slice());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarpModel {
    pub variant: Variant,
    pub p: Matrix,
    pub q: Matrix,
    pub weights: ExpenditureWeights,
    pub side: Option<SideInfo>,
    pub config: TrainConfig,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl EarpModel {
    /// Assembles a model from explicit parameters, checking shapes.
    pub fn from_parts(
        variant: Variant,
        p: Matrix,
        q: Matrix,
        weights: ExpenditureWeights,
        side: Option<SideInfo>,
        config: TrainConfig,
    ) -> Result<Self> {
        let model = EarpModel {
            variant,
            p,
            q,
            weights,
            side,
            config,
            trace: Vec::new(),
            converged: false,
            iterations: 0,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn num_users(&self) -> usize {
        self.p.rows()
    }

    pub fn num_businesses(&self) -> usize {
        self.q.rows()
    }

    pub fn k(&self) -> usize {
        self.p.cols()
    }

    pub fn positioning(&self) -> Option<&PositioningMatrix> {
        self.side.as_ref().and_then(|s| s.positioning.as_ref())
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (m, k) = self.p.shape();
        let n = self.q.rows();
        if self.q.cols() != k {
            return Err(Error::ShapeMismatch(format!("P has {k} columns, Q has {}", self.q.cols())));
        }
        let side = self.side.as_ref();
        let need_v = |side: Option<&SideInfo>| -> Result<()> {
            match side {
                Some(s) if s.v.len() == n => Ok(()),
                Some(s) => Err(Error::ShapeMismatch(format!("pricing has {} entries, expected {n}", s.v.len()))),
                None => Err(Error::ShapeMismatch(format!("{} needs business pricing", self.variant))),
            }
        };
        match (&self.weights, self.variant) {
            (ExpenditureWeights::None, Variant::Pmf) => Ok(()),
            (ExpenditureWeights::Shared(_), Variant::EarpE) => need_v(side),
            (ExpenditureWeights::PerUser(w), Variant::EarpU) => {
                need_v(side)?;
                if w.len() != m {
                    return Err(Error::ShapeMismatch(format!("w has {} entries, expected {m}", w.len())));
                }
                Ok(())
            }
            (ExpenditureWeights::PerGrade(w), Variant::EarpM) => {
                let d = side
                    .and_then(|s| s.positioning.as_ref())
                    .ok_or_else(|| Error::ShapeMismatch("earp-m needs a positioning matrix".into()))?;
                if w.rows() != m || d.num_rows() != n || w.cols() != d.num_grades() {
                    return Err(Error::ShapeMismatch(format!(
                        "W is {}x{}, D is {}x{}, expected {m}xT and {n}xT",
                        w.rows(),
                        w.cols(),
                        d.num_rows(),
                        d.num_grades()
                    )));
                }
                Ok(())
            }
            (_, variant) => Err(Error::ShapeMismatch(format!("weights do not match variant {variant}"))),
        }
    }

    fn check_data(&self, data: &SparseReviews) -> Result<()> {
        if data.num_users() != self.num_users() || data.num_businesses() != self.num_businesses() {
            return Err(Error::ShapeMismatch(format!(
                "model is {}x{}, data is {}x{}",
                self.num_users(),
                self.num_businesses(),
                data.num_users(),
                data.num_businesses()
            )));
        }
        Ok(())
    }

    /// Expenditure term `e(i, j)` of the prediction.
    #[inline]
    pub fn expenditure_term(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            ExpenditureWeights::None => 0.0,
            ExpenditureWeights::Shared(w) => w * self.side_v()[j],
            ExpenditureWeights::PerUser(w) => w[i] * self.side_v()[j],
            ExpenditureWeights::PerGrade(w) => {
                let d = self.positioning().expect("shape-checked");
                dot(w.row(i), d.row(j))
            }
        }
    }

    #[inline]
    fn side_v(&self) -> &[f64] {
        &self.side.as_ref().expect("shape-checked").v
    }

    #[inline]
    fn raw_unchecked(&self, i: usize, j: usize) -> f64 {
        dot(self.p.row(i), self.q.row(j)) + self.expenditure_term(i, j)
    }

    /// Unclamped `P_i . Q_j + e(i, j)`.
    pub fn predict_raw(&self, user: usize, business: usize) -> Result<f64> {
        if user >= self.num_users() || business >= self.num_businesses() {
            return Err(Error::IndexOutOfRange(format!(
                "({user}, {business}) outside {}x{}",
                self.num_users(),
                self.num_businesses()
            )));
        }
        Ok(self.raw_unchecked(user, business))
    }

    /// Prediction clamped to the rating scale.
    pub fn predict(&self, user: usize, business: usize) -> Result<f64> {
        self.predict_raw(user, business).map(clamp_rating)
    }

    fn regularizer(&self) -> f64 {
        let cfg = &self.config;
        let mut reg = 0.5 * cfg.gamma * (self.p.squared_norm() + self.q.squared_norm());
        match &self.weights {
            ExpenditureWeights::PerUser(w) => reg += 0.5 * cfg.beta * dot(w, w),
            ExpenditureWeights::PerGrade(w) => reg += 0.5 * cfg.beta * w.squared_norm(),
            _ => {}
        }
        reg
    }

    /// Residuals `pred - R` for every entry, plus the objective value.
    fn residuals(&self, data: &SparseReviews) -> (Vec<f64>, f64) {
        let mut loss = 0.0;
        let res: Vec<f64> = data
            .entries()
            .iter()
            .map(|e| {
                let r = self.raw_unchecked(e.user, e.business) - e.rating;
                loss += r * r;
                r
            })
            .collect();
        (res, 0.5 * loss + self.regularizer())
    }

    pub fn objective(&self, data: &SparseReviews) -> Result<f64> {
        self.check_shapes()?;
        self.check_data(data)?;
        Ok(self.residuals(data).1)
    }

    pub fn gradients(&self, data: &SparseReviews) -> Result<Gradients> {
        self.check_shapes()?;
        self.check_data(data)?;
        let (res, _) = self.residuals(data);
        Ok(self.gradients_from_residuals(data, &res))
    }

    fn gradients_from_residuals(&self, data: &SparseReviews, res: &[f64]) -> Gradients {
        let gamma = self.config.gamma;
        let beta = self.config.beta;
        let mut gp = Matrix::zeros(self.p.rows(), self.p.cols());
        let mut gq = Matrix::zeros(self.q.rows(), self.q.cols());
        let mut gw = self.weights.zeros_like();

        for (e, &r) in data.entries().iter().zip(res) {
            axpy(r, self.q.row(e.business), gp.row_mut(e.user));
            axpy(r, self.p.row(e.user), gq.row_mut(e.business));
            match &mut gw {
                ExpenditureWeights::None => {}
                ExpenditureWeights::Shared(g) => *g += r * self.side_v()[e.business],
                ExpenditureWeights::PerUser(g) => g[e.user] += r * self.side_v()[e.business],
                ExpenditureWeights::PerGrade(g) => {
                    let d = self.positioning().expect("shape-checked");
                    axpy(r, d.row(e.business), g.row_mut(e.user));
                }
            }
        }

        axpy(gamma, self.p.as_slice(), gp.as_mut_slice());
        axpy(gamma, self.q.as_slice(), gq.as_mut_slice());
        match (&mut gw, &self.weights) {
            (ExpenditureWeights::PerUser(g), ExpenditureWeights::PerUser(w)) => axpy(beta, w, g),
            (ExpenditureWeights::PerGrade(g), ExpenditureWeights::PerGrade(w)) => {
                axpy(beta, w.as_slice(), g.as_mut_slice())
            }
            _ => {}
        }
        Gradients { p: gp, q: gq, weights: gw }
    }

    /// `P`, then `Q`, then the expenditure weights, row-major.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.p.as_slice().to_vec();
        out.extend_from_slice(self.q.as_slice());
        out.extend_from_slice(self.weights.as_slice());
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let np = self.p.as_slice().len();
        let nq = self.q.as_slice().len();
        let nw = self.weights.as_slice().len();
        if values.len() != np + nq + nw {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                np + nq + nw,
                values.len()
            )));
        }
        self.p.as_mut_slice().copy_from_slice(&values[..np]);
        self.q.as_mut_slice().copy_from_slice(&values[np..np + nq]);
        self.weights.as_mut_slice().copy_from_slice(&values[np + nq..]);
        Ok(())
    }

    /// Moves against `grads` and returns the L1 size of the move.
    fn step(&mut self, grads: &Gradients, factor_step: f64, weight_step: f64) -> f64 {
        let mut change = 0.0;
        let mut apply = |params: &mut [f64], g: &[f64], step: f64| {
            for (x, gx) in params.iter_mut().zip(g) {
                let old = *x;
                *x -= step * gx;
                change += (*x - old).abs();
            }
        };
        apply(self.p.as_mut_slice(), grads.p.as_slice(), factor_step);
        apply(self.q.as_mut_slice(), grads.q.as_slice(), factor_step);
        apply(self.weights.as_mut_slice(), grads.weights.as_slice(), weight_step);
        change
    }
}

pub fn clamp_rating(x: f64) -> f64 {
    x.clamp(MIN_RATING, MAX_RATING)
}

/// Positive uniform initialization in `(0, scale]`.
pub fn initialize(
    variant: Variant,
    num_users: usize,
    num_businesses: usize,
    side: Option<SideInfo>,
    config: &TrainConfig,
) -> Result<EarpModel> {
    config.validate()?;
    let scale = config.effective_init_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = || scale * (1.0 - rng.random::<f64>());
    let p = Matrix::from_fn(num_users, config.k, |_, _| draw());
    let q = Matrix::from_fn(num_businesses, config.k, |_, _| draw());
    let weights = match variant {
        Variant::Pmf => ExpenditureWeights::None,
        Variant::EarpE => ExpenditureWeights::Shared(draw()),
        Variant::EarpU => ExpenditureWeights::PerUser((0..num_users).map(|_| draw()).collect()),
        Variant::EarpM => {
            let grades = side
                .as_ref()
                .and_then(|s| s.positioning.as_ref())
                .map(PositioningMatrix::num_grades)
                .ok_or_else(|| Error::ShapeMismatch("earp-m needs a positioning matrix".into()))?;
            ExpenditureWeights::PerGrade(Matrix::from_fn(num_users, grades, |_, _| draw()))
        }
    };
    EarpModel::from_parts(variant, p, q, weights, side, config.clone())
}

/// Computes side information from `train` and fits the variant.
pub fn train(train: &SparseReviews, variant: Variant, config: &TrainConfig) -> Result<EarpModel> {
    let side = prepare_side_info(train, variant, config)?;
    fit(train, variant, side, config)
}

/// Full-batch gradient descent from a positive random start.
///
/// Each iteration tries the configured steps and halves both until the
/// objective does not increase. Training stops when the L1 size of the
/// accepted move falls below `tol`, when no step within
/// [`MAX_HALVINGS`] halvings improves the objective, or at `max_iters`.
pub fn fit(train: &SparseReviews, variant: Variant, side: Option<SideInfo>, config: &TrainConfig) -> Result<EarpModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = initialize(variant, train.num_users(), train.num_businesses(), side, config)?;
    let (mut res, mut obj) = model.residuals(train);
    if !obj.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            trace_tail: vec![obj],
        });
    }
    let mut trace = vec![obj];

    for iteration in 1..=config.max_iters {
        let grads = model.gradients_from_residuals(train, &res);
        let mut scale = 1.0;
        let mut accepted = None;
        let mut last_obj = f64::NAN;
        for _ in 0..=MAX_HALVINGS {
            let mut candidate = model.clone();
            let change = candidate.step(&grads, scale * config.alpha0, scale * config.alpha1);
            let (cand_res, cand_obj) = candidate.residuals(train);
            last_obj = cand_obj;
            if cand_obj.is_finite() && cand_obj <= obj {
                accepted = Some((candidate, cand_res, cand_obj, change));
                break;
            }
            scale *= 0.5;
        }

        let Some((candidate, cand_res, cand_obj, change)) = accepted else {
            if !last_obj.is_finite() {
                let start = trace.len().saturating_sub(5);
                return Err(Error::Divergence {
                    iteration,
                    trace_tail: trace[start..].to_vec(),
                });
            }
            debug!("{variant}: no descent step at iteration {iteration}, stopping");
            model.converged = true;
            model.iterations = iteration - 1;
            break;
        };

        model = candidate;
        res = cand_res;
        obj = cand_obj;
        trace.push(obj);
        model.iterations = iteration;
        if change < config.tol {
            model.converged = true;
            break;
        }
    }

    debug!(
        "{variant}: {} iterations, objective {:.6}, converged {}",
        model.iterations, obj, model.converged
    );
    model.trace = trace;
    Ok(model)
}

/// Anything that scores a (user, business) pair on the rating scale.
pub trait Predictor {
    fn predict(&self, user: usize, business: usize) -> Result<f64>;
}

impl Predictor for EarpModel {
    fn predict(&self, user: usize, business: usize) -> Result<f64> {
        EarpModel::predict(self, user, business)
    }
}

/// Mean train rating of a user or of a business, falling back to the global mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanBaseline {
    by_user: bool,
    means: Vec<Option<f64>>,
    global: f64,
}

impl MeanBaseline {
    pub fn user_mean(train: &SparseReviews) -> Result<Self> {
        Self::build(train, true)
    }

    pub fn item_mean(train: &SparseReviews) -> Result<Self> {
        Self::build(train, false)
    }

    fn build(train: &SparseReviews, by_user: bool) -> Result<Self> {
        let global = train.mean_rating().ok_or(Error::EmptyDataset)?;
        let len = if by_user { train.num_users() } else { train.num_businesses() };
        let mut sums = vec![0.0; len];
        let mut counts = vec![0usize; len];
        for e in train.entries() {
            let key = if by_user { e.user } else { e.business };
            sums[key] += e.rating;
            counts[key] += 1;
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(MeanBaseline { by_user, means, global })
    }

    pub fn global_mean(&self) -> f64 {
        self.global
    }
}

impl Predictor for MeanBaseline {
    fn predict(&self, user: usize, business: usize) -> Result<f64> {
        let key = if self.by_user { user } else { business };
        Ok(self.means.get(key).copied().flatten().unwrap_or(self.global))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ReviewRecord, Review};

    fn cfg(gamma: f64, beta: f64) -> TrainConfig {
        TrainConfig {
            gamma,
            beta,
            ..TrainConfig::default()
        }
    }

    fn records(rows: &[(&str, &str, f64, Option<f64>)]) -> SparseReviews {
        SparseReviews::from_records(rows.iter().map(|&(u, b, r, x)| ReviewRecord {
            user_id: u.into(),
            business_id: b.into(),
            rating: r,
            expenditure: x,
        }))
        .0
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("lloRMA".parse::<Variant>().is_err());
    }

    #[test]
    fn zero_model_objective() {
        let data = records(&[("a", "x", 4.0, Some(10.0)), ("a", "y", 2.0, None), ("b", "y", 3.0, Some(5.0))]);
        let side = SideInfo::new(vec![0.3, 0.8], None);
        let model = EarpModel::from_parts(
            Variant::EarpE,
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            ExpenditureWeights::Shared(0.0),
            Some(side),
            cfg(0.0, 0.0),
        )
        .unwrap();
        assert_eq!(model.objective(&data).unwrap(), 0.5 * (16.0 + 4.0 + 9.0));
    }

    #[test]
    fn perfect_fit_has_zero_objective_and_gradient() {
        let d = PositioningMatrix::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let p = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let q = Matrix::from_vec(2, 1, vec![2.0, 1.0]).unwrap();
        let w = Matrix::from_vec(2, 2, vec![0.2, 0.4, 1.0, 0.0]).unwrap();
        let mut model = EarpModel::from_parts(
            Variant::EarpM,
            p,
            q,
            ExpenditureWeights::PerGrade(w),
            Some(SideInfo::new(vec![0.0, 1.0], Some(d))),
            cfg(0.0, 0.0),
        )
        .unwrap();
        let entries: Vec<Review> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(i, j)| Review {
                user: i,
                business: j,
                rating: model.predict_raw(i, j).unwrap(),
                expenditure: None,
            })
            .collect();
        let data = SparseReviews::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into()], entries).unwrap();
        assert_eq!(model.objective(&data).unwrap(), 0.0);
        let g = model.gradients(&data).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));

        model.config.gamma = 0.3;
        let g = model.gradients(&data).unwrap();
        let want: Vec<f64> = model.p.as_slice().iter().map(|x| 0.3 * x).collect();
        assert_eq!(g.p.as_slice(), want.as_slice());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let data = records(&[("a", "x", 4.0, Some(10.0))]);
        let model = EarpModel::from_parts(
            Variant::Pmf,
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 1),
            ExpenditureWeights::None,
            None,
            cfg(0.0, 0.0),
        )
        .unwrap();
        assert!(matches!(model.objective(&data), Err(Error::ShapeMismatch(_))));
        assert!(EarpModel::from_parts(
            Variant::EarpU,
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 1),
            ExpenditureWeights::PerUser(vec![0.0; 3]),
            Some(SideInfo::new(vec![0.5], None)),
            cfg(0.0, 0.0),
        )
        .is_err());
    }

    #[test]
    fn prediction_examples() {
        let p = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let q = Matrix::from_vec(1, 2, vec![3.0, 9.0]).unwrap();
        let model = EarpModel::from_parts(Variant::Pmf, p, q, ExpenditureWeights::None, None, cfg(0.0, 0.0)).unwrap();
        assert_eq!(model.predict(0, 0).unwrap(), 3.0);
        assert!(matches!(model.predict(1, 0), Err(Error::IndexOutOfRange(_))));

        let p = Matrix::from_vec(1, 1, vec![1.9]).unwrap();
        let q = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let model = EarpModel::from_parts(Variant::Pmf, p, q, ExpenditureWeights::None, None, cfg(0.0, 0.0)).unwrap();
        assert!((model.predict_raw(0, 0).unwrap() - 5.7).abs() < 1e-12);
        assert_eq!(model.predict(0, 0).unwrap(), 5.0);

        let d = PositioningMatrix::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        let p = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let q = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let w = Matrix::from_vec(1, 2, vec![0.2, 0.1]).unwrap();
        let model = EarpModel::from_parts(
            Variant::EarpM,
            p,
            q,
            ExpenditureWeights::PerGrade(w),
            Some(SideInfo::new(vec![0.5], Some(d))),
            cfg(0.0, 0.0),
        )
        .unwrap();
        assert!((model.predict(0, 0).unwrap() - 3.15).abs() < 1e-12);
    }

    #[test]
    fn scalar_fit_converges() {
        let data = records(&[("a", "x", 4.0, None)]);
        let config = TrainConfig {
            k: 1,
            gamma: 0.0,
            alpha0: 0.05,
            tol: 1e-10,
            max_iters: 20_000,
            ..TrainConfig::default()
        };
        let model = fit(&data, Variant::Pmf, None, &config).unwrap();
        assert!((model.predict_raw(0, 0).unwrap() - 4.0).abs() < 1e-3);
        assert!(model.converged);
    }

    #[test]
    fn trace_is_non_increasing() {
        let data = records(&[
            ("a", "x", 4.0, Some(10.0)),
            ("a", "y", 2.0, Some(80.0)),
            ("b", "y", 5.0, Some(120.0)),
            ("c", "x", 1.0, None),
            ("c", "z", 3.0, Some(300.0)),
        ]);
        for variant in Variant::ALL {
            let config = TrainConfig {
                k: 2,
                grades: 2,
                alpha0: 0.5,
                alpha1: 0.5,
                max_iters: 300,
                ..TrainConfig::default()
            };
            let model = train(&data, variant, &config).unwrap();
            for w in model.trace.windows(2) {
                assert!(w[1] <= w[0], "{variant}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = records(&[("a", "x", 4.0, Some(10.0)), ("b", "y", 2.0, Some(80.0)), ("b", "x", 3.0, Some(40.0))]);
        let config = TrainConfig {
            k: 3,
            grades: 2,
            max_iters: 50,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&data, Variant::EarpM, &config).unwrap();
        let b = train(&data, Variant::EarpM, &config).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = train(&data, Variant::EarpM, &TrainConfig { seed: 10, ..config }).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn initialization_is_positive_and_bounded() {
        let side = SideInfo::new(vec![0.1, 0.9, 0.5], None);
        let config = TrainConfig { k: 4, init_scale: Some(0.2), ..TrainConfig::default() };
        let model = initialize(Variant::EarpU, 5, 3, Some(side), &config).unwrap();
        assert!(model.flat_params().iter().all(|&x| x > 0.0 && x <= 0.2));
    }

    #[test]
    fn earp_variants_need_expenditures() {
        let data = records(&[("a", "x", 4.0, None)]);
        assert!(matches!(
            train(&data, Variant::EarpE, &TrainConfig::default()),
            Err(Error::NoExpenditures)
        ));
        assert!(train(&data, Variant::Pmf, &TrainConfig { max_iters: 5, ..TrainConfig::default() }).is_ok());
    }

    #[test]
    fn mean_baselines() {
        let data = records(&[("a", "x", 3.0, None), ("a", "y", 5.0, None), ("b", "x", 2.0, None), ("c", "z", 1.0, None)]);
        let users = MeanBaseline::user_mean(&data).unwrap();
        assert_eq!(users.predict(0, 0).unwrap(), 4.0);
        assert_eq!(users.predict(0, 2).unwrap(), 4.0);
        assert_eq!(users.predict(99, 0).unwrap(), 11.0 / 4.0);
        let items = MeanBaseline::item_mean(&data).unwrap();
        assert_eq!(items.predict(2, 0).unwrap(), 2.5);
        assert_eq!(items.predict(0, 50).unwrap(), 11.0 / 4.0);

        // Unseen user in a fixture whose global mean is 3.78.
        let entries: Vec<Review> = (0..50)
            .map(|b| Review { user: 0, business: b, rating: if b < 39 { 4.0 } else { 3.0 }, expenditure: None })
            .collect();
        let users_ids = vec!["u0".to_string(), "u1".to_string()];
        let biz: Vec<String> = (0..50).map(|b| format!("b{b}")).collect();
        let fixture = SparseReviews::new(users_ids, biz, entries).unwrap();
        let baseline = MeanBaseline::user_mean(&fixture).unwrap();
        assert!((baseline.predict(1, 0).unwrap() - 3.78).abs() < 1e-12);

        let empty = data.with_entries(Vec::new()).unwrap();
        assert!(MeanBaseline::item_mean(&empty).is_err());
    }

    #[test]
    fn businesses_without_expenditure_sit_at_the_prior() {
        let data = records(&[
            ("a", "x", 4.0, Some(20.0)),
            ("a", "y", 2.0, Some(300.0)),
            ("b", "x", 5.0, Some(25.0)),
            ("b", "z", 3.0, None),
            ("c", "y", 1.0, Some(280.0)),
        ]);
        let config = TrainConfig { grades: 2, ..TrainConfig::default() };
        let side = prepare_side_info(&data, Variant::EarpM, &config).unwrap().unwrap();
        let d = side.positioning.as_ref().unwrap();
        let phi = &side.gmm.as_ref().unwrap().phi;
        assert_eq!(side.pricing_imputed, vec![false, false, true]);
        assert_eq!(d.row(2), phi.as_slice());
        assert!(d.row(0).iter().any(|&p| p > 0.99));
    }
}
