//! Synthetic review corpora with a known expenditure–rating relationship.
//!
//! Businesses and users are assigned to expenditure grades; a business has
//! a pricing and a user a habitual spending level drawn around its grade
//! centre. Each observed cell's expenditure mixes the two, and its rating
//! rises with the (log-normalized) expenditure and with how far the
//! expenditure exceeds the user's own spending level.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{self, Review, SparseReviews, DEFAULT_MAX_EXPENDITURE, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};

/// Share of a cell's expected expenditure set by the business pricing; the
/// rest comes from the user's spending level.
pub const PRICING_BLEND: f64 = 0.95;

const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub businesses: usize,
    /// Probability that a (user, business) cell is observed.
    pub density: f64,
    pub grade_means: Vec<f64>,
    pub grade_sigmas: Vec<f64>,
    pub grade_weights: Vec<f64>,
    /// Rating slope on log-normalized expenditure.
    pub a: f64,
    /// Rating slope on the bounded relative excess over the user's spending.
    pub b: f64,
    pub noise_sigma: f64,
    pub base_rating: f64,
    /// Log-normal sigma of per-user activity; 0 gives every user the same
    /// expected number of reviews.
    pub activity_skew: f64,
    /// Log-normal sigma of business popularity; 0 makes every business
    /// equally likely to be reviewed.
    #[serde(default)]
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 2000,
            businesses: 1000,
            density: 0.005,
            grade_means: vec![50.0, 150.0, 300.0],
            grade_sigmas: vec![5.0, 15.0, 30.0],
            grade_weights: vec![0.5, 0.35, 0.15],
            a: 2.0,
            b: 1.0,
            noise_sigma: 0.5,
            base_rating: 2.0,
            activity_skew: 0.0,
            popularity_skew: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        if self.density * (self.users as f64) * (self.businesses as f64) < 1.0 {
            return bad(format!(
                "infeasible configuration: density {} over {}x{} cells expects fewer than one review",
                self.density, self.users, self.businesses
            ));
        }
        let t = self.grade_means.len();
        if t == 0 || self.grade_sigmas.len() != t || self.grade_weights.len() != t {
            return bad("grade means, sigmas and weights must be non-empty and equally long".into());
        }
        if self.grade_means.iter().any(|&m| !(m > 0.0 && m <= DEFAULT_MAX_EXPENDITURE)) {
            return bad("grade means must lie in (0, 1000]".into());
        }
        if self.grade_sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("grade sigmas must be positive".into());
        }
        let total: f64 = self.grade_weights.iter().sum();
        if self.grade_weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad("grade weights must form a probability vector".into());
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return bad("slopes a and b must be non-negative".into());
        }
        if !(self.activity_skew >= 0.0 && self.activity_skew.is_finite()) {
            return bad("activity skew must be non-negative".into());
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return bad("popularity skew must be non-negative".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !self.base_rating.is_finite() {
            return bad("noise sigma must be non-negative and the base rating finite".into());
        }
        Ok(())
    }
}

/// Latent draws behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub user_grade: Vec<usize>,
    pub user_spending: Vec<f64>,
    pub business_grade: Vec<usize>,
    pub business_pricing: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub data: SparseReviews,
    pub truth: GroundTruth,
}

/// Fixed log scale used by the rating rule, mapping `(0, 1000]` onto `(0, 1]`.
pub fn expenditure_scale(x: f64) -> f64 {
    x.ln_1p() / DEFAULT_MAX_EXPENDITURE.ln_1p()
}

/// Noise-free rating signal for one cell, before rounding and clamping.
pub fn rating_signal(config: &SynthConfig, expenditure: f64, spending: f64) -> f64 {
    config.base_rating
        + config.a * expenditure_scale(expenditure)
        + config.b * ((expenditure - spending) / spending).tanh()
}

fn positive_normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let normal = Normal::new(mean, sigma).expect("validated sigma");
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if x > 0.0 {
            return x.min(DEFAULT_MAX_EXPENDITURE);
        }
    }
    mean.clamp(f64::MIN_POSITIVE, DEFAULT_MAX_EXPENDITURE)
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grades = WeightedIndex::new(&config.grade_weights)
        .map_err(|e| Error::InvalidArgument(format!("grade weights: {e}")))?;

    let draw_level = |rng: &mut ChaCha8Rng| {
        let g = grades.sample(rng);
        (g, positive_normal(rng, config.grade_means[g], config.grade_sigmas[g]))
    };
    let (business_grade, business_pricing): (Vec<usize>, Vec<f64>) =
        (0..config.businesses).map(|_| draw_level(&mut rng)).unzip();
    let (user_grade, user_spending): (Vec<usize>, Vec<f64>) =
        (0..config.users).map(|_| draw_level(&mut rng)).unzip();

    let noise = Normal::new(0.0, config.noise_sigma).expect("validated noise");
    let activity = LogNormal::new(0.0, config.activity_skew).expect("validated skew");
    let weights: Vec<f64> = (0..config.users).map(|_| activity.sample(&mut rng)).collect();
    let total: f64 = weights.iter().sum();
    let popularity: Option<Vec<f64>> = (config.popularity_skew > 0.0).then(|| {
        let dist = LogNormal::new(0.0, config.popularity_skew).expect("validated skew");
        (0..config.businesses).map(|_| dist.sample(&mut rng)).collect()
    });
    let mut entries = Vec::new();
    for user in 0..config.users {
        let p = (config.density * config.users as f64 * weights[user] / total).min(1.0);
        let count = Binomial::new(config.businesses as u64, p)
            .map_err(|e| Error::InvalidArgument(format!("density: {e}")))?
            .sample(&mut rng) as usize;
        let mut cells = match &popularity {
            Some(pop) => index::sample_weighted(&mut rng, config.businesses, |j| pop[j], count)
                .map_err(|e| Error::InvalidArgument(format!("popularity weights: {e}")))?
                .into_vec(),
            None => index::sample(&mut rng, config.businesses, count).into_vec(),
        };
        cells.sort_unstable();
        let spending = user_spending[user];
        for business in cells {
            let mean = PRICING_BLEND * business_pricing[business] + (1.0 - PRICING_BLEND) * spending;
            let sigma = config.grade_sigmas[business_grade[business]];
            let expenditure = positive_normal(&mut rng, mean, sigma);
            let raw = rating_signal(config, expenditure, spending) + noise.sample(&mut rng);
            entries.push(Review {
                user,
                business,
                rating: raw.round().clamp(MIN_RATING, MAX_RATING),
                expenditure: Some(expenditure),
            });
        }
    }

    let users = (0..config.users).map(|i| format!("u{i}")).collect();
    let businesses = (0..config.businesses).map(|j| format!("b{j}")).collect();
    let data = SparseReviews::new(users, businesses, entries)?;
    Ok(SynthOutput {
        data,
        truth: GroundTruth {
            config: config.clone(),
            user_grade,
            user_spending,
            business_grade,
            business_pricing,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: usize,
    /// Pearson correlation of rating with expenditure.
    pub corr_expenditure_rating: f64,
    /// Pearson correlation of rating with expenditure minus the user's mean expenditure.
    pub corr_diff_rating: f64,
    /// Number of peaks in the smoothed log-expenditure histogram.
    pub modality_count: usize,
}

pub const MIN_CORRELATION_ENTRIES: usize = 100;

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

const MODE_GRID: usize = 200;
const MODE_BANDWIDTH: f64 = 0.08;
const MODE_MIN_HEIGHT: f64 = 0.05;

/// Counts local maxima of a Gaussian kernel density estimate over
/// `ln(1 + x)`, ignoring bumps lower than 5% of the tallest peak.
pub fn count_modes(values: &[f64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let logs: Vec<f64> = values.iter().map(|x| x.max(0.0).ln_1p()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * MODE_BANDWIDTH;
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * MODE_BANDWIDTH;
    let step = (hi - lo) / (MODE_GRID - 1) as f64;
    let density: Vec<f64> = (0..MODE_GRID)
        .map(|g| {
            let at = lo + g as f64 * step;
            logs.iter()
                .map(|&l| {
                    let z = (at - l) / MODE_BANDWIDTH;
                    (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect();
    let peak = density.iter().copied().fold(0.0, f64::max);
    (1..MODE_GRID - 1)
        .filter(|&g| density[g] > density[g - 1] && density[g] >= density[g + 1] && density[g] >= MODE_MIN_HEIGHT * peak)
        .count()
}

pub fn correlation_report(data: &SparseReviews) -> Result<CorrelationReport> {
    let observed = data.num_observed_expenditures();
    if observed < MIN_CORRELATION_ENTRIES {
        return Err(Error::InsufficientData(format!(
            "{observed} entries with expenditures, need at least {MIN_CORRELATION_ENTRIES}"
        )));
    }
    let spending = data::user_spending(data)?;
    let mut ratings = Vec::with_capacity(observed);
    let mut expenditures = Vec::with_capacity(observed);
    let mut diffs = Vec::with_capacity(observed);
    for e in data.entries() {
        if let Some(x) = e.expenditure {
            ratings.push(e.rating);
            expenditures.push(x);
            diffs.push(x - spending.values[e.user]);
        }
    }
    Ok(CorrelationReport {
        entries: observed,
        corr_expenditure_rating: pearson(&expenditures, &ratings),
        corr_diff_rating: pearson(&diffs, &ratings),
        modality_count: count_modes(&expenditures),
    })
}
