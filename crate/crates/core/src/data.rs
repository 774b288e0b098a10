//! Review ingestion and the sparse user–business representation.
//!
//! A [`SparseReviews`] value is a COO list of observed (user, business) cells,
//! each carrying a rating and an optional per-person expenditure. Presence of
//! an entry is the observation indicator; absent cells are simply not stored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "user_id,business_id,rating,expenditure";

/// Records above this per-person expenditure are discarded at ingestion.
pub const DEFAULT_MAX_EXPENDITURE: f64 = 1000.0;

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// One raw review row, before indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub user_id: String,
    pub business_id: String,
    pub rating: f64,
    pub expenditure: Option<f64>,
}

/// One observed cell of the rating/expenditure matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Review {
    pub user: usize,
    pub business: usize,
    pub rating: f64,
    pub expenditure: Option<f64>,
}

/// Counters describing what ingestion kept and discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub kept: usize,
    pub dropped_rating_range: usize,
    pub dropped_expenditure_cap: usize,
    pub dropped_nonpositive_expenditure: usize,
    pub duplicates_replaced: usize,
}

impl IngestSummary {
    pub fn dropped(&self) -> usize {
        self.dropped_rating_range + self.dropped_expenditure_cap + self.dropped_nonpositive_expenditure
    }
}

/// Sparse ratings `R`, expenditures `C` and indicator `I` over `m` users and `n` businesses.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseReviews {
    users: Vec<String>,
    businesses: Vec<String>,
    user_index: HashMap<String, usize>,
    business_index: HashMap<String, usize>,
    entries: Vec<Review>,
}

impl SparseReviews {
    /// Builds a dataset from already-indexed entries.
    ///
    /// Fails if an index is out of range or a (user, business) pair repeats.
    pub fn new(users: Vec<String>, businesses: Vec<String>, entries: Vec<Review>) -> Result<Self> {
        let user_index = build_index(&users, "user")?;
        let business_index = build_index(&businesses, "business")?;
        let m = users.len();
        let n = businesses.len();
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.user >= m || e.business >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "entry ({}, {}) outside {}x{}",
                    e.user, e.business, m, n
                )));
            }
            if !seen.insert((e.user, e.business)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate entry for pair ({}, {})",
                    e.user, e.business
                )));
            }
        }
        Ok(SparseReviews {
            users,
            businesses,
            user_index,
            business_index,
            entries,
        })
    }

    /// Indexes raw records in first-appearance order. A repeated
    /// (user, business) pair overwrites the earlier value.
    pub fn from_records(records: impl IntoIterator<Item = ReviewRecord>) -> (Self, usize) {
        let mut users = Vec::new();
        let mut businesses = Vec::new();
        let mut user_index = HashMap::new();
        let mut business_index = HashMap::new();
        let mut entries: Vec<Review> = Vec::new();
        let mut cell: HashMap<(usize, usize), usize> = HashMap::new();
        let mut replaced = 0;

        for rec in records {
            let u = *user_index.entry(rec.user_id.clone()).or_insert_with(|| {
                users.push(rec.user_id.clone());
                users.len() - 1
            });
            let b = *business_index.entry(rec.business_id.clone()).or_insert_with(|| {
                businesses.push(rec.business_id.clone());
                businesses.len() - 1
            });
            let review = Review {
                user: u,
                business: b,
                rating: rec.rating,
                expenditure: rec.expenditure,
            };
            match cell.get(&(u, b)) {
                Some(&pos) => {
                    entries[pos] = review;
                    replaced += 1;
                }
                None => {
                    cell.insert((u, b), entries.len());
                    entries.push(review);
                }
            }
        }

        (
            SparseReviews {
                users,
                businesses,
                user_index,
                business_index,
                entries,
            },
            replaced,
        )
    }

    /// Same id maps, different entry set.
    pub fn with_entries(&self, entries: Vec<Review>) -> Result<Self> {
        SparseReviews::new(self.users.clone(), self.businesses.clone(), entries)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_businesses(&self) -> usize {
        self.businesses.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Review] {
        &self.entries
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn business_ids(&self) -> &[String] {
        &self.businesses
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn business_index(&self, id: &str) -> Option<usize> {
        self.business_index.get(id).copied()
    }

    pub fn observed_expenditures(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter_map(|e| e.expenditure)
    }

    pub fn num_observed_expenditures(&self) -> usize {
        self.observed_expenditures().count()
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|e| e.rating).sum::<f64>() / self.entries.len() as f64)
    }

    /// SHA-256 over the entry list (indices, rating bits, expenditure bits).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.users.len() as u64).to_le_bytes());
        hasher.update((self.businesses.len() as u64).to_le_bytes());
        for e in &self.entries {
            hasher.update((e.user as u64).to_le_bytes());
            hasher.update((e.business as u64).to_le_bytes());
            hasher.update(e.rating.to_bits().to_le_bytes());
            match e.expenditure {
                Some(x) => hasher.update(x.to_bits().to_le_bytes()),
                None => hasher.update([0xff; 8]),
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Hash of the ratings only; unaffected by expenditure dropout.
    pub fn ratings_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update((e.user as u64).to_le_bytes());
            hasher.update((e.business as u64).to_le_bytes());
            hasher.update(e.rating.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for e in &self.entries {
            match e.expenditure {
                Some(x) => writeln!(
                    out,
                    "{},{},{},{}",
                    self.users[e.user], self.businesses[e.business], e.rating, x
                )?,
                None => writeln!(
                    out,
                    "{},{},{},",
                    self.users[e.user], self.businesses[e.business], e.rating
                )?,
            }
        }
        Ok(())
    }
}

fn build_index(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(map)
}

pub fn load_reviews(path: impl AsRef<Path>, max_expenditure: f64) -> Result<(SparseReviews, IngestSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_reviews(BufReader::new(file), max_expenditure)
}

/// Parses the reviews CSV. Rows outside the rating range, with a
/// non-positive expenditure, or above `max_expenditure` are dropped and
/// counted; structurally malformed rows are errors.
pub fn parse_reviews<R: BufRead>(reader: R, max_expenditure: f64) -> Result<(SparseReviews, IngestSummary)> {
    let mut summary = IngestSummary::default();
    let mut records = Vec::new();
    let mut lines = reader.lines();

    match lines.next() {
        Some(header) => {
            let header = header?;
            let header = header.trim_start_matches('\u{feff}').trim_end_matches('\r');
            if header != CSV_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {CSV_HEADER:?}, found {header:?}"),
                });
            }
        }
        None => return Err(Error::EmptyDataset),
    }

    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        summary.rows_read += 1;
        let record = parse_row(line, line_no)?;

        if !(MIN_RATING..=MAX_RATING).contains(&record.rating) {
            summary.dropped_rating_range += 1;
            continue;
        }
        match record.expenditure {
            Some(x) if x <= 0.0 => {
                summary.dropped_nonpositive_expenditure += 1;
                continue;
            }
            Some(x) if x > max_expenditure => {
                summary.dropped_expenditure_cap += 1;
                continue;
            }
            _ => {}
        }
        records.push(record);
    }

    let (data, replaced) = SparseReviews::from_records(records);
    summary.duplicates_replaced = replaced;
    summary.kept = data.len();
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((data, summary))
}

fn parse_row(line: &str, line_no: usize) -> Result<ReviewRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let user_id = fields[0].trim();
    let business_id = fields[1].trim();
    if user_id.is_empty() || business_id.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "empty user_id or business_id".into(),
        });
    }
    let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("non-numeric rating {:?}", fields[2]),
    })?;
    if !rating.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            message: format!("non-finite rating {:?}", fields[2]),
        });
    }
    let exp_field = fields[3].trim();
    let expenditure = if exp_field.is_empty() {
        None
    } else {
        let x: f64 = exp_field.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("non-numeric expenditure {exp_field:?}"),
        })?;
        if !x.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite expenditure {exp_field:?}"),
            });
        }
        Some(x)
    };
    Ok(ReviewRecord {
        user_id: user_id.to_string(),
        business_id: business_id.to_string(),
        rating,
        expenditure,
    })
}

/// Per-user mean expenditure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendingVector {
    pub values: Vec<f64>,
    /// True where the user had no observed expenditure and the global mean was substituted.
    pub imputed: Vec<bool>,
    pub global_mean: f64,
}

/// Per-business mean expenditure and its log+min-max normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingVector {
    pub raw: Vec<f64>,
    pub imputed: Vec<bool>,
    pub global_mean: f64,
    pub normalized: Vec<f64>,
}

pub fn global_mean_expenditure(data: &SparseReviews) -> Result<f64> {
    let (sum, count) = data
        .observed_expenditures()
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        return Err(Error::NoExpenditures);
    }
    Ok(sum / count as f64)
}

fn grouped_means(data: &SparseReviews, len: usize, key: impl Fn(&Review) -> usize) -> Result<(Vec<f64>, Vec<bool>, f64)> {
    let global = global_mean_expenditure(data)?;
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for e in data.entries() {
        if let Some(x) = e.expenditure {
            let k = key(e);
            sums[k] += x;
            counts[k] += 1;
        }
    }
    let imputed: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { global } else { s / c as f64 })
        .collect();
    Ok((values, imputed, global))
}

pub fn user_spending(data: &SparseReviews) -> Result<SpendingVector> {
    let (values, imputed, global_mean) = grouped_means(data, data.num_users(), |e| e.user)?;
    Ok(SpendingVector {
        values,
        imputed,
        global_mean,
    })
}

/// Business pricing `v`, with the normalized copy filled in.
pub fn business_pricing(data: &SparseReviews) -> Result<PricingVector> {
    let (raw, imputed, global_mean) = grouped_means(data, data.num_businesses(), |e| e.business)?;
    let normalized = normalize_pricing(&raw)?;
    Ok(PricingVector {
        raw,
        imputed,
        global_mean,
        normalized,
    })
}

/// Monotone map `x -> (ln(1+x) - lo) / (hi - lo)` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMinMax {
    pub lo: f64,
    pub hi: f64,
}

impl LogMinMax {
    /// Fits the map to the extremes of `values`.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("cannot fit normalization to an empty vector".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "pricing values must be finite and non-negative, found {v}"
                )));
            }
            let l = v.ln_1p();
            lo = lo.min(l);
            hi = hi.max(l);
        }
        Ok(LogMinMax { lo, hi })
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    /// Applies the map, clamping to `[0, 1]`. A zero-width range maps everything to 0.5.
    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return 0.5;
        }
        ((x.max(0.0).ln_1p() - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    /// Maps a normalized value back to currency units.
    pub fn invert(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            return self.lo.exp_m1();
        }
        (self.lo + y * (self.hi - self.lo)).exp_m1()
    }
}

pub fn normalize_pricing(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let map = LogMinMax::fit(raw)?;
    Ok(raw.iter().map(|&x| map.apply(x)).collect())
}

/// Uniform entry-level partition into `(train, test)`; train receives
/// `round(train_ratio * N)` entries. Both halves keep the full id maps.
pub fn split(data: &SparseReviews, train_ratio: f64, seed: u64) -> Result<(SparseReviews, SparseReviews)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("train ratio {train_ratio} outside (0, 1)")));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let n_train = (train_ratio * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    for i in index::sample(&mut rng, n, n_train) {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = data
        .entries()
        .iter()
        .zip(&in_train)
        .partition(|(_, &t)| t);
    let train = train.into_iter().map(|(e, _)| *e).collect();
    let test = test.into_iter().map(|(e, _)| *e).collect();
    Ok((data.with_entries(train)?, data.with_entries(test)?))
}

/// Marks `round(drop_ratio * observed)` uniformly chosen expenditures as missing.
pub fn drop_expenditures(data: &SparseReviews, drop_ratio: f64, seed: u64) -> Result<SparseReviews> {
    if !(0.0..1.0).contains(&drop_ratio) {
        return Err(Error::InvalidArgument(format!("drop ratio {drop_ratio} outside [0, 1)")));
    }
    let observed: Vec<usize> = data
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.expenditure.is_some())
        .map(|(i, _)| i)
        .collect();
    let n_drop = (drop_ratio * observed.len() as f64).round() as usize;
    let mut entries = data.entries().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in index::sample(&mut rng, observed.len(), n_drop) {
        entries[observed[k]].expenditure = None;
    }
    data.with_entries(entries)
}
