//! On-disk layout of a fitted model.
//!
//! A model directory holds `model.json` (variant, hyperparameters, shapes,
//! objective trace), the parameter arrays `P.bin`, `Q.bin` and `W.bin` as
//! row-major little-endian `f64`, `side.json` with the pricing/spending
//! vectors, `gmm.json` for EARP-M, and `ids.json` mapping indices back to
//! the original identifiers. The positioning matrix is recomputed on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LogMinMax;
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::matrix::Matrix;
use crate::model::{self, EarpModel, ExpenditureWeights, SideInfo, TrainConfig, Variant};

pub const MODEL_FILE: &str = "model.json";
pub const SIDE_FILE: &str = "side.json";
pub const GMM_FILE: &str = "gmm.json";
pub const IDS_FILE: &str = "ids.json";
pub const P_FILE: &str = "P.bin";
pub const Q_FILE: &str = "Q.bin";
pub const W_FILE: &str = "W.bin";

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub variant: Variant,
    pub config: TrainConfig,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Grades actually used by the expenditure term; `None` unless EARP-M.
    #[serde(rename = "T")]
    pub grades: Option<usize>,
    /// Shape of `W.bin`, absent for PMF.
    pub w_shape: Option<(usize, usize)>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SideFile {
    v: Vec<f64>,
    raw_pricing: Vec<f64>,
    pricing_imputed: Vec<bool>,
    spending: Vec<f64>,
    spending_imputed: Vec<bool>,
    expenditure_scale: Option<LogMinMax>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IdsFile {
    users: Vec<String>,
    businesses: Vec<String>,
}

/// A model together with the identifiers its rows refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: EarpModel,
    pub user_ids: Vec<String>,
    pub business_ids: Vec<String>,
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} bytes is not a whole number of f64 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let values = read_f64s(path)?;
    let len = values.len();
    Matrix::from_vec(rows, cols, values).ok_or_else(|| {
        Error::ShapeMismatch(format!("{}: expected {rows}x{cols} values, found {len}", path.display()))
    })
}

pub fn save_model(dir: &Path, model: &EarpModel, user_ids: &[String], business_ids: &[String]) -> Result<()> {
    if user_ids.len() != model.num_users() || business_ids.len() != model.num_businesses() {
        return Err(Error::ShapeMismatch(format!(
            "{} user ids and {} business ids for a {}x{} model",
            user_ids.len(),
            business_ids.len(),
            model.num_users(),
            model.num_businesses()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let w_shape = match &model.weights {
        ExpenditureWeights::None => None,
        ExpenditureWeights::Shared(_) => Some((1, 1)),
        ExpenditureWeights::PerUser(w) => Some((w.len(), 1)),
        ExpenditureWeights::PerGrade(w) => Some(w.shape()),
    };
    let grades = match &model.weights {
        ExpenditureWeights::PerGrade(w) => Some(w.cols()),
        _ => None,
    };
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        variant: model.variant,
        config: model.config.clone(),
        m: model.num_users(),
        n: model.num_businesses(),
        k: model.p.cols(),
        grades,
        w_shape,
        objective_trace: model.trace.clone(),
        converged: model.converged,
        iterations: model.iterations,
    };
    write_json(&dir.join(MODEL_FILE), &header)?;
    write_f64s(&dir.join(P_FILE), model.p.as_slice())?;
    write_f64s(&dir.join(Q_FILE), model.q.as_slice())?;
    if w_shape.is_some() {
        write_f64s(&dir.join(W_FILE), model.weights.as_slice())?;
    }
    if let Some(side) = &model.side {
        let file = SideFile {
            v: side.v.clone(),
            raw_pricing: side.raw_pricing.clone(),
            pricing_imputed: side.pricing_imputed.clone(),
            spending: side.spending.clone(),
            spending_imputed: side.spending_imputed.clone(),
            expenditure_scale: side.expenditure_scale,
        };
        write_json(&dir.join(SIDE_FILE), &file)?;
        if let Some(mixture) = &side.gmm {
            write_json(&dir.join(GMM_FILE), mixture)?;
        }
    }
    write_json(
        &dir.join(IDS_FILE),
        &IdsFile {
            users: user_ids.to_vec(),
            businesses: business_ids.to_vec(),
        },
    )
}

pub fn load_model(dir: &Path) -> Result<SavedModel> {
    let header: ModelHeader = read_json(&dir.join(MODEL_FILE))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported model format version {}",
            header.format_version
        )));
    }
    let p = read_matrix(&dir.join(P_FILE), header.m, header.k)?;
    let q = read_matrix(&dir.join(Q_FILE), header.n, header.k)?;
    let weights = match (header.variant, header.w_shape) {
        (Variant::Pmf, _) => ExpenditureWeights::None,
        (_, None) => return Err(Error::ShapeMismatch("missing W shape in model header".into())),
        (variant, Some((rows, cols))) => {
            let w = read_matrix(&dir.join(W_FILE), rows, cols)?;
            match variant {
                Variant::EarpE => ExpenditureWeights::Shared(w.get(0, 0)),
                Variant::EarpU => ExpenditureWeights::PerUser(w.as_slice().to_vec()),
                _ => ExpenditureWeights::PerGrade(w),
            }
        }
    };

    let side = if header.variant.uses_expenditure() {
        let file: SideFile = read_json(&dir.join(SIDE_FILE))?;
        let mut side = SideInfo {
            v: file.v,
            positioning: None,
            gmm: None,
            expenditure_scale: file.expenditure_scale,
            raw_pricing: file.raw_pricing,
            pricing_imputed: file.pricing_imputed,
            spending: file.spending,
            spending_imputed: file.spending_imputed,
        };
        if header.variant == Variant::EarpM {
            let mixture: GmmModel = read_json(&dir.join(GMM_FILE))?;
            mixture.validate()?;
            let scale = side
                .expenditure_scale
                .ok_or_else(|| Error::ShapeMismatch("earp-m model without an expenditure scale".into()))?;
            side.positioning = Some(model::business_positioning(
                &mixture,
                &scale,
                &side.raw_pricing,
                &side.pricing_imputed,
            )?);
            side.gmm = Some(mixture);
        }
        Some(side)
    } else {
        None
    };

    let mut model = EarpModel::from_parts(header.variant, p, q, weights, side, header.config)?;
    model.trace = header.objective_trace;
    model.converged = header.converged;
    model.iterations = header.iterations;

    let ids: IdsFile = read_json(&dir.join(IDS_FILE))?;
    if ids.users.len() != header.m || ids.businesses.len() != header.n {
        return Err(Error::ShapeMismatch("identifier lists do not match the model shape".into()));
    }
    Ok(SavedModel {
        model,
        user_ids: ids.users,
        business_ids: ids.businesses,
    })
}
