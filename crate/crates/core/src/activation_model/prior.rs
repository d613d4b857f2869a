//! Class-conditional prior file: one `(μ_i, κ_i)` per class, TOML.
//!
//! ```toml
//! format_version = 1
//! c = 10
//! d = 2
//! kappa = 20.0
//! per_class_kappa = [..]   # optional
//! directions = [[..], ..]  # c rows of d values
//! source_norms = [..]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassActivationModel;
use crate::directional::UnitVector;
use crate::error::{Error, Result};

pub const PRIOR_FORMAT_VERSION: u32 = 1;
const KIND: &str = "prior";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    format_version: u32,
    c: usize,
    d: usize,
    kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_class_kappa: Option<Vec<f64>>,
    directions: Vec<Vec<f64>>,
    source_norms: Vec<f64>,
}

pub fn export_prior(model: &ClassActivationModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = PriorFile {
        format_version: PRIOR_FORMAT_VERSION,
        c: model.class_count(),
        d: model.dim(),
        kappa: model.kappa(),
        per_class_kappa: model.per_class_kappa().map(<[f64]>::to_vec),
        directions: model.class_directions().iter().map(|u| u.as_slice().to_vec()).collect(),
        source_norms: model.source_norms().to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::format(KIND, path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn import_prior(path: impl AsRef<Path>) -> Result<ClassActivationModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PriorFile = toml::from_str(&text).map_err(|e| Error::format(KIND, path, e.to_string()))?;
    if file.format_version != PRIOR_FORMAT_VERSION {
        return Err(Error::format(KIND, path, format!("unsupported format_version {}", file.format_version)));
    }
    if file.directions.len() != file.c || file.directions.iter().any(|r| r.len() != file.d) {
        return Err(Error::format(KIND, path, format!("directions must be {} rows of {} values", file.c, file.d)));
    }
    let directions = file
        .directions
        .into_iter()
        .map(UnitVector::from_unit)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::format(KIND, path, e.to_string()))?;
    ClassActivationModel::from_raw(directions, file.kappa, file.per_class_kappa, file.source_norms)
        .map_err(|e| Error::format(KIND, path, e.to_string()))
}
