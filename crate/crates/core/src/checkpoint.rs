//! JSON checkpoints.
//!
//! ```text
//! {
//!   "spec": {"model": "dagnn", "num_layers": 2, "hidden_dim": 32, ...},
//!   "params": {"input.W": {"shape": [15, 32], "data": [...]}, ...}
//! }
//! ```
//!
//! Arrays are row-major and weight matrices are input-major (`y = x W + b`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelSpec, ParamSet};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl Checkpoint {
    /// Checks the parameters against the architecture before wrapping them.
    pub fn new(spec: ModelSpec, params: ParamSet) -> Result<Self, ModelError> {
        params.check_against(&spec.param_specs()?)?;
        Ok(Self { spec, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let raw: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(Self::new(raw.spec, raw.params)?)
    }
}
