//! Versioned JSON checkpoints.

use std::path::Path;

use qukan::baselines::VqcModel;
use qukan::data::MinMaxScaler;
use qukan::{BaseCircuit, QuKanNetwork};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ModelKind};
use crate::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Qcbm { base: BaseCircuit },
    Network { network: QuKanNetwork },
    Vqc { model: VqcModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the resolved configuration text.
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub experiment: Experiment,
    pub model: ModelKind,
    pub payload: Payload,
    pub scaler: Option<MinMaxScaler>,
    pub provenance: Provenance,
}

pub fn config_hash(resolved_toml: &str) -> String {
    Sha256::digest(resolved_toml.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Checkpoint {
    pub fn new(
        experiment: Experiment,
        model: ModelKind,
        payload: Payload,
        scaler: Option<MinMaxScaler>,
        seed: u64,
        resolved_toml: &str,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            experiment,
            model,
            payload,
            scaler,
            provenance: Provenance {
                seed,
                config_hash: config_hash(resolved_toml),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoints are serialisable")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed checkpoint: {e}")))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads `path`; a missing file is reported with `hint` naming the command that creates it.
    pub fn load(path: &Path, hint: &str) -> CliResult<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingArtifact(format!(
                "{} not found; run `{hint}` first",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}
