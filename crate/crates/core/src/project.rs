//! Versioned JSON project files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_traps, MaterialParams, NumericsConfig, TestProtocol, TrapSpec};
use crate::error::{Error, Result};
use crate::fit::{ExperimentalSpectrum, FitResult};
use crate::forward::ForwardProblem;
use crate::result::ModelKind;
use crate::units::UnitSystem;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub schema_version: u32,
    pub material: MaterialParams,
    pub protocol: TestProtocol,
    pub numerics: NumericsConfig,
    pub traps: Vec<TrapSpec>,
    /// Models to run; several may be selected at once.
    pub models: Vec<ModelKind>,
    pub units: UnitSystem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentalSpectrum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
}

impl Project {
    pub fn new(material: MaterialParams, protocol: TestProtocol, traps: Vec<TrapSpec>) -> Self {
        Project {
            schema_version: SCHEMA_VERSION,
            material,
            protocol,
            numerics: NumericsConfig::default(),
            traps,
            models: vec![ModelKind::Oriani],
            units: UnitSystem::default(),
            experiment: None,
            fit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported project schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.material.validate()?;
        self.protocol.validate()?;
        self.numerics.validate()?;
        validate_traps(&self.traps)?;
        self.units.validate()?;
        if let Some(e) = &self.experiment {
            e.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Project = serde_json::from_str(text).map_err(|e| Error::Format(format!("project: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("project: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn forward(&self, model: ModelKind) -> ForwardProblem {
        ForwardProblem {
            model,
            material: self.material,
            traps: self.traps.clone(),
            protocol: self.protocol,
            numerics: self.numerics,
        }
    }
}
