//! Model-agnostic entry point for forward simulations.

use serde::{Deserialize, Serialize};

use crate::analytic::{lattice_field, lattice_spectrum, SeriesSolution};
use crate::domain::{MaterialParams, NumericsConfig, TestProtocol, TrapSpec};
use crate::error::Result;
use crate::mcnabb_foster::{solve_mcnabb_foster, McNabbFosterProblem};
use crate::oriani::{solve_oriani, OrianiProblem};
use crate::result::{ModelKind, SimulationResult};
use crate::spectrum::{desorption_rate, DesorptionSpectrum};

/// Everything a forward run needs. The lattice model ignores `traps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardProblem {
    pub model: ModelKind,
    pub material: MaterialParams,
    pub traps: Vec<TrapSpec>,
    pub protocol: TestProtocol,
    pub numerics: NumericsConfig,
}

impl ForwardProblem {
    pub fn fields(&self) -> Result<SimulationResult> {
        match self.model {
            ModelKind::Lattice => lattice_field(&self.series()?, &self.numerics),
            ModelKind::Oriani => solve_oriani(&OrianiProblem {
                material: self.material,
                traps: self.traps.clone(),
                protocol: self.protocol,
                numerics: self.numerics,
            }),
            ModelKind::McNabbFoster => solve_mcnabb_foster(&McNabbFosterProblem {
                material: self.material,
                traps: self.traps.clone(),
                protocol: self.protocol,
                numerics: self.numerics,
            }),
        }
    }

    /// Desorption spectrum. The lattice model is differentiated term by
    /// term; the numerical models go through their fields.
    pub fn spectrum(&self) -> Result<DesorptionSpectrum> {
        match self.model {
            ModelKind::Lattice => lattice_spectrum(&self.series()?, &self.numerics),
            _ => desorption_rate(&self.fields()?),
        }
    }

    fn series(&self) -> Result<SeriesSolution> {
        SeriesSolution::new(self.material, self.protocol, self.numerics.series_terms)
    }
}
