//! Space-time fields produced by the forward models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{MaterialParams, TestProtocol, TrapSpec, AVOGADRO};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "lattice")]
    Lattice,
    #[serde(rename = "oriani")]
    Oriani,
    #[serde(rename = "mf")]
    McNabbFoster,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Lattice => "lattice",
            ModelKind::Oriani => "oriani",
            ModelKind::McNabbFoster => "mf",
        }
    }

    /// Whether trapped hydrogen at the faces vanishes together with the
    /// lattice value once the boundary condition acts. True for the
    /// equilibrium model, where trap content is a function of θ_L.
    pub fn pins_trapped_boundary(self) -> bool {
        !matches!(self, ModelKind::McNabbFoster)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lattice" | "analytic" => Ok(ModelKind::Lattice),
            "oriani" => Ok(ModelKind::Oriani),
            "mf" | "mcnabb-foster" | "mcnabb_foster" | "mcnabbfoster" => Ok(ModelKind::McNabbFoster),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

/// Concentration fields sampled on a uniform grid over [−L/2, L/2].
///
/// The first time sample holds the initial condition (uniform contents);
/// every later sample satisfies C_L(±L/2) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub model: ModelKind,
    pub material: MaterialParams,
    pub traps: Vec<TrapSpec>,
    pub protocol: TestProtocol,
    /// Node positions [m].
    pub x: Vec<f64>,
    /// Output times [s].
    pub time: Vec<f64>,
    /// Temperature at each output time [K].
    pub temperature: Vec<f64>,
    /// C_L indexed as `[time][node]` [mol/m³].
    pub lattice: Vec<Vec<f64>>,
    /// C_T per trap, indexed as `[trap][time][node]` [mol/m³].
    pub trapped: Vec<Vec<Vec<f64>>>,
}

impl SimulationResult {
    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn n_times(&self) -> usize {
        self.time.len()
    }

    pub fn n_traps(&self) -> usize {
        self.trapped.len()
    }

    /// Largest and smallest occupancy over every field, as
    /// (min θ_L, max θ_L, min θ_T, max θ_T).
    pub fn occupancy_range(&self) -> (f64, f64, f64, f64) {
        let cap_l = self.material.lattice_capacity();
        let (mut lo_l, mut hi_l) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in self.lattice.iter().flatten() {
            lo_l = lo_l.min(v / cap_l);
            hi_l = hi_l.max(v / cap_l);
        }
        let (mut lo_t, mut hi_t) = (f64::INFINITY, f64::NEG_INFINITY);
        for (field, trap) in self.trapped.iter().zip(&self.traps) {
            let cap = trap.density / AVOGADRO;
            for v in field.iter().flatten() {
                lo_t = lo_t.min(v / cap);
                hi_t = hi_t.max(v / cap);
            }
        }
        (lo_l, hi_l, lo_t, hi_t)
    }

    /// Fails when the lattice occupancy leaves [−eps, 1 + eps].
    pub fn check_lattice_occupancy(&self, eps: f64) -> Result<()> {
        let (lo_l, hi_l, _, _) = self.occupancy_range();
        if lo_l < -eps || hi_l > 1.0 + eps {
            return Err(Error::SolverInstability(format!(
                "lattice occupancy left [0, 1]: range [{lo_l:e}, {hi_l:e}]"
            )));
        }
        Ok(())
    }

    /// Fails when any occupancy leaves [−eps, 1 + eps].
    pub fn check_occupancy(&self, eps: f64) -> Result<()> {
        self.check_lattice_occupancy(eps)?;
        let (_, _, lo_t, hi_t) = self.occupancy_range();
        if self.n_traps() > 0 && (lo_t < -eps || hi_t > 1.0 + eps) {
            return Err(Error::SolverInstability(format!(
                "trap occupancy left [0, 1]: range [{lo_t:e}, {hi_t:e}]"
            )));
        }
        Ok(())
    }
}

/// Uniform node positions across the slab.
pub fn uniform_grid(thickness: f64, n_elements: usize) -> Vec<f64> {
    let h = thickness / n_elements as f64;
    (0..=n_elements)
        .map(|i| {
            if i == n_elements {
                0.5 * thickness
            } else {
                -0.5 * thickness + i as f64 * h
            }
        })
        .collect()
}
