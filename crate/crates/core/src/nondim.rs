//! Non-dimensional parameter groups.
//!
//! Reference scales are the start temperature T₀, the specimen thickness
//! L, the diffusion prefactor D₀, the lattice site density N_L and RT₀ for
//! energies. Lengths become x̄ = x/L, times t̄ = tD₀/L², temperatures
//! T̄ = T/T₀ and lattice occupancies θ̄_L = θ_L/θ_L⁰.

use serde::{Deserialize, Serialize};

use crate::domain::{MaterialParams, TestProtocol, TrapSpec, AVOGADRO, GAS_CONSTANT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScales {
    pub temperature: f64,
    pub length: f64,
    pub diffusivity: f64,
    pub lattice_sites: f64,
}

impl ReferenceScales {
    pub fn time(&self) -> f64 {
        self.length * self.length / self.diffusivity
    }

    pub fn energy(&self) -> f64 {
        GAS_CONSTANT * self.temperature
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimTrap {
    /// N̄_T = N_T/N_L
    pub density: f64,
    /// ΔH̄ = ΔH/(RT₀)
    pub binding_energy: f64,
    /// Ē_t = E_t/(RT₀)
    pub trapping_energy: f64,
    /// Ē_d = E_d/(RT₀)
    pub detrapping_energy: f64,
    /// ν̄_t = ν_t·L²/D₀
    pub trapping_frequency: f64,
    /// ν̄_d = ν_d·L²/D₀
    pub detrapping_frequency: f64,
    pub initial_occupancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondimParams {
    pub scales: ReferenceScales,
    /// Ē_L = E_L/(RT₀)
    pub activation_energy: f64,
    /// φ̄ = φL²/(T₀D₀)
    pub heating_rate: f64,
    /// θ_L⁰ = C_L⁰·N_A/N_L
    pub initial_lattice_occupancy: f64,
    /// t̄_rest
    pub rest_time: f64,
    /// T̄_max = T_max/T₀
    pub end_temperature: f64,
    /// Carried through unchanged; only used for unit conversion.
    pub molar_mass: f64,
    pub mass_density: f64,
    pub traps: Vec<NondimTrap>,
}

impl NondimParams {
    pub fn x_bar(&self, x: f64) -> f64 {
        x / self.scales.length
    }

    pub fn t_bar(&self, t: f64) -> f64 {
        t / self.scales.time()
    }

    pub fn temperature_bar(&self, temperature: f64) -> f64 {
        temperature / self.scales.temperature
    }

    /// D̄_L(T̄) = exp(−Ē_L/T̄).
    pub fn diffusivity_bar(&self, temperature_bar: f64) -> f64 {
        (-self.activation_energy / temperature_bar).exp()
    }

    /// T̄(t̄) = 1 + φ̄·⟨t̄ − t̄_rest⟩.
    pub fn temperature_at_bar(&self, t_bar: f64) -> f64 {
        1.0 + self.heating_rate * (t_bar - self.rest_time).max(0.0)
    }

    pub fn end_time_bar(&self) -> f64 {
        self.rest_time + (self.end_temperature - 1.0) / self.heating_rate
    }
}

pub fn nondimensionalize(
    material: &MaterialParams,
    traps: &[TrapSpec],
    protocol: &TestProtocol,
) -> NondimParams {
    let scales = ReferenceScales {
        temperature: protocol.start_temperature,
        length: protocol.thickness,
        diffusivity: material.diffusion_prefactor,
        lattice_sites: material.lattice_sites,
    };
    let rt0 = scales.energy();
    let t_scale = scales.time();
    let traps = traps
        .iter()
        .map(|t| NondimTrap {
            density: t.density / scales.lattice_sites,
            binding_energy: t.binding_energy / rt0,
            trapping_energy: t.trapping_energy / rt0,
            detrapping_energy: t.detrapping_energy / rt0,
            trapping_frequency: t.trapping_frequency * t_scale,
            detrapping_frequency: t.detrapping_frequency * t_scale,
            initial_occupancy: t.initial_occupancy,
        })
        .collect();
    NondimParams {
        scales,
        activation_energy: material.activation_energy / rt0,
        heating_rate: protocol.heating_rate * t_scale / scales.temperature,
        initial_lattice_occupancy: material.initial_lattice_occupancy(),
        rest_time: protocol.rest_time / t_scale,
        end_temperature: protocol.end_temperature / scales.temperature,
        molar_mass: material.molar_mass,
        mass_density: material.mass_density,
        traps,
    }
}

pub fn dimensionalize(p: &NondimParams) -> (MaterialParams, Vec<TrapSpec>, TestProtocol) {
    let s = &p.scales;
    let rt0 = s.energy();
    let t_scale = s.time();
    let material = MaterialParams {
        activation_energy: p.activation_energy * rt0,
        diffusion_prefactor: s.diffusivity,
        molar_mass: p.molar_mass,
        mass_density: p.mass_density,
        lattice_sites: s.lattice_sites,
        initial_concentration: p.initial_lattice_occupancy * s.lattice_sites / AVOGADRO,
    };
    let traps = p
        .traps
        .iter()
        .map(|t| TrapSpec {
            density: t.density * s.lattice_sites,
            binding_energy: t.binding_energy * rt0,
            trapping_energy: t.trapping_energy * rt0,
            detrapping_energy: t.detrapping_energy * rt0,
            trapping_frequency: t.trapping_frequency / t_scale,
            detrapping_frequency: t.detrapping_frequency / t_scale,
            initial_occupancy: t.initial_occupancy,
        })
        .collect();
    let protocol = TestProtocol {
        thickness: s.length,
        heating_rate: p.heating_rate * s.temperature / t_scale,
        rest_time: p.rest_time * t_scale,
        start_temperature: s.temperature,
        end_temperature: p.end_temperature * s.temperature,
    };
    (material, traps, protocol)
}
