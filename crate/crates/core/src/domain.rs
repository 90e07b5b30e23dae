//! Material, trap and test-protocol parameters together with the elementary
//! physics relations shared by every transport model.
//!
//! All quantities are SI with two exceptions kept for user familiarity:
//! molar mass in g/mol and mass density in g/cm³. Both are only used for
//! unit conversion and the optional lattice-site estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal gas constant [J/(mol·K)].
pub const GAS_CONSTANT: f64 = 8.31446;
/// Avogadro's number [1/mol].
pub const AVOGADRO: f64 = 6.02214e23;
/// Molar mass of atomic hydrogen [g/mol], used for wt ppm conversions.
pub const HYDROGEN_MOLAR_MASS: f64 = 1.008;
/// Default attempt frequency for trapping and detrapping [Hz].
pub const DEBYE_FREQUENCY: f64 = 1e13;
/// Largest number of trap types a material may carry.
pub const MAX_TRAP_TYPES: usize = 6;

/// Lattice transport and bookkeeping constants of the host metal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Activation energy for lattice diffusion, E_L.
    #[serde(rename = "lattice_activation_energy_J_per_mol")]
    pub activation_energy: f64,
    /// Pre-exponential diffusion factor, D_0.
    #[serde(rename = "diffusion_prefactor_m2_per_s")]
    pub diffusion_prefactor: f64,
    /// Molar mass of the host metal.
    #[serde(rename = "molar_mass_g_per_mol")]
    pub molar_mass: f64,
    /// Mass density of the host metal.
    #[serde(rename = "mass_density_g_per_cm3")]
    pub mass_density: f64,
    /// Lattice site density N_L (interstitial sites, already including the
    /// sites-per-atom factor).
    #[serde(rename = "lattice_site_density_per_m3")]
    pub lattice_sites: f64,
    /// Initial lattice hydrogen concentration C_L⁰.
    #[serde(rename = "initial_lattice_concentration_mol_per_m3")]
    pub initial_concentration: f64,
}

impl MaterialParams {
    pub fn new(
        activation_energy: f64,
        diffusion_prefactor: f64,
        molar_mass: f64,
        mass_density: f64,
        lattice_sites: f64,
        initial_concentration: f64,
    ) -> Result<Self> {
        let m = MaterialParams {
            activation_energy,
            diffusion_prefactor,
            molar_mass,
            mass_density,
            lattice_sites,
            initial_concentration,
        };
        m.validate()?;
        Ok(m)
    }

    /// Body-centred cubic iron, typical of ferritic and martensitic steels.
    pub fn bcc_iron() -> Self {
        MaterialParams {
            activation_energy: 5690.0,
            diffusion_prefactor: 7.23e-8,
            molar_mass: 55.847,
            mass_density: 7.8474,
            lattice_sites: 5.1e29,
            initial_concentration: 0.06,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        check(
            self.activation_energy.is_finite() && self.activation_energy >= 0.0,
            "E_L must be finite and >= 0",
        )?;
        check(
            self.diffusion_prefactor.is_finite() && self.diffusion_prefactor > 0.0,
            "D_0 must be > 0",
        )?;
        check(
            self.molar_mass.is_finite() && self.molar_mass > 0.0,
            "M_M must be > 0",
        )?;
        check(
            self.mass_density.is_finite() && self.mass_density > 0.0,
            "rho_M must be > 0",
        )?;
        check(
            self.lattice_sites.is_finite() && self.lattice_sites > 0.0,
            "N_L must be > 0",
        )?;
        check(
            self.initial_concentration.is_finite() && self.initial_concentration >= 0.0,
            "C_L0 must be >= 0",
        )?;
        check(
            self.initial_lattice_occupancy() < 1.0,
            "initial lattice occupancy C_L0*N_A/N_L must be < 1",
        )
    }

    /// θ_L⁰ = C_L⁰·N_A/N_L.
    pub fn initial_lattice_occupancy(&self) -> f64 {
        self.initial_concentration * AVOGADRO / self.lattice_sites
    }

    /// Lattice occupancy corresponding to a molar concentration.
    pub fn occupancy_of(&self, concentration: f64) -> f64 {
        concentration * AVOGADRO / self.lattice_sites
    }

    /// Molar concentration [mol/m³] of a fully occupied lattice.
    pub fn lattice_capacity(&self) -> f64 {
        self.lattice_sites / AVOGADRO
    }
}

/// One trap type: density and energy landscape.
///
/// The binding energy is kept consistent with the activation energies,
/// `delta_h == e_t - e_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    #[serde(rename = "trap_density_per_m3")]
    pub density: f64,
    #[serde(rename = "binding_energy_J_per_mol")]
    pub binding_energy: f64,
    #[serde(rename = "trapping_energy_J_per_mol")]
    pub trapping_energy: f64,
    #[serde(rename = "detrapping_energy_J_per_mol")]
    pub detrapping_energy: f64,
    #[serde(rename = "trapping_frequency_Hz")]
    pub trapping_frequency: f64,
    #[serde(rename = "detrapping_frequency_Hz")]
    pub detrapping_frequency: f64,
    /// Initial occupancy override; `None` means Oriani equilibrium at T₀.
    #[serde(
        rename = "initial_occupancy",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub initial_occupancy: Option<f64>,
}

impl TrapSpec {
    /// Trap with the default energy landscape: E_t = E_L, E_d = E_t − ΔH and
    /// both attempt frequencies at the Debye frequency.
    pub fn new(density: f64, binding_energy: f64, material: &MaterialParams) -> Result<Self> {
        let e_t = material.activation_energy;
        let t = TrapSpec {
            density,
            binding_energy,
            trapping_energy: e_t,
            detrapping_energy: e_t - binding_energy,
            trapping_frequency: DEBYE_FREQUENCY,
            detrapping_frequency: DEBYE_FREQUENCY,
            initial_occupancy: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// Trap described by its activation energies; ΔH = E_t − E_d.
    pub fn from_energies(
        density: f64,
        trapping_energy: f64,
        detrapping_energy: f64,
        trapping_frequency: f64,
        detrapping_frequency: f64,
    ) -> Result<Self> {
        let t = TrapSpec {
            density,
            binding_energy: trapping_energy - detrapping_energy,
            trapping_energy,
            detrapping_energy,
            trapping_frequency,
            detrapping_frequency,
            initial_occupancy: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// Same attempt frequency for trapping and detrapping.
    pub fn with_frequency(mut self, nu: f64) -> Self {
        self.trapping_frequency = nu;
        self.detrapping_frequency = nu;
        self
    }

    pub fn with_initial_occupancy(mut self, theta: f64) -> Self {
        self.initial_occupancy = Some(theta);
        self
    }

    /// Changes ΔH keeping E_t fixed; E_d follows.
    pub fn with_binding_energy(mut self, binding_energy: f64) -> Self {
        self.binding_energy = binding_energy;
        self.detrapping_energy = self.trapping_energy - binding_energy;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.density.is_finite() && self.density > 0.0) {
            return bad("N_T must be > 0");
        }
        if !(self.binding_energy.is_finite() && self.binding_energy < 0.0) {
            return bad("binding energy must be negative");
        }
        if !(self.trapping_energy.is_finite() && self.detrapping_energy.is_finite()) {
            return bad("activation energies must be finite");
        }
        let identity = self.trapping_energy - self.detrapping_energy;
        let scale = self.binding_energy.abs().max(1.0);
        if (identity - self.binding_energy).abs() > 1e-9 * scale {
            return bad("binding energy must equal E_t - E_d");
        }
        if !(self.trapping_frequency.is_finite() && self.trapping_frequency > 0.0) {
            return bad("trapping frequency must be > 0");
        }
        if !(self.detrapping_frequency.is_finite() && self.detrapping_frequency > 0.0) {
            return bad("detrapping frequency must be > 0");
        }
        if let Some(theta) = self.initial_occupancy {
            if !(0.0..=1.0).contains(&theta) {
                return bad("initial trap occupancy must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Validates a trap list against the per-trap invariants and the type cap.
pub fn validate_traps(traps: &[TrapSpec]) -> Result<()> {
    if traps.len() > MAX_TRAP_TYPES {
        return Err(Error::InvalidParameter(format!(
            "at most {MAX_TRAP_TYPES} trap types are supported, got {}",
            traps.len()
        )));
    }
    traps.iter().try_for_each(TrapSpec::validate)
}

/// Specimen geometry and heating schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestProtocol {
    #[serde(rename = "thickness_m")]
    pub thickness: f64,
    #[serde(rename = "heating_rate_K_per_s")]
    pub heating_rate: f64,
    #[serde(rename = "rest_time_s")]
    pub rest_time: f64,
    #[serde(rename = "start_temperature_K")]
    pub start_temperature: f64,
    #[serde(rename = "end_temperature_K")]
    pub end_temperature: f64,
}

impl TestProtocol {
    pub fn new(
        thickness: f64,
        heating_rate: f64,
        rest_time: f64,
        start_temperature: f64,
        end_temperature: f64,
    ) -> Result<Self> {
        let p = TestProtocol {
            thickness,
            heating_rate,
            rest_time,
            start_temperature,
            end_temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return bad("thickness must be > 0");
        }
        if !(self.heating_rate.is_finite() && self.heating_rate > 0.0) {
            return bad("heating rate must be > 0");
        }
        if !(self.rest_time.is_finite() && self.rest_time >= 0.0) {
            return bad("rest time must be >= 0");
        }
        if !(self.start_temperature.is_finite() && self.start_temperature > 0.0) {
            return bad("start temperature must be > 0");
        }
        if !(self.end_temperature.is_finite() && self.end_temperature > self.start_temperature) {
            return bad("end temperature must exceed start temperature");
        }
        Ok(())
    }

    /// T(t) = T_min + φ·⟨t − t_rest⟩.
    pub fn temperature_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        Ok(self.temperature_unchecked(t))
    }

    pub(crate) fn temperature_unchecked(&self, t: f64) -> f64 {
        self.start_temperature + self.heating_rate * (t - self.rest_time).max(0.0)
    }

    /// dT/dt: zero while resting, φ afterwards.
    pub fn heating_rate_at(&self, t: f64) -> f64 {
        if t < self.rest_time {
            0.0
        } else {
            self.heating_rate
        }
    }

    /// Duration of the ramp, (T_max − T_min)/φ.
    pub fn ramp_duration(&self) -> f64 {
        (self.end_temperature - self.start_temperature) / self.heating_rate
    }

    /// Time at which T reaches T_max.
    pub fn end_time(&self) -> f64 {
        self.rest_time + self.ramp_duration()
    }

    /// Output times: `n` points uniform over [0, end_time].
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let end = self.end_time();
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { end } else { end * i as f64 / last })
            .collect()
    }
}

/// Discretization and integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub n_temperature_evals: usize,
    pub n_elements: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub series_terms: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n_temperature_evals: 200,
            n_elements: 100,
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            series_terms: 800,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.n_temperature_evals < 2 {
            return bad("at least 2 temperature evaluations are required");
        }
        if self.n_elements < 4 || self.n_elements % 2 != 0 {
            return bad("element count must be even and >= 4");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be > 0");
        }
        if self.series_terms < 1 {
            return bad("series needs at least one term");
        }
        Ok(())
    }
}

fn require_positive_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("temperature must be > 0, got {t}")))
    }
}

/// Lattice diffusivity D_L = D_0·exp(−E_L/RT) [m²/s].
pub fn diffusivity(material: &MaterialParams, temperature: f64) -> Result<f64> {
    require_positive_temperature(temperature)?;
    Ok(diffusivity_unchecked(material, temperature))
}

pub(crate) fn diffusivity_unchecked(material: &MaterialParams, temperature: f64) -> f64 {
    material.diffusion_prefactor
        * (-material.activation_energy / (GAS_CONSTANT * temperature)).exp()
}

/// Sievert's law, C_L = S·√p [mol/m³] for S in mol/(m³·√MPa) and p in MPa.
pub fn sieverts_concentration(solubility: f64, pressure: f64) -> Result<f64> {
    if !(solubility >= 0.0 && pressure >= 0.0) {
        return Err(Error::Domain(
            "solubility and pressure must be non-negative".into(),
        ));
    }
    Ok(solubility * pressure.sqrt())
}

/// N_L = β·N_A·ρ/M [sites/m³] with ρ in g/cm³ and M in g/mol.
pub fn lattice_site_density(sites_per_atom: f64, mass_density: f64, molar_mass: f64) -> Result<f64> {
    if !(sites_per_atom > 0.0 && mass_density > 0.0 && molar_mass > 0.0) {
        return Err(Error::Domain(
            "sites per atom, density and molar mass must be positive".into(),
        ));
    }
    // g/cm³ → kg/m³ and g/mol → kg/mol
    let rho = mass_density * 1e3;
    let molar = molar_mass * 1e-3;
    Ok(sites_per_atom * AVOGADRO * rho / molar)
}

/// Trap equilibrium constant K_T = exp(−ΔH/RT).
pub fn equilibrium_constant(binding_energy: f64, temperature: f64) -> Result<f64> {
    require_positive_temperature(temperature)?;
    Ok((-binding_energy / (GAS_CONSTANT * temperature)).exp())
}

/// Oriani equilibrium trap occupancy for a given lattice occupancy.
pub fn oriani_trap_occupancy(lattice_occupancy: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lattice_occupancy) {
        return Err(Error::Domain(format!(
            "lattice occupancy must lie in [0, 1), got {lattice_occupancy}"
        )));
    }
    if !(k > 0.0) {
        return Err(Error::Domain("equilibrium constant must be > 0".into()));
    }
    Ok(oriani_occupancy_unchecked(lattice_occupancy, k))
}

/// θ_T = Kθ_L / (1 − θ_L + Kθ_L), algebraically identical to the ratio
/// form but free of overflow for large K.
pub(crate) fn oriani_occupancy_unchecked(lattice_occupancy: f64, k: f64) -> f64 {
    let num = k * lattice_occupancy;
    let den = 1.0 - lattice_occupancy + num;
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
