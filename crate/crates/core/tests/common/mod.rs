//! Validation configurations shared by the integration tests.
#![allow(dead_code)]

use tdsim_core::domain::{MaterialParams, NumericsConfig, TestProtocol, TrapSpec};
use tdsim_core::fit::ExperimentalSpectrum;
use tdsim_core::forward::ForwardProblem;
use tdsim_core::nondim::{dimensionalize, NondimParams, NondimTrap, ReferenceScales};
use tdsim_core::result::ModelKind;
use tdsim_core::spectrum::{argmax, local_maxima, DesorptionSpectrum};

pub fn problem(
    model: ModelKind,
    material: MaterialParams,
    traps: Vec<TrapSpec>,
    protocol: TestProtocol,
) -> ForwardProblem {
    ForwardProblem {
        model,
        material,
        traps,
        protocol,
        numerics: NumericsConfig::default(),
    }
}

/// Lattice-only slab of 100 mm, started cold so the peak is well inside
/// the ramp. C_L⁰ is far above any real N_L/N_A; the linear lattice
/// problem does not depend on N_L, so a large one keeps θ_L⁰ < 1.
pub fn kirchheim(model: ModelKind) -> ForwardProblem {
    let m = MaterialParams::new(4150.0, 0.5e-6, 55.847, 7.8474, 1e31, 1e6).unwrap();
    let p = TestProtocol::new(0.1, 0.001, 0.0, 20.0, 400.0).unwrap();
    problem(model, m, vec![], p)
}

/// Non-dimensional single-trap case: ΔH̄ = −10, θ_L⁰ = 1e−6, Ē_L = 2.75,
/// φ̄ = 0.1, N̄_T = 1e−3, with t̄_rest as given.
pub fn raina(rest_time_bar: f64) -> ForwardProblem {
    let params = NondimParams {
        scales: ReferenceScales {
            temperature: 300.0,
            length: 1e-3,
            diffusivity: 1e-7,
            lattice_sites: 5.1e29,
        },
        activation_energy: 2.75,
        heating_rate: 0.1,
        initial_lattice_occupancy: 1e-6,
        rest_time: rest_time_bar,
        end_temperature: 4.0,
        molar_mass: 55.847,
        mass_density: 7.8474,
        traps: vec![NondimTrap {
            density: 1e-3,
            binding_energy: -10.0,
            trapping_energy: 2.75,
            detrapping_energy: 12.75,
            trapping_frequency: 1e13 * 10.0,
            detrapping_frequency: 1e13 * 10.0,
            initial_occupancy: None,
        }],
    };
    let (m, traps, p) = dimensionalize(&params);
    problem(ModelKind::Oriani, m, traps, p)
}

/// Single trap with kinetic trapping, fully occupied at the start.
pub fn legrand() -> ForwardProblem {
    let m = MaterialParams::new(19290.0, 2.74e-6, 55.847, 7.8474, 1.27e29, 1.0).unwrap();
    let trap = TrapSpec::from_energies(1.2e24, 19290.0, 53690.0, 1e8, 1e13)
        .unwrap()
        .with_initial_occupancy(1.0);
    let p = TestProtocol::new(4e-3, 50.0 / 60.0, 0.0, 293.0, 800.0).unwrap();
    problem(ModelKind::McNabbFoster, m, vec![trap], p)
}

/// Thin iron foil with a shallow and a deep trap.
pub fn drexler(model: ModelKind) -> ForwardProblem {
    let m = MaterialParams::new(5630.0, 0.133e-6, 55.847, 7.8474, 1.2291e29, 0.1).unwrap();
    let traps = vec![
        TrapSpec::new(6.0221e25, -30e3, &m).unwrap(),
        TrapSpec::new(6.0221e24, -70e3, &m).unwrap(),
    ];
    let p = TestProtocol::new(1e-3, 2.0, 0.0, 293.0, 1000.0).unwrap();
    problem(model, m, traps, p)
}

/// Two traps sharing one attempt frequency ν, initially full.
pub fn two_trap_kinetic(model: ModelKind, nu: f64) -> ForwardProblem {
    let m = MaterialParams::new(19290.0, 2.74e-6, 55.847, 7.8474, 1.27e29, 1.0).unwrap();
    let traps = [(1.2e24, 63690.0), (2.2e24, 93690.0)]
        .iter()
        .map(|&(n, e_d)| {
            TrapSpec::from_energies(n, 19290.0, e_d, nu, nu)
                .unwrap()
                .with_initial_occupancy(1.0)
        })
        .collect();
    let p = TestProtocol::new(4e-3, 0.2, 0.0, 293.0, 1000.0).unwrap();
    problem(model, m, traps, p)
}

/// Martensitic steel plate with a long rest before the ramp.
pub fn steel_plate(traps: &[(f64, f64)]) -> ForwardProblem {
    let m = MaterialParams::bcc_iron();
    let traps = traps.iter().map(|&(n, dh)| TrapSpec::new(n, dh, &m).unwrap()).collect();
    let p = TestProtocol::new(6.3e-3, 0.055, 2700.0, 293.0, 893.0).unwrap();
    problem(ModelKind::Oriani, m, traps, p)
}

/// Dominant and deep trap of the fitted steel, as (N_T, ΔH).
pub const STEEL_TRAPS: [(f64, f64); 2] = [(5.19e24, -53.1e3), (7.72e23, -91.7e3)];

/// All four traps fitted to the steel spectrum.
pub const STEEL_TRAPS_ALL: [(f64, f64); 4] = [(5.19e24, -53.1e3), (1.23e24, -68.7e3), (7.72e23, -91.7e3), (5.12e23, -140.1e3)];

/// Ramp part of a simulated spectrum as measurement data.
pub fn as_experiment(s: &DesorptionSpectrum) -> ExperimentalSpectrum {
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for k in 0..s.len() {
        if s.time[k] >= s.protocol.rest_time && ts.last().map_or(true, |&l| s.temperature[k] > l) {
            ts.push(s.temperature[k]);
            vs.push(s.total[k]);
        }
    }
    ExperimentalSpectrum::new(ts, vs, None).unwrap()
}

/// Index of the desorption peak: the highest interior local maximum, so
/// the decaying transient at the first samples is not mistaken for one.
/// Falls back to the global maximum when the series has no interior peak.
pub fn peak_index(values: &[f64]) -> usize {
    local_maxima(values, 0.0)
        .into_iter()
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or_else(|| argmax(values).0)
}
