//! McNabb–Foster kinetic trapping: lattice diffusion coupled to one
//! capture/release equation per trap type and node.
//!
//! ```text
//! ∂θ_T/∂t = k·θ_L(1 − θ_T) − p·θ_T(1 − θ_L)
//! ∂θ_L/∂t = D_L ∂²θ_L/∂x² − Σ (N_T/N_L)·∂θ_T/∂t
//! ```
//!
//! with k = ν_t·exp(−E_t/RT) and p = ν_d·exp(−E_d/RT). The state is stored
//! node by node, `[u, θ_T1 .. θ_Tm]`, so the Jacobian half-bandwidth is m + 1.

use crate::domain::{
    equilibrium_constant, oriani_occupancy_unchecked, validate_traps, MaterialParams, NumericsConfig,
    TestProtocol, TrapSpec, AVOGADRO, GAS_CONSTANT,
};
use crate::error::{Error, Result};
use crate::mol::{bdf_options, schedule, timeline};
use crate::nondim::nondimensionalize;
use crate::ode::{integrate, BandMatrix, OdeSystem};
use crate::result::{uniform_grid, ModelKind, SimulationResult};

/// Trap-to-lattice density ratio above which dropping N_L/(N_L + N_T)
/// is questionable.
const DILUTE_TRAP_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct McNabbFosterProblem {
    pub material: MaterialParams,
    pub traps: Vec<TrapSpec>,
    pub protocol: TestProtocol,
    pub numerics: NumericsConfig,
}

impl McNabbFosterProblem {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        validate_traps(&self.traps)?;
        self.protocol.validate()?;
        self.numerics.validate()?;
        for t in &self.traps {
            if t.trapping_energy < 0.0 || t.detrapping_energy < 0.0 {
                return Err(Error::InvalidParameter(
                    "trap activation energies must be >= 0".into(),
                ));
            }
            let ratio = t.density / self.material.lattice_sites;
            if ratio > DILUTE_TRAP_LIMIT {
                log::warn!("N_T/N_L = {ratio:.3} is not small; the dilute-trap reduction may be inaccurate");
            }
        }
        Ok(())
    }
}

/// θ_T at t = 0: the override when present, else equilibrium with θ_L⁰ at T₀.
pub fn initial_trap_occupancy(trap: &TrapSpec, material: &MaterialParams, start_temperature: f64) -> Result<f64> {
    if let Some(theta) = trap.initial_occupancy {
        return Ok(theta);
    }
    let k = equilibrium_constant(trap.binding_energy, start_temperature)?;
    Ok(oriani_occupancy_unchecked(material.initial_lattice_occupancy(), k))
}

/// Capture and release rates (k, p) [1/s] at temperature T.
pub fn rate_constants(trap: &TrapSpec, temperature: f64) -> Result<(f64, f64)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Domain(format!("temperature must be > 0, got {temperature}")));
    }
    let rt = GAS_CONSTANT * temperature;
    Ok((
        trap.trapping_frequency * (-trap.trapping_energy / rt).exp(),
        trap.detrapping_frequency * (-trap.detrapping_energy / rt).exp(),
    ))
}

/// Occupancy at which capture and release balance for frozen (k, p).
pub fn kinetic_fixed_point(lattice_occupancy: f64, k: f64, p: f64) -> f64 {
    let capture = k * lattice_occupancy;
    capture / (capture + p * (1.0 - lattice_occupancy))
}

struct ScaledTrap {
    density: f64,
    trapping_energy: f64,
    detrapping_energy: f64,
    trapping_frequency: f64,
    detrapping_frequency: f64,
}

struct McNabbFosterSystem {
    n_elements: usize,
    /// θ_L = reference·u
    reference: f64,
    activation: f64,
    heating_rate: f64,
    rest: f64,
    traps: Vec<ScaledTrap>,
}

impl McNabbFosterSystem {
    fn stride(&self) -> usize {
        self.traps.len() + 1
    }

    fn conditions(&self, t: f64) -> (f64, Vec<(f64, f64)>) {
        let (temp, _) = schedule(t, self.rest, self.heating_rate);
        let d = (-self.activation / temp).exp();
        let rates = self
            .traps
            .iter()
            .map(|tr| {
                (
                    tr.trapping_frequency * (-tr.trapping_energy / temp).exp(),
                    tr.detrapping_frequency * (-tr.detrapping_energy / temp).exp(),
                )
            })
            .collect();
        (d, rates)
    }
}

impl OdeSystem for McNabbFosterSystem {
    fn dim(&self) -> usize {
        (self.n_elements + 1) * self.stride()
    }

    fn bandwidth(&self) -> usize {
        self.stride()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n_elements;
        let s = self.stride();
        let (d, rates) = self.conditions(t);
        let n2 = (n * n) as f64;
        for i in 0..=n {
            let base = i * s;
            let u = y[base];
            let face = i == 0 || i == n;
            let theta = if face { 0.0 } else { self.reference * u };
            let mut sink = 0.0;
            for (j, (tr, &(k, p))) in self.traps.iter().zip(&rates).enumerate() {
                let occ = y[base + 1 + j];
                let r = k * theta * (1.0 - occ) - p * occ * (1.0 - theta);
                dy[base + 1 + j] = r;
                sink += tr.density * r;
            }
            dy[base] = if face {
                0.0
            } else {
                d * n2 * (y[base + s] - 2.0 * u + y[base - s]) - sink / self.reference
            };
        }
    }

    fn jacobian(&self, t: f64, y: &[f64], _f0: &[f64], jac: &mut BandMatrix) {
        let n = self.n_elements;
        let s = self.stride();
        let (d, rates) = self.conditions(t);
        let n2 = (n * n) as f64;
        jac.fill_zero();
        for i in 0..=n {
            let base = i * s;
            let face = i == 0 || i == n;
            let theta = if face { 0.0 } else { self.reference * y[base] };
            let mut du_du = -2.0 * d * n2;
            for (j, (tr, &(k, p))) in self.traps.iter().zip(&rates).enumerate() {
                let occ = y[base + 1 + j];
                let row = base + 1 + j;
                let dr_docc = -k * theta - p * (1.0 - theta);
                jac.set(row, row, dr_docc);
                if !face {
                    let dr_du = self.reference * (k * (1.0 - occ) + p * occ);
                    jac.set(row, base, dr_du);
                    du_du -= tr.density * dr_du / self.reference;
                    jac.set(base, row, -tr.density * dr_docc / self.reference);
                }
            }
            if !face {
                jac.set(base, base, du_du);
                jac.set(base, base - s, d * n2);
                jac.set(base, base + s, d * n2);
            }
        }
    }
}

pub fn solve_mcnabb_foster(problem: &McNabbFosterProblem) -> Result<SimulationResult> {
    problem.validate()?;
    let McNabbFosterProblem {
        material,
        traps,
        protocol,
        numerics,
    } = problem;
    let nd = nondimensionalize(material, traps, protocol);
    let line = timeline(protocol, numerics, nd.scales.time());
    let n = numerics.n_elements;
    let m = traps.len();
    let stride = m + 1;
    let x = uniform_grid(protocol.thickness, n);
    let theta0 = nd.initial_lattice_occupancy;
    let initial_trap: Vec<f64> = traps
        .iter()
        .map(|t| initial_trap_occupancy(t, material, protocol.start_temperature))
        .collect::<Result<_>>()?;
    // scale for the lattice unknown; falls back to the trapped content when
    // the lattice starts empty
    let reference = if theta0 > 0.0 {
        theta0
    } else {
        nd.traps
            .iter()
            .zip(&initial_trap)
            .map(|(t, th)| t.density * th)
            .fold(0.0, f64::max)
    };

    let states: Vec<Vec<f64>> = if reference == 0.0 {
        vec![vec![0.0; (n + 1) * stride]; line.times.len()]
    } else {
        let sys = McNabbFosterSystem {
            n_elements: n,
            reference,
            activation: nd.activation_energy,
            heating_rate: nd.heating_rate,
            rest: nd.rest_time,
            traps: nd
                .traps
                .iter()
                .map(|t| ScaledTrap {
                    density: t.density,
                    trapping_energy: t.trapping_energy,
                    detrapping_energy: t.detrapping_energy,
                    trapping_frequency: t.trapping_frequency,
                    detrapping_frequency: t.detrapping_frequency,
                })
                .collect(),
        };
        let mut y0 = vec![0.0; (n + 1) * stride];
        for i in 0..=n {
            y0[i * stride] = if i == 0 || i == n { 0.0 } else { theta0 / reference };
            for j in 0..m {
                y0[i * stride + 1 + j] = initial_trap[j];
            }
        }
        let sol = integrate(
            &sys,
            0.0,
            &y0,
            &line.scaled_outputs,
            &line.scaled_breakpoints,
            bdf_options(numerics),
        )?;
        log::debug!("mcnabb-foster: {:?}", sol.stats);
        sol.states
    };

    let lattice_cap = material.lattice_capacity();
    let capacities: Vec<f64> = traps.iter().map(|t| t.density / AVOGADRO).collect();
    let mut lattice = Vec::with_capacity(states.len());
    let mut trapped = vec![Vec::with_capacity(states.len()); m];
    for (k, state) in states.iter().enumerate() {
        if k == 0 {
            lattice.push(vec![material.initial_concentration; n + 1]);
            for (j, field) in trapped.iter_mut().enumerate() {
                field.push(vec![capacities[j] * initial_trap[j]; n + 1]);
            }
            continue;
        }
        lattice.push(
            (0..=n)
                .map(|i| reference * state[i * stride] * lattice_cap)
                .collect(),
        );
        for (j, field) in trapped.iter_mut().enumerate() {
            field.push((0..=n).map(|i| capacities[j] * state[i * stride + 1 + j]).collect());
        }
    }

    let result = SimulationResult {
        model: ModelKind::McNabbFoster,
        material: *material,
        traps: traps.clone(),
        protocol: *protocol,
        x,
        time: line.times,
        temperature: line.temperatures,
        lattice,
        trapped,
    };
    result.check_occupancy(10.0 * numerics.abs_tol)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::finite_difference_jacobian;
    use approx::assert_relative_eq;

    fn legrand_trap() -> TrapSpec {
        TrapSpec::from_energies(1.2e24, 19_290.0, 53_690.0, 1e8, 1e13).unwrap()
    }

    #[test]
    fn rate_constants_without_barriers_are_frequencies() {
        let t = TrapSpec::from_energies(1e24, 0.0, 1.0, 3e5, 7e9).unwrap();
        let (k, p) = rate_constants(&TrapSpec { detrapping_energy: 0.0, ..t }, 500.0).unwrap();
        assert_eq!(k, 3e5);
        assert_eq!(p, 7e9);
        assert!(rate_constants(&t, 0.0).is_err());
    }

    #[test]
    fn legrand_release_rate_at_400_k() {
        let (_, p) = rate_constants(&legrand_trap(), 400.0).unwrap();
        let expected = 1e13 * (-53_690.0f64 / (8.31446 * 400.0)).exp();
        assert_relative_eq!(p, expected, max_relative = 1e-14);
        assert_relative_eq!(p, 9.8e5, max_relative = 0.02);
    }

    #[test]
    fn equal_frequencies_give_equilibrium_ratio() {
        let m = MaterialParams::bcc_iron();
        let t = TrapSpec::new(1e24, -40e3, &m).unwrap();
        let (k, p) = rate_constants(&t, 350.0).unwrap();
        assert_relative_eq!(k / p, equilibrium_constant(-40e3, 350.0).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn initial_occupancy_policy() {
        let mut m = MaterialParams::bcc_iron();
        let t = TrapSpec::new(1e24, -40e3, &m).unwrap();
        assert_eq!(initial_trap_occupancy(&t.with_initial_occupancy(1.0), &m, 293.0).unwrap(), 1.0);
        let th = initial_trap_occupancy(&t, &m, 293.0).unwrap();
        let k = equilibrium_constant(-40e3, 293.0).unwrap();
        assert_relative_eq!(th, oriani_occupancy_unchecked(m.initial_lattice_occupancy(), k), max_relative = 1e-15);
        m.initial_concentration = 0.0;
        assert_eq!(initial_trap_occupancy(&t, &m, 293.0).unwrap(), 0.0);
    }

    #[test]
    fn detailed_balance_matches_equilibrium() {
        let m = MaterialParams::bcc_iron();
        let t = TrapSpec::new(1e24, -45e3, &m).unwrap();
        for (theta, temp) in [(1e-7, 300.0), (3e-5, 420.0), (0.01, 650.0), (0.2, 900.0), (0.5, 1200.0)] {
            let (k, p) = rate_constants(&t, temp).unwrap();
            let fixed = kinetic_fixed_point(theta, k, p);
            let eq = oriani_occupancy_unchecked(theta, equilibrium_constant(-45e3, temp).unwrap());
            assert!((fixed - eq).abs() <= 1e-10 * eq, "{theta} {temp}: {fixed} vs {eq}");
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let sys = McNabbFosterSystem {
            n_elements: 6,
            reference: 1e-4,
            activation: 2.0,
            heating_rate: 0.2,
            rest: 0.0,
            traps: vec![
                ScaledTrap {
                    density: 1e-3,
                    trapping_energy: 2.0,
                    detrapping_energy: 12.0,
                    trapping_frequency: 1e6,
                    detrapping_frequency: 1e6,
                },
                ScaledTrap {
                    density: 2e-3,
                    trapping_energy: 2.0,
                    detrapping_energy: 9.0,
                    trapping_frequency: 1e4,
                    detrapping_frequency: 3e4,
                },
            ],
        };
        let dim = sys.dim();
        let y: Vec<f64> = (0..dim).map(|i| 0.2 + 0.05 * ((i * 7) % 11) as f64).collect();
        let mut f0 = vec![0.0; dim];
        sys.rhs(3.0, &y, &mut f0);
        let b = sys.bandwidth();
        let mut a = BandMatrix::zeros(dim, b, b);
        let mut fd = BandMatrix::zeros(dim, b, b);
        sys.jacobian(3.0, &y, &f0, &mut a);
        finite_difference_jacobian(&sys, 3.0, &y, &f0, &mut fd);
        for i in 0..dim {
            for j in i.saturating_sub(b)..=(i + b).min(dim - 1) {
                let (x, z) = (a.get(i, j), fd.get(i, j));
                assert!((x - z).abs() <= 1e-5 * x.abs().max(1.0), "({i},{j}): {x} vs {z}");
            }
        }
    }
}
