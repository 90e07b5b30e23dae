//! Trap-parameter inference: fit (ΔH, N_T) per trap type to a measured
//! spectrum by minimising the RMS misfit with a particle swarm.
//!
//! The search vector is laid out as `[ΔH_1, log10 N_T1, ΔH_2, ...]` with
//! ΔH in J/mol. During a fit E_t is pinned to E_L and ν_t to ν_d.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::domain::{
    equilibrium_constant, oriani_occupancy_unchecked, TrapSpec, AVOGADRO, MAX_TRAP_TYPES,
};
use crate::error::{Error, Result};
use crate::forward::ForwardProblem;
use crate::pso::{minimize, Bounds, IterationRecord, PsoOptions, Termination};
use crate::result::ModelKind;
use crate::spectrum::{interpolate, trapezoid, DesorptionSpectrum};

/// Global search box for ΔH [J/mol].
pub const GLOBAL_BINDING_RANGE: (f64, f64) = (-150e3, -15e3);
/// Global search box for N_T as fractions of N_L.
pub const GLOBAL_DENSITY_FRACTION: (f64, f64) = (1e-8, 1e-1);
/// Half-width of the local box around each nominal value.
pub const LOCAL_SPAN: f64 = 0.2;
/// Objective value for failed forward solves, per unit of experimental peak.
pub const PENALTY_FACTOR: f64 = 1e6;

const BISECTION_RTOL: f64 = 1e-10;

/// Measured desorption rate against temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalSpectrum {
    /// [K], strictly increasing.
    pub temperature: Vec<f64>,
    /// ΔC [mol/(m³·s)].
    pub rate: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ExperimentalSpectrum {
    pub fn new(temperature: Vec<f64>, rate: Vec<f64>, source: Option<String>) -> Result<Self> {
        let s = ExperimentalSpectrum {
            temperature,
            rate,
            source,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature.len() != self.rate.len() {
            return Err(Error::InvalidParameter(format!(
                "temperature and rate lengths differ ({} vs {})",
                self.temperature.len(),
                self.rate.len()
            )));
        }
        if self.temperature.len() < 4 {
            return Err(Error::InvalidParameter("an experimental spectrum needs at least 4 points".into()));
        }
        if let Some(i) = self
            .temperature
            .iter()
            .chain(&self.rate)
            .position(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!("non-finite value at position {i}")));
        }
        if self.temperature.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("temperatures must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.rate.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Hydrogen released over the measurement [mol/m³]: the time integral
    /// of ΔC at a constant heating rate φ [K/s].
    pub fn content(&self, heating_rate: f64) -> f64 {
        trapezoid(&self.temperature, &self.rate) / heating_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    Global,
    Local,
}

impl std::str::FromStr for BoundsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(BoundsMode::Global),
            "local" => Ok(BoundsMode::Local),
            other => Err(Error::InvalidParameter(format!("unknown bounds mode '{other}'"))),
        }
    }
}

/// `base.traps` holds the starting guesses and fixes the number of trap
/// types being fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub base: ForwardProblem,
    pub experiment: ExperimentalSpectrum,
    pub bounds_mode: BoundsMode,
    /// Re-derive C_L⁰ from the measured content for every candidate.
    pub update_initial_concentration: bool,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.base.model == ModelKind::Lattice {
            return Err(Error::InvalidParameter("the lattice model has no trap parameters to fit".into()));
        }
        let n = self.n_traps();
        if n == 0 || n > MAX_TRAP_TYPES {
            return Err(Error::InvalidParameter(format!(
                "between 1 and {MAX_TRAP_TYPES} trap types can be fitted, got {n}"
            )));
        }
        self.experiment.validate()?;
        self.base.material.validate()?;
        self.base.protocol.validate()?;
        self.base.numerics.validate()?;
        self.bounds().map(|_| ())
    }

    pub fn n_traps(&self) -> usize {
        self.base.traps.len()
    }

    pub fn bounds(&self) -> Result<Bounds> {
        make_bounds(self.bounds_mode, &self.base.traps, self.base.material.lattice_sites)
    }

    pub fn penalty(&self) -> f64 {
        PENALTY_FACTOR * self.experiment.peak().abs()
    }

    /// Trap list for a search vector.
    pub fn decode(&self, x: &[f64]) -> Result<Vec<TrapSpec>> {
        if x.len() != 2 * self.n_traps() {
            return Err(Error::InvalidParameter(format!(
                "expected {} search coordinates, got {}",
                2 * self.n_traps(),
                x.len()
            )));
        }
        let e_l = self.base.material.activation_energy;
        self.base
            .traps
            .iter()
            .zip(x.chunks(2))
            .map(|(nominal, c)| {
                let nu = nominal.detrapping_frequency;
                let mut t = TrapSpec::from_energies(10f64.powf(c[1]), e_l, e_l - c[0], nu, nu)?;
                t.initial_occupancy = nominal.initial_occupancy;
                Ok(t)
            })
            .collect()
    }

    /// C_L⁰ used for a candidate: the base value, or the mass-balance
    /// solution when updating is enabled.
    pub fn initial_concentration_for(&self, traps: &[TrapSpec]) -> Result<f64> {
        if !self.update_initial_concentration {
            return Ok(self.base.material.initial_concentration);
        }
        solve_initial_concentration(
            traps,
            self.base.material.lattice_sites,
            self.experiment.content(self.base.protocol.heating_rate),
            self.base.protocol.start_temperature,
        )
    }

    /// Forward problem for a candidate trap set.
    pub fn forward(&self, traps: &[TrapSpec], initial_concentration: Option<f64>) -> ForwardProblem {
        let mut p = self.base.clone();
        p.traps = traps.to_vec();
        if let Some(c) = initial_concentration {
            p.material.initial_concentration = c;
        }
        p
    }
}

/// Search box in the `[ΔH, log10 N_T]` layout.
///
/// Global mode uses the same wide box for every trap. Local mode spans
/// 80–120 % of each nominal magnitude, keeping the sign of ΔH.
pub fn make_bounds(mode: BoundsMode, nominal: &[TrapSpec], lattice_sites: f64) -> Result<Bounds> {
    if nominal.is_empty() {
        return Err(Error::Bounds("no trap types to bound".into()));
    }
    let mut lower = Vec::with_capacity(2 * nominal.len());
    let mut upper = Vec::with_capacity(2 * nominal.len());
    for (i, t) in nominal.iter().enumerate() {
        match mode {
            BoundsMode::Global => {
                if !(lattice_sites > 0.0 && lattice_sites.is_finite()) {
                    return Err(Error::Bounds(format!("N_L must be > 0, got {lattice_sites}")));
                }
                lower.extend([GLOBAL_BINDING_RANGE.0, (lattice_sites * GLOBAL_DENSITY_FRACTION.0).log10()]);
                upper.extend([GLOBAL_BINDING_RANGE.1, (lattice_sites * GLOBAL_DENSITY_FRACTION.1).log10()]);
            }
            BoundsMode::Local => {
                for (name, v) in [("ΔH", t.binding_energy), ("N_T", t.density)] {
                    if !(v.is_finite() && v != 0.0) {
                        return Err(Error::Bounds(format!(
                            "trap {}: local bounds need a finite non-zero nominal {name}, got {v}",
                            i + 1
                        )));
                    }
                }
                if t.density < 0.0 {
                    return Err(Error::Bounds(format!("trap {}: negative nominal N_T", i + 1)));
                }
                let (a, b) = (t.binding_energy * (1.0 - LOCAL_SPAN), t.binding_energy * (1.0 + LOCAL_SPAN));
                lower.push(a.min(b));
                upper.push(a.max(b));
                lower.push((t.density * (1.0 - LOCAL_SPAN)).log10());
                upper.push((t.density * (1.0 + LOCAL_SPAN)).log10());
            }
        }
    }
    Bounds::new(lower, upper)
}

/// Lattice content C_L⁰ [mol/m³] whose equilibrium with the traps at T₀
/// holds a total of `content`:
///
/// C_L⁰ + Σ (N_T/N_A)·θ_T(C_L⁰·N_A/N_L, K(T₀)) = content
///
/// The left side is strictly increasing, so the root is bracketed in
/// (0, content] and found by bisection.
pub fn solve_initial_concentration(
    traps: &[TrapSpec],
    lattice_sites: f64,
    content: f64,
    start_temperature: f64,
) -> Result<f64> {
    if !(content >= 0.0 && content.is_finite()) {
        return Err(Error::Domain(format!("hydrogen content must be >= 0, got {content}")));
    }
    if !(lattice_sites > 0.0 && lattice_sites.is_finite()) {
        return Err(Error::Domain(format!("N_L must be > 0, got {lattice_sites}")));
    }
    if traps.is_empty() || content == 0.0 {
        return Ok(content);
    }
    let ks: Vec<f64> = traps
        .iter()
        .map(|t| equilibrium_constant(t.binding_energy, start_temperature))
        .collect::<Result<_>>()?;
    let total = |c: f64| {
        let theta = c * AVOGADRO / lattice_sites;
        c + traps
            .iter()
            .zip(&ks)
            .map(|(t, &k)| t.density / AVOGADRO * oriani_occupancy_unchecked(theta, k))
            .sum::<f64>()
    };
    let saturation = lattice_sites / AVOGADRO;
    let mut hi = content.min(saturation * (1.0 - 1e-12));
    if !(total(hi) >= content) {
        return Err(Error::Infeasible(format!(
            "no lattice content below saturation accounts for {content} mol/m3"
        )));
    }
    let mut lo = 0.0;
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if total(mid) < content {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Model ΔC_total as a function of temperature over the heating ramp.
/// Samples from the rest segment collapse onto T₀ and are skipped.
fn ramp_curve(spec: &DesorptionSpectrum) -> (Vec<f64>, Vec<f64>) {
    let rest = spec.protocol.rest_time;
    let mut ts = Vec::with_capacity(spec.len());
    let mut vs = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        if spec.time[k] < rest {
            continue;
        }
        let t = spec.temperature[k];
        if ts.last().is_some_and(|&prev| t <= prev) {
            continue;
        }
        ts.push(t);
        vs.push(spec.total[k]);
    }
    (ts, vs)
}

/// RMS difference between the model, linearly interpolated onto the
/// measured temperatures, and the measurement. The model counts as zero
/// outside its temperature range.
pub fn rmse(experiment: &ExperimentalSpectrum, model: &DesorptionSpectrum) -> f64 {
    let (ts, vs) = ramp_curve(model);
    let sum: f64 = experiment
        .temperature
        .iter()
        .zip(&experiment.rate)
        .map(|(&t, &y)| {
            let m = interpolate(&ts, &vs, t).unwrap_or(0.0);
            (m - y) * (m - y)
        })
        .sum();
    (sum / experiment.len() as f64).sqrt()
}

/// Misfit of one candidate. Forward-solver failures surface as errors;
/// the swarm scores them with [`FitProblem::penalty`].
pub fn objective(problem: &FitProblem, traps: &[TrapSpec], initial_concentration: Option<f64>) -> Result<f64> {
    let spec = problem.forward(traps, initial_concentration).spectrum()?;
    Ok(rmse(&problem.experiment, &spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub traps: Vec<TrapSpec>,
    pub objective: f64,
    /// Inferred C_L⁰ [mol/m³] when updating was enabled.
    pub initial_concentration: Option<f64>,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub evaluations: usize,
    pub failed_evaluations: usize,
}

/// Fits the trap parameters of `problem` with a seeded particle swarm.
/// `progress` is called after every iteration and may cancel the fit.
pub fn run_pso<P>(problem: &FitProblem, opts: &PsoOptions, progress: P) -> Result<FitResult>
where
    P: FnMut(&IterationRecord) -> ControlFlow<()>,
{
    problem.validate()?;
    let bounds = problem.bounds()?;
    let eval = |x: &[f64]| -> Option<f64> {
        let run = || -> Result<f64> {
            let traps = problem.decode(x)?;
            let c0 = problem.initial_concentration_for(&traps)?;
            objective(problem, &traps, Some(c0))
        };
        match run() {
            Ok(v) => Some(v),
            Err(e) => {
                log::debug!("evaluation at {x:?} failed: {e}");
                None
            }
        }
    };
    let swarm = minimize(eval, &bounds, problem.penalty(), opts, progress)?;
    let traps = problem.decode(&swarm.position)?;
    let initial_concentration = if problem.update_initial_concentration {
        Some(problem.initial_concentration_for(&traps)?)
    } else {
        None
    };
    let evaluations = swarm.trace.last().map_or(0, |r| r.evaluations);
    let failed_evaluations = swarm.trace.iter().map(|r| r.failed).sum();
    Ok(FitResult {
        traps,
        objective: swarm.value,
        initial_concentration,
        trace: swarm.trace,
        termination: swarm.termination,
        evaluations,
        failed_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MaterialParams, NumericsConfig, TestProtocol};
    use approx::assert_relative_eq;

    fn trap(n: f64, dh: f64) -> TrapSpec {
        TrapSpec::new(n, dh, &MaterialParams::bcc_iron()).unwrap()
    }

    #[test]
    fn global_box() {
        let b = make_bounds(BoundsMode::Global, &[trap(1e24, -50e3)], 5.1e29).unwrap();
        assert_eq!(b.lower[0], -150e3);
        assert_eq!(b.upper[0], -15e3);
        assert_relative_eq!(10f64.powf(b.lower[1]), 5.1e21, max_relative = 1e-12);
        assert_relative_eq!(10f64.powf(b.upper[1]), 5.1e28, max_relative = 1e-12);
    }

    #[test]
    fn local_box_keeps_sign() {
        let b = make_bounds(BoundsMode::Local, &[trap(1e24, -50e3)], 5.1e29).unwrap();
        assert_relative_eq!(b.lower[0], -60e3, max_relative = 1e-12);
        assert_relative_eq!(b.upper[0], -40e3, max_relative = 1e-12);
        assert_relative_eq!(10f64.powf(b.lower[1]), 0.8e24, max_relative = 1e-12);
        assert_relative_eq!(10f64.powf(b.upper[1]), 1.2e24, max_relative = 1e-12);
    }

    #[test]
    fn local_box_rejects_zero_nominal() {
        let mut t = trap(1e24, -50e3);
        t.binding_energy = 0.0;
        assert!(matches!(
            make_bounds(BoundsMode::Local, &[t], 5.1e29),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn initial_concentration_without_traps_is_the_content() {
        assert_eq!(solve_initial_concentration(&[], 5.1e29, 0.123456789, 293.0).unwrap(), 0.123456789);
        assert_eq!(solve_initial_concentration(&[trap(1e24, -50e3)], 5.1e29, 0.0, 293.0).unwrap(), 0.0);
    }

    #[test]
    fn neutral_trap_has_closed_form() {
        // K = 1 makes θ_T = θ_L, so C_L⁰(1 + N_T/N_L) = content
        let n_l = 5.1e29;
        let mut t = trap(2e28, -1.0);
        t.binding_energy = 0.0;
        let c = solve_initial_concentration(&[t], n_l, 3.0, 293.0).unwrap();
        assert_relative_eq!(c, 3.0 / (1.0 + 2e28 / n_l), max_relative = 1e-9);
    }

    #[test]
    fn initial_concentration_satisfies_the_balance() {
        let n_l = 5.1e29;
        let traps = [trap(5.19e24, -53.1e3), trap(7.72e23, -91.7e3)];
        let content = 10.0;
        let c = solve_initial_concentration(&traps, n_l, content, 293.0).unwrap();
        let theta = c * AVOGADRO / n_l;
        let sum = c + traps
            .iter()
            .map(|t| {
                let k = equilibrium_constant(t.binding_energy, 293.0).unwrap();
                t.density / AVOGADRO * oriani_occupancy_unchecked(theta, k)
            })
            .sum::<f64>();
        assert_relative_eq!(sum, content, max_relative = 1e-8);
    }

    #[test]
    fn content_beyond_trap_and_lattice_capacity_is_infeasible() {
        let n_l = 1e26;
        let r = solve_initial_concentration(&[trap(1e24, -50e3)], n_l, 1e6, 293.0);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    fn flat_spectrum(level: f64) -> DesorptionSpectrum {
        let protocol = TestProtocol::new(1e-3, 1.0, 0.0, 300.0, 400.0).unwrap();
        let time: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let temperature: Vec<f64> = time.iter().map(|t| 300.0 + t).collect();
        let total = vec![level; time.len()];
        DesorptionSpectrum {
            model: ModelKind::Oriani,
            protocol,
            time: time.clone(),
            temperature,
            lattice: total.clone(),
            total,
            trapped: Vec::new(),
            flux: vec![0.0; time.len()],
        }
    }

    #[test]
    fn rmse_of_identical_and_offset_curves() {
        let exp = ExperimentalSpectrum::new(vec![310.0, 320.0, 350.5, 399.0], vec![2.0; 4], None).unwrap();
        assert_eq!(rmse(&exp, &flat_spectrum(2.0)), 0.0);
        assert_relative_eq!(rmse(&exp, &flat_spectrum(2.25)), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn points_outside_the_model_range_count_against_zero() {
        let exp = ExperimentalSpectrum::new(vec![250.0, 320.0, 350.0, 450.0], vec![1.0, 2.0, 2.0, 3.0], None).unwrap();
        let f = rmse(&exp, &flat_spectrum(2.0));
        assert_relative_eq!(f, ((1.0 + 9.0) / 4.0f64).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn experimental_spectrum_validation() {
        assert!(ExperimentalSpectrum::new(vec![1.0, 2.0, 3.0], vec![0.0; 3], None).is_err());
        assert!(ExperimentalSpectrum::new(vec![1.0, 2.0, 2.0, 3.0], vec![0.0; 4], None).is_err());
        assert!(ExperimentalSpectrum::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, f64::NAN, 0.0, 0.0], None).is_err());
    }

    #[test]
    fn content_is_area_over_heating_rate() {
        let exp = ExperimentalSpectrum::new(vec![300.0, 310.0, 320.0, 330.0], vec![1.0; 4], None).unwrap();
        assert_relative_eq!(exp.content(0.5), 60.0, max_relative = 1e-14);
    }

    #[test]
    fn decode_pins_trapping_energy_to_lattice() {
        let m = MaterialParams::bcc_iron();
        let problem = FitProblem {
            base: ForwardProblem {
                model: ModelKind::Oriani,
                material: m,
                traps: vec![trap(1e24, -50e3)],
                protocol: TestProtocol::new(1e-3, 1.0, 0.0, 300.0, 400.0).unwrap(),
                numerics: NumericsConfig::default(),
            },
            experiment: ExperimentalSpectrum::new(vec![300.0, 310.0, 320.0, 330.0], vec![1.0; 4], None).unwrap(),
            bounds_mode: BoundsMode::Global,
            update_initial_concentration: false,
        };
        let t = problem.decode(&[-60e3, 24.0]).unwrap();
        assert_eq!(t[0].trapping_energy, m.activation_energy);
        assert_relative_eq!(t[0].binding_energy, -60e3, max_relative = 1e-12);
        assert_relative_eq!(t[0].density, 1e24, max_relative = 1e-12);
        assert_eq!(t[0].trapping_frequency, t[0].detrapping_frequency);
        assert!(problem.decode(&[1.0]).is_err());
    }
}
