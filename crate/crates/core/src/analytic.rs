//! Closed-form lattice-only solution by separation of variables.
//!
//! For a slab of thickness L with C(±L/2) = 0 and uniform initial C₀,
//!
//! ```text
//! C(x, t) = (4C₀/π) Σ (−1)ⁿ/(2n+1) · exp(−π²(2n+1)²·D_ft/L²) · cos((2n+1)πx/L)
//! ```
//!
//! where D_ft(t) = ∫₀ᵗ D_L(T(τ)) dτ absorbs the temperature history.

use crate::domain::{diffusivity_unchecked, MaterialParams, NumericsConfig, TestProtocol};
use crate::error::{Error, Result};
use crate::result::{uniform_grid, ModelKind, SimulationResult};
use crate::spectrum::DesorptionSpectrum;
use std::f64::consts::PI;

const QUADRATURE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSolution {
    pub material: MaterialParams,
    pub protocol: TestProtocol,
    pub n_terms: usize,
}

impl SeriesSolution {
    pub fn new(material: MaterialParams, protocol: TestProtocol, n_terms: usize) -> Result<Self> {
        material.validate()?;
        protocol.validate()?;
        if n_terms == 0 {
            return Err(Error::InvalidParameter("series needs at least one term".into()));
        }
        Ok(SeriesSolution {
            material,
            protocol,
            n_terms,
        })
    }

    /// exp(−π²(2n+1)²·D_ft/L²) for every retained term, stopping at the
    /// first term that underflows.
    fn decay_factors(&self, dft: f64) -> impl Iterator<Item = (usize, f64)> {
        let l = self.protocol.thickness;
        let base = PI * PI * dft / (l * l);
        (0..self.n_terms)
            .map(move |n| {
                let m = (2 * n + 1) as f64;
                (n, (-base * m * m).exp())
            })
            .take_while(|&(n, e)| n == 0 || e > 0.0)
    }

    fn concentration_at_dft(&self, x: f64, dft: f64) -> f64 {
        let l = self.protocol.thickness;
        let c0 = self.material.initial_concentration;
        let s: f64 = self
            .decay_factors(dft)
            .map(|(n, e)| {
                let m = (2 * n + 1) as f64;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign / m * e * (m * PI * x / l).cos()
            })
            .sum();
        4.0 * c0 / PI * s
    }

    fn average_at_dft(&self, dft: f64) -> f64 {
        let c0 = self.material.initial_concentration;
        let s: f64 = self
            .decay_factors(dft)
            .map(|(n, e)| {
                let m = (2 * n + 1) as f64;
                e / (m * m)
            })
            .sum();
        8.0 * c0 / (PI * PI) * s
    }

    /// Σ exp(−π²(2n+1)²·D_ft/L²), shared by the rate and the flux.
    fn decay_sum(&self, dft: f64) -> f64 {
        self.decay_factors(dft).map(|(_, e)| e).sum()
    }

    pub fn dft(&self, t: f64) -> Result<f64> {
        dft(&self.protocol, &self.material, t)
    }

    /// Spatially averaged concentration [mol/m³].
    pub fn average(&self, t: f64) -> Result<f64> {
        Ok(self.average_at_dft(self.dft(t)?))
    }

    /// −d(C̄)/dt [mol/(m³·s)], differentiated term by term.
    pub fn desorption_rate(&self, t: f64) -> Result<f64> {
        let dft = self.dft(t)?;
        Ok(self.rate_at(dft, self.protocol.temperature_unchecked(t)))
    }

    fn rate_at(&self, dft: f64, temperature: f64) -> f64 {
        let l = self.protocol.thickness;
        let c0 = self.material.initial_concentration;
        let d = diffusivity_unchecked(&self.material, temperature);
        8.0 * c0 * d / (l * l) * self.decay_sum(dft)
    }

    /// Outflow through one face [mol/(m²·s)].
    pub fn flux(&self, t: f64) -> Result<f64> {
        let dft = self.dft(t)?;
        Ok(self.flux_at(dft, self.protocol.temperature_unchecked(t)))
    }

    fn flux_at(&self, dft: f64, temperature: f64) -> f64 {
        let l = self.protocol.thickness;
        let c0 = self.material.initial_concentration;
        let d = diffusivity_unchecked(&self.material, temperature);
        4.0 * c0 * d / l * self.decay_sum(dft)
    }

    /// ∂C/∂x [mol/m⁴] at position `x`.
    pub fn gradient(&self, x: f64, t: f64) -> Result<f64> {
        self.check_position(x)?;
        let dft = self.dft(t)?;
        let l = self.protocol.thickness;
        let c0 = self.material.initial_concentration;
        let s: f64 = self
            .decay_factors(dft)
            .map(|(n, e)| {
                let m = (2 * n + 1) as f64;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                -sign * e * (m * PI * x / l).sin()
            })
            .sum();
        Ok(4.0 * c0 / l * s)
    }

    fn check_position(&self, x: f64) -> Result<()> {
        let half = 0.5 * self.protocol.thickness;
        if !(x.abs() <= half * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("position {x} outside the slab ±{half}")));
        }
        Ok(())
    }
}

/// ∫₀ᵗ D_L(T(τ)) dτ [m²]. The isothermal rest contributes D_L(T₀)·min(t, t_rest)
/// exactly; the ramp is integrated in temperature by adaptive Simpson.
pub fn dft(protocol: &TestProtocol, material: &MaterialParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let t0 = protocol.start_temperature;
    let rest = diffusivity_unchecked(material, t0) * t.min(protocol.rest_time);
    if t <= protocol.rest_time {
        return Ok(rest);
    }
    let t_end = protocol.temperature_unchecked(t);
    let ramp = adaptive_simpson(|temp| diffusivity_unchecked(material, temp), t0, t_end, QUADRATURE_REL_TOL)
        / protocol.heating_rate;
    Ok(rest + ramp)
}

/// D_ft at every time of an ascending list, accumulating the ramp integral
/// between neighbours.
fn dft_series(protocol: &TestProtocol, material: &MaterialParams, times: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    for &t in times {
        if !(t >= prev_t) {
            return Err(Error::Domain("sample times must be ascending and non-negative".into()));
        }
        let rest_end = protocol.rest_time;
        // isothermal part inside [prev_t, t]
        let iso = (t.min(rest_end) - prev_t.min(rest_end)).max(0.0);
        acc += diffusivity_unchecked(material, protocol.start_temperature) * iso;
        let ta = protocol.temperature_unchecked(prev_t.max(rest_end));
        let tb = protocol.temperature_unchecked(t.max(rest_end));
        if tb > ta {
            acc += adaptive_simpson(|temp| diffusivity_unchecked(material, temp), ta, tb, QUADRATURE_REL_TOL)
                / protocol.heating_rate;
        }
        out.push(acc);
        prev_t = t;
    }
    Ok(out)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    // a coarse pass sets the absolute tolerance scale
    let n = 64;
    let h = (b - a) / n as f64;
    let coarse: f64 = (0..n)
        .map(|i| {
            let x0 = a + i as f64 * h;
            simpson(f(x0), f(x0 + 0.5 * h), f(x0 + h), x0, x0 + h)
        })
        .sum();
    let tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Lattice concentration [mol/m³] at position `x` and time `t`.
pub fn lattice_concentration(sol: &SeriesSolution, x: f64, t: f64) -> Result<f64> {
    sol.check_position(x)?;
    let dft = sol.dft(t)?;
    Ok(sol.concentration_at_dft(x, dft))
}

/// Spectrum on `numerics.n_temperature_evals` equally spaced times.
pub fn lattice_spectrum(sol: &SeriesSolution, numerics: &NumericsConfig) -> Result<DesorptionSpectrum> {
    numerics.validate()?;
    let time = sol.protocol.sample_times(numerics.n_temperature_evals);
    let temperature: Vec<f64> = time.iter().map(|&t| sol.protocol.temperature_unchecked(t)).collect();
    let dfts = dft_series(&sol.protocol, &sol.material, &time)?;
    let total: Vec<f64> = dfts
        .iter()
        .zip(&temperature)
        .map(|(&d, &temp)| sol.rate_at(d, temp))
        .collect();
    let flux: Vec<f64> = dfts
        .iter()
        .zip(&temperature)
        .map(|(&d, &temp)| sol.flux_at(d, temp))
        .collect();
    Ok(DesorptionSpectrum {
        model: ModelKind::Lattice,
        protocol: sol.protocol,
        time,
        temperature,
        lattice: total.clone(),
        total,
        trapped: Vec::new(),
        flux,
    })
}

/// Samples the series on the spatial grid of `numerics`. The first sample
/// is the exact initial condition rather than the truncated series.
pub fn lattice_field(sol: &SeriesSolution, numerics: &NumericsConfig) -> Result<SimulationResult> {
    numerics.validate()?;
    let time = sol.protocol.sample_times(numerics.n_temperature_evals);
    let temperature: Vec<f64> = time.iter().map(|&t| sol.protocol.temperature_unchecked(t)).collect();
    let x = uniform_grid(sol.protocol.thickness, numerics.n_elements);
    let dfts = dft_series(&sol.protocol, &sol.material, &time)?;
    let last = x.len() - 1;
    let lattice = dfts
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            x.iter()
                .enumerate()
                .map(|(i, &xi)| {
                    if k == 0 {
                        sol.material.initial_concentration
                    } else if i == 0 || i == last {
                        0.0
                    } else {
                        sol.concentration_at_dft(xi, d)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SimulationResult {
        model: ModelKind::Lattice,
        material: sol.material,
        traps: Vec::new(),
        protocol: sol.protocol,
        x,
        time,
        temperature,
        lattice,
        trapped: Vec::new(),
    })
}
