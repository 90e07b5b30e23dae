//! Desorption spectra, boundary fluxes, inventories and mass bookkeeping
//! derived from simulated fields.

use serde::{Deserialize, Serialize};

use crate::domain::{diffusivity_unchecked, TestProtocol};
use crate::error::{Error, Result};
use crate::result::{ModelKind, SimulationResult};

/// Desorption rate and flux against time and temperature.
///
/// Rates are the decrease of the specimen-averaged concentration,
/// reported positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesorptionSpectrum {
    pub model: ModelKind,
    pub protocol: TestProtocol,
    /// [s]
    pub time: Vec<f64>,
    /// [K]
    pub temperature: Vec<f64>,
    /// ΔC of all hydrogen [mol/(m³·s)].
    pub total: Vec<f64>,
    /// ΔC of lattice hydrogen [mol/(m³·s)].
    pub lattice: Vec<f64>,
    /// ΔC per trap type [mol/(m³·s)].
    pub trapped: Vec<Vec<f64>>,
    /// Outflow through one face [mol/(m²·s)].
    pub flux: Vec<f64>,
}

impl DesorptionSpectrum {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Index and value of the largest total desorption rate.
    pub fn peak(&self) -> (usize, f64) {
        argmax(&self.total)
    }

    pub fn peak_temperature(&self) -> f64 {
        self.temperature[self.peak().0]
    }

    /// Desorption rate implied by the fluxes through both faces, 2J/L.
    pub fn flux_rate(&self) -> Vec<f64> {
        let l = self.protocol.thickness;
        self.flux.iter().map(|j| 2.0 * j / l).collect()
    }

    /// Largest pointwise difference of the total rates. `other` is
    /// linearly interpolated in time when the grids differ.
    pub fn max_norm_distance(&self, other: &DesorptionSpectrum) -> f64 {
        let same_grid = self.time.len() == other.time.len()
            && self
                .time
                .iter()
                .zip(&other.time)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if same_grid {
            return self
                .total
                .iter()
                .zip(&other.total)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        }
        self.time
            .iter()
            .zip(&self.total)
            .map(|(&t, &a)| (a - interpolate(&other.time, &other.total, t).unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Hydrogen released per trap type by the end of the run [mol/m³].
    pub fn trap_areas(&self) -> Vec<f64> {
        self.trapped.iter().map(|s| trapezoid(&self.time, s)).collect()
    }
}

/// Index and value of the maximum of a series.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Indices of local maxima that rise above both neighbouring minima by at
/// least `prominence`.
pub fn local_maxima(values: &[f64], prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    for i in 1..n - 1 {
        let v = values[i];
        if !(v > values[i - 1] && v >= values[i + 1]) {
            continue;
        }
        // walk left and right until a higher point or the end, tracking minima
        let mut left_min = v;
        let mut j = i;
        while j > 0 {
            j -= 1;
            if values[j] > v {
                break;
            }
            left_min = left_min.min(values[j]);
        }
        let mut right_min = v;
        let mut j = i;
        while j + 1 < n {
            j += 1;
            if values[j] > v {
                break;
            }
            right_min = right_min.min(values[j]);
        }
        if v - left_min.max(right_min) >= prominence {
            peaks.push(i);
        }
    }
    peaks
}

/// Linear interpolation on an ascending grid; `None` outside it.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(ys[0]);
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return Some(ys[k]);
    }
    let w = (x - x0) / (x1 - x0);
    Some(ys[k - 1] + w * (ys[k] - ys[k - 1]))
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Spatial average of one nodal profile by the trapezoid rule.
fn average(x: &[f64], values: &[f64]) -> f64 {
    let width = x[x.len() - 1] - x[0];
    trapezoid(x, values) / width
}

/// Second-order derivative of samples on a possibly non-uniform grid;
/// centred in the interior, one-sided at the ends.
pub fn time_derivative(t: &[f64], a: &[f64]) -> Vec<f64> {
    let n = t.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (a[1] - a[0]) / (t[1] - t[0]);
            return vec![d, d];
        }
        _ => {}
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let h1 = t[k] - t[k - 1];
        let h2 = t[k + 1] - t[k];
        d[k] = -h2 / (h1 * (h1 + h2)) * a[k - 1]
            + (h2 - h1) / (h1 * h2) * a[k]
            + h1 / (h2 * (h1 + h2)) * a[k + 1];
    }
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * a[0] + (h1 + h2) / (h1 * h2) * a[1]
        - h1 / (h2 * (h1 + h2)) * a[2];
    let m = n - 1;
    let (h1, h2) = (t[m - 1] - t[m - 2], t[m] - t[m - 1]);
    d[m] = h2 / (h1 * (h1 + h2)) * a[m - 2] - (h1 + h2) / (h1 * h2) * a[m - 1]
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * a[m];
    d
}

fn require_nodes(r: &SimulationResult) -> Result<()> {
    if r.n_nodes() < 3 {
        return Err(Error::Grid(format!(
            "need at least 3 spatial nodes, got {}",
            r.n_nodes()
        )));
    }
    Ok(())
}

/// Outflow magnitudes through the left and right faces [mol/(m²·s)],
/// from second-order one-sided gradients.
///
/// The first sample is evaluated just after the boundary condition takes
/// hold, with the face values set to zero.
pub fn boundary_fluxes(r: &SimulationResult) -> Result<(Vec<f64>, Vec<f64>)> {
    require_nodes(r)?;
    let n = r.n_nodes();
    let mut left = Vec::with_capacity(r.n_times());
    let mut right = Vec::with_capacity(r.n_times());
    for (k, (profile, &temp)) in r.lattice.iter().zip(&r.temperature).enumerate() {
        let d = diffusivity_unchecked(&r.material, temp);
        let (u0, un) = if k == 0 { (0.0, 0.0) } else { (profile[0], profile[n - 1]) };
        let hl = r.x[1] - r.x[0];
        let hr = r.x[n - 1] - r.x[n - 2];
        // outward gradient magnitude at each face
        let gl = (-3.0 * u0 + 4.0 * profile[1] - profile[2]) / (2.0 * hl);
        let gr = (3.0 * un - 4.0 * profile[n - 2] + profile[n - 3]) / (2.0 * hr);
        left.push(d * gl);
        right.push(-d * gr);
    }
    Ok((left, right))
}

/// Outflow magnitude through the face at x = +L/2.
pub fn boundary_flux(r: &SimulationResult) -> Result<Vec<f64>> {
    Ok(boundary_fluxes(r)?.1)
}

/// Per-species spatial averages at every output time. The second element
/// is the t = 0⁺ average used when differencing: the initial profile with
/// the boundary condition applied.
struct Averages {
    lattice: Vec<f64>,
    trapped: Vec<Vec<f64>>,
    lattice_start: f64,
    trapped_start: Vec<f64>,
}

fn averages(r: &SimulationResult) -> Averages {
    let lattice: Vec<f64> = r.lattice.iter().map(|p| average(&r.x, p)).collect();
    let trapped: Vec<Vec<f64>> = r
        .trapped
        .iter()
        .map(|f| f.iter().map(|p| average(&r.x, p)).collect())
        .collect();
    let pinned = |p: &[f64]| {
        let mut q = p.to_vec();
        let n = q.len();
        q[0] = 0.0;
        q[n - 1] = 0.0;
        average(&r.x, &q)
    };
    let lattice_start = r.lattice.first().map(|p| pinned(p)).unwrap_or(0.0);
    let trapped_start = r
        .trapped
        .iter()
        .zip(&trapped)
        .map(|(f, avg)| {
            if r.model.pins_trapped_boundary() {
                pinned(&f[0])
            } else {
                avg[0]
            }
        })
        .collect();
    Averages {
        lattice,
        trapped,
        lattice_start,
        trapped_start,
    }
}

fn rate_series(t: &[f64], avg: &[f64], start: f64) -> Vec<f64> {
    let mut a = avg.to_vec();
    if let Some(first) = a.first_mut() {
        *first = start;
    }
    time_derivative(t, &a).into_iter().map(|v| -v).collect()
}

/// Desorption spectrum from the negated time derivative of the spatially
/// averaged contents.
pub fn desorption_rate(r: &SimulationResult) -> Result<DesorptionSpectrum> {
    require_nodes(r)?;
    let avg = averages(r);
    let lattice = rate_series(&r.time, &avg.lattice, avg.lattice_start);
    let trapped: Vec<Vec<f64>> = avg
        .trapped
        .iter()
        .zip(&avg.trapped_start)
        .map(|(a, &s)| rate_series(&r.time, a, s))
        .collect();
    let mut total = lattice.clone();
    for tr in &trapped {
        for (t, v) in total.iter_mut().zip(tr) {
            *t += v;
        }
    }
    let flux = boundary_flux(r)?;
    Ok(DesorptionSpectrum {
        model: r.model,
        protocol: r.protocol,
        time: r.time.clone(),
        temperature: r.temperature.clone(),
        total,
        lattice,
        trapped,
        flux,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    pub lattice: f64,
    pub trapped: Vec<f64>,
    pub total: f64,
}

/// Spatially averaged contents at time `t` [mol/m³], interpolated
/// linearly between output samples.
pub fn inventory(r: &SimulationResult, t: f64) -> Result<Inventory> {
    let (t0, t1) = (r.time[0], r.time[r.n_times() - 1]);
    if !(t >= t0 && t <= t1) {
        return Err(Error::Domain(format!("time {t} outside the run [{t0}, {t1}]")));
    }
    let avg = averages(r);
    let lattice = interpolate(&r.time, &avg.lattice, t).expect("inside range");
    let trapped: Vec<f64> = avg
        .trapped
        .iter()
        .map(|a| interpolate(&r.time, a, t).expect("inside range"))
        .collect();
    let total = lattice + trapped.iter().sum::<f64>();
    Ok(Inventory {
        lattice,
        trapped,
        total,
    })
}

/// Hydrogen released over the run per species [mol/m³], integrating the
/// desorption rate in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Released {
    pub lattice: f64,
    pub trapped: Vec<f64>,
    pub total: f64,
}

/// The first output interval contains the square-root singularity of the
/// initial outflow, so its contribution is taken from the exact inventory
/// change. The remainder uses the trapezoid rule on rates differenced from
/// the samples after it, so the transient is not counted twice.
pub fn released(r: &SimulationResult) -> Result<Released> {
    require_nodes(r)?;
    let avg = averages(r);
    let integrate = |avg: &[f64]| -> f64 {
        if avg.len() < 2 {
            return 0.0;
        }
        let tail: Vec<f64> = time_derivative(&r.time[1..], &avg[1..])
            .into_iter()
            .map(|v| -v)
            .collect();
        (avg[0] - avg[1]) + trapezoid(&r.time[1..], &tail)
    };
    let lattice = integrate(&avg.lattice);
    let trapped: Vec<f64> = avg.trapped.iter().map(|a| integrate(a)).collect();
    let total = lattice + trapped.iter().sum::<f64>();
    Ok(Released {
        lattice,
        trapped,
        total,
    })
}

/// |C_total(0) − ∫ΔC_total dt| / C_total(0).
pub fn mass_balance_residual(r: &SimulationResult) -> Result<f64> {
    let initial = inventory(r, r.time[0])?.total;
    if initial == 0.0 {
        return Err(Error::UndefinedResidual);
    }
    let out = released(r)?.total;
    Ok((initial - out).abs() / initial)
}
