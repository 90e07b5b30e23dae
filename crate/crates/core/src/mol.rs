//! Pieces shared by the method-of-lines solvers.

use crate::domain::{NumericsConfig, TestProtocol};
use crate::ode::BdfOptions;

/// Output sampling in physical and scaled time.
pub(crate) struct Timeline {
    pub times: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub scaled_outputs: Vec<f64>,
    pub scaled_breakpoints: Vec<f64>,
}

pub(crate) fn timeline(protocol: &TestProtocol, numerics: &NumericsConfig, time_scale: f64) -> Timeline {
    let times = protocol.sample_times(numerics.n_temperature_evals);
    let temperatures = times.iter().map(|&t| protocol.temperature_unchecked(t)).collect();
    let scaled_outputs = times.iter().map(|t| t / time_scale).collect();
    let scaled_breakpoints = if protocol.rest_time > 0.0 {
        vec![protocol.rest_time / time_scale]
    } else {
        Vec::new()
    };
    Timeline {
        times,
        temperatures,
        scaled_outputs,
        scaled_breakpoints,
    }
}

pub(crate) fn bdf_options(numerics: &NumericsConfig) -> BdfOptions {
    BdfOptions {
        rel_tol: numerics.rel_tol,
        abs_tol: numerics.abs_tol,
        ..BdfOptions::default()
    }
}

/// Scaled temperature and its rate at scaled time `t`. The rate switches
/// on strictly after the rest so that steps ending on the kink see the
/// isothermal branch.
#[inline]
pub(crate) fn schedule(t: f64, rest: f64, heating_rate: f64) -> (f64, f64) {
    if t > rest {
        (1.0 + heating_rate * (t - rest), heating_rate)
    } else {
        (1.0, 0.0)
    }
}
