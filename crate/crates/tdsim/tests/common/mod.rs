#![allow(dead_code)]

use std::fmt::Write;

use tdsim_core::domain::{MaterialParams, NumericsConfig, TestProtocol, TrapSpec};
use tdsim_core::project::Project;
use tdsim_core::result::ModelKind;

/// Thin iron foil with a shallow and a deep trap.
pub fn drexler_project() -> Project {
    let m = MaterialParams::new(5630.0, 0.133e-6, 55.847, 7.8474, 1.2291e29, 0.1).unwrap();
    let traps = vec![
        TrapSpec::new(6.0221e25, -30e3, &m).unwrap(),
        TrapSpec::new(6.0221e24, -70e3, &m).unwrap(),
    ];
    let p = TestProtocol::new(1e-3, 2.0, 0.0, 293.0, 1000.0).unwrap();
    Project::new(m, p, traps)
}

/// Same as `drexler_project` with a coarse output grid for quick fits.
pub fn coarse_project() -> Project {
    let mut p = drexler_project();
    p.numerics = NumericsConfig {
        n_temperature_evals: 60,
        n_elements: 20,
        ..NumericsConfig::default()
    };
    p
}

/// Ramp part of the project's Oriani spectrum as "T,deltaC" lines.
pub fn synthetic_data(project: &Project) -> String {
    let s = project.forward(ModelKind::Oriani).spectrum().unwrap();
    let mut out = String::from("T [K],deltaC [mol/(m3*s)]\n");
    let mut last = f64::NEG_INFINITY;
    for k in 0..s.len() {
        if s.time[k] >= s.protocol.rest_time && s.temperature[k] > last {
            last = s.temperature[k];
            writeln!(out, "{:.10e},{:.10e}", s.temperature[k], s.total[k]).unwrap();
        }
    }
    out
}

/// Columns of a CSV file written by the simulator, header skipped.
pub fn read_columns(text: &str) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(1) {
        for (i, v) in line.split(',').enumerate() {
            if cols.len() <= i {
                cols.push(Vec::new());
            }
            cols[i].push(v.trim().parse().unwrap());
        }
    }
    cols
}
