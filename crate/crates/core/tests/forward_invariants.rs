//! Conservation and grid convergence of the forward solvers on the
//! validation configurations.
mod common;

use common::*;
use tdsim_core::domain::{equilibrium_constant, oriani_trap_occupancy, NumericsConfig, AVOGADRO};
use tdsim_core::forward::ForwardProblem;
use tdsim_core::result::ModelKind;
use tdsim_core::spectrum::{boundary_fluxes, desorption_rate, inventory, mass_balance_residual, trapezoid};

fn validation_runs() -> Vec<(&'static str, ForwardProblem)> {
    vec![
        ("kirchheim", kirchheim(ModelKind::McNabbFoster)),
        ("raina", raina(0.0)),
        ("raina rested", raina(3.0)),
        ("legrand", legrand()),
        ("drexler oriani", drexler(ModelKind::Oriani)),
        ("drexler mcnabb-foster", drexler(ModelKind::McNabbFoster)),
        ("two traps nu 1e6", two_trap_kinetic(ModelKind::McNabbFoster, 1e6)),
        ("two traps oriani", two_trap_kinetic(ModelKind::Oriani, 1e8)),
    ]
}

fn refined(mut p: ForwardProblem, n_elements: usize) -> ForwardProblem {
    p.numerics.n_elements = n_elements;
    p
}

#[test]
fn mass_balance_residual_is_small_on_every_validation_run() {
    for (name, p) in validation_runs() {
        let r = p.fields().unwrap();
        let residual = mass_balance_residual(&r).unwrap();
        assert!(residual < 0.005, "{name}: residual {residual}");
    }
}

/// Outflow through both faces accounts for the initial content. The first
/// output interval holds the t^(-1/2) singularity of the initial outflow,
/// so it is taken from the inventory change and the faces' flux is
/// integrated from the first sample on.
#[test]
fn face_outflow_matches_initial_content_on_a_refined_grid() {
    for (name, p) in validation_runs() {
        let p = refined(p, 400);
        let r = p.fields().unwrap();
        let (left, right) = boundary_fluxes(&r).unwrap();
        let outflow: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
        let initial = inventory(&r, 0.0).unwrap().total;
        let first = initial - inventory(&r, r.time[1]).unwrap().total;
        let out = first + trapezoid(&r.time[1..], &outflow[1..]) / p.protocol.thickness;
        let rel = (out - initial).abs() / initial;
        assert!(rel < 0.005, "{name}: outflow off by {rel}");
    }
}

#[test]
fn fields_are_mirror_symmetric() {
    for (name, p) in validation_runs() {
        let r = p.fields().unwrap();
        let scale = r.lattice[0].iter().copied().fold(0.0, f64::max);
        let m = r.n_nodes();
        for row in r.lattice.iter().chain(r.trapped.iter().flatten()) {
            for i in 0..m / 2 {
                let d = (row[i] - row[m - 1 - i]).abs();
                assert!(d <= 1e-6 * scale.max(1.0e-300) + 1e-12, "{name}: asymmetry {d} at node {i}");
            }
        }
    }
}

#[test]
fn occupancies_stay_within_bounds() {
    for (name, p) in validation_runs() {
        let eps = 10.0 * p.numerics.abs_tol;
        let r = p.fields().unwrap();
        let (lo_l, hi_l, lo_t, hi_t) = r.occupancy_range();
        assert!(lo_l >= -eps && hi_l <= 1.0 + eps, "{name}: lattice in [{lo_l}, {hi_l}]");
        if r.n_traps() > 0 {
            assert!(lo_t >= -eps && hi_t <= 1.0 + eps, "{name}: traps in [{lo_t}, {hi_t}]");
        }
    }
}

#[test]
fn initial_inventory_matches_the_equilibrium_closed_form() {
    for model in [ModelKind::Oriani, ModelKind::McNabbFoster] {
        let p = drexler(model);
        let r = p.fields().unwrap();
        let inv = inventory(&r, 0.0).unwrap();
        let m = &p.material;
        let theta_l = m.initial_concentration * AVOGADRO / m.lattice_sites;
        assert!((inv.lattice - m.initial_concentration).abs() <= 1e-6 * m.initial_concentration);
        for (trap, &got) in p.traps.iter().zip(&inv.trapped) {
            let k = equilibrium_constant(trap.binding_energy, p.protocol.start_temperature).unwrap();
            let expected = trap.density / AVOGADRO * oriani_trap_occupancy(theta_l, k).unwrap();
            assert!((got - expected).abs() <= 1e-6 * expected, "{model:?}: {got} vs {expected}");
        }
    }
}

#[test]
fn prescribed_initial_occupancy_sets_the_initial_trap_content() {
    let p = legrand();
    let r = p.fields().unwrap();
    let inv = inventory(&r, 0.0).unwrap();
    let expected = p.traps[0].density / AVOGADRO;
    assert!((inv.trapped[0] - expected).abs() <= 1e-6 * expected);
}

#[test]
fn doubling_the_grid_moves_the_peak_rate_by_under_half_a_percent() {
    for (name, p) in validation_runs() {
        let coarse = desorption_rate(&refined(p.clone(), 100).fields().unwrap()).unwrap();
        let fine = desorption_rate(&refined(p, 200).fields().unwrap()).unwrap();
        let (a, b) = (coarse.total[peak_index(&coarse.total)], fine.total[peak_index(&fine.total)]);
        let change = (a - b).abs() / b;
        assert!(change < 0.005, "{name}: peak rate changed by {change}");
    }
}

/// Without traps both numerical models solve the same lattice equation.
#[test]
fn both_models_agree_on_a_trap_free_run() {
    let oriani = kirchheim(ModelKind::Oriani).spectrum().unwrap();
    let mf = kirchheim(ModelKind::McNabbFoster).spectrum().unwrap();
    let d = oriani.max_norm_distance(&mf) / oriani.peak().1;
    assert!(d < 1e-4, "{d}");
}

#[test]
fn invalid_problems_are_rejected_before_solving() {
    let mut p = drexler(ModelKind::Oriani);
    p.numerics = NumericsConfig {
        n_elements: 1,
        ..NumericsConfig::default()
    };
    assert!(p.fields().is_err());
    let mut p = drexler(ModelKind::McNabbFoster);
    p.material.initial_concentration = 2.0 * p.material.lattice_sites / AVOGADRO;
    assert!(p.fields().is_err());
}
