//! Inertia-weight particle swarm minimiser over a box.
//!
//! One ChaCha stream drives every random draw, in particle then dimension
//! order. Evaluations run on the rayon pool but their results are gathered
//! by index, so the trajectory does not depend on the thread count.

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoOptions {
    pub max_iterations: usize,
    pub population: usize,
    /// Minimum improvement of the best value over `stall_window` iterations.
    pub tolerance: f64,
    pub stall_window: usize,
    pub seed: u64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    #[serde(default)]
    pub topology: Topology,
}

/// Whose best position pulls each particle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// The best of the particle and its two index neighbours on a ring.
    /// Information spreads slowly, which keeps the swarm from collapsing
    /// onto the first good basin.
    #[default]
    Ring,
    /// The best of the whole swarm.
    Global,
}

impl Default for PsoOptions {
    fn default() -> Self {
        PsoOptions {
            max_iterations: 150,
            population: 400,
            tolerance: 1e-11,
            stall_window: 20,
            seed: 0,
            inertia: 0.7298,
            cognitive: 1.4962,
            social: 1.4962,
            topology: Topology::Ring,
        }
    }
}

impl PsoOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.population < 2 {
            return bad("population must be >= 2");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if self.stall_window < 1 {
            return bad("stall_window must be >= 1");
        }
        if ![self.inertia, self.cognitive, self.social].iter().all(|c| c.is_finite()) {
            return bad("swarm coefficients must be finite");
        }
        Ok(())
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Bounds("lower and upper must be non-empty and equal length".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::Bounds(format!("dimension {i}: invalid interval [{l}, {u}]")));
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }
}

/// Progress after one iteration; iteration 0 is the initial swarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative objective evaluations.
    pub evaluations: usize,
    pub best: f64,
    /// Mean over this iteration's successful evaluations.
    pub mean: f64,
    /// Iterations since the best value last improved.
    pub stall: usize,
    /// Evaluations in this iteration that failed and got the penalty.
    pub failed: usize,
    pub best_position: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    Stalled,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub position: Vec<f64>,
    pub value: f64,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
}

/// Minimises `objective` over `bounds`. A `None` from the objective marks a
/// failed evaluation, scored as `penalty`. `progress` sees every iteration
/// record and may stop the run early.
pub fn minimize<F, P>(objective: F, bounds: &Bounds, penalty: f64, opts: &PsoOptions, mut progress: P) -> Result<SwarmResult>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
    P: FnMut(&IterationRecord) -> ControlFlow<()>,
{
    opts.validate()?;
    let dim = bounds.dim();
    let width: Vec<f64> = bounds.upper.iter().zip(&bounds.lower).map(|(u, l)| u - l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(opts.population);
    let mut velocities: Vec<Vec<f64>> = Vec::with_capacity(opts.population);
    for _ in 0..opts.population {
        positions.push((0..dim).map(|d| bounds.lower[d] + rng.gen::<f64>() * width[d]).collect());
        velocities.push((0..dim).map(|d| (2.0 * rng.gen::<f64>() - 1.0) * width[d]).collect());
    }

    let evaluate = |xs: &[Vec<f64>]| -> Vec<Option<f64>> {
        xs.par_iter()
            .map(|x| {
                debug_assert!(bounds.contains(x), "candidate left the box: {x:?}");
                objective(x).filter(|v| v.is_finite())
            })
            .collect()
    };

    let mut evaluations = 0usize;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut personal = positions.clone();
    let mut personal_value = vec![f64::INFINITY; opts.population];
    let mut best_index = 0usize;
    let mut stall = 0usize;

    for iteration in 0..=opts.max_iterations {
        if iteration > 0 {
            let leaders = leaders(opts.topology, &personal_value, best_index);
            for (i, (x, v)) in positions.iter_mut().zip(velocities.iter_mut()).enumerate() {
                let leader = &personal[leaders[i]];
                for d in 0..dim {
                    let r1: f64 = rng.gen();
                    let r2: f64 = rng.gen();
                    let mut vd = opts.inertia * v[d]
                        + opts.cognitive * r1 * (personal[i][d] - x[d])
                        + opts.social * r2 * (leader[d] - x[d]);
                    vd = vd.clamp(-width[d], width[d]);
                    let mut xd = x[d] + vd;
                    if xd < bounds.lower[d] {
                        xd = bounds.lower[d];
                        vd = 0.0;
                    } else if xd > bounds.upper[d] {
                        xd = bounds.upper[d];
                        vd = 0.0;
                    }
                    x[d] = xd;
                    v[d] = vd;
                }
            }
        }

        let values = evaluate(&positions);
        evaluations += values.len();
        let failed = values.iter().filter(|v| v.is_none()).count();
        if failed == values.len() {
            return Err(Error::OptimizationStalled(iteration));
        }
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;

        let previous = personal_value[best_index];
        for (i, value) in values.iter().enumerate() {
            let f = value.unwrap_or(penalty);
            if f < personal_value[i] {
                personal_value[i] = f;
                personal[i].clone_from(&positions[i]);
            }
        }
        for i in 0..opts.population {
            if personal_value[i] < personal_value[best_index] {
                best_index = i;
            }
        }
        let best = personal_value[best_index];
        if iteration > 0 {
            if best < previous {
                stall = 0;
            } else {
                stall += 1;
            }
        }

        let record = IterationRecord {
            iteration,
            evaluations,
            best,
            mean,
            stall,
            failed,
            best_position: personal[best_index].clone(),
        };
        let flow = progress(&record);
        trace.push(record);

        let finish = |termination| SwarmResult {
            position: personal[best_index].clone(),
            value: best,
            trace: trace.clone(),
            termination,
        };
        if flow.is_break() {
            return Ok(finish(Termination::Cancelled));
        }
        if iteration >= opts.stall_window {
            let before = trace[iteration - opts.stall_window].best;
            if (before - best).abs() < opts.tolerance {
                return Ok(finish(Termination::Stalled));
            }
        }
        if iteration == opts.max_iterations {
            return Ok(finish(Termination::MaxIterations));
        }
    }
    unreachable!("the loop returns on its last iteration")
}

/// Index of the personal best each particle follows. Ties go to the lower
/// index so the choice does not depend on evaluation order.
fn leaders(topology: Topology, values: &[f64], global: usize) -> Vec<usize> {
    let n = values.len();
    match topology {
        Topology::Global => vec![global; n],
        Topology::Ring => (0..n)
            .map(|i| {
                let mut best = (i + n - 1) % n;
                for j in [i, (i + 1) % n] {
                    if values[j] < values[best] || (values[j] == values[best] && j < best) {
                        best = j;
                    }
                }
                best
            })
            .collect(),
    }
}
