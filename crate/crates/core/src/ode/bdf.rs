//! Variable-step, variable-order (1–5) BDF integrator for stiff systems
//! with banded Jacobians.
//!
//! The formulas are built directly from the stored solution history, so
//! unequal step sizes need no rescaling: the corrector of order k is the
//! derivative at t_{n+1} of the interpolant through (t_{n+1}, y_{n+1}) and
//! the k previous points, and the predictor extrapolates the interpolant
//! through the k+1 previous points. The local error estimate is
//!
//! ```text
//! LTE ≈ (y_{n+1} − y_pred) / (α₀ · (t_{n+1} − t_{n−k}))
//! ```
//!
//! with α₀ = Σ 1/(t_{n+1} − t_{n+1−j}), which reduces to the textbook
//! constant for uniform steps.

use std::collections::VecDeque;

use super::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// A first-order system y' = f(t, y) whose Jacobian is banded.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Half-bandwidth of ∂f/∂y (same number of sub- and super-diagonals).
    fn bandwidth(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Fills `jac` with ∂f/∂y at (t, y); `f0` is f(t, y).
    ///
    /// The default uses column-grouped finite differences, needing
    /// 2·bandwidth + 1 extra evaluations of `rhs`.
    fn jacobian(&self, t: f64, y: &[f64], f0: &[f64], jac: &mut BandMatrix) {
        finite_difference_jacobian(self, t, y, f0, jac);
    }
}

pub fn finite_difference_jacobian<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    jac: &mut BandMatrix,
) {
    let n = y.len();
    let b = sys.bandwidth();
    let groups = 2 * b + 1;
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut yp = y.to_vec();
    let mut f1 = vec![0.0; n];
    jac.fill_zero();
    for g in 0..groups.min(n) {
        for j in (g..n).step_by(groups) {
            let d = sqrt_eps * y[j].abs().max(1e-2);
            yp[j] = y[j] + d;
        }
        sys.rhs(t, &yp, &mut f1);
        for j in (g..n).step_by(groups) {
            let d = yp[j] - y[j];
            let lo = j.saturating_sub(b);
            let hi = (j + b).min(n - 1);
            for i in lo..=hi {
                jac.set(i, j, (f1[i] - f0[i]) / d);
            }
            yp[j] = y[j];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BdfOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_order: usize,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Upper limit on the step size; `None` means unbounded.
    pub max_step: Option<f64>,
}

impl Default for BdfOptions {
    fn default() -> Self {
        BdfOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            max_order: 5,
            max_steps: 200_000,
            initial_step: None,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BdfStats {
    pub steps: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
    pub jacobians: usize,
}

#[derive(Debug, Clone)]
pub struct BdfSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: BdfStats,
}

struct History {
    t: VecDeque<f64>,
    y: VecDeque<Vec<f64>>,
    cap: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        History {
            t: VecDeque::with_capacity(cap),
            y: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn reset(&mut self, t: f64, y: Vec<f64>) {
        self.t.clear();
        self.y.clear();
        self.t.push_front(t);
        self.y.push_front(y);
    }

    fn push(&mut self, t: f64, y: Vec<f64>) {
        if self.t.len() == self.cap {
            self.t.pop_back();
            self.y.pop_back();
        }
        self.t.push_front(t);
        self.y.push_front(y);
    }

    fn len(&self) -> usize {
        self.t.len()
    }
}

/// Evaluates at `x` the interpolant through points `0..count` of the
/// history (newest first).
fn lagrange_eval(ts: &VecDeque<f64>, ys: &VecDeque<Vec<f64>>, count: usize, x: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..count {
        let mut w = 1.0;
        for m in 0..count {
            if m != j {
                w *= (x - ts[m]) / (ts[j] - ts[m]);
            }
        }
        if w != 0.0 {
            for (o, yj) in out.iter_mut().zip(&ys[j]) {
                *o += w * yj;
            }
        }
    }
}

/// Corrector coefficients for order `k`: α₀ for the new point and αⱼ for
/// history points j = 0..k.
fn bdf_coefficients(t_new: f64, ts: &VecDeque<f64>, k: usize) -> (f64, Vec<f64>) {
    let alpha0: f64 = (0..k).map(|j| 1.0 / (t_new - ts[j])).sum();
    let mut alphas = Vec::with_capacity(k);
    for j in 0..k {
        // derivative at t_new of the Lagrange basis for history point j
        let mut num = 1.0;
        for m in 0..k {
            if m != j {
                num *= t_new - ts[m];
            }
        }
        let mut den = ts[j] - t_new;
        for m in 0..k {
            if m != j {
                den *= ts[j] - ts[m];
            }
        }
        alphas.push(num / den);
    }
    (alpha0, alphas)
}

fn wrms(v: &[f64], weights: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(weights).map(|(a, w)| (a / w).powi(2)).sum();
    (s / v.len().max(1) as f64).sqrt()
}

enum Attempt {
    Accepted { y: Vec<f64>, diff: Vec<f64>, err: f64 },
    ErrorTooLarge { err: f64 },
    NewtonFailed,
}

struct Integrator<'a, S: OdeSystem> {
    sys: &'a S,
    opts: BdfOptions,
    stats: BdfStats,
    jac: BandMatrix,
    n: usize,
}

impl<'a, S: OdeSystem> Integrator<'a, S> {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y, dy);
    }

    fn weights(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| self.opts.abs_tol + self.opts.rel_tol * x.abs().max(y.abs()))
            .collect()
    }

    fn attempt(&mut self, hist: &History, k: usize, h: f64, f_start: &[f64]) -> Attempt {
        let n = self.n;
        let t = hist.t[0];
        let t_new = t + h;
        let mut y_pred = vec![0.0; n];
        let start_mode = hist.len() < k + 1;
        if start_mode {
            for i in 0..n {
                y_pred[i] = hist.y[0][i] + h * f_start[i];
            }
        } else {
            lagrange_eval(&hist.t, &hist.y, k + 1, t_new, &mut y_pred);
        }
        let (alpha0, alphas) = bdf_coefficients(t_new, &hist.t, k);
        let mut psi = vec![0.0; n];
        for (a, yj) in alphas.iter().zip(hist.y.iter()) {
            for (p, v) in psi.iter_mut().zip(yj) {
                *p += a * v;
            }
        }

        let mut f = vec![0.0; n];
        self.rhs(t_new, &y_pred, &mut f);
        if f.iter().any(|v| !v.is_finite()) {
            return Attempt::NewtonFailed;
        }
        self.stats.jacobians += 1;
        let sys = self.sys;
        sys.jacobian(t_new, &y_pred, &f, &mut self.jac);
        self.stats.rhs_evals += 2 * sys.bandwidth() + 1;
        let mut m = BandMatrix::zeros(n, self.jac.lower(), self.jac.upper());
        m.assign_shifted(alpha0, 1.0, &self.jac);
        let lu: BandLu = match m.factorize() {
            Some(lu) => lu,
            None => return Attempt::NewtonFailed,
        };

        let weights = self.weights(&hist.y[0], &y_pred);
        let mut y = y_pred.clone();
        let mut prev_norm = f64::INFINITY;
        let mut converged = false;
        let mut delta = vec![0.0; n];
        for it in 0..5 {
            for i in 0..n {
                delta[i] = -(alpha0 * y[i] + psi[i] - f[i]);
            }
            lu.solve(&mut delta);
            for i in 0..n {
                y[i] += delta[i];
            }
            let norm = wrms(&delta, &weights);
            if !norm.is_finite() {
                break;
            }
            if norm <= 1e-12 {
                converged = true;
                break;
            }
            if it == 0 {
                if norm < 1e-3 {
                    converged = true;
                    break;
                }
            } else {
                let rate = norm / prev_norm;
                if rate >= 0.9 {
                    break;
                }
                if rate / (1.0 - rate) * norm < 0.1 {
                    converged = true;
                    break;
                }
            }
            prev_norm = norm;
            self.rhs(t_new, &y, &mut f);
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        if !converged {
            return Attempt::NewtonFailed;
        }

        let err_factor = if start_mode {
            0.5
        } else {
            1.0 / (alpha0 * (t_new - hist.t[k]))
        };
        let diff: Vec<f64> = y.iter().zip(&y_pred).map(|(a, b)| a - b).collect();
        let weights = self.weights(&hist.y[0], &y);
        let scaled: Vec<f64> = diff.iter().map(|d| d * err_factor).collect();
        let err = wrms(&scaled, &weights);
        if err > 1.0 || !err.is_finite() {
            return Attempt::ErrorTooLarge { err };
        }
        Attempt::Accepted { y, diff, err }
    }
}

/// Integrates from `t0` and returns the solution at every entry of
/// `outputs` (ascending, all ≥ `t0`).
///
/// `breakpoints` are times where f has a kink in t; the integrator lands on
/// each exactly and restarts at order one.
pub fn integrate<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    breakpoints: &[f64],
    opts: BdfOptions,
) -> Result<BdfSolution> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state has wrong length");
    let t_final = outputs.last().copied().unwrap_or(t0);
    let b = sys.bandwidth();
    let mut integ = Integrator {
        sys,
        opts,
        stats: BdfStats::default(),
        jac: BandMatrix::zeros(n, b, b),
        n,
    };

    let mut result_t = Vec::with_capacity(outputs.len());
    let mut result_y = Vec::with_capacity(outputs.len());
    let mut out_idx = 0;
    while out_idx < outputs.len() && outputs[out_idx] <= t0 {
        result_t.push(outputs[out_idx]);
        result_y.push(y0.to_vec());
        out_idx += 1;
    }
    if out_idx == outputs.len() {
        return Ok(BdfSolution {
            times: result_t,
            states: result_y,
            stats: integ.stats,
        });
    }

    let mut stops: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&bp| bp > t0 && bp < t_final)
        .collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.push(t_final);
    let mut stop_idx = 0;

    let max_order = opts.max_order.clamp(1, 5);
    let mut hist = History::new(max_order + 2);
    hist.reset(t0, y0.to_vec());
    let mut f_start = vec![0.0; n];
    integ.rhs(t0, y0, &mut f_start);

    let span = t_final - t0;
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => {
            let w = integ.weights(y0, y0);
            let fnorm = wrms(&f_start, &w);
            if fnorm > 0.0 {
                (0.01 / fnorm).min(1e-3 * span)
            } else {
                1e-3 * span
            }
        }
    };
    h = h.max(1e-14 * span);
    if let Some(hmax) = opts.max_step {
        h = h.min(hmax);
    }

    let mut k = 1usize;
    let mut steps_at_order = 0usize;
    let mut consecutive_failures = 0usize;
    let mut prev_diff: Option<(usize, Vec<f64>)> = None;
    let mut y_out = vec![0.0; n];

    while stop_idx < stops.len() {
        let t = hist.t[0];
        let stop = stops[stop_idx];
        let mut hit_stop = false;
        let remaining = stop - t;
        if h >= remaining * (1.0 - 1e-10) {
            h = remaining;
            hit_stop = true;
        } else if h > 0.5 * remaining && h < remaining {
            // avoid leaving a sliver before the stop
            h = 0.5 * remaining;
        }
        if integ.stats.steps >= opts.max_steps {
            return Err(Error::StepSizeCollapse { time: t, step: h });
        }
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::StepSizeCollapse { time: t, step: h });
        }

        let k_use = k.min(hist.len().max(1));
        match integ.attempt(&hist, k_use, h, &f_start) {
            Attempt::NewtonFailed => {
                integ.stats.newton_failures += 1;
                consecutive_failures += 1;
                h *= 0.25;
                if consecutive_failures >= 2 {
                    k = 1;
                    steps_at_order = 0;
                }
                continue;
            }
            Attempt::ErrorTooLarge { err } => {
                integ.stats.rejected += 1;
                consecutive_failures += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-1.0 / (k_use as f64 + 1.0))).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h *= factor;
                if consecutive_failures >= 3 {
                    k = 1;
                    steps_at_order = 0;
                }
                continue;
            }
            Attempt::Accepted { y, diff, err } => {
                integ.stats.steps += 1;
                consecutive_failures = 0;
                let t_new = if hit_stop { stop } else { t + h };
                let start_mode = hist.len() < k_use + 1;
                hist.push(t_new, y);

                let interp_points = if start_mode { 2 } else { k_use + 1 };
                while out_idx < outputs.len() && outputs[out_idx] <= t_new {
                    let to = outputs[out_idx];
                    if to == t_new {
                        y_out.copy_from_slice(&hist.y[0]);
                    } else {
                        lagrange_eval(&hist.t, &hist.y, interp_points, to, &mut y_out);
                    }
                    result_t.push(to);
                    result_y.push(y_out.clone());
                    out_idx += 1;
                }

                if hit_stop {
                    stop_idx += 1;
                    if stop_idx < stops.len() {
                        // restart across the kink
                        let y_last = hist.y[0].clone();
                        hist.reset(t_new, y_last);
                        integ.rhs(t_new, &hist.y[0].clone(), &mut f_start);
                        k = 1;
                        steps_at_order = 0;
                        prev_diff = None;
                        continue;
                    }
                    break;
                }

                steps_at_order += 1;
                let q = k_use;
                let mut best_order = q;
                let mut best_ratio = 0.9 * (1.0 / err.max(1e-10)).powf(1.0 / (q as f64 + 1.0));

                if q > 1 && hist.len() >= q + 1 {
                    let mut pred = vec![0.0; n];
                    let ts: VecDeque<f64> = hist.t.iter().skip(1).copied().collect();
                    let ys: VecDeque<Vec<f64>> = hist.y.iter().skip(1).cloned().collect();
                    lagrange_eval(&ts, &ys, q, t_new, &mut pred);
                    let alpha0: f64 = (0..q - 1).map(|j| 1.0 / (t_new - ts[j])).sum();
                    let fac = 1.0 / (alpha0 * (t_new - ts[q - 1]));
                    let d: Vec<f64> = hist.y[0].iter().zip(&pred).map(|(a, b)| (a - b) * fac).collect();
                    let w = integ.weights(&hist.y[1], &hist.y[0]);
                    let e_lower = wrms(&d, &w);
                    let r = 0.8 * (1.0 / e_lower.max(1e-10)).powf(1.0 / q as f64);
                    if r > best_ratio {
                        best_ratio = r;
                        best_order = q - 1;
                    }
                }
                if q < max_order && steps_at_order > q + 1 && hist.len() >= q + 3 {
                    if let Some((pq, ref pd)) = prev_diff {
                        if pq == q {
                            let harmonic: f64 = (1..=q + 1).map(|j| 1.0 / j as f64).sum();
                            let fac = 1.0 / (harmonic * (q as f64 + 2.0));
                            let d: Vec<f64> = diff.iter().zip(pd).map(|(a, b)| (a - b) * fac).collect();
                            let w = integ.weights(&hist.y[1], &hist.y[0]);
                            let e_upper = wrms(&d, &w);
                            let r = 0.7 * (1.0 / e_upper.max(1e-10)).powf(1.0 / (q as f64 + 2.0));
                            if r > best_ratio {
                                best_ratio = r;
                                best_order = q + 1;
                            }
                        }
                    }
                }
                prev_diff = Some((q, diff));

                if best_order != q {
                    k = best_order;
                    steps_at_order = 0;
                    prev_diff = None;
                } else {
                    k = q;
                }
                let ratio = if best_order == q && (1.0..1.2).contains(&best_ratio) {
                    1.0
                } else {
                    best_ratio.clamp(0.2, if integ.stats.steps < 10 { 10.0 } else { 2.0 })
                };
                h *= ratio;
                if let Some(hmax) = opts.max_step {
                    h = h.min(hmax);
                }
            }
        }
    }

    Ok(BdfSolution {
        times: result_t,
        states: result_y,
        stats: integ.stats,
    })
}
