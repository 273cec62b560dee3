//! Universal constants: the superstable cascade of the folding family, the
//! unstable eigenvalue at a fixed point, and central-interval scaling.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decompspace::{pure_decomposition, Geometry};
use crate::diffspace::FoldingMap;
use crate::error::{Error, Result};
use crate::renorm::{bisect_root, solve_peak_value, DecomposedMap, FixedPointReport};

/// Default finite-difference step on endpoints and peak value.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Relative change at which power iteration stops.
const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 200;

/// Superstable peak values `t_k` of the folding family: `0` is periodic of
/// period `2^k` under `q_{t_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTable {
    pub alpha: f64,
    pub t_values: Vec<f64>,
    /// `delta_k = (t_{k-1} - t_{k-2}) / (t_k - t_{k-1})`, starting at `k = 2`.
    pub delta_estimates: Vec<f64>,
    /// `|d_{k+1} / d_k|` with `d_k = q_{t_k}^{2^(k-1)}(0)`, starting at `k = 1`.
    pub scaling_estimates: Vec<f64>,
}

impl CascadeTable {
    /// Latest ratio estimate.
    pub fn delta(&self) -> f64 {
        *self.delta_estimates.last().expect("cascades have m >= 3")
    }

    pub fn scaling(&self) -> f64 {
        *self.scaling_estimates.last().expect("cascades have m >= 3")
    }

    /// Columns `k,t_k,delta_k`; `delta_k` is empty for `k < 2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t_k,delta_k\n");
        for (k, t) in self.t_values.iter().enumerate() {
            let delta = if k >= 2 { format!("{}", self.delta_estimates[k - 2]) } else { String::new() };
            writeln!(out, "{k},{t},{delta}").expect("writing to a String");
        }
        out
    }
}

fn iterate_fold(q: &FoldingMap, n: usize) -> f64 {
    let mut x = 0.0;
    for _ in 0..n {
        x = q.eval(x);
    }
    x
}

/// Locates `t_0 < ... < t_m` by scanning above the previous value for the
/// first sign change of `t -> q_t^{2^k}(0)` and bisecting. The scan step is a
/// small fraction of the previous gap, so it never jumps a root for any
/// ratio below 500.
pub fn superstable_cascade(alpha: f64, m: usize) -> Result<CascadeTable> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must exceed 1 (got {alpha})")));
    }
    if m < 3 {
        return Err(Error::InvalidConfig(format!("cascade needs m >= 3 (got {m})")));
    }
    if m > 24 {
        return Err(Error::InvalidConfig(format!("cascade depth {m} exceeds double precision")));
    }
    let mut ts = vec![0.5];
    for k in 1..=m {
        let prev = ts[k - 1];
        let gap = if k == 1 { 1.0 - prev } else { prev - ts[k - 2] };
        let period = 1usize << k;
        let g = |t: f64| iterate_fold(&FoldingMap::new(alpha, t), period);
        let step = gap / 500.0;
        let mut lo = prev + step;
        let lo_value = g(lo);
        let mut found = None;
        for i in 2..=500 {
            let hi = (prev + i as f64 * step).min(1.0);
            if (g(hi) > 0.0) != (lo_value > 0.0) {
                found = Some(hi);
                break;
            }
            lo = hi;
        }
        let hi = found.ok_or_else(|| Error::Bracket(format!("superstable value of period 2^{k}")))?;
        let t = bisect_root(lo, hi, lo_value > 0.0, 0.0, |t| Ok(g(t)))?;
        ts.push(t);
    }
    let delta_estimates = (2..=m)
        .map(|k| (ts[k - 1] - ts[k - 2]) / (ts[k] - ts[k - 1]))
        .collect();
    let d: Vec<f64> = (1..=m)
        .map(|k| iterate_fold(&FoldingMap::new(alpha, ts[k]), 1 << (k - 1)))
        .collect();
    let scaling_estimates = d.windows(2).map(|w| (w[1] / w[0]).abs()).collect();
    Ok(CascadeTable {
        alpha,
        t_values: ts,
        delta_estimates,
        scaling_estimates,
    })
}

/// Outcome of a power iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Eigenvalue estimate after each iteration.
    pub trace: Vec<f64>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dominant eigenvalue of the linear map `jvp` by power iteration from
/// `start`, normalizing in the sup norm.
fn power_iteration(start: Vec<f64>, mut jvp: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<EigenEstimate> {
    let scale = sup(&start);
    let mut v: Vec<f64> = start.iter().map(|x| x / scale).collect();
    let mut trace = Vec::new();
    for iteration in 1..=POWER_MAX_ITER {
        let w = jvp(&v)?;
        let dot: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = sup(&w);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonConvergence {
                stage: "power iteration",
                iterations: iteration,
                last: norm,
                trace,
            });
        }
        let estimate = norm.copysign(dot);
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| (estimate - prev).abs() <= POWER_TOL * estimate.abs());
        trace.push(estimate);
        if converged {
            return Ok(EigenEstimate {
                value: estimate,
                iterations: iteration,
                trace,
            });
        }
        v = w.iter().map(|x| x / norm).collect();
    }
    Err(Error::NonConvergence {
        stage: "power iteration",
        iterations: POWER_MAX_ITER,
        last: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

/// `(g, t) -> (d(pure(g), t), rho(pure(g), t))` in endpoint coordinates.
fn state_map(template: &Geometry, alpha: f64, grid: usize, tol: f64, x: &[f64]) -> Result<Vec<f64>> {
    let (coords, t) = x.split_at(x.len() - 1);
    let g = template.with_coordinates(coords)?;
    let pure = pure_decomposition(&g, alpha, grid, tol)?;
    let f = DecomposedMap::new(pure, t[0], alpha)?;
    let mut out = f.dynamical_geometry()?.coordinates();
    out.push(f.peak_value_rho()?);
    Ok(out)
}

/// Dominant eigenvalue of the finite-difference Jacobian of the state map at
/// a converged report, using central differences with step `eps`.
pub fn unstable_eigenvalue(report: &FixedPointReport, eps: f64) -> Result<EigenEstimate> {
    let alpha = report.alpha;
    let grid = report.grid();
    let tol = 1e-12;
    let mut x = report.geometry.coordinates();
    x.push(report.t_star);
    // start along the peak value, the expected unstable direction
    let mut start = vec![0.0; x.len()];
    *start.last_mut().expect("nonempty") = 1.0;
    power_iteration(start, |v| {
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + s * b).collect() };
        let plus = state_map(&report.geometry, alpha, grid, tol, &shifted(eps))?;
        let minus = state_map(&report.geometry, alpha, grid, tol, &shifted(-eps))?;
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
    })
}

/// Fixed points `p_k` of successive renormalizations of the fixed-point map,
/// re-solving the peak value at each step. In original coordinates the
/// central intervals nest with `|S_2^(k+1)| / |S_2^(k)| = p_{k+1}`.
pub fn scaling_ratios(report: &FixedPointReport, levels: usize) -> Result<Vec<f64>> {
    let mut f = report.map()?;
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        let step = f.renormalize()?;
        let next = step.renormalized.decomposition().clone();
        let t = solve_peak_value(&next, report.alpha)?.t;
        f = step.renormalized.with_peak(t)?;
        out.push(f.fixed_point_p()?);
    }
    Ok(out)
}
