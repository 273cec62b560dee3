//! Decomposed unimodal maps and the dynamical renormalization operator.
//!
//! A decomposed map `(phi, t)` is observed as `f = O(phi) o q_t`. Its
//! renormalization is the first return to the central interval
//! `S_2 = [-p, p]`, conjugated by `h(x) = -p x`. In decomposed form this is
//! `(R_{d(phi, t)}(phi), rho(phi, t))` where `d` pulls `S_1 = [p, b]` and `S_2`
//! back through the decomposition.

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::decompspace::{
    geometric_renormalize, geometric_renormalize_extended, pullback_intervals, pure_decomposition, Decomposition,
    DecompositionRecord, Geometry, GeometryRecord,
};
use crate::diffspace::{FoldingMap, NonlinearityProfile, OrientedInterval};
use crate::error::{Error, Result};

/// Resolution of the coarse peak-value scan.
pub const WINDOW_SCAN_STEP: f64 = 1e-3;
/// Width to which window edges are refined.
pub const WINDOW_EDGE_TOL: f64 = 1e-10;
/// Bisection width for fixed points, side points and peak values.
const ROOT_TOL: f64 = 1e-15;

/// Bisects `f` on `[lo, hi]` given the sign of `f(lo)`; stops at width `tol`
/// or when the midpoint no longer moves.
pub(crate) fn bisect_root(
    mut lo: f64,
    mut hi: f64,
    lo_positive: bool,
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid)? > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The scalar quantities of a renormalizable map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anatomy {
    /// Fixed point in (0, 1).
    pub p: f64,
    /// `f(b) = -p`, `b` in `(p, 1)`.
    pub b: f64,
    /// `S_1(1.) = [l, r] = O(phi)^{-1}([p, b])`.
    pub l: f64,
    pub r: f64,
    pub rho: f64,
}

/// `f = O o q_t` for a fixed composite `O`; cheap to build for every `t`.
#[derive(Clone, Copy)]
pub(crate) struct Observed<'a> {
    o: &'a NonlinearityProfile,
    q: FoldingMap,
}

impl<'a> Observed<'a> {
    pub(crate) fn new(o: &'a NonlinearityProfile, alpha: f64, t: f64) -> Self {
        Self {
            o,
            q: FoldingMap::new(alpha, t),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        self.o.value(self.q.eval(x))
    }

    fn fixed_point(&self) -> Result<f64> {
        let peak = self.eval(0.0);
        if !(peak > 0.0) {
            return Err(Error::NoFixedPoint { peak });
        }
        // f(x) - x decreases on (0, 1)
        bisect_root(0.0, 1.0, true, ROOT_TOL, |x| Ok(self.eval(x) - x))
    }

    fn side_point(&self, p: f64) -> Result<f64> {
        let f_one = self.eval(1.0);
        if f_one > -p {
            return Err(Error::NoSideInterval { f_one, minus_p: -p });
        }
        bisect_root(p, 1.0, true, ROOT_TOL, |x| Ok(self.eval(x) + p))
    }

    fn renormalizable(&self) -> bool {
        self.anatomy().is_ok()
    }

    pub(crate) fn anatomy(&self) -> Result<Anatomy> {
        let p = self.fixed_point()?;
        let b = self.side_point(p)?;
        let peak = self.eval(0.0);
        if peak < p || peak > b {
            return Err(Error::NotRenormalizable {
                t: self.q.t,
                peak,
                p,
                b,
            });
        }
        let l = self.o.preimage(p);
        let r = self.o.preimage(b);
        let rho = ((self.q.peak() - l) / (r - l)).clamp(0.0, 1.0);
        Ok(Anatomy { p, b, l, r, rho })
    }
}

/// A decomposed unimodal map `(phi, t)` with critical exponent `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedMap {
    decomposition: Decomposition,
    composite: NonlinearityProfile,
    t: f64,
    alpha: f64,
}

impl DecomposedMap {
    pub fn new(decomposition: Decomposition, t: f64, alpha: f64) -> Result<Self> {
        let composite = decomposition.compose_all()?;
        Self::from_parts(decomposition, composite, t, alpha)
    }

    /// Trusts that `composite` is `O(decomposition)`.
    pub(crate) fn from_parts(
        decomposition: Decomposition,
        composite: NonlinearityProfile,
        t: f64,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must exceed 1 (got {alpha})")));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!("peak value {t} outside [0, 1]")));
        }
        Ok(Self {
            decomposition,
            composite,
            t,
            alpha,
        })
    }

    pub fn identity(depth: usize, grid: usize, t: f64, alpha: f64) -> Result<Self> {
        Self::new(Decomposition::identity(depth, grid)?, t, alpha)
    }

    /// Same diffeomorphic part, new peak value.
    pub fn with_peak(&self, t: f64) -> Result<Self> {
        Self::from_parts(self.decomposition.clone(), self.composite.clone(), t, self.alpha)
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    /// `O(phi)`.
    pub fn composite(&self) -> &NonlinearityProfile {
        &self.composite
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn folding_map(&self) -> FoldingMap {
        FoldingMap::new(self.alpha, self.t)
    }

    fn observed(&self) -> Observed<'_> {
        Observed::new(&self.composite, self.alpha, self.t)
    }

    /// `f(x) = O(phi)(q_t(x))`.
    pub fn observed_eval(&self, x: f64) -> Result<f64> {
        self.composite.eval(self.folding_map().eval(check_unit(x)?))
    }

    /// The fixed point `p` in (0, 1).
    pub fn fixed_point_p(&self) -> Result<f64> {
        self.observed().fixed_point()
    }

    /// `(b, S_1 = [p, b], S_2 = [-p, p])` for the fixed point `p`.
    pub fn side_interval(&self, p: f64) -> Result<(f64, OrientedInterval, OrientedInterval)> {
        let b = self.observed().side_point(p)?;
        Ok((b, OrientedInterval::preserving(p, b)?, OrientedInterval::reversing(-p, p)?))
    }

    /// `p <= f(0) <= b`. Errors only if there is no fixed point.
    pub fn is_renormalizable(&self) -> Result<bool> {
        match self.observed().anatomy() {
            Ok(_) => Ok(true),
            Err(Error::NotRenormalizable { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn anatomy(&self) -> Result<Anatomy> {
        self.observed().anatomy()
    }

    /// `rho = (q_t(0) - l) / (r - l)` with `[l, r] = S_1(1.)`.
    pub fn peak_value_rho(&self) -> Result<f64> {
        Ok(self.anatomy()?.rho)
    }

    /// `2 t p^alpha / |S_1(1.)|`; agrees with [`Self::peak_value_rho`] because
    /// `q_t(p) = l`.
    pub fn peak_value_rho_closed_form(&self) -> Result<f64> {
        let a = self.anatomy()?;
        Ok(2.0 * self.t * a.p.powf(self.alpha) / (a.r - a.l))
    }

    fn geometry_from(&self, a: &Anatomy) -> Result<Geometry> {
        pullback_intervals(
            &self.decomposition,
            &OrientedInterval::preserving(a.p, a.b)?,
            &OrientedInterval::reversing(-a.p, a.p)?,
        )
    }

    /// `d(phi, t)`: pullbacks of `S_1` and `S_2`.
    pub fn dynamical_geometry(&self) -> Result<Geometry> {
        let a = self.anatomy()?;
        self.geometry_from(&a)
    }

    fn step(&self, extended: bool) -> Result<RenormStep> {
        let a = self.anatomy()?;
        let g = self.geometry_from(&a)?;
        let next = if extended {
            geometric_renormalize_extended(&g, self.alpha, &self.decomposition)?
        } else {
            geometric_renormalize(&g, self.alpha, &self.decomposition)?
        };
        Ok(RenormStep {
            renormalized: DecomposedMap::new(next, a.rho, self.alpha)?,
            geometry_used: g,
            p: a.p,
            b: a.b,
            rho: a.rho,
        })
    }

    /// `R_dyn(phi, t)` at the depth of `phi`.
    pub fn renormalize(&self) -> Result<RenormStep> {
        self.step(false)
    }

    /// `R_dyn(phi, t)` keeping the extra level the operator creates.
    pub fn renormalize_extended(&self) -> Result<RenormStep> {
        self.step(true)
    }

    /// `h^{-1}(f(f(h(x))))` with `h(x) = -p x`, evaluated directly.
    pub fn classical_first_return(&self, x: f64) -> Result<f64> {
        let x = check_unit(x)?;
        let p = self.fixed_point_p()?;
        let f = self.observed();
        Ok(-f.eval(f.eval(-p * x)) / p)
    }
}

fn check_unit(x: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::Domain { value: x })
    }
}

/// One application of the dynamical renormalization operator.
#[derive(Debug, Clone)]
pub struct RenormStep {
    pub renormalized: DecomposedMap,
    pub geometry_used: Geometry,
    pub p: f64,
    pub b: f64,
    pub rho: f64,
}

// ---------------------------------------------------------------------------
// Peak values

/// The connected range of renormalizable peak values found by the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_min: f64,
    pub t_max: f64,
    /// The scan also hit renormalizable values outside `[t_min, t_max]`.
    pub multiple: bool,
}

pub fn renormalization_window(phi: &Decomposition, alpha: f64) -> Result<Window> {
    window_of(&phi.compose_all()?, alpha)
}

/// Edge between a renormalizable `inside` value and a non-renormalizable
/// `outside` value; returns a renormalizable point.
fn refine_edge(o: &NonlinearityProfile, alpha: f64, mut inside: f64, mut outside: f64) -> f64 {
    while (inside - outside).abs() > WINDOW_EDGE_TOL {
        let mid = 0.5 * (inside + outside);
        if Observed::new(o, alpha, mid).renormalizable() {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Scans `t` over [0, 1]; pure decompositions may push the lower edge below
/// one half, so the scan does not start there.
pub(crate) fn window_of(o: &NonlinearityProfile, alpha: f64) -> Result<Window> {
    let steps = (1.0 / WINDOW_SCAN_STEP).round() as usize;
    let hits: Vec<bool> = (0..=steps)
        .map(|k| Observed::new(o, alpha, k as f64 / steps as f64).renormalizable())
        .collect();
    let first = hits.iter().position(|&h| h).ok_or(Error::NoWindow)?;
    let last = first + hits[first..].iter().take_while(|&&h| h).count() - 1;
    let multiple = hits[last + 1..].iter().any(|&h| h);
    let at = |k: usize| k as f64 / steps as f64;
    let t_min = if first == 0 { 0.0 } else { refine_edge(o, alpha, at(first), at(first - 1)) };
    let t_max = if last == steps { 1.0 } else { refine_edge(o, alpha, at(last), at(last + 1)) };
    Ok(Window { t_min, t_max, multiple })
}

/// A solution of `rho(phi, t) = t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSolution {
    pub t: f64,
    pub window: Window,
}

pub fn solve_peak_value(phi: &Decomposition, alpha: f64) -> Result<PeakSolution> {
    solve_peak_on(&phi.compose_all()?, alpha)
}

pub(crate) fn rho_at(o: &NonlinearityProfile, alpha: f64, t: f64) -> Result<f64> {
    Ok(Observed::new(o, alpha, t).anatomy()?.rho)
}

/// `rho - t` is negative at the lower window edge (`rho = 0`) and positive at
/// the upper one (`rho = 1`), so bisection applies.
pub(crate) fn solve_peak_on(o: &NonlinearityProfile, alpha: f64) -> Result<PeakSolution> {
    let window = window_of(o, alpha)?;
    let gap = |t: f64| Ok(rho_at(o, alpha, t)? - t);
    let (lo, hi) = (gap(window.t_min)?, gap(window.t_max)?);
    if !(lo < 0.0 && hi > 0.0) {
        return Err(Error::Bracket(format!(
            "rho - t on [{}, {}]: {lo:.3e}, {hi:.3e}",
            window.t_min, window.t_max
        )));
    }
    let t = bisect_root(window.t_min, window.t_max, false, ROOT_TOL, gap)?;
    Ok(PeakSolution { t, window })
}

/// Solves `rho(t) = target` inside `window`, clamping to the edges.
fn invert_rho(o: &NonlinearityProfile, alpha: f64, window: &Window, target: f64) -> Result<f64> {
    let gap = |t: f64| Ok(rho_at(o, alpha, t)? - target);
    if gap(window.t_min)? >= 0.0 {
        return Ok(window.t_min);
    }
    if gap(window.t_max)? <= 0.0 {
        return Ok(window.t_max);
    }
    bisect_root(window.t_min, window.t_max, false, ROOT_TOL, gap)
}

// ---------------------------------------------------------------------------
// Fixed points and periodic orbits

/// A converged truncation fixed point, or one element of a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportRecord", try_from = "ReportRecord")]
pub struct FixedPointReport {
    pub alpha: f64,
    pub t_star: f64,
    pub geometry: Geometry,
    /// The pure decomposition of `geometry`.
    pub decomposition: Decomposition,
    /// `dist(d(phi*, t*), g*)`.
    pub residual_geometry: f64,
    /// `|rho(phi*, t*) - t*|`, or the distance to the next cycle element's
    /// peak value.
    pub residual_peak: f64,
    pub iterations: usize,
    pub delta_estimate: Option<f64>,
    /// Cycle closure residual for periodic orbits.
    pub closure_residual: Option<f64>,
    /// Per-iteration change of the solver state.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportRecord {
    alpha: f64,
    depth: usize,
    grid: usize,
    t_star: f64,
    residual_geometry: f64,
    residual_peak: f64,
    iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closure_residual: Option<f64>,
    #[serde(default)]
    trace: Vec<f64>,
    geometry: GeometryRecord,
    decomposition: DecompositionRecord,
}

impl From<FixedPointReport> for ReportRecord {
    fn from(r: FixedPointReport) -> Self {
        Self {
            alpha: r.alpha,
            depth: r.decomposition.depth(),
            grid: r.decomposition.grid(),
            t_star: r.t_star,
            residual_geometry: r.residual_geometry,
            residual_peak: r.residual_peak,
            iterations: r.iterations,
            delta_estimate: r.delta_estimate,
            closure_residual: r.closure_residual,
            trace: r.trace,
            geometry: r.geometry.to_record(),
            decomposition: r.decomposition.to_record(r.alpha),
        }
    }
}

impl TryFrom<ReportRecord> for FixedPointReport {
    type Error = Error;

    fn try_from(r: ReportRecord) -> Result<Self> {
        let decomposition = Decomposition::from_record(&r.decomposition)?;
        let geometry = Geometry::from_record(&r.geometry)?;
        if decomposition.depth() != r.depth || geometry.depth() != r.depth {
            return Err(Error::Parse(format!(
                "report depth {} disagrees with its geometry ({}) or decomposition ({})",
                r.depth,
                geometry.depth(),
                decomposition.depth()
            )));
        }
        if decomposition.grid() != r.grid {
            return Err(Error::GridMismatch {
                left: r.grid,
                right: decomposition.grid(),
            });
        }
        Ok(Self {
            alpha: r.alpha,
            t_star: r.t_star,
            geometry,
            decomposition,
            residual_geometry: r.residual_geometry,
            residual_peak: r.residual_peak,
            iterations: r.iterations,
            delta_estimate: r.delta_estimate,
            closure_residual: r.closure_residual,
            trace: r.trace,
        })
    }
}

impl FixedPointReport {
    pub fn depth(&self) -> usize {
        self.decomposition.depth()
    }

    pub fn grid(&self) -> usize {
        self.decomposition.grid()
    }

    /// The observed fixed-point map `(phi*, t*)`.
    pub fn map(&self) -> Result<DecomposedMap> {
        DecomposedMap::new(self.decomposition.clone(), self.t_star, self.alpha)
    }

    /// Recomputes `(dist(d(phi*, t*), g*), |rho(phi*, t*) - t*|)` from the
    /// stored state alone.
    pub fn certify(&self) -> Result<(f64, f64)> {
        let f = self.map()?;
        let a = f.anatomy()?;
        let g = f.geometry_from(&a)?;
        Ok((g.distance(&self.geometry)?, (a.rho - self.t_star).abs()))
    }
}

/// Tolerance for the inner pure-decomposition solves.
fn pure_tol(tol: f64) -> f64 {
    0.1 * tol
}

/// The state map `(g, t) -> (d(pure(g), t'), t')` with `t'` re-solved from
/// `rho(pure(g), t') = t'`. Returns the pure decomposition and `t'` as well.
pub fn dynamical_update(g: &Geometry, alpha: f64, grid: usize, tol: f64) -> Result<(Geometry, f64, Decomposition)> {
    let pure = pure_decomposition(g, alpha, grid, pure_tol(tol))?;
    let o = pure.compose_all()?;
    let t = solve_peak_on(&o, alpha)?.t;
    let f = DecomposedMap::from_parts(pure, o, t, alpha)?;
    let next = f.dynamical_geometry()?;
    Ok((next, t, f.decomposition))
}

/// Initial state: the dynamical data of the pure folding family.
pub fn initial_state(config: &SolverConfig) -> Result<(Geometry, f64)> {
    let id = Decomposition::identity(config.depth, config.grid)?;
    let t = solve_peak_value(&id, config.alpha)?.t;
    let g = DecomposedMap::new(id, t, config.alpha)?.dynamical_geometry()?;
    Ok((g, t))
}

pub fn find_fixed_point(config: &SolverConfig) -> Result<FixedPointReport> {
    config.validate()?;
    let (g, t) = initial_state(config)?;
    find_fixed_point_from(config, g, t)
}

/// Damped outer iteration on `(g, t)` from a given initial state.
pub fn find_fixed_point_from(config: &SolverConfig, mut g: Geometry, mut t: f64) -> Result<FixedPointReport> {
    config.validate()?;
    if g.depth() != config.depth {
        return Err(Error::DepthMismatch {
            left: config.depth,
            right: g.depth(),
        });
    }
    let mut trace = Vec::new();
    for iteration in 1..=config.max_iter {
        let (target, t_next, pure) = dynamical_update(&g, config.alpha, config.grid, config.tol)?;
        let blended = g.blend(&target, config.damping)?;
        let change = blended.distance(&g)? + (t_next - t).abs();
        trace.push(change);
        t = t_next;
        if change <= config.tol {
            let mut report = FixedPointReport {
                alpha: config.alpha,
                t_star: t,
                geometry: g,
                decomposition: pure,
                residual_geometry: f64::NAN,
                residual_peak: f64::NAN,
                iterations: iteration,
                delta_estimate: None,
                closure_residual: None,
                trace,
            };
            let (rg, rp) = report.certify()?;
            report.residual_geometry = rg;
            report.residual_peak = rp;
            return Ok(report);
        }
        g = blended;
    }
    Err(Error::NonConvergence {
        stage: "fixed point",
        iterations: config.max_iter,
        last: trace.last().copied().unwrap_or(f64::INFINITY),
        trace,
    })
}

/// A cycle of the renormalization operator.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub cycle: Vec<FixedPointReport>,
    pub closure_residual: f64,
    /// Largest state distance between two cycle elements.
    pub diameter: f64,
    /// The cycle collapsed onto a fixed point (`diameter <= tol`).
    pub coincides_with_fixed_point: bool,
}

/// Fixed point of `R_{g_{k-1}} o ... o R_{g_0}` and its images.
fn cycle_decompositions(gs: &[Geometry], alpha: f64, grid: usize, tol: f64) -> Result<Vec<Decomposition>> {
    let depth = gs[0].depth();
    let lap = |start: &Decomposition| -> Result<Vec<Decomposition>> {
        let mut out = vec![start.clone()];
        for g in gs {
            let next = geometric_renormalize(g, alpha, out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    };
    let mut phi = Decomposition::identity(depth, grid)?;
    // each lap shifts k levels; nilpotency bounds the number of laps
    let budget = depth / gs.len() + 2 + (10.0 * (1.0 / tol).ln()) as usize;
    let mut steps = Vec::new();
    for _ in 0..budget {
        let mut chain = lap(&phi)?;
        let closed = chain.pop().expect("nonempty");
        let delta = closed.distance(&phi)?;
        steps.push(delta);
        if delta <= tol {
            return Ok(chain);
        }
        phi = closed;
    }
    Err(Error::NonConvergence {
        stage: "periodic pure decomposition",
        iterations: budget,
        last: steps.last().copied().unwrap_or(f64::INFINITY),
        trace: steps,
    })
}

/// Peak values closing the cycle: `rho_i(t_i) = t_{i+1}`, `t_k = t_0`, solved
/// through the backward composite `rho_0^{-1} o ... o rho_{k-1}^{-1}`, which
/// maps [0, 1] into itself.
fn cycle_peaks(composites: &[NonlinearityProfile], alpha: f64) -> Result<Vec<f64>> {
    let windows = composites
        .iter()
        .map(|o| window_of(o, alpha))
        .collect::<Result<Vec<_>>>()?;
    let backward = |s: f64| -> Result<Vec<f64>> {
        let k = composites.len();
        let mut ts = vec![0.0; k];
        let mut target = s;
        for i in (0..k).rev() {
            ts[i] = invert_rho(&composites[i], alpha, &windows[i], target)?;
            target = ts[i];
        }
        Ok(ts)
    };
    let s = bisect_root(0.0, 1.0, true, ROOT_TOL, |s| Ok(backward(s)?[0] - s))?;
    backward(s)
}

pub fn find_periodic_orbit(config: &SolverConfig, k: usize) -> Result<PeriodicOrbit> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("period must be at least 1".into()));
    }
    if k == 1 {
        let mut report = find_fixed_point(config)?;
        let closure = report.residual_geometry + report.residual_peak;
        report.closure_residual = Some(closure);
        return Ok(PeriodicOrbit {
            cycle: vec![report],
            closure_residual: closure,
            diameter: 0.0,
            coincides_with_fixed_point: true,
        });
    }
    let (g0, t0) = initial_state(config)?;
    let mut gs = vec![g0; k];
    let mut ts = vec![t0; k];
    let mut trace = Vec::new();
    for iteration in 1..=config.max_iter {
        let phis = cycle_decompositions(&gs, config.alpha, config.grid, pure_tol(config.tol))?;
        let composites = phis.iter().map(Decomposition::compose_all).collect::<Result<Vec<_>>>()?;
        let new_ts = cycle_peaks(&composites, config.alpha)?;
        let mut change: f64 = 0.0;
        let mut targets = Vec::with_capacity(k);
        for i in 0..k {
            let f = DecomposedMap::from_parts(phis[i].clone(), composites[i].clone(), new_ts[i], config.alpha)?;
            let target = f.dynamical_geometry()?;
            change = change.max(config.damping * target.distance(&gs[i])? + (new_ts[i] - ts[i]).abs());
            targets.push(target);
        }
        trace.push(change);
        ts = new_ts;
        if change <= config.tol {
            return finish_cycle(config, gs, ts, phis, iteration, trace);
        }
        for (g, target) in gs.iter_mut().zip(&targets) {
            *g = g.blend(target, config.damping)?;
        }
    }
    Err(Error::NonConvergence {
        stage: "periodic orbit",
        iterations: config.max_iter,
        last: trace.last().copied().unwrap_or(f64::INFINITY),
        trace,
    })
}

fn finish_cycle(
    config: &SolverConfig,
    gs: Vec<Geometry>,
    ts: Vec<f64>,
    phis: Vec<Decomposition>,
    iterations: usize,
    trace: Vec<f64>,
) -> Result<PeriodicOrbit> {
    let k = gs.len();
    let mut cycle = Vec::with_capacity(k);
    let mut closure: f64 = 0.0;
    for i in 0..k {
        let f = DecomposedMap::new(phis[i].clone(), ts[i], config.alpha)?;
        let a = f.anatomy()?;
        let g = f.geometry_from(&a)?;
        let residual_geometry = g.distance(&gs[i])?;
        let residual_peak = (a.rho - ts[(i + 1) % k]).abs();
        // the last element must map back onto the first
        let next = geometric_renormalize(&gs[i], config.alpha, &phis[i])?;
        let link = next.distance(&phis[(i + 1) % k])?;
        closure = closure.max(residual_geometry + residual_peak + link);
        cycle.push(FixedPointReport {
            alpha: config.alpha,
            t_star: ts[i],
            geometry: gs[i].clone(),
            decomposition: phis[i].clone(),
            residual_geometry,
            residual_peak,
            iterations,
            delta_estimate: None,
            closure_residual: None,
            trace: trace.clone(),
        });
    }
    let mut diameter: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            diameter = diameter.max(gs[i].distance(&gs[j])? + (ts[i] - ts[j]).abs());
        }
    }
    for r in &mut cycle {
        r.closure_residual = Some(closure);
    }
    Ok(PeriodicOrbit {
        cycle,
        closure_residual: closure,
        diameter,
        coincides_with_fixed_point: diameter <= config.tol,
    })
}

// ---------------------------------------------------------------------------
// Orbit diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub step: usize,
    pub t: f64,
    /// Distance from the decomposition to the pure decomposition of its
    /// dynamical geometry.
    pub distance_to_pure: f64,
    pub contraction_factor: f64,
}

/// Follows `phi -> R_{d(phi, t)}(phi)`, re-solving `rho(phi, t) = t` before
/// every step so the orbit stays renormalizable. The peak value of `f` only
/// serves as a starting point; it is re-solved too.
pub fn renormalization_orbit_diagnostics(f: &DecomposedMap, steps: usize, tol: f64) -> Result<Vec<OrbitRecord>> {
    let alpha = f.alpha();
    let grid = f.decomposition().grid();
    let mut phi = f.decomposition().clone();
    let mut o = f.composite().clone();
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let t = solve_peak_on(&o, alpha)?.t;
        let current = DecomposedMap::from_parts(phi, o, t, alpha)?;
        let g = current.dynamical_geometry()?;
        let pure = pure_decomposition(&g, alpha, grid, tol)?;
        out.push(OrbitRecord {
            step,
            t,
            distance_to_pure: current.decomposition().distance(&pure)?,
            contraction_factor: g.contraction_factor(),
        });
        phi = geometric_renormalize(&g, alpha, current.decomposition())?;
        o = phi.compose_all()?;
    }
    Ok(out)
}
