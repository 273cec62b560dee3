//! Orientation-preserving diffeomorphisms of [-1, 1] in nonlinearity
//! coordinates.
//!
//! A diffeomorphism `phi` is stored through its nonlinearity
//! `eta = phi'' / phi'`, sampled on a Chebyshev–Lobatto grid. The map itself is
//! recovered by
//!
//! ```text
//! phi(x) = -1 + 2 I(x) / I(1),   I(x) = int_{-1}^{x} exp( int_{-1}^{s} eta ) ds,
//! ```
//!
//! so `phi(-1) = -1`, `phi(1) = 1` and `phi' > 0` hold for every sample
//! vector. In these coordinates the zoom operators are linear and composition
//! obeys the chain rule `eta_{f o g} = (eta_f o g) g' + eta_g`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::cheb::{self, ChebGrid};
use crate::error::{Error, Result};

/// Default number of interpolation nodes.
pub const DEFAULT_GRID: usize = 64;

/// Relative residual allowed when a composite is resampled on the grid.
pub const RESAMPLE_TOL: f64 = 1e-9;

/// Slack accepted on arguments that leave [-1, 1] through rounding.
const DOMAIN_SLACK: f64 = 1e-12;

/// Relative size of the trailing Chebyshev coefficients of `exp(int eta)`
/// accepted before the quadrature grid is refined.
const QUADRATURE_TAIL: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Intervals

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+")]
    Preserving,
    #[serde(rename = "-")]
    Reversing,
}

/// An interval `[lo, hi]` together with the orientation of its affine
/// identification with [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedInterval {
    pub lo: f64,
    pub hi: f64,
    pub flag: Orientation,
}

impl OrientedInterval {
    pub fn new(lo: f64, hi: f64, flag: Orientation) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < -1.0 || hi > 1.0 || lo >= hi {
            return Err(Error::Geometry(format!(
                "interval [{lo}, {hi}] is not a nondegenerate subinterval of [-1, 1]"
            )));
        }
        Ok(Self { lo, hi, flag })
    }

    pub fn preserving(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, Orientation::Preserving)
    }

    pub fn reversing(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, Orientation::Reversing)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// `|T| / 2`, the contraction factor of the zoom onto this interval.
    pub fn half_length(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }

    pub fn center(&self) -> f64 {
        (self.hi + self.lo) / 2.0
    }

    /// The affine identification [-1, 1] -> [lo, hi] selected by the flag.
    pub fn identify(&self, x: f64) -> f64 {
        match self.flag {
            Orientation::Preserving => self.center() + self.half_length() * x,
            Orientation::Reversing => self.center() - self.half_length() * x,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

// ---------------------------------------------------------------------------
// Canonical folding map

/// The canonical folding map `q_t(x) = -2t |x|^alpha + 2t - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldingMap {
    pub alpha: f64,
    pub t: f64,
}

impl FoldingMap {
    pub fn new(alpha: f64, t: f64) -> Self {
        Self { alpha, t }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        let power = if ax == 0.0 { 0.0 } else { ax.powf(self.alpha) };
        -2.0 * self.t * power + 2.0 * self.t - 1.0
    }

    pub fn peak(&self) -> f64 {
        2.0 * self.t - 1.0
    }
}

// ---------------------------------------------------------------------------
// Nonlinearity profiles

/// Spectral data for evaluating the diffeomorphism.
#[derive(Debug)]
struct Quadrature {
    /// Coefficients of `N(x) = int_{-1}^x eta`.
    log_slope: Vec<f64>,
    /// Maximum of `N` on the quadrature grid, subtracted before exponentiating.
    shift: f64,
    /// Coefficients of `I(x) = int_{-1}^x exp(N - shift)`.
    integral: Vec<f64>,
    /// `I(1)`.
    total: f64,
}

/// A point of the Banach space of `C^2` orientation-preserving
/// diffeomorphisms of [-1, 1], stored by its nonlinearity samples.
#[derive(Clone)]
pub struct NonlinearityProfile {
    grid: Arc<ChebGrid>,
    eta: Arc<[f64]>,
    cache: Arc<OnceLock<Quadrature>>,
}

impl fmt::Debug for NonlinearityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearityProfile")
            .field("degree", &self.degree())
            .field("eta", &self.eta)
            .finish()
    }
}

impl PartialEq for NonlinearityProfile {
    fn eq(&self, other: &Self) -> bool {
        self.eta == other.eta
    }
}

impl NonlinearityProfile {
    /// The identity map on a grid of `degree` nodes.
    pub fn identity(degree: usize) -> Self {
        Self::on_grid(ChebGrid::new(degree.max(2)), vec![0.0; degree.max(2)])
    }

    /// Builds a profile from nonlinearity samples at the ascending
    /// Chebyshev–Lobatto nodes `-cos(pi j / (N - 1))`.
    pub fn from_eta(eta: Vec<f64>) -> Result<Self> {
        if eta.len() < 2 {
            return Err(Error::Parse("a profile needs at least two samples".into()));
        }
        if let Some(bad) = eta.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("nonlinearity sample {bad} is not finite")));
        }
        Ok(Self::on_grid(ChebGrid::new(eta.len()), eta))
    }

    /// Samples `eta` from a closure.
    pub fn from_fn(degree: usize, eta: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = ChebGrid::new(degree.max(2));
        let values = grid.nodes().iter().map(|&x| eta(x)).collect();
        let profile = Self::on_grid(grid, values);
        if profile.eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("nonlinearity is not finite on the grid".into()));
        }
        Ok(profile)
    }

    pub(crate) fn on_grid(grid: Arc<ChebGrid>, eta: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), eta.len());
        Self {
            grid,
            eta: eta.into(),
            cache: Arc::new(OnceLock::new()),
        }
    }

    /// The identity on the same grid.
    pub fn identity_like(&self) -> Self {
        Self::on_grid(self.grid.clone(), vec![0.0; self.degree()])
    }

    /// A profile on the same grid with the given samples.
    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        self.check_len(eta.len())?;
        Ok(Self::on_grid(self.grid.clone(), eta))
    }

    /// Samples a closure on this profile's grid.
    pub fn sample_like(&self, eta: impl Fn(f64) -> f64) -> Self {
        let values = self.grid.nodes().iter().map(|&x| eta(x)).collect();
        Self::on_grid(self.grid.clone(), values)
    }

    /// Number of interpolation nodes `N`.
    pub fn degree(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn is_identity(&self) -> bool {
        self.eta.iter().all(|&v| v == 0.0)
    }

    /// The interpolated nonlinearity at `x`.
    pub fn eta_at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.eta, x)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.degree() {
            return Err(Error::GridMismatch {
                left: self.degree(),
                right: len,
            });
        }
        Ok(())
    }

    fn quadrature(&self) -> &Quadrature {
        self.cache.get_or_init(|| {
            let coeffs = self.grid.coefficients(&self.eta);
            let log_slope = cheb::integrate(&coeffs);
            let mut last = None;
            for level in 0..ChebGrid::fine_levels() {
                let fine = self.grid.fine(level);
                let slope: Vec<f64> = fine
                    .nodes()
                    .iter()
                    .map(|&x| cheb::clenshaw(&log_slope, x))
                    .collect();
                let shift = slope.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let density: Vec<f64> = slope.iter().map(|v| (v - shift).exp()).collect();
                let dc = fine.coefficients(&density);
                let scale = dc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let tail = dc.iter().rev().take(3).fold(0.0f64, |m, v| m.max(v.abs()));
                let resolved = tail <= QUADRATURE_TAIL * scale;
                last = Some((shift, dc));
                if resolved {
                    break;
                }
            }
            let (shift, dc) = last.expect("at least one quadrature level");
            let integral = cheb::integrate(&dc);
            let total = cheb::clenshaw(&integral, 1.0);
            Quadrature {
                log_slope,
                shift,
                integral,
                total,
            }
        })
    }

    fn check_domain(x: f64) -> Result<f64> {
        if !x.is_finite() || x < -1.0 - DOMAIN_SLACK || x > 1.0 + DOMAIN_SLACK {
            return Err(Error::Domain { value: x });
        }
        Ok(x.clamp(-1.0, 1.0))
    }

    /// `phi(x)` for `x` already known to lie in [-1, 1].
    pub(crate) fn value(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return -1.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        if self.is_identity() {
            return x;
        }
        let q = self.quadrature();
        (-1.0 + 2.0 * cheb::clenshaw(&q.integral, x) / q.total).clamp(-1.0, 1.0)
    }

    pub(crate) fn slope(&self, x: f64) -> f64 {
        if self.is_identity() {
            return 1.0;
        }
        let q = self.quadrature();
        2.0 * (cheb::clenshaw(&q.log_slope, x) - q.shift).exp() / q.total
    }

    /// Evaluates the diffeomorphism.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.value(Self::check_domain(x)?))
    }

    /// `phi'(x) > 0`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(self.slope(Self::check_domain(x)?))
    }

    /// Solves `phi(x) = y` by safeguarded Newton iteration inside a shrinking
    /// bracket.
    pub fn inverse_eval(&self, y: f64) -> Result<f64> {
        Ok(self.preimage(Self::check_domain(y)?))
    }

    pub(crate) fn preimage(&self, y: f64) -> f64 {
        if y <= -1.0 {
            return -1.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        if self.is_identity() {
            return y;
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut x = y;
        for _ in 0..200 {
            let r = self.value(x) - y;
            if r == 0.0 {
                return x;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - r / self.slope(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON || hi - lo <= 4.0 * f64::EPSILON {
                return next;
            }
            x = next;
        }
        x
    }

    /// The profile of `self o inner`, resampled on the grid.
    pub fn compose(&self, inner: &NonlinearityProfile) -> Result<Self> {
        self.compose_with_tol(inner, RESAMPLE_TOL)
    }

    pub fn compose_with_tol(&self, inner: &NonlinearityProfile, tol: f64) -> Result<Self> {
        self.check_len(inner.degree())?;
        if inner.is_identity() {
            return Ok(self.clone());
        }
        if self.is_identity() {
            return Ok(inner.clone());
        }
        let chain = |x: f64, eta_inner: f64| self.eta_at(inner.value(x)) * inner.slope(x) + eta_inner;
        let eta: Vec<f64> = inner
            .nodes()
            .iter()
            .zip(inner.eta.iter())
            .map(|(&x, &e)| chain(x, e))
            .collect();
        // compare against the exact chain rule halfway between nodes
        let n = self.degree();
        let mut residual = 0.0f64;
        let mut scale = 1.0f64;
        for j in 0..n - 1 {
            let z = -(std::f64::consts::PI * (j as f64 + 0.5) / (n - 1) as f64).cos();
            let exact = chain(z, inner.eta_at(z));
            let resampled = inner.grid.interpolate(&eta, z);
            residual = residual.max((exact - resampled).abs());
            scale = scale.max(exact.abs());
        }
        let limit = tol * scale;
        if !(residual <= limit) {
            return Err(Error::Resolution {
                residual,
                limit,
                grid: n,
            });
        }
        Ok(Self::on_grid(inner.grid.clone(), eta))
    }

    /// The zoom operator `Z_T`: the rescaled restriction of `phi` to `T`.
    ///
    /// Exactly linear in the samples: `eta_out(x) = s |T|/2 eta(beta(x))`
    /// where `beta` identifies [-1, 1] with `T` and `s = +1` (`-1`) for a
    /// preserving (reversing) identification.
    pub fn zoom(&self, interval: &OrientedInterval) -> Self {
        if self.is_identity() {
            return self.clone();
        }
        let h = interval.half_length();
        let sign = match interval.flag {
            Orientation::Preserving => 1.0,
            Orientation::Reversing => -1.0,
        };
        let eta = self
            .nodes()
            .iter()
            .map(|&x| sign * h * self.eta_at(interval.identify(x)))
            .collect();
        Self::on_grid(self.grid.clone(), eta)
    }

    /// The nonlinearity norm: the supremum of `|eta|` over [-1, 1] for the
    /// interpolant through the samples.
    ///
    /// The interpolant is scanned on a fourfold finer grid and local maxima
    /// within 10% of the largest are refined by golden-section search.
    pub fn nonlinearity_norm(&self) -> f64 {
        let first = self.eta[0];
        if self.eta.iter().all(|&v| v == first) {
            return first.abs();
        }
        let at_nodes = self.eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dense = self.grid.fine(1);
        let xs = dense.nodes();
        let vals: Vec<f64> = xs.iter().map(|&x| self.eta_at(x).abs()).collect();
        let dense_max = vals.iter().copied().fold(0.0f64, f64::max);
        let mut best = at_nodes.max(dense_max);
        let threshold = 0.9 * dense_max;
        for i in 0..vals.len() {
            let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
            let right = if i + 1 == vals.len() { f64::NEG_INFINITY } else { vals[i + 1] };
            if vals[i] < threshold || vals[i] < left || vals[i] < right {
                continue;
            }
            let a = xs[i.saturating_sub(1)];
            let b = xs[(i + 1).min(xs.len() - 1)];
            best = best.max(self.golden_max(a, b));
        }
        best
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let f = |x: f64| self.eta_at(x).abs();
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        let mut best = fc.max(fd);
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = f(d);
            }
            best = best.max(fc).max(fd);
            if b - a < 1e-13 {
                break;
            }
        }
        best
    }

    /// `a phi (+) b psi`, pointwise on the nonlinearity samples.
    pub fn linear_combination(a: f64, phi: &Self, b: f64, psi: &Self) -> Result<Self> {
        phi.check_len(psi.degree())?;
        let eta = phi
            .eta
            .iter()
            .zip(psi.eta.iter())
            .map(|(&u, &v)| a * u + b * v)
            .collect();
        Ok(Self::on_grid(phi.grid.clone(), eta))
    }

    /// Sup-norm distance of the nonlinearities.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.eta == other.eta {
            return Ok(0.0);
        }
        Ok(Self::linear_combination(1.0, self, -1.0, other)?.nonlinearity_norm())
    }
}

/// The identity diffeomorphism on the default grid.
pub fn identity_profile() -> NonlinearityProfile {
    NonlinearityProfile::identity(DEFAULT_GRID)
}

/// The zoomed monotone branch `[q_t |_{S_1}]` of the folding map.
///
/// On `S_1 = [lo, hi] ⊂ (0, 1)` the folding map is an affine image of
/// `s -> s^alpha`, so the result does not depend on the peak value:
/// `eta(x) = (alpha - 1) (|S_1| / 2) / s(x)` with `s` the increasing
/// identification of [-1, 1] with `S_1`.
pub fn branch_zoom(alpha: f64, side: &OrientedInterval, degree: usize) -> Result<NonlinearityProfile> {
    branch_zoom_like(alpha, side, &NonlinearityProfile::identity(degree))
}

/// [`branch_zoom`] on the grid of `like`.
pub fn branch_zoom_like(
    alpha: f64,
    side: &OrientedInterval,
    like: &NonlinearityProfile,
) -> Result<NonlinearityProfile> {
    if !(side.lo > 0.0 && side.hi < 1.0 && side.lo < side.hi) {
        return Err(Error::Domain { value: side.lo.min(side.hi) });
    }
    if side.flag != Orientation::Preserving {
        return Err(Error::Geometry("the side interval must carry the + flag".into()));
    }
    let h = side.half_length();
    let c = side.center();
    Ok(like.sample_like(|x| (alpha - 1.0) * h / (c + h * x)))
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    degree: usize,
    eta: Vec<f64>,
}

impl Serialize for NonlinearityProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileRecord {
            degree: self.degree(),
            eta: self.eta.to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NonlinearityProfile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let record = ProfileRecord::deserialize(deserializer)?;
        if record.degree != record.eta.len() {
            return Err(serde::de::Error::custom(format!(
                "degree {} does not match {} samples",
                record.degree,
                record.eta.len()
            )));
        }
        NonlinearityProfile::from_eta(record.eta).map_err(serde::de::Error::custom)
    }
}
