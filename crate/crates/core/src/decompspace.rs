//! Decompositions, geometries and the geometrical renormalization operators.
//!
//! A decomposition assigns a diffeomorphism to every time of `T^(n)`; its
//! composition `O` applies the times in increasing order, so the greatest
//! time is outermost. A geometry fixes, for every time, an interval of the
//! `S_1`-chain and one of the `S_2`-chain together with the side interval
//! `S_1` of the root. The operator `R_g` places the branch of the folding
//! map over `S_1` at the root and moves zooms of the old nodes one level
//! down: `1w <- Z_{S_1(w)}(phi_w)`, `2w <- Z_{S_2(w)}(phi_w)`.
//!
//! Depth is kept fixed by discarding the level the operator pushes past `n`;
//! beyond the truncation depth a decomposition is implicitly the identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffspace::{branch_zoom_like, NonlinearityProfile, Orientation, OrientedInterval};
use crate::error::{Error, Result};
use crate::timetree::{DecompositionTimes, Letter, TimeIndex};

/// Default bound `kappa` with every geometry interval of length at most
/// `2 kappa`.
pub const CONTRACTION_MARGIN: f64 = 0.95;

/// Shortest interval a pullback may produce.
const MIN_LENGTH: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    times: DecompositionTimes,
    /// Heap order, see [`TimeIndex::heap_index`].
    nodes: Vec<NonlinearityProfile>,
}

impl Decomposition {
    pub fn identity(depth: usize, grid: usize) -> Result<Self> {
        let times = DecompositionTimes::new(depth)?;
        let id = NonlinearityProfile::identity(grid);
        Ok(Self {
            times,
            nodes: vec![id; times.len()],
        })
    }

    /// Nodes in heap order; all must share one grid.
    pub fn from_nodes(depth: usize, nodes: Vec<NonlinearityProfile>) -> Result<Self> {
        let times = DecompositionTimes::new(depth)?;
        if nodes.len() != times.len() {
            return Err(Error::Parse(format!(
                "depth {depth} needs {} nodes, got {}",
                times.len(),
                nodes.len()
            )));
        }
        let grid = nodes[0].degree();
        if let Some(bad) = nodes.iter().find(|p| p.degree() != grid) {
            return Err(Error::GridMismatch {
                left: grid,
                right: bad.degree(),
            });
        }
        Ok(Self { times, nodes })
    }

    /// Random nonlinearities given by short Chebyshev series whose size
    /// decays geometrically with the level.
    pub fn random_analytic(depth: usize, grid: usize, amplitude: f64, decay: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::identity(depth, grid)?;
        for (i, node) in out.nodes.iter_mut().enumerate() {
            let level = TimeIndex::from_heap_index(i).level();
            let scale = amplitude * decay.powi(level as i32);
            let coeffs: Vec<f64> = (0..5).map(|_| rng.gen_range(-scale..=scale)).collect();
            *node = node.sample_like(|x| {
                // Chebyshev series via the three-term recurrence
                let (mut t0, mut t1) = (1.0, x);
                let mut acc = coeffs[0] + coeffs[1] * x;
                for &c in &coeffs[2..] {
                    let t2 = 2.0 * x * t1 - t0;
                    acc += c * t2;
                    t0 = t1;
                    t1 = t2;
                }
                acc
            });
        }
        Ok(out)
    }

    pub fn depth(&self) -> usize {
        self.times.depth()
    }

    pub fn times(&self) -> DecompositionTimes {
        self.times
    }

    /// Number of interpolation nodes of every profile.
    pub fn grid(&self) -> usize {
        self.nodes[0].degree()
    }

    pub fn node(&self, tau: &TimeIndex) -> &NonlinearityProfile {
        &self.nodes[tau.heap_index()]
    }

    pub fn root(&self) -> &NonlinearityProfile {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (TimeIndex, &NonlinearityProfile)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (TimeIndex::from_heap_index(i), p))
    }

    /// Replaces one node; the profile must live on the same grid.
    pub fn set_node(&mut self, tau: &TimeIndex, profile: NonlinearityProfile) -> Result<()> {
        if !self.times.contains(tau) {
            return Err(Error::Depth {
                level: tau.level(),
                depth: self.depth(),
            });
        }
        if profile.degree() != self.grid() {
            return Err(Error::GridMismatch {
                left: self.grid(),
                right: profile.degree(),
            });
        }
        self.nodes[tau.heap_index()] = profile;
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.nodes.iter().all(NonlinearityProfile::is_identity)
    }

    /// Keeps levels `0..=depth`.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        let times = DecompositionTimes::new(depth.min(self.depth()))?;
        Ok(Self {
            times,
            nodes: self.nodes[..times.len()].to_vec(),
        })
    }

    /// `O(phi)`: all nodes composed, greatest time outermost.
    pub fn compose_all(&self) -> Result<NonlinearityProfile> {
        compose_descending(self, &self.times.enumerate_descending())
    }

    /// `O^tau(phi)`: the composition of the nodes `w >= tau`.
    pub fn partial_composition(&self, tau: &TimeIndex) -> Result<NonlinearityProfile> {
        compose_descending(self, &self.times.suffix_set(tau)?)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.depth() != other.depth() {
            return Err(Error::DepthMismatch {
                left: self.depth(),
                right: other.depth(),
            });
        }
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch {
                left: self.grid(),
                right: other.grid(),
            });
        }
        Ok(())
    }

    /// Sum of the node nonlinearity norms.
    pub fn norm(&self) -> f64 {
        self.nodes.iter().map(NonlinearityProfile::nonlinearity_norm).sum()
    }

    /// Sum over nodes of the sup-norm distance of the nonlinearities.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        let mut total = 0.0;
        for (a, b) in self.nodes.iter().zip(&other.nodes) {
            total += a.distance(b)?;
        }
        Ok(total)
    }

    /// `a phi (+) b chi`, node-wise.
    pub fn linear_combination(a: f64, phi: &Self, b: f64, chi: &Self) -> Result<Self> {
        phi.check_shape(chi)?;
        let nodes = phi
            .nodes
            .iter()
            .zip(&chi.nodes)
            .map(|(u, v)| NonlinearityProfile::linear_combination(a, u, b, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: phi.times,
            nodes,
        })
    }

    pub fn to_record(&self, alpha: f64) -> DecompositionRecord {
        DecompositionRecord {
            alpha,
            depth: self.depth(),
            nodes: self
                .nodes()
                .map(|(tau, p)| NodeRecord {
                    path: tau,
                    eta: p.eta().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_record(record: &DecompositionRecord) -> Result<Self> {
        let times = DecompositionTimes::new(record.depth)?;
        let first = record
            .nodes
            .first()
            .ok_or_else(|| Error::Parse("decomposition without nodes".into()))?;
        let template = NonlinearityProfile::from_eta(first.eta.clone())?;
        let mut out = Self {
            times,
            nodes: vec![template.identity_like(); times.len()],
        };
        let mut seen = vec![false; times.len()];
        for node in &record.nodes {
            if !times.contains(&node.path) {
                return Err(Error::Depth {
                    level: node.path.level(),
                    depth: record.depth,
                });
            }
            if let Some(bad) = node.eta.iter().find(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("nonlinearity sample {bad} is not finite")));
            }
            out.set_node(&node.path, template.with_eta(node.eta.clone())?)?;
            seen[node.path.heap_index()] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parse(format!(
                "time {:?} has no profile",
                TimeIndex::from_heap_index(missing).path()
            )));
        }
        Ok(out)
    }
}

fn compose_descending(phi: &Decomposition, order: &[TimeIndex]) -> Result<NonlinearityProfile> {
    let mut iter = order.iter();
    let first = iter.next().expect("time sets are never empty");
    let mut acc = phi.node(first).clone();
    for tau in iter {
        acc = acc.compose(phi.node(tau))?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub path: TimeIndex,
    pub eta: Vec<f64>,
}

/// JSON form: `{"alpha": a, "depth": n, "nodes": [{"path": "...", "eta": [...]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub alpha: f64,
    pub depth: usize,
    pub nodes: Vec<NodeRecord>,
}

// ---------------------------------------------------------------------------
// Geometries

/// A choice of intervals `g = (S_2(.), S_1, S_1(.))` indexed by `T^(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    depth: usize,
    side_root: OrientedInterval,
    s1: Vec<OrientedInterval>,
    s2: Vec<OrientedInterval>,
}

impl Geometry {
    /// Intervals in heap order. `S_1`-chain flags must be `+`, `S_2`-chain
    /// flags `-`.
    pub fn new(
        depth: usize,
        side_root: OrientedInterval,
        s1: Vec<OrientedInterval>,
        s2: Vec<OrientedInterval>,
    ) -> Result<Self> {
        let times = DecompositionTimes::new(depth)?;
        if s1.len() != times.len() || s2.len() != times.len() {
            return Err(Error::Geometry(format!(
                "depth {depth} needs {} intervals per chain",
                times.len()
            )));
        }
        let g = Self {
            depth,
            side_root,
            s1,
            s2,
        };
        g.validate()?;
        Ok(g)
    }

    /// The same pair of intervals at every time.
    pub fn uniform(depth: usize, side_root: OrientedInterval, s1: OrientedInterval, s2: OrientedInterval) -> Result<Self> {
        let n = DecompositionTimes::new(depth)?.len();
        Self::new(depth, side_root, vec![s1; n], vec![s2; n])
    }

    fn validate(&self) -> Result<()> {
        let side = &self.side_root;
        if !(side.lo > 0.0 && side.hi < 1.0) || side.flag != Orientation::Preserving {
            return Err(Error::Geometry(format!(
                "side interval [{}, {}] must lie in (0, 1) with flag +",
                side.lo, side.hi
            )));
        }
        for (chain, flag, intervals) in [
            ("S1", Orientation::Preserving, &self.s1),
            ("S2", Orientation::Reversing, &self.s2),
        ] {
            for (i, iv) in intervals.iter().enumerate() {
                let ok = iv.lo > -1.0
                    && iv.hi < 1.0
                    && iv.length() > MIN_LENGTH
                    && iv.length() <= 2.0 * CONTRACTION_MARGIN
                    && iv.flag == flag;
                if !ok {
                    return Err(Error::Geometry(format!(
                        "{chain}({}) = [{}, {}] with flag {:?} violates the geometry bounds",
                        TimeIndex::from_heap_index(i).path(),
                        iv.lo,
                        iv.hi,
                        iv.flag
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn side_root(&self) -> &OrientedInterval {
        &self.side_root
    }

    pub fn s1(&self, tau: &TimeIndex) -> &OrientedInterval {
        &self.s1[tau.heap_index()]
    }

    pub fn s2(&self, tau: &TimeIndex) -> &OrientedInterval {
        &self.s2[tau.heap_index()]
    }

    /// Lipschitz constant of the linear part of the truncated `R_g` in the
    /// summed node norm: every time `w` below the deepest level feeds the
    /// two nodes `1w` and `2w`, so the factor is
    /// `max_w (|S_1(w)| + |S_2(w)|) / 2`.
    pub fn contraction_factor(&self) -> f64 {
        if self.depth == 0 {
            return 0.0;
        }
        let used = (1usize << self.depth) - 1;
        (0..used)
            .map(|i| (self.s1[i].length() + self.s2[i].length()) / 2.0)
            .fold(0.0, f64::max)
    }

    /// Largest `|T| / 2` over all intervals of both chains.
    pub fn max_half_length(&self) -> f64 {
        self.s1
            .iter()
            .chain(&self.s2)
            .map(OrientedInterval::half_length)
            .fold(0.0, f64::max)
    }

    fn check_contraction(&self) -> Result<f64> {
        let kappa = self.contraction_factor();
        if !(kappa < 1.0) {
            return Err(Error::Geometry(format!(
                "contraction factor {kappa} is not below 1"
            )));
        }
        Ok(kappa)
    }

    /// Sup over all interval endpoints.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.depth != other.depth {
            return Err(Error::DepthMismatch {
                left: self.depth,
                right: other.depth,
            });
        }
        Ok(self
            .coordinates()
            .iter()
            .zip(other.coordinates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `theta other + (1 - theta) self`, endpoint-wise.
    pub fn blend(&self, other: &Self, theta: f64) -> Result<Self> {
        let mix: Vec<f64> = self
            .coordinates()
            .iter()
            .zip(other.coordinates())
            .map(|(a, b)| theta * b + (1.0 - theta) * a)
            .collect();
        self.with_coordinates(&mix)
    }

    /// Endpoints as a flat vector: side root, then the `S_1`-chain and the
    /// `S_2`-chain in heap order, `lo` before `hi`.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + 4 * self.s1.len());
        out.push(self.side_root.lo);
        out.push(self.side_root.hi);
        for iv in self.s1.iter().chain(&self.s2) {
            out.push(iv.lo);
            out.push(iv.hi);
        }
        out
    }

    /// Geometry of the same shape with new endpoints.
    pub fn with_coordinates(&self, coords: &[f64]) -> Result<Self> {
        if coords.len() != 2 + 4 * self.s1.len() {
            return Err(Error::Geometry("coordinate vector has the wrong length".into()));
        }
        let mk = |i: usize, flag| OrientedInterval::new(coords[i], coords[i + 1], flag);
        let n = self.s1.len();
        let side_root = mk(0, Orientation::Preserving)?;
        let s1 = (0..n).map(|k| mk(2 + 2 * k, Orientation::Preserving)).collect::<Result<_>>()?;
        let s2 = (0..n)
            .map(|k| mk(2 + 2 * (n + k), Orientation::Reversing))
            .collect::<Result<_>>()?;
        Self::new(self.depth, side_root, s1, s2)
    }

    pub fn to_record(&self) -> GeometryRecord {
        let entries = |chain: &[OrientedInterval]| {
            chain
                .iter()
                .enumerate()
                .map(|(i, iv)| IntervalRecord {
                    path: TimeIndex::from_heap_index(i),
                    lo: iv.lo,
                    hi: iv.hi,
                    flag: iv.flag,
                })
                .collect()
        };
        GeometryRecord {
            depth: self.depth,
            side_root: self.side_root,
            s1: entries(&self.s1),
            s2: entries(&self.s2),
        }
    }

    pub fn from_record(record: &GeometryRecord) -> Result<Self> {
        let times = DecompositionTimes::new(record.depth)?;
        let gather = |entries: &[IntervalRecord]| -> Result<Vec<OrientedInterval>> {
            let mut out: Vec<Option<OrientedInterval>> = vec![None; times.len()];
            for e in entries {
                if !times.contains(&e.path) {
                    return Err(Error::Depth {
                        level: e.path.level(),
                        depth: record.depth,
                    });
                }
                out[e.path.heap_index()] = Some(OrientedInterval::new(e.lo, e.hi, e.flag)?);
            }
            out.into_iter()
                .enumerate()
                .map(|(i, iv)| {
                    iv.ok_or_else(|| {
                        Error::Parse(format!(
                            "time {:?} has no interval",
                            TimeIndex::from_heap_index(i).path()
                        ))
                    })
                })
                .collect()
        };
        Self::new(record.depth, record.side_root, gather(&record.s1)?, gather(&record.s2)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub path: TimeIndex,
    pub lo: f64,
    pub hi: f64,
    pub flag: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub depth: usize,
    pub side_root: OrientedInterval,
    pub s1: Vec<IntervalRecord>,
    pub s2: Vec<IntervalRecord>,
}

/// Pulls `S_1` and `S_2` back through the decomposition:
/// `S_j(tau) = (O^tau)^{-1}(S_j)`, visiting the times in descending order
/// with one running preimage per chain.
pub fn pullback_intervals(phi: &Decomposition, side: &OrientedInterval, central: &OrientedInterval) -> Result<Geometry> {
    let n = phi.times().len();
    let mut s1 = vec![*side; n];
    let mut s2 = vec![*central; n];
    let (mut a1, mut b1) = (side.lo, side.hi);
    let (mut a2, mut b2) = (central.lo, central.hi);
    for tau in phi.times().enumerate_descending() {
        let node = phi.node(&tau);
        a1 = node.preimage(a1);
        b1 = node.preimage(b1);
        a2 = node.preimage(a2);
        b2 = node.preimage(b2);
        let i = tau.heap_index();
        s1[i] = OrientedInterval::preserving(a1, b1)?;
        s2[i] = OrientedInterval::reversing(a2, b2)?;
    }
    Geometry::new(phi.depth(), OrientedInterval::preserving(side.lo, side.hi)?, s1, s2)
}

fn renormalize_into(g: &Geometry, alpha: f64, phi: &Decomposition, out_depth: usize) -> Result<Decomposition> {
    if g.depth() != phi.depth() {
        return Err(Error::DepthMismatch {
            left: g.depth(),
            right: phi.depth(),
        });
    }
    g.check_contraction()?;
    let root = phi.root();
    let times = DecompositionTimes::new(out_depth)?;
    let mut nodes = vec![root.identity_like(); times.len()];
    nodes[0] = branch_zoom_like(alpha, g.side_root(), root)?;
    let sources = DecompositionTimes::new(out_depth - 1)?;
    for w in sources.iter() {
        let node = phi.node(&w);
        nodes[w.prepend(Letter::One).heap_index()] = node.zoom(g.s1(&w));
        nodes[w.prepend(Letter::Two).heap_index()] = node.zoom(g.s2(&w));
    }
    Ok(Decomposition { times, nodes })
}

/// The geometrical renormalization operator `R_g`, truncated back to the
/// depth of `phi` by dropping the new deepest level.
pub fn geometric_renormalize(g: &Geometry, alpha: f64, phi: &Decomposition) -> Result<Decomposition> {
    if phi.depth() == 0 {
        // only the root survives truncation
        g.check_contraction()?;
        let root = branch_zoom_like(alpha, g.side_root(), phi.root())?;
        return Decomposition::from_nodes(0, vec![root]);
    }
    renormalize_into(g, alpha, phi, phi.depth())
}

/// `R_g` without truncation: the result has one level more than `phi`.
pub fn geometric_renormalize_extended(g: &Geometry, alpha: f64, phi: &Decomposition) -> Result<Decomposition> {
    renormalize_into(g, alpha, phi, phi.depth() + 1)
}

/// Outcome of the contraction solve for a pure decomposition.
#[derive(Debug, Clone)]
pub struct PureSolution {
    pub decomposition: Decomposition,
    /// `||R_g(phi_k) - phi_k||` per iteration.
    pub steps: Vec<f64>,
    pub contraction_factor: f64,
}

impl PureSolution {
    /// Largest ratio of consecutive nonzero step sizes.
    pub fn max_ratio(&self) -> f64 {
        self.steps
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

/// The fixed point of `R_g`, iterated from the identity decomposition.
pub fn pure_decomposition(g: &Geometry, alpha: f64, grid: usize, tol: f64) -> Result<Decomposition> {
    let start = Decomposition::identity(g.depth(), grid)?;
    Ok(solve_pure(g, alpha, tol, &start)?.decomposition)
}

/// Iterates `R_g` from `start` until successive iterates are within `tol`.
pub fn solve_pure(g: &Geometry, alpha: f64, tol: f64, start: &Decomposition) -> Result<PureSolution> {
    let kappa = g.check_contraction()?;
    // the truncated linear part is nilpotent: depth + 1 steps always suffice
    let geometric = if kappa > 0.0 {
        (10.0 * (1.0 / tol).ln() / (1.0 / kappa).ln()).ceil() as usize
    } else {
        0
    };
    let budget = geometric.max(g.depth() + 2);
    let mut current = start.clone();
    let mut steps = Vec::new();
    for _ in 0..budget {
        let next = geometric_renormalize(g, alpha, &current)?;
        let delta = next.distance(&current)?;
        steps.push(delta);
        current = next;
        if delta <= tol {
            return Ok(PureSolution {
                decomposition: current,
                steps,
                contraction_factor: kappa,
            });
        }
    }
    Err(Error::NonConvergence {
        stage: "pure decomposition",
        iterations: budget,
        last: steps.last().copied().unwrap_or(f64::INFINITY),
        trace: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffspace::DEFAULT_GRID;

    fn random_geometry(depth: usize, seed: u64) -> Geometry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = DecompositionTimes::new(depth).unwrap().len();
        let mut s1 = Vec::with_capacity(n);
        let mut s2 = Vec::with_capacity(n);
        for _ in 0..n {
            // disjoint pair: S2 to the left of S1
            let cut: f64 = rng.gen_range(-0.3..0.5);
            let a: f64 = rng.gen_range(-0.95..cut - 0.05);
            let b: f64 = rng.gen_range(cut + 0.05..0.95);
            s2.push(OrientedInterval::reversing(a, cut).unwrap());
            s1.push(OrientedInterval::preserving(cut, b).unwrap());
        }
        let lo = rng.gen_range(0.2..0.45);
        let side = OrientedInterval::preserving(lo, rng.gen_range(lo + 0.1..0.9)).unwrap();
        Geometry::new(depth, side, s1, s2).unwrap()
    }

    fn random_decomposition(depth: usize, seed: u64) -> Decomposition {
        Decomposition::random_analytic(depth, DEFAULT_GRID, 0.5, 0.7, seed).unwrap()
    }

    #[test]
    fn identity_composes_to_identity() {
        let id = Decomposition::identity(3, 32).unwrap();
        assert!(id.compose_all().unwrap().is_identity());
        assert_eq!(id.norm(), 0.0);
        assert_eq!(id.distance(&id).unwrap(), 0.0);
    }

    #[test]
    fn depth_zero_composition_is_the_node() {
        let phi = random_decomposition(0, 1);
        assert_eq!(phi.compose_all().unwrap(), *phi.root());
    }

    #[test]
    fn depth_one_composition_order() {
        let phi = random_decomposition(1, 2);
        let o = phi.compose_all().unwrap();
        let (two, root, one) = (
            phi.node(&"2".parse().unwrap()),
            phi.root(),
            phi.node(&"1".parse().unwrap()),
        );
        for i in 0..=40 {
            let x = -1.0 + i as f64 / 20.0;
            let direct = two.eval(root.eval(one.eval(x).unwrap()).unwrap()).unwrap();
            assert!((o.eval(x).unwrap() - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn partial_compositions() {
        let phi = random_decomposition(2, 3);
        let desc = phi.times().enumerate_descending();
        let max = desc[0];
        let min = *desc.last().unwrap();
        assert_eq!(phi.partial_composition(&max).unwrap(), *phi.node(&max));
        assert_eq!(phi.partial_composition(&min).unwrap(), phi.compose_all().unwrap());
        // O^{min} = O^{succ(min)} o phi_min
        let succ = desc[desc.len() - 2];
        let outer = phi.partial_composition(&succ).unwrap();
        let all = phi.compose_all().unwrap();
        for i in 0..=20 {
            let x = -1.0 + i as f64 / 10.0;
            let direct = outer.eval(phi.node(&min).eval(x).unwrap()).unwrap();
            assert!((all.eval(x).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn pullbacks_match_partial_compositions() {
        let phi = random_decomposition(3, 4);
        let side = OrientedInterval::preserving(0.3, 0.7).unwrap();
        let central = OrientedInterval::reversing(-0.3, 0.3).unwrap();
        let g = pullback_intervals(&phi, &side, &central).unwrap();
        for tau in phi.times().iter() {
            let o = phi.partial_composition(&tau).unwrap();
            let s1 = g.s1(&tau);
            let s2 = g.s2(&tau);
            assert!((o.inverse_eval(0.3).unwrap() - s1.lo).abs() < 1e-8);
            assert!((o.inverse_eval(0.7).unwrap() - s1.hi).abs() < 1e-8);
            assert!((o.inverse_eval(-0.3).unwrap() - s2.lo).abs() < 1e-8);
            assert!((o.inverse_eval(0.3).unwrap() - s2.hi).abs() < 1e-8);
            assert_eq!(s1.flag, Orientation::Preserving);
            assert_eq!(s2.flag, Orientation::Reversing);
        }
        let id = Decomposition::identity(2, 16).unwrap();
        let gid = pullback_intervals(&id, &side, &central).unwrap();
        assert!(id.times().iter().all(|t| *gid.s1(&t) == side && *gid.s2(&t) == central));
    }

    #[test]
    fn renormalizing_identity_only_fills_the_root() {
        let g = random_geometry(3, 9);
        let id = Decomposition::identity(3, DEFAULT_GRID).unwrap();
        let r = geometric_renormalize(&g, 2.0, &id).unwrap();
        assert_eq!(*r.root(), crate::diffspace::branch_zoom(2.0, g.side_root(), DEFAULT_GRID).unwrap());
        assert!(r.nodes().skip(1).all(|(_, p)| p.is_identity()));
    }

    #[test]
    fn renormalization_is_affine() {
        let g = random_geometry(3, 10);
        let phi = random_decomposition(3, 11);
        let chi = random_decomposition(3, 12);
        let (a, b) = (0.3, 0.7);
        let mix = Decomposition::linear_combination(a, &phi, b, &chi).unwrap();
        let lhs = geometric_renormalize(&g, 2.0, &mix).unwrap();
        let rhs = Decomposition::linear_combination(
            a,
            &geometric_renormalize(&g, 2.0, &phi).unwrap(),
            b,
            &geometric_renormalize(&g, 2.0, &chi).unwrap(),
        )
        .unwrap();
        for ((_, l), (_, r)) in lhs.nodes().zip(rhs.nodes()) {
            for (u, v) in l.eta().iter().zip(r.eta()) {
                assert!((u - v).abs() <= 1e-13 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn renormalization_contracts() {
        for seed in 0..20 {
            let g = random_geometry(3, 100 + seed);
            let phi = random_decomposition(3, 200 + seed);
            let chi = random_decomposition(3, 300 + seed);
            let before = phi.distance(&chi).unwrap();
            let after = geometric_renormalize(&g, 2.0, &phi)
                .unwrap()
                .distance(&geometric_renormalize(&g, 2.0, &chi).unwrap())
                .unwrap();
            assert!(after <= g.contraction_factor() * before * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pure_decomposition_converges_geometrically() {
        for seed in 0..5 {
            let g = random_geometry(6, 400 + seed);
            let sol = solve_pure(&g, 2.0, 1e-10, &Decomposition::identity(6, DEFAULT_GRID).unwrap()).unwrap();
            assert!(sol.max_ratio() <= g.contraction_factor() + 0.05);
            let pure = &sol.decomposition;
            let residual = geometric_renormalize(&g, 2.0, pure).unwrap().distance(pure).unwrap();
            assert!(residual <= 2e-10);
            // independent of the starting point
            let other = solve_pure(&g, 2.0, 1e-10, &random_decomposition(6, 500 + seed)).unwrap();
            assert!(other.decomposition.distance(pure).unwrap() <= 2e-10);
        }
    }

    #[test]
    fn tiny_intervals_leave_only_the_branch() {
        let eps = 1e-4;
        let side = OrientedInterval::preserving(0.3, 0.7).unwrap();
        let g = Geometry::uniform(
            4,
            side,
            OrientedInterval::preserving(0.5 - eps, 0.5 + eps).unwrap(),
            OrientedInterval::reversing(-eps, eps).unwrap(),
        )
        .unwrap();
        let pure = pure_decomposition(&g, 2.0, DEFAULT_GRID, 1e-12).unwrap();
        let branch = crate::diffspace::branch_zoom(2.0, &side, DEFAULT_GRID).unwrap();
        assert_eq!(*pure.root(), branch);
        let rest: f64 = pure.nodes().skip(1).map(|(_, p)| p.nonlinearity_norm()).sum();
        assert!(rest < 10.0 * eps * branch.nonlinearity_norm());
    }

    #[test]
    fn geometry_errors() {
        let side = OrientedInterval::preserving(0.3, 0.7).unwrap();
        let wide = OrientedInterval::preserving(-0.99, 0.98).unwrap();
        let s2 = OrientedInterval::reversing(-0.3, 0.3).unwrap();
        assert!(matches!(Geometry::uniform(1, side, wide, s2), Err(Error::Geometry(_))));
        let wrong_flag = OrientedInterval::preserving(-0.3, 0.3).unwrap();
        assert!(Geometry::uniform(1, side, side, wrong_flag).is_err());
        // overlapping chains break the contraction
        let s1 = OrientedInterval::preserving(-0.9, 0.9).unwrap();
        let s2 = OrientedInterval::reversing(-0.9, 0.9).unwrap();
        let g = Geometry::uniform(2, side, s1, s2).unwrap();
        let id = Decomposition::identity(2, 16).unwrap();
        assert!(matches!(geometric_renormalize(&g, 2.0, &id), Err(Error::Geometry(_))));
        let shallow = Decomposition::identity(1, 16).unwrap();
        assert!(matches!(
            geometric_renormalize(&random_geometry(2, 1), 2.0, &shallow),
            Err(Error::DepthMismatch { .. })
        ));
    }

    #[test]
    fn norms_satisfy_triangle_inequality() {
        for seed in 0..10 {
            let a = random_decomposition(2, seed);
            let b = random_decomposition(2, seed + 50);
            let c = random_decomposition(2, seed + 100);
            let ab = a.distance(&b).unwrap();
            let bc = b.distance(&c).unwrap();
            let ac = a.distance(&c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
        let shallow = Decomposition::identity(1, DEFAULT_GRID).unwrap();
        assert!(matches!(
            shallow.distance(&random_decomposition(2, 0)),
            Err(Error::DepthMismatch { .. })
        ));
    }

    #[test]
    fn records_round_trip() {
        let phi = random_decomposition(2, 77);
        let json = serde_json::to_string(&phi.to_record(2.0)).unwrap();
        let back: DecompositionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(Decomposition::from_record(&back).unwrap(), phi);
        let g = random_geometry(2, 78);
        let json = serde_json::to_string(&g.to_record()).unwrap();
        let back: GeometryRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(Geometry::from_record(&back).unwrap(), g);
    }
}
