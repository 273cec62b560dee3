//! Chebyshev–Lobatto grids on [-1, 1]: barycentric interpolation, spectral
//! coefficients, Clenshaw evaluation and term-wise integration.
//!
//! Nodes are stored in ascending order, `x_j = -cos(pi j / (n - 1))`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Number of successively doubled quadrature grids a base grid can spawn.
const FINE_LEVELS: usize = 4;

#[derive(Debug)]
pub struct ChebGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `cos(pi m / (n - 1))` for `m` in `0..2(n - 1)`.
    cos_table: Vec<f64>,
    fine: [OnceLock<Arc<ChebGrid>>; FINE_LEVELS],
}

impl ChebGrid {
    pub fn new(n: usize) -> Arc<Self> {
        assert!(n >= 2, "a Chebyshev-Lobatto grid needs at least two nodes");
        let m = (n - 1) as f64;
        // sin form keeps the grid exactly antisymmetric about 0
        let nodes: Vec<f64> = (0..n)
            .map(|j| (PI * (2.0 * j as f64 - m) / (2.0 * m)).sin())
            .collect();
        let weights = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        let cos_table = (0..2 * (n - 1)).map(|k| (PI * k as f64 / m).cos()).collect();
        Arc::new(Self {
            nodes,
            weights,
            cos_table,
            fine: Default::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Grid with `2^(level+1) (n-1) + 1` nodes, built on first use.
    pub fn fine(&self, level: usize) -> Arc<ChebGrid> {
        self.fine[level.min(FINE_LEVELS - 1)]
            .get_or_init(|| ChebGrid::new(((self.len() - 1) << (level + 1)) + 1))
            .clone()
    }

    pub fn fine_levels() -> usize {
        FINE_LEVELS
    }

    /// Barycentric interpolation of node values at `x`.
    ///
    /// Values are taken relative to the first sample so constant data is
    /// reproduced exactly.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let base = values[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.weights).zip(values) {
            let dx = x - xj;
            if dx == 0.0 {
                return fj;
            }
            let q = wj / dx;
            num += q * (fj - base);
            den += q;
        }
        base + num / den
    }

    /// Chebyshev coefficients `c_k` with `p(x) = sum_k c_k T_k(x)` for the
    /// interpolant through `values` (ascending node order).
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let n = self.len();
        debug_assert_eq!(values.len(), n);
        let period = 2 * (n - 1);
        let scale = 2.0 / (n - 1) as f64;
        let mut coeffs = Vec::with_capacity(n);
        for k in 0..n {
            let mut idx = 0usize;
            let mut acc = 0.0;
            // descending-node index j pairs with ascending storage n-1-j
            for j in 0..n {
                let f = values[n - 1 - j];
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                acc += w * f * self.cos_table[idx];
                idx += k;
                if idx >= period {
                    idx -= period;
                }
            }
            coeffs.push(scale * acc);
        }
        coeffs[0] *= 0.5;
        coeffs[n - 1] *= 0.5;
        coeffs
    }
}

/// Clenshaw summation of `sum_k c_k T_k(x)`.
pub fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let two_x = 2.0 * x;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + two_x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Coefficients of the antiderivative vanishing at `x = -1`.
pub fn integrate(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let c = |k: usize| if k < n { coeffs[k] } else { 0.0 };
    let mut out = vec![0.0; n + 1];
    if n == 0 {
        return out;
    }
    out[1] = c(0) - 0.5 * c(2);
    for k in 2..=n {
        out[k] = (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
    }
    let mut at_minus_one = 0.0;
    for (k, &v) in out.iter().enumerate().skip(1) {
        at_minus_one += if k % 2 == 0 { v } else { -v };
    }
    out[0] = -at_minus_one;
    out
}
