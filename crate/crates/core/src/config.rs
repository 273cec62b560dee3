use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest truncation the solvers accept; the tree has `2^(n+1) - 1` nodes.
pub const MAX_SOLVER_DEPTH: usize = 14;

/// Parameters shared by the fixed-point and periodic-orbit solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub depth: usize,
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            depth: 8,
            grid: 64,
            tol: 1e-8,
            max_iter: 200,
            damping: 0.5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must exceed 1 (got {})", self.alpha));
        }
        if self.depth < 1 || self.depth > MAX_SOLVER_DEPTH {
            return bad(format!("depth must lie in 1..={MAX_SOLVER_DEPTH} (got {})", self.depth));
        }
        if self.grid < 16 {
            return bad(format!("grid must have at least 16 nodes (got {})", self.grid));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return bad(format!("tol must be positive (got {})", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max-iter must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1] (got {})", self.damping));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SolverConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!((c.depth, c.grid, c.tol, c.max_iter, c.damping), (8, 64, 1e-8, 200, 0.5));
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let cases = [
            SolverConfig { alpha: 0.9, ..Default::default() },
            SolverConfig { alpha: 1.0, ..Default::default() },
            SolverConfig { depth: 0, ..Default::default() },
            SolverConfig { grid: 8, ..Default::default() },
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
            SolverConfig { damping: 0.0, ..Default::default() },
            SolverConfig { damping: 1.5, ..Default::default() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
        let msg = SolverConfig::with_alpha(0.9).validate().unwrap_err().to_string();
        assert!(msg.contains("alpha must exceed 1"));
    }
}
