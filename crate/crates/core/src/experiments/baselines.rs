//! Comparison methods for the re-fitting.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operators::LinearMap;
use crate::primal_dual::{self, DualRule, PDConfig};

/// Output of a heuristic iteration that has no convergence guarantee.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub estimate: Grid,
    pub iters_used: usize,
    /// Whether the relative-change test was met within the budget.
    pub converged: bool,
    /// Always `true`: the iteration is not known to converge to the
    /// re-fitting even when it stops.
    pub heuristic: bool,
}

/// Iterative hard-thresholding: the primal-dual scheme with the dual
/// projection replaced by the hard rule `zᵢ ↦ zᵢ·1{‖zᵢ‖ ≤ λ}`, linear steps
/// unchanged.
pub fn iterative_hard_thresholding(
    phi: &LinearMap,
    gamma: &LinearMap,
    y: &Grid,
    cfg: &PDConfig,
) -> Result<BaselineResult> {
    if !cfg.lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite".into()));
    }
    let r = primal_dual::run(phi, gamma, y, cfg, None, DualRule::Hard)?;
    Ok(BaselineResult {
        estimate: r.estimate,
        iters_used: r.iters_used,
        converged: r.converged,
        heuristic: true,
    })
}
