//! Named property suites with a pass/fail table.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::degrade::{degrade, DegradationSpec};
use super::montecarlo::{run_montecarlo, McConfig};
use super::noise::GaussianStream;
use super::phantoms::{phantom, PhantomId};
use crate::closed_form;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::operators::LinearMap;
use crate::primal_dual::{self, PDConfig, Regularizer};
use crate::refit::{self, SoftThresholdProvider};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    /// Reported but not counted towards the verdict.
    pub informational: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
            informational: false,
        }
    }
}

impl Check {
    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            passed: value >= bound,
            ..Self::at_most(name, value, bound)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Re-fitted soft thresholding is hard thresholding, `ρ = 1` on projectors.
    Thresholding,
    /// `JΦx̂ = x̂` for the analysis estimators.
    FixedPoint,
    /// Limit of the differentiated iterate on a 1D inpainting problem.
    IterateLimit,
    MonteCarlo,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Thresholding,
        Suite::FixedPoint,
        Suite::IterateLimit,
        Suite::MonteCarlo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Thresholding => "thresholding",
            Suite::FixedPoint => "fixed_point",
            Suite::IterateLimit => "iterate_limit",
            Suite::MonteCarlo => "montecarlo",
        }
    }

    /// Short names accepted in addition to [`Suite::as_str`].
    fn alias(&self) -> &'static str {
        match self {
            Suite::Thresholding => "prop7",
            Suite::FixedPoint => "thm20",
            Suite::IterateLimit => "thm21",
            Suite::MonteCarlo => "mc",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s || x.alias() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown suite '{s}' (thresholding|fixed_point|iterate_limit|montecarlo)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    pub draws: usize,
    /// Overrides the derivative inflation `β`; `Some(0.0)` in the
    /// convergence suite makes its checks informational.
    pub beta: Option<f64>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            draws: 20_000,
            beta: None,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed || c.informational)
}

pub fn format_table(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<w$}  {:>12}  {:>12}  result\n", "check", "value", "bound");
    for c in checks {
        let verdict = match (c.passed, c.informational) {
            (true, _) => "pass",
            (false, true) => "fail (informational)",
            (false, false) => "FAIL",
        };
        let _ = writeln!(s, "{:<w$}  {:>12.4e}  {:>12.4e}  {verdict}", c.name, c.value, c.bound);
    }
    s
}

pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> Result<Vec<Check>> {
    match suite {
        Suite::Thresholding => thresholding(opts),
        Suite::FixedPoint => fixed_point(opts),
        Suite::IterateLimit => iterate_limit(opts),
        Suite::MonteCarlo => montecarlo(opts),
    }
}

/// Plateaus `[start, end)` of a 1D signal whose jumps sit after the indices
/// in `jumps` (entries of the forward difference).
pub fn plateaus(n: usize, jumps: &[usize]) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = jumps.iter().filter(|&&j| j + 1 < n).map(|&j| j + 1).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        out.push((start, c));
        start = c;
    }
    out.push((start, n));
    out
}

/// Indicator basis of the plateaus, one column per plateau.
pub fn plateau_basis(n: usize, jumps: &[usize]) -> DMatrix<f64> {
    let pl = plateaus(n, jumps);
    let mut u = DMatrix::zeros(n, pl.len());
    for (k, &(a, b)) in pl.iter().enumerate() {
        for i in a..b {
            u[(i, k)] = 1.0;
        }
    }
    u
}

/// `U(ΦU)⁺y` for a 1D signal with plateau basis `U`.
pub fn plateau_least_squares(phi: &LinearMap, y: &Grid, jumps: &[usize]) -> Result<Grid> {
    let n = phi.in_space().len();
    let u = plateau_basis(n, jumps);
    let pu = phi.to_dense() * &u;
    let x = &u * (linalg::pinv(&pu) * linalg::to_dvector(y.as_slice()));
    Grid::from_vec(x.as_slice().to_vec())
}

fn thresholding(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut g = GaussianStream::with_stream(opts.seed, 1);

    // Soft thresholding: ΦJ = Id restricted to the support.
    let p = 256;
    let mut worst_rho: f64 = 0.0;
    let mut worst_entry: f64 = 0.0;
    let id = LinearMap::identity(p, 1);
    for _ in 0..20 {
        let y = Grid::from_vec(g.normals(p, 50.0))?;
        let lambda = 5.0 + 40.0 * (g.next_normal().abs().min(2.0));
        let r = refit::clear_two_step(&SoftThresholdProvider { lambda }, &id, &y)?;
        let hard = closed_form::hard_threshold(&y, lambda)?.estimate;
        worst_rho = worst_rho.max((r.rho - 1.0).abs());
        worst_entry = worst_entry.max((&r.refit - &hard).max_abs());
    }
    checks.push(Check::at_most("soft: |rho - 1|", worst_rho, 1e-8));
    checks.push(Check::at_most("soft: max |refit - hard|", worst_entry, 1e-12));

    // 1D anisotropic TV denoising: ΦJ projects onto piecewise constants.
    let x0 = phantom(PhantomId::Step1d, 64)?;
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(10.0, opts.seed))?;
    let gamma = LinearMap::forward_gradient_1d(64);
    let cfg = beta_cfg(tight(PDConfig::new(30.0, Regularizer::L1Analysis, &gamma)), opts);
    let res = primal_dual::solve_analysis(&phi, &gamma, &y, &cfg, &y)?;
    let r = refit::clear_one_step(&res.estimate, &res.jvp_out, &phi, &y)?;
    checks.push(Check::at_most("tv1d: |rho - 1|", (r.rho - 1.0).abs(), 1e-8));
    Ok(checks)
}

/// The suites compare against exact identities, so they run the solver well
/// past the default stopping point.
fn tight(cfg: PDConfig) -> PDConfig {
    cfg.with_rel_tol(1e-13).with_max_iters(200_000)
}

fn beta_cfg(cfg: PDConfig, opts: &ValidateOptions) -> PDConfig {
    match opts.beta {
        Some(b) => cfg.with_beta(b),
        None => cfg,
    }
}

fn fixed_point(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let x0 = phantom(PhantomId::Squares2d, 32)?;
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(20.0, opts.seed))?;
    let gamma = LinearMap::forward_gradient_2d(32, 32);
    let mut checks = Vec::new();
    for (name, reg) in [("aniso", Regularizer::L1Analysis), ("iso", Regularizer::L12Analysis)] {
        let cfg = beta_cfg(tight(PDConfig::new(20.0, reg, &gamma)), opts);
        let est = primal_dual::solve_estimate(&phi, &gamma, &y, &cfg)?.estimate;
        let d = Grid::new(32, 32, phi.apply(est.as_slice())?)?;
        let res = primal_dual::solve_analysis(&phi, &gamma, &y, &cfg, &d)?;
        let err = res.jvp_out.rel_err(&res.estimate);
        checks.push(Check::at_most(format!("{name}-tv: |J Phi x - x|/|x|"), err, 1e-5));
    }
    Ok(checks)
}

fn iterate_limit(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let x0 = phantom(PhantomId::Step1d, 64)?;
    let (y, phi) = degrade(&x0, &DegradationSpec::mask(0.25, 10.0, opts.seed))?;
    let gamma = LinearMap::forward_gradient_1d(64);
    let cfg = beta_cfg(tight(PDConfig::new(60.0, Regularizer::L1Analysis, &gamma)), opts);
    let res = primal_dual::solve_analysis(&phi, &gamma, &y, &cfg, &y)?;
    // The limit is only determined when Φ is injective on the plateaus.
    let pu = phi.to_dense() * plateau_basis(64, &res.gamma_support);
    let sv = pu.singular_values();
    let smin = sv.min() / sv.max().max(f64::MIN_POSITIVE);
    let target = plateau_least_squares(&phi, &y, &res.gamma_support)?;
    let informational = opts.beta == Some(0.0);
    let inj = Check::at_least("tv1d-inpaint: 1/cond(Phi U)", smin, 1e-8);
    let mut c = Check::at_most(
        "tv1d-inpaint: |x~ - U(PhiU)^+ y|/|.|",
        res.jvp_out.rel_err(&target),
        1e-5,
    );
    c.informational = informational;
    Ok(vec![inj, c])
}

fn montecarlo(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let r = run_montecarlo(&McConfig {
        draws: opts.draws,
        seed: opts.seed,
        ..McConfig::default()
    })?;
    Ok(vec![
        Check::at_most("cov: max |C - rho^2 J S J^T| / SE", r.cov_max_z, 5.0),
        Check::at_most("bias: max |b - (Id - rho J Phi)(x(z) - x0)| / SE", r.bias_max_z, 5.0),
        Check::at_most(
            "pred-bias: |E D - x0| - |E T - x0| (in SE)",
            (r.pred_bias_refit - r.pred_bias_tangent) / r.pred_bias_se,
            3.0,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_layout() {
        assert_eq!(plateaus(6, &[1, 3]), vec![(0, 2), (2, 4), (4, 6)]);
        assert_eq!(plateaus(4, &[3]), vec![(0, 4)]);
        let u = plateau_basis(4, &[0]);
        assert_eq!(u.ncols(), 2);
    }

    #[test]
    fn plateau_least_squares_averages_observed_samples() {
        let y = Grid::from_vec(vec![1.0, 3.0, 10.0, 20.0]).unwrap();
        let mask = Grid::from_vec(vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let phi = LinearMap::diagonal_mask(&mask);
        let x = plateau_least_squares(&phi, &y, &[1]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!((x[2] - 20.0).abs() < 1e-12 && (x[3] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn thresholding_suite_passes() {
        let checks = run_suite(Suite::Thresholding, &ValidateOptions::default()).unwrap();
        assert!(all_passed(&checks), "{}", format_table(&checks));
    }

    #[test]
    fn suite_names_parse() {
        for suite in Suite::ALL {
            assert_eq!(suite.as_str().parse::<Suite>().unwrap(), suite);
            assert_eq!(suite.alias().parse::<Suite>().unwrap(), suite);
        }
        assert!("all".parse::<Suite>().is_err());
    }

    #[test]
    fn table_lists_every_check() {
        let checks = vec![Check::at_most("a", 1.0, 2.0), Check::at_most("b", 3.0, 2.0)];
        let t = format_table(&checks);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("FAIL"));
        assert!(!all_passed(&checks));
    }
}
