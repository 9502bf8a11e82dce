//! Named estimators with their re-fitting, as driven by sweeps and the CLI.

use std::fmt;
use std::str::FromStr;

use crate::closed_form::{self, TikhonovModel};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nlm::{self, NlmParams};
use crate::operators::{LinearMap, MapKind};
use crate::primal_dual::{self, PDConfig, Regularizer};
use crate::refit::{self, residual, JvpMode, RefitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    Tikhonov,
    TvAniso,
    TvIso,
    Lasso,
    Soft,
    Hard,
    Nlm,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::Tikhonov,
        EstimatorId::TvAniso,
        EstimatorId::TvIso,
        EstimatorId::Lasso,
        EstimatorId::Soft,
        EstimatorId::Hard,
        EstimatorId::Nlm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Tikhonov => "tikhonov",
            EstimatorId::TvAniso => "tv_aniso",
            EstimatorId::TvIso => "tv_iso",
            EstimatorId::Lasso => "lasso",
            EstimatorId::Soft => "soft",
            EstimatorId::Hard => "hard",
            EstimatorId::Nlm => "nlm",
        }
    }

    /// NLM is parameterised by its bandwidth `h`, everything else by `λ`.
    pub fn param_name(&self) -> &'static str {
        match self {
            EstimatorId::Nlm => "h",
            _ => "lambda",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvpChoice {
    Algorithmic,
    Fd,
}

impl JvpChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            JvpChoice::Algorithmic => "algorithmic",
            JvpChoice::Fd => "fd",
        }
    }
}

impl FromStr for JvpChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithmic" => Ok(JvpChoice::Algorithmic),
            "fd" => Ok(JvpChoice::Fd),
            _ => Err(Error::InvalidParameter(format!(
                "unknown jvp mode '{s}' (algorithmic|fd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    pub estimator: EstimatorId,
    /// `λ`, or `h` for NLM.
    pub param: f64,
    pub nlm_s: usize,
    pub nlm_b: usize,
    /// Noise level handed to NLM for its central weight.
    pub sigma_noise: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// `None` keeps the solver default `1e-8·λ`.
    pub beta: Option<f64>,
    pub jvp: JvpChoice,
}

impl EstimatorSettings {
    pub fn new(estimator: EstimatorId, param: f64) -> Self {
        Self {
            estimator,
            param,
            nlm_s: 7,
            nlm_b: 1,
            sigma_noise: 0.0,
            max_iters: 20_000,
            rel_tol: 1e-9,
            beta: None,
            jvp: JvpChoice::Algorithmic,
        }
    }

    pub fn with_param(&self, param: f64) -> Self {
        Self { param, ..self.clone() }
    }

    pub fn nlm_params(&self) -> NlmParams {
        NlmParams {
            s: self.nlm_s,
            b: self.nlm_b,
            h: self.param,
            sigma_noise: self.sigma_noise,
        }
    }

    /// Solver configuration for the analysis estimators.
    pub fn pd_config(&self, gamma: &LinearMap) -> Option<PDConfig> {
        let reg = match self.estimator {
            EstimatorId::TvAniso | EstimatorId::Lasso => Regularizer::L1Analysis,
            EstimatorId::TvIso => Regularizer::L12Analysis,
            _ => return None,
        };
        let mut cfg = PDConfig::new(self.param, reg, gamma)
            .with_max_iters(self.max_iters)
            .with_rel_tol(self.rel_tol);
        if let Some(b) = self.beta {
            cfg = cfg.with_beta(b);
        }
        Some(cfg)
    }

    /// The analysis operator `Γ` used by the estimator, if any.
    pub fn gamma_for(&self, rows: usize, cols: usize) -> Option<LinearMap> {
        match self.estimator {
            EstimatorId::Tikhonov | EstimatorId::TvAniso | EstimatorId::TvIso => {
                Some(LinearMap::gradient_for(rows, cols))
            }
            EstimatorId::Lasso => Some(LinearMap::identity(rows, cols)),
            _ => None,
        }
    }
}

/// Outcome of one estimate + re-fitting run.
#[derive(Debug, Clone)]
pub struct RefitRun {
    pub estimate: Grid,
    pub refit: Grid,
    pub rho: f64,
    /// Solver iterations (0 for closed forms).
    pub iters: usize,
    pub converged: bool,
    pub jvp_mode: JvpMode,
}

impl RefitRun {
    fn from_result(r: RefitResult, iters: usize, converged: bool, jvp_mode: JvpMode) -> Self {
        Self {
            estimate: r.estimate,
            refit: r.refit,
            rho: r.rho,
            iters,
            converged,
            jvp_mode,
        }
    }
}

fn require_denoising(id: EstimatorId, phi: &LinearMap) -> Result<()> {
    if matches!(phi.kind(), MapKind::Identity) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{id} is a denoiser and needs an identity forward operator"
        )))
    }
}

/// Two-step re-fitting with a forward-difference JVP of `est`, reusing the
/// estimate at `y`.
fn fd_refit(est: impl Fn(&Grid) -> Result<Grid>, estimate: Grid, phi: &LinearMap, y: &Grid) -> Result<RefitResult> {
    let delta = residual(phi, y, &estimate)?;
    let jd = if delta.max_abs() == 0.0 {
        Grid::zeros(estimate.rows(), estimate.cols())
    } else {
        let eps = refit::default_fd_step(y, &delta);
        let shifted = est(&(y + &delta.scale(eps)))?;
        (&shifted - &estimate).scale(1.0 / eps)
    };
    refit::refit_from_parts(estimate, delta, jd, phi)
}

/// Computes `x̂(y)` and its CLEAR re-fitting.
///
/// Analysis estimators with the algorithmic JVP use the one-step form from a
/// single differentiated solve in direction `y`; all others go through
/// `x̂(y)` then `J(y − Φx̂(y))`.
pub fn run_refit(settings: &EstimatorSettings, phi: &LinearMap, y: &Grid) -> Result<RefitRun> {
    let id = settings.estimator;
    let (rows, cols) = y.shape();
    let fd = settings.jvp == JvpChoice::Fd;
    match id {
        EstimatorId::Soft | EstimatorId::Hard => {
            require_denoising(id, phi)?;
            let lambda = settings.param;
            let est = |v: &Grid| -> Result<Grid> {
                Ok(if id == EstimatorId::Soft {
                    closed_form::soft_threshold(v, lambda)?.estimate
                } else {
                    closed_form::hard_threshold(v, lambda)?.estimate
                })
            };
            let r = if fd {
                fd_refit(est, est(y)?, phi, y)?
            } else if id == EstimatorId::Soft {
                refit::clear_two_step(&refit::SoftThresholdProvider { lambda }, phi, y)?
            } else {
                refit::clear_two_step(&refit::HardThresholdProvider { lambda }, phi, y)?
            };
            let mode = if fd {
                JvpMode::FiniteDifference
            } else {
                JvpMode::Analytic
            };
            Ok(RefitRun::from_result(r, 0, true, mode))
        }
        EstimatorId::Tikhonov => {
            let gamma = settings.gamma_for(rows, cols).expect("tikhonov has a gamma");
            let model = TikhonovModel::new(phi.clone(), gamma, settings.param)?;
            let r = if fd {
                fd_refit(|v| model.solve(v), model.solve(y)?, phi, y)?
            } else {
                refit::clear_two_step(&refit::TikhonovProvider(model), phi, y)?
            };
            let mode = if fd {
                JvpMode::FiniteDifference
            } else {
                JvpMode::Analytic
            };
            Ok(RefitRun::from_result(r, 0, true, mode))
        }
        EstimatorId::TvAniso | EstimatorId::TvIso | EstimatorId::Lasso => {
            let gamma = settings.gamma_for(rows, cols).expect("analysis has a gamma");
            let cfg = settings.pd_config(&gamma).expect("analysis has a config");
            if fd {
                let base = primal_dual::solve_estimate(phi, &gamma, y, &cfg)?;
                let est = |v: &Grid| Ok(primal_dual::solve_estimate(phi, &gamma, v, &cfg)?.estimate);
                let r = fd_refit(est, base.estimate, phi, y)?;
                Ok(RefitRun::from_result(
                    r,
                    base.iters_used,
                    base.converged,
                    JvpMode::FiniteDifference,
                ))
            } else {
                let res = primal_dual::solve_analysis(phi, &gamma, y, &cfg, y)?;
                let r = refit::clear_one_step(&res.estimate, &res.jvp_out, phi, y)?;
                Ok(RefitRun::from_result(
                    r,
                    res.iters_used,
                    res.converged,
                    JvpMode::Algorithmic,
                ))
            }
        }
        EstimatorId::Nlm => {
            require_denoising(id, phi)?;
            let params = settings.nlm_params();
            let r = if fd {
                fd_refit(|v| nlm::nlm(v, &params), nlm::nlm(y, &params)?, phi, y)?
            } else {
                refit::clear_two_step(&refit::NlmProvider { params }, phi, y)?
            };
            let mode = if fd {
                JvpMode::FiniteDifference
            } else {
                JvpMode::Algorithmic
            };
            Ok(RefitRun::from_result(r, 0, true, mode))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in EstimatorId::ALL {
            assert_eq!(e.as_str().parse::<EstimatorId>().unwrap(), e);
        }
        assert!("tv".parse::<EstimatorId>().is_err());
        assert_eq!("fd".parse::<JvpChoice>().unwrap(), JvpChoice::Fd);
    }

    #[test]
    fn soft_refit_is_hard_threshold() {
        let y = Grid::from_vec(vec![3.0, -0.5, 1.2, -4.0, 0.9]).unwrap();
        let run = run_refit(
            &EstimatorSettings::new(EstimatorId::Soft, 1.0),
            &LinearMap::identity(5, 1),
            &y,
        )
        .unwrap();
        let hard = closed_form::hard_threshold(&y, 1.0).unwrap().estimate;
        assert_eq!(run.refit, hard);
        assert_eq!(run.rho, 1.0);
    }

    #[test]
    fn denoisers_reject_masks() {
        let y = Grid::filled(8, 8, 1.0);
        let phi = LinearMap::diagonal_mask(&Grid::filled(8, 8, 1.0));
        assert!(run_refit(&EstimatorSettings::new(EstimatorId::Nlm, 100.0), &phi, &y).is_err());
    }

    #[test]
    fn tikhonov_fd_matches_analytic() {
        let y = Grid::new(6, 6, (0..36).map(|i| ((i * 7) % 11) as f64 * 10.0).collect()).unwrap();
        let phi = LinearMap::identity(6, 6);
        let mut s = EstimatorSettings::new(EstimatorId::Tikhonov, 2.0);
        let a = run_refit(&s, &phi, &y).unwrap();
        s.jvp = JvpChoice::Fd;
        let b = run_refit(&s, &phi, &y).unwrap();
        assert!(b.refit.rel_err(&a.refit) < 1e-6);
    }
}
