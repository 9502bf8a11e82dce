//! Covariant least-squares re-fitting and the related constructions.
//!
//! For an estimator `x̂` with Jacobian `J` at `y` and residual
//! `δ = y − Φx̂(y)`, the covariant re-fitting is
//!
//! ```text
//! R(y) = x̂(y) + ρ J δ,    ρ = ⟨ΦJδ, δ⟩ / ‖ΦJδ‖²   (ρ = 1 if ΦJδ = 0)
//! ```
//!
//! Estimators are consumed through [`JvpProvider`], which only needs to
//! evaluate `x̂(y)` and Jacobian-vector products.

use nalgebra::DMatrix;

use crate::closed_form::{self, TikhonovModel};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::nlm::{self, NlmParams};
use crate::operators::LinearMap;
use crate::primal_dual::{self, PDConfig};

/// `‖ΦJδ‖² ≤ RHO_GUARD·‖δ‖²` is treated as `ΦJδ = 0`.
pub const RHO_GUARD: f64 = 1e-12;

/// Relative singular-value cutoff for `(ΦJ)⁺`. Jacobians assembled from
/// iterative solvers carry noise near this level in their null directions.
pub const INVARIANT_RCOND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvpMode {
    Analytic,
    Algorithmic,
    FiniteDifference,
}

impl JvpMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            JvpMode::Analytic => "analytic",
            JvpMode::Algorithmic => "algorithmic",
            JvpMode::FiniteDifference => "fd",
        }
    }
}

/// An estimator `y ↦ x̂(y)` together with its Jacobian-vector product.
pub trait JvpProvider: Sync {
    fn estimate(&self, y: &Grid) -> Result<Grid>;

    /// `J_{x̂}(y) d`
    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid>;

    /// `(x̂(y), J d)`; providers that compute both in one pass override this.
    fn estimate_and_jvp(&self, y: &Grid, d: &Grid) -> Result<(Grid, Grid)> {
        Ok((self.estimate(y)?, self.jvp(y, d)?))
    }

    fn mode(&self) -> JvpMode;
}

#[derive(Debug, Clone)]
pub struct RefitResult {
    pub refit: Grid,
    pub estimate: Grid,
    pub rho: f64,
    /// `y − Φx̂(y)`
    pub delta: Grid,
    /// `J δ`
    pub jvp_delta: Grid,
    /// `⟨ΦJδ, δ⟩`
    pub num: f64,
    /// `‖ΦJδ‖²`
    pub den: f64,
}

/// `⟨ΦJδ, δ⟩/‖ΦJδ‖²`, or 1 when `‖ΦJδ‖² ≤ guard·‖δ‖²`.
pub fn rho(phi_j_delta: &[f64], delta: &[f64], guard: f64) -> f64 {
    let (num, den) = rho_parts(phi_j_delta, delta);
    rho_from_parts(num, den, linalg::dot(delta, delta), guard)
}

fn rho_parts(phi_j_delta: &[f64], delta: &[f64]) -> (f64, f64) {
    (linalg::dot(phi_j_delta, delta), linalg::dot(phi_j_delta, phi_j_delta))
}

fn rho_from_parts(num: f64, den: f64, delta_sq: f64, guard: f64) -> f64 {
    if den > guard * delta_sq && den > 0.0 {
        num / den
    } else {
        1.0
    }
}

pub(crate) fn residual(phi: &LinearMap, y: &Grid, x: &Grid) -> Result<Grid> {
    let px = phi.apply(x.as_slice())?;
    let r: Vec<f64> = y.as_slice().iter().zip(&px).map(|(a, b)| a - b).collect();
    y.with_data(r).map_err(|_| Error::NonFinite("residual y − Φx̂".into()))
}

fn ensure_finite(g: &Grid, what: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Re-fitting by two sequential evaluations: `x̂(y)`, then `J(y − Φx̂(y))`.
pub fn clear_two_step<P: JvpProvider + ?Sized>(provider: &P, phi: &LinearMap, y: &Grid) -> Result<RefitResult> {
    let estimate = provider.estimate(y)?;
    ensure_finite(&estimate, "estimate")?;
    let delta = residual(phi, y, &estimate)?;
    let jvp_delta = provider.jvp(y, &delta)?;
    refit_from_parts(estimate, delta, jvp_delta, phi)
}

/// Assembles the two-step re-fitting from `x̂(y)`, `δ` and `J δ` computed
/// elsewhere.
pub fn refit_from_parts(estimate: Grid, delta: Grid, jvp_delta: Grid, phi: &LinearMap) -> Result<RefitResult> {
    ensure_finite(&jvp_delta, "J applied to the residual")?;
    let pjd = phi.apply(jvp_delta.as_slice())?;
    let (num, den) = rho_parts(&pjd, delta.as_slice());
    let rho = rho_from_parts(num, den, delta.norm_sq(), RHO_GUARD);
    let refit = &estimate + &jvp_delta.scale(rho);
    ensure_finite(&refit, "refit")?;
    Ok(RefitResult {
        refit,
        estimate,
        rho,
        delta,
        jvp_delta,
        num,
        den,
    })
}

/// Re-fitting from `x̂(y)` and `J y` alone, valid when `JΦx̂(y) = x̂(y)`
/// (e.g. 1-homogeneous regularisers): `R = (1 − ρ)x̂ + ρJy`.
pub fn clear_one_step(estimate: &Grid, jvp_y: &Grid, phi: &LinearMap, y: &Grid) -> Result<RefitResult> {
    estimate.check_same_shape(jvp_y)?;
    ensure_finite(jvp_y, "J y")?;
    let delta = residual(phi, y, estimate)?;
    let jd = jvp_y - estimate;
    let pjd = phi.apply(jd.as_slice())?;
    let (num, den) = rho_parts(&pjd, delta.as_slice());
    let rho = rho_from_parts(num, den, delta.norm_sq(), RHO_GUARD);
    let refit = &estimate.scale(1.0 - rho) + &jvp_y.scale(rho);
    Ok(RefitResult {
        refit,
        estimate: estimate.clone(),
        rho,
        delta,
        jvp_delta: jd,
        num,
        den,
    })
}

/// The guess-based re-fitting `D_{x̂,z}`, frozen at the guess `z`.
///
/// It is affine in `y`: `D(y) = x̂(z) + ρ J_z (y − Φx̂(z))` with `ρ` computed
/// from `δ = z − Φx̂(z)`.
pub struct GuessRefit<'a, P: JvpProvider + ?Sized> {
    provider: &'a P,
    phi: &'a LinearMap,
    z: Grid,
    pub estimate_at_guess: Grid,
    pub rho: f64,
}

impl<'a, P: JvpProvider + ?Sized> GuessRefit<'a, P> {
    pub fn new(provider: &'a P, phi: &'a LinearMap, z: &Grid) -> Result<Self> {
        let x_z = provider.estimate(z)?;
        let delta = residual(phi, z, &x_z)?;
        let jd = provider.jvp(z, &delta)?;
        let pjd = phi.apply(jd.as_slice())?;
        let rho = rho(&pjd, delta.as_slice(), RHO_GUARD);
        Ok(Self {
            provider,
            phi,
            z: z.clone(),
            estimate_at_guess: x_z,
            rho,
        })
    }

    pub fn apply(&self, y: &Grid) -> Result<Grid> {
        let r = residual(self.phi, y, &self.estimate_at_guess)?;
        let jr = self.provider.jvp(&self.z, &r)?;
        Ok(&self.estimate_at_guess + &jr.scale(self.rho))
    }
}

/// `D_{x̂,z}(y) = x̂(z) + ρJ(y − Φx̂(z))`, `J` and `ρ` taken at `z`.
pub fn guess_based_refit<P: JvpProvider + ?Sized>(provider: &P, phi: &LinearMap, z: &Grid, y: &Grid) -> Result<Grid> {
    GuessRefit::new(provider, phi, z)?.apply(y)
}

/// First-order model of the estimator at `z`: `x̂(z) + J(y − z)`.
pub fn tangent_estimator<P: JvpProvider + ?Sized>(provider: &P, z: &Grid, y: &Grid) -> Result<Grid> {
    let x_z = provider.estimate(z)?;
    let jd = provider.jvp(z, &(y - z))?;
    Ok(&x_z + &jd)
}

/// Default finite-difference step: `1e-6·max(‖y‖∞, 1)/max(‖d‖∞, 1e-12)`.
pub fn default_fd_step(y: &Grid, d: &Grid) -> f64 {
    1e-6 * y.max_abs().max(1.0) / d.max_abs().max(1e-12)
}

/// Forward difference `(x̂(y + εd) − x̂(y))/ε`.
pub fn fd_jvp(estimator: impl Fn(&Grid) -> Result<Grid>, y: &Grid, d: &Grid, eps: Option<f64>) -> Result<Grid> {
    y.check_same_shape(d)?;
    if d.max_abs() == 0.0 {
        let x = estimator(y)?;
        return Ok(Grid::zeros(x.rows(), x.cols()));
    }
    let eps = eps.unwrap_or_else(|| default_fd_step(y, d));
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let x0 = estimator(y)?;
    let x1 = estimator(&(y + &d.scale(eps)))?;
    Ok((&x1 - &x0).scale(1.0 / eps))
}

/// Central difference `(x̂(y + εd) − x̂(y − εd))/(2ε)`.
pub fn fd_jvp_central(estimator: impl Fn(&Grid) -> Result<Grid>, y: &Grid, d: &Grid, eps: Option<f64>) -> Result<Grid> {
    y.check_same_shape(d)?;
    if d.max_abs() == 0.0 {
        let x = estimator(y)?;
        return Ok(Grid::zeros(x.rows(), x.cols()));
    }
    let eps = eps.unwrap_or_else(|| default_fd_step(y, d));
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let xp = estimator(&(y + &d.scale(eps)))?;
    let xm = estimator(&(y - &d.scale(eps)))?;
    Ok((&xp - &xm).scale(0.5 / eps))
}

/// Dense Jacobian, one JVP per canonical basis vector of the data space.
pub fn dense_jacobian<P: JvpProvider + ?Sized>(provider: &P, y: &Grid) -> Result<DMatrix<f64>> {
    let n = y.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = Grid::zeros(y.rows(), y.cols());
        e[k] = 1.0;
        cols.push(provider.jvp(y, &e)?);
    }
    let p = cols.first().map_or(0, Grid::len);
    let mut j = DMatrix::zeros(p, n);
    for (k, c) in cols.iter().enumerate() {
        j.column_mut(k).copy_from_slice(c.as_slice());
    }
    Ok(j)
}

/// Invariant re-fitting `x̂ + J(ΦJ)⁺(y − Φx̂)` with an explicit Jacobian.
/// Intended as a comparator on small problems.
pub fn invariant_refit_dense<P: JvpProvider + ?Sized>(provider: &P, phi: &LinearMap, y: &Grid) -> Result<Grid> {
    let n = y.len();
    if n > closed_form::DENSE_LIMIT || phi.in_space().len() > closed_form::DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense invariant refit limited to {} unknowns",
            closed_form::DENSE_LIMIT
        )));
    }
    let estimate = provider.estimate(y)?;
    let j = dense_jacobian(provider, y)?;
    invariant_refit_from_jacobian(&j, phi, y, &estimate)
}

/// Invariant re-fitting from a precomputed Jacobian matrix.
pub fn invariant_refit_from_jacobian(j: &DMatrix<f64>, phi: &LinearMap, y: &Grid, estimate: &Grid) -> Result<Grid> {
    let delta = residual(phi, y, estimate)?;
    let phi_j = phi.to_dense() * j;
    let corr = j * (linalg::pinv_rcond(&phi_j, INVARIANT_RCOND) * linalg::to_dvector(delta.as_slice()));
    let out: Vec<f64> = estimate
        .as_slice()
        .iter()
        .zip(corr.iter())
        .map(|(a, b)| a + b)
        .collect();
    estimate.with_data(out)
}

fn check_steps(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidParameter("boosting needs at least one step".into()))
    } else {
        Ok(())
    }
}

/// Residual boosting: `x̃⁰ = 0`, `x̃ᵏ⁺¹ = x̃ᵏ + x̂(y − Φx̃ᵏ)`. Returns `x̃ᵏ`.
pub fn boost_twicing(estimator: impl Fn(&Grid) -> Result<Grid>, phi: &LinearMap, y: &Grid, k: usize) -> Result<Grid> {
    check_steps(k)?;
    let mut x = estimator(y)?;
    for _ in 1..k {
        let r = residual(phi, y, &x)?;
        x = &x + &estimator(&r)?;
    }
    Ok(x)
}

/// Iterative Bregman refinement: `x̃ᵏ⁺¹ = x̂(y + Σᵢ₌₁ᵏ (y − Φx̃ⁱ))`.
pub fn boost_bregman(estimator: impl Fn(&Grid) -> Result<Grid>, phi: &LinearMap, y: &Grid, k: usize) -> Result<Grid> {
    check_steps(k)?;
    let mut x = estimator(y)?;
    let mut acc = Grid::zeros(y.rows(), y.cols());
    for _ in 1..k {
        acc = &acc + &residual(phi, y, &x)?;
        x = estimator(&(y + &acc))?;
    }
    Ok(x)
}

/// SOS boosting: `x̃⁰ = 0`, `x̃ᵏ⁺¹ = τ x̂(y + αΦx̃ᵏ) − (τα + τ − 1) x̃ᵏ`.
pub fn boost_sos(
    estimator: impl Fn(&Grid) -> Result<Grid>,
    phi: &LinearMap,
    y: &Grid,
    k: usize,
    alpha: f64,
    tau: f64,
) -> Result<Grid> {
    check_steps(k)?;
    let (rows, cols) = match phi.in_space() {
        crate::operators::Space::Grid { rows, cols } => (rows, cols),
        s => (s.len(), 1),
    };
    let mut x = Grid::zeros(rows, cols);
    for _ in 0..k {
        let px = phi.apply(x.as_slice())?;
        let arg: Vec<f64> = y.as_slice().iter().zip(&px).map(|(a, b)| a + alpha * b).collect();
        let est = estimator(&y.with_data(arg)?)?;
        x = &est.scale(tau) - &x.scale(tau * alpha + tau - 1.0);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Providers

pub struct SoftThresholdProvider {
    pub lambda: f64,
}

impl JvpProvider for SoftThresholdProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        Ok(closed_form::soft_threshold(y, self.lambda)?.estimate)
    }

    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid> {
        y.check_same_shape(d)?;
        Ok(y.zip_map(d, |yi, di| if yi.abs() > self.lambda { di } else { 0.0 }))
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Analytic
    }
}

pub struct HardThresholdProvider {
    pub lambda: f64,
}

impl JvpProvider for HardThresholdProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        Ok(closed_form::hard_threshold(y, self.lambda)?.estimate)
    }

    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid> {
        y.check_same_shape(d)?;
        Ok(y.zip_map(d, |yi, di| if yi.abs() > self.lambda { di } else { 0.0 }))
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Analytic
    }
}

pub struct TikhonovProvider(pub TikhonovModel);

impl JvpProvider for TikhonovProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        self.0.solve(y)
    }

    fn jvp(&self, _y: &Grid, d: &Grid) -> Result<Grid> {
        self.0.jvp(d)
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Analytic
    }
}

/// `x̂(y) = W y` for an explicit matrix `W` acting on 1D signals.
pub struct LinearProvider {
    pub w: DMatrix<f64>,
}

impl LinearProvider {
    fn mul(&self, v: &Grid) -> Result<Grid> {
        if v.len() != self.w.ncols() {
            return Err(crate::error::shape_err(self.w.ncols(), v.len()));
        }
        let out = &self.w * linalg::to_dvector(v.as_slice());
        Grid::from_vec(out.as_slice().to_vec())
    }
}

impl JvpProvider for LinearProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        self.mul(y)
    }

    fn jvp(&self, _y: &Grid, d: &Grid) -> Result<Grid> {
        self.mul(d)
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Analytic
    }
}

/// Affine-constrained least squares `b + A(ΦA)⁺(y − Φb)`; `J = A(ΦA)⁺`.
pub struct ConstrainedLsProvider {
    pub phi: LinearMap,
    pub a: DMatrix<f64>,
    pub b: Grid,
}

impl JvpProvider for ConstrainedLsProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        closed_form::solve_constrained_ls(&self.phi, y, &self.a, &self.b)
    }

    fn jvp(&self, _y: &Grid, d: &Grid) -> Result<Grid> {
        let pa = self.phi.to_dense() * &self.a;
        let v = &self.a * (linalg::pinv(&pa) * linalg::to_dvector(d.as_slice()));
        self.b.with_data(v.as_slice().to_vec())
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Analytic
    }
}

/// ℓ1 / ℓ1-ℓ2 analysis solved by the differentiated primal-dual scheme.
pub struct AnalysisProvider {
    pub phi: LinearMap,
    pub gamma: LinearMap,
    pub cfg: PDConfig,
}

impl JvpProvider for AnalysisProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        Ok(primal_dual::solve_estimate(&self.phi, &self.gamma, y, &self.cfg)?.estimate)
    }

    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid> {
        Ok(primal_dual::solve_analysis(&self.phi, &self.gamma, y, &self.cfg, d)?.jvp_out)
    }

    fn estimate_and_jvp(&self, y: &Grid, d: &Grid) -> Result<(Grid, Grid)> {
        let r = primal_dual::solve_analysis(&self.phi, &self.gamma, y, &self.cfg, d)?;
        Ok((r.estimate, r.jvp_out))
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Algorithmic
    }
}

pub struct NlmProvider {
    pub params: NlmParams,
}

impl JvpProvider for NlmProvider {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        nlm::nlm(y, &self.params)
    }

    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid> {
        Ok(nlm::nlm_with_jvp(y, d, &self.params)?.jvp)
    }

    fn estimate_and_jvp(&self, y: &Grid, d: &Grid) -> Result<(Grid, Grid)> {
        let o = nlm::nlm_with_jvp(y, d, &self.params)?;
        Ok((o.estimate, o.jvp))
    }

    fn mode(&self) -> JvpMode {
        JvpMode::Algorithmic
    }
}

/// Wraps any provider and replaces its JVP with finite differences of the
/// estimate, treating the estimator as a black box.
pub struct FiniteDifferenceProvider<P> {
    pub inner: P,
    /// Fixed step; `None` uses [`default_fd_step`].
    pub eps: Option<f64>,
    pub central: bool,
}

impl<P: JvpProvider> FiniteDifferenceProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            eps: None,
            central: false,
        }
    }
}

impl<P: JvpProvider> JvpProvider for FiniteDifferenceProvider<P> {
    fn estimate(&self, y: &Grid) -> Result<Grid> {
        self.inner.estimate(y)
    }

    fn jvp(&self, y: &Grid, d: &Grid) -> Result<Grid> {
        let f = |v: &Grid| self.inner.estimate(v);
        if self.central {
            fd_jvp_central(f, y, d, self.eps)
        } else {
            fd_jvp(f, y, d, self.eps)
        }
    }

    fn mode(&self) -> JvpMode {
        JvpMode::FiniteDifference
    }
}
