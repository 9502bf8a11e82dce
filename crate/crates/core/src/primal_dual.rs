//! Chambolle-Pock for `½‖Φx − y‖² + λ‖Γx‖` (ℓ1 or ℓ1-ℓ2 analysis), run
//! jointly with its forward-mode derivative.
//!
//! The derivative iterates (`x̃`, `ṽ`, `z̃`) are driven by a direction `d` and
//! start from zero. At convergence `x̃ = J d`, where `J` is the Jacobian of the
//! solution map `y ↦ x̂(y)`. The dual derivative uses the projection
//! derivative on the `β`-inflated inactive set, which makes `x̃` converge to
//! the re-fitting even on degenerate dual certificates.

use nalgebra::Cholesky;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, VectorField};
use crate::linalg;
use crate::operators::{LinearMap, MapKind};

/// CG tolerance for the data resolvent when Φ has no closed-form inverse.
pub const RESOLVENT_CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `λ Σᵢ |(Γx)ᵢ|`, every component penalised separately.
    L1Analysis,
    /// `λ Σᵢ ‖(Γx)ᵢ‖₂`, components of a site coupled.
    L12Analysis,
}

#[derive(Debug, Clone)]
pub struct PDConfig {
    pub lambda: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub beta: f64,
    pub regularizer: Regularizer,
}

impl PDConfig {
    /// Defaults: `σ = τ = 0.99/‖Γ‖`, `θ = 1`, `β = 1e-8·λ`, `rel_tol = 1e-9`,
    /// `max_iters = 20000`.
    pub fn new(lambda: f64, regularizer: Regularizer, gamma: &LinearMap) -> Self {
        let step = 0.99 / gamma_norm_sq_bound(gamma).sqrt();
        Self {
            lambda,
            sigma: step,
            tau: step,
            theta: 1.0,
            max_iters: 20_000,
            rel_tol: 1e-9,
            beta: 1e-8 * lambda,
            regularizer,
        }
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Checks parameter ranges and `σ·τ·‖Γ‖² < 1`.
    pub fn validate(&self, gamma: &LinearMap) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.sigma > 0.0 && self.tau > 0.0) {
            return bad("step sizes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        let l = gamma.op_norm_sq(200, 0x5eed);
        if self.sigma * self.tau * l >= 1.0 {
            return bad(format!(
                "step sizes violate sigma*tau*|Gamma|^2 < 1 ({} * {} * {l})",
                self.sigma, self.tau
            ));
        }
        Ok(())
    }
}

/// Upper bound on `‖Γ‖²`: analytic for identity and gradients, a padded
/// power-iteration estimate otherwise.
pub fn gamma_norm_sq_bound(gamma: &LinearMap) -> f64 {
    match gamma.kind() {
        MapKind::Identity => 1.0,
        MapKind::ForwardGradient1d => 4.0,
        MapKind::ForwardGradient2d => 8.0,
        _ => gamma.op_norm_sq(500, 0x5eed) * 1.01,
    }
}

/// Iterates of the coupled scheme.
#[derive(Debug, Clone)]
pub struct PDState {
    pub x: Grid,
    pub v: Grid,
    pub z: VectorField,
    pub x_tilde: Grid,
    pub v_tilde: Grid,
    pub z_tilde: VectorField,
    pub iter: usize,
}

#[derive(Debug, Clone)]
pub struct PDResult {
    pub estimate: Grid,
    /// Jacobian of the solution map applied to the driving direction.
    pub jvp_out: Grid,
    pub iters_used: usize,
    pub final_rel_change: f64,
    pub converged: bool,
    /// Entries (ℓ1) or sites (ℓ1-ℓ2) where `Γx` exceeds `1e-6·max‖(Γx)ᵢ‖`.
    pub gamma_support: Vec<usize>,
    /// `(iteration, primal objective)` every 50 iterations.
    pub objective_trace: Vec<(usize, f64)>,
}

/// Componentwise clamp to `[−λ, λ]`.
pub fn project_linf(z: &VectorField, lambda: f64) -> VectorField {
    let data = z.as_slice().iter().map(|v| v.clamp(-lambda, lambda)).collect();
    VectorField::from_parts(z.sites(), z.comps(), data)
}

/// Radial clamp of each site vector to the ℓ2 ball of radius `λ`.
pub fn project_l2_rows(z: &VectorField, lambda: f64) -> VectorField {
    let mut out = z.clone();
    project_l2_in_place(out.as_mut_slice(), z.comps(), lambda);
    out
}

/// Derivative of [`project_linf`] at `z` applied to `z̃`: keeps `z̃ᵢ` where
/// `|zᵢ| ≤ λ + β`, zero elsewhere.
pub fn dproject_linf(z: &VectorField, z_tilde: &VectorField, lambda: f64, beta: f64) -> Result<VectorField> {
    z.check_same_shape(z_tilde)?;
    let mut out = z_tilde.clone();
    dproject_linf_in_place(z.as_slice(), out.as_mut_slice(), lambda + beta);
    Ok(out)
}

/// Derivative of [`project_l2_rows`] at `z` applied to `z̃`. On sites with
/// `‖zᵢ‖ > λ + β` the result is the component of `z̃ᵢ` orthogonal to `zᵢ`,
/// scaled by `λ/‖zᵢ‖`; elsewhere `z̃ᵢ` passes through.
pub fn dproject_l2_rows(z: &VectorField, z_tilde: &VectorField, lambda: f64, beta: f64) -> Result<VectorField> {
    z.check_same_shape(z_tilde)?;
    let mut out = z_tilde.clone();
    dproject_l2_in_place(z.as_slice(), out.as_mut_slice(), z.comps(), lambda, beta);
    Ok(out)
}

fn project_l2_in_place(z: &mut [f64], comps: usize, lambda: f64) {
    for site in z.chunks_exact_mut(comps) {
        let n = site.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > lambda {
            let s = lambda / n;
            site.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn project_linf_in_place(z: &mut [f64], lambda: f64) {
    z.iter_mut().for_each(|v| *v = v.clamp(-lambda, lambda));
}

fn dproject_linf_in_place(at: &[f64], zt: &mut [f64], radius: f64) {
    for (t, a) in zt.iter_mut().zip(at) {
        if a.abs() > radius {
            *t = 0.0;
        }
    }
}

fn dproject_l2_in_place(at: &[f64], zt: &mut [f64], comps: usize, lambda: f64, beta: f64) {
    for (t, a) in zt.chunks_exact_mut(comps).zip(at.chunks_exact(comps)) {
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > lambda + beta {
            let proj = t.iter().zip(a).map(|(ti, ai)| ti * ai).sum::<f64>() / (n * n);
            let s = lambda / n;
            for (ti, ai) in t.iter_mut().zip(a) {
                *ti = s * (*ti - proj * ai);
            }
        }
    }
}

/// Dual update rule used inside the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DualRule {
    /// The proper projections (soft-thresholding in the primal).
    Projection,
    /// Keep `zᵢ` inside the ball, zero it outside (hard-thresholding in the primal).
    Hard,
}

/// `(Id + τΦᵀΦ)⁻¹`, factorised once per solve.
pub(crate) enum Resolvent<'a> {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Dense(Cholesky<f64, nalgebra::Dyn>),
    Cg { phi: &'a LinearMap, tau: f64 },
}

impl<'a> Resolvent<'a> {
    pub(crate) fn new(phi: &'a LinearMap, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        Ok(match phi.kind() {
            MapKind::Identity => Resolvent::Scalar(1.0 / (1.0 + tau)),
            MapKind::DiagonalMask(m) => Resolvent::Diagonal(m.iter().map(|mi| 1.0 / (1.0 + tau * mi * mi)).collect()),
            MapKind::Dense(a) if a.ncols() <= crate::closed_form::DENSE_LIMIT => {
                let n = a.ncols();
                let m = nalgebra::DMatrix::identity(n, n) + tau * a.tr_mul(a);
                Resolvent::Dense(m.cholesky().ok_or_else(|| Error::Singular("resolvent".into()))?)
            }
            _ => Resolvent::Cg { phi, tau },
        })
    }

    /// Solves into `out`; `out` holds a warm start on entry for the CG path.
    pub(crate) fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        match self {
            Resolvent::Scalar(s) => {
                for (o, r) in out.iter_mut().zip(rhs) {
                    *o = s * r;
                }
            }
            Resolvent::Diagonal(w) => {
                for ((o, r), wi) in out.iter_mut().zip(rhs).zip(w) {
                    *o = wi * r;
                }
            }
            Resolvent::Dense(chol) => {
                let x = chol.solve(&linalg::to_dvector(rhs));
                out.copy_from_slice(x.as_slice());
            }
            Resolvent::Cg { phi, tau } => {
                let tmp = std::cell::RefCell::new(vec![0.0; phi.out_space().len()]);
                let warm = out.to_vec();
                let (x, _) = linalg::conjugate_gradient(
                    |u, o| {
                        let mut t = tmp.borrow_mut();
                        phi.apply_into(u, &mut t).expect("shape checked");
                        phi.adjoint_into(&t, o).expect("shape checked");
                        for (oi, ui) in o.iter_mut().zip(u) {
                            *oi = ui + *tau * *oi;
                        }
                    },
                    rhs,
                    Some(&warm),
                    RESOLVENT_CG_TOL,
                    10 * rhs.len().max(10),
                );
                out.copy_from_slice(&x);
            }
        }
    }
}

/// Solves `(Id + τΦᵀΦ)u = rhs`.
pub fn resolvent_data(phi: &LinearMap, tau: f64, rhs: &Grid) -> Result<Grid> {
    if rhs.len() != phi.in_space().len() {
        return Err(shape_err(phi.in_space(), format!("{} values", rhs.len())));
    }
    let r = Resolvent::new(phi, tau)?;
    let mut out = vec![0.0; rhs.len()];
    r.solve(rhs.as_slice(), &mut out);
    rhs.with_data(out)
}

/// `½‖Φx − y‖² + λ‖Γx‖₁` or `… + λ‖Γx‖₁,₂`.
pub fn primal_objective(
    phi: &LinearMap,
    gamma: &LinearMap,
    y: &Grid,
    x: &Grid,
    lambda: f64,
    reg: Regularizer,
) -> Result<f64> {
    let px = phi.apply(x.as_slice())?;
    let fit = 0.5 * linalg::dist(&px, y.as_slice()).powi(2);
    let gx = gamma.apply(x.as_slice())?;
    Ok(fit + lambda * regularizer_value(&gx, gamma.out_space().comps(), reg))
}

fn regularizer_value(gx: &[f64], comps: usize, reg: Regularizer) -> f64 {
    match reg {
        Regularizer::L1Analysis => gx.iter().map(|v| v.abs()).sum(),
        Regularizer::L12Analysis => gx
            .chunks_exact(comps)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum(),
    }
}

/// Runs the primal-dual iteration from zero together with its derivative in
/// direction `d`, returning the estimate and `J d`.
pub fn solve_analysis(phi: &LinearMap, gamma: &LinearMap, y: &Grid, cfg: &PDConfig, d: &Grid) -> Result<PDResult> {
    run(phi, gamma, y, cfg, Some(d), DualRule::Projection)
}

/// Plain solve without the derivative iterates.
pub fn solve_estimate(phi: &LinearMap, gamma: &LinearMap, y: &Grid, cfg: &PDConfig) -> Result<PDResult> {
    run(phi, gamma, y, cfg, None, DualRule::Projection)
}

pub(crate) fn run(
    phi: &LinearMap,
    gamma: &LinearMap,
    y: &Grid,
    cfg: &PDConfig,
    d: Option<&Grid>,
    rule: DualRule,
) -> Result<PDResult> {
    if y.len() != phi.out_space().len() {
        return Err(shape_err(phi.out_space(), format!("{} values", y.len())));
    }
    if phi.in_space() != gamma.in_space() {
        return Err(shape_err(phi.in_space(), gamma.in_space()));
    }
    if let Some(d) = d {
        if d.len() != y.len() {
            return Err(shape_err(format!("direction of length {}", y.len()), d.len()));
        }
    }
    cfg.validate(gamma)?;

    let in_space = phi.in_space();
    let (rows, cols) = match in_space {
        crate::operators::Space::Grid { rows, cols } => (rows, cols),
        s => (s.len(), 1),
    };
    let p = in_space.len();
    let gspace = gamma.out_space();
    let (m, comps) = (gspace.len(), gspace.comps());
    let (lambda, sigma, tau, theta, beta) = (cfg.lambda, cfg.sigma, cfg.tau, cfg.theta, cfg.beta);
    let resolvent = Resolvent::new(phi, tau)?;
    let with_tilde = d.is_some();

    let phit_y = phi.adjoint(y.as_slice())?;
    let phit_d = match d {
        Some(d) => phi.adjoint(d.as_slice())?,
        None => vec![0.0; p],
    };

    let mut st = PDState {
        x: Grid::zeros(rows, cols),
        v: Grid::zeros(rows, cols),
        z: VectorField::zeros(gspace.sites(), comps),
        x_tilde: Grid::zeros(rows, cols),
        v_tilde: Grid::zeros(rows, cols),
        z_tilde: VectorField::zeros(gspace.sites(), comps),
        iter: 0,
    };

    let mut gv = vec![0.0; m];
    let mut arg = vec![0.0; m];
    let mut gtz = vec![0.0; p];
    let mut rhs = vec![0.0; p];
    let mut x_new = vec![0.0; p];
    let mut trace = Vec::new();
    let mut rel_change = f64::INFINITY;
    let mut converged = false;

    while st.iter < cfg.max_iters {
        // Dual step; `arg` keeps the pre-projection point for the derivative.
        gamma.apply_into(st.v.as_slice(), &mut gv)?;
        for ((a, z), g) in arg.iter_mut().zip(st.z.as_slice()).zip(&gv) {
            *a = z + sigma * g;
        }
        {
            let z = st.z.as_mut_slice();
            z.copy_from_slice(&arg);
            match (cfg.regularizer, rule) {
                (Regularizer::L1Analysis, DualRule::Projection) => project_linf_in_place(z, lambda),
                (Regularizer::L12Analysis, DualRule::Projection) => project_l2_in_place(z, comps, lambda),
                (Regularizer::L1Analysis, DualRule::Hard) => {
                    z.iter_mut().for_each(|v| {
                        if v.abs() > lambda {
                            *v = 0.0
                        }
                    });
                }
                (Regularizer::L12Analysis, DualRule::Hard) => {
                    for site in z.chunks_exact_mut(comps) {
                        if site.iter().map(|v| v * v).sum::<f64>().sqrt() > lambda {
                            site.iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                }
            }
        }

        // Primal step.
        gamma.adjoint_into(st.z.as_slice(), &mut gtz)?;
        for i in 0..p {
            rhs[i] = st.x[i] + tau * (phit_y[i] - gtz[i]);
        }
        x_new.copy_from_slice(st.x.as_slice());
        resolvent.solve(&rhs, &mut x_new);
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..p {
            let dx = x_new[i] - st.x[i];
            diff_sq += dx * dx;
            norm_sq += st.x[i] * st.x[i];
            st.v[i] = x_new[i] + theta * dx;
        }
        st.x.as_mut_slice().copy_from_slice(&x_new);
        let mut change = diff_sq.sqrt() / norm_sq.sqrt().max(1e-12);

        if with_tilde {
            gamma.apply_into(st.v_tilde.as_slice(), &mut gv)?;
            {
                let zt = st.z_tilde.as_mut_slice();
                for (t, g) in zt.iter_mut().zip(&gv) {
                    *t += sigma * g;
                }
                match cfg.regularizer {
                    Regularizer::L1Analysis => dproject_linf_in_place(&arg, zt, lambda + beta),
                    Regularizer::L12Analysis => dproject_l2_in_place(&arg, zt, comps, lambda, beta),
                }
            }
            gamma.adjoint_into(st.z_tilde.as_slice(), &mut gtz)?;
            for i in 0..p {
                rhs[i] = st.x_tilde[i] + tau * (phit_d[i] - gtz[i]);
            }
            x_new.copy_from_slice(st.x_tilde.as_slice());
            resolvent.solve(&rhs, &mut x_new);
            let mut tdiff = 0.0;
            let mut tnorm = 0.0;
            for i in 0..p {
                let dx = x_new[i] - st.x_tilde[i];
                tdiff += dx * dx;
                tnorm += st.x_tilde[i] * st.x_tilde[i];
                st.v_tilde[i] = x_new[i] + theta * dx;
            }
            st.x_tilde.as_mut_slice().copy_from_slice(&x_new);
            // A zero direction yields identically zero derivative iterates.
            let t_change = if tnorm == 0.0 && tdiff == 0.0 {
                0.0
            } else {
                tdiff.sqrt() / tnorm.sqrt().max(1e-12)
            };
            change = change.max(t_change);
        }

        st.iter += 1;
        rel_change = change;
        if st.iter.is_multiple_of(50) {
            trace.push((
                st.iter,
                primal_objective(phi, gamma, y, &st.x, lambda, cfg.regularizer)?,
            ));
        }
        if !st.x.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("primal iterate at iteration {}", st.iter)));
        }
        if change <= cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let gamma_support = gamma_support(gamma, &st.x, cfg.regularizer)?;
    Ok(PDResult {
        estimate: st.x,
        jvp_out: st.x_tilde,
        iters_used: st.iter,
        final_rel_change: rel_change,
        converged,
        gamma_support,
        objective_trace: trace,
    })
}

/// Γ-support with threshold `1e-6·maxᵢ‖(Γx)ᵢ‖₂`. Indices are entries of `Γx`
/// for ℓ1, sites for ℓ1-ℓ2.
pub fn gamma_support(gamma: &LinearMap, x: &Grid, reg: Regularizer) -> Result<Vec<usize>> {
    let gx = gamma.apply(x.as_slice())?;
    let comps = gamma.out_space().comps();
    let mags: Vec<f64> = match reg {
        Regularizer::L1Analysis => gx.iter().map(|v| v.abs()).collect(),
        Regularizer::L12Analysis => gx
            .chunks_exact(comps)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect(),
    };
    let max = mags.iter().copied().fold(0.0, f64::max);
    let tol = 1e-6 * max;
    Ok(mags
        .iter()
        .enumerate()
        .filter(|(_, &v)| max > 0.0 && v > tol)
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::gaussian_blur_kernel;

    fn vf(comps: usize, v: &[f64]) -> VectorField {
        VectorField::new(v.len() / comps, comps, v.to_vec()).unwrap()
    }

    #[test]
    fn project_linf_examples() {
        let z = vf(1, &[0.5, -2.0]);
        assert_eq!(project_linf(&z, 1.0).as_slice(), &[0.5, -1.0]);
        assert_eq!(project_linf(&z, 0.0).as_slice(), &[0.0, 0.0]);
        let once = project_linf(&vf(1, &[3.0, -0.2, 1.5, -7.0]), 1.2);
        assert_eq!(project_linf(&once, 1.2), once);
    }

    #[test]
    fn project_l2_examples() {
        let p = project_l2_rows(&vf(2, &[3.0, 4.0]), 1.0);
        assert!((p.as_slice()[0] - 0.6).abs() < 1e-15 && (p.as_slice()[1] - 0.8).abs() < 1e-15);
        let inside = vf(2, &[0.3, 0.4, -0.1, 0.0]);
        assert_eq!(project_l2_rows(&inside, 1.0), inside);
        let once = project_l2_rows(&vf(2, &[3.0, 4.0, 0.1, 0.2, -5.0, 1.0]), 1.0);
        let twice = project_l2_rows(&once, 1.0);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(once.site_norms().iter().all(|&n| n <= 1.0 + 1e-15));
    }

    #[test]
    fn dproject_linf_examples() {
        let zt = vf(1, &[7.0, 7.0]);
        assert_eq!(
            dproject_linf(&vf(1, &[0.2, -0.9]), &zt, 1.0, 0.0).unwrap().as_slice(),
            &[7.0, 7.0]
        );
        assert_eq!(
            dproject_linf(&vf(1, &[3.0, -2.0]), &zt, 1.0, 0.0).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        assert_eq!(
            dproject_linf(&vf(1, &[0.5, 2.0]), &zt, 1.0, 0.0).unwrap().as_slice(),
            &[7.0, 0.0]
        );
        // β inflates the pass-through set.
        assert_eq!(
            dproject_linf(&vf(1, &[1.05]), &vf(1, &[7.0]), 1.0, 0.1)
                .unwrap()
                .as_slice(),
            &[7.0]
        );
        assert!(dproject_linf(&vf(1, &[1.0]), &zt, 1.0, 0.0).is_err());
    }

    #[test]
    fn dproject_l2_examples() {
        let out = dproject_l2_rows(&vf(2, &[2.0, 0.0]), &vf(2, &[5.0, 3.0]), 1.0, 0.0).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.5]);
        let inactive = dproject_l2_rows(&vf(2, &[0.3, 0.1]), &vf(2, &[5.0, 3.0]), 1.0, 0.0).unwrap();
        assert_eq!(inactive.as_slice(), &[5.0, 3.0]);
        let z = vf(2, &[1.3, -2.2, 0.4, 0.1, -3.0, 3.0]);
        let zt = vf(2, &[0.7, 0.9, -1.0, 2.0, 4.0, 1.0]);
        let out = dproject_l2_rows(&z, &zt, 1.0, 0.0).unwrap();
        for i in [0usize, 2] {
            let dot: f64 = out.site(i).iter().zip(z.site(i)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() <= 1e-12);
        }
    }

    #[test]
    fn resolvent_examples() {
        let rhs = Grid::from_vec(vec![2.0, -4.0, 6.0]).unwrap();
        let u = resolvent_data(&LinearMap::identity(3, 1), 1.0, &rhs).unwrap();
        assert_eq!(u.as_slice(), &[1.0, -2.0, 3.0]);
        let mask = Grid::from_vec(vec![1.0, 0.0, 1.0]).unwrap();
        let u = resolvent_data(&LinearMap::diagonal_mask(&mask), 0.5, &rhs).unwrap();
        assert_eq!(u.as_slice(), &[2.0 / 1.5, -4.0, 6.0 / 1.5]);

        let blur = LinearMap::circular_convolution(gaussian_blur_kernel(2.0, 6).unwrap(), 16, 16).unwrap();
        let rhs = Grid::new(16, 16, (0..256).map(|i| ((i * 7919) % 255) as f64).collect()).unwrap();
        let tau = 0.3;
        let u = resolvent_data(&blur, tau, &rhs).unwrap();
        let bu = blur.apply(u.as_slice()).unwrap();
        let btbu = blur.adjoint(&bu).unwrap();
        let res: Vec<f64> = (0..256).map(|i| u[i] + tau * btbu[i] - rhs[i]).collect();
        assert!(linalg::norm(&res) <= 1e-9 * rhs.norm());
        assert!(resolvent_data(&blur, 0.0, &rhs).is_err());
    }

    #[test]
    fn config_validation() {
        let g = LinearMap::forward_gradient_2d(8, 8);
        let cfg = PDConfig::new(1.0, Regularizer::L12Analysis, &g);
        assert!(cfg.validate(&g).is_ok());
        let mut bad = cfg.clone();
        bad.sigma = 1.0;
        bad.tau = 1.0;
        assert!(bad.validate(&g).is_err());
        let mut bad = cfg;
        bad.theta = 1.5;
        assert!(bad.validate(&g).is_err());
    }

    #[test]
    fn zero_lambda_returns_data() {
        let y = Grid::from_vec((0..32).map(|i| (i as f64 * 0.7).sin() * 30.0).collect()).unwrap();
        let g = LinearMap::forward_gradient_1d(32);
        let cfg = PDConfig::new(0.0, Regularizer::L1Analysis, &g).with_rel_tol(1e-12);
        let r = solve_analysis(&LinearMap::identity(32, 1), &g, &y, &cfg, &y).unwrap();
        assert!(r.estimate.rel_err(&y) <= 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn shape_errors() {
        let g = LinearMap::forward_gradient_1d(8);
        let cfg = PDConfig::new(1.0, Regularizer::L1Analysis, &g);
        let y = Grid::zeros(7, 1);
        assert!(solve_analysis(&LinearMap::identity(8, 1), &g, &y, &cfg, &y).is_err());
    }
}
