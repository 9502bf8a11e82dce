//! Estimators with analytic solutions and analytic Jacobians.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{shape_err, Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::operators::{LinearMap, Space};

/// Largest problem size solved through an explicit dense factorisation.
pub const DENSE_LIMIT: usize = 2000;

/// Output of a thresholding rule along with its support `{i : |yᵢ| > λ}`.
#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub estimate: Grid,
    pub support: Vec<usize>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {lambda}"
        )))
    }
}

fn threshold_support(y: &Grid, lambda: f64) -> Vec<usize> {
    y.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > lambda)
        .map(|(i, _)| i)
        .collect()
}

pub fn soft_threshold(y: &Grid, lambda: f64) -> Result<ThresholdResult> {
    check_lambda(lambda)?;
    let estimate = y.map(|v| if v.abs() > lambda { v - lambda * v.signum() } else { 0.0 });
    Ok(ThresholdResult {
        estimate,
        support: threshold_support(y, lambda),
    })
}

pub fn hard_threshold(y: &Grid, lambda: f64) -> Result<ThresholdResult> {
    check_lambda(lambda)?;
    let estimate = y.map(|v| if v.abs() > lambda { v } else { 0.0 });
    Ok(ThresholdResult {
        estimate,
        support: threshold_support(y, lambda),
    })
}

/// Minimum-norm least squares over the affine set `b + Im[A]`:
/// `x = b + A(ΦA)⁺(y − Φb)`.
pub fn solve_constrained_ls(phi: &LinearMap, y: &Grid, a: &DMatrix<f64>, b: &Grid) -> Result<Grid> {
    let p = phi.in_space().len();
    if a.nrows() != p || b.len() != p {
        return Err(shape_err(
            format!("A with {p} rows and b of length {p}"),
            format!("A {}x{}, b of length {}", a.nrows(), a.ncols(), b.len()),
        ));
    }
    if y.len() != phi.out_space().len() {
        return Err(shape_err(phi.out_space(), format!("{} values", y.len())));
    }
    let phi_a = phi.to_dense() * a;
    let resid: Vec<f64> = y
        .as_slice()
        .iter()
        .zip(phi.apply(b.as_slice())?)
        .map(|(yi, pb)| yi - pb)
        .collect();
    let t = linalg::pinv(&phi_a) * linalg::to_dvector(&resid);
    let x = a * t;
    let out: Vec<f64> = b.as_slice().iter().zip(x.iter()).map(|(bi, xi)| bi + xi).collect();
    b.with_data(out)
}

enum TikhonovSolver {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Iterative,
}

/// `x̂(y) = (ΦᵀΦ + λΓᵀΓ)⁻¹Φᵀy` with a cached factorisation.
///
/// Problems up to [`DENSE_LIMIT`] unknowns are factorised with Cholesky after
/// checking that the normal matrix is positive definite; larger ones fall back
/// to conjugate gradients (tolerance 1e-10, at most `10·p` iterations).
pub struct TikhonovModel {
    phi: LinearMap,
    gamma: LinearMap,
    lambda: f64,
    solver: TikhonovSolver,
}

impl std::fmt::Debug for TikhonovModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TikhonovModel")
            .field("phi", &self.phi.name())
            .field("gamma", &self.gamma.name())
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl TikhonovModel {
    pub fn new(phi: LinearMap, gamma: LinearMap, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Tikhonov weight must be positive, got {lambda}"
            )));
        }
        if phi.in_space().len() != gamma.in_space().len() {
            return Err(shape_err(phi.in_space(), gamma.in_space()));
        }
        let p = phi.in_space().len();
        let solver = if p <= DENSE_LIMIT {
            let pd = phi.to_dense();
            let gd = gamma.to_dense();
            let m = pd.tr_mul(&pd) + lambda * gd.tr_mul(&gd);
            let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
            if min_eig <= 1e-10 {
                return Err(Error::Singular(format!(
                    "Ker Φ ∩ Ker Γ is not trivial (smallest eigenvalue {min_eig:e})"
                )));
            }
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::Singular("Cholesky factorisation failed".into()))?;
            TikhonovSolver::Dense(chol)
        } else {
            TikhonovSolver::Iterative
        };
        Ok(Self {
            phi,
            gamma,
            lambda,
            solver,
        })
    }

    pub fn phi(&self) -> &LinearMap {
        &self.phi
    }

    pub fn gamma(&self) -> &LinearMap {
        &self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn out_grid(&self, data: Vec<f64>) -> Grid {
        match self.phi.in_space() {
            Space::Grid { rows, cols } => Grid::from_parts(rows, cols, data),
            s => Grid::from_parts(s.len(), 1, data),
        }
    }

    /// Solves `(ΦᵀΦ + λΓᵀΓ)x = rhs`.
    fn solve_normal(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            TikhonovSolver::Dense(chol) => Ok(chol.solve(&linalg::to_dvector(rhs)).as_slice().to_vec()),
            TikhonovSolver::Iterative => {
                let p = rhs.len();
                let (x, rep) = linalg::conjugate_gradient(
                    |u, out| {
                        let pu = self.phi.apply(u).expect("shape checked");
                        let ptpu = self.phi.adjoint(&pu).expect("shape checked");
                        let gu = self.gamma.apply(u).expect("shape checked");
                        let gtgu = self.gamma.adjoint(&gu).expect("shape checked");
                        for i in 0..p {
                            out[i] = ptpu[i] + self.lambda * gtgu[i];
                        }
                    },
                    rhs,
                    None,
                    1e-10,
                    10 * p,
                );
                if rep.rel_residual > 1e-10 {
                    return Err(Error::Singular(format!(
                        "CG stalled at relative residual {:e}",
                        rep.rel_residual
                    )));
                }
                Ok(x)
            }
        }
    }

    pub fn solve(&self, y: &Grid) -> Result<Grid> {
        let rhs = self.phi.adjoint(y.as_slice())?;
        Ok(self.out_grid(self.solve_normal(&rhs)?))
    }

    /// Applies the (constant) Jacobian `(ΦᵀΦ + λΓᵀΓ)⁻¹Φᵀ` to `d`.
    pub fn jvp(&self, d: &Grid) -> Result<Grid> {
        self.solve(d)
    }

    /// Explicit Jacobian matrix, `p × n`.
    pub fn jacobian_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.phi.out_space().len();
        let p = self.phi.in_space().len();
        let mut j = DMatrix::zeros(p, n);
        let mut e = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            let rhs = self.phi.adjoint(&e)?;
            j.column_mut(k).copy_from_slice(&self.solve_normal(&rhs)?);
            e[k] = 0.0;
        }
        Ok(j)
    }

    /// Gradient of `½‖Φx − y‖² + (λ/2)‖Γx‖²` at `x`.
    pub fn objective_gradient(&self, x: &Grid, y: &Grid) -> Result<Vec<f64>> {
        let mut r = self.phi.apply(x.as_slice())?;
        for (ri, yi) in r.iter_mut().zip(y.as_slice()) {
            *ri -= yi;
        }
        let mut g = self.phi.adjoint(&r)?;
        let gx = self.gamma.apply(x.as_slice())?;
        linalg::axpy(self.lambda, &self.gamma.adjoint(&gx)?, &mut g);
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(v: &[f64]) -> Grid {
        Grid::from_vec(v.to_vec()).unwrap()
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn soft_threshold_examples() {
        let r = soft_threshold(&g(&[2.0, -0.5, 1.0]), 1.0).unwrap();
        assert_eq!(r.estimate.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(r.support, vec![0]);
        let y = g(&[2.0, -0.5, 0.0, 3.5]);
        assert_eq!(soft_threshold(&y, 0.0).unwrap().estimate, y);
        assert_eq!(soft_threshold(&g(&[-3.0]), 1.0).unwrap().estimate.as_slice(), &[-2.0]);
        assert!(soft_threshold(&y, -1.0).is_err());
    }

    #[test]
    fn hard_threshold_examples() {
        let r = hard_threshold(&g(&[2.0, -0.5, 1.0]), 1.0).unwrap();
        assert_eq!(r.estimate.as_slice(), &[2.0, 0.0, 0.0]);
        let y = g(&[2.0, -0.5, 0.0, 3.5]);
        assert_eq!(hard_threshold(&y, 0.0).unwrap().estimate, y);
        assert_eq!(hard_threshold(&g(&[1.0]), 1.0).unwrap().estimate.as_slice(), &[0.0]);
    }

    #[test]
    fn soft_and_hard_share_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let y = g(&(0..40).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect::<Vec<_>>());
            let lam = rng.random::<f64>() * 2.0;
            let s = soft_threshold(&y, lam).unwrap();
            let h = hard_threshold(&y, lam).unwrap();
            assert_eq!(s.support, h.support);
            for i in 0..y.len() {
                if !s.support.contains(&i) {
                    assert_eq!(s.estimate[i], 0.0);
                } else {
                    assert!(s.estimate[i] != 0.0);
                }
            }
        }
    }

    #[test]
    fn constrained_ls_unconstrained_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = rand_mat(&mut rng, 5, 5) + DMatrix::identity(5, 5) * 3.0;
        let phi = LinearMap::dense_1d(m.clone());
        let y = g(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let x = solve_constrained_ls(&phi, &y, &DMatrix::identity(5, 5), &Grid::zeros(5, 1)).unwrap();
        let direct = m.lu().solve(&linalg::to_dvector(y.as_slice())).unwrap();
        assert!(linalg::dist(x.as_slice(), direct.as_slice()) < 1e-10);
    }

    #[test]
    fn constrained_ls_zero_residual_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = LinearMap::dense_1d(rand_mat(&mut rng, 8, 6));
        let a = rand_mat(&mut rng, 6, 3);
        let b = g(&(0..6).map(|i| i as f64).collect::<Vec<_>>());
        let t0 = linalg::to_dvector(&[0.5, -1.0, 2.0]);
        let x_true: Vec<f64> = (&a * t0).iter().zip(b.as_slice()).map(|(u, v)| u + v).collect();
        let y = g(&phi.apply(&x_true).unwrap());
        let x = solve_constrained_ls(&phi, &y, &a, &b).unwrap();
        let px = phi.apply(x.as_slice()).unwrap();
        assert!(linalg::dist(&px, y.as_slice()) < 1e-10 * y.norm());
    }

    #[test]
    fn constrained_ls_random_vs_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi_m = rand_mat(&mut rng, 8, 6);
        let phi = LinearMap::dense_1d(phi_m.clone());
        let a = rand_mat(&mut rng, 6, 4);
        let b = g(&(0..6).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let y = g(&(0..8).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let x = solve_constrained_ls(&phi, &y, &a, &b).unwrap();
        // Oracle: ΦA has full column rank, so t solves the normal equations.
        let pa = &phi_m * &a;
        let rhs = pa.tr_mul(&(linalg::to_dvector(y.as_slice()) - &phi_m * linalg::to_dvector(b.as_slice())));
        let t = (pa.tr_mul(&pa)).lu().solve(&rhs).unwrap();
        let oracle = linalg::to_dvector(b.as_slice()) + &a * t;
        assert!(linalg::dist(x.as_slice(), oracle.as_slice()) <= 1e-10 * oracle.norm());
        // Residual orthogonal to Im[ΦA].
        let r = linalg::to_dvector(&phi.apply(x.as_slice()).unwrap()) - linalg::to_dvector(y.as_slice());
        assert!(pa.tr_mul(&r).norm() < 1e-10);
    }

    #[test]
    fn tikhonov_examples() {
        let y = g(&[1.0, -2.0, 3.0, 0.5]);
        let model = TikhonovModel::new(LinearMap::identity(4, 1), LinearMap::identity(4, 1), 1.0).unwrap();
        let x = model.solve(&y).unwrap();
        for i in 0..4 {
            assert!((x[i] - y[i] / 2.0).abs() < 1e-15);
        }
        let d = g(&[0.3, 0.1, -0.7, 2.0]);
        let jd = model.jvp(&d).unwrap();
        for i in 0..4 {
            assert!((jd[i] - d[i] / 2.0).abs() < 1e-15);
        }
        assert_eq!(model.jvp(&Grid::zeros(4, 1)).unwrap().norm(), 0.0);

        let big = TikhonovModel::new(LinearMap::identity(4, 1), LinearMap::identity(4, 1), 1e8).unwrap();
        assert!(big.solve(&y).unwrap().norm() <= 1e-6 * y.norm());
    }

    #[test]
    fn tikhonov_rejects_singular_system() {
        // Φ masks everything, Γ is a gradient whose kernel holds constants.
        let phi = LinearMap::diagonal_mask(&Grid::zeros(6, 1));
        let err = TikhonovModel::new(phi, LinearMap::forward_gradient_1d(6), 1.0);
        assert!(matches!(err, Err(Error::Singular(_))));
        assert!(TikhonovModel::new(LinearMap::identity(3, 1), LinearMap::identity(3, 1), 0.0).is_err());
    }

    #[test]
    fn tikhonov_random_vs_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pm = rand_mat(&mut rng, 12, 12);
        let gm = rand_mat(&mut rng, 12, 12);
        let lam = 0.7;
        let model = TikhonovModel::new(LinearMap::dense_1d(pm.clone()), LinearMap::dense_1d(gm.clone()), lam).unwrap();
        let y = g(&(0..12).map(|_| rng.random::<f64>() * 10.0).collect::<Vec<_>>());
        let x = model.solve(&y).unwrap();
        let m = pm.tr_mul(&pm) + lam * gm.tr_mul(&gm);
        let oracle = m.lu().solve(&pm.tr_mul(&linalg::to_dvector(y.as_slice()))).unwrap();
        assert!(linalg::dist(x.as_slice(), oracle.as_slice()) <= 1e-10 * oracle.norm());
        let grad = model.objective_gradient(&x, &y).unwrap();
        let pty = model.phi().adjoint(y.as_slice()).unwrap();
        assert!(linalg::norm(&grad) <= 1e-8 * linalg::norm(&pty));
    }

    #[test]
    fn tikhonov_jvp_is_constant_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = TikhonovModel::new(
            LinearMap::dense_1d(rand_mat(&mut rng, 10, 10)),
            LinearMap::forward_gradient_1d(10),
            2.0,
        )
        .unwrap();
        let y = g(&(0..10).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let d = g(&(0..10).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let eps = 1e-6;
        let yp = &y + &d.scale(eps);
        let fd = (&model.solve(&yp).unwrap() - &model.solve(&y).unwrap()).scale(1.0 / eps);
        let jd = model.jvp(&d).unwrap();
        assert!(fd.rel_err(&jd) <= 1e-6);
        // Jacobian does not depend on y.
        let j1 = model.jacobian_dense().unwrap();
        let jd_dense = &j1 * linalg::to_dvector(d.as_slice());
        assert!(linalg::dist(jd_dense.as_slice(), jd.as_slice()) < 1e-12 * jd.norm());
    }

    #[test]
    fn tikhonov_iterative_path_matches_dense() {
        let n = 2100;
        let y = Grid::from_vec((0..n).map(|i| ((i as f64) * 0.37).sin() * 50.0).collect()).unwrap();
        let it = TikhonovModel::new(LinearMap::identity(n, 1), LinearMap::forward_gradient_1d(n), 3.0).unwrap();
        let x = it.solve(&y).unwrap();
        let grad = it.objective_gradient(&x, &y).unwrap();
        assert!(linalg::norm(&grad) <= 1e-8 * y.norm());
    }
}
