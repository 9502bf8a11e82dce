//! Monte-Carlo check of the first two moments of the guess-based
//! re-fitting `D_{x̂,z}(Y)` for `Y = Φx₀ + σW`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::noise::GaussianStream;
use crate::closed_form::TikhonovModel;
use crate::error::Result;
use crate::grid::Grid;
use crate::operators::LinearMap;
use crate::refit::{GuessRefit, JvpProvider, SoftThresholdProvider, TikhonovProvider};

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub draws: usize,
    pub seed: u64,
    pub sigma: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            draws: 20_000,
            seed: 7,
            sigma: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub rho: f64,
    /// `max_ij |Ĉ_ij − (ρ²JΣJᵀ)_ij| / SE_ij`
    pub cov_max_z: f64,
    /// `max_i |b̂_i − ((Id − ρJΦ)(x̂(z) − x₀))_i| / SE_i`
    pub bias_max_z: f64,
    /// `‖Φ(E[D] − x₀)‖`, `‖Φ(E[T] − x₀)‖` and the standard error of their
    /// difference on the projector instance.
    pub pred_bias_refit: f64,
    pub pred_bias_tangent: f64,
    pub pred_bias_se: f64,
}

/// Sample mean and unbiased covariance of the rows in `samples`.
pub fn moments(samples: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples[0].len();
    let count = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        for i in 0..n {
            mean[i] += s[i];
        }
    }
    mean /= count;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        for i in 0..n {
            let di = s[i] - mean[i];
            for j in 0..n {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    cov /= count - 1.0;
    (mean, cov)
}

pub struct TikhonovInstance {
    pub phi: LinearMap,
    pub model: TikhonovModel,
    pub x0: Grid,
    pub z: Grid,
}

/// `n = p = 8` Tikhonov problem: random square `Φ`, 1D gradient `Γ`,
/// piecewise-constant `x₀`, guess `z` drawn once from the noise model.
pub fn tikhonov_instance(seed: u64, sigma: f64) -> Result<TikhonovInstance> {
    let n = 8;
    let mut g = GaussianStream::with_stream(seed, 0);
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.3 * g.next_normal());
    let phi = LinearMap::dense_1d(m);
    let x0 = Grid::from_vec((0..n).map(|i| if i < n / 2 { 50.0 } else { 150.0 }).collect())?;
    let clean = phi.apply(x0.as_slice())?;
    let z = Grid::from_vec(clean.iter().map(|c| c + sigma * g.next_normal()).collect())?;
    let model = TikhonovModel::new(phi.clone(), LinearMap::forward_gradient_1d(n), 2.0)?;
    Ok(TikhonovInstance { phi, model, x0, z })
}

/// Draws `i = 1..=draws` of `Φx₀ + σW`, stream `i` under `seed`.
fn draw(phi_x0: &[f64], sigma: f64, seed: u64, i: u64) -> Result<Grid> {
    let mut g = GaussianStream::with_stream(seed, i);
    Grid::from_vec(phi_x0.iter().map(|c| c + sigma * g.next_normal()).collect())
}

fn samples_of<P: JvpProvider>(
    refit: &GuessRefit<'_, P>,
    provider: &P,
    z: &Grid,
    phi_x0: &[f64],
    cfg: &McConfig,
    with_tangent: bool,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let jz = z.clone();
    let per_draw: Vec<Result<(Vec<f64>, Vec<f64>)>> = (1..=cfg.draws as u64)
        .into_par_iter()
        .map(|i| {
            let y = draw(phi_x0, cfg.sigma, cfg.seed, i)?;
            let d = refit.apply(&y)?.into_vec();
            let t = if with_tangent {
                crate::refit::tangent_estimator(provider, &jz, &y)?.into_vec()
            } else {
                Vec::new()
            };
            Ok((d, t))
        })
        .collect();
    let mut ds = Vec::with_capacity(cfg.draws);
    let mut ts = Vec::with_capacity(cfg.draws);
    for r in per_draw {
        let (d, t) = r?;
        ds.push(d);
        ts.push(t);
    }
    Ok((ds, ts))
}

pub fn run_montecarlo(cfg: &McConfig) -> Result<McReport> {
    // Covariance and bias on the Tikhonov instance.
    let inst = tikhonov_instance(cfg.seed, cfg.sigma)?;
    let provider = TikhonovProvider(inst.model);
    let gr = GuessRefit::new(&provider, &inst.phi, &inst.z)?;
    let rho = gr.rho;
    let phi_x0 = inst.phi.apply(inst.x0.as_slice())?;
    let (ds, _) = samples_of(&gr, &provider, &inst.z, &phi_x0, cfg, false)?;
    let (mean, cov) = moments(&ds);
    let n = inst.x0.len();

    let j = provider.0.jacobian_dense()?;
    let cov_th = &j * j.transpose() * (rho * rho * cfg.sigma * cfg.sigma);
    let count = cfg.draws as f64;
    let mut cov_max_z: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let se = ((cov_th[(a, a)] * cov_th[(b, b)] + cov_th[(a, b)].powi(2)) / count).sqrt();
            cov_max_z = cov_max_z.max((cov[(a, b)] - cov_th[(a, b)]).abs() / se);
        }
    }

    let phi_m = inst.phi.to_dense();
    let x0v = DVector::from_column_slice(inst.x0.as_slice());
    let xz = DVector::from_column_slice(gr.estimate_at_guess.as_slice());
    let bias_th = (DMatrix::identity(n, n) - &j * &phi_m * rho) * (&xz - &x0v);
    let mut bias_max_z: f64 = 0.0;
    for a in 0..n {
        let se = (cov[(a, a)] / count).sqrt();
        bias_max_z = bias_max_z.max(((mean[a] - x0v[a]) - bias_th[a]).abs() / se);
    }

    // Prediction bias on a projector instance: soft thresholding, Φ = Id.
    let p = 16;
    let x0 = Grid::from_vec(
        (0..p)
            .map(|i| [0.0, 40.0, -25.0, 0.0, 8.0, 60.0, 0.0, -5.0][i % 8])
            .collect(),
    )?;
    let id = LinearMap::identity(p, 1);
    let soft = SoftThresholdProvider { lambda: 15.0 };
    let z = draw(x0.as_slice(), cfg.sigma, cfg.seed ^ 0x9e37_79b9, 0)?;
    let gr2 = GuessRefit::new(&soft, &id, &z)?;
    let (ds, ts) = samples_of(&gr2, &soft, &z, x0.as_slice(), cfg, true)?;
    let (md, cd) = moments(&ds);
    let (mt, ct) = moments(&ts);
    let x0v = DVector::from_column_slice(x0.as_slice());
    let pred_bias_refit = (&md - &x0v).norm();
    let pred_bias_tangent = (&mt - &x0v).norm();
    let pred_bias_se = (cd.trace() / count + ct.trace() / count).sqrt();

    Ok(McReport {
        rho,
        cov_max_z,
        bias_max_z,
        pred_bias_refit,
        pred_bias_tangent,
        pred_bias_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_known_samples() {
        let s = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 8.0]];
        let (m, c) = moments(&s);
        assert_eq!(m[0], 3.0);
        assert_eq!(m[1], 4.0);
        assert_eq!(c[(0, 0)], 4.0);
        assert_eq!(c[(0, 1)], 6.0);
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = McConfig {
            draws: 500,
            ..McConfig::default()
        };
        let a = run_montecarlo(&cfg).unwrap();
        let b = run_montecarlo(&cfg).unwrap();
        assert_eq!(a.cov_max_z, b.cov_max_z);
        assert_eq!(a.pred_bias_refit, b.pred_bias_refit);
    }
}
