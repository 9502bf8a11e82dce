//! Parameter sweeps comparing an estimator with its re-fitting.

use rayon::prelude::*;

use super::degrade::{degrade, DegradationSpec};
use super::estimators::{run_refit, EstimatorSettings};
use super::metrics::{mse, psnr_from_mse, ssim};
use super::phantoms::{phantom, PhantomId};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operators::LinearMap;

pub const CSV_HEADER: &str = "param,mse_orig,mse_refit,psnr_orig,psnr_refit,ssim_orig,ssim_refit,rho,iters";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub param: f64,
    pub mse_orig: f64,
    pub mse_refit: f64,
    pub psnr_orig: f64,
    pub psnr_refit: f64,
    pub ssim_orig: f64,
    pub ssim_refit: f64,
    pub rho: f64,
    pub iters: usize,
}

impl SweepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.param,
            self.mse_orig,
            self.mse_refit,
            self.psnr_orig,
            self.psnr_refit,
            self.ssim_orig,
            self.ssim_refit,
            self.rho,
            self.iters
        )
    }
}

pub fn to_csv(records: &[SweepRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// `n` points spaced geometrically from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad geometric grid [{lo}, {hi}] with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { hi } else { lo * (r * i as f64).exp() })
        .collect())
}

/// Default 20-point grid for `λ`, scaled to the noise level.
pub fn default_grid(sigma_noise: f64) -> Vec<f64> {
    let s = sigma_noise.max(1.0);
    geometric_grid(0.1 * s, 10.0 * s, 20).expect("valid default grid")
}

/// Default 20-point grid for the NLM bandwidth `h`, spanning two decades
/// around the expected patch distance `2σ²(2b+1)²` between noisy copies.
pub fn default_h_grid(sigma_noise: f64, b: usize) -> Vec<f64> {
    let side = (2 * b + 1) as f64;
    let e = 2.0 * sigma_noise.max(1.0).powi(2) * side * side;
    geometric_grid(0.5 * e, 50.0 * e, 20).expect("valid default grid")
}

pub fn evaluate_point(settings: &EstimatorSettings, x0: &Grid, y: &Grid, phi: &LinearMap) -> Result<SweepRecord> {
    let run = run_refit(settings, phi, y)?;
    let mse_orig = mse(&run.estimate, x0)?;
    let mse_refit = mse(&run.refit, x0)?;
    Ok(SweepRecord {
        param: settings.param,
        mse_orig,
        mse_refit,
        psnr_orig: psnr_from_mse(mse_orig),
        psnr_refit: psnr_from_mse(mse_refit),
        ssim_orig: ssim(&run.estimate, x0)?,
        ssim_refit: ssim(&run.refit, x0)?,
        rho: run.rho,
        iters: run.iters,
    })
}

/// Sweeps `settings.param` over `grid` on a fixed observation. `threads`
/// is the worker count (1 runs serially); output order is by parameter and
/// does not depend on `threads`.
pub fn sweep_observation(
    settings: &EstimatorSettings,
    grid: &[f64],
    x0: &Grid,
    y: &Grid,
    phi: &LinearMap,
    threads: usize,
) -> Result<Vec<SweepRecord>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut params = grid.to_vec();
    params.sort_by(f64::total_cmp);
    let point = |p: &f64| evaluate_point(&settings.with_param(*p), x0, y, phi);
    if threads <= 1 {
        return params.iter().map(point).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| params.par_iter().map(point).collect())
}

/// Degrades phantom `id` of side `size` per `spec`, then sweeps.
pub fn sweep(
    settings: &EstimatorSettings,
    grid: &[f64],
    id: PhantomId,
    size: usize,
    spec: &DegradationSpec,
    threads: usize,
) -> Result<Vec<SweepRecord>> {
    let x0 = phantom(id, size)?;
    let (y, phi) = degrade(&x0, spec)?;
    sweep_observation(settings, grid, &x0, &y, &phi, threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::estimators::EstimatorId;

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(1.0, 100.0, 3).unwrap();
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert_eq!(g[2], 100.0);
        assert_eq!(default_grid(20.0).len(), 20);
        assert!(geometric_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn single_point_matches_direct_run_and_threads_agree() {
        let spec = DegradationSpec::awgn(20.0, 11);
        let s = EstimatorSettings::new(EstimatorId::Tikhonov, 1.0);
        let recs = sweep(&s, &[3.0, 0.5, 1.0], PhantomId::Squares2d, 16, &spec, 1).unwrap();
        assert_eq!(recs.iter().map(|r| r.param).collect::<Vec<_>>(), vec![0.5, 1.0, 3.0]);
        let par = sweep(&s, &[3.0, 0.5, 1.0], PhantomId::Squares2d, 16, &spec, 3).unwrap();
        assert_eq!(to_csv(&recs), to_csv(&par));
        let one = sweep(&s, &[1.0], PhantomId::Squares2d, 16, &spec, 1).unwrap();
        let x0 = phantom(PhantomId::Squares2d, 16).unwrap();
        let (y, phi) = degrade(&x0, &spec).unwrap();
        let direct = evaluate_point(&s, &x0, &y, &phi).unwrap();
        assert_eq!(one[0], direct);
        assert!(to_csv(&one).starts_with(CSV_HEADER));
        assert!(sweep(&s, &[], PhantomId::Squares2d, 16, &spec, 1).is_err());
    }
}
