//! MSE, PSNR (8-bit peak) and SSIM.

use crate::error::Result;
use crate::grid::Grid;

pub const PEAK: f64 = 255.0;

pub fn mse(x: &Grid, reference: &Grid) -> Result<f64> {
    x.check_same_shape(reference)?;
    let s: f64 = x
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / x.len().max(1) as f64)
}

/// `10·log₁₀(255²/mse)`; `+∞` for identical inputs.
pub fn psnr(x: &Grid, reference: &Grid) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, reference)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

fn gaussian_taps(radius: usize, sigma: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Separable "valid" filtering: output is `(rows − 2rr) × (cols − 2rc)`.
fn filter_valid(u: &[f64], rows: usize, cols: usize, tr: &[f64], tc: &[f64]) -> (Vec<f64>, usize, usize) {
    let (rr, rc) = (tr.len() / 2, tc.len() / 2);
    let (or, oc) = (rows - 2 * rr, cols - 2 * rc);
    let mut tmp = vec![0.0; rows * oc];
    for r in 0..rows {
        for c in 0..oc {
            tmp[r * oc + c] = tc.iter().enumerate().map(|(j, w)| w * u[r * cols + c + j]).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = tr.iter().enumerate().map(|(i, w)| w * tmp[(r + i) * oc + c]).sum();
        }
    }
    (out, or, oc)
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), `K₁ = 0.01`,
/// `K₂ = 0.03`, `L = 255`, averaged over fully contained windows. Along an
/// axis shorter than 11 samples the window shrinks to fit.
pub fn ssim(x: &Grid, reference: &Grid) -> Result<f64> {
    x.check_same_shape(reference)?;
    let (rows, cols) = x.shape();
    let radius = |n: usize| 5usize.min(n.saturating_sub(1) / 2);
    let tr = gaussian_taps(radius(rows), 1.5);
    let tc = gaussian_taps(radius(cols), 1.5);
    let (a, b) = (x.as_slice(), reference.as_slice());
    let prod = |f: &dyn Fn(usize) -> f64| (0..a.len()).map(f).collect::<Vec<f64>>();
    let (mu_a, _, _) = filter_valid(a, rows, cols, &tr, &tc);
    let (mu_b, _, _) = filter_valid(b, rows, cols, &tr, &tc);
    let (aa, _, _) = filter_valid(&prod(&|i| a[i] * a[i]), rows, cols, &tr, &tc);
    let (bb, _, _) = filter_valid(&prod(&|i| b[i] * b[i]), rows, cols, &tr, &tc);
    let (ab, _, _) = filter_valid(&prod(&|i| a[i] * b[i]), rows, cols, &tr, &tc);
    let c1 = (0.01 * PEAK).powi(2);
    let c2 = (0.03 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::phantoms::{phantom, PhantomId};

    #[test]
    fn identical_images() {
        let x = phantom(PhantomId::Squares2d, 32).unwrap();
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let r = Grid::new(10, 10, (0..100).map(|i| i as f64).collect()).unwrap();
        let x = r.map(|v| v + 10.0);
        assert_eq!(mse(&x, &r).unwrap(), 100.0);
        let expect = 10.0 * (255.0f64 * 255.0 / 100.0).log10();
        assert!((psnr(&x, &r).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn psnr_mse_consistency() {
        let r = phantom(PhantomId::SheppLike, 24).unwrap();
        let x = r.map(|v| v * 0.9 + 3.0);
        let m = mse(&x, &r).unwrap();
        assert!((psnr(&x, &r).unwrap() - 10.0 * (255.0f64.powi(2) / m).log10()).abs() <= 1e-12);
    }

    /// Direct per-window evaluation, no separable filtering.
    fn ssim_naive(x: &Grid, r: &Grid) -> f64 {
        let (rows, cols) = x.shape();
        let mut w = [[0.0; 11]; 11];
        let mut s = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                w[i][j] = (-(di * di + dj * dj) / 4.5).exp();
                s += w[i][j];
            }
        }
        let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
        let mut total = 0.0;
        let mut count = 0;
        for r0 in 0..=rows - 11 {
            for c0 in 0..=cols - 11 {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = w[i][j] / s;
                        let a = x.get(r0 + i, c0 + j);
                        let b = r.get(r0 + i, c0 + j);
                        ma += wt * a;
                        mb += wt * b;
                        aa += wt * a * a;
                        bb += wt * b * b;
                        ab += wt * a * b;
                    }
                }
                let (va, vb, cv) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cv + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_direct_evaluation_and_penalises_inversion() {
        let r = phantom(PhantomId::SheppLike, 32).unwrap();
        let x = r.map(|v| 0.8 * v + 20.0 + (v * 0.37).sin() * 5.0);
        assert!((ssim(&x, &r).unwrap() - ssim_naive(&x, &r)).abs() < 1e-10);
        let inv = r.map(|v| 255.0 - v);
        let s = ssim(&inv, &r).unwrap();
        assert!((s - ssim_naive(&inv, &r)).abs() < 1e-10);
        assert!(s < 0.5, "{s}");
    }
}
