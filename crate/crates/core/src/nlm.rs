//! Block-wise non-local means and its directional derivative.
//!
//! Both the estimate and `J d` are accumulated over search offsets `k` in one
//! pass. Patch sums use periodic summed-area tables, so the cost is
//! `O(s²·n)` regardless of the patch size. The kernel is
//! `φ(e) = exp(−e/h)` where `e` is a sum of squared differences over a patch.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmParams {
    /// Half search-window width.
    pub s: usize,
    /// Half patch width.
    pub b: usize,
    /// Kernel bandwidth, in units of summed squared intensity.
    pub h: f64,
    /// Noise standard deviation, used for the central-pixel weight.
    pub sigma_noise: f64,
}

impl NlmParams {
    pub fn validate(&self) -> Result<()> {
        if self.s < 1 {
            return Err(Error::InvalidParameter("search half-width s must be >= 1".into()));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth h must be positive, got {}",
                self.h
            )));
        }
        if !(self.sigma_noise >= 0.0) {
            return Err(Error::InvalidParameter("noise level must be non-negative".into()));
        }
        Ok(())
    }

    /// Weight given to the pixel itself: `φ(2σ²(2b+1)^dim)`, the expected
    /// patch distance between two noisy copies of the same patch.
    pub fn central_weight(&self, dims: usize) -> f64 {
        let side = (2 * self.b + 1) as f64;
        let e = 2.0 * self.sigma_noise * self.sigma_noise * side.powi(dims as i32);
        (-e / self.h).exp()
    }
}

#[derive(Debug, Clone)]
pub struct NlmOutput {
    pub estimate: Grid,
    pub jvp: Grid,
    pub weight_sums: Grid,
}

/// Periodic translation: `out[i] = u[i − k]`.
pub fn shift(u: &Grid, k: (isize, isize)) -> Grid {
    let (rows, cols) = u.shape();
    let mut out = vec![0.0; u.len()];
    shift_into(u.as_slice(), rows, cols, k, &mut out);
    Grid::from_parts(rows, cols, out)
}

fn shift_into(u: &[f64], rows: usize, cols: usize, k: (isize, isize), out: &mut [f64]) {
    let (ri, ci) = (rows as isize, cols as isize);
    for r in 0..rows {
        let sr = (r as isize - k.0).rem_euclid(ri) as usize;
        let src = &u[sr * cols..(sr + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        let sh = k.1.rem_euclid(ci) as usize;
        // dst[c] = src[(c − sh) mod cols]
        dst[sh..].copy_from_slice(&src[..cols - sh]);
        dst[..sh].copy_from_slice(&src[cols - sh..]);
    }
}

/// Periodic sum over the `(2b+1)²` window centred at each pixel (the window
/// collapses to `2b+1` along a singleton axis).
pub fn box_filter(u: &Grid, b: usize) -> Grid {
    let (rows, cols) = u.shape();
    let mut out = vec![0.0; u.len()];
    BoxFilter::new(rows, cols, b).apply(u.as_slice(), &mut out);
    Grid::from_parts(rows, cols, out)
}

/// Reusable periodic box filter backed by a summed-area table.
struct BoxFilter {
    rows: usize,
    cols: usize,
    br: usize,
    bc: usize,
}

impl BoxFilter {
    fn new(rows: usize, cols: usize, b: usize) -> Self {
        let br = if rows > 1 { b } else { 0 };
        let bc = if cols > 1 { b } else { 0 };
        Self { rows, cols, br, bc }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (rows, cols, br, bc) = (self.rows, self.cols, self.br, self.bc);
        if br == 0 && bc == 0 {
            out.copy_from_slice(u);
            return;
        }
        // Table over the periodically padded image, one extra leading row/col of zeros.
        let (pr, pc) = (rows + 2 * br, cols + 2 * bc);
        let w = pc + 1;
        let mut sat = vec![0.0; (pr + 1) * w];
        for i in 0..pr {
            let src_r = (i + rows * (br / rows + 1) - br) % rows;
            let mut run = 0.0;
            for j in 0..pc {
                let src_c = (j + cols * (bc / cols + 1) - bc) % cols;
                run += u[src_r * cols + src_c];
                sat[(i + 1) * w + j + 1] = sat[i * w + j + 1] + run;
            }
        }
        let (hr, hc) = (2 * br + 1, 2 * bc + 1);
        for r in 0..rows {
            for c in 0..cols {
                // Window in padded coordinates: rows r..r+hr, cols c..c+hc.
                let a = sat[(r + hr) * w + c + hc];
                let bb = sat[r * w + c + hc];
                let cc = sat[(r + hr) * w + c];
                let dd = sat[r * w + c];
                out[r * cols + c] = a - bb - cc + dd;
            }
        }
    }
}

struct Accum {
    w: Vec<f64>,
    wy: Vec<f64>,
    wp: Vec<f64>,
    wpy: Vec<f64>,
}

impl Accum {
    fn zeros(n: usize) -> Self {
        Self {
            w: vec![0.0; n],
            wy: vec![0.0; n],
            wp: vec![0.0; n],
            wpy: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in [
            (&mut self.w, &other.w),
            (&mut self.wy, &other.wy),
            (&mut self.wp, &other.wp),
            (&mut self.wpy, &other.wpy),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Non-local means of `y` and its Jacobian applied to `d`, with periodic
/// boundaries.
///
/// Offsets are grouped by their row component; each group is accumulated
/// sequentially and the groups are summed in a fixed order, so the result is
/// bitwise identical for any thread count.
pub fn nlm_with_jvp(y: &Grid, d: &Grid, params: &NlmParams) -> Result<NlmOutput> {
    params.validate()?;
    y.check_same_shape(d)?;
    let (rows, cols) = y.shape();
    let n = y.len();
    let dims = (rows > 1) as usize + (cols > 1) as usize;
    let sr = if rows > 1 { params.s as isize } else { 0 };
    let sc = if cols > 1 { params.s as isize } else { 0 };
    let h = params.h;
    let filter = BoxFilter::new(rows, cols, params.b);
    let ys = y.as_slice();
    let ds = d.as_slice();

    let groups: Vec<Accum> = (-sr..=sr)
        .into_par_iter()
        .map(|kr| {
            let mut acc = Accum::zeros(n);
            let mut sy = vec![0.0; n];
            let mut sd = vec![0.0; n];
            let mut t = vec![0.0; n];
            let mut e = vec![0.0; n];
            let mut ep = vec![0.0; n];
            let mut w = vec![0.0; n];
            let mut wp = vec![0.0; n];
            for kc in -sc..=sc {
                if kr == 0 && kc == 0 {
                    continue;
                }
                shift_into(ys, rows, cols, (kr, kc), &mut sy);
                shift_into(ds, rows, cols, (kr, kc), &mut sd);
                for i in 0..n {
                    let diff = ys[i] - sy[i];
                    t[i] = diff * diff;
                }
                filter.apply(&t, &mut e);
                for i in 0..n {
                    t[i] = (-e[i] / h).exp();
                }
                filter.apply(&t, &mut w);
                for i in 0..n {
                    t[i] = 2.0 * (ys[i] - sy[i]) * (ds[i] - sd[i]);
                }
                filter.apply(&t, &mut ep);
                for i in 0..n {
                    // φ'(e) = −φ(e)/h
                    t[i] = ep[i] * (-(-e[i] / h).exp() / h);
                }
                filter.apply(&t, &mut wp);
                for i in 0..n {
                    acc.w[i] += w[i];
                    acc.wy[i] += w[i] * sy[i];
                    acc.wp[i] += wp[i];
                    acc.wpy[i] += wp[i] * sy[i] + w[i] * sd[i];
                }
            }
            acc
        })
        .collect();

    let c0 = params.central_weight(dims);
    let mut total = Accum {
        w: vec![c0; n],
        wy: ys.iter().map(|v| c0 * v).collect(),
        wp: vec![0.0; n],
        wpy: ds.iter().map(|v| c0 * v).collect(),
    };
    for g in &groups {
        total.add(g);
    }

    let mut est = vec![0.0; n];
    let mut jvp = vec![0.0; n];
    for i in 0..n {
        if !(total.w[i] > 0.0) {
            return Err(Error::NonFinite(format!("non-positive weight sum at pixel {i}")));
        }
        est[i] = total.wy[i] / total.w[i];
        jvp[i] = (total.wpy[i] - total.wp[i] * est[i]) / total.w[i];
    }
    Ok(NlmOutput {
        estimate: y.with_data(est)?,
        jvp: y.with_data(jvp)?,
        weight_sums: y.with_data(total.w)?,
    })
}

/// Estimate only (the derivative direction is zero).
pub fn nlm(y: &Grid, params: &NlmParams) -> Result<Grid> {
    Ok(nlm_with_jvp(y, &Grid::zeros(y.rows(), y.cols()), params)?.estimate)
}
