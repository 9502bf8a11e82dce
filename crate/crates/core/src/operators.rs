//! Degradation operators Φ, analysis operators Γ, and their adjoints.
//!
//! Every map works on flat `f64` slices; [`Space`] records how a slice is
//! interpreted. Gradients use a replicate (Neumann) boundary, so the last
//! forward difference along each axis is zero and constants lie in the
//! kernel. Convolutions are circular.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, VectorField};
use crate::linalg;

/// Shape of the domain or range of a [`LinearMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Grid { rows: usize, cols: usize },
    Field { sites: usize, comps: usize },
}

impl Space {
    pub fn grid(rows: usize, cols: usize) -> Self {
        Space::Grid { rows, cols }
    }

    pub fn len(&self) -> usize {
        match *self {
            Space::Grid { rows, cols } => rows * cols,
            Space::Field { sites, comps } => sites * comps,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Components per site; grids count as one component.
    pub fn comps(&self) -> usize {
        match *self {
            Space::Grid { .. } => 1,
            Space::Field { comps, .. } => comps,
        }
    }

    pub fn sites(&self) -> usize {
        self.len() / self.comps()
    }
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Space::Grid { rows, cols } => write!(f, "grid {rows}x{cols}"),
            Space::Field { sites, comps } => write!(f, "field {sites}x{comps}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MapKind {
    Identity,
    DiagonalMask(Vec<f64>),
    /// Odd-sized kernel centred at its middle entry.
    CircularConvolution(Grid),
    ForwardGradient1d,
    ForwardGradient2d,
    /// Explicit matrix acting on column vectors.
    Dense(DMatrix<f64>),
    /// `outer ∘ inner`
    Composition(Box<LinearMap>, Box<LinearMap>),
}

#[derive(Debug, Clone)]
pub struct LinearMap {
    kind: MapKind,
    input: Space,
    output: Space,
}

impl LinearMap {
    pub fn identity(rows: usize, cols: usize) -> Self {
        let s = Space::grid(rows, cols);
        Self {
            kind: MapKind::Identity,
            input: s,
            output: s,
        }
    }

    pub fn diagonal_mask(mask: &Grid) -> Self {
        let s = Space::grid(mask.rows(), mask.cols());
        Self {
            kind: MapKind::DiagonalMask(mask.as_slice().to_vec()),
            input: s,
            output: s,
        }
    }

    /// Circular convolution of a `rows × cols` grid with `kernel`, whose
    /// dimensions must both be odd.
    pub fn circular_convolution(kernel: Grid, rows: usize, cols: usize) -> Result<Self> {
        if kernel.rows().is_multiple_of(2) || kernel.cols().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "convolution kernel must have odd dimensions, got {}x{}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        let s = Space::grid(rows, cols);
        Ok(Self {
            kind: MapKind::CircularConvolution(kernel),
            input: s,
            output: s,
        })
    }

    pub fn forward_gradient_1d(n: usize) -> Self {
        Self {
            kind: MapKind::ForwardGradient1d,
            input: Space::grid(n, 1),
            output: Space::Field { sites: n, comps: 1 },
        }
    }

    pub fn forward_gradient_2d(rows: usize, cols: usize) -> Self {
        Self {
            kind: MapKind::ForwardGradient2d,
            input: Space::grid(rows, cols),
            output: Space::Field {
                sites: rows * cols,
                comps: 2,
            },
        }
    }

    /// The natural gradient for a grid shape: 1D when `cols == 1`.
    pub fn gradient_for(rows: usize, cols: usize) -> Self {
        if cols == 1 {
            Self::forward_gradient_1d(rows)
        } else {
            Self::forward_gradient_2d(rows, cols)
        }
    }

    /// Dense matrix from `input` (length = ncols) to `output` (length = nrows).
    pub fn dense(matrix: DMatrix<f64>, input: Space, output: Space) -> Result<Self> {
        if matrix.ncols() != input.len() || matrix.nrows() != output.len() {
            return Err(shape_err(
                format!("{}x{} matrix", output.len(), input.len()),
                format!("{}x{} matrix", matrix.nrows(), matrix.ncols()),
            ));
        }
        Ok(Self {
            kind: MapKind::Dense(matrix),
            input,
            output,
        })
    }

    /// Dense matrix acting on 1D signals.
    pub fn dense_1d(matrix: DMatrix<f64>) -> Self {
        let (r, c) = matrix.shape();
        Self {
            kind: MapKind::Dense(matrix),
            input: Space::grid(c, 1),
            output: Space::grid(r, 1),
        }
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: LinearMap, inner: LinearMap) -> Result<Self> {
        if inner.output != outer.input {
            return Err(shape_err(outer.input, inner.output));
        }
        let (input, output) = (inner.input, outer.output);
        Ok(Self {
            kind: MapKind::Composition(Box::new(outer), Box::new(inner)),
            input,
            output,
        })
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn in_space(&self) -> Space {
        self.input
    }

    pub fn out_space(&self) -> Space {
        self.output
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MapKind::Identity => "identity",
            MapKind::DiagonalMask(_) => "diagonal_mask",
            MapKind::CircularConvolution(_) => "circular_convolution",
            MapKind::ForwardGradient1d => "forward_gradient_1d",
            MapKind::ForwardGradient2d => "forward_gradient_2d",
            MapKind::Dense(_) => "dense",
            MapKind::Composition(..) => "composition",
        }
    }

    /// `out ← A u`
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.input, u.len())?;
        check_len(self.output, out.len())?;
        self.forward_unchecked(u, out);
        Ok(())
    }

    /// `out ← Aᵀ v`
    pub fn adjoint_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.output, v.len())?;
        check_len(self.input, out.len())?;
        self.adjoint_unchecked(v, out);
        Ok(())
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output.len()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.input.len()];
        self.adjoint_into(v, &mut out)?;
        Ok(out)
    }

    /// Applies the map to a grid, returning a grid shaped like the range.
    ///
    /// Field-valued ranges come back as `sites × comps` grids; use
    /// [`LinearMap::apply_field`] for those.
    pub fn apply_grid(&self, u: &Grid) -> Result<Grid> {
        self.check_input_grid(u)?;
        let out = self.apply(u.as_slice())?;
        Ok(grid_in(self.output, out))
    }

    pub fn adjoint_grid(&self, v: &Grid) -> Result<Grid> {
        let out = self.adjoint(v.as_slice())?;
        Ok(grid_in(self.input, out))
    }

    pub fn apply_field(&self, u: &Grid) -> Result<VectorField> {
        self.check_input_grid(u)?;
        let out = self.apply(u.as_slice())?;
        Ok(VectorField::from_parts(self.output.sites(), self.output.comps(), out))
    }

    pub fn adjoint_field(&self, v: &VectorField) -> Result<Grid> {
        if v.sites() != self.output.sites() || v.comps() != self.output.comps() {
            return Err(shape_err(self.output, format!("field {}x{}", v.sites(), v.comps())));
        }
        let out = self.adjoint(v.as_slice())?;
        Ok(grid_in(self.input, out))
    }

    fn check_input_grid(&self, u: &Grid) -> Result<()> {
        match self.input {
            Space::Grid { rows, cols } if (rows, cols) == u.shape() => Ok(()),
            Space::Field { .. } if self.input.len() == u.len() => Ok(()),
            _ => Err(shape_err(self.input, format!("grid {}x{}", u.rows(), u.cols()))),
        }
    }

    /// Explicit matrix of the map (columns are images of basis vectors).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, m) = (self.input.len(), self.output.len());
        let mut mat = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.forward_unchecked(&e, &mut col);
            mat.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        mat
    }

    fn forward_unchecked(&self, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            MapKind::Identity => out.copy_from_slice(u),
            MapKind::DiagonalMask(m) => {
                for ((o, &ui), &mi) in out.iter_mut().zip(u).zip(m) {
                    *o = mi * ui;
                }
            }
            MapKind::CircularConvolution(k) => {
                let Space::Grid { rows, cols } = self.input else {
                    unreachable!()
                };
                convolve(k, rows, cols, u, out, false);
            }
            MapKind::ForwardGradient1d => {
                let n = u.len();
                for i in 0..n {
                    out[i] = if i + 1 < n { u[i + 1] - u[i] } else { 0.0 };
                }
            }
            MapKind::ForwardGradient2d => {
                let Space::Grid { rows, cols } = self.input else {
                    unreachable!()
                };
                for r in 0..rows {
                    for c in 0..cols {
                        let i = r * cols + c;
                        out[2 * i] = if r + 1 < rows { u[i + cols] - u[i] } else { 0.0 };
                        out[2 * i + 1] = if c + 1 < cols { u[i + 1] - u[i] } else { 0.0 };
                    }
                }
            }
            MapKind::Dense(a) => {
                let v = a * linalg::to_dvector(u);
                out.copy_from_slice(v.as_slice());
            }
            MapKind::Composition(outer, inner) => {
                let mut tmp = vec![0.0; inner.output.len()];
                inner.forward_unchecked(u, &mut tmp);
                outer.forward_unchecked(&tmp, out);
            }
        }
    }

    fn adjoint_unchecked(&self, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            MapKind::Identity | MapKind::DiagonalMask(_) => self.forward_unchecked(v, out),
            MapKind::CircularConvolution(k) => {
                let Space::Grid { rows, cols } = self.input else {
                    unreachable!()
                };
                convolve(k, rows, cols, v, out, true);
            }
            MapKind::ForwardGradient1d => {
                let n = out.len();
                for j in 0..n {
                    let left = if j >= 1 { v[j - 1] } else { 0.0 };
                    let here = if j + 1 < n { v[j] } else { 0.0 };
                    out[j] = left - here;
                }
            }
            MapKind::ForwardGradient2d => {
                let Space::Grid { rows, cols } = self.input else {
                    unreachable!()
                };
                for r in 0..rows {
                    for c in 0..cols {
                        let i = r * cols + c;
                        let mut acc = 0.0;
                        if r + 1 < rows {
                            acc -= v[2 * i];
                        }
                        if r >= 1 {
                            acc += v[2 * (i - cols)];
                        }
                        if c + 1 < cols {
                            acc -= v[2 * i + 1];
                        }
                        if c >= 1 {
                            acc += v[2 * (i - 1) + 1];
                        }
                        out[i] = acc;
                    }
                }
            }
            MapKind::Dense(a) => {
                let w = a.tr_mul(&linalg::to_dvector(v));
                out.copy_from_slice(w.as_slice());
            }
            MapKind::Composition(outer, inner) => {
                let mut tmp = vec![0.0; outer.input.len()];
                outer.adjoint_unchecked(v, &mut tmp);
                inner.adjoint_unchecked(&tmp, out);
            }
        }
    }

    /// Power-iteration estimate of `‖A‖²` (largest eigenvalue of `AᵀA`).
    pub fn op_norm_sq(&self, iters: usize, seed: u64) -> f64 {
        let n = self.input.len();
        if n == 0 || iters == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut ax = vec![0.0; self.output.len()];
        let mut atax = vec![0.0; n];
        let mut estimate = 0.0;
        for _ in 0..iters {
            let nx = linalg::norm(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            self.forward_unchecked(&x, &mut ax);
            estimate = linalg::dot(&ax, &ax);
            self.adjoint_unchecked(&ax, &mut atax);
            std::mem::swap(&mut x, &mut atax);
        }
        estimate
    }
}

fn check_len(space: Space, got: usize) -> Result<()> {
    if space.len() == got {
        Ok(())
    } else {
        Err(shape_err(space, format!("{got} values")))
    }
}

fn grid_in(space: Space, data: Vec<f64>) -> Grid {
    match space {
        Space::Grid { rows, cols } => Grid::from_parts(rows, cols, data),
        Space::Field { sites, comps } => Grid::from_parts(sites, comps, data),
    }
}

/// Circular convolution (or correlation when `adjoint`) with a centred kernel.
fn convolve(k: &Grid, rows: usize, cols: usize, u: &[f64], out: &mut [f64], adjoint: bool) {
    let (kr, kc) = (k.rows() as isize / 2, k.cols() as isize / 2);
    let (ri, ci) = (rows as isize, cols as isize);
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in -kr..=kr {
        for b in -kc..=kc {
            let w = k.get((a + kr) as usize, (b + kc) as usize);
            if w == 0.0 {
                continue;
            }
            // forward: out[i] += w u[i − (a,b)]; adjoint: out[i] += w u[i + (a,b)]
            let (da, db) = if adjoint { (a, b) } else { (-a, -b) };
            for r in 0..ri {
                let sr = (r + da).rem_euclid(ri) as usize;
                for c in 0..ci {
                    let sc = (c + db).rem_euclid(ci) as usize;
                    out[r as usize * cols + c as usize] += w * u[sr * cols + sc];
                }
            }
        }
    }
}

/// Normalised, symmetric 2D Gaussian kernel of size `(2·radius+1)²`.
pub fn gaussian_blur_kernel(sigma_px: f64, radius: usize) -> Result<Grid> {
    gaussian_kernel_shaped(sigma_px, radius, radius)
}

/// Gaussian kernel with independent row/column radii, e.g. `(r, 0)` for 1D
/// signals stored as columns.
pub fn gaussian_kernel_shaped(sigma_px: f64, radius_rows: usize, radius_cols: usize) -> Result<Grid> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma_px}"
        )));
    }
    let (h, w) = (2 * radius_rows + 1, 2 * radius_cols + 1);
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let di = i as f64 - radius_rows as f64;
            let dj = j as f64 - radius_cols as f64;
            data.push((-(di * di + dj * dj) / (2.0 * sigma_px * sigma_px)).exp());
        }
    }
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= total);
    Grid::new(h, w, data)
}
