//! Synthetic observations `y = Φx₀ + w`.

use rand::seq::index;

use super::noise::GaussianStream;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operators::{gaussian_kernel_shaped, LinearMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradationKind {
    Awgn,
    /// Random exact-count pixel mask plus AWGN.
    Mask,
    /// Circular Gaussian blur plus AWGN.
    BlurPlusAwgn,
}

impl DegradationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DegradationKind::Awgn => "awgn",
            DegradationKind::Mask => "mask",
            DegradationKind::BlurPlusAwgn => "blur_plus_awgn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub sigma_noise: f64,
    pub mask_fraction: f64,
    pub blur_sigma_px: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn awgn(sigma_noise: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::Awgn,
            sigma_noise,
            mask_fraction: 0.0,
            blur_sigma_px: 0.0,
            seed,
        }
    }

    pub fn mask(mask_fraction: f64, sigma_noise: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::Mask,
            mask_fraction,
            ..Self::awgn(sigma_noise, seed)
        }
    }

    pub fn blur(blur_sigma_px: f64, sigma_noise: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::BlurPlusAwgn,
            blur_sigma_px,
            ..Self::awgn(sigma_noise, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_noise >= 0.0) || !self.sigma_noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be >= 0, got {}",
                self.sigma_noise
            )));
        }
        if self.kind == DegradationKind::Mask && !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::InvalidParameter(format!(
                "mask fraction must lie in [0, 1], got {}",
                self.mask_fraction
            )));
        }
        if self.kind == DegradationKind::BlurPlusAwgn && !(self.blur_sigma_px > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma_px
            )));
        }
        Ok(())
    }
}

/// Builds `Φ` and draws `y = Φx₀ + w`. The mask (if any) is drawn first, then
/// the noise, both from the spec's seed; the same spec always yields the
/// same bits.
pub fn degrade(x0: &Grid, spec: &DegradationSpec) -> Result<(Grid, LinearMap)> {
    spec.validate()?;
    let (rows, cols) = x0.shape();
    let p = x0.len();
    let mut stream = GaussianStream::new(spec.seed);
    let phi = match spec.kind {
        DegradationKind::Awgn => LinearMap::identity(rows, cols),
        DegradationKind::Mask => {
            let removed = (spec.mask_fraction * p as f64).floor() as usize;
            let mut mask = vec![1.0; p];
            for i in index::sample(stream.rng_mut(), p, removed.min(p)).into_iter() {
                mask[i] = 0.0;
            }
            LinearMap::diagonal_mask(&Grid::from_parts(rows, cols, mask))
        }
        DegradationKind::BlurPlusAwgn => {
            let radius = (3.0 * spec.blur_sigma_px).ceil() as usize;
            let rr = if rows > 1 { radius.min((rows - 1) / 2) } else { 0 };
            let rc = if cols > 1 { radius.min((cols - 1) / 2) } else { 0 };
            let kernel = gaussian_kernel_shaped(spec.blur_sigma_px, rr, rc)?;
            LinearMap::circular_convolution(kernel, rows, cols)?
        }
    };
    let clean = phi.apply(x0.as_slice())?;
    let noise = stream.normals(p, spec.sigma_noise);
    let y: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok((Grid::new(rows, cols, y)?, phi))
}
