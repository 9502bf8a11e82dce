//! Deterministic synthetic test images.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomId {
    /// 1D signal, plateaus 50 and 150, jump at the midpoint.
    Step1d,
    /// Six overlapping squares on a dark background.
    Squares2d,
    /// Nested ellipses, head-phantom style.
    SheppLike,
    /// Periodic vertical stripes.
    TextureStripes,
}

impl PhantomId {
    pub const ALL: [PhantomId; 4] = [
        PhantomId::Step1d,
        PhantomId::Squares2d,
        PhantomId::SheppLike,
        PhantomId::TextureStripes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhantomId::Step1d => "step_1d",
            PhantomId::Squares2d => "squares_2d",
            PhantomId::SheppLike => "shepp_like",
            PhantomId::TextureStripes => "texture_stripes",
        }
    }
}

impl FromStr for PhantomId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhantomId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown phantom '{s}'")))
    }
}

pub fn phantom(id: PhantomId, size: usize) -> Result<Grid> {
    if size < 8 {
        return Err(Error::InvalidParameter(format!(
            "phantom size must be >= 8, got {size}"
        )));
    }
    let n = size;
    let g = match id {
        PhantomId::Step1d => Grid::from_parts(n, 1, (0..n).map(|i| if i < n / 2 { 50.0 } else { 150.0 }).collect()),
        PhantomId::Squares2d => {
            // (top, left, side) as fractions of the size, and gray level.
            let squares = [
                (0.10, 0.10, 0.35, 96.0),
                (0.30, 0.25, 0.30, 160.0),
                (0.55, 0.55, 0.35, 192.0),
                (0.15, 0.60, 0.25, 128.0),
                (0.60, 0.12, 0.28, 64.0),
                (0.40, 0.45, 0.20, 224.0),
            ];
            let mut img = Grid::filled(n, n, 32.0);
            for &(t, l, s, v) in &squares {
                let (r0, c0) = ((t * n as f64) as usize, (l * n as f64) as usize);
                let side = ((s * n as f64) as usize).max(1);
                for r in r0..(r0 + side).min(n) {
                    for c in c0..(c0 + side).min(n) {
                        img.set(r, c, v);
                    }
                }
            }
            img
        }
        PhantomId::SheppLike => {
            // (cx, cy, a, b, value), later ellipses overwrite earlier ones.
            let ellipses = [
                (0.0, 0.0, 0.70, 0.90, 180.0),
                (0.0, -0.02, 0.62, 0.82, 60.0),
                (0.22, 0.0, 0.11, 0.30, 20.0),
                (-0.22, 0.0, 0.16, 0.40, 20.0),
                (0.0, 0.35, 0.21, 0.25, 110.0),
                (0.0, -0.60, 0.05, 0.05, 140.0),
                (0.06, -0.60, 0.03, 0.05, 140.0),
            ];
            let mut img = Grid::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    let x = 2.0 * (c as f64 + 0.5) / n as f64 - 1.0;
                    let y = 1.0 - 2.0 * (r as f64 + 0.5) / n as f64;
                    for &(cx, cy, a, b, v) in &ellipses {
                        if ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0 {
                            img.set(r, c, v);
                        }
                    }
                }
            }
            img
        }
        PhantomId::TextureStripes => {
            let mut img = Grid::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    let v = if (c / 3) % 2 == 0 { 70.0 } else { 180.0 };
                    img.set(r, c, v);
                }
            }
            img
        }
    };
    Ok(g)
}
