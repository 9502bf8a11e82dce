//! Dense row-major signals and per-site vector fields.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{shape_err, Error, Result};
use crate::linalg;

/// A dense 1D or 2D array of `f64`, stored row-major.
///
/// 1D signals use `cols == 1`.
#[derive(Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    /// Builds a grid, rejecting length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(shape_err(format!("{rows}x{cols}"), format!("{} values", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid entry {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// A 1D signal (`cols == 1`).
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(n, 1, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Wraps data produced by internal arithmetic. Length must match.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Same shape, new data.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.rows, self.cols, data)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape_err(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_shape(other));
        Self::from_parts(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        linalg::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    pub fn norm_sq(&self) -> f64 {
        linalg::dot(&self.data, &self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `‖self − other‖ / max(‖other‖, tiny)`.
    pub fn rel_err(&self, reference: &Grid) -> f64 {
        let diff = linalg::dist(&self.data, &reference.data);
        diff / reference.norm().max(1e-300)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({}x{}", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}

impl Index<usize> for Grid {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Grid {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Add for &Grid {
    type Output = Grid;
    fn add(self, rhs: &Grid) -> Grid {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Grid {
    type Output = Grid;
    fn sub(self, rhs: &Grid) -> Grid {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<&Grid> for f64 {
    type Output = Grid;
    fn mul(self, rhs: &Grid) -> Grid {
        rhs.scale(self)
    }
}

/// `m` sites with `comps` components each, stored site-major.
#[derive(Clone, PartialEq)]
pub struct VectorField {
    sites: usize,
    comps: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn new(sites: usize, comps: usize, data: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&comps) {
            return Err(Error::InvalidParameter(format!(
                "vector field components must be 1 or 2, got {comps}"
            )));
        }
        if sites * comps != data.len() {
            return Err(shape_err(format!("{sites}x{comps}"), format!("{} values", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector field".into()));
        }
        Ok(Self { sites, comps, data })
    }

    pub fn zeros(sites: usize, comps: usize) -> Self {
        Self {
            sites,
            comps,
            data: vec![0.0; sites * comps],
        }
    }

    pub(crate) fn from_parts(sites: usize, comps: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(sites * comps, data.len());
        Self { sites, comps, data }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.data[i * self.comps..(i + 1) * self.comps]
    }

    /// Euclidean norm of each site's component vector.
    pub fn site_norms(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.comps)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub(crate) fn check_same_shape(&self, other: &VectorField) -> Result<()> {
        if self.sites == other.sites && self.comps == other.comps {
            Ok(())
        } else {
            Err(shape_err(
                format!("{}x{}", self.sites, self.comps),
                format!("{}x{}", other.sites, other.comps),
            ))
        }
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({}x{}", self.sites, self.comps)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(Grid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Grid::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(VectorField::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn site_norms() {
        let z = VectorField::new(2, 2, vec![3.0, 4.0, 0.0, 1.0]).unwrap();
        assert_eq!(z.site_norms(), vec![5.0, 1.0]);
    }
}
