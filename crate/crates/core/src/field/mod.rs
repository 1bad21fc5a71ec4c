//! Lattice geometry and the array containers used throughout the crate.
//!
//! Every array is stored row-major as `f64`: pixel `(row, col)` lives at
//! index `row * width + col`. Stacks of observations are stored
//! observation-major, so observation `l` is the contiguous slice
//! `values[l * len .. (l + 1) * len]`.

mod io;
mod smooth;

pub use io::{
    load_field_stack, load_mask, payload_path, save_field_stack, save_mask, save_mask_csv,
    save_mask_png, save_overlay_png, write_mask_csv, StackHeader, OVERLAY_LOWER, OVERLAY_POINT,
    OVERLAY_UPPER,
};
pub use smooth::{gaussian_kernel_1d, gaussian_smooth, kernel_radius, sigma_from_fwhm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width × height` pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    width: usize,
    height: usize,
}

impl Lattice {
    /// Both dimensions must be at least 2 so every pixel has a 4-neighbour.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// All 4-neighbour edges `(p, q)` with `p < q`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |row| self.row_edges(row))
    }

    /// Edges whose lower endpoint lies in `row`: the horizontal edges of the
    /// row and the vertical edges down to `row + 1`, in ascending order.
    pub fn row_edges(&self, row: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        let has_below = row + 1 < self.height;
        (0..w).flat_map(move |col| {
            let p = row * w + col;
            let right = (col + 1 < w).then_some((p, p + 1));
            let down = has_below.then_some((p, p + w));
            right.into_iter().chain(down)
        })
    }
}

/// One real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl ScalarField {
    /// Rejects wrong lengths and non-finite values.
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::Format(format!(
                "field has {} values, lattice {}x{} needs {}",
                values.len(),
                lattice.width(),
                lattice.height(),
                lattice.len()
            )));
        }
        if let Some(pixel) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                pixel,
                observation: 0,
            });
        }
        Ok(Self { lattice, values })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_vec_unchecked(lattice: Lattice, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.len());
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, value: f64) -> Self {
        Self::from_vec_unchecked(lattice, vec![value; lattice.len()])
    }

    /// Builds a field from `f(row, col)`.
    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(lattice.len());
        for row in 0..lattice.height() {
            for col in 0..lattice.width() {
                values.push(f(row, col));
            }
        }
        Self::from_vec_unchecked(lattice, values)
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.lattice.index(row, col)]
    }

    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.lattice, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pixelwise combination of two fields on the same lattice.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_lattice(other)?;
        Ok(Self::from_vec_unchecked(
            self.lattice,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn offset(&self, k: f64) -> Self {
        self.map(|v| v + k)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation at fractional pixel coordinates, clamped to
    /// the lattice.
    pub fn bilinear(&self, row: f64, col: f64) -> f64 {
        let h = self.lattice.height() as f64;
        let w = self.lattice.width() as f64;
        let r = row.clamp(0.0, h - 1.0);
        let c = col.clamp(0.0, w - 1.0);
        let r0 = (r.floor() as usize).min(self.lattice.height() - 2);
        let c0 = (c.floor() as usize).min(self.lattice.width() - 2);
        let fr = r - r0 as f64;
        let fc = c - c0 as f64;
        let v00 = self.get(r0, c0);
        let v01 = self.get(r0, c0 + 1);
        let v10 = self.get(r0 + 1, c0);
        let v11 = self.get(r0 + 1, c0 + 1);
        (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
    }

    pub(crate) fn ensure_same_lattice(&self, other: &ScalarField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::Configuration(format!(
                "lattice mismatch: {}x{} vs {}x{}",
                self.lattice.width(),
                self.lattice.height(),
                other.lattice.width(),
                other.lattice.height()
            )));
        }
        Ok(())
    }
}

/// `n` observations of a field, stored observation-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    lattice: Lattice,
    n: usize,
    values: Vec<f64>,
}

impl FieldStack {
    pub fn new(lattice: Lattice, n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "a field stack needs at least 2 observations, got {n}"
            )));
        }
        if values.len() != n * lattice.len() {
            return Err(Error::Format(format!(
                "stack payload has {} values, expected n*width*height = {}",
                values.len(),
                n * lattice.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                pixel: i % lattice.len(),
                observation: i / lattice.len(),
            });
        }
        Ok(Self { lattice, n, values })
    }

    pub(crate) fn from_vec_unchecked(lattice: Lattice, n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * lattice.len());
        Self { lattice, n, values }
    }

    /// Stacks `n` fields sharing one lattice.
    pub fn from_fields(fields: &[ScalarField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("no fields to stack".into()))?;
        let mut values = Vec::with_capacity(fields.len() * first.lattice().len());
        for f in fields {
            first.ensure_same_lattice(f)?;
            values.extend_from_slice(f.values());
        }
        Self::new(first.lattice(), fields.len(), values)
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Observation `l` as a row-major image.
    #[inline]
    pub fn observation(&self, l: usize) -> &[f64] {
        let len = self.lattice.len();
        &self.values[l * len..(l + 1) * len]
    }

    /// The `n` values at one pixel.
    pub fn pixel_series(&self, pixel: usize) -> Vec<f64> {
        let len = self.lattice.len();
        (0..self.n).map(|l| self.values[l * len + pixel]).collect()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_vec_unchecked(
            self.lattice,
            self.n,
            self.values.iter().map(|v| v * k).collect(),
        )
    }

    /// Adds `mean` to every observation.
    pub fn add_field(&mut self, mean: &ScalarField) -> Result<()> {
        if mean.lattice() != self.lattice {
            return Err(Error::Configuration(
                "mean field lattice does not match stack".into(),
            ));
        }
        let len = self.lattice.len();
        for obs in self.values.chunks_exact_mut(len) {
            for (y, m) in obs.iter_mut().zip(mean.values()) {
                *y += m;
            }
        }
        Ok(())
    }
}

/// A binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    lattice: Lattice,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(lattice: Lattice, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != lattice.len() {
            return Err(Error::Format(format!(
                "mask has {} entries, lattice needs {}",
                bits.len(),
                lattice.len()
            )));
        }
        Ok(Self { lattice, bits })
    }

    pub fn empty(lattice: Lattice) -> Self {
        Self {
            lattice,
            bits: vec![false; lattice.len()],
        }
    }

    pub fn full(lattice: Lattice) -> Self {
        Self {
            lattice,
            bits: vec![true; lattice.len()],
        }
    }

    /// Pixels of `field` satisfying `pred`.
    pub fn from_field(field: &ScalarField, pred: impl Fn(f64) -> bool) -> Self {
        Self {
            lattice: field.lattice(),
            bits: field.values().iter().map(|&v| pred(v)).collect(),
        }
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.bits[index]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.lattice.index(row, col)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.lattice == other.lattice && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn complement(&self) -> Self {
        Self {
            lattice: self.lattice,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn intersection(&self, other: &Mask) -> Self {
        assert_eq!(self.lattice, other.lattice, "mask lattice mismatch");
        Self {
            lattice: self.lattice,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Self {
        assert_eq!(self.lattice, other.lattice, "mask lattice mismatch");
        Self {
            lattice: self.lattice,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }
}
