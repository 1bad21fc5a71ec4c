//! Isotropic Gaussian smoothing parameterised by FWHM.
//!
//! The kernel is truncated to the square `[-r, r]²` with `r = ⌈4σ⌉` and
//! renormalised to unit mass. Pixels outside the lattice count as zero.
//! Because the truncated kernel is an outer product of two normalised 1D
//! kernels, the convolution is done as two separable passes.

use super::ScalarField;
use crate::error::{Error, Result};

/// `σ = FWHM / (2·√(2·ln 2))`.
pub fn sigma_from_fwhm(fwhm_px: f64) -> f64 {
    fwhm_px / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

pub fn kernel_radius(sigma: f64) -> usize {
    (4.0 * sigma).ceil() as usize
}

/// Normalised 1D taps for offsets `-r..=r`.
pub fn gaussian_kernel_1d(fwhm_px: f64) -> Result<Vec<f64>> {
    if !(fwhm_px > 0.0 && fwhm_px.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "FWHM must be positive and finite, got {fwhm_px}"
        )));
    }
    let sigma = sigma_from_fwhm(fwhm_px);
    let r = kernel_radius(sigma) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mass: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / mass).collect())
}

pub fn gaussian_smooth(field: &ScalarField, fwhm_px: f64) -> Result<ScalarField> {
    let kernel = gaussian_kernel_1d(fwhm_px)?;
    let r = (kernel.len() / 2) as isize;
    let lat = field.lattice();
    let (w, h) = (lat.width() as isize, lat.height() as isize);
    let src = field.values();

    let mut horiz = vec![0.0; src.len()];
    for row in 0..h {
        let line = &src[(row * w) as usize..((row + 1) * w) as usize];
        let out = &mut horiz[(row * w) as usize..((row + 1) * w) as usize];
        for col in 0..w {
            let lo = (col - r).max(0);
            let hi = (col + r).min(w - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += kernel[(j - col + r) as usize] * line[j as usize];
            }
            out[col as usize] = acc;
        }
    }

    let mut out = vec![0.0; src.len()];
    for row in 0..h {
        let lo = (row - r).max(0);
        let hi = (row + r).min(h - 1);
        let dst = &mut out[(row * w) as usize..((row + 1) * w) as usize];
        for i in lo..=hi {
            let k = kernel[(i - row + r) as usize];
            let line = &horiz[(i * w) as usize..((i + 1) * w) as usize];
            for (d, s) in dst.iter_mut().zip(line) {
                *d += k * s;
            }
        }
    }
    Ok(ScalarField::from_vec_unchecked(lat, out))
}
