//! Mass-univariate linear model: one ordinary least-squares fit per pixel,
//! all pixels sharing a design matrix and contrast.
//!
//! Under the iid working covariance `Σ(s) = σ(s)²·I` the GLS estimator
//! reduces to OLS, so per pixel
//!
//! ```text
//! β̂  = (XᵀX)⁻¹XᵀY
//! σ̂² = ‖Y − Xβ̂‖² / (n − p)
//! μ̂  = Lᵀβ̂,   se = σ̂·√(Lᵀ(XᵀX)⁻¹L)
//! R  = (Y − Xβ̂) / σ̂
//! ```
//!
//! and `τₙ = n^(-1/2)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{FieldStack, ScalarField};

/// Relative size below which a residual standard deviation counts as zero.
const DEGENERATE_SIGMA_REL: f64 = 64.0 * f64::EPSILON;
/// Smallest admissible ratio of extreme singular values of the design.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceModel {
    /// Independent, equal-variance errors at each pixel.
    #[default]
    Iid,
}

/// Design matrix, contrast and working covariance for one study condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    n: usize,
    p: usize,
    x: Vec<f64>,
    contrast: Vec<f64>,
    covariance: CovarianceModel,
    /// `(XᵀX)⁻¹Xᵀ`, p × n row-major.
    projector: Vec<f64>,
    /// `Lᵀ(XᵀX)⁻¹L`.
    contrast_variance: f64,
}

impl DesignSpec {
    /// `rows` holds one row of `X` per observation.
    pub fn new(rows: &[Vec<f64>], contrast: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::Design("design matrix has no columns".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Design(format!(
                "design row {i} has {} columns, expected {p}",
                rows[i].len()
            )));
        }
        if p + 1 > n {
            return Err(Error::Design(format!(
                "need at least p+1 = {} observations for {p} columns, got {n}",
                p + 1
            )));
        }
        if contrast.len() != p {
            return Err(Error::Design(format!(
                "contrast has {} entries, design has {p} columns",
                contrast.len()
            )));
        }
        if contrast.iter().all(|&c| c == 0.0) {
            return Err(Error::Design("contrast is the zero vector".into()));
        }
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        if x.iter().chain(&contrast).any(|v| !v.is_finite()) {
            return Err(Error::Design(
                "design or contrast contains non-finite values".into(),
            ));
        }

        let xm = DMatrix::from_row_slice(n, p, &x);
        let sv = xm.clone().svd(false, false).singular_values;
        let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        if smax == 0.0 || smin / smax < RANK_TOL {
            return Err(Error::Design(format!(
                "design matrix is rank deficient (singular values {smin:.3e} .. {smax:.3e})"
            )));
        }
        let xtx_inv = (xm.transpose() * &xm)
            .cholesky()
            .ok_or_else(|| Error::Design("XᵀX is not positive definite".into()))?
            .inverse();
        let proj = &xtx_inv * xm.transpose();
        let mut projector = Vec::with_capacity(p * n);
        for j in 0..p {
            for l in 0..n {
                projector.push(proj[(j, l)]);
            }
        }
        let lv = nalgebra::DVector::from_column_slice(&contrast);
        let contrast_variance = (lv.transpose() * &xtx_inv * &lv)[(0, 0)];

        Ok(Self {
            n,
            p,
            x,
            contrast,
            covariance: CovarianceModel::Iid,
            projector,
            contrast_variance,
        })
    }

    /// Column of ones with contrast `[1]`: the one-sample mean model.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::new(&vec![vec![1.0]; n], vec![1.0])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn contrast(&self) -> &[f64] {
        &self.contrast
    }

    pub fn covariance(&self) -> CovarianceModel {
        self.covariance
    }

    pub fn x(&self, row: usize, col: usize) -> f64 {
        self.x[row * self.p + col]
    }

    /// `Lᵀ(XᵀX)⁻¹L`, the squared contrast standard error in units of σ².
    pub fn contrast_variance(&self) -> f64 {
        self.contrast_variance
    }

    /// True if some column is a nonzero constant.
    pub fn has_intercept(&self) -> bool {
        (0..self.p).any(|j| {
            let first = self.x(0, j);
            first != 0.0 && (1..self.n).all(|l| self.x(l, j) == first)
        })
    }
}

/// Per-condition fit products.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// `μ̂ = Lᵀβ̂`, in response units.
    pub mu_hat: ScalarField,
    /// Contrast standard error `σ̂·√(Lᵀ(XᵀX)⁻¹L)`.
    pub se: ScalarField,
    pub sigma_hat: ScalarField,
    pub tau_n: f64,
    /// Standardised residuals `(Y − Xβ̂)/σ̂`.
    pub residuals: FieldStack,
    pub n: usize,
}

impl GlmFit {
    /// `se/τₙ`: the standard deviation that puts `μ̂` on the `ĝ` scale.
    pub fn sigma_standardized(&self) -> ScalarField {
        self.se.scale(1.0 / self.tau_n)
    }
}

pub fn fit(data: &FieldStack, design: &DesignSpec) -> Result<GlmFit> {
    fit_owned(data.clone(), design)
}

/// As [`fit`], reusing the data buffer for the residual stack.
pub fn fit_owned(data: FieldStack, design: &DesignSpec) -> Result<GlmFit> {
    let n = data.n();
    if n != design.n() {
        return Err(Error::Design(format!(
            "stack has n = {n} observations, design has {} rows",
            design.n()
        )));
    }
    let lattice = data.lattice();
    let len = lattice.len();
    let p = design.p();
    let mut stack = data;

    // β̂ and the per-pixel magnitude used for the degeneracy test
    let mut beta = vec![0.0; p * len];
    let mut max_abs = vec![0.0f64; len];
    for l in 0..n {
        let y = stack.observation(l);
        for (m, &v) in max_abs.iter_mut().zip(y) {
            *m = m.max(v.abs());
        }
        for j in 0..p {
            let h = design.projector[j * n + l];
            for (b, &v) in beta[j * len..(j + 1) * len].iter_mut().zip(y) {
                *b += h * v;
            }
        }
    }

    // raw residuals in place, accumulating the residual sum of squares
    let mut ss = vec![0.0; len];
    for (l, obs) in stack.values_mut().chunks_exact_mut(len).enumerate() {
        for j in 0..p {
            let xlj = design.x(l, j);
            for (e, b) in obs.iter_mut().zip(&beta[j * len..(j + 1) * len]) {
                *e -= xlj * b;
            }
        }
        for (s, e) in ss.iter_mut().zip(obs.iter()) {
            *s += e * e;
        }
    }

    let dof = (n - p) as f64;
    let sigma: Vec<f64> = ss.iter().map(|s| (s / dof).sqrt()).collect();
    let degenerate: Vec<usize> = sigma
        .iter()
        .zip(&max_abs)
        .enumerate()
        .filter(|(_, (&s, &m))| s == 0.0 || s <= DEGENERATE_SIGMA_REL * m)
        .map(|(i, _)| i)
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::DegeneratePixels { pixels: degenerate });
    }

    let inv_sigma: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    for obs in stack.values_mut().chunks_exact_mut(len) {
        for (e, k) in obs.iter_mut().zip(&inv_sigma) {
            *e *= k;
        }
    }

    let mut mu = vec![0.0; len];
    for (j, &lj) in design.contrast().iter().enumerate() {
        if lj == 0.0 {
            continue;
        }
        for (m, b) in mu.iter_mut().zip(&beta[j * len..(j + 1) * len]) {
            *m += lj * b;
        }
    }
    let se_factor = design.contrast_variance().sqrt();
    let se: Vec<f64> = sigma.iter().map(|s| s * se_factor).collect();

    Ok(GlmFit {
        mu_hat: ScalarField::from_vec_unchecked(lattice, mu),
        se: ScalarField::from_vec_unchecked(lattice, se),
        sigma_hat: ScalarField::from_vec_unchecked(lattice, sigma),
        tau_n: (n as f64).powf(-0.5),
        residuals: stack,
        n,
    })
}
