//! Wild t-bootstrap calibration of the region threshold `a`.
//!
//! Each realization draws one vector of Rademacher multipliers `r₁..rₙ`,
//! shared by all conditions. At a node `v` (a lattice pixel by default) and
//! condition `i`
//!
//! ```text
//! G̃ⁱ(v) = n^(-1/2) · Σₗ rₗRⁱₗ(v) / σ̂*ⁱ(v)
//! ```
//!
//! where `σ̂*` is the sample standard deviation (divisor `n − 1`) of the
//! products `rₗRⁱₗ(v)`. A boundary point on edge `(p₁, p₂)` with weight `w`
//! takes `(1 − w)·G̃ⁱ(p₁) + w·G̃ⁱ(p₂)`, the same interpolation applied to `m̂`.
//! With [`Studentize::BoundaryPoints`] the residuals are interpolated onto
//! the point first and the point itself is the node.
//!
//! The realization's statistic is
//! `H̃ = maxₚ |min over the active set of p of εᵢG̃ⁱ(p)|`, and `a` is the
//! `⌈(1 − α)B⌉`-th smallest of the `B` values.
//!
//! Since `(rₗRₗ)² = Rₗ²`, the sum of squares of the bootstrap sample does not
//! depend on the multipliers; only `S = Σ rₗRₗ` is recomputed per realization.

mod rng;

pub use rng::{fill_rademacher, mix_seed, rademacher_stream};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::BoundarySegmentation;
use crate::field::FieldStack;

/// Realizations handled together, so each interpolated residual row is
/// reused across a block of multiplier vectors while it is in cache.
const BLOCK: usize = 32;
/// Centred sums of squares at or below this fraction of the raw sum of
/// squares are treated as zero variance.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap realizations `B`.
    pub realizations: usize,
    /// Tolerance level `α`.
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub studentize: Studentize,
}

/// Where the bootstrap sample is studentized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Studentize {
    /// At the two pixels of each boundary edge, then interpolated. Matches
    /// the variance of the interpolated statistic whatever the spatial
    /// correlation of the noise.
    #[default]
    Pixels,
    /// At each boundary point, on residuals interpolated onto it. Overstates
    /// the variance between pixels when the noise is rough, so the
    /// threshold comes out conservative.
    BoundaryPoints,
}

impl std::str::FromStr for Studentize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(Studentize::Pixels),
            "boundary_points" | "points" => Ok(Studentize::BoundaryPoints),
            other => Err(Error::InvalidParameter(format!(
                "unknown studentization '{other}'"
            ))),
        }
    }
}

impl BootstrapConfig {
    pub fn new(realizations: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            realizations,
            alpha,
            seed,
            studentize: Studentize::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidParameter(
                "bootstrap needs at least one realization".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// How realizations are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileResult {
    pub a: f64,
    /// `H̃_b` in realization order.
    pub h_tilde: Vec<f64>,
    /// 1-based order statistic index of `a`.
    pub index: usize,
}

impl QuantileResult {
    pub fn from_sample(h_tilde: Vec<f64>, alpha: f64) -> Result<Self> {
        let (a, index) = empirical_quantile(&h_tilde, alpha)?;
        Ok(Self { a, h_tilde, index })
    }

    /// Threshold at another level, from the same sample.
    pub fn at_level(&self, alpha: f64) -> Result<f64> {
        empirical_quantile(&self.h_tilde, alpha).map(|(a, _)| a)
    }
}

/// 1-based order statistic `k = ⌈(1 − α)B⌉` of `sample` and its value.
pub fn empirical_quantile(sample: &[f64], alpha: f64) -> Result<(f64, usize)> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("empty bootstrap sample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let b = sample.len();
    // the small offset keeps e.g. (1 − 0.05)·100 from rounding up to 96
    let k = (((1.0 - alpha) * b as f64 - 1e-9).ceil() as usize).clamp(1, b);
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[k - 1], k))
}

pub fn bootstrap_quantile(
    residuals: &[&FieldStack],
    seg: &BoundarySegmentation,
    signs_effective: &[f64],
    cfg: &BootstrapConfig,
) -> Result<QuantileResult> {
    bootstrap_quantile_with(residuals, seg, signs_effective, cfg, Execution::Parallel)
}

pub fn bootstrap_quantile_with(
    residuals: &[&FieldStack],
    seg: &BoundarySegmentation,
    signs_effective: &[f64],
    cfg: &BootstrapConfig,
    execution: Execution,
) -> Result<QuantileResult> {
    cfg.validate()?;
    let h = bootstrap_sample(
        residuals,
        seg,
        signs_effective,
        cfg.realizations,
        cfg.seed,
        cfg.studentize,
        execution,
    )?;
    QuantileResult::from_sample(h, cfg.alpha)
}

/// Residual rows at the studentization nodes, and how each boundary point
/// interpolates between two nodes.
struct BoundaryResiduals {
    n: usize,
    /// Per condition, node-major `nodes × n`.
    rows: Vec<Vec<f64>>,
    /// Per condition and node, `Σₗ Rₗ(v)²`.
    sum_sq: Vec<Vec<f64>>,
    /// Per boundary point, `(node₁, node₂, w)`.
    links: Vec<Link>,
    /// Per node, the conditions some incident point needs.
    needed: Vec<u64>,
    /// Per node, the lowest boundary point index using it.
    first_point: Vec<usize>,
}

/// `(p₁, p₂, w)`: the point `(1 − w)·p₁ + w·p₂`.
type Link = (usize, usize, f64);

impl BoundaryResiduals {
    fn new(residuals: &[&FieldStack], seg: &BoundarySegmentation, studentize: Studentize) -> Self {
        let n = residuals[0].n();
        let len = residuals[0].lattice().len();
        // each node is an interpolation (p₁, p₂, w) of lattice residuals
        let (nodes, links): (Vec<Link>, Vec<Link>) = match studentize {
            Studentize::BoundaryPoints => (
                seg.points
                    .iter()
                    .map(|pt| (pt.edge.0, pt.edge.1, pt.w))
                    .collect(),
                (0..seg.len()).map(|p| (p, p, 0.0)).collect(),
            ),
            Studentize::Pixels => {
                let mut pixels: Vec<usize> = seg
                    .points
                    .iter()
                    .flat_map(|pt| [pt.edge.0, pt.edge.1])
                    .collect();
                pixels.sort_unstable();
                pixels.dedup();
                let at = |s: usize| pixels.binary_search(&s).expect("pixel collected above");
                let links = seg
                    .points
                    .iter()
                    .map(|pt| (at(pt.edge.0), at(pt.edge.1), pt.w))
                    .collect();
                (pixels.iter().map(|&s| (s, s, 0.0)).collect(), links)
            }
        };
        let mut needed = vec![0u64; nodes.len()];
        let mut first_point = vec![usize::MAX; nodes.len()];
        for (p, (&(v1, v2, _), pt)) in links.iter().zip(&seg.points).enumerate() {
            for v in [v1, v2] {
                needed[v] |= pt.active_set.bits();
                first_point[v] = first_point[v].min(p);
            }
        }
        let mut rows = Vec::with_capacity(residuals.len());
        let mut sum_sq = Vec::with_capacity(residuals.len());
        for stack in residuals {
            let v = stack.values();
            let mut m = Vec::with_capacity(nodes.len() * n);
            let mut q = Vec::with_capacity(nodes.len());
            for &(p1, p2, w) in &nodes {
                let start = m.len();
                if w == 0.0 {
                    m.extend((0..n).map(|l| v[l * len + p1]));
                } else {
                    m.extend((0..n).map(|l| (1.0 - w) * v[l * len + p1] + w * v[l * len + p2]));
                }
                q.push(m[start..].iter().map(|x| x * x).sum());
            }
            rows.push(m);
            sum_sq.push(q);
        }
        Self {
            n,
            rows,
            sum_sq,
            links,
            needed,
            first_point,
        }
    }

    fn nodes(&self) -> usize {
        self.needed.len()
    }

    #[inline]
    fn row(&self, condition: usize, node: usize) -> &[f64] {
        &self.rows[condition][node * self.n..(node + 1) * self.n]
    }
}

/// The `B` values of `H̃` in realization order.
pub fn bootstrap_sample(
    residuals: &[&FieldStack],
    seg: &BoundarySegmentation,
    signs_effective: &[f64],
    realizations: usize,
    seed: u64,
    studentize: Studentize,
    execution: Execution,
) -> Result<Vec<f64>> {
    validate_inputs(residuals, seg, signs_effective)?;
    let prepared = BoundaryResiduals::new(residuals, seg, studentize);
    let blocks: Vec<usize> = (0..realizations).step_by(BLOCK).collect();
    let run = |&start: &usize| {
        let end = (start + BLOCK).min(realizations);
        realization_block(&prepared, seg, signs_effective, seed, start..end)
    };
    let per_block: Vec<Result<Vec<f64>>> = match execution {
        Execution::Parallel => blocks.par_iter().map(run).collect(),
        Execution::Sequential => blocks.iter().map(run).collect(),
    };
    let mut h = Vec::with_capacity(realizations);
    for block in per_block {
        h.extend(block?);
    }
    Ok(h)
}

fn validate_inputs(
    residuals: &[&FieldStack],
    seg: &BoundarySegmentation,
    signs_effective: &[f64],
) -> Result<()> {
    if seg.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    let first = residuals
        .first()
        .ok_or_else(|| Error::Configuration("no residual stacks".into()))?;
    if residuals.len() != signs_effective.len() {
        return Err(Error::Configuration(format!(
            "{} residual stacks but {} signs",
            residuals.len(),
            signs_effective.len()
        )));
    }
    if residuals
        .iter()
        .any(|r| r.n() != first.n() || r.lattice() != first.lattice())
    {
        return Err(Error::Configuration(
            "residual stacks must share n and lattice".into(),
        ));
    }
    let len = first.lattice().len();
    let m = residuals.len();
    for pt in &seg.points {
        if pt.edge.0 >= len || pt.edge.1 >= len {
            return Err(Error::Configuration(
                "boundary point lies outside the lattice".into(),
            ));
        }
        if pt.active_set.is_empty() || pt.active_set.iter().any(|i| i >= m) {
            return Err(Error::Configuration(format!(
                "active set {:#b} does not fit {m} conditions",
                pt.active_set.bits()
            )));
        }
    }
    Ok(())
}

fn realization_block(
    prepared: &BoundaryResiduals,
    seg: &BoundarySegmentation,
    signs: &[f64],
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let n = prepared.n;
    let nf = n as f64;
    let inv_sqrt_n = 1.0 / nf.sqrt();
    let k = range.len();
    let mut multipliers = vec![0.0; k * n];
    for (j, b) in range.clone().enumerate() {
        fill_rademacher(seed, b as u64, &mut multipliers[j * n..(j + 1) * n]);
    }

    let m = signs.len();
    // signed G̃ per (node, condition, realization)
    let mut g = vec![0.0f64; prepared.nodes() * m * k];
    let mut degenerate: Option<(usize, usize)> = None;
    for v in 0..prepared.nodes() {
        for i in crate::excursion::ConditionSet::from_bits(prepared.needed[v]).iter() {
            let row = prepared.row(i, v);
            let q = prepared.sum_sq[i][v];
            let out = &mut g[(v * m + i) * k..(v * m + i + 1) * k];
            for (j, gj) in out.iter_mut().enumerate() {
                let s = dot(row, &multipliers[j * n..(j + 1) * n]);
                let centred = q - s * s / nf;
                if centred.is_nan() || centred <= DEGENERATE_REL * q {
                    let here = (range.start + j, prepared.first_point[v]);
                    degenerate = Some(degenerate.map_or(here, |d| d.min(here)));
                    continue;
                }
                let sd = (centred / (nf - 1.0)).sqrt();
                *gj = signs[i] * s * inv_sqrt_n / sd;
            }
        }
    }
    if let Some((realization, point)) = degenerate {
        return Err(Error::DegenerateBootstrap { realization, point });
    }

    let mut h = vec![0.0f64; k];
    for (pt, &(v1, v2, w)) in seg.points.iter().zip(&prepared.links) {
        for (j, hj) in h.iter_mut().enumerate() {
            let min = pt
                .active_set
                .iter()
                .map(|i| (1.0 - w) * g[(v1 * m + i) * k + j] + w * g[(v2 * m + i) * k + j])
                .fold(f64::INFINITY, f64::min);
            *hj = hj.max(min.abs());
        }
    }
    Ok(h)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
