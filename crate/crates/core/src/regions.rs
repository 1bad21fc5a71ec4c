//! Nested confidence regions from the calibrated threshold, and the
//! simulation-side check that they bracket a known true set.
//!
//! For a conjunction, with `t = τₙ⁻¹·m̂`:
//!
//! ```text
//! upper = {t ≥ +a} ⊆ point = {m̂ ≥ 0} ⊆ lower = {t ≥ −a}
//! ```
//!
//! For a disjunction the three masks are computed the same way on the
//! negated working fields and then complemented, with `upper` and `lower`
//! exchanging roles. On a pixel lattice the closure of a complement is the
//! complement itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::{
    interpolate_edge, zero_crossings, CombineMode, CombineSpec, Sign, StandardizedFields,
};
use crate::field::{Mask, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegions {
    pub upper: Mask,
    pub point: Mask,
    pub lower: Mask,
    pub a: f64,
    pub alpha: Option<f64>,
    pub mode: CombineMode,
    pub signs: Vec<Sign>,
}

/// Pixel counts for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub upper: usize,
    pub point: usize,
    pub lower: usize,
}

impl ConfidenceRegions {
    pub fn is_nested(&self) -> bool {
        self.upper.is_subset_of(&self.point) && self.point.is_subset_of(&self.lower)
    }

    /// Errors unless `upper ⊆ point ⊆ lower`.
    pub fn ensure_nested(&self) -> Result<()> {
        if self.is_nested() {
            Ok(())
        } else {
            Err(Error::Configuration(
                "confidence regions are not nested (upper ⊆ point ⊆ lower violated)".into(),
            ))
        }
    }

    /// Display names of upper, point and lower.
    pub fn labels(&self) -> [&'static str; 3] {
        match self.mode {
            CombineMode::Conjunction => ["F+", "F", "F-"],
            CombineMode::Disjunction => ["G+", "G", "G-"],
        }
    }

    pub fn counts(&self) -> RegionCounts {
        RegionCounts {
            upper: self.upper.count(),
            point: self.point.count(),
            lower: self.lower.count(),
        }
    }

    /// The masks as thresholded on the working fields, before any
    /// disjunction complement: `(upper, point, lower)`.
    pub fn working_masks(&self) -> (Mask, Mask, Mask) {
        match self.mode {
            CombineMode::Conjunction => {
                (self.upper.clone(), self.point.clone(), self.lower.clone())
            }
            CombineMode::Disjunction => (
                self.lower.complement(),
                self.point.complement(),
                self.upper.complement(),
            ),
        }
    }
}

pub fn threshold_regions(
    fields: &StandardizedFields,
    a: f64,
    spec: &CombineSpec,
) -> Result<ConfidenceRegions> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "threshold a must be >= 0, got {a}"
        )));
    }
    if fields.conditions() != spec.conditions() || fields.mode != spec.mode() {
        return Err(Error::Configuration(
            "standardized fields were built for a different combination".into(),
        ));
    }
    let (upper, point, lower) = working_masks(fields, a);
    let (upper, point, lower) = match spec.mode() {
        CombineMode::Conjunction => (upper, point, lower),
        CombineMode::Disjunction => (lower.complement(), point.complement(), upper.complement()),
    };
    Ok(ConfidenceRegions {
        upper,
        point,
        lower,
        a,
        alpha: None,
        mode: spec.mode(),
        signs: spec.signs().to_vec(),
    })
}

fn working_masks(fields: &StandardizedFields, a: f64) -> (Mask, Mask, Mask) {
    let t = fields.statistic();
    (
        Mask::from_field(&t, |v| v >= a),
        Mask::from_field(&fields.m_hat, |v| v >= 0.0),
        Mask::from_field(&t, |v| v >= -a),
    )
}

/// Intersection of per-condition regions, each with its own threshold.
pub fn intersect_regions(parts: &[ConfidenceRegions]) -> Result<ConfidenceRegions> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::Configuration("nothing to intersect".into()))?;
    let mut out = first.clone();
    for r in rest {
        if r.upper.lattice() != out.upper.lattice() {
            return Err(Error::Configuration("regions differ in lattice".into()));
        }
        out.upper = out.upper.intersection(&r.upper);
        out.point = out.point.intersection(&r.point);
        out.lower = out.lower.intersection(&r.lower);
        out.signs.extend_from_slice(&r.signs);
    }
    out.a = parts.iter().map(|r| r.a).fold(f64::NEG_INFINITY, f64::max);
    Ok(out)
}

/// Known target functions, expressed as working fields with the same sign
/// conventions as [`crate::excursion::standardize`].
#[derive(Debug, Clone)]
pub struct Truth {
    working: Vec<ScalarField>,
    min: ScalarField,
    mode: CombineMode,
}

impl Truth {
    /// True means with unit standard deviation.
    pub fn new(means: &[ScalarField], spec: &CombineSpec) -> Result<Self> {
        Self::build(means, None, spec)
    }

    pub fn with_sigma(
        means: &[ScalarField],
        sigmas: &[ScalarField],
        spec: &CombineSpec,
    ) -> Result<Self> {
        if sigmas.len() != means.len() {
            return Err(Error::Configuration(format!(
                "{} true means but {} standard deviation fields",
                means.len(),
                sigmas.len()
            )));
        }
        Self::build(means, Some(sigmas), spec)
    }

    fn build(
        means: &[ScalarField],
        sigmas: Option<&[ScalarField]>,
        spec: &CombineSpec,
    ) -> Result<Self> {
        if means.len() != spec.conditions() {
            return Err(Error::Configuration(format!(
                "{} true means for {} conditions",
                means.len(),
                spec.conditions()
            )));
        }
        let signs = spec.effective_signs();
        let mut working = Vec::with_capacity(means.len());
        for (i, mu) in means.iter().enumerate() {
            means[0].ensure_same_lattice(mu)?;
            let c = spec.thresholds()[i];
            let g = match sigmas {
                Some(s) => {
                    if s[i].values().iter().any(|&v| v.is_nan() || v <= 0.0) {
                        return Err(Error::Configuration(format!(
                            "true standard deviation of condition {} must be positive",
                            i + 1
                        )));
                    }
                    mu.zip_with(&s[i], |m, sd| signs[i] * (m - c) / sd)?
                }
                None => mu.map(|m| signs[i] * (m - c)),
            };
            working.push(g);
        }
        let mut min = working[0].values().to_vec();
        for g in &working[1..] {
            for (m, &v) in min.iter_mut().zip(g.values()) {
                *m = m.min(v);
            }
        }
        let min = ScalarField::new(working[0].lattice(), min)?;
        Ok(Self {
            working,
            min,
            mode: spec.mode(),
        })
    }

    pub fn working_fields(&self) -> &[ScalarField] {
        &self.working
    }

    /// Minimum of the true working fields; the true set is `{min ≥ 0}`.
    pub fn min_field(&self) -> &ScalarField {
        &self.min
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }
}

/// What a true boundary point requires of the estimate.
enum BoundaryRule<'a> {
    /// One threshold on the combined statistic.
    Joint { m_hat: &'a [f64], tau: f64, a: f64 },
    /// Per-condition statistics and thresholds, intersected.
    Separate {
        g_hat: Vec<&'a [f64]>,
        tau: f64,
        a: &'a [f64],
    },
}

impl BoundaryRule<'_> {
    /// True if the point at `(edge, w)` violates the inclusion statement:
    /// it must lie in `lower` and must not be interior to `upper`.
    fn violated(&self, edge: (usize, usize), w: f64) -> bool {
        match self {
            BoundaryRule::Joint { m_hat, tau, a } => {
                let t = interpolate_edge(m_hat, edge, w) / tau;
                t < -a || t >= *a
            }
            BoundaryRule::Separate { g_hat, tau, a } => {
                let mut in_upper = true;
                for (g, &ai) in g_hat.iter().zip(a.iter()) {
                    let t = interpolate_edge(g, edge, w) / tau;
                    if t < -ai {
                        return true;
                    }
                    in_upper &= t >= ai;
                }
                in_upper
            }
        }
    }
}

/// True iff `upper ⊆ true set ⊆ lower` on the pixels and, at every
/// interpolated crossing of the true boundary, the interpolated statistic
/// `τₙ⁻¹·m̂` lies in `[−a, a)`.
pub fn check_inclusion(
    truth: &Truth,
    regions: &ConfidenceRegions,
    fields: &StandardizedFields,
    a: f64,
) -> Result<bool> {
    if truth.working.len() != fields.conditions() {
        return Err(Error::Configuration(format!(
            "truth has {} conditions, estimate has {}",
            truth.working.len(),
            fields.conditions()
        )));
    }
    let rule = BoundaryRule::Joint {
        m_hat: fields.m_hat.values(),
        tau: fields.tau_n,
        a,
    };
    check_with_rule(truth, regions, fields.m_hat.lattice(), &rule)
}

/// As [`check_inclusion`] for regions built by intersecting
/// single-condition regions, condition `i` thresholded at `thresholds[i]`.
pub fn check_inclusion_separate(
    truth: &Truth,
    regions: &ConfidenceRegions,
    per_condition: &[StandardizedFields],
    thresholds: &[f64],
) -> Result<bool> {
    if per_condition.len() != truth.working.len() || thresholds.len() != truth.working.len() {
        return Err(Error::Configuration(
            "per-condition fields and thresholds must match the truth's conditions".into(),
        ));
    }
    let tau = per_condition[0].tau_n;
    let rule = BoundaryRule::Separate {
        g_hat: per_condition.iter().map(|f| f.g_hat[0].values()).collect(),
        tau,
        a: thresholds,
    };
    check_with_rule(truth, regions, per_condition[0].m_hat.lattice(), &rule)
}

fn check_with_rule(
    truth: &Truth,
    regions: &ConfidenceRegions,
    lattice: crate::field::Lattice,
    rule: &BoundaryRule<'_>,
) -> Result<bool> {
    if truth.min.lattice() != lattice || regions.lower.lattice() != lattice {
        return Err(Error::Configuration(
            "truth, estimate and regions differ in lattice".into(),
        ));
    }
    if truth.mode != regions.mode {
        return Err(Error::Configuration(
            "truth and regions use different modes".into(),
        ));
    }
    let (upper, _, lower) = regions.working_masks();
    let inside = truth.min.values();
    for (s, &v) in inside.iter().enumerate() {
        if (v >= 0.0 && !lower.contains(s)) || (upper.contains(s) && v < 0.0) {
            return Ok(false);
        }
    }
    Ok(zero_crossings(&truth.min)
        .into_iter()
        .all(|(edge, w)| !rule.violated(edge, w)))
}
