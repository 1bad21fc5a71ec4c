//! Standardised working fields, their pixelwise minimum, and the sub-pixel
//! boundary of the estimated combined excursion set.
//!
//! Each condition contributes a working field `ĝⁱ = εᵢ·(μ̂ⁱ − cᵢ)/σⁱ` where
//! the effective sign `εᵢ` is `δᵢ` for a conjunction and `−δᵢ` for a
//! disjunction (the union is handled as the complement of an intersection
//! of complements). The combined field is `m̂ = minᵢ ĝⁱ` and the estimated
//! set is `{m̂ ≥ 0}`.
//!
//! The boundary is located on 4-neighbour lattice edges whose endpoints
//! straddle zero, by linear interpolation. Each boundary point carries the
//! set of conditions whose interpolated working field is within `η` of zero.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Lattice, ScalarField};
use crate::glm::GlmFit;

/// Upper bound on the number of conditions, set by the bitmask width.
pub const MAX_CONDITIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// Intersection: all conditions exceed their thresholds.
    Conjunction,
    /// Union: at least one condition exceeds its threshold.
    Disjunction,
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMode::Conjunction => "conjunction",
            CombineMode::Disjunction => "disjunction",
        })
    }
}

impl std::str::FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conjunction" | "and" => Ok(Self::Conjunction),
            "disjunction" | "or" => Ok(Self::Disjunction),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode {s:?}, expected conjunction or disjunction"
            ))),
        }
    }
}

/// `δᵢ`: whether condition `i` enters as `μⁱ ≥ cᵢ` or its negation `μⁱ ≤ cᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            _ => Err(Error::InvalidParameter(format!(
                "sign must be +1 or -1, got {v}"
            ))),
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "+1" | "+" | "pos" | "positive" => Ok(Sign::Positive),
            "-1" | "-" | "neg" | "negative" => Ok(Sign::Negative),
            _ => Err(Error::InvalidParameter(format!(
                "sign must be +1 or -1, got {s:?}"
            ))),
        }
    }
}

/// How the `M` excursion sets are combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombineSpec {
    thresholds: Vec<f64>,
    signs: Vec<Sign>,
    mode: CombineMode,
}

impl CombineSpec {
    pub fn new(thresholds: Vec<f64>, signs: Vec<Sign>, mode: CombineMode) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one condition is required".into(),
            ));
        }
        if thresholds.len() > MAX_CONDITIONS {
            return Err(Error::InvalidParameter(format!(
                "at most {MAX_CONDITIONS} conditions are supported, got {}",
                thresholds.len()
            )));
        }
        if thresholds.len() != signs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds but {} signs",
                thresholds.len(),
                signs.len()
            )));
        }
        if thresholds.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        Ok(Self {
            thresholds,
            signs,
            mode,
        })
    }

    /// Plain conjunction `μⁱ ≥ c` for all `m` conditions.
    pub fn conjunction(c: f64, m: usize) -> Result<Self> {
        Self::new(
            vec![c; m],
            vec![Sign::Positive; m],
            CombineMode::Conjunction,
        )
    }

    pub fn conditions(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    /// `δᵢ` under conjunction, `−δᵢ` under disjunction.
    pub fn effective_signs(&self) -> Vec<f64> {
        let flip = match self.mode {
            CombineMode::Conjunction => 1.0,
            CombineMode::Disjunction => -1.0,
        };
        self.signs.iter().map(|s| flip * s.factor()).collect()
    }

    /// The single-condition spec for condition `i`, same mode.
    pub fn single(&self, i: usize) -> Self {
        Self {
            thresholds: vec![self.thresholds[i]],
            signs: vec![self.signs[i]],
            mode: self.mode,
        }
    }
}

/// Nonempty subset of conditions, bit `i` for condition `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConditionSet(u64);

impl ConditionSet {
    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self(indices.into_iter().fold(0, |acc, i| acc | (1u64 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Zero-based condition indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }
}

/// Working fields and their pixelwise minimum.
#[derive(Debug, Clone)]
pub struct StandardizedFields {
    pub g_hat: Vec<ScalarField>,
    pub m_hat: ScalarField,
    pub tau_n: f64,
    pub mode: CombineMode,
    /// The sign applied to each condition's working field.
    pub effective_signs: Vec<f64>,
}

impl StandardizedFields {
    /// Builds from working fields directly; `m_hat` is their pixelwise minimum.
    pub fn from_working_fields(
        g_hat: Vec<ScalarField>,
        tau_n: f64,
        mode: CombineMode,
        effective_signs: Vec<f64>,
    ) -> Result<Self> {
        let first = g_hat
            .first()
            .ok_or_else(|| Error::Configuration("no working fields".into()))?;
        if g_hat.len() != effective_signs.len() {
            return Err(Error::Configuration(format!(
                "{} working fields but {} signs",
                g_hat.len(),
                effective_signs.len()
            )));
        }
        if !(tau_n > 0.0 && tau_n.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau_n must be positive, got {tau_n}"
            )));
        }
        for g in &g_hat[1..] {
            first.ensure_same_lattice(g)?;
        }
        let mut m = first.values().to_vec();
        for g in &g_hat[1..] {
            for (mv, &gv) in m.iter_mut().zip(g.values()) {
                *mv = mv.min(gv);
            }
        }
        let m_hat = ScalarField::new(first.lattice(), m)?;
        Ok(Self {
            g_hat,
            m_hat,
            tau_n,
            mode,
            effective_signs,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.m_hat.lattice()
    }

    pub fn conditions(&self) -> usize {
        self.g_hat.len()
    }

    /// `τₙ⁻¹·m̂`, the statistic thresholded at `±a`.
    pub fn statistic(&self) -> ScalarField {
        self.m_hat.scale(1.0 / self.tau_n)
    }
}

pub fn standardize(fits: &[GlmFit], spec: &CombineSpec) -> Result<StandardizedFields> {
    let first = fits
        .first()
        .ok_or_else(|| Error::Configuration("no fits to standardize".into()))?;
    if fits.len() != spec.conditions() {
        return Err(Error::Configuration(format!(
            "{} fits but the combination specifies {} conditions",
            fits.len(),
            spec.conditions()
        )));
    }
    for (i, f) in fits.iter().enumerate() {
        if f.mu_hat.lattice() != first.mu_hat.lattice() {
            return Err(Error::Configuration(format!(
                "condition {} lattice differs from condition 1",
                i + 1
            )));
        }
        if f.n != first.n || f.tau_n != first.tau_n {
            return Err(Error::Configuration(format!(
                "condition {} has n = {}, condition 1 has n = {}",
                i + 1,
                f.n,
                first.n
            )));
        }
    }
    let signs = spec.effective_signs();
    let g_hat = fits
        .iter()
        .zip(spec.thresholds())
        .zip(&signs)
        .map(|((f, &c), &sign)| {
            let tau = f.tau_n;
            f.mu_hat
                .zip_with(&f.se, |mu, se| sign * (mu - c) / (se / tau))
        })
        .collect::<Result<Vec<_>>>()?;
    StandardizedFields::from_working_fields(g_hat, first.tau_n, spec.mode(), signs)
}

/// `η = 2·τₙ`: two standard errors on the working-field scale.
pub fn default_eta(tau_n: f64) -> f64 {
    2.0 * tau_n
}

/// A zero crossing of `m̂` on the lattice edge `edge = (p₁, p₂)`, located at
/// `(1 − w)·p₁ + w·p₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub edge: (usize, usize),
    pub w: f64,
    pub active_set: ConditionSet,
}

impl BoundaryPoint {
    #[inline]
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        interpolate_edge(values, self.edge, self.w)
    }
}

#[inline]
pub fn interpolate_edge(values: &[f64], edge: (usize, usize), w: f64) -> f64 {
    (1.0 - w) * values[edge.0] + w * values[edge.1]
}

#[derive(Debug, Clone)]
pub struct BoundarySegmentation {
    pub points: Vec<BoundaryPoint>,
    pub eta: f64,
}

impl BoundarySegmentation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with one row per point. `active_set` is a bitmask with condition
    /// 1 in the least significant bit.
    pub fn write_csv(&self, out: &mut impl Write, lattice: Lattice) -> Result<()> {
        writeln!(out, "p1,row1,col1,p2,row2,col2,w,active_set")?;
        for pt in &self.points {
            let (r1, c1) = lattice.coords(pt.edge.0);
            let (r2, c2) = lattice.coords(pt.edge.1);
            writeln!(
                out,
                "{},{r1},{c1},{},{r2},{c2},{:?},{}",
                pt.edge.0,
                pt.edge.1,
                pt.w,
                pt.active_set.bits()
            )?;
        }
        Ok(())
    }
}

/// Zero crossings of `field` on 4-neighbour edges, sorted by `(edge, w)`.
///
/// An edge whose endpoints have strictly opposite signs yields
/// `w = f(p₁)/(f(p₁) − f(p₂))`. A pixel where the field is exactly zero
/// yields one point at that pixel (on its right-hand edge with `w = 0`, or
/// its left-hand edge with `w = 1` in the last column).
pub fn zero_crossings(field: &ScalarField) -> Vec<((usize, usize), f64)> {
    let lat = field.lattice();
    let v = field.values();
    let w = lat.width();
    let mut out: Vec<_> = (0..lat.height())
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut found = Vec::new();
            for (p, q) in lat.row_edges(row) {
                let (a, b) = (v[p], v[q]);
                if a * b < 0.0 {
                    found.push(((p, q), a / (a - b)));
                }
            }
            for (p, &x) in v.iter().enumerate().skip(row * w).take(w) {
                if x == 0.0 {
                    if p % w + 1 < w {
                        found.push(((p, p + 1), 0.0));
                    } else {
                        found.push(((p - 1, p), 1.0));
                    }
                }
            }
            found
        })
        .collect();
    out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    out
}

pub fn segment_boundary(fields: &StandardizedFields, eta: f64) -> Result<BoundarySegmentation> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let crossings = zero_crossings(&fields.m_hat);
    if crossings.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    let points = crossings
        .into_iter()
        .map(|(edge, w)| {
            let mut bits = 0u64;
            let mut argmin = (0, f64::INFINITY);
            for (i, g) in fields.g_hat.iter().enumerate() {
                let v = interpolate_edge(g.values(), edge, w);
                if v.abs() <= eta {
                    bits |= 1 << i;
                }
                if v < argmin.1 {
                    argmin = (i, v);
                }
            }
            bits |= 1 << argmin.0;
            BoundaryPoint {
                edge,
                w,
                active_set: ConditionSet(bits),
            }
        })
        .collect();
    Ok(BoundarySegmentation { points, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldStack;
    use proptest::prelude::*;

    fn lat(w: usize, h: usize) -> Lattice {
        Lattice::new(w, h).unwrap()
    }

    fn fit_from(mu: ScalarField, sigma: f64, n: usize) -> GlmFit {
        let lattice = mu.lattice();
        let tau = (n as f64).powf(-0.5);
        GlmFit {
            se: ScalarField::constant(lattice, sigma * tau),
            sigma_hat: ScalarField::constant(lattice, sigma),
            mu_hat: mu,
            tau_n: tau,
            residuals: FieldStack::new(lattice, n, vec![0.0; n * lattice.len()]).unwrap(),
            n,
        }
    }

    fn working(values: Vec<Vec<f64>>, l: Lattice) -> StandardizedFields {
        let m = values.len();
        StandardizedFields::from_working_fields(
            values
                .into_iter()
                .map(|v| ScalarField::new(l, v).unwrap())
                .collect(),
            0.1,
            CombineMode::Conjunction,
            vec![1.0; m],
        )
        .unwrap()
    }

    #[test]
    fn identity_standardization() {
        let l = lat(3, 3);
        let fits = [fit_from(ScalarField::constant(l, 1.0), 1.0, 4)];
        let spec = CombineSpec::conjunction(0.0, 1).unwrap();
        let s = standardize(&fits, &spec).unwrap();
        for &v in s.g_hat[0].values().iter().chain(s.m_hat.values()) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negation_flips_the_second_field() {
        let l = lat(4, 4);
        let mu1 = ScalarField::from_fn(l, |r, c| (r * 4 + c) as f64 * 0.1);
        let mu2 = ScalarField::from_fn(l, |r, c| 1.0 - (r + c) as f64 * 0.2);
        let fits = [fit_from(mu1.clone(), 1.0, 9), fit_from(mu2.clone(), 1.0, 9)];
        let spec = CombineSpec::new(
            vec![0.5, 0.5],
            vec![Sign::Positive, Sign::Negative],
            CombineMode::Conjunction,
        )
        .unwrap();
        let s = standardize(&fits, &spec).unwrap();
        for i in 0..16 {
            assert!((s.g_hat[0].at(i) - (mu1.at(i) - 0.5)).abs() < 1e-12);
            assert!((s.g_hat[1].at(i) + (mu2.at(i) - 0.5)).abs() < 1e-12);
            assert_eq!(s.m_hat.at(i), s.g_hat[0].at(i).min(s.g_hat[1].at(i)));
        }
    }

    #[test]
    fn disjunction_is_negated_max() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let l = lat(10, 8);
        let mu: Vec<ScalarField> = (0..2)
            .map(|_| ScalarField::from_fn(l, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let fits: Vec<GlmFit> = mu.iter().map(|m| fit_from(m.clone(), 1.3, 16)).collect();
        let spec = CombineSpec::new(
            vec![0.2, 0.2],
            vec![Sign::Positive, Sign::Positive],
            CombineMode::Disjunction,
        )
        .unwrap();
        let s = standardize(&fits, &spec).unwrap();
        for i in 0..l.len() {
            let g1 = (mu[0].at(i) - 0.2) / 1.3;
            let g2 = (mu[1].at(i) - 0.2) / 1.3;
            assert!((s.m_hat.at(i) + g1.max(g2)).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_fits_are_rejected() {
        let a = fit_from(ScalarField::constant(lat(3, 3), 1.0), 1.0, 4);
        let b = fit_from(ScalarField::constant(lat(3, 4), 1.0), 1.0, 4);
        let c = fit_from(ScalarField::constant(lat(3, 3), 1.0), 1.0, 5);
        let spec = CombineSpec::conjunction(0.0, 2).unwrap();
        assert!(matches!(
            standardize(&[a.clone(), b], &spec),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            standardize(&[a.clone(), c], &spec),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            standardize(&[a], &spec),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn midpoint_crossing() {
        let l = lat(2, 2);
        let s = working(vec![vec![-1.0, 1.0, -1.0, 1.0]], l);
        let seg = segment_boundary(&s, 0.2).unwrap();
        assert_eq!(seg.len(), 2);
        for p in &seg.points {
            assert_eq!(p.w, 0.5);
            assert_eq!(p.active_set, ConditionSet::from_indices([0]));
        }
        assert_eq!(seg.points[0].edge, (0, 1));
        assert_eq!(seg.points[1].edge, (2, 3));
    }

    #[test]
    fn identical_fields_are_both_active() {
        let l = lat(6, 5);
        let v: Vec<f64> = (0..30)
            .map(|i| (i % 6) as f64 - 2.5 + 0.1 * (i / 6) as f64)
            .collect();
        let s = working(vec![v.clone(), v], l);
        let seg = segment_boundary(&s, 1e-6).unwrap();
        assert!(!seg.is_empty());
        assert!(seg.points.iter().all(|p| p.active_set.bits() == 0b11));
    }

    #[test]
    fn argmin_is_always_active() {
        let l = lat(2, 2);
        // m̂ crosses zero between pixels 0 and 1 via field 1; field 2 is far away
        let s = working(vec![vec![-1.0, 1.0, -1.0, 1.0], vec![5.0; 4]], l);
        let seg = segment_boundary(&s, 1e-3).unwrap();
        assert!(seg.points.iter().all(|p| p.active_set.bits() == 0b01));
    }

    #[test]
    fn exact_zeros_are_deduplicated() {
        let l = lat(3, 3);
        // zero pixel at the centre with negative left and positive right
        let v = vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0];
        let s = working(vec![v], l);
        let seg = segment_boundary(&s, 0.5).unwrap();
        assert_eq!(seg.len(), 3);
        let edges: Vec<_> = seg.points.iter().map(|p| (p.edge, p.w)).collect();
        assert_eq!(edges, vec![((1, 2), 0.0), ((4, 5), 0.0), ((7, 8), 0.0)]);
        // a zero in the last column sits on its left edge with w = 1
        let s = working(vec![vec![-1.0, 0.0, -1.0, -1.0]], lat(2, 2));
        let seg = segment_boundary(&s, 0.5).unwrap();
        assert_eq!(seg.points.len(), 1);
        assert_eq!((seg.points[0].edge, seg.points[0].w), ((0, 1), 1.0));
    }

    #[test]
    fn empty_or_full_estimate_is_an_error() {
        let l = lat(3, 3);
        assert!(matches!(
            segment_boundary(&working(vec![vec![1.0; 9]], l), 0.1),
            Err(Error::EmptyEstimate)
        ));
        assert!(matches!(
            segment_boundary(&working(vec![vec![-1.0; 9]], l), 0.1),
            Err(Error::EmptyEstimate)
        ));
        assert!(segment_boundary(&working(vec![vec![1.0; 9]], l), 0.0).is_err());
    }

    #[test]
    fn csv_export_uses_bitmask() {
        let l = lat(2, 2);
        let s = working(
            vec![vec![-1.0, 1.0, -1.0, 1.0], vec![-1.0, 1.0, -1.0, 1.0]],
            l,
        );
        let seg = segment_boundary(&s, 0.1).unwrap();
        let mut buf = Vec::new();
        seg.write_csv(&mut buf, l).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "p1,row1,col1,p2,row2,col2,w,active_set");
        assert_eq!(lines[1], "0,0,0,1,0,1,0.5,3");
    }

    #[test]
    fn condition_set_iteration() {
        let s = ConditionSet::from_indices([0, 3, 5]);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 5]);
        assert_eq!(s.len(), 3);
        assert!(s.contains(3) && !s.contains(1));
    }

    #[test]
    fn spec_validation() {
        assert!(CombineSpec::new(vec![], vec![], CombineMode::Conjunction).is_err());
        assert!(CombineSpec::new(vec![1.0], vec![], CombineMode::Conjunction).is_err());
        assert!(CombineSpec::new(
            vec![1.0; 65],
            vec![Sign::Positive; 65],
            CombineMode::Conjunction
        )
        .is_err());
        assert_eq!("-1".parse::<Sign>().unwrap(), Sign::Negative);
        assert!("0".parse::<Sign>().is_err());
        assert_eq!(serde_json::to_string(&Sign::Negative).unwrap(), "-1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn crossings_interpolate_to_zero(
            a in prop::collection::vec(-3.0f64..3.0, 7 * 6),
            b in prop::collection::vec(-3.0f64..3.0, 7 * 6),
        ) {
            let l = lat(7, 6);
            let s = working(vec![a, b], l);
            if let Ok(seg) = segment_boundary(&s, 0.3) {
                for p in &seg.points {
                    prop_assert!(p.interpolate(s.m_hat.values()).abs() < 1e-9);
                    prop_assert!((0.0..=1.0).contains(&p.w));
                    prop_assert!(!p.active_set.is_empty());
                    for i in 0..2 {
                        let g = p.interpolate(s.g_hat[i].values());
                        if g.abs() <= 0.3 {
                            prop_assert!(p.active_set.contains(i));
                        }
                    }
                }
            }
        }

        #[test]
        fn negation_preserves_crossings(a in prop::collection::vec(-3.0f64..3.0, 6 * 5)) {
            let l = lat(6, 5);
            let neg: Vec<f64> = a.iter().map(|v| -v).collect();
            let x = segment_boundary(&working(vec![a], l), 0.1);
            let y = segment_boundary(&working(vec![neg], l), 0.1);
            match (x, y) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x.len(), y.len());
                    for (p, q) in x.points.iter().zip(&y.points) {
                        prop_assert_eq!(p.edge, q.edge);
                        prop_assert_eq!(p.w, q.w);
                        prop_assert_eq!(p.active_set, q.active_set);
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "negation changed emptiness"),
            }
        }

        #[test]
        fn raising_thresholds_shrinks_the_estimate(
            mu in prop::collection::vec(-3.0f64..3.0, 5 * 5),
            c in -1.0f64..1.0,
            dc in 0.0f64..1.0,
        ) {
            let l = lat(5, 5);
            let f = [fit_from(ScalarField::new(l, mu.clone()).unwrap(), 1.0, 9),
                     fit_from(ScalarField::new(l, mu.iter().rev().copied().collect()).unwrap(), 1.0, 9)];
            let count = |c: f64| {
                let s = standardize(&f, &CombineSpec::conjunction(c, 2).unwrap()).unwrap();
                s.m_hat.values().iter().filter(|&&v| v >= 0.0).count()
            };
            prop_assert!(count(c + dc) <= count(c));
        }
    }
}
