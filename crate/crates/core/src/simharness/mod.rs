//! Monte Carlo coverage study on synthetic signals.
//!
//! Each instance draws fresh noise around a fixed true signal, runs the
//! intercept-only pipeline per condition and checks the resulting regions
//! against the known true set. Instance `k` draws from the seed
//! `mix_seed(master, k)`, so reports depend only on the spec and seed.

mod signal;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use signal::{generate_noise, generate_signal};

use crate::bootstrap::mix_seed;
use crate::bootstrap::{bootstrap_sample, empirical_quantile, BootstrapConfig, Execution};
use crate::error::{Error, Result};
use crate::excursion::{default_eta, segment_boundary, standardize, CombineSpec};
use crate::field::{FieldStack, Lattice, ScalarField};
use crate::glm::{fit_owned, DesignSpec, GlmFit};
use crate::regions::{
    check_inclusion, check_inclusion_separate, intersect_regions, threshold_regions, Truth,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Circles,
    Squares,
    Ramps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Snr {
    Low,
    High,
}

impl Snr {
    /// The threshold `c` paired with this regime.
    pub fn threshold(self) -> f64 {
        match self {
            Snr::High => 2.0,
            Snr::Low => 0.5,
        }
    }
}

/// Which regions an instance is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// One jointly calibrated threshold.
    Proposed,
    /// Intersection of independently calibrated single-condition regions.
    Naive,
}

macro_rules! text_enum {
    ($t:ty, $what:literal, $($name:literal => $v:expr),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $(x if *x == $v => $name,)+ _ => unreachable!() };
                f.write_str(s)
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($v),)+
                    other => Err(Error::Configuration(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
}

text_enum!(Scenario, "scenario", "circles" => Scenario::Circles, "squares" => Scenario::Squares, "ramps" => Scenario::Ramps);
text_enum!(Snr, "snr", "low" => Snr::Low, "high" => Snr::High);
text_enum!(Method, "method", "proposed" => Method::Proposed, "naive" => Method::Naive);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub scenario: Scenario,
    pub snr: Snr,
    pub width: usize,
    pub height: usize,
    /// Observations per condition.
    pub n: usize,
    /// Number of conditions `M`.
    pub conditions: usize,
    /// Distance between shape centres in pixels.
    pub separation: f64,
    /// Circle radius or square half-width in pixels.
    pub radius: f64,
    /// Ramp gradient multiplier `k`.
    pub ramp_k: f64,
    pub noise_rho: f64,
    pub fwhm: f64,
    pub instances: usize,
    /// Bootstrap settings; `seed` is the master seed of the study.
    pub boot: BootstrapConfig,
    /// Active-set tolerance; `2τₙ` when absent.
    pub eta: Option<f64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Circles,
            snr: Snr::High,
            width: 100,
            height: 100,
            n: 300,
            conditions: 2,
            separation: 20.0,
            radius: 25.0,
            ramp_k: 1.0,
            noise_rho: 0.0,
            fwhm: 5.0,
            instances: 500,
            boot: BootstrapConfig {
                realizations: 1000,
                alpha: 0.05,
                seed: 42,
                studentize: Default::default(),
            },
            eta: None,
        }
    }
}

impl SimulationSpec {
    pub fn threshold(&self) -> f64 {
        self.snr.threshold()
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.width, self.height)
    }

    /// Conjunction of all conditions at the regime's threshold, `δ = +1`.
    pub fn combine_spec(&self) -> Result<CombineSpec> {
        CombineSpec::conjunction(self.threshold(), self.conditions)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice()?;
        self.boot.validate()?;
        if self.n < 2 {
            return Err(Error::Configuration(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.conditions == 0 || self.conditions > crate::excursion::MAX_CONDITIONS {
            return Err(Error::Configuration(format!(
                "conditions must lie in 1..={}, got {}",
                crate::excursion::MAX_CONDITIONS,
                self.conditions
            )));
        }
        if self.instances == 0 {
            return Err(Error::Configuration("instances must be at least 1".into()));
        }
        if self.scenario == Scenario::Ramps && self.conditions > 2 {
            return Err(Error::Configuration(format!(
                "the ramps scenario has at most 2 conditions, got {}",
                self.conditions
            )));
        }
        for (name, v) in [
            ("separation", self.separation),
            ("radius", self.radius),
            ("ramp_k", self.ramp_k),
        ] {
            if !v.is_finite() {
                return Err(Error::Configuration(format!("{name} must be finite")));
            }
        }
        if self.separation < 0.0 || self.radius <= 0.0 {
            return Err(Error::Configuration(
                "separation must be >= 0 and radius > 0".into(),
            ));
        }
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::Configuration(format!(
                "fwhm must be positive, got {}",
                self.fwhm
            )));
        }
        if let Some(e) = self.eta {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Configuration(format!("eta must be >= 0, got {e}")));
            }
        }
        signal::check_rho(self.noise_rho, self.conditions)
    }

    /// Parameters outside the published grids.
    pub fn extrapolation_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if matches!(self.scenario, Scenario::Circles | Scenario::Squares) && self.separation > 50.0
        {
            out.push(format!("separation {} is outside [0, 50]", self.separation));
        }
        if self.scenario == Scenario::Ramps && !(0.25..=1.75).contains(&self.ramp_k) {
            out.push(format!("ramp_k {} is outside [0.25, 1.75]", self.ramp_k));
        }
        out
    }

    fn instance_seed(&self, index: usize) -> u64 {
        mix_seed(self.boot.seed, index as u64)
    }
}

/// Wall-clock figures, kept out of serialized reports so they stay
/// reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_instance_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec: SimulationSpec,
    pub method: Method,
    pub alpha: f64,
    pub instances: usize,
    /// Instances with a non-empty estimate; the coverage denominator.
    pub valid: usize,
    pub empty_estimates: usize,
    pub covered: usize,
    pub coverage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_a: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

/// Equality ignores `runtime`.
impl PartialEq for CoverageReport {
    fn eq(&self, o: &Self) -> bool {
        self.spec == o.spec
            && self.method == o.method
            && self.alpha == o.alpha
            && self.instances == o.instances
            && self.valid == o.valid
            && self.empty_estimates == o.empty_estimates
            && self.covered == o.covered
            && self.coverage.to_bits() == o.coverage.to_bits()
            && self.ci_low.to_bits() == o.ci_low.to_bits()
            && self.ci_high.to_bits() == o.ci_high.to_bits()
            && self.mean_a.to_bits() == o.mean_a.to_bits()
            && self.warnings == o.warnings
    }
}

pub const CSV_HEADER: &str = "scenario,snr,n,conditions,separation,radius,ramp_k,noise_rho,method,alpha,boot,instances,valid,empty_estimates,covered,coverage,ci_low,ci_high,mean_a";

/// Normal-approximation 95% interval, clipped to `[0, 1]`.
pub fn binomial_ci(covered: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let p = covered as f64 / total as f64;
    let half = 1.96 * (p * (1.0 - p) / total as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

impl CoverageReport {
    /// One CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let s = &self.spec;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.scenario,
            s.snr,
            s.n,
            s.conditions,
            s.separation,
            s.radius,
            s.ramp_k,
            s.noise_rho,
            self.method,
            self.alpha,
            s.boot.realizations,
            self.instances,
            self.valid,
            self.empty_estimates,
            self.covered,
            self.coverage,
            self.ci_low,
            self.ci_high,
            self.mean_a
        )
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "{} coverage {:.4} [{:.4}, {:.4}] ({}/{} covered, {} empty, mean a {:.4})",
            self.method,
            self.coverage,
            self.ci_low,
            self.ci_high,
            self.covered,
            self.valid,
            self.empty_estimates,
            self.mean_a
        )
    }
}

/// Outcome of one instance for one method.
#[derive(Debug, Clone)]
enum Outcome {
    Empty,
    /// Coverage and mean threshold at each requested level.
    Scored(Vec<(bool, f64)>),
}

/// Everything shared by the instances of one study.
struct Study {
    spec: SimulationSpec,
    combine: CombineSpec,
    signal: Vec<ScalarField>,
    truth: Truth,
    design: DesignSpec,
}

impl Study {
    fn new(spec: &SimulationSpec) -> Result<Self> {
        spec.validate()?;
        let combine = spec.combine_spec()?;
        let signal = generate_signal(spec)?;
        let truth = Truth::new(&signal, &combine)?;
        let design = DesignSpec::intercept_only(spec.n)?;
        Ok(Self {
            spec: spec.clone(),
            combine,
            signal,
            truth,
            design,
        })
    }

    fn fits(&self, index: usize) -> Result<Vec<GlmFit>> {
        let noise = generate_noise(&self.spec, self.spec.instance_seed(index))?;
        noise
            .into_iter()
            .zip(&self.signal)
            .map(|(mut stack, mu)| {
                stack.add_field(mu)?;
                fit_owned(stack, &self.design)
            })
            .collect()
    }

    fn eta(&self, tau: f64) -> f64 {
        self.spec.eta.unwrap_or_else(|| default_eta(tau))
    }

    fn proposed(
        &self,
        index: usize,
        fits: &[GlmFit],
        alphas: &[f64],
        exec: Execution,
    ) -> Result<Outcome> {
        let fields = standardize(fits, &self.combine)?;
        let seg = match segment_boundary(&fields, self.eta(fields.tau_n)) {
            Err(Error::EmptyEstimate) => return Ok(Outcome::Empty),
            other => other?,
        };
        let residuals: Vec<&FieldStack> = fits.iter().map(|f| &f.residuals).collect();
        let seed = mix_seed(self.spec.instance_seed(index), 1);
        let h = bootstrap_sample(
            &residuals,
            &seg,
            &fields.effective_signs,
            self.spec.boot.realizations,
            seed,
            self.spec.boot.studentize,
            exec,
        )?;
        let mut scored = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let (a, _) = empirical_quantile(&h, alpha)?;
            let regions = threshold_regions(&fields, a, &self.combine)?;
            regions.ensure_nested()?;
            scored.push((check_inclusion(&self.truth, &regions, &fields, a)?, a));
        }
        Ok(Outcome::Scored(scored))
    }

    fn naive(
        &self,
        index: usize,
        fits: &[GlmFit],
        alphas: &[f64],
        exec: Execution,
    ) -> Result<Outcome> {
        let m = self.spec.conditions;
        let mut fields = Vec::with_capacity(m);
        let mut samples = Vec::with_capacity(m);
        for (i, fit) in fits.iter().enumerate() {
            let single = self.combine.single(i);
            let f = standardize(std::slice::from_ref(fit), &single)?;
            let seg = match segment_boundary(&f, self.eta(f.tau_n)) {
                Err(Error::EmptyEstimate) => return Ok(Outcome::Empty),
                other => other?,
            };
            let seed = mix_seed(self.spec.instance_seed(index), 1 + i as u64);
            samples.push(bootstrap_sample(
                &[&fit.residuals],
                &seg,
                &f.effective_signs,
                self.spec.boot.realizations,
                seed,
                self.spec.boot.studentize,
                exec,
            )?);
            fields.push(f);
        }
        let mut scored = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let mut thresholds = Vec::with_capacity(m);
            let mut parts = Vec::with_capacity(m);
            for (i, (f, h)) in fields.iter().zip(&samples).enumerate() {
                let (a, _) = empirical_quantile(h, alpha)?;
                parts.push(threshold_regions(f, a, &self.combine.single(i))?);
                thresholds.push(a);
            }
            let regions = intersect_regions(&parts)?;
            regions.ensure_nested()?;
            let covered = check_inclusion_separate(&self.truth, &regions, &fields, &thresholds)?;
            scored.push((covered, thresholds.iter().sum::<f64>() / m as f64));
        }
        Ok(Outcome::Scored(scored))
    }
}

/// Runs every instance, scoring each method at each level, and returns the
/// outcomes in instance order.
fn run_instances(
    study: &Study,
    methods: &[Method],
    alphas: &[f64],
) -> Result<(Vec<Vec<Outcome>>, Duration)> {
    let spec = &study.spec;
    for &alpha in alphas {
        BootstrapConfig { alpha, ..spec.boot }.validate()?;
    }
    // parallel over instances when there are enough of them to fill the
    // pool; otherwise one instance at a time with a parallel bootstrap
    let outer = spec.instances >= rayon::current_num_threads();
    let inner = if outer {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let one = |index: usize| -> Result<Vec<Outcome>> {
        let fits = study.fits(index)?;
        methods
            .iter()
            .map(|m| match m {
                Method::Proposed => study.proposed(index, &fits, alphas, inner),
                Method::Naive => study.naive(index, &fits, alphas, inner),
            })
            .collect()
    };
    let start = Instant::now();
    let results: Vec<Result<Vec<Outcome>>> = if outer {
        (0..spec.instances).into_par_iter().map(one).collect()
    } else {
        (0..spec.instances).map(one).collect()
    };
    let elapsed = start.elapsed();
    Ok((results.into_iter().collect::<Result<Vec<_>>>()?, elapsed))
}

fn aggregate(
    study: &Study,
    outcomes: &[Vec<Outcome>],
    column: usize,
    level: usize,
    method: Method,
    alpha: f64,
    elapsed: Duration,
) -> CoverageReport {
    let spec = &study.spec;
    let (mut valid, mut covered, mut sum_a) = (0usize, 0usize, 0.0);
    for row in outcomes {
        if let Outcome::Scored(s) = &row[column] {
            valid += 1;
            covered += usize::from(s[level].0);
            sum_a += s[level].1;
        }
    }
    let coverage = if valid == 0 {
        0.0
    } else {
        covered as f64 / valid as f64
    };
    let (ci_low, ci_high) = binomial_ci(covered, valid);
    let total = elapsed.as_secs_f64();
    CoverageReport {
        spec: spec.clone(),
        method,
        alpha,
        instances: spec.instances,
        valid,
        empty_estimates: spec.instances - valid,
        covered,
        coverage,
        ci_low,
        ci_high,
        mean_a: if valid == 0 {
            0.0
        } else {
            sum_a / valid as f64
        },
        warnings: spec.extrapolation_warnings(),
        runtime: RuntimeStats {
            total_seconds: total,
            mean_instance_seconds: total / spec.instances as f64,
        },
    }
}

/// Reports for each method at each level in `alphas`, indexed
/// `[method][level]`. All methods and levels see the same instances, and the
/// levels of one method share each instance's bootstrap sample.
pub fn run_study(
    spec: &SimulationSpec,
    methods: &[Method],
    alphas: &[f64],
) -> Result<Vec<Vec<CoverageReport>>> {
    if methods.is_empty() || alphas.is_empty() {
        return Err(Error::Configuration(
            "need at least one method and one level".into(),
        ));
    }
    let study = Study::new(spec)?;
    let (outcomes, elapsed) = run_instances(&study, methods, alphas)?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(column, &method)| {
            alphas
                .iter()
                .enumerate()
                .map(|(level, &alpha)| {
                    aggregate(&study, &outcomes, column, level, method, alpha, elapsed)
                })
                .collect()
        })
        .collect())
}

/// Coverage of the jointly calibrated regions at `spec.boot.alpha`.
pub fn run_coverage(spec: &SimulationSpec) -> Result<CoverageReport> {
    single(run_study(spec, &[Method::Proposed], &[spec.boot.alpha])?)
}

/// Coverage of the jointly calibrated regions at several levels.
pub fn run_coverage_levels(spec: &SimulationSpec, alphas: &[f64]) -> Result<Vec<CoverageReport>> {
    Ok(run_study(spec, &[Method::Proposed], alphas)?.remove(0))
}

/// Coverage of the intersection of separately calibrated regions.
pub fn naive_comparison(spec: &SimulationSpec) -> Result<CoverageReport> {
    single(run_study(spec, &[Method::Naive], &[spec.boot.alpha])?)
}

fn single(mut v: Vec<Vec<CoverageReport>>) -> Result<CoverageReport> {
    Ok(v.remove(0).remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> SimulationSpec {
        SimulationSpec {
            scenario,
            width: 40,
            height: 40,
            radius: 10.0,
            separation: 8.0,
            n: 30,
            instances: 6,
            boot: BootstrapConfig {
                realizations: 100,
                alpha: 0.05,
                seed: 7,
                studentize: Default::default(),
            },
            ..SimulationSpec::default()
        }
    }

    #[test]
    fn zero_instances_is_an_error() {
        let spec = SimulationSpec {
            instances: 0,
            ..small(Scenario::Circles)
        };
        assert!(run_coverage(&spec).is_err());
    }

    #[test]
    fn single_instance_has_degenerate_interval() {
        let spec = SimulationSpec {
            instances: 1,
            ..small(Scenario::Circles)
        };
        let r = run_coverage(&spec).unwrap();
        assert!(r.coverage == 0.0 || r.coverage == 1.0);
        assert_eq!((r.ci_low, r.ci_high), (r.coverage, r.coverage));
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = small(Scenario::Squares);
        let a = run_coverage(&spec).unwrap();
        let b = run_coverage(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_condition_naive_matches_proposed() {
        let spec = SimulationSpec {
            conditions: 1,
            ..small(Scenario::Circles)
        };
        let r = run_study(&spec, &[Method::Proposed, Method::Naive], &[0.05, 0.2]).unwrap();
        for level in 0..2 {
            let (p, n) = (&r[0][level], &r[1][level]);
            assert_eq!((p.covered, p.valid), (n.covered, n.valid));
            assert_eq!(p.mean_a.to_bits(), n.mean_a.to_bits());
        }
    }

    #[test]
    fn coverage_is_monotone_in_alpha() {
        let spec = small(Scenario::Ramps);
        let r = run_coverage_levels(&spec, &[0.05, 0.2]).unwrap();
        assert!(r[0].covered >= r[1].covered);
        assert!(r[0].mean_a >= r[1].mean_a);
    }

    #[test]
    fn far_apart_shapes_give_empty_estimates() {
        let spec = SimulationSpec {
            separation: 36.0,
            radius: 4.0,
            instances: 3,
            ..small(Scenario::Circles)
        };
        let r = run_coverage(&spec).unwrap();
        assert_eq!(r.empty_estimates, 3);
        assert_eq!(
            (r.valid, r.coverage, r.ci_low, r.ci_high),
            (0, 0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn csv_row_matches_header() {
        let r = run_coverage(&SimulationSpec {
            instances: 1,
            ..small(Scenario::Circles)
        })
        .unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn interval_is_clipped() {
        assert_eq!(binomial_ci(10, 10), (1.0, 1.0));
        let (lo, hi) = binomial_ci(475, 500);
        assert!((lo - 0.9309).abs() < 1e-4 && (hi - 0.9691).abs() < 1e-4);
    }

    #[test]
    fn text_round_trip() {
        for s in ["circles", "squares", "ramps"] {
            assert_eq!(s.parse::<Scenario>().unwrap().to_string(), s);
        }
        assert!("hexagons".parse::<Scenario>().is_err());
        assert_eq!("HIGH".parse::<Snr>().unwrap(), Snr::High);
    }
}
