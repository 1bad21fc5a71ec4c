//! End-to-end analysis: fit each condition, combine, segment the boundary,
//! calibrate by bootstrap and threshold.

use crate::bootstrap::{bootstrap_quantile_with, BootstrapConfig, Execution, QuantileResult};
use crate::error::{Error, Result};
use crate::excursion::{
    default_eta, segment_boundary, standardize, BoundarySegmentation, CombineSpec,
    StandardizedFields,
};
use crate::field::FieldStack;
use crate::glm::{fit_owned, DesignSpec, GlmFit};
use crate::regions::{threshold_regions, ConfidenceRegions};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub fits: Vec<GlmFit>,
    pub fields: StandardizedFields,
    pub segmentation: BoundarySegmentation,
    pub quantile: QuantileResult,
    pub regions: ConfidenceRegions,
}

impl Analysis {
    /// Regions at another level from the same bootstrap sample.
    pub fn regions_at(&self, alpha: f64, spec: &CombineSpec) -> Result<ConfidenceRegions> {
        let a = self.quantile.at_level(alpha)?;
        let mut r = threshold_regions(&self.fields, a, spec)?;
        r.alpha = Some(alpha);
        Ok(r)
    }
}

/// Runs the full analysis, one `(data, design)` pair per condition.
/// `eta` defaults to `2τₙ`.
pub fn analyze(
    data: &[(FieldStack, DesignSpec)],
    spec: &CombineSpec,
    boot: &BootstrapConfig,
    eta: Option<f64>,
) -> Result<Analysis> {
    analyze_with(data.to_vec(), spec, boot, eta, Execution::Parallel)
}

/// As [`analyze`], taking ownership of the data so residuals reuse its
/// storage, with explicit scheduling of the bootstrap.
pub fn analyze_with(
    data: Vec<(FieldStack, DesignSpec)>,
    spec: &CombineSpec,
    boot: &BootstrapConfig,
    eta: Option<f64>,
    execution: Execution,
) -> Result<Analysis> {
    boot.validate()?;
    if data.len() != spec.conditions() {
        return Err(Error::Configuration(format!(
            "{} data sets for {} conditions",
            data.len(),
            spec.conditions()
        )));
    }
    let fits = data
        .into_iter()
        .map(|(stack, design)| fit_owned(stack, &design))
        .collect::<Result<Vec<_>>>()?;
    let fields = standardize(&fits, spec)?;
    let eta = match eta {
        Some(e) if !(e >= 0.0 && e.is_finite()) => {
            return Err(Error::InvalidParameter(format!(
                "eta must be >= 0, got {e}"
            )))
        }
        Some(e) => e,
        None => default_eta(fields.tau_n),
    };
    let segmentation = segment_boundary(&fields, eta)?;
    let residuals: Vec<&FieldStack> = fits.iter().map(|f| &f.residuals).collect();
    let quantile = bootstrap_quantile_with(
        &residuals,
        &segmentation,
        &fields.effective_signs,
        boot,
        execution,
    )?;
    let mut regions = threshold_regions(&fields, quantile.a, spec)?;
    regions.alpha = Some(boot.alpha);
    Ok(Analysis {
        fits,
        fields,
        segmentation,
        quantile,
        regions,
    })
}
