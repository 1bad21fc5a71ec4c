//! Simultaneous spatial confidence regions for conjunctions, disjunctions and
//! sign-negated combinations of excursion sets on a 2D lattice.
//!
//! The pipeline, in order:
//!
//! 1. [`glm::fit`] a per-pixel linear model for each study condition;
//! 2. [`excursion::standardize`] the contrast estimates against their
//!    thresholds and combine them by pixelwise minimum;
//! 3. [`excursion::segment_boundary`] the estimated set into sub-pixel
//!    boundary points, each tagged with the conditions active there;
//! 4. calibrate the threshold `a` with the wild t-bootstrap
//!    ([`bootstrap::bootstrap_quantile`]);
//! 5. [`regions::threshold_regions`] the combined statistic at `±a`.
//!
//! [`pipeline::analyze`] runs all five steps; [`simharness`] wraps them in a
//! Monte Carlo coverage study on synthetic signals.

pub mod bootstrap;
pub mod error;
pub mod excursion;
pub mod field;
pub mod glm;
pub mod pipeline;
pub mod regions;
pub mod simharness;

pub use bootstrap::{
    bootstrap_quantile, rademacher_stream, BootstrapConfig, QuantileResult, Studentize,
};
pub use error::{Error, Result};
pub use excursion::{
    segment_boundary, standardize, BoundaryPoint, BoundarySegmentation, CombineMode, CombineSpec,
    ConditionSet, Sign, StandardizedFields,
};
pub use field::{gaussian_smooth, FieldStack, Lattice, Mask, ScalarField};
pub use glm::{fit, DesignSpec, GlmFit};
pub use pipeline::{analyze, Analysis};
pub use regions::{check_inclusion, threshold_regions, ConfidenceRegions, Truth};
pub use simharness::{CoverageReport, Scenario, SimulationSpec, Snr};
