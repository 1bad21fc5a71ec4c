//! Synthetic target functions and observation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Scenario, SimulationSpec, Snr};
use crate::error::{Error, Result};
use crate::field::{gaussian_smooth, FieldStack, Lattice, ScalarField};

/// Indicator amplitude before smoothing at high SNR.
const HIGH_SNR_SCALE: f64 = 3.0;
/// Low-SNR signals are the high-SNR ones divided by this.
const LOW_SNR_DIVISOR: f64 = 4.0;
/// High-SNR ramp gradient per pixel at `k = 1`.
const RAMP_GRADIENT: f64 = 8.0 / 50.0;

impl Snr {
    fn divisor(self) -> f64 {
        match self {
            Snr::High => 1.0,
            Snr::Low => LOW_SNR_DIVISOR,
        }
    }
}

/// Shape centres, symmetric about the image centre: left and right for two
/// conditions, evenly spaced on a circle of diameter `separation` otherwise.
fn centres(spec: &SimulationSpec) -> Vec<(f64, f64)> {
    let cx = (spec.width as f64 - 1.0) / 2.0;
    let cy = (spec.height as f64 - 1.0) / 2.0;
    let m = spec.conditions;
    if m == 1 {
        return vec![(cx, cy)];
    }
    let r = spec.separation / 2.0;
    (0..m)
        .map(|i| {
            let theta = std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            (cx + r * theta.cos(), cy + r * theta.sin())
        })
        .collect()
}

/// The true mean of each condition on the lattice.
pub fn generate_signal(spec: &SimulationSpec) -> Result<Vec<ScalarField>> {
    spec.validate()?;
    let lattice = spec.lattice()?;
    let div = spec.snr.divisor();
    match spec.scenario {
        Scenario::Circles | Scenario::Squares => centres(spec)
            .into_iter()
            .map(|(x0, y0)| {
                let rad = spec.radius;
                let inside = |r: usize, c: usize| {
                    let (dx, dy) = (c as f64 - x0, r as f64 - y0);
                    match spec.scenario {
                        Scenario::Circles => dx * dx + dy * dy <= rad * rad,
                        _ => dx.abs() <= rad && dy.abs() <= rad,
                    }
                };
                let amp = HIGH_SNR_SCALE / div;
                let binary =
                    ScalarField::from_fn(lattice, |r, c| if inside(r, c) { amp } else { 0.0 });
                gaussian_smooth(&binary, spec.fwhm)
            })
            .collect(),
        Scenario::Ramps => {
            // centred so the high-SNR threshold is crossed at column/row 50
            let c_high = Snr::High.threshold();
            let g = spec.ramp_k * RAMP_GRADIENT;
            let ramp = |x: usize| (c_high + g * (x as f64 - 50.0)) / div;
            let mut out = vec![ScalarField::from_fn(lattice, |_, c| ramp(c))];
            if spec.conditions == 2 {
                out.push(ScalarField::from_fn(lattice, |r, _| ramp(r)));
            }
            Ok(out)
        }
    }
}

/// `M` noise stacks of `n` observations: unit-variance Gaussian,
/// independent across observations and pixels, with correlation `noise_rho`
/// between every pair of conditions at the same observation and pixel.
pub fn generate_noise(spec: &SimulationSpec, instance_seed: u64) -> Result<Vec<FieldStack>> {
    spec.validate()?;
    let lattice = spec.lattice()?;
    Ok(correlated_noise(
        lattice,
        spec.n,
        spec.conditions,
        spec.noise_rho,
        instance_seed,
    ))
}

/// Applies the symmetric square root of `(1−ρ)I + ρJ`:
/// `εᵢ = √(1−ρ)·zᵢ + (√(1+(M−1)ρ) − √(1−ρ))/M · Σⱼ zⱼ`.
pub(crate) fn correlated_noise(
    lattice: Lattice,
    n: usize,
    m: usize,
    rho: f64,
    seed: u64,
) -> Vec<FieldStack> {
    let len = lattice.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = (0..m).map(|_| Vec::with_capacity(n * len)).collect();
    let own = (1.0 - rho).sqrt();
    let shared = ((1.0 + (m as f64 - 1.0) * rho).sqrt() - own) / m as f64;
    let mut z = vec![0.0; m];
    for _ in 0..n * len {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if m == 1 || rho == 0.0 {
            for (o, &v) in out.iter_mut().zip(&z) {
                o.push(v);
            }
        } else {
            let total: f64 = z.iter().sum();
            for (o, &v) in out.iter_mut().zip(&z) {
                o.push(own * v + shared * total);
            }
        }
    }
    out.into_iter()
        .map(|v| FieldStack::from_vec_unchecked(lattice, n, v))
        .collect()
}

pub(crate) fn check_rho(rho: f64, m: usize) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Configuration(format!(
            "noise_rho must lie in [-1, 1], got {rho}"
        )));
    }
    if m > 1 && rho < -1.0 / (m as f64 - 1.0) {
        return Err(Error::Configuration(format!(
            "noise_rho {rho} is infeasible for {m} equicorrelated conditions (needs >= {})",
            -1.0 / (m as f64 - 1.0)
        )));
    }
    Ok(())
}
