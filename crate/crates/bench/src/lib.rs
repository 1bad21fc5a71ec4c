//! Fixtures shared by the pipeline benchmarks.

use conjset_core::simharness::{generate_noise, generate_signal};
use conjset_core::{FieldStack, Result, ScalarField, SimulationSpec};

/// Signal-plus-noise stacks for one instance of `spec`.
pub fn instance(spec: &SimulationSpec, seed: u64) -> Result<Vec<FieldStack>> {
    let signal: Vec<ScalarField> = generate_signal(spec)?;
    let mut stacks = generate_noise(spec, seed)?;
    for (stack, mu) in stacks.iter_mut().zip(&signal) {
        stack.add_field(mu)?;
    }
    Ok(stacks)
}
