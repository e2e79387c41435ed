//! Shared fixtures for the benchmarks.

use duprg_core::{generate, SynthSpec, Synthetic};

/// Synthetic data at embedding width `dim` with `domains` x `classes` prompts.
pub fn fixture(dim: usize, domains: usize, classes: usize) -> Synthetic {
    generate(&SynthSpec {
        dim,
        domains,
        classes,
        n_per_class: 50,
        ..Default::default()
    })
    .expect("valid synthetic spec")
}
