//! Benchmarks for the estimation pipeline live in `benches/`.

use opj::simulation::{generate_dataset, EffectForm, OutcomeForm, ScenarioSpec};
use opj::{Estimand, ExperimentData};

/// One simulated quadratic-outcome dataset with `n` units per arm.
pub fn quadratic_dataset(n: usize) -> ExperimentData {
    let spec = ScenarioSpec {
        n0: n,
        n1: n,
        ..ScenarioSpec::new(
            OutcomeForm::Quadratic,
            EffectForm::Quadratic,
            Estimand::Difference,
        )
    };
    generate_dataset(&spec, 0).expect("simulated data is valid")
}
