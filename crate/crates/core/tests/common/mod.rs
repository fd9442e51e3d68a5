#![allow(dead_code)]

use imc_hitting::random::{random_validated_model, ModelSpec};
use imc_hitting::{IntervalRateSet, Model, StateSpace, TargetSet, ValidatedModel};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LOWER: [f64; 3] = [5.0 / 9.0, 1.0 / 3.0, 0.0];
pub const UPPER: [f64; 3] = [1.5, 1.25, 0.0];

pub fn running_example() -> ValidatedModel {
    let lower = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let upper = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
    Model::new(
        StateSpace::numbered(3).unwrap(),
        TargetSet::new(3, &[2]).unwrap(),
        IntervalRateSet::new(lower, upper).unwrap(),
    )
    .unwrap()
    .validated()
    .unwrap()
}

pub fn random_models(seed: u64, count: usize, spec: &ModelSpec) -> Vec<ValidatedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_validated_model(&mut rng, spec)).collect()
}

pub fn four_state() -> ModelSpec {
    ModelSpec {
        min_states: 4,
        max_states: 4,
        ..ModelSpec::default()
    }
}
