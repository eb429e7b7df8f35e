//! Starting values for EM chains.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::model::{ModelSpec, ParameterSet, RowClass, RowRef};
use crate::scalar::Real;

/// Diagonal weight of the identity-leaning response probabilities.
pub const IDENTITY_LEANING_WEIGHT: f64 = 0.8;

/// RNG for random start `index` of a fit seeded with `seed`.
pub fn start_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn write_class<F: Real>(params: &mut ParameterSet<F>, class: &RowClass, raw: &[f64]) {
    let free_mass = 1.0 - class.fixed_mass();
    let free_raw: f64 = class.free_columns().map(|c| raw[c]).sum();
    let n_free = class.free_columns().count();
    let row: Vec<F> = class
        .fixed
        .iter()
        .enumerate()
        .map(|(c, fixed)| match fixed {
            Some(v) => F::of(*v),
            None if free_raw > 0.0 => F::of(free_mass * raw[c] / free_raw),
            None => F::of(free_mass / n_free as f64),
        })
        .collect();
    for &member in &class.members {
        params.row_mut(member).copy_from_slice(&row);
    }
}

/// Every free row drawn as normalized unit-exponential variates (uniform on
/// the simplex), fixed cells at their constants.
pub fn random_start<F: Real, R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParameterSet<F> {
    let mut params = ParameterSet::uniform(*spec.dims());
    for class in spec.row_classes() {
        let raw: Vec<f64> = class
            .fixed
            .iter()
            .map(|_| rng.sample::<f64, _>(Exp1))
            .collect();
        write_class(&mut params, class, &raw);
    }
    params
}

/// Uniform δ and τ; class `a` responds with category `a mod J` at
/// probability 0.8.
pub fn identity_leaning_start<F: Real>(spec: &ModelSpec) -> ParameterSet<F> {
    let dims = spec.dims();
    let mut params = ParameterSet::uniform(*dims);
    let off = (1.0 - IDENTITY_LEANING_WEIGHT) / (dims.categories - 1) as f64;
    for class in spec.row_classes() {
        let raw: Vec<f64> = match class.representative() {
            RowRef::Rho { class: a, .. } => (0..dims.categories)
                .map(|j| {
                    if j == a % dims.categories {
                        IDENTITY_LEANING_WEIGHT
                    } else {
                        off
                    }
                })
                .collect(),
            _ => vec![1.0; class.fixed.len()],
        };
        write_class(&mut params, class, &raw);
    }
    params
}
