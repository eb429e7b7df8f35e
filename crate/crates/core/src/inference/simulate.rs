use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{pattern_distribution, ParameterSet};
use crate::panel::{PanelError, PanelTable, Pattern};
use crate::scalar::Real;

/// splitmix64 finalizer; derives well-separated child seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `sizes[h]` patterns per group from the model's cell probabilities
/// by inverse-CDF over the lexicographic cell order.
pub fn simulate<F: Real>(
    params: &ParameterSet<F>,
    sizes: &[u64],
    seed: u64,
    template: &PanelTable,
) -> Result<PanelTable, PanelError> {
    let d = params.dims();
    let mut table = PanelTable::new(
        d.occasions,
        template.category_labels().to_vec(),
        template.group_labels().to_vec(),
    )?
    .with_category_names(template.category_names().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in 0..d.groups {
        let probs: Vec<f64> = pattern_distribution(params, g)
            .into_iter()
            .map(|p| p.as_f64())
            .collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut counts = vec![0u64; probs.len()];
        for _ in 0..sizes.get(g).copied().unwrap_or(0) {
            let u: f64 = rng.gen::<f64>() * total;
            let ix = cdf.partition_point(|&c| c <= u).min(last_positive);
            counts[ix] += 1;
        }
        for (ix, &n) in counts.iter().enumerate() {
            if n > 0 {
                table.add(g, Pattern::from_lattice_index(ix, d.categories, d.occasions), n)?;
            }
        }
    }
    Ok(table)
}

/// Table with generic labels `1..J` and `g1..gH`, for simulation without a
/// data file at hand.
pub fn blank_template(groups: usize, categories: usize, occasions: usize) -> PanelTable {
    PanelTable::new(
        occasions,
        (1..=categories).map(|c| c.to_string()).collect(),
        (1..=groups).map(|g| format!("g{g}")).collect(),
    )
    .expect("valid dimensions")
}
