//! Latent-class label canonicalization.

use crate::model::ParameterSet;
use crate::scalar::Real;

/// Relabels latent classes so that the modal response category of each
/// class (occasion-1 ρ pooled over groups with weights γ) is
/// non-decreasing in the class index. Classes with the same modal category
/// are ordered by descending pooled δ, then by their original index.
///
/// Returns the relabelled parameters and `perm`, where old class `a`
/// becomes class `perm[a]`. Likelihoods are unchanged.
pub fn canonicalize_labels<F: Real>(params: &ParameterSet<F>) -> (ParameterSet<F>, Vec<usize>) {
    let d = *params.dims();
    let gamma = params.gamma();
    let key: Vec<(usize, f64)> = (0..d.classes)
        .map(|a| {
            let mut pooled_rho = vec![0.0f64; d.categories];
            let mut pooled_delta = 0.0f64;
            for (g, w) in gamma.iter().enumerate() {
                let w = w.as_f64();
                pooled_delta += w * params.delta(g, a).as_f64();
                for (j, slot) in pooled_rho.iter_mut().enumerate() {
                    *slot += w * params.rho(0, g, a, j).as_f64();
                }
            }
            let mut modal = 0;
            for j in 1..d.categories {
                if pooled_rho[j] > pooled_rho[modal] {
                    modal = j;
                }
            }
            (modal, pooled_delta)
        })
        .collect();
    let mut order: Vec<usize> = (0..d.classes).collect();
    order.sort_by(|&x, &y| {
        key[x]
            .0
            .cmp(&key[y].0)
            .then(key[y].1.total_cmp(&key[x].1))
            .then(x.cmp(&y))
    });
    let mut perm = vec![0; d.classes];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    (params.permute_classes(&perm), perm)
}
