//! Oracles shared by the integration tests. Nothing here calls the
//! library's probability code; the checks compare against it.

#![allow(dead_code)]

use latent_chain::model::{Dims, ParameterSet};
use latent_chain::panel::Pattern;
use rand::Rng;

/// Every latent path of length `t` over `a` classes.
pub fn paths(a: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..a).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

/// Prior probability of a path times the probability of the pattern
/// along it, straight from the model equation.
pub fn path_term(params: &ParameterSet<f64>, g: usize, pattern: &[u16], path: &[usize]) -> f64 {
    let mut p = params.delta(g, path[0]);
    for s in 0..path.len() - 1 {
        p *= params.tau(s, g, path[s], path[s + 1]);
    }
    for (t, &c) in path.iter().enumerate() {
        p *= params.rho(t, g, c, pattern[t] as usize);
    }
    p
}

/// Pattern probability by summing over all `A^T` paths.
pub fn enumerate_probability(params: &ParameterSet<f64>, g: usize, pattern: &[u16]) -> f64 {
    let d = params.dims();
    paths(d.classes, d.occasions)
        .iter()
        .map(|path| path_term(params, g, pattern, path))
        .sum()
}

/// `state[t][a]` and `pair[s][a][b]` posteriors by enumeration.
pub fn enumerate_posteriors(
    params: &ParameterSet<f64>,
    g: usize,
    pattern: &[u16],
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let d = params.dims();
    let (a, t) = (d.classes, d.occasions);
    let mut state = vec![vec![0.0; a]; t];
    let mut pair = vec![vec![vec![0.0; a]; a]; t.saturating_sub(1)];
    let mut total = 0.0;
    for path in paths(a, t) {
        let p = path_term(params, g, pattern, &path);
        total += p;
        for (k, &c) in path.iter().enumerate() {
            state[k][c] += p;
        }
        for s in 0..t - 1 {
            pair[s][path[s]][path[s + 1]] += p;
        }
    }
    for row in &mut state {
        row.iter_mut().for_each(|v| *v /= total);
    }
    for m in &mut pair {
        m.iter_mut().flatten().for_each(|v| *v /= total);
    }
    (state, pair)
}

fn simplex_row<R: Rng>(rng: &mut R, len: usize, sparse: bool) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..len).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    if sparse && len > 1 {
        // Knock out one cell to exercise exact zeros.
        let k = rng.gen_range(0..len);
        raw[k] = 0.0;
    }
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Unconstrained parameters with every row drawn independently; about one
/// row in eight carries an exact zero.
pub fn random_params<R: Rng>(rng: &mut R, dims: Dims) -> ParameterSet<f64> {
    let mut p = ParameterSet::<f64>::uniform(dims);
    for row in dims.rows() {
        let sparse = rng.gen_range(0..8) == 0;
        let v = simplex_row(rng, dims.row_len(row), sparse);
        p.row_mut(row).copy_from_slice(&v);
    }
    let gamma = simplex_row(rng, dims.groups, false);
    p.set_gamma(gamma);
    p
}

pub fn random_pattern<R: Rng>(rng: &mut R, j: usize, t: usize) -> Pattern {
    Pattern((0..t).map(|_| rng.gen_range(0..j) as u16).collect())
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Table 3 parameters as a parameter set with γ from the group sizes.
pub fn table3_params() -> ParameterSet<f64> {
    use latent_chain::replication::published::{DELTA, RHO, TAU};
    use latent_chain::model::RowRef;
    let dims = Dims::new(2, 3, 3, 3).unwrap();
    let mut p = ParameterSet::<f64>::uniform(dims);
    for g in 0..2 {
        p.row_mut(RowRef::Delta { group: g }).copy_from_slice(&DELTA);
        for t in 0..3 {
            for a in 0..3 {
                p.row_mut(RowRef::Rho { occasion: t, group: g, class: a })
                    .copy_from_slice(&RHO[a]);
            }
        }
        for s in 0..2 {
            for a in 0..3 {
                p.row_mut(RowRef::Tau { transition: s, group: g, from: a })
                    .copy_from_slice(&TAU[g][s][a]);
            }
        }
    }
    p.set_gamma_from_counts(&[1474, 480]);
    p
}
