//! Closed-form and brute-force oracles for the probability, estimation and
//! inference code.

mod common;

use common::{enumerate_posteriors, enumerate_probability, paths, path_term, random_params, random_pattern, rel_diff};
use latent_chain::estimation::{em_fit, FitOptions};
use latent_chain::inference::{chi_square_sf, simulate};
use latent_chain::model::{
    cell_probability, forward_backward, pattern_distribution, Dims, ModelSpec, ParameterSet,
};
use latent_chain::panel::{lattice, PanelTable, Pattern};
use latent_chain::reliability::{stability_decomposition_with, TrueStateRule};
use latent_chain::replication::tolerance::ORACLE_RELATIVE;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn options(seed: u64) -> FitOptions {
    FitOptions {
        seed,
        starts: 8,
        standard_errors: false,
        ..FitOptions::default()
    }
}

fn table(j: usize, t: usize, counts: &[(Vec<u16>, u64)]) -> PanelTable {
    let mut tab = PanelTable::new(t, (1..=j).map(|c| c.to_string()).collect(), vec!["g".into()]).unwrap();
    for (p, n) in counts {
        tab.add(0, Pattern(p.clone()), *n).unwrap();
    }
    tab
}

#[test]
fn posteriors_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let dims = Dims::new(2, rng.gen_range(2..=4), rng.gen_range(1..=5), rng.gen_range(1..=4)).unwrap();
        let p = random_params(&mut rng, dims);
        let g = rng.gen_range(0..2);
        let pat = random_pattern(&mut rng, dims.categories, dims.occasions);
        let want = enumerate_probability(&p, g, &pat.0);
        if want == 0.0 {
            assert_eq!(cell_probability(&p, g, &pat).unwrap(), 0.0);
            assert!(forward_backward(&p, g, &pat).is_err());
            continue;
        }
        let post = forward_backward(&p, g, &pat).unwrap();
        assert!(rel_diff(post.likelihood, want) <= ORACLE_RELATIVE);
        let (state, pair) = enumerate_posteriors(&p, g, &pat.0);
        for t in 0..dims.occasions {
            for a in 0..dims.classes {
                assert!((post.state[t][a] - state[t][a]).abs() <= 1e-12, "state {t} {a}");
            }
        }
        for s in 0..dims.occasions - 1 {
            for a in 0..dims.classes {
                for b in 0..dims.classes {
                    assert!((post.pair[s][a][b] - pair[s][a][b]).abs() <= 1e-12, "pair {s} {a} {b}");
                }
            }
        }
    }
}

#[test]
fn single_class_fit_is_the_product_of_margins() {
    // With A = 1 the occasions are independent and the MLE of each ρ_t is
    // the observed margin at t.
    let counts: Vec<(Vec<u16>, u64)> = lattice(3, 3)
        .enumerate()
        .map(|(i, p)| (p.0, (i as u64 * 7919) % 23 + 1))
        .collect();
    let tab = table(3, 3, &counts);
    let spec = ModelSpec::unconstrained(Dims::new(1, 3, 3, 1).unwrap()).unwrap();
    let fit = em_fit::<f64>(&spec, &tab, &options(1)).unwrap();
    let n: u64 = counts.iter().map(|c| c.1).sum();
    let mut margin = vec![[0.0f64; 3]; 3];
    for (p, k) in &counts {
        for t in 0..3 {
            margin[t][p[t] as usize] += *k as f64 / n as f64;
        }
    }
    let ll: f64 = counts
        .iter()
        .map(|(p, k)| *k as f64 * (0..3).map(|t| margin[t][p[t] as usize].ln()).sum::<f64>())
        .sum();
    assert!((fit.log_likelihood - ll).abs() < 1e-8, "{} vs {ll}", fit.log_likelihood);
    for t in 0..3 {
        for j in 0..3 {
            assert!((fit.params.rho(t, 0, 0, j) - margin[t][j]).abs() < 1e-6);
        }
    }
    assert_eq!(fit.free_parameters, 6);
    assert_eq!(fit.degrees_of_freedom, 26 - 6);
}

#[test]
fn single_occasion_fit_reaches_the_saturated_likelihood() {
    let counts = vec![(vec![0], 30), (vec![1], 50), (vec![2], 20)];
    let tab = table(3, 1, &counts);
    let spec = ModelSpec::unconstrained(Dims::new(1, 3, 1, 2).unwrap()).unwrap();
    let fit = em_fit::<f64>(&spec, &tab, &options(2)).unwrap();
    let ll: f64 = counts.iter().map(|(_, k)| *k as f64 * (*k as f64 / 100.0).ln()).sum();
    assert!((fit.log_likelihood - ll).abs() < 1e-6);
    assert!(fit.g_squared.abs() < 1e-5);
}

#[test]
fn tied_single_class_fit_matches_grid_search() {
    // A = 1, J = 2, T = 2 with ρ tied over time: one free parameter.
    let counts = vec![(vec![0, 0], 41), (vec![0, 1], 17), (vec![1, 0], 9), (vec![1, 1], 33)];
    let tab = table(2, 2, &counts);
    let spec = ModelSpec::builder(Dims::new(1, 2, 2, 1).unwrap())
        .tie_rho_over_time()
        .build()
        .unwrap();
    let fit = em_fit::<f64>(&spec, &tab, &options(3)).unwrap();
    let ll = |q: f64| -> f64 {
        counts
            .iter()
            .map(|(p, k)| {
                *k as f64
                    * p.iter()
                        .map(|&c| if c == 0 { q.ln() } else { (1.0 - q).ln() })
                        .sum::<f64>()
            })
            .sum()
    };
    let (best_q, best_ll) = (1..100_000)
        .map(|i| i as f64 / 100_000.0)
        .map(|q| (q, ll(q)))
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    assert!((fit.params.rho(0, 0, 0, 0) - best_q).abs() < 2e-5);
    assert!(fit.log_likelihood >= best_ll - 1e-9);
    assert!(fit.log_likelihood - best_ll < 1e-6);
    assert_eq!(fit.free_parameters, 1);
    assert_eq!(fit.degrees_of_freedom, 2);
}

#[test]
fn chi_square_tail_matches_the_even_df_series() {
    // For df = 2m, P(χ² ≥ x) = e^{-x/2} Σ_{k<m} (x/2)^k / k!.
    let series = |x: f64, df: i64| -> f64 {
        let h = x / 2.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..df / 2 {
            term *= h / k as f64;
            sum += term;
        }
        (-h).exp() * sum
    };
    for df in (2..=60).step_by(2) {
        for x in [0.01, 0.5, 1.0, 3.3, 8.0, 25.69, 50.0, 120.0] {
            let got = chi_square_sf(x, df).unwrap();
            let want = series(x, df);
            assert!(rel_diff(got, want) < 1e-10, "df {df} x {x}: {got} vs {want}");
        }
    }
    let p = chi_square_sf(25.69, 8).unwrap();
    assert!((p - 1.19e-3).abs() < 1e-5, "{p}");
}

#[test]
fn chi_square_tail_for_odd_df() {
    // df = 1: P(χ² ≥ x) = erfc(sqrt(x/2)); compare at a few tabulated points.
    for (x, p) in [(3.841458820694124, 0.05), (6.634896601021213, 0.01), (10.827566170662733, 0.001)] {
        assert!(rel_diff(chi_square_sf(x, 1).unwrap(), p) < 1e-9);
    }
    // Upper 5% points for df 3, 5, 31.
    for (df, x) in [(3, 7.814727903251178), (5, 11.070497693516351), (31, 44.98534328036513)] {
        assert!((chi_square_sf(x, df).unwrap() - 0.05).abs() < 1e-9);
    }
}

#[test]
fn large_simulation_matches_cell_probabilities() {
    let p = common::table3_params();
    let n = 1_000_000u64;
    let tmpl = latent_chain::replication::bif_table();
    let sim = simulate(&p, &[n, n], 99, &tmpl).unwrap();
    assert_eq!(sim.group_totals(), vec![n, n]);
    let mut worst = 0.0f64;
    for g in 0..2 {
        let probs = pattern_distribution(&p, g);
        let counts = sim.dense_counts(g);
        for (ix, &q) in probs.iter().enumerate() {
            let se = (n as f64 * q * (1.0 - q)).sqrt();
            let z = (counts[ix] as f64 - n as f64 * q).abs() / se.max(1e-300);
            worst = worst.max(z);
            assert!(z <= 3.0, "group {g} cell {ix}: z = {z}");
        }
    }
    assert!(worst > 0.0);
}

#[test]
fn degenerate_parameters_simulate_a_single_pattern() {
    let dims = Dims::new(1, 3, 3, 3).unwrap();
    let mut p = ParameterSet::<f64>::uniform(dims);
    use latent_chain::model::RowRef;
    p.row_mut(RowRef::Delta { group: 0 }).copy_from_slice(&[0.0, 1.0, 0.0]);
    for t in 0..3 {
        for a in 0..3 {
            let mut row = [0.0; 3];
            row[a] = 1.0;
            p.row_mut(RowRef::Rho { occasion: t, group: 0, class: a }).copy_from_slice(&row);
        }
    }
    for s in 0..2 {
        for a in 0..3 {
            let mut row = [0.0; 3];
            row[(a + 1) % 3] = 1.0;
            p.row_mut(RowRef::Tau { transition: s, group: 0, from: a }).copy_from_slice(&row);
        }
    }
    let sim = simulate(&p, &[500], 5, &latent_chain::inference::blank_template(1, 3, 3)).unwrap();
    let cells: Vec<_> = sim.cells(0).collect();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].0, &Pattern(vec![1, 2, 0]));
    assert_eq!(cells[0].1, 500);
}

#[test]
fn decomposition_matches_enumerated_joint_table() {
    let p = common::table3_params();
    for g in 0..2 {
        let mut stab = 0.0;
        let mut true_stab = 0.0;
        let mut true_change = 0.0;
        let mut manifest_const = 0.0;
        let mut both_const = 0.0;
        let mut both_change = 0.0;
        let mut latent_only = 0.0;
        for pat in lattice(3, 3) {
            let mc = pat.is_constant();
            for path in paths(3, 3) {
                let v = path_term(&p, g, &pat.0, &path);
                let lc = path.iter().all(|&c| c == path[0]);
                let same = path.iter().zip(&pat.0).all(|(&a, &c)| a == c as usize);
                if lc {
                    stab += v;
                }
                if lc && same {
                    true_stab += v;
                }
                if !lc && same {
                    true_change += v;
                }
                if mc {
                    manifest_const += v;
                }
                match (mc, lc) {
                    (true, true) => both_const += v,
                    (false, false) => both_change += v,
                    (false, true) => latent_only += v,
                    _ => {}
                }
            }
        }
        let d = stability_decomposition_with(&p, g, TrueStateRule::ExactPath).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(d.stability, stab));
        assert!(close(d.true_stability, true_stab));
        assert!(close(d.true_change, true_change));
        assert!(close(d.error_change, 1.0 - stab - true_change));
        assert!(close(d.reliability, 1.0 - d.error_change));
        assert!(close(d.manifest_stability, manifest_const));
        let c = stability_decomposition_with(&p, g, TrueStateRule::ConstancyCrossTab).unwrap();
        assert!(close(c.stability, manifest_const));
        assert!(close(c.true_stability, both_const));
        assert!(close(c.true_change, both_change));
        assert!(close(c.error_change, latent_only));
    }
}
