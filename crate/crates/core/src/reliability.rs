//! Stability/change decomposition of the model-implied response process
//! into true and measurement-error parts.
//!
//! The decomposition partitions the joint (manifest pattern × latent path)
//! distribution of one group. Class `a` is identified with category `a`,
//! which is what the canonical labelling arranges.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{joint_pattern_table, EvalError, ParameterSet};
use crate::scalar::Real;

/// What counts as "true" stability and change.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueStateRule {
    /// Stability and change are the latent path's constant / changing
    /// margins. The true part of each is the mass whose manifest pattern
    /// reproduces the latent path exactly (the diagonal of the joint
    /// table); the remainder is measurement error.
    #[default]
    ExactPath,
    /// 2×2 cross-classification {manifest constant?} × {latent constant?}:
    /// stability is the manifest-constant margin, true stability the
    /// both-constant cell, error of change the latent-constant but
    /// manifest-changing cell, true change the both-changing cell.
    ConstancyCrossTab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDecomposition {
    pub rule: TrueStateRule,
    pub stability: f64,
    pub true_stability: f64,
    pub error_stability: f64,
    pub change: f64,
    pub true_change: f64,
    pub error_change: f64,
    pub total_error: f64,
    pub reliability: f64,
    /// Model-expected share of constant manifest patterns.
    pub manifest_stability: f64,
}

pub fn stability_decomposition<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
) -> Result<ReliabilityDecomposition, EvalError> {
    stability_decomposition_with(params, group, TrueStateRule::default())
}

pub fn stability_decomposition_with<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
    rule: TrueStateRule,
) -> Result<ReliabilityDecomposition, EvalError> {
    let joint = joint_pattern_table(params, group)?;
    // [manifest constant][latent constant]
    let mut cross = [[0.0f64; 2]; 2];
    // [latent constant] restricted to pattern == path
    let mut diagonal = [0.0f64; 2];
    for (pattern, path, p) in joint.entries() {
        let p = p.as_f64();
        let mc = pattern.is_constant() as usize;
        let lc = path.is_constant() as usize;
        cross[mc][lc] += p;
        if pattern.0 == path.0 {
            diagonal[lc] += p;
        }
    }
    let manifest_stability = cross[1][0] + cross[1][1];
    let (stability, true_stability, true_change, error_change) = match rule {
        TrueStateRule::ExactPath => {
            let stability = cross[0][1] + cross[1][1];
            let change = cross[0][0] + cross[1][0];
            (stability, diagonal[1], diagonal[0], change - diagonal[0])
        }
        TrueStateRule::ConstancyCrossTab => {
            (manifest_stability, cross[1][1], cross[0][0], cross[0][1])
        }
    };
    let error_stability = stability - true_stability;
    let change = 1.0 - stability;
    let d = ReliabilityDecomposition {
        rule,
        stability,
        true_stability,
        error_stability,
        change,
        true_change,
        error_change,
        total_error: error_stability + error_change,
        reliability: 1.0 - error_change,
        manifest_stability,
    };
    Ok(d)
}

/// `1 − error_change`.
pub fn reliability_coefficient(decomp: &ReliabilityDecomposition) -> f64 {
    1.0 - decomp.error_change
}

/// One block of the stability/change table.
pub struct DecompositionRow<'a> {
    pub label: &'a str,
    /// Observed share of constant patterns, when data are at hand.
    pub data_stability: Option<f64>,
    pub decomposition: &'a ReliabilityDecomposition,
}

/// Plain-text layout: Data and Markov-model columns per group.
pub fn format_decomposition_table(rows: &[DecompositionRow<'_>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<44}{:>8}{:>14}", "", "Data", "Markov model");
    for row in rows {
        let d = row.decomposition;
        let data = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{}", row.label);
        let lines: [(&str, Option<f64>, f64); 7] = [
            ("  Stability", row.data_stability, d.stability),
            ("    true stability", None, d.true_stability),
            ("    measurement error", None, d.error_stability),
            ("  Change", row.data_stability.map(|s| 1.0 - s), d.change),
            ("    true change", None, d.true_change),
            ("    measurement error", None, d.error_change),
            ("  Total measurement error", None, d.total_error),
        ];
        for (name, data_v, model_v) in lines {
            let _ = writeln!(out, "{name:<44}{:>8}{:>14.4}", data(data_v), model_v);
        }
        let _ = writeln!(out, "{:<44}{:>8}{:>14.4}", "  Reliability (1 - error of change)", "", d.reliability);
    }
    out
}
