//! End-to-end replication of the B.I.F. peer-review analysis from the
//! bundled contingency table.
//!
//! Every comparison against a published value is a [`Check`]; the
//! thresholds live in [`tolerance`] and are shared with the acceptance
//! suite. The gender-split counts behind the M1/M2 models were never
//! published. Without them the LR, bootstrap and comparison checks are
//! skipped, and the degrees-of-freedom accounting is exercised on a
//! synthetic split ([`gender_fixture`]) whose margins equal the real table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::estimation::{em_fit, FitOptions, FitResult};
use crate::inference::{bootstrap_gof, compare_nested, ComparisonReport};
use crate::model::{pattern_distribution, CellRef, Dims, ModelSpec, ParameterSet, RowRef};
use crate::panel::{parse_panel_csv, PanelError, PanelSchema, PanelTable};
use crate::reliability::{
    format_decomposition_table, stability_decomposition_with, DecompositionRow, TrueStateRule,
};
use crate::report::{format_parameters, FitReport, GroupReliability, Provenance};

pub const BIF_CSV: &str = include_str!("../../../data/bif.csv");
pub const BIF_SCHEMA: &str = include_str!("../../../data/bif.schema.json");
pub const GENDER_SCHEMA: &str = include_str!("../../../data/bif_gender.schema.json");
pub const GENDER_FIXTURE_CSV: &str = include_str!("../../../data/bif_gender_fixture.csv");

/// Path of a gender-split CSV (layout of [`GENDER_SCHEMA`]) to validate
/// the Table 4/5 statistics against.
pub const GENDER_DATA_ENV: &str = "LATENT_CHAIN_GENDER_DATA";

pub const DOCTORAL: &str = "doctoral";
pub const POSTDOCTORAL: &str = "post-doctoral";

/// Pass/fail thresholds of the replication.
pub mod tolerance {
    /// δ, ρ, τ against Tables 3a/3b (and 5).
    pub const TABLE3_VALUE: f64 = 0.02;
    /// Published 0.00/1.00 cells must be exactly on the boundary.
    pub const BOUNDARY_EXACT: f64 = 0.0;
    /// Table 2 model column and the reliability coefficients.
    pub const TABLE2_VALUE: f64 = 0.01;
    /// Observed stability printed to four decimals.
    pub const DATA_STABILITY: f64 = 5e-5;
    /// Table 4 LR values and the ΔLR of the nested comparisons.
    pub const LR: f64 = 0.5;
    /// Bootstrap p-values (binomial Monte Carlo error at B = 500).
    pub const BOOTSTRAP_P: f64 = 0.07;
    pub const BOOTSTRAP_REPLICATES: usize = 500;
    /// Significance level of the nested comparisons.
    pub const COMPARISON_ALPHA: f64 = 0.01;
    /// forward-backward against path enumeration, relative.
    pub const ORACLE_RELATIVE: f64 = 1e-12;
    /// Parameter recovery at n = 50 000 per group.
    pub const RECOVERY: f64 = 0.01;
    pub const RECOVERY_N: u64 = 50_000;
    /// Mean bootstrap G² relative to df when the model is true.
    pub const MEAN_G2_RELATIVE: f64 = 0.15;
    /// Wall-clock budget of the Table 3 fit with 32 starts.
    pub const TABLE3_SECONDS: f64 = 30.0;
}

/// Published values.
pub mod published {
    /// Table 1, `(pattern, doctoral, post-doctoral)` in lexicographic order.
    pub const TABLE1: [([u16; 3], u64, u64); 27] = [
        ([1, 1, 1], 143, 31),
        ([1, 1, 2], 254, 62),
        ([1, 1, 3], 142, 46),
        ([1, 2, 1], 9, 3),
        ([1, 2, 2], 74, 23),
        ([1, 2, 3], 155, 48),
        ([1, 3, 1], 1, 1),
        ([1, 3, 2], 9, 7),
        ([1, 3, 3], 112, 57),
        ([2, 1, 1], 8, 0),
        ([2, 1, 2], 20, 4),
        ([2, 1, 3], 26, 8),
        ([2, 2, 1], 1, 2),
        ([2, 2, 2], 16, 5),
        ([2, 2, 3], 84, 27),
        ([2, 3, 1], 0, 0),
        ([2, 3, 2], 1, 1),
        ([2, 3, 3], 103, 44),
        ([3, 1, 1], 2, 0),
        ([3, 1, 2], 9, 1),
        ([3, 1, 3], 26, 6),
        ([3, 2, 1], 1, 1),
        ([3, 2, 2], 8, 1),
        ([3, 2, 3], 65, 22),
        ([3, 3, 1], 0, 0),
        ([3, 3, 2], 0, 2),
        ([3, 3, 3], 205, 78),
    ];
    pub const DOCTORAL_TOTAL: u64 = 1474;
    pub const POSTDOCTORAL_TOTAL: u64 = 480;
    pub const TOTAL: u64 = 1954;

    /// Table 2 "Data" column as printed.
    pub const TABLE2_DATA: [f64; 2] = [0.24, 0.22];
    /// Recomputed from Table 1: (143+16+205)/1474 and (31+5+78)/480.
    pub const TABLE2_DATA_RECOMPUTED: [f64; 2] = [0.2469, 0.2375];
    /// Table 2 model column: stability, true stability, its error, change,
    /// true change, its error, total error.
    pub const TABLE2_MODEL: [[f64; 7]; 2] = [
        [0.23, 0.20, 0.03, 0.77, 0.58, 0.19, 0.22],
        [0.21, 0.19, 0.02, 0.79, 0.61, 0.18, 0.21],
    ];
    pub const TABLE2_LABELS: [&str; 7] = [
        "stability",
        "true_stability",
        "error_stability",
        "change",
        "true_change",
        "error_change",
        "total_error",
    ];
    /// `1 − error of change`.
    pub const RELIABILITY: [f64; 2] = [0.81, 0.82];

    /// Table 3a, shared by both groups.
    pub const DELTA: [f64; 3] = [0.62, 0.18, 0.20];
    pub const RHO: [[f64; 3]; 3] = [[0.92, 0.06, 0.02], [0.17, 0.81, 0.02], [0.00, 0.00, 1.00]];
    /// Table 3b, `[group][transition][from][to]`.
    pub const TAU: [[[[f64; 3]; 3]; 2]; 2] = [
        [
            [[0.64, 0.26, 0.10], [0.00, 0.54, 0.46], [0.00, 0.32, 0.68]],
            [[0.18, 0.62, 0.20], [0.00, 0.21, 0.79], [0.00, 0.00, 1.00]],
        ],
        [
            [[0.52, 0.28, 0.20], [0.00, 0.46, 0.54], [0.00, 0.26, 0.74]],
            [[0.13, 0.60, 0.27], [0.00, 0.22, 0.78], [0.00, 0.04, 0.96]],
        ],
    ];
    /// Table 3b standard error of doctoral τ(t1→t2) 1→1.
    pub const TAU_SE_DOCTORAL_11: f64 = 0.02;

    /// Table 4: (fellowship, model, df, LR, bootstrap p).
    pub const TABLE4: [(&str, &str, i64, f64, f64); 4] = [
        ("doctoral", "M1", 39, 76.65, 0.00),
        ("doctoral", "M2", 31, 50.96, 0.02),
        ("post-doctoral", "M1", 38, 40.75, 0.35),
        ("post-doctoral", "M2", 32, 36.38, 0.26),
    ];
    /// M1 − M2: (fellowship, ΔLR, Δdf, significant at α).
    pub const COMPARISONS: [(&str, f64, i64, bool); 2] =
        [("doctoral", 25.69, 8, true), ("post-doctoral", 4.37, 6, false)];

    /// Table 5, doctoral M2, `[gender][transition][from][to]`, male first.
    pub const TABLE5: [[[[f64; 3]; 3]; 2]; 2] = [
        [
            [[0.67, 0.23, 0.10], [0.00, 0.61, 0.39], [0.00, 0.27, 0.73]],
            [[0.23, 0.60, 0.17], [0.00, 0.21, 0.79], [0.00, 0.00, 1.00]],
        ],
        [
            [[0.59, 0.30, 0.11], [0.00, 0.45, 0.55], [0.01, 0.36, 0.63]],
            [[0.07, 0.67, 0.26], [0.00, 0.20, 0.80], [0.00, 0.00, 1.00]],
        ],
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    /// Reported for comparison only.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Acceptance criterion the check belongs to.
    pub criterion: u8,
    pub id: String,
    pub published: Option<f64>,
    pub computed: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn within(criterion: u8, id: String, published: f64, computed: f64, tol: f64) -> Self {
        let ok = (computed - published).abs() <= tol + 1e-12;
        Check {
            criterion,
            id,
            published: Some(published),
            computed: Some(computed),
            tolerance: Some(tol),
            status: if ok { Status::Pass } else { Status::Fail },
            note: None,
        }
    }

    fn condition(criterion: u8, id: String, computed: Option<f64>, ok: bool, note: String) -> Self {
        Check {
            criterion,
            id,
            published: None,
            computed,
            tolerance: None,
            status: if ok { Status::Pass } else { Status::Fail },
            note: Some(note),
        }
    }

    fn skipped(criterion: u8, id: String, published: f64) -> Self {
        Check {
            criterion,
            id,
            published: Some(published),
            computed: None,
            tolerance: None,
            status: Status::Skipped,
            note: Some("skipped: data not public".into()),
        }
    }

    fn info(criterion: u8, id: String, published: Option<f64>, computed: f64, note: &str) -> Self {
        Check {
            criterion,
            id,
            published,
            computed: Some(computed),
            tolerance: None,
            status: Status::Info,
            note: Some(note.into()),
        }
    }
}

pub fn bif_table() -> PanelTable {
    let schema = PanelSchema::from_json(BIF_SCHEMA).expect("bundled schema");
    parse_panel_csv(BIF_CSV, &schema).expect("bundled data")
}

pub fn gender_schema() -> PanelSchema {
    PanelSchema::from_json(GENDER_SCHEMA).expect("bundled schema")
}

/// Gender-split groups of one fellowship type, male first.
pub fn gender_groups(fellowship: &str) -> [String; 2] {
    [format!("{fellowship}-male"), format!("{fellowship}-female")]
}

pub fn main_spec(groups: usize) -> ModelSpec {
    ModelSpec::builder(Dims::new(groups, 3, 3, 3).expect("valid dims"))
        .tie_rho_over_time()
        .tie_delta_rho_over_groups()
        .build()
        .expect("valid constraints")
}

/// No gender differences: every parameter equal across the two groups.
pub fn m1_spec() -> ModelSpec {
    ModelSpec::builder(Dims::new(2, 3, 3, 3).expect("valid dims"))
        .tie_rho_over_time()
        .tie_delta_rho_over_groups()
        .tie_tau_over_groups()
        .build()
        .expect("valid constraints")
}

/// Gender-specific transitions; δ and ρ shared.
pub fn m2_spec() -> ModelSpec {
    main_spec(2)
}

struct FixtureModel {
    fellowship: &'static str,
    delta: [f64; 3],
    rho: [[f64; 3]; 3],
    /// `[gender][transition][from][to]`, male first.
    tau: [[[[f64; 3]; 3]; 2]; 2],
    male_weight: f64,
}

const POSTDOC_TAU_MALE: [[[f64; 3]; 3]; 2] = published::TAU[1];
const POSTDOC_TAU_FEMALE: [[[f64; 3]; 3]; 2] = [
    published::TAU[1][0],
    [[0.13, 0.87, 0.00], [0.00, 0.22, 0.78], [0.00, 0.04, 0.96]],
];

const FIXTURE_MODELS: [FixtureModel; 2] = [
    FixtureModel {
        fellowship: DOCTORAL,
        delta: published::DELTA,
        rho: published::RHO,
        tau: published::TABLE5,
        male_weight: 0.5,
    },
    FixtureModel {
        fellowship: POSTDOCTORAL,
        delta: [0.55, 0.26, 0.19],
        rho: [[0.97, 0.03, 0.00], [0.16, 0.66, 0.18], [0.00, 0.02, 0.98]],
        tau: [POSTDOC_TAU_MALE, POSTDOC_TAU_FEMALE],
        male_weight: 0.5,
    },
];

impl FixtureModel {
    fn params(&self) -> ParameterSet<f64> {
        let dims = Dims::new(2, 3, 3, 3).expect("valid dims");
        let mut p = ParameterSet::uniform(dims);
        for g in 0..2 {
            p.row_mut(RowRef::Delta { group: g }).copy_from_slice(&self.delta);
            for t in 0..3 {
                for a in 0..3 {
                    p.row_mut(RowRef::Rho {
                        occasion: t,
                        group: g,
                        class: a,
                    })
                    .copy_from_slice(&self.rho[a]);
                }
            }
            for s in 0..2 {
                for a in 0..3 {
                    p.row_mut(RowRef::Tau {
                        transition: s,
                        group: g,
                        from: a,
                    })
                    .copy_from_slice(&self.tau[g][s][a]);
                }
            }
        }
        p
    }
}

/// Splits one observed cell count `n` between two groups in proportion to
/// `w·p₁ : (1 − w)·p₂`, rounding the first share half away from zero.
pub fn split_count(n: u64, p1: f64, p2: f64, w: f64) -> (u64, u64) {
    let denom = w * p1 + (1.0 - w) * p2;
    let share = if denom > 0.0 { w * p1 / denom } else { w };
    let first = ((n as f64) * share).round() as u64;
    let first = first.min(n);
    (first, n - first)
}

/// Synthetic gender split of the bundled table.
///
/// Every Table 1 cell is divided between men and women by the posterior
/// gender share of its pattern under a two-group model. The doctoral model
/// takes the Table 3a measurement part and the Table 5 transitions; the
/// post-doctoral one uses the Table 3b transitions for men and removes the
/// class 1 → class 3 move at t2 → t3 for women. Group margins therefore equal
/// Table 1 exactly, so M1 on the fixture has the same estimates as a
/// one-group fit to the real counts.
pub fn gender_fixture() -> PanelTable {
    let bif = bif_table();
    let schema = gender_schema();
    let mut out = PanelTable::new(3, schema.categories.clone(), schema.groups.clone())
        .expect("valid schema")
        .with_category_names(schema.category_names.clone());
    for model in &FIXTURE_MODELS {
        let params = model.params();
        let male = pattern_distribution(&params, 0);
        let female = pattern_distribution(&params, 1);
        let source = bif.group_index(model.fellowship).expect("bundled group");
        let [m_label, f_label] = gender_groups(model.fellowship);
        let mg = out.group_index(&m_label).expect("schema group");
        let fg = out.group_index(&f_label).expect("schema group");
        for (pattern, n) in bif.cells(source) {
            let ix = pattern.lattice_index(3);
            let (m, f) = split_count(n, male[ix], female[ix], model.male_weight);
            if m > 0 {
                out.add(mg, pattern.clone(), m).expect("valid cell");
            }
            if f > 0 {
                out.add(fg, pattern.clone(), f).expect("valid cell");
            }
        }
    }
    out
}

pub fn parse_gender_table(text: &str) -> Result<PanelTable, PanelError> {
    parse_panel_csv(text, &gender_schema())
}

#[derive(Clone, Debug)]
pub struct ReplicateOptions {
    pub seed: u64,
    pub starts: usize,
    pub bootstrap_replicates: usize,
    /// The two-group fellowship table; the bundled one by default.
    pub table: PanelTable,
    /// Real gender-split counts, when available.
    pub gender_data: Option<PanelTable>,
}

impl ReplicateOptions {
    pub fn new(seed: u64) -> Self {
        ReplicateOptions {
            seed,
            starts: FitOptions::default().starts,
            bootstrap_replicates: tolerance::BOOTSTRAP_REPLICATES,
            table: bif_table(),
            gender_data: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub fellowship: String,
    pub model: String,
    /// `fixture` or `supplied`.
    pub source: String,
    pub free_parameters: usize,
    pub df: i64,
    pub lr: f64,
    pub bootstrap_p: Option<f64>,
    pub bootstrap_exceedances: Option<usize>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub fellowship: String,
    pub source: String,
    pub comparison: ComparisonReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub provenance: Provenance,
    pub gender_data: String,
    pub table1_totals: Vec<(String, u64)>,
    pub table2: Vec<GroupReliability>,
    pub table3: FitReport,
    pub table4: Vec<Table4Row>,
    /// Doctoral M2 transitions, `[gender][transition][from][to]`.
    pub table5: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    /// Data the Table 5 estimates come from.
    pub table5_source: String,
    pub comparisons: Vec<ComparisonRow>,
    pub checks: Vec<Check>,
    pub failed: Vec<String>,
    pub passed: bool,
}

fn fit_options(options: &ReplicateOptions, standard_errors: bool) -> FitOptions {
    FitOptions {
        starts: options.starts,
        seed: options.seed,
        standard_errors,
        ..FitOptions::default()
    }
}

fn table1_checks(table: &PanelTable, checks: &mut Vec<Check>) {
    let groups = [DOCTORAL, POSTDOCTORAL];
    let shape_ok = table.n_categories() == 3
        && table.occasions() == 3
        && groups.iter().all(|g| table.group_index(g).is_ok());
    if !shape_ok {
        checks.push(Check::condition(
            1,
            "table1.shape".into(),
            None,
            false,
            "expected groups doctoral/post-doctoral, 3 categories, 3 occasions".into(),
        ));
        return;
    }
    for (pattern, doc, post) in published::TABLE1 {
        let p = crate::panel::Pattern(pattern.iter().map(|c| c - 1).collect());
        for (g, expected) in [(DOCTORAL, doc), (POSTDOCTORAL, post)] {
            let got = table.count(table.group_index(g).unwrap(), &p);
            if got != expected {
                checks.push(Check::within(
                    1,
                    format!("table1.{g}.{}", p.display_one_based()),
                    expected as f64,
                    got as f64,
                    0.0,
                ));
            }
        }
    }
    for (g, n) in [
        (DOCTORAL, published::DOCTORAL_TOTAL),
        (POSTDOCTORAL, published::POSTDOCTORAL_TOTAL),
    ] {
        let got = table.total_count(g).unwrap();
        checks.push(Check::within(1, format!("table1.{g}.total"), n as f64, got as f64, 0.0));
    }
}

fn table3_checks(fit: &FitResult<f64>, checks: &mut Vec<Check>) {
    let p = &fit.params;
    let names = [DOCTORAL, POSTDOCTORAL];
    let value = |id: String, published: f64, computed: f64, checks: &mut Vec<Check>| {
        checks.push(Check::within(1, id.clone(), published, computed, tolerance::TABLE3_VALUE));
        if published == 0.0 || published == 1.0 {
            let ok = computed == published;
            checks.push(Check {
                criterion: 1,
                id: format!("{id}.boundary"),
                published: Some(published),
                computed: Some(computed),
                tolerance: Some(tolerance::BOUNDARY_EXACT),
                status: if ok { Status::Pass } else { Status::Fail },
                note: (!ok).then(|| "published on the boundary, fitted interior".to_string()),
            });
        }
    };
    for (g, name) in names.iter().enumerate() {
        for a in 0..3 {
            value(
                format!("table3a.{name}.delta.{}", a + 1),
                published::DELTA[a],
                p.delta(g, a),
                checks,
            );
            for j in 0..3 {
                value(
                    format!("table3a.{name}.rho.{}.{}", a + 1, j + 1),
                    published::RHO[a][j],
                    p.rho(0, g, a, j),
                    checks,
                );
            }
        }
        for s in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    value(
                        format!("table3b.{name}.tau{}{}.{}.{}", s + 1, s + 2, a + 1, b + 1),
                        published::TAU[g][s][a][b],
                        p.tau(s, g, a, b),
                        checks,
                    );
                }
            }
        }
    }
    if let Some(se) = fit.standard_errors.as_ref().and_then(|s| {
        s.get(CellRef {
            row: RowRef::Tau {
                transition: 0,
                group: 0,
                from: 0,
            },
            col: 0,
        })
    }) {
        checks.push(Check::info(
            1,
            "table3b.doctoral.tau12.1.1.se".into(),
            Some(published::TAU_SE_DOCTORAL_11),
            se,
            "soft check; the published standard errors come from an unpublished method",
        ));
    }
    checks.push(Check::condition(
        7,
        "table3.em_monotone".into(),
        Some(fit.diagnostics.max_ll_decrease),
        fit.diagnostics.monotone,
        "largest log-likelihood decrease over all iterations of all starts".into(),
    ));
}

fn table2_checks(table: &PanelTable, fit: &FitResult<f64>, checks: &mut Vec<Check>) -> Vec<GroupReliability> {
    let mut out = Vec::new();
    for (g, name) in [DOCTORAL, POSTDOCTORAL].iter().enumerate() {
        let d = stability_decomposition_with(&fit.params, g, TrueStateRule::ExactPath)
            .expect("valid fit");
        let alt = stability_decomposition_with(&fit.params, g, TrueStateRule::ConstancyCrossTab)
            .expect("valid fit");
        let values = [
            d.stability,
            d.true_stability,
            d.error_stability,
            d.change,
            d.true_change,
            d.error_change,
            d.total_error,
        ];
        for (k, label) in published::TABLE2_LABELS.iter().enumerate() {
            checks.push(Check::within(
                5,
                format!("table2.{name}.{label}"),
                published::TABLE2_MODEL[g][k],
                values[k],
                tolerance::TABLE2_VALUE,
            ));
        }
        checks.push(Check::within(
            5,
            format!("table2.{name}.reliability"),
            published::RELIABILITY[g],
            d.reliability,
            tolerance::TABLE2_VALUE,
        ));
        let data = table.manifest_stability(name).expect("bundled group");
        let mut c = Check::within(
            5,
            format!("table2.{name}.data_stability"),
            published::TABLE2_DATA_RECOMPUTED[g],
            data,
            tolerance::DATA_STABILITY,
        );
        c.note = Some(format!(
            "published as {:.2}, which Table 1 does not reproduce",
            published::TABLE2_DATA[g]
        ));
        checks.push(c);
        out.push(GroupReliability {
            group: name.to_string(),
            n: table.total_count(name).expect("bundled group"),
            data_stability: data,
            decomposition: d,
            alternative: alt,
        });
    }
    out
}

struct GenderFits {
    m1: FitResult<f64>,
    m2: FitResult<f64>,
    table: PanelTable,
}

fn fit_gender(data: &PanelTable, fellowship: &str, options: &ReplicateOptions) -> GenderFits {
    let [m, f] = gender_groups(fellowship);
    let table = data.select_groups(&[&m, &f]).expect("gender groups");
    let se = fellowship == DOCTORAL;
    let m1 = em_fit(&m1_spec(), &table, &fit_options(options, false)).expect("M1 fit");
    let m2 = em_fit(&m2_spec(), &table, &fit_options(options, se)).expect("M2 fit");
    GenderFits { m1, m2, table }
}

fn gender_section(
    data: &PanelTable,
    source: &str,
    options: &ReplicateOptions,
    checks: &mut Vec<Check>,
    table4: &mut Vec<Table4Row>,
    comparisons: &mut Vec<ComparisonRow>,
) -> Option<Vec<Vec<Vec<Vec<f64>>>>> {
    let supplied = source == "supplied";
    let mut table5 = None;
    for fellowship in [DOCTORAL, POSTDOCTORAL] {
        let fits = fit_gender(data, fellowship, options);
        for (model, fit) in [("M1", &fits.m1), ("M2", &fits.m2)] {
            let (_, _, df, lr, p) = published::TABLE4
                .iter()
                .copied()
                .find(|r| r.0 == fellowship && r.1 == model)
                .expect("published row");
            let id = format!("table4.{fellowship}.{model}");
            let mut c = Check::within(2, format!("{id}.df.{source}"), df as f64, fit.degrees_of_freedom as f64, 0.0);
            c.note = Some(format!("free parameters {}", fit.free_parameters));
            checks.push(c);
            checks.push(Check::condition(
                7,
                format!("{id}.em_monotone.{source}"),
                Some(fit.diagnostics.max_ll_decrease),
                fit.diagnostics.monotone,
                "largest log-likelihood decrease over all iterations of all starts".into(),
            ));
            let mut row = Table4Row {
                fellowship: fellowship.into(),
                model: model.into(),
                source: source.into(),
                free_parameters: fit.free_parameters,
                df: fit.degrees_of_freedom,
                lr: fit.g_squared,
                bootstrap_p: None,
                bootstrap_exceedances: None,
                converged: fit.converged,
            };
            if supplied {
                checks.push(Check::within(3, format!("{id}.lr"), lr, fit.g_squared, tolerance::LR));
                let boot_options = fit_options(options, false);
                match bootstrap_gof(fit, &fits.table, options.bootstrap_replicates, options.seed, &boot_options) {
                    Ok(b) => {
                        checks.push(Check::within(
                            3,
                            format!("{id}.bootstrap_p"),
                            p,
                            b.p_value,
                            tolerance::BOOTSTRAP_P,
                        ));
                        row.bootstrap_p = Some(b.p_value);
                        row.bootstrap_exceedances = Some(b.exceedances);
                    }
                    Err(e) => checks.push(Check::condition(
                        3,
                        format!("{id}.bootstrap_p"),
                        None,
                        false,
                        e.to_string(),
                    )),
                }
            } else {
                checks.push(Check::skipped(3, format!("{id}.lr"), lr));
                checks.push(Check::skipped(3, format!("{id}.bootstrap_p"), p));
            }
            table4.push(row);
        }

        let (_, dlr, ddf, significant) = published::COMPARISONS
            .iter()
            .copied()
            .find(|r| r.0 == fellowship)
            .expect("published comparison");
        let id = format!("comparison.{fellowship}");
        match compare_nested(&fits.m1, &fits.m2) {
            Ok(cmp) => {
                if supplied {
                    checks.push(Check::within(4, format!("{id}.delta_lr"), dlr, cmp.delta_lr, tolerance::LR));
                    checks.push(Check::within(4, format!("{id}.delta_df"), ddf as f64, cmp.delta_df as f64, 0.0));
                    let ok = (cmp.chi_square_p < tolerance::COMPARISON_ALPHA) == significant;
                    let side = if significant { "p < 0.01" } else { "p > 0.01" };
                    checks.push(Check::condition(
                        4,
                        format!("{id}.p"),
                        Some(cmp.chi_square_p),
                        ok,
                        format!("published {side}"),
                    ));
                } else {
                    checks.push(Check::skipped(4, format!("{id}.delta_lr"), dlr));
                    checks.push(Check::skipped(4, format!("{id}.delta_df"), ddf as f64));
                    checks.push(Check::skipped(4, format!("{id}.p"), tolerance::COMPARISON_ALPHA));
                }
                comparisons.push(ComparisonRow {
                    fellowship: fellowship.into(),
                    source: source.into(),
                    comparison: cmp,
                });
            }
            Err(e) => checks.push(Check::condition(4, id, None, false, e.to_string())),
        }

        if fellowship == DOCTORAL {
            let p = &fits.m2.params;
            let tau: Vec<Vec<Vec<Vec<f64>>>> = (0..2)
                .map(|g| {
                    (0..2)
                        .map(|s| (0..3).map(|a| (0..3).map(|b| p.tau(s, g, a, b)).collect()).collect())
                        .collect()
                })
                .collect();
            for (g, gender) in ["male", "female"].iter().enumerate() {
                for s in 0..2 {
                    for a in 0..3 {
                        for b in 0..3 {
                            let id = format!("table5.{gender}.tau{}{}.{}.{}", s + 1, s + 2, a + 1, b + 1);
                            let published = published::TABLE5[g][s][a][b];
                            if supplied {
                                checks.push(Check::within(3, id, published, tau[g][s][a][b], tolerance::TABLE3_VALUE));
                            } else {
                                checks.push(Check::skipped(3, id, published));
                            }
                        }
                    }
                }
            }
            if supplied || table5.is_none() {
                table5 = Some(tau);
            }
        }
    }
    table5
}

/// Fits every model of the analysis and checks the published tables.
pub fn replicate(options: &ReplicateOptions) -> ReplicationReport {
    let mut checks = Vec::new();
    let table = &options.table;
    table1_checks(table, &mut checks);

    let fit_opts = fit_options(options, true);
    let main = main_spec(table.n_groups());
    let provenance = Provenance {
        artifact_version: crate::ARTIFACT_VERSION.into(),
        command: "replicate".into(),
        config_hash: None,
        seed: options.seed,
        data_digest: table.digest(),
    };
    let fit = match em_fit::<f64>(&main, table, &fit_opts) {
        Ok(f) => f,
        Err(e) => panic!("replication table cannot be fitted: {e}"),
    };
    table3_checks(&fit, &mut checks);
    let table2 = table2_checks(table, &fit, &mut checks);
    let table3 = FitReport::new(&fit, table, &fit_opts, provenance.clone(), TrueStateRule::ExactPath);

    let mut table4 = Vec::new();
    let mut comparisons = Vec::new();
    let fixture = gender_fixture();
    let mut table5 = gender_section(&fixture, "fixture", options, &mut checks, &mut table4, &mut comparisons);
    let gender_data = match &options.gender_data {
        Some(g) => {
            table5 = gender_section(g, "supplied", options, &mut checks, &mut table4, &mut comparisons);
            format!("supplied ({})", g.digest())
        }
        None => "fixture only (gender split not public)".into(),
    };

    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.id.clone())
        .collect();
    ReplicationReport {
        provenance,
        gender_data,
        table1_totals: [DOCTORAL, POSTDOCTORAL]
            .iter()
            .map(|g| (g.to_string(), table.total_count(g).unwrap_or(0)))
            .collect(),
        table2,
        table3,
        table4,
        table5,
        table5_source: if options.gender_data.is_some() { "supplied" } else { "fixture" }.into(),
        comparisons,
        passed: failed.is_empty(),
        failed,
        checks,
    }
}

impl ReplicationReport {
    /// Aligned plain-text rendering of Tables 2–5 and the failed checks.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Table 2: stability and change");
        let rows: Vec<DecompositionRow<'_>> = self
            .table2
            .iter()
            .map(|g| DecompositionRow {
                label: &g.group,
                data_stability: Some(g.data_stability),
                decomposition: &g.decomposition,
            })
            .collect();
        out.push_str(&format_decomposition_table(&rows));
        for g in &self.table2 {
            let _ = writeln!(
                out,
                "  {}: data stability published as {:.2}; recomputed {:.4}",
                g.group,
                if g.group == DOCTORAL { published::TABLE2_DATA[0] } else { published::TABLE2_DATA[1] },
                g.data_stability
            );
        }
        let alt: Vec<DecompositionRow<'_>> = self
            .table2
            .iter()
            .map(|g| DecompositionRow {
                label: &g.group,
                data_stability: None,
                decomposition: &g.alternative,
            })
            .collect();
        let _ = writeln!(out, "\nTable 2 under the constancy cross-classification rule");
        out.push_str(&format_decomposition_table(&alt));

        let _ = writeln!(out, "\nTables 3a/3b: main model");
        if let Ok(params) = ParameterSet::<f64>::from_document(&self.table3.parameters) {
            let se = self.table3.standard_errors.as_ref();
            out.push_str(&format_parameters_doc(&params, se, &self.table3.groups, &self.table3.categories));
        }
        let _ = writeln!(
            out,
            "LL = {:.4}  G2 = {:.2}  free = {}  df = {}",
            self.table3.log_likelihood,
            self.table3.g_squared,
            self.table3.free_parameters,
            self.table3.degrees_of_freedom
        );

        let _ = writeln!(out, "\nTable 4: gender models ({})", self.gender_data);
        let _ = writeln!(out, "{:<16}{:<6}{:<10}{:>6}{:>10}{:>10}", "fellowship", "model", "data", "df", "LR", "p_boot");
        for r in &self.table4 {
            let p = r.bootstrap_p.map(|p| format!("{p:.3}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<16}{:<6}{:<10}{:>6}{:>10.2}{:>10}",
                r.fellowship, r.model, r.source, r.df, r.lr, p
            );
        }
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{} M1 - M2 ({}): dLR = {:.2}  ddf = {}  p = {:.4}",
                c.fellowship, c.source, c.comparison.delta_lr, c.comparison.delta_df, c.comparison.chi_square_p
            );
        }
        if let Some(t5) = &self.table5 {
            let _ = writeln!(out, "\nTable 5: doctoral M2 transitions ({})", self.table5_source);
            for (g, gender) in ["male", "female"].iter().enumerate() {
                for a in 0..3 {
                    let row: Vec<String> = (0..2)
                        .flat_map(|s| (0..3).map(move |b| (s, b)))
                        .map(|(s, b)| format!("{:.2}", t5[g][s][a][b]))
                        .collect();
                    let name = if a == 0 { *gender } else { "" };
                    let _ = writeln!(out, "{:<8}{:>3}  {}", name, a + 1, row.join("  "));
                }
            }
        }

        let count = |s: Status| self.checks.iter().filter(|c| c.status == s).count();
        let _ = writeln!(
            out,
            "\nchecks: {} pass, {} fail, {} skipped",
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skipped)
        );
        for c in self.checks.iter().filter(|c| c.status == Status::Fail) {
            let _ = writeln!(
                out,
                "FAIL {}: published {} computed {}{}",
                c.id,
                c.published.map(|v| format!("{v}")).unwrap_or_else(|| "-".into()),
                c.computed.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                c.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
            );
        }
        out
    }
}

fn format_parameters_doc(
    params: &ParameterSet<f64>,
    se: Option<&crate::estimation::StandardErrorDocument>,
    groups: &[String],
    categories: &[String],
) -> String {
    let se = se.map(crate::estimation::StandardErrors::from_document);
    format_parameters(params, se.as_ref(), groups, categories)
}
