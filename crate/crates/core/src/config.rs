//! JSON run configuration shared by the command-line front end and the
//! replication driver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimation::FitOptions;
use crate::model::{CellRef, ConstraintSet, Dims, Fix, ModelSpec, RowRef, SpecError};
use crate::panel::{parse_panel_csv, PanelError, PanelSchema, PanelTable};

/// Environment variable consulted for the seed when neither the command
/// line nor the config sets one.
pub const SEED_ENV: &str = "LATENT_CHAIN_SEED";

/// Seed used when nothing else provides one.
pub const DEFAULT_SEED: u64 = 20_100_101;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("data {path}: {source}")]
    Data { path: PathBuf, source: PanelError },
    #[error("model: {0}")]
    Model(#[from] SpecError),
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    SeedEnv(String),
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Named constraint macros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMacro {
    /// ρ equal across occasions (per group and class).
    TieRhoOverTime,
    /// δ and ρ equal across groups.
    TieDeltaRhoOverGroups,
    /// τ equal across groups (per transition).
    TieTauOverGroups,
    /// τ equal across transitions.
    StationaryTau,
    /// ρ fixed to the identity; requires `classes` = number of categories.
    Manifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub classes: usize,
    #[serde(default)]
    pub constraints: Vec<ConstraintMacro>,
    /// Additional row ties, zero-based.
    #[serde(default)]
    pub ties: Vec<Vec<RowRef>>,
    /// Fixed cells, zero-based.
    #[serde(default)]
    pub fixes: Vec<Fix>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub starts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub convergence: Option<f64>,
    pub boundary_tol: Option<f64>,
    pub seed: Option<u64>,
    pub standard_errors: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: Option<u64>,
}

fn default_replicates() -> usize {
    crate::inference::bootstrap::DEFAULT_REPLICATES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Parameter document (a fit report or a bare parameter file).
    pub parameters: PathBuf,
    /// Units per group; defaults to the data's group totals.
    pub sizes: Option<Vec<u64>>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Panel CSV, relative to the config file.
    pub data: Option<PathBuf>,
    /// Schema sidecar, relative to the config file.
    pub schema: Option<PathBuf>,
    /// Subset and order of groups to analyse; all groups when absent.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    /// Category recoding `old label → new label`, applied after parsing.
    #[serde(default)]
    pub merge: Option<MergeConfig>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    pub bootstrap: Option<BootstrapConfig>,
    pub simulate: Option<SimulateConfig>,
    /// Gender-split counts for `replicate`, relative to the config file.
    pub gender_data: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    pub mapping: std::collections::BTreeMap<String, String>,
    pub labels: Vec<String>,
}

/// A parsed config together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read_file(path)?;
        Self::from_text(&text, path)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            hash: sha256_hex(text.as_bytes()),
        })
    }

    /// Resolves a path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn load_table(&self) -> Result<PanelTable, ConfigError> {
        let data = self
            .config
            .data
            .as_ref()
            .ok_or_else(|| ConfigError::field("data", "missing"))?;
        let schema = self
            .config
            .schema
            .as_ref()
            .ok_or_else(|| ConfigError::field("schema", "missing"))?;
        let data = self.resolve(data);
        let schema_path = self.resolve(schema);
        let schema = PanelSchema::from_json(&read_file(&schema_path)?).map_err(|source| {
            ConfigError::Data {
                path: schema_path.clone(),
                source,
            }
        })?;
        let table = parse_panel_csv(&read_file(&data)?, &schema).map_err(|source| {
            ConfigError::Data {
                path: data.clone(),
                source,
            }
        })?;
        prepare_table(table, &self.config).map_err(|source| ConfigError::Data { path: data, source })
    }

    pub fn model_spec(&self, table: &PanelTable) -> Result<ModelSpec, ConfigError> {
        let model = self
            .config
            .model
            .as_ref()
            .ok_or_else(|| ConfigError::field("model", "missing"))?;
        build_spec(model, table.n_groups(), table.n_categories(), table.occasions())
    }

    /// Fit options with the seed resolved from, in order, `cli_seed`, the
    /// config's `fit.seed`, the environment and [`DEFAULT_SEED`].
    pub fn fit_options(&self, cli_seed: Option<u64>) -> Result<FitOptions, ConfigError> {
        let f = &self.config.fit;
        let mut o = FitOptions::default();
        if let Some(v) = f.starts {
            o.starts = v;
        }
        if let Some(v) = f.max_iterations {
            o.max_iterations = v;
        }
        if let Some(v) = f.convergence {
            o.convergence = v;
        }
        if let Some(v) = f.boundary_tol {
            o.boundary_tol = v;
        }
        if let Some(v) = f.standard_errors {
            o.standard_errors = v;
        }
        o.seed = resolve_seed(cli_seed, f.seed)?;
        o.check()
            .map_err(|e| ConfigError::field("fit", e.to_string()))?;
        Ok(o)
    }
}

/// Applies the config's recoding and group selection.
pub fn prepare_table(table: PanelTable, config: &RunConfig) -> Result<PanelTable, PanelError> {
    let table = match &config.merge {
        Some(m) => {
            let mut mapping = Vec::with_capacity(table.n_categories());
            for old in table.category_labels() {
                let new = m
                    .mapping
                    .get(old)
                    .ok_or_else(|| PanelError::Schema(format!("merge mapping has no entry for category {old:?}")))?;
                let ix = m
                    .labels
                    .iter()
                    .position(|l| l == new)
                    .ok_or_else(|| PanelError::Schema(format!("merge target {new:?} is not among the new labels")))?;
                mapping.push(ix);
            }
            table.merge_categories(&mapping, m.labels.clone())?
        }
        None => table,
    };
    match &config.groups {
        Some(groups) => {
            let labels: Vec<&str> = groups.iter().map(String::as_str).collect();
            table.select_groups(&labels)
        }
        None => Ok(table),
    }
}

pub fn build_spec(
    model: &ModelConfig,
    groups: usize,
    categories: usize,
    occasions: usize,
) -> Result<ModelSpec, ConfigError> {
    if model.classes == 0 {
        return Err(ConfigError::field("model.classes", "must be at least 1"));
    }
    let dims = Dims::new(groups, categories, occasions, model.classes)?;
    let mut b = ModelSpec::builder(dims);
    for m in &model.constraints {
        b = match m {
            ConstraintMacro::TieRhoOverTime => b.tie_rho_over_time(),
            ConstraintMacro::TieDeltaRhoOverGroups => b.tie_delta_rho_over_groups(),
            ConstraintMacro::TieTauOverGroups => b.tie_tau_over_groups(),
            ConstraintMacro::StationaryTau => b.stationary(),
            ConstraintMacro::Manifest => b.manifest(),
        };
    }
    for tie in &model.ties {
        b = b.tie(tie.clone());
    }
    for fix in &model.fixes {
        b = b.fix(
            CellRef {
                row: fix.cell.row,
                col: fix.cell.col,
            },
            fix.value,
        );
    }
    Ok(b.build()?)
}

/// `cli`, then `config`, then `$LATENT_CHAIN_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(cli: Option<u64>, config: Option<u64>) -> Result<u64, ConfigError> {
    if let Some(s) = cli.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ConfigError::SeedEnv(v.clone())),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// The constraint set a list of macros expands to, for reporting.
pub fn expand_macros(macros: &[ConstraintMacro], dims: &Dims) -> ConstraintSet {
    let mut c = ConstraintSet::default();
    for m in macros {
        match m {
            ConstraintMacro::TieRhoOverTime => c.tie_rho_over_time(dims),
            ConstraintMacro::TieDeltaRhoOverGroups => c.tie_delta_rho_over_groups(dims),
            ConstraintMacro::TieTauOverGroups => c.tie_tau_over_groups(dims),
            ConstraintMacro::StationaryTau => c.stationary_tau(dims),
            ConstraintMacro::Manifest => c.identity_rho(dims),
        };
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_macros_and_rejects_unknown_fields() {
        let text = r#"{"data":"d.csv","schema":"s.json",
            "model":{"classes":3,"constraints":["tie-rho-over-time","tie-delta-rho-over-groups"]},
            "fit":{"starts":4}}"#;
        let c = LoadedConfig::from_text(text, Path::new("/x/c.json")).unwrap();
        let m = c.config.model.as_ref().unwrap();
        assert_eq!(m.constraints.len(), 2);
        assert_eq!(c.resolve(Path::new("d.csv")), PathBuf::from("/x/d.csv"));
        assert_eq!(c.fit_options(Some(5)).unwrap().starts, 4);
        assert_eq!(c.fit_options(Some(5)).unwrap().seed, 5);

        let bad = r#"{"model":{"classes":3,"constraints":["tie-everything"]}}"#;
        assert!(LoadedConfig::from_text(bad, Path::new("c.json")).is_err());
        let bad = r#"{"modle":{}}"#;
        assert!(LoadedConfig::from_text(bad, Path::new("c.json")).is_err());
    }

    #[test]
    fn spec_from_macros() {
        let m = ModelConfig {
            classes: 3,
            constraints: vec![ConstraintMacro::TieRhoOverTime, ConstraintMacro::Manifest],
            ties: vec![],
            fixes: vec![],
        };
        let spec = build_spec(&m, 1, 3, 3).unwrap();
        assert!(spec.is_manifest());
        let m = ModelConfig { classes: 0, ..m };
        assert!(build_spec(&m, 1, 3, 3).is_err());
    }
}
