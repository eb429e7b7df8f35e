//! `latent-chain`: fit, bootstrap, compare and simulate latent Markov chain
//! models from a JSON config, or rerun the bundled peer-review analysis.
//!
//! Exit codes: 0 ok, 1 usage or config error, 2 non-convergence,
//! 3 replication mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latent_chain::config::{read_file, resolve_seed, ConfigError, LoadedConfig};
use latent_chain::estimation::{em_fit, FitOptions};
use latent_chain::inference::{blank_template, bootstrap_gof, compare_nested, simulate};
use latent_chain::panel::PanelTable;
use latent_chain::reliability::TrueStateRule;
use latent_chain::replication::{self, ReplicateOptions, GENDER_DATA_ENV};
use latent_chain::report::{
    format_fit, load_parameters, BootstrapRunReport, CompareRunReport, FitReport, Provenance,
    BOOTSTRAP_TEST_LABEL, COMPARE_TEST_LABEL,
};
use latent_chain::{Fit, Params};

const EXIT_USAGE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "latent-chain", version, about = "Latent Markov chain models for categorical panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write parameters, standard errors, G² and df.
    Fit(Common),
    /// Fit a model and compute the parametric-bootstrap p-value of G².
    Bootstrap(Common),
    /// Likelihood-ratio test of two nested models on the same data.
    Compare(CompareArgs),
    /// Draw a table from a parameter file; CSV on standard output.
    Simulate(Common),
    /// Rerun the bundled analysis and check it against the published tables.
    Replicate(ReplicateArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the 2×2 constancy cross-classification for the reliability
    /// decomposition instead of exact pattern/path agreement.
    #[arg(long)]
    constancy_rule: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Two configs, in either order; the nesting is detected.
    #[arg(long, num_args = 1, required = true)]
    config: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplicateArgs {
    /// Optional config overriding the data, starts, replicates or the
    /// gender-split file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Exit(u8),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Bootstrap(a) => cmd_bootstrap(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Replicate(a) => cmd_replicate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Exit(code)) => ExitCode::from(code),
    }
}

/// Writes `text` to `out`, or to standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn out_path(cli: Option<&PathBuf>, loaded: &LoadedConfig) -> Option<PathBuf> {
    cli.cloned()
        .or_else(|| loaded.config.output.as_ref().map(|p| loaded.resolve(p)))
}

fn rule(constancy: bool) -> TrueStateRule {
    if constancy {
        TrueStateRule::ConstancyCrossTab
    } else {
        TrueStateRule::ExactPath
    }
}

struct Prepared {
    loaded: LoadedConfig,
    table: PanelTable,
    options: FitOptions,
    fit: Fit,
}

fn prepare_fit(config: &Path, seed: Option<u64>) -> Result<Prepared, Failure> {
    let loaded = LoadedConfig::load(config)?;
    let table = loaded.load_table()?;
    let spec = loaded.model_spec(&table)?;
    let options = loaded.fit_options(seed)?;
    let fit = em_fit(&spec, &table, &options).map_err(usage)?;
    Ok(Prepared {
        loaded,
        table,
        options,
        fit,
    })
}

fn provenance(command: &str, p: &Prepared) -> Provenance {
    Provenance {
        artifact_version: latent_chain::ARTIFACT_VERSION.into(),
        command: command.into(),
        config_hash: Some(p.loaded.hash.clone()),
        seed: p.options.seed,
        data_digest: p.table.digest(),
    }
}

fn fit_report(command: &str, p: &Prepared, constancy: bool) -> FitReport {
    FitReport::new(&p.fit, &p.table, &p.options, provenance(command, p), rule(constancy))
}

fn cmd_fit(a: &Common) -> Result<(), Failure> {
    let p = prepare_fit(&a.config, a.seed)?;
    let report = fit_report("fit", &p, a.constancy_rule);
    eprint!("{}", format_fit(&report, p.fit.standard_errors.as_ref(), &p.fit.params));
    emit(out_path(a.out.as_ref(), &p.loaded).as_deref(), &to_json(&report))?;
    if !p.fit.converged {
        eprintln!("warning: no start converged within max_iterations");
        return Err(Failure::Exit(EXIT_NOT_CONVERGED));
    }
    Ok(())
}

fn cmd_bootstrap(a: &Common) -> Result<(), Failure> {
    let p = prepare_fit(&a.config, a.seed)?;
    let block = p
        .loaded
        .config
        .bootstrap
        .clone()
        .ok_or_else(|| usage("bootstrap: missing block"))?;
    let seed = match a.seed {
        Some(s) => s,
        None => resolve_seed(block.seed, p.loaded.config.fit.seed)?,
    };
    let fit_report = fit_report("bootstrap", &p, a.constancy_rule);
    if !p.fit.converged {
        emit(out_path(a.out.as_ref(), &p.loaded).as_deref(), &to_json(&fit_report))?;
        eprintln!("warning: the fit did not converge; bootstrap skipped");
        return Err(Failure::Exit(EXIT_NOT_CONVERGED));
    }
    let boot = bootstrap_gof(&p.fit, &p.table, block.replicates, seed, &p.options).map_err(usage)?;
    eprintln!(
        "G2 = {:.2}  df = {}  bootstrap p = {:.4} ({} of {} replicates at or above, {} not converged)",
        boot.observed_lr, p.fit.degrees_of_freedom, boot.p_value, boot.exceedances, boot.b, boot.non_converged
    );
    let report = BootstrapRunReport {
        test: BOOTSTRAP_TEST_LABEL.into(),
        mean_replicate_g_squared: boot.mean_replicate_lr(),
        fit: fit_report,
        bootstrap: boot,
    };
    emit(out_path(a.out.as_ref(), &p.loaded).as_deref(), &to_json(&report))
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    if a.config.len() != 2 {
        return Err(usage(format!("compare needs exactly two --config, got {}", a.config.len())));
    }
    let first = prepare_fit(&a.config[0], a.seed)?;
    let second = prepare_fit(&a.config[1], a.seed)?;
    let (restricted, general) = if second.fit.spec.relaxes(&first.fit.spec) {
        (first, second)
    } else if first.fit.spec.relaxes(&second.fit.spec) {
        (second, first)
    } else {
        return Err(usage("the two models are not nested"));
    };
    let comparison = compare_nested(&restricted.fit, &general.fit).map_err(usage)?;
    eprintln!(
        "dLR = {:.2}  ddf = {}  chi-square p = {:.4}",
        comparison.delta_lr, comparison.delta_df, comparison.chi_square_p
    );
    if let Some(w) = &comparison.warning {
        eprintln!("warning: {w}");
    }
    let report = CompareRunReport {
        test: COMPARE_TEST_LABEL.into(),
        restricted: fit_report("compare", &restricted, false),
        general: fit_report("compare", &general, false),
        comparison,
    };
    emit(a.out.as_deref(), &to_json(&report))?;
    if !restricted.fit.converged || !general.fit.converged {
        return Err(Failure::Exit(EXIT_NOT_CONVERGED));
    }
    Ok(())
}

fn cmd_simulate(a: &Common) -> Result<(), Failure> {
    let loaded = LoadedConfig::load(&a.config)?;
    let sim = loaded
        .config
        .simulate
        .clone()
        .ok_or_else(|| usage("simulate: missing block"))?;
    let params: Params = load_parameters(&read_file(&loaded.resolve(&sim.parameters))?)
        .map_err(|e| usage(format!("simulate.parameters: {e}")))?;
    let dims = *params.dims();
    let data = if loaded.config.data.is_some() {
        Some(loaded.load_table()?)
    } else {
        None
    };
    let sizes = match (&sim.sizes, &data) {
        (Some(s), _) => s.clone(),
        (None, Some(t)) => t.group_totals(),
        (None, None) => return Err(usage("simulate.sizes: missing and no data to take them from")),
    };
    if sizes.len() != dims.groups {
        return Err(usage(format!(
            "simulate.sizes: {} sizes for {} groups",
            sizes.len(),
            dims.groups
        )));
    }
    let template = match data {
        Some(t) if t.n_groups() == dims.groups && t.n_categories() == dims.categories => t,
        _ => blank_template(dims.groups, dims.categories, dims.occasions),
    };
    let seed = match a.seed {
        Some(s) => s,
        None => resolve_seed(sim.seed, None)?,
    };
    let table = simulate(&params, &sizes, seed, &template).map_err(usage)?;
    emit(out_path(a.out.as_ref(), &loaded).as_deref(), &table.to_csv())
}

fn cmd_replicate(a: &ReplicateArgs) -> Result<(), Failure> {
    let loaded = a.config.as_deref().map(LoadedConfig::load).transpose()?;
    let config_seed = loaded.as_ref().and_then(|l| l.config.fit.seed);
    let mut options = ReplicateOptions::new(resolve_seed(a.seed, config_seed)?);
    let mut gender_path = std::env::var_os(GENDER_DATA_ENV).map(PathBuf::from);
    if let Some(l) = &loaded {
        if l.config.data.is_some() {
            options.table = l.load_table()?;
        }
        if let Some(s) = l.config.fit.starts {
            options.starts = s;
        }
        if let Some(b) = &l.config.bootstrap {
            options.bootstrap_replicates = b.replicates;
        }
        if let Some(g) = &l.config.gender_data {
            gender_path = Some(l.resolve(g));
        }
    }
    if let Some(path) = gender_path {
        let text = read_file(&path)?;
        options.gender_data = Some(
            replication::parse_gender_table(&text)
                .map_err(|e| usage(format!("gender data {}: {e}", path.display())))?,
        );
    }
    let report = replication::replicate(&options);
    eprint!("{}", report.to_text());
    let out = a
        .out
        .clone()
        .or_else(|| loaded.as_ref().and_then(|l| l.config.output.as_ref().map(|p| l.resolve(p))));
    emit(out.as_deref(), &to_json(&report))?;
    if report.passed {
        Ok(())
    } else {
        eprintln!("replication mismatch in {} check(s): {}", report.failed.len(), report.failed.join(", "));
        Err(Failure::Exit(EXIT_MISMATCH))
    }
}
