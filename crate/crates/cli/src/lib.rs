//! Batch front end: synthesize cohorts, run the pipeline from config files, serve
//! the API and run the acceptance suite.
//!
//! Every report is rendered through [`Workbench`], the same path the service
//! uses, so a command's output file and the matching API body are byte-identical.

pub mod acceptance;
mod parity;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dosestrat_core::cohort::{
    generate_synthetic_cohort, load_cohort, save_cohort, Cohort, CohortFormat, LoadOptions,
    SyntheticConfig,
};
use dosestrat_core::pipeline::{Analysis, Format, RuleTarget, RulesRequest, ScopeChoice, View, Workbench};
use dosestrat_core::rules::MinerConfig;
use dosestrat_core::search::Metric;
use dosestrat_core::{write_atomic, Error, ErrorKind};
use dosestrat_service::{AppState, ServiceConfig};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "dosestrat", version, about = "Dose-based patient stratification toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted dose groups.
    Synth(SynthArgs),
    /// Cluster a cohort and write the fitted model.
    Cluster(ClusterArgs),
    /// Likelihood-ratio tests of each cluster against the outcome.
    Lrt(LrtArgs),
    /// One forward-search round over single-edit neighbors of the feature spec.
    Search(SearchArgs),
    /// Mine threshold rule sets that explain a cluster or the outcome.
    Rules(RulesArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
    /// Run the acceptance criteria and print a pass/fail table.
    ReproAcceptance(AcceptanceArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (JSON); defaults apply to absent keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output cohort; `.csv` or `.json` picks the format.
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs shared by the analysis commands.
#[derive(Debug, Args)]
pub struct Inputs {
    /// Cohort file (`.csv` or `.json`).
    #[arg(long)]
    pub cohort: PathBuf,
    /// Accept patients without dose data for some organs.
    #[arg(long)]
    pub allow_missing: bool,
    /// Feature spec (JSON); all organs with the default window when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Cluster parameters (JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Outcome selection (JSON): symptom, time point, threshold, confounders, selected cluster.
    #[arg(long)]
    pub outcome: Option<PathBuf>,
    /// Replaces the outcome file's confounder list.
    #[arg(long, value_delimiter = ',')]
    pub confounders: Option<Vec<String>>,
}

/// Output location and encoding.
#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when absent. Written atomically.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Encoding; inferred from the `--out` extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl Output {
    fn format(&self) -> Format {
        match self.format {
            Some(FormatArg::Json) => Format::Json,
            Some(FormatArg::Csv) => Format::Csv,
            None => match self.out.as_deref().and_then(Path::extension) {
                Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
                _ => Format::Json,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClusterView {
    /// The fitted model.
    Model,
    /// Assignments, sizes and per-organ dose quantiles.
    Clusters,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum, default_value = "model")]
    pub view: ClusterView,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LrtArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Severity thresholds to sweep; the outcome's own threshold when absent.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<u8>>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Metric shown: bic, aic or p.
    #[arg(long, default_value = "bic")]
    pub metric: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// `outcome`, `cluster` (the selected cluster) or `cluster:N`.
    #[arg(long, default_value = "outcome")]
    pub target: String,
    /// Miner config (JSON).
    #[arg(long)]
    pub miner: Option<PathBuf>,
    /// Mine over every organ and feature instead of the feature spec's.
    #[arg(long)]
    pub all_features: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "DOSESTRAT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "DOSESTRAT_BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Cohort used by sessions created without one.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[arg(long)]
    pub allow_missing: bool,
    /// Omit the permissive cross-origin headers.
    #[arg(long)]
    pub no_cors: bool,
    /// Ceiling on a single computation, in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

#[derive(Debug, Args)]
pub struct AcceptanceArgs {
    /// Criteria to run; 1-8 when absent.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<u8>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0} acceptance criteria failed")]
    Acceptance(usize),
}

impl CliError {
    /// 2 validation, 3 engine, 4 I/O, 1 failed acceptance.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Engine => 3,
                ErrorKind::Io => 4,
            },
            CliError::Acceptance(_) => 1,
        }
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Schema {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load(path: &Path, allow_missing: bool) -> Result<Cohort, Error> {
    load_cohort(path, CohortFormat::from_path(path)?, &LoadOptions { allow_missing })
}

impl Inputs {
    fn workbench(&self) -> Result<Workbench, Error> {
        let cohort = load(&self.cohort, self.allow_missing)?;
        let mut analysis = Analysis::default_for(&cohort);
        if let Some(p) = &self.spec {
            analysis.spec = read_config(p)?;
        }
        if let Some(p) = &self.params {
            analysis.params = read_config(p)?;
        }
        if let Some(p) = &self.outcome {
            analysis.outcome = read_config(p)?;
        }
        if let Some(c) = &self.confounders {
            analysis.outcome.confounders = c.clone();
        }
        Workbench::new(Arc::new(cohort), analysis)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn render(workbench: &Workbench, view: &View, out: Option<&Path>) -> Result<(), Error> {
    emit(out, &workbench.render(view)?.text)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => {
            let config: SyntheticConfig = match &a.config {
                Some(p) => read_config(p)?,
                None => SyntheticConfig::default(),
            };
            let synth = generate_synthetic_cohort(&config, a.seed)?;
            save_cohort(&synth.cohort, &a.out, CohortFormat::from_path(&a.out)?)?;
        }
        Command::Cluster(a) => {
            let view = match a.view {
                ClusterView::Model => View::Model,
                ClusterView::Clusters => View::Clusters,
            };
            render(&a.inputs.workbench()?, &view, a.out.as_deref())?;
        }
        Command::Lrt(a) => {
            let view = View::Lrt {
                thresholds: a.thresholds.clone(),
                format: a.output.format(),
            };
            render(&a.inputs.workbench()?, &view, a.output.out.as_deref())?;
        }
        Command::Search(a) => {
            let view = View::AdditiveEffects {
                metric: a.metric.parse::<Metric>()?,
                format: a.output.format(),
            };
            render(&a.inputs.workbench()?, &view, a.output.out.as_deref())?;
        }
        Command::Rules(a) => {
            let request = RulesRequest {
                target: a.target.parse::<RuleTarget>()?,
                config: match &a.miner {
                    Some(p) => read_config::<MinerConfig>(p)?,
                    None => MinerConfig::default(),
                },
                scope: if a.all_features {
                    ScopeChoice::AllFeatures
                } else {
                    ScopeChoice::Spec
                },
            };
            render(&a.inputs.workbench()?, &View::Rules(request), a.out.as_deref())?;
        }
        Command::Serve(a) => serve(&a)?,
        Command::ReproAcceptance(a) => {
            let ids = a.only.unwrap_or_else(|| (1..=8).collect());
            println!("dosestrat acceptance ({} rayon threads)", rayon::current_num_threads());
            let reports = acceptance::run(&ids, |r| println!("{}", r.line()));
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", reports.len() - failed);
            if failed > 0 {
                return Err(CliError::Acceptance(failed));
            }
        }
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), Error> {
    let _ = tracing_subscriber::fmt().try_init();
    let cohort = a.cohort.as_deref().map(|p| load(p, a.allow_missing)).transpose()?;
    let state = AppState::new(
        cohort,
        ServiceConfig {
            dev_cors: !a.no_cors,
            request_timeout: Duration::from_secs(a.timeout),
        },
    );
    let addr = SocketAddr::new(a.bind, a.port);
    let io = |source| Error::Io {
        path: addr.to_string(),
        source,
    };
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io)?
        .block_on(dosestrat_service::serve(addr, state))
        .map_err(io)
}
