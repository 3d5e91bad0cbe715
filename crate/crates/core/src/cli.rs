//! Command-line front end. Each subcommand reads a JSON config; `run`
//! returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assignments::{Assignment, MarkovAssignment};
use crate::bench::{
    render_report, run_risk_sweep, run_worstcase_search, ExperimentConfig, Format, ModelFamily,
    ParamSource, RiskRecord,
};
use crate::error::{Error, Result};
use crate::infolab::{
    decay_terms, expected_redundancy, latent_info, memory_term, shtarkov_sum, Mode, ShtarkovClass,
    DEFAULT_TRIALS,
};
use crate::marginal::{MarginalAssignment, DEFAULT_BUDGET};
use crate::modelfile::{model_to_json, ModelFile};
use crate::models::{random_hmm, random_renewal, Model};
use crate::predictor::PredictorSpec;
use crate::seeding::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "unipred",
    version,
    about = "Universal next-symbol prediction for hidden Markov and renewal processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Report information quantities in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample paths from a model.
    Simulate(Common),
    /// Next-symbol distribution of a predictor after a sequence.
    Predict(Common),
    /// Risk of predictors over models and horizons.
    RiskSweep(Common),
    /// Search model parameters for the largest risk.
    WorstCase(Common),
    /// Expected redundancy of an assignment.
    Redundancy(InfoArgs),
    /// Memory term, latent information and decay terms.
    Memory(InfoArgs),
    /// Log Shtarkov sums over a range of lengths.
    Shtarkov(InfoArgs),
}

/// A model given by path, inline parameters, or a random draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Random { random: RandomModel },
    Inline(ModelFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RandomModel {
    Hmm { k: usize, l: usize },
    Renewal { support: usize },
}

impl ModelRef {
    pub fn resolve(&self, base: &Path, seed: u64) -> Result<Model> {
        match self {
            ModelRef::Path(p) => crate::modelfile::load_model(&base.join(p)),
            ModelRef::Inline(f) => f.clone().into_model(),
            ModelRef::Random { random } => match *random {
                RandomModel::Hmm { k, l } if k > 0 && l > 0 => {
                    Ok(Model::Hmm(random_hmm(k, l, seed)))
                }
                RandomModel::Renewal { support } if support > 0 => {
                    Ok(Model::Renewal(random_renewal(support, seed)))
                }
                _ => Err(Error::Config(
                    "random model dimensions must be positive".into(),
                )),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: ModelRef,
    n: usize,
    #[serde(default = "one")]
    count: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    predictor: PredictorSpec,
    #[serde(default)]
    model: Option<ModelRef>,
    sequence: Vec<usize>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum AssignmentSpec {
    Marginal {
        k: usize,
        l: usize,
        #[serde(default)]
        budget: Option<u64>,
    },
    Markov {
        l: usize,
        order: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum InfoMode {
    #[default]
    Exact,
    #[serde(alias = "monte-carlo")]
    Montecarlo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RedundancyConfig {
    model: ModelRef,
    assignment: AssignmentSpec,
    m_grid: Vec<usize>,
    #[serde(default)]
    mode: InfoMode,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryConfig {
    model: ModelRef,
    n_grid: Vec<usize>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShtarkovConfig {
    class: ShtarkovClass,
    m_grid: Vec<usize>,
}

fn one() -> usize {
    1
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn format_of(common: &Common) -> Format {
    common
        .format
        .as_deref()
        .map(|f| f.parse().expect("clap restricts the values"))
        .unwrap_or_default()
}

fn write_output(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        }),
    }
}

/// Renders rows of plain values as CSV or as a JSON array of objects.
fn table(header: &[&str], rows: &[Vec<serde_json::Value>], format: Format) -> String {
    match format {
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| (h.to_string(), v.clone()))
                        .collect::<serde_json::Map<_, _>>()
                        .into()
                })
                .collect();
            serde_json::to_string_pretty(&objs).expect("values serialize") + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).expect("in-memory write");
            for r in rows {
                w.write_record(r.iter().map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                }))
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
    }
}

fn resolve_experiment(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_config(&common.config)?;
    let base = base_dir(&common.config);
    match &mut cfg.model_family {
        ModelFamily::Hmm {
            source: ParamSource::File { path },
            ..
        }
        | ModelFamily::Renewal {
            source: ParamSource::File { path },
            ..
        } => *path = base.join(&*path),
        _ => {}
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_target(common: &Common, cfg: &ExperimentConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| {
        cfg.output_path
            .as_ref()
            .map(|p| base_dir(&common.config).join(p))
    })
}

fn all_budget_errors(records: &[RiskRecord]) -> bool {
    !records.is_empty() && records.iter().all(RiskRecord::is_budget_error)
}

fn unit(bits: bool) -> (f64, &'static str) {
    if bits {
        (std::f64::consts::LN_2, "bits")
    } else {
        (1.0, "nats")
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Simulate(c) => {
            let cfg: SimulateConfig = read_config(&c.config)?;
            let seed = c.seed.unwrap_or(cfg.seed);
            let model = cfg.model.resolve(&base_dir(&c.config), seed)?;
            let rows: Vec<Vec<serde_json::Value>> = (0..cfg.count)
                .map(|i| {
                    let x = model.sample(cfg.n, derive_seed(seed, &[i as u64]));
                    let text: Vec<String> = x.iter().map(usize::to_string).collect();
                    vec![json!(i), json!(text.join(" "))]
                })
                .collect();
            write_output(
                &table(&["path", "sequence"], &rows, format_of(c)),
                c.out.as_deref(),
                stdout,
            )?;
        }
        Command::Predict(c) => {
            let cfg: PredictConfig = read_config(&c.config)?;
            let seed = c.seed.unwrap_or(cfg.seed);
            let model = cfg
                .model
                .as_ref()
                .map(|m| m.resolve(&base_dir(&c.config), seed))
                .transpose()?;
            let predictor = cfg.predictor.build(model.as_ref())?;
            let dist = predictor.predict(&cfg.sequence)?;
            let rows: Vec<_> = dist
                .probs()
                .iter()
                .enumerate()
                .map(|(s, p)| vec![json!(s), json!(p)])
                .collect();
            write_output(
                &table(&["symbol", "probability"], &rows, format_of(c)),
                c.out.as_deref(),
                stdout,
            )?;
        }
        Command::RiskSweep(c) => {
            let cfg = resolve_experiment(c)?;
            let records = run_risk_sweep(&cfg)?;
            let text = render_report(&records, format_of(c))?;
            write_output(&text, report_target(c, &cfg).as_deref(), stdout)?;
            if all_budget_errors(&records) {
                return Ok(EXIT_BUDGET);
            }
        }
        Command::WorstCase(c) => {
            let cfg = resolve_experiment(c)?;
            let budget = cfg.search_budget.unwrap_or(20);
            let found = run_worstcase_search(&cfg, budget, &[])?;
            let text = match format_of(c) {
                Format::Csv => render_report(std::slice::from_ref(&found.record), Format::Csv)?,
                Format::Json => {
                    let model: serde_json::Value =
                        serde_json::from_str(&model_to_json(&found.model)).expect("model json");
                    serde_json::to_string_pretty(&json!({
                        "record": found.record,
                        "model": model,
                        "evaluated": found.visited.len(),
                    }))
                    .expect("serializes")
                        + "\n"
                }
            };
            write_output(&text, report_target(c, &cfg).as_deref(), stdout)?;
            if found.record.is_budget_error() {
                return Ok(EXIT_BUDGET);
            }
        }
        Command::Redundancy(a) => {
            let c = &a.common;
            let cfg: RedundancyConfig = read_config(&c.config)?;
            let seed = c.seed.unwrap_or(cfg.seed);
            let params = cfg.model.resolve(&base_dir(&c.config), seed)?.as_hmm();
            let q: Box<dyn Assignment> = match cfg.assignment {
                AssignmentSpec::Marginal { k, l, budget } => Box::new(
                    MarginalAssignment::with_budget(k, l, budget.unwrap_or(DEFAULT_BUDGET)),
                ),
                AssignmentSpec::Markov { l, order } => Box::new(MarkovAssignment::new(order, l)?),
            };
            let (scale, name) = unit(a.bits);
            let mut rows = Vec::new();
            for &m in &cfg.m_grid {
                let mode = match cfg.mode {
                    InfoMode::Exact => Mode::Exact,
                    InfoMode::Montecarlo => Mode::MonteCarlo {
                        trials: cfg.trials,
                        seed: derive_seed(seed, &[m as u64]),
                    },
                };
                let e = expected_redundancy(&params, q.as_ref(), m, mode)?;
                rows.push(vec![
                    json!(m),
                    json!(e.value / scale),
                    json!(e.ci_low / scale),
                    json!(e.ci_high / scale),
                    json!(e.trials),
                    json!(name),
                ]);
            }
            let header = ["m", "redundancy", "ci_low", "ci_high", "trials", "unit"];
            write_output(
                &table(&header, &rows, format_of(c)),
                c.out.as_deref(),
                stdout,
            )?;
        }
        Command::Memory(a) => {
            let c = &a.common;
            let cfg: MemoryConfig = read_config(&c.config)?;
            let seed = c.seed.unwrap_or(cfg.seed);
            let params = cfg.model.resolve(&base_dir(&c.config), seed)?.as_hmm();
            let (scale, name) = unit(a.bits);
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                if n == 0 {
                    return Err(Error::Config("horizons must be positive".into()));
                }
                let mem = memory_term(&params, n)?;
                let latent = latent_info(&params, n + 1)?;
                let (decay_lhs, decay_rhs) = decay_terms(&params, n)?;
                rows.push(vec![
                    json!(n),
                    json!(mem.sum / scale),
                    json!(latent / scale),
                    json!((params.k() as f64).ln() / scale),
                    json!(decay_lhs / scale),
                    json!(decay_rhs / scale),
                    json!(name),
                ]);
            }
            let header = [
                "n",
                "memory_term",
                "latent_info",
                "log_k",
                "decay_lhs",
                "decay_rhs",
                "unit",
            ];
            write_output(
                &table(&header, &rows, format_of(c)),
                c.out.as_deref(),
                stdout,
            )?;
        }
        Command::Shtarkov(a) => {
            let c = &a.common;
            let cfg: ShtarkovConfig = read_config(&c.config)?;
            let (scale, name) = unit(a.bits);
            let rows = cfg
                .m_grid
                .iter()
                .map(|&m| {
                    Ok(vec![
                        json!(m),
                        json!(shtarkov_sum(cfg.class, m)? / scale),
                        json!(name),
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            write_output(
                &table(&["m", "log_shtarkov_sum", "unit"], &rows, format_of(c)),
                c.out.as_deref(),
                stdout,
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        e if e.is_budget() => EXIT_BUDGET,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
