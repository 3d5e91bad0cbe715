//! Experiment harness: risk sweeps over model families and horizons,
//! worst-case search over model parameters, and CSV/JSON reports.
//!
//! Every random draw uses a seed derived from the master seed and the
//! position of the draw in the grid, and all reductions run in a fixed
//! order, so output does not depend on the thread count.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infolab::{exact_prediction_risk, kl_divergence, Estimate, DEFAULT_LAW_CAP};
use crate::marginal::{MarginalTable, DEFAULT_BUDGET};
use crate::modelfile::load_model;
use crate::models::{random_hmm, random_renewal, HmmParams, Model, RenewalLaw};
use crate::predictor::{OptimalHmmPredictor, Predictor, PredictorSpec};
use crate::seeding::derive_seed;

/// Exact optimal-predictor risks use a precomputed marginal table when it
/// has at most this many entries.
const TABLE_ENTRY_CAP: f64 = 1e6;

/// Where model parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParamSource {
    File { path: PathBuf },
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelFamily {
    Hmm {
        k: usize,
        l: usize,
        source: ParamSource,
    },
    Renewal {
        support: usize,
        source: ParamSource,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Exact,
    #[default]
    #[serde(alias = "monte-carlo")]
    Montecarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_family: ModelFamily,
    pub predictors: Vec<PredictorSpec>,
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub mode: RunMode,
    /// Worker threads; the global pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Model evaluations for the worst-case search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Hidden-state count and alphabet of the family's HMM view.
    pub fn dims(&self) -> (usize, usize) {
        match self.model_family {
            ModelFamily::Hmm { k, l, .. } => (k, l),
            ModelFamily::Renewal { support, .. } => (support, 2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_grid.is_empty() {
            return bad("n_grid must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly ascending".into());
        }
        if self.n_grid[0] == 0 {
            return bad("horizons must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.predictors.is_empty() {
            return bad("at least one predictor is required".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if self.search_budget == Some(0) {
            return bad("search_budget must be positive".into());
        }
        let (k, l) = self.dims();
        if k == 0 || l == 0 {
            return bad("model dimensions must be positive".into());
        }
        if let ModelFamily::Hmm {
            source: ParamSource::Random { count: 0, .. },
            ..
        }
        | ModelFamily::Renewal {
            source: ParamSource::Random { count: 0, .. },
            ..
        } = self.model_family
        {
            return bad("random model count must be positive".into());
        }
        for p in &self.predictors {
            p.validate()?;
            let alphabet = match *p {
                PredictorSpec::OptimalHmm { l, .. } | PredictorSpec::MarkovApprox { l, .. } => l,
                PredictorSpec::RenewalEmpiricalHazard { .. } | PredictorSpec::RenewalNml { .. } => {
                    2
                }
                PredictorSpec::Oracle => l,
            };
            if alphabet != l {
                return bad(format!(
                    "predictor {} uses an alphabet of {alphabet}, the models use {l}",
                    p.kind()
                ));
            }
        }
        if self.mode == RunMode::Exact {
            let n = *self.n_grid.last().expect("nonempty");
            let required = (l as f64).powi(n as i32 + 1) * k as f64;
            if required > DEFAULT_LAW_CAP {
                return bad(format!(
                    "exact mode at n = {n} needs {required:.3e} table entries (cap {DEFAULT_LAW_CAP:.0e})"
                ));
            }
        }
        Ok(())
    }

    /// The models of the family with their report identifiers.
    pub fn models(&self) -> Result<Vec<(String, Model)>> {
        match &self.model_family {
            ModelFamily::Hmm { k, l, source } => match source {
                ParamSource::File { path } => {
                    let model = load_model(path)?;
                    match &model {
                        Model::Hmm(p) if p.k() == *k && p.l() == *l => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "{} is not a {k}-state HMM over {l} symbols",
                                path.display()
                            )))
                        }
                    }
                    Ok(vec![(file_id(path), model)])
                }
                ParamSource::Random { count, seed } => Ok((0..*count)
                    .map(|i| {
                        let p = random_hmm(*k, *l, derive_seed(*seed, &[i as u64]));
                        (format!("hmm-{i}"), Model::Hmm(p))
                    })
                    .collect()),
            },
            ModelFamily::Renewal { support, source } => match source {
                ParamSource::File { path } => {
                    let model = load_model(path)?;
                    match &model {
                        Model::Renewal(law) if law.support() <= *support => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "{} is not a renewal law with support at most {support}",
                                path.display()
                            )))
                        }
                    }
                    Ok(vec![(file_id(path), model)])
                }
                ParamSource::Random { count, seed } => Ok((0..*count)
                    .map(|i| {
                        let law = random_renewal(*support, derive_seed(*seed, &[i as u64]));
                        (format!("renewal-{i}"), Model::Renewal(law))
                    })
                    .collect()),
            },
        }
    }
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

/// One (model, predictor, horizon) cell of a sweep. Numeric fields are
/// absent when the cell failed; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub model_id: String,
    pub predictor: String,
    pub n: usize,
    pub risk_nats: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Monte Carlo paths; zero for exact enumeration.
    pub trials: usize,
    pub wall_ms: f64,
    pub n_times_risk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_error: Option<bool>,
}

impl RiskRecord {
    fn success(model_id: &str, predictor: &str, n: usize, est: Estimate, wall_ms: f64) -> Self {
        Self {
            model_id: model_id.into(),
            predictor: predictor.into(),
            n,
            risk_nats: Some(est.value),
            ci_low: Some(est.ci_low),
            ci_high: Some(est.ci_high),
            trials: est.trials,
            wall_ms,
            n_times_risk: Some(n as f64 * est.value),
            error: None,
            budget_error: None,
        }
    }

    fn failure(
        model_id: &str,
        predictor: &str,
        n: usize,
        trials: usize,
        err: &Error,
        wall_ms: f64,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            predictor: predictor.into(),
            n,
            risk_nats: None,
            ci_low: None,
            ci_high: None,
            trials,
            wall_ms,
            n_times_risk: None,
            error: Some(err.to_string()),
            budget_error: Some(err.is_budget()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn is_budget_error(&self) -> bool {
        self.budget_error == Some(true)
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Shares exact marginal tables between cells of a sweep.
#[derive(Default)]
struct TableCache {
    tables: Mutex<HashMap<(usize, usize, usize), Arc<MarginalTable>>>,
}

impl TableCache {
    fn get(&self, k: usize, l: usize, len: usize, budget: u64) -> Option<Arc<MarginalTable>> {
        let entries: f64 = (0..=len).map(|t| (l as f64).powi(t as i32)).sum();
        if entries > TABLE_ENTRY_CAP {
            return None;
        }
        let mut tables = self.tables.lock().expect("table cache poisoned");
        if let Some(t) = tables.get(&(k, l, len)) {
            return Some(t.clone());
        }
        let table = Arc::new(MarginalTable::build(k, l, len, budget, TABLE_ENTRY_CAP).ok()?);
        tables.insert((k, l, len), table.clone());
        Some(table)
    }
}

fn build_predictor(
    spec: &PredictorSpec,
    model: &Model,
    n: usize,
    mode: RunMode,
    cache: &TableCache,
) -> Result<Box<dyn Predictor>> {
    if let (PredictorSpec::OptimalHmm { k, l, budget }, RunMode::Exact) = (spec, mode) {
        let budget = budget.unwrap_or(DEFAULT_BUDGET);
        let p = OptimalHmmPredictor::with_budget(*k, *l, budget);
        return Ok(match cache.get(*k, *l, n + 1, budget) {
            Some(table) => Box::new(p.with_table(table)?),
            None => Box::new(p),
        });
    }
    spec.build(Some(model))
}

/// Risk of one predictor on one model at horizon `n`.
fn evaluate(
    model: &Model,
    model_index: usize,
    predictor: &dyn Predictor,
    n: usize,
    mode: RunMode,
    trials: usize,
    master_seed: u64,
) -> Result<Estimate> {
    match mode {
        RunMode::Exact => {
            let params: HmmParams = model.as_hmm();
            Ok(Estimate::exact(exact_prediction_risk(
                &params, predictor, n,
            )?))
        }
        RunMode::Montecarlo => {
            let samples = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let seed =
                        derive_seed(master_seed, &[model_index as u64, n as u64, trial as u64]);
                    let x = model.sample(n, seed);
                    let oracle = model.oracle(&x)?;
                    let pred = predictor.predict(&x)?;
                    kl_divergence(oracle.probs(), pred.probs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Estimate::from_samples(&samples))
        }
    }
}

/// Runs every (model, predictor, n) cell. Cell failures are recorded, not
/// raised; only configuration problems abort.
pub fn run_risk_sweep(config: &ExperimentConfig) -> Result<Vec<RiskRecord>> {
    config.validate()?;
    let models = config.models()?;
    let cells: Vec<(usize, usize, usize)> = (0..models.len())
        .flat_map(|m| {
            (0..config.predictors.len())
                .flat_map(move |p| config.n_grid.iter().map(move |&n| (m, p, n)))
        })
        .collect();
    let cache = TableCache::default();
    with_pool(config.threads, || {
        cells
            .par_iter()
            .map(|&(m, p, n)| {
                let (id, model) = &models[m];
                let spec = &config.predictors[p];
                let start = Instant::now();
                let outcome =
                    build_predictor(spec, model, n, config.mode, &cache).and_then(|pred| {
                        evaluate(
                            model,
                            m,
                            pred.as_ref(),
                            n,
                            config.mode,
                            config.trials,
                            config.master_seed,
                        )
                    });
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let trials = match config.mode {
                    RunMode::Exact => 0,
                    RunMode::Montecarlo => config.trials,
                };
                match outcome {
                    Ok(est) => RiskRecord::success(id, spec.kind(), n, est, wall_ms),
                    Err(e) => RiskRecord::failure(id, spec.kind(), n, trials, &e, wall_ms),
                }
            })
            .collect()
    })
}

/// Result of a worst-case search.
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub record: RiskRecord,
    pub model: Model,
    /// Risk of every successfully evaluated model, in visiting order.
    pub visited: Vec<f64>,
}

fn perturb_rows(rows: &mut [Vec<f64>], rng: &mut ChaCha8Rng, delta: f64) {
    let r = rng.random_range(0..rows.len());
    let row = &mut rows[r];
    if row.len() < 2 {
        return;
    }
    let a = rng.random_range(0..row.len());
    let mut b = rng.random_range(0..row.len() - 1);
    if b >= a {
        b += 1;
    }
    // moving mass between two coordinates keeps the row on the simplex
    let d = delta.min(row[a]);
    row[a] -= d;
    row[b] = (row[b] + d).min(1.0);
}

fn perturb(model: &Model, rng: &mut ChaCha8Rng, delta: f64) -> Option<Model> {
    match model {
        Model::Hmm(p) => {
            let mut trans = p.trans_rows();
            let mut emit = p.emit_rows();
            if rng.random_bool(0.5) {
                perturb_rows(&mut trans, rng, delta);
            } else {
                perturb_rows(&mut emit, rng, delta);
            }
            HmmParams::new(&trans, &emit).ok().map(Model::Hmm)
        }
        Model::Renewal(law) => {
            let mut mu = vec![law.mu_vec().to_vec()];
            perturb_rows(&mut mu, rng, delta);
            RenewalLaw::new(&mu[0]).ok().map(Model::Renewal)
        }
    }
}

fn pad_renewal(model: Model, support: usize) -> Model {
    match model {
        Model::Renewal(law) if law.support() < support => {
            let mut mu = law.mu_vec().to_vec();
            mu.resize(support, 0.0);
            // keep a padded vector so perturbations can reach every atom
            Model::Renewal(RenewalLaw::new(&mu).unwrap_or(law))
        }
        other => other,
    }
}

/// Maximizes the estimated risk of the first predictor at the largest
/// horizon over model parameters: the given starting models, then random
/// restarts each followed by mass-transfer hill climbing. `budget` counts
/// model evaluations. The result is the largest risk found, not a minimax
/// value.
pub fn run_worstcase_search(
    config: &ExperimentConfig,
    budget: usize,
    starts: &[Model],
) -> Result<WorstCase> {
    config.validate()?;
    if budget == 0 {
        return Err(Error::Config("search budget must be positive".into()));
    }
    let spec = &config.predictors[0];
    let n = *config.n_grid.last().expect("validated");
    let cache = TableCache::default();
    let (k, l) = config.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, &[0x5ea7c4]));
    let random_model = |rng: &mut ChaCha8Rng| -> Model {
        let seed = rng.random::<u64>();
        match config.model_family {
            ModelFamily::Hmm { .. } => Model::Hmm(random_hmm(k, l, seed)),
            ModelFamily::Renewal { support, .. } => {
                pad_renewal(Model::Renewal(random_renewal(support, seed)), support)
            }
        }
    };
    let score = |model: &Model| -> (Result<Estimate>, f64) {
        let start = Instant::now();
        let est = with_pool(config.threads, || {
            build_predictor(spec, model, n, config.mode, &cache).and_then(|p| {
                evaluate(
                    model,
                    0,
                    p.as_ref(),
                    n,
                    config.mode,
                    config.trials,
                    config.master_seed,
                )
            })
        })
        .and_then(|r| r);
        (est, start.elapsed().as_secs_f64() * 1e3)
    };

    let mut visited = Vec::new();
    let mut best: Option<(Estimate, Model, f64, String)> = None;
    let mut last_error: Option<Error> = None;
    let mut used = 0usize;
    let mut consider = |model: Model,
                        id: String,
                        used: &mut usize,
                        best: &mut Option<(Estimate, Model, f64, String)>|
     -> Option<f64> {
        *used += 1;
        let (est, ms) = score(&model);
        match est {
            Ok(e) => {
                visited.push(e.value);
                if best.as_ref().is_none_or(|b| e.value > b.0.value) {
                    *best = Some((e, model, ms, id));
                }
                Some(e.value)
            }
            Err(err) => {
                last_error = Some(err);
                None
            }
        }
    };

    for (i, m) in starts.iter().enumerate() {
        if used >= budget {
            break;
        }
        consider(m.clone(), format!("start-{i}"), &mut used, &mut best);
    }
    let remaining = budget.saturating_sub(used);
    let restarts = (remaining / 10).max(1).min(remaining);
    for r in 0..restarts {
        let share = remaining / restarts + usize::from(r < remaining % restarts);
        let mut current = random_model(&mut rng);
        let mut current_value = match consider(
            current.clone(),
            format!("search-{r}-0"),
            &mut used,
            &mut best,
        ) {
            Some(v) => v,
            None => continue,
        };
        let mut delta = 0.1;
        let (mut step, mut attempts) = (1, 0);
        while step < share && attempts < 10 * share {
            attempts += 1;
            let Some(cand) = perturb(&current, &mut rng, delta) else {
                continue;
            };
            step += 1;
            match consider(
                cand.clone(),
                format!("search-{r}-{step}"),
                &mut used,
                &mut best,
            ) {
                Some(v) if v > current_value => {
                    current = cand;
                    current_value = v;
                }
                _ => delta = (delta * 0.7).max(1e-4),
            }
        }
    }

    match best {
        Some((est, model, ms, id)) => Ok(WorstCase {
            record: RiskRecord::success(&id, spec.kind(), n, est, ms),
            model,
            visited,
        }),
        None => {
            let err = last_error.unwrap_or_else(|| Error::Config("no model evaluated".into()));
            let trials = if config.mode == RunMode::Exact {
                0
            } else {
                config.trials
            };
            Ok(WorstCase {
                record: RiskRecord::failure("search", spec.kind(), n, trials, &err, 0.0),
                model: random_model(&mut rng),
                visited,
            })
        }
    }
}

/// Column order of the CSV report.
pub const CSV_HEADER: [&str; 9] = [
    "model_id",
    "predictor",
    "n",
    "risk_nats",
    "ci_low",
    "ci_high",
    "trials",
    "wall_ms",
    "n_times_risk",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders records; refuses an empty record list.
pub fn render_report(records: &[RiskRecord], format: Format) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to report".into()));
    }
    match format {
        Format::Json => {
            Ok(serde_json::to_string_pretty(records).expect("records serialize") + "\n")
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Io {
                path: "<csv>".into(),
                message: e.to_string(),
            };
            w.write_record(CSV_HEADER).map_err(io)?;
            for r in records {
                w.write_record([
                    r.model_id.clone(),
                    r.predictor.clone(),
                    r.n.to_string(),
                    opt(r.risk_nats),
                    opt(r.ci_low),
                    opt(r.ci_high),
                    r.trials.to_string(),
                    format!("{:.3}", r.wall_ms),
                    opt(r.n_times_risk),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io {
                path: "<csv>".into(),
                message: e.to_string(),
            })?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

/// Writes the report to `path`; nothing is written for an empty list.
pub fn emit_report(records: &[RiskRecord], format: Format, path: &Path) -> Result<()> {
    let text = render_report(records, format)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses a JSON report back into records.
pub fn parse_json_report(text: &str) -> Result<Vec<RiskRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}
