//! Next-symbol predictors built from probability assignments by averaging
//! their conditionals over every suffix of the observed path.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assignments::{suffix_conditionals_naive, Assignment, MarkovAssignment};
use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};
use crate::marginal::{MarginalAssignment, MarginalTable, DEFAULT_BUDGET};
use crate::models::Model;
use crate::nml::{ShtarkovTable, DEFAULT_NML_CAP};

/// A next-symbol predictor: maps an observed path to a distribution over the
/// next symbol.
pub trait Predictor: Send + Sync {
    fn alphabet(&self) -> usize;

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist>;

    /// Short kind label used in reports.
    fn kind(&self) -> &'static str;
}

/// `(1/n) sum_{t=1..n} Q(. | x_{n-t+1..n})`: the `t`-th term conditions on
/// the last `t` symbols.
pub fn average_predictor<A: Assignment + ?Sized>(a: &A, x: &[usize]) -> Result<PredictiveDist> {
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "averaging needs at least one observation".into(),
        ));
    }
    average(&a.suffix_conditionals(x)?)
}

fn average(conds: &[PredictiveDist]) -> Result<PredictiveDist> {
    PredictiveDist::average(conds).ok_or_else(|| Error::InvalidArgument("no conditionals".into()))
}

/// The averaged predictor of an arbitrary assignment. On an empty path it
/// returns the assignment's first conditional.
#[derive(Debug, Clone)]
pub struct Averaged<A> {
    assignment: A,
}

impl<A: Assignment> Averaged<A> {
    pub fn new(assignment: A) -> Self {
        Self { assignment }
    }

    pub fn assignment(&self) -> &A {
        &self.assignment
    }
}

impl<A: Assignment> Predictor for Averaged<A> {
    fn alphabet(&self) -> usize {
        self.assignment.alphabet()
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        if x.is_empty() {
            return self.assignment.conditional(x);
        }
        average_predictor(&self.assignment, x)
    }

    fn kind(&self) -> &'static str {
        "averaged"
    }
}

/// Averaged marginal of the joint add-one HMM assignment. An optional
/// precomputed table of marginals serves short inputs by lookup.
#[derive(Debug, Clone)]
pub struct OptimalHmmPredictor {
    assignment: MarginalAssignment,
    table: Option<Arc<MarginalTable>>,
}

impl OptimalHmmPredictor {
    pub fn new(k: usize, l: usize) -> Self {
        Self::with_budget(k, l, DEFAULT_BUDGET)
    }

    pub fn with_budget(k: usize, l: usize, budget: u64) -> Self {
        Self {
            assignment: MarginalAssignment::with_budget(k, l, budget),
            table: None,
        }
    }

    /// Uses `table` for every input shorter than its horizon.
    pub fn with_table(mut self, table: Arc<MarginalTable>) -> Result<Self> {
        if table.k() != self.assignment.k() || table.l() != self.assignment.l() {
            return Err(Error::Shape("marginal table dimensions differ".into()));
        }
        self.table = Some(table);
        Ok(self)
    }

    pub fn assignment(&self) -> &MarginalAssignment {
        &self.assignment
    }
}

impl Predictor for OptimalHmmPredictor {
    fn alphabet(&self) -> usize {
        self.assignment.l()
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        if x.is_empty() {
            return Ok(PredictiveDist::uniform(self.assignment.l()));
        }
        match &self.table {
            Some(table) if x.len() < table.max_len() => {
                average(&suffix_conditionals_naive(table.as_ref(), x)?)
            }
            _ => average_predictor(&self.assignment, x),
        }
    }

    fn kind(&self) -> &'static str {
        "optimal-hmm"
    }
}

/// Markov order: fixed or chosen from the path length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    #[default]
    Auto,
    Fixed(usize),
}

impl Order {
    /// The largest `d >= 1` with `l^(2d) <= n`, i.e. `floor(ln n / (2 ln l))`
    /// floored at one, or the fixed order.
    pub fn resolve(self, n: usize, l: usize) -> usize {
        match self {
            Order::Fixed(d) => d,
            Order::Auto => {
                let mut d = 0usize;
                let mut pow = 1u128;
                let l2 = (l as u128).saturating_mul(l as u128);
                if l2 <= 1 {
                    return 1;
                }
                loop {
                    pow = pow.saturating_mul(l2);
                    if pow > n as u128 {
                        break;
                    }
                    d += 1;
                }
                d.max(1)
            }
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Auto => f.write_str("auto"),
            Order::Fixed(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Auto => s.serialize_str("auto"),
            Order::Fixed(d) => s.serialize_u64(*d as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Order::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(Order::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "order must be a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

/// Averaged order-`d` add-one Markov assignment.
#[derive(Debug, Clone, Copy)]
pub struct MarkovApproxPredictor {
    l: usize,
    order: Order,
}

impl MarkovApproxPredictor {
    pub fn new(l: usize, order: Order) -> Result<Self> {
        if l == 0 || (order == Order::Auto && l < 2) {
            return Err(Error::InvalidArgument(
                "automatic order needs an alphabet of at least two symbols".into(),
            ));
        }
        Ok(Self { l, order })
    }

    pub fn order_for(&self, n: usize) -> usize {
        self.order.resolve(n, self.l)
    }
}

impl Predictor for MarkovApproxPredictor {
    fn alphabet(&self) -> usize {
        self.l
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        check_symbols(x, self.l)?;
        if x.is_empty() {
            return Ok(PredictiveDist::uniform(self.l));
        }
        let a = MarkovAssignment::new(self.order_for(x.len()), self.l)?;
        average_predictor(&a, x)
    }

    fn kind(&self) -> &'static str {
        "markov-approx"
    }
}

/// Plug-in renewal hazard with the interarrival law replaced by an add-one
/// smoothed empirical law over the completed gaps.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalHazardPredictor {
    floor_exp: f64,
}

impl EmpiricalHazardPredictor {
    pub fn new(floor_exp: f64) -> Result<Self> {
        if !(floor_exp > 0.0 && floor_exp.is_finite()) {
            return Err(Error::InvalidArgument(
                "floor exponent must be positive".into(),
            ));
        }
        Ok(Self { floor_exp })
    }

    /// Probability assigned to a renewal when the estimate is unusable; at
    /// most one half so the prediction never rules out either symbol.
    pub fn floor(&self, n: usize) -> f64 {
        (n as f64).powf(-self.floor_exp).min(0.5)
    }
}

impl Default for EmpiricalHazardPredictor {
    fn default() -> Self {
        Self { floor_exp: 1.0 }
    }
}

impl Predictor for EmpiricalHazardPredictor {
    fn alphabet(&self) -> usize {
        2
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        check_symbols(x, 2)?;
        let n = x.len();
        if n == 0 {
            return Ok(PredictiveDist::uniform(2));
        }
        let floor = self.floor(n);
        let ones: Vec<usize> = (0..n).filter(|&i| x[i] == 1).collect();
        if ones.len() < 2 {
            return Ok(PredictiveDist::bernoulli(floor));
        }
        let tau = n - 1 - ones[ones.len() - 1];
        let gaps: Vec<usize> = ones.windows(2).map(|w| w[1] - w[0]).collect();
        let max_gap = *gaps.iter().max().expect("two renewals give a gap");
        // add-one over {1..G}; G exceeds both tau + 1 and every observed gap
        let top = max_gap.max(tau + 1) + 1;
        let mut weights = vec![1.0; top];
        for g in gaps {
            weights[g - 1] += 1.0;
        }
        let total: f64 = weights.iter().sum();
        let survive: f64 = weights[tau..].iter().sum::<f64>() / total;
        if survive < floor {
            return Ok(PredictiveDist::bernoulli(floor));
        }
        Ok(PredictiveDist::bernoulli(weights[tau] / (survive * total)))
    }

    fn kind(&self) -> &'static str {
        "renewal-empirical-hazard"
    }
}

/// Averaged conditionals of the Shtarkov (normalized maximum likelihood)
/// assignment over stationary renewal laws on `{1..S}`.
#[derive(Debug)]
pub struct RenewalNmlPredictor {
    support: usize,
    cap: usize,
    tables: Mutex<HashMap<usize, Arc<ShtarkovTable>>>,
}

impl RenewalNmlPredictor {
    pub fn new(support: usize) -> Result<Self> {
        Self::with_cap(support, DEFAULT_NML_CAP)
    }

    pub fn with_cap(support: usize, cap: usize) -> Result<Self> {
        if support == 0 {
            return Err(Error::InvalidArgument(
                "support bound must be positive".into(),
            ));
        }
        Ok(Self {
            support,
            cap,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn support(&self) -> usize {
        self.support
    }

    /// The Shtarkov table over paths of length `horizon`, built once.
    pub fn table(&self, horizon: usize) -> Result<Arc<ShtarkovTable>> {
        let mut tables = self.tables.lock().expect("table cache poisoned");
        if let Some(t) = tables.get(&horizon) {
            return Ok(t.clone());
        }
        let t = Arc::new(ShtarkovTable::with_cap(
            horizon,
            self.support,
            self.cap + 1,
        )?);
        tables.insert(horizon, t.clone());
        Ok(t)
    }
}

impl Predictor for RenewalNmlPredictor {
    fn alphabet(&self) -> usize {
        2
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        check_symbols(x, 2)?;
        let n = x.len();
        if n > self.cap {
            return Err(Error::CapExceeded {
                required: n as f64,
                cap: self.cap as f64,
            });
        }
        if self.support > n + 2 {
            return Err(Error::InvalidArgument(format!(
                "support bound {} exceeds n + 2 = {}",
                self.support,
                n + 2
            )));
        }
        let table = self.table(n + 1)?;
        if n == 0 {
            return table.conditional(&[]);
        }
        let conds = (1..=n)
            .map(|t| table.conditional(&x[n - t..]))
            .collect::<Result<Vec<_>>>()?;
        average(&conds)
    }

    fn kind(&self) -> &'static str {
        "renewal-nml"
    }
}

/// The true conditional of a known model.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    model: Model,
}

impl OraclePredictor {
    pub fn new(model: Model) -> Self {
        Self { model }
    }
}

impl Predictor for OraclePredictor {
    fn alphabet(&self) -> usize {
        self.model.alphabet()
    }

    fn predict(&self, x: &[usize]) -> Result<PredictiveDist> {
        self.model.oracle(x)
    }

    fn kind(&self) -> &'static str {
        "oracle"
    }
}

fn default_floor_exp() -> f64 {
    1.0
}

fn default_nml_cap() -> usize {
    DEFAULT_NML_CAP
}

/// Serializable predictor configuration, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PredictorSpec {
    OptimalHmm {
        k: usize,
        l: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u64>,
    },
    MarkovApprox {
        l: usize,
        #[serde(default)]
        d: Order,
    },
    RenewalEmpiricalHazard {
        #[serde(default = "default_floor_exp")]
        floor_exp: f64,
    },
    RenewalNml {
        support: usize,
        #[serde(default = "default_nml_cap")]
        cap: usize,
    },
    Oracle,
}

impl PredictorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PredictorSpec::OptimalHmm { .. } => "optimal-hmm",
            PredictorSpec::MarkovApprox { .. } => "markov-approx",
            PredictorSpec::RenewalEmpiricalHazard { .. } => "renewal-empirical-hazard",
            PredictorSpec::RenewalNml { .. } => "renewal-nml",
            PredictorSpec::Oracle => "oracle",
        }
    }

    /// Checks parameter ranges without building anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.kind())));
        match *self {
            PredictorSpec::OptimalHmm { k, l, budget } => {
                if k == 0 || l == 0 {
                    return bad("k and l must be positive");
                }
                if budget == Some(0) {
                    return bad("budget must be positive");
                }
            }
            PredictorSpec::MarkovApprox { l, d } => {
                if l == 0 || (d == Order::Auto && l < 2) {
                    return bad("l must be at least 2 with automatic order");
                }
            }
            PredictorSpec::RenewalEmpiricalHazard { floor_exp } => {
                if !(floor_exp > 0.0 && floor_exp.is_finite()) {
                    return bad("floor_exp must be positive");
                }
            }
            PredictorSpec::RenewalNml { support, .. } => {
                if support == 0 {
                    return bad("support must be positive");
                }
            }
            PredictorSpec::Oracle => {}
        }
        Ok(())
    }

    /// Builds the predictor; the oracle needs the data-generating model.
    pub fn build(&self, model: Option<&Model>) -> Result<Box<dyn Predictor>> {
        self.validate()?;
        Ok(match *self {
            PredictorSpec::OptimalHmm { k, l, budget } => Box::new(
                OptimalHmmPredictor::with_budget(k, l, budget.unwrap_or(DEFAULT_BUDGET)),
            ),
            PredictorSpec::MarkovApprox { l, d } => Box::new(MarkovApproxPredictor::new(l, d)?),
            PredictorSpec::RenewalEmpiricalHazard { floor_exp } => {
                Box::new(EmpiricalHazardPredictor::new(floor_exp)?)
            }
            PredictorSpec::RenewalNml { support, cap } => {
                Box::new(RenewalNmlPredictor::with_cap(support, cap)?)
            }
            PredictorSpec::Oracle => {
                let model = model
                    .ok_or_else(|| Error::Config("the oracle predictor needs a model".into()))?;
                Box::new(OraclePredictor::new(model.clone()))
            }
        })
    }
}
