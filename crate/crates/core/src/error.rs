use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {row} of the {matrix} matrix is not a probability vector (sum = {sum})")]
    NonStochastic {
        matrix: &'static str,
        row: usize,
        sum: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("symbol {symbol} at position {position} is outside the alphabet of size {alphabet}")]
    SymbolOutOfRange {
        symbol: usize,
        position: usize,
        alphabet: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("the observed sequence has probability zero under the model")]
    ImpossibleSequence,

    #[error("hazard undefined: no interarrival mass beyond {tau}")]
    HazardUndefined { tau: usize },

    #[error(
        "count budget exceeded: estimated {estimate:.3e} memo entries > budget {budget}{}",
        largest_feasible.map(|n| format!(" (largest feasible length {n})")).unwrap_or_default()
    )]
    BudgetExceeded {
        estimate: f64,
        budget: u64,
        largest_feasible: Option<usize>,
    },

    #[error("enumeration cap exceeded: {required:.3e} table entries > cap {cap:.3e}")]
    CapExceeded { required: f64, cap: f64 },

    #[error("support violation: reference mass is positive where the approximation is zero")]
    SupportViolation,

    #[error("inconsistent count totals: sum of emission counts {emissions} != 1 + sum of transition counts {transitions}")]
    InconsistentCounts { emissions: u64, transitions: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. } | Error::CapExceeded { .. }
        )
    }
}

pub(crate) fn check_symbols(x: &[usize], alphabet: usize) -> Result<()> {
    match x.iter().position(|&s| s >= alphabet) {
        Some(position) => Err(Error::SymbolOutOfRange {
            symbol: x[position],
            position,
            alphabet,
        }),
        None => Ok(()),
    }
}
