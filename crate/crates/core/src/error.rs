use thiserror::Error;

pub type Result<T, E = ErgError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no steady-state equilibrium for this reference (relative residual {residual:e})")]
    NoEquilibrium { residual: f64 },

    #[error("history segment spans {available} s but {required} s are required")]
    InsufficientSpan { required: f64, available: f64 },

    #[error("history underrun: t = {t} is outside the buffered span [{start}, {end}]")]
    HistoryUnderrun { t: f64, start: f64, end: f64 },

    #[error("prediction horizon {horizon} s is shorter than the delay {tau} s")]
    HorizonTooShort { horizon: f64, tau: f64 },

    #[error("no certificate found within the search budget (best margin {best_margin:e})")]
    Infeasible { best_margin: f64 },

    #[error("reference is not strictly admissible: constraint {row} has steady-state residual {residual}")]
    ReferenceNotStrictlyAdmissible { row: usize, residual: f64 },

    #[error("every constraint row has a zero closed-loop normal; no level-set bound exists")]
    DegenerateConstraint,

    #[error("log-det objective is unbounded: at least one non-degenerate constraint is required")]
    Unbounded,

    #[error("initial dynamic safety margin {delta} is negative")]
    InitialMarginViolated { delta: f64 },

    #[error("system dimension {n} exceeds the certificate search limit of {limit}")]
    TooLarge { n: usize, limit: usize },
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(ErgError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
