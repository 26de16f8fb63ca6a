use thiserror::Error;

use crate::fit::{FitForm, FitResult};
use crate::model::{UserId, Window};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("invalid window {window}: dataset has {periods} period(s)")]
    InvalidWindow { window: Window, periods: u32 },

    #[error("user {user} has no items in window {window}")]
    UserNotInWindow { user: UserId, window: Window },

    #[error("fingerprint of user {user} is empty")]
    EmptyFingerprint { user: UserId },

    #[error("quasi-identifier is empty")]
    EmptyQuery,

    #[error("popularity table has no entry for item {item}")]
    MissingPopularity { item: u64 },

    #[error("popularity table was computed over a different catalog")]
    CatalogMismatch,

    #[error("population is empty")]
    EmptyPopulation,

    #[error("need at least {needed} periods, dataset has {found}")]
    NotEnoughPeriods { needed: u32, found: u32 },

    #[error("period {period} has no items")]
    EmptyPeriod { period: u32 },

    #[error("schedule sizes {offending:?} exceed the population of {population}")]
    ScheduleTooLarge { offending: Vec<usize>, population: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("{form} fit needs at least {needed} distinct x values, got {found}")]
    InsufficientPoints { form: FitForm, needed: usize, found: usize },

    #[error("{form} fit requires strictly positive x values")]
    NonPositiveX { form: FitForm },

    #[error("{form} fit did not converge (residual sum of squares {residual:e})")]
    NonConvergence {
        form: FitForm,
        best: Box<FitResult>,
        residual: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("need {needed} unused item ids, catalog has {available}")]
    InsufficientFreshIds { needed: usize, available: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical routines rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}
