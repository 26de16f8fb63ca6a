//! Re-identification risk of sparse binary fingerprint datasets.
//!
//! A dataset is a binary user × item × period tensor. For a window of
//! periods, each user's fingerprint is the union of their per-period item
//! sets. An attacker who knows `n` items of a user's fingerprint singles
//! them out when nobody else in the population has all `n` items; unicity
//! is the fraction of users singled out this way.
//!
//! The crate covers building the tensor ([`model`], [`io`]), the match
//! index and estimator ([`index`], [`unicity`]), per-period analyses
//! ([`temporal`]), population-size scaling and extrapolation fits
//! ([`scaling`], [`fit`]) and a synthetic data generator ([`synth`]).

mod csr;
pub mod error;
pub mod fingerprint;
pub mod fit;
pub mod index;
pub mod io;
pub mod model;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod synth;
pub mod temporal;
pub mod unicity;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use fingerprint::{FingerprintSet, PopularityTable};
pub use fit::{extrapolate, fit_points, Extrapolation, FitForm, FitResult};
pub use index::MatchIndex;
pub use model::{
    build_tensor, BuildOptions, BuildReport, Event, Fingerprint, FingerprintTensor, ItemId, PeriodIndex, UserId, Window,
};
pub use rng::DEFAULT_SEED;
pub use scaling::{
    fit_scaling, scaling_curve, PopularitySource, ScalingCurve, ScalingPoint, ScheduleEntry, SubsampleSchedule,
};
pub use synth::{generate, plant_unique_users, GeneratorConfig, GroundTruth, PlantOptions, Planted};
pub use unicity::{
    estimate_unicity, estimate_unicity_for, select_quasi_identifier, EstimateParams, Population, QuasiIdentifier,
    Strategy, UnicityEstimate,
};
