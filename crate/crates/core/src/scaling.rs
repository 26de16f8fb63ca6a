//! Unicity as a function of population size.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::FingerprintSet;
use crate::fit::{fit_points, FitForm, FitResult};
use crate::model::Window;
use crate::rng::{self, derive_seed};
use crate::stats;
use crate::unicity::{estimate_unicity, EstimateParams, Population, Strategy};

/// Raw population size represented by one unit of fitted x.
pub const USERS_PER_UNIT: f64 = 1e6;
pub const X_UNIT: &str = "millions of users";

const SUBSAMPLE_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub population_size: usize,
    pub realizations: usize,
}

/// Population sizes to subsample and how many realizations of each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl SubsampleSchedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSchedule("schedule is empty".into()));
        }
        if let Some(e) = entries.iter().find(|e| e.population_size == 0 || e.realizations == 0) {
            return Err(Error::InvalidSchedule(format!(
                "size {} with {} realizations",
                e.population_size, e.realizations
            )));
        }
        Ok(Self { entries })
    }

    /// Uses [`default_realizations`] for each size.
    pub fn with_default_realizations(sizes: &[usize]) -> Result<Self> {
        Self::new(
            sizes
                .iter()
                .map(|&population_size| ScheduleEntry {
                    population_size,
                    realizations: default_realizations(population_size),
                })
                .collect(),
        )
    }
}

/// 20 realizations up to 500k users, 10 below 1M, 5 from 1M on.
pub fn default_realizations(population_size: usize) -> usize {
    match population_size {
        0..=500_000 => 20,
        500_001..=999_999 => 10,
        _ => 5,
    }
}

/// Which population item popularity is counted over when attacking a
/// subsample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularitySource {
    /// The subsample under attack.
    #[default]
    Subsample,
    /// The full dataset the subsamples are drawn from.
    FullDataset,
}

impl std::str::FromStr for PopularitySource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "subsample" => Ok(PopularitySource::Subsample),
            "full" | "full_dataset" | "full-dataset" => Ok(PopularitySource::FullDataset),
            other => Err(format!(
                "unknown popularity source {other:?} (expected subsample or full)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub population_size: usize,
    /// Mean over realizations of each realization's mean unicity.
    pub mean: f64,
    /// Population standard deviation across realizations.
    pub std: f64,
    pub per_realization: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub window: Window,
    pub n_apps: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub s: usize,
    pub sample_size: usize,
    pub popularity_source: PopularitySource,
    pub points: Vec<ScalingPoint>,
}

/// Estimator seed of realization `realization` of schedule entry `entry`.
pub fn realization_seed(seed: u64, entry: usize, realization: usize) -> u64 {
    derive_seed(seed, &[entry as u64, realization as u64])
}

/// Rows of `population` drawn for one realization, ascending.
pub fn subsample_rows(population: usize, size: usize, seed: u64, entry: usize, realization: usize) -> Vec<usize> {
    let mut rng = rng::stream(realization_seed(seed, entry, realization), SUBSAMPLE_STREAM);
    let mut rows = index::sample(&mut rng, population, size).into_vec();
    rows.sort_unstable();
    rows
}

/// Unicity for each scheduled population size.
///
/// Every realization draws a uniform subsample without replacement,
/// rebuilds popularity (per `source`) and the match index inside it, and
/// runs the estimator against the subsample only.
pub fn scaling_curve(
    fingerprints: &FingerprintSet,
    schedule: &SubsampleSchedule,
    params: &EstimateParams,
    source: PopularitySource,
) -> Result<ScalingCurve> {
    let total = fingerprints.len();
    if total == 0 {
        return Err(Error::EmptyPopulation);
    }
    let offending: Vec<usize> = schedule
        .entries
        .iter()
        .map(|e| e.population_size)
        .filter(|&s| s > total)
        .collect();
    if !offending.is_empty() {
        return Err(Error::ScheduleTooLarge {
            offending,
            population: total,
        });
    }
    let full_popularity = match source {
        PopularitySource::FullDataset => Some(fingerprints.popularity()),
        PopularitySource::Subsample => None,
    };

    let mut points = Vec::with_capacity(schedule.entries.len());
    for (entry, e) in schedule.entries.iter().enumerate() {
        let per_realization = (0..e.realizations)
            .into_par_iter()
            .map(|r| {
                let rows = subsample_rows(total, e.population_size, params.seed, entry, r);
                let subset = fingerprints.subset(&rows);
                let population = match &full_popularity {
                    Some(pop) => Population::with_popularity(subset, pop.clone())?,
                    None => Population::new(subset),
                };
                let realization_params = params.with_seed(realization_seed(params.seed, entry, r));
                Ok(estimate_unicity(&population, &realization_params)?.mean)
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(ScalingPoint {
            population_size: e.population_size,
            mean: stats::mean(&per_realization),
            std: stats::population_std(&per_realization),
            per_realization,
        });
    }
    Ok(ScalingCurve {
        window: fingerprints.window(),
        n_apps: params.n_apps,
        strategy: params.strategy,
        seed: params.seed,
        s: params.samples,
        sample_size: params.sample_size,
        popularity_source: source,
        points,
    })
}

/// Fits mean unicity against population size in millions of users.
/// With `weighted`, each point is weighted by 1/std²; zero deviations are
/// replaced by the smallest positive one (all-zero means unweighted).
pub fn fit_scaling(curve: &ScalingCurve, form: FitForm, weighted: bool) -> Result<FitResult> {
    let xs: Vec<f64> = curve
        .points
        .iter()
        .map(|p| p.population_size as f64 / USERS_PER_UNIT)
        .collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| p.mean).collect();
    let weights = weighted.then(|| inverse_variance_weights(curve)).flatten();
    let relabel = |mut fit: FitResult| {
        fit.x_unit = X_UNIT.into();
        fit.x_scale = USERS_PER_UNIT;
        fit
    };
    match fit_points(&xs, &ys, weights.as_deref(), form) {
        Ok(fit) => Ok(relabel(fit)),
        Err(Error::NonConvergence { form, best, residual }) => Err(Error::NonConvergence {
            form,
            best: Box::new(relabel(*best)),
            residual,
        }),
        Err(e) => Err(e),
    }
}

fn inverse_variance_weights(curve: &ScalingCurve) -> Option<Vec<f64>> {
    let floor = curve
        .points
        .iter()
        .map(|p| p.std)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    floor
        .is_finite()
        .then(|| curve.points.iter().map(|p| 1.0 / p.std.max(floor).powi(2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::d0;

    #[test]
    fn default_realization_rule() {
        assert_eq!(default_realizations(100_000), 20);
        assert_eq!(default_realizations(500_000), 20);
        assert_eq!(default_realizations(600_000), 10);
        assert_eq!(default_realizations(900_000), 10);
        assert_eq!(default_realizations(1_000_000), 5);
        assert_eq!(default_realizations(3_500_000), 5);
    }

    #[test]
    fn oversized_schedule_lists_offenders() {
        let t = d0();
        let fps = t.window_fingerprints(t.full_window()).unwrap();
        let schedule = SubsampleSchedule::with_default_realizations(&[2, 5, 9]).unwrap();
        let params = EstimateParams::new(1, Strategy::Random);
        match scaling_curve(&fps, &schedule, &params, PopularitySource::Subsample) {
            Err(Error::ScheduleTooLarge { offending, population }) => {
                assert_eq!(offending, vec![5, 9]);
                assert_eq!(population, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(SubsampleSchedule::new(vec![]).is_err());
        assert!(SubsampleSchedule::new(vec![ScheduleEntry {
            population_size: 3,
            realizations: 0
        }])
        .is_err());
    }

    #[test]
    fn full_size_realization_equals_direct_estimate() {
        let t = d0();
        let fps = t.window_fingerprints(t.full_window()).unwrap();
        let schedule = SubsampleSchedule::new(vec![ScheduleEntry {
            population_size: 4,
            realizations: 1,
        }])
        .unwrap();
        for strategy in Strategy::ALL {
            let params = EstimateParams::new(2, strategy).with_samples(3, 3).with_seed(11);
            let curve = scaling_curve(&fps, &schedule, &params, PopularitySource::Subsample).unwrap();
            let direct = estimate_unicity(
                &Population::new(fps.clone()),
                &params.with_seed(realization_seed(11, 0, 0)),
            )
            .unwrap();
            assert_eq!(curve.points[0].per_realization, vec![direct.mean]);
        }
    }

    #[test]
    fn subsample_rows_are_sorted_and_distinct() {
        let rows = subsample_rows(1000, 100, 5, 2, 3);
        assert_eq!(rows.len(), 100);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(rows, subsample_rows(1000, 100, 5, 2, 3));
        assert_eq!(subsample_rows(10, 10, 1, 0, 0), (0..10).collect::<Vec<_>>());
    }
}
