//! Per-period analyses: seasonal unicity curves, fingerprint drift, usage
//! statistics, popularity distribution and category mix.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::PopularityTable;
use crate::model::{FingerprintTensor, ItemId, Window};
use crate::stats;
use crate::unicity::{estimate_unicity, EstimateParams, Population, Strategy};

/// Label for items missing from a category map.
pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalPoint {
    pub period: u32,
    pub users: usize,
    /// Distinct items with at least one user in the period, |A|_t.
    pub items: usize,
    /// Raw unicity u(t).
    pub unicity: f64,
    pub std: f64,
    /// u(t) / (|A|_t / |A|_0).
    pub rescaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalCurve {
    pub strategy: Strategy,
    pub n_apps: usize,
    pub points: Vec<SeasonalPoint>,
}

/// Unicity rescaled by the relative item-set size of its period.
pub fn rescale(unicity: f64, items: usize, baseline_items: usize) -> f64 {
    unicity / (items as f64 / baseline_items as f64)
}

/// Runs the estimator on every single-period window.
///
/// Popularity is taken per period unless `popularity_window` names a fixed
/// window to rank items by.
pub fn seasonal_unicity(
    tensor: &FingerprintTensor,
    params: &EstimateParams,
    popularity_window: Option<Window>,
) -> Result<SeasonalCurve> {
    let periods = tensor.num_periods();
    if periods < 2 {
        return Err(Error::NotEnoughPeriods {
            needed: 2,
            found: periods,
        });
    }
    let shared_popularity: Option<PopularityTable> = popularity_window.map(|w| tensor.popularity(w)).transpose()?;
    let baseline = tensor.items_in_period(0);
    if baseline == 0 {
        return Err(Error::EmptyPeriod { period: 0 });
    }
    let mut points = Vec::with_capacity(periods as usize);
    for t in 0..periods {
        let fps = tensor.window_fingerprints(Window::single(t))?;
        let population = match &shared_popularity {
            Some(pop) => Population::with_popularity(fps, pop.clone())?,
            None => Population::new(fps),
        };
        let est = estimate_unicity(&population, params)?;
        let items = tensor.items_in_period(t);
        points.push(SeasonalPoint {
            period: t,
            users: population.len(),
            items,
            unicity: est.mean,
            std: est.std,
            rescaled: rescale(est.mean, items, baseline),
        });
    }
    Ok(SeasonalCurve {
        strategy: params.strategy,
        n_apps: params.n_apps,
        points,
    })
}

/// 1 − |a ∩ b| / |a ∪ b| for sorted, duplicate-free sets. Two empty sets
/// are at distance 0.
pub fn jaccard_distance<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        1.0 - common as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Period t against period t − 1.
    Consecutive,
    /// Period t against period 0.
    FromBaseline,
}

impl std::str::FromStr for DriftMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "consecutive" => Ok(DriftMode::Consecutive),
            "baseline" | "from_baseline" | "from-baseline" => Ok(DriftMode::FromBaseline),
            other => Err(format!(
                "unknown drift mode {other:?} (expected consecutive or baseline)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl DistanceSummary {
    fn of(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Self {
            mean: stats::mean(&values),
            min: values[0],
            q1: stats::quantile_sorted(&values, 0.25),
            median: stats::median_sorted(&values),
            q3: stats::quantile_sorted(&values, 0.75),
            max: values[values.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub period: u32,
    pub compared_to: u32,
    /// Users present in both periods.
    pub users: usize,
    /// `None` when no user is present in both periods.
    pub summary: Option<DistanceSummary>,
    /// Per-user distances in user order, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub mode: DriftMode,
    pub points: Vec<DriftPoint>,
}

/// Distribution of per-user Jaccard distances between period fingerprints.
pub fn jaccard_drift(tensor: &FingerprintTensor, mode: DriftMode, keep_raw: bool) -> Result<DriftSeries> {
    let periods = tensor.num_periods();
    if periods < 2 {
        return Err(Error::NotEnoughPeriods {
            needed: 2,
            found: periods,
        });
    }
    let points = (1..periods)
        .map(|t| {
            let base = match mode {
                DriftMode::Consecutive => t - 1,
                DriftMode::FromBaseline => 0,
            };
            let (a, b) = (&tensor.periods[base as usize], &tensor.periods[t as usize]);
            let mut distances = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < a.users.len() && j < b.users.len() {
                match a.users[i].cmp(&b.users[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        distances.push(jaccard_distance(a.items.row(i), b.items.row(j)));
                        i += 1;
                        j += 1;
                    }
                }
            }
            DriftPoint {
                period: t,
                compared_to: base,
                users: distances.len(),
                summary: DistanceSummary::of(distances.clone()),
                distances: keep_raw.then_some(distances),
            }
        })
        .collect();
    Ok(DriftSeries { mode, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub period: u32,
    pub users: usize,
    /// `None` for periods without users.
    pub mean_items: Option<f64>,
    pub median_items: Option<f64>,
}

/// Mean and median fingerprint size per period over the users present.
pub fn usage_stats(tensor: &FingerprintTensor) -> Vec<UsageStats> {
    tensor
        .periods
        .iter()
        .enumerate()
        .map(|(t, slice)| {
            let mut sizes: Vec<f64> = slice.items.iter().map(|r| r.len() as f64).collect();
            sizes.sort_by(f64::total_cmp);
            let present = !sizes.is_empty();
            UsageStats {
                period: t as u32,
                users: sizes.len(),
                mean_items: present.then(|| stats::mean(&sizes)),
                median_items: present.then(|| stats::median_sorted(&sizes)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower user count.
    pub lower: u32,
    /// Exclusive upper user count.
    pub upper: u32,
    /// Items whose user count falls in `lower..upper`.
    pub items: usize,
    /// `items / (total items × bin width)`.
    pub density: f64,
}

/// Logarithmically binned distribution of per-item user counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityHistogram {
    pub window: Window,
    /// Bin edges are the distinct values of ⌈base^k⌉, k = 0, 1, ….
    pub base: f64,
    pub items: usize,
    pub max_count: u32,
    pub bins: Vec<HistogramBin>,
}

impl PopularityHistogram {
    /// Exponent τ of a density ∝ count^−τ, by least squares on the log-log
    /// histogram over non-empty bins starting at `min_count` or above.
    pub fn tail_exponent(&self, min_count: u32) -> Option<f64> {
        let points: Vec<(f64, f64)> = self
            .bins
            .iter()
            .filter(|b| b.lower >= min_count && b.items > 0)
            .map(|b| {
                let center = (b.lower as f64 * (b.upper - 1) as f64).sqrt();
                (center.ln(), b.density.ln())
            })
            .collect();
        if points.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
        let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        Some(-sxy / sxx)
    }

    /// Rank-frequency (Zipf) exponent implied by a count density exponent
    /// τ: an item of rank r with count ∝ r^−α gives density ∝ count^−(1+1/α).
    pub fn implied_zipf_exponent(&self, min_count: u32) -> Option<f64> {
        self.tail_exponent(min_count).map(|tau| 1.0 / (tau - 1.0))
    }
}

pub fn popularity_histogram(tensor: &FingerprintTensor, window: Window, base: f64) -> Result<PopularityHistogram> {
    if base.is_nan() || base <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "histogram base must exceed 1, got {base}"
        )));
    }
    let pop = tensor.popularity(window)?;
    let counts: Vec<u32> = pop.iter().map(|(_, c)| c).collect();
    let max_count = counts.iter().copied().max().unwrap_or(0);

    let mut edges: Vec<u32> = vec![1];
    let mut k = 1i32;
    while *edges.last().unwrap() <= max_count {
        let e = base.powi(k).ceil() as u32;
        if e > *edges.last().unwrap() {
            edges.push(e);
        }
        k += 1;
    }
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin {
            lower: w[0],
            upper: w[1],
            items: 0,
            density: 0.0,
        })
        .collect();
    for &c in &counts {
        let b = edges.partition_point(|&e| e <= c) - 1;
        bins[b].items += 1;
    }
    let total = counts.len() as f64;
    for b in &mut bins {
        b.density = b.items as f64 / (total * (b.upper - b.lower) as f64);
    }
    Ok(PopularityHistogram {
        window,
        base,
        items: counts.len(),
        max_count,
        bins,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryWeighting {
    /// Each distinct item used in the period counts once.
    #[default]
    Items,
    /// Each (user, item) pair counts once.
    UserItemPairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryPeriod {
    pub period: u32,
    /// Denominator: distinct items or user-item pairs.
    pub total: usize,
    pub fractions: BTreeMap<String, f64>,
}

/// Share of each category label among the items used in each period.
pub fn category_fractions(
    tensor: &FingerprintTensor,
    categories: &HashMap<ItemId, String>,
    weighting: CategoryWeighting,
) -> Vec<CategoryPeriod> {
    let labels: Vec<&str> = tensor
        .item_ids()
        .iter()
        .map(|i| categories.get(i).map_or(UNCATEGORIZED, String::as_str))
        .collect();
    tensor
        .periods
        .iter()
        .enumerate()
        .map(|(t, slice)| {
            let mut weights = vec![0usize; tensor.num_items()];
            for &i in slice.items.values() {
                weights[i as usize] += 1;
            }
            let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
            let mut total = 0;
            for (i, &w) in weights.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                let w = match weighting {
                    CategoryWeighting::Items => 1,
                    CategoryWeighting::UserItemPairs => w,
                };
                *tally.entry(labels[i]).or_default() += w;
                total += w;
            }
            CategoryPeriod {
                period: t as u32,
                total,
                fractions: tally
                    .into_iter()
                    .map(|(label, w)| (label.to_owned(), w as f64 / total as f64))
                    .collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_tensor, BuildOptions, Event};
    use crate::testutil::d0;

    fn tensor(rows: &[(u64, u32, &[u64])]) -> FingerprintTensor {
        let events = rows
            .iter()
            .flat_map(|(u, p, items)| items.iter().map(move |&i| Event::new(*u, i, *p)));
        let options = BuildOptions {
            min_items_per_period: 1,
            ..Default::default()
        };
        build_tensor(events, &options).unwrap().0
    }

    #[test]
    fn rescaling() {
        assert_eq!(rescale(0.5, 20, 10), 0.25);
        assert_eq!(rescale(0.37, 10, 10), 0.37);
    }

    #[test]
    fn jaccard_examples() {
        assert!((jaccard_distance(&[1, 2], &[2, 3]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard_distance(&[1, 2], &[1, 2]), 0.0);
        assert_eq!(jaccard_distance(&[1, 2], &[3]), 1.0);
        assert_eq!(jaccard_distance::<u32>(&[], &[]), 0.0);
    }

    #[test]
    fn jaccard_is_symmetric_with_identity_on_small_sets() {
        let sets: Vec<Vec<u32>> = (0u32..16)
            .map(|mask| (0..4).filter(|b| mask & (1 << b) != 0).collect())
            .collect();
        for a in &sets {
            assert_eq!(jaccard_distance(a, a), 0.0);
            for b in &sets {
                let d = jaccard_distance(a, b);
                assert_eq!(d, jaccard_distance(b, a));
                assert!((0.0..=1.0).contains(&d));
                if a != b {
                    assert!(d > 0.0);
                }
                for c in &sets {
                    assert!(jaccard_distance(a, c) <= d + jaccard_distance(b, c) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn drift_series() {
        let t = tensor(&[
            (1, 0, &[1, 2]),
            (1, 1, &[2, 3]),
            (1, 2, &[2, 3]),
            (2, 0, &[5]),
            (2, 2, &[6]),
        ]);
        let consecutive = jaccard_drift(&t, DriftMode::Consecutive, true).unwrap();
        assert_eq!(consecutive.points.len(), 2);
        assert_eq!(consecutive.points[0].users, 1);
        assert!((consecutive.points[0].summary.as_ref().unwrap().mean - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(consecutive.points[1].distances.as_deref(), Some(&[0.0][..]));
        let baseline = jaccard_drift(&t, DriftMode::FromBaseline, false).unwrap();
        assert_eq!(baseline.points[1].compared_to, 0);
        assert_eq!(baseline.points[1].users, 2);
        assert_eq!(baseline.points[1].summary.as_ref().unwrap().max, 1.0);
        assert!(baseline.points[1].distances.is_none());
    }

    #[test]
    fn drift_without_co_present_users_is_flagged() {
        let t = tensor(&[(1, 0, &[1]), (2, 1, &[1])]);
        let series = jaccard_drift(&t, DriftMode::Consecutive, false).unwrap();
        assert_eq!(series.points[0].users, 0);
        assert!(series.points[0].summary.is_none());
        assert!(matches!(
            jaccard_drift(&tensor(&[(1, 0, &[1])]), DriftMode::Consecutive, false),
            Err(Error::NotEnoughPeriods { .. })
        ));
    }

    #[test]
    fn usage_examples() {
        let s = usage_stats(&d0());
        assert_eq!((s[0].mean_items, s[0].median_items), (Some(2.0), Some(2.0)));
        let s = usage_stats(&tensor(&[(1, 0, &[1, 2, 3])]));
        assert_eq!((s[0].mean_items, s[0].median_items), (Some(3.0), Some(3.0)));
        let s = usage_stats(&tensor(&[(1, 0, &[1, 2]), (2, 0, &[1, 2, 3, 4])]));
        assert_eq!((s[0].mean_items, s[0].median_items), (Some(3.0), Some(3.0)));
    }

    #[test]
    fn histogram_of_d0() {
        let t = d0();
        let h = popularity_histogram(&t, t.full_window(), 2.0).unwrap();
        assert_eq!(h.items, 4);
        assert_eq!(h.max_count, 3);
        let shape: Vec<(u32, u32, usize)> = h.bins.iter().map(|b| (b.lower, b.upper, b.items)).collect();
        assert_eq!(shape, vec![(1, 2, 1), (2, 4, 3)]);
        let mass: f64 = h.bins.iter().map(|b| b.density * (b.upper - b.lower) as f64).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_single_item() {
        let rows: Vec<(u64, u32, &[u64])> = (0..37).map(|u| (u, 0, &[9u64][..])).collect();
        let t = tensor(&rows);
        let h = popularity_histogram(&t, t.full_window(), 2.0).unwrap();
        let filled: Vec<_> = h.bins.iter().filter(|b| b.items > 0).collect();
        assert_eq!(filled.len(), 1);
        assert!(filled[0].lower <= 37 && 37 < filled[0].upper);
        assert!(h.bins.last().unwrap().upper > 37);
        assert!(popularity_histogram(&t, t.full_window(), 1.0).is_err());
    }

    #[test]
    fn category_examples() {
        let t = d0();
        let one: HashMap<ItemId, String> = (1..=4).map(|i| (ItemId(i), "X".to_string())).collect();
        let f = category_fractions(&t, &one, CategoryWeighting::Items);
        assert_eq!(f[0].fractions.get("X"), Some(&1.0));

        let split: HashMap<ItemId, String> = [(1, "X"), (2, "X"), (3, "Y"), (4, "Y")]
            .into_iter()
            .map(|(i, l)| (ItemId(i), l.to_string()))
            .collect();
        let f = category_fractions(&t, &split, CategoryWeighting::Items);
        assert_eq!(f[0].fractions.get("X"), Some(&0.5));
        assert_eq!(f[0].fractions.get("Y"), Some(&0.5));
        // a,b,a,c,a,b,c,d: X has a×3 + b×2 = 5 of 8 pairs.
        let f = category_fractions(&t, &split, CategoryWeighting::UserItemPairs);
        assert_eq!(f[0].fractions.get("X"), Some(&(5.0 / 8.0)));

        let f = category_fractions(&t, &HashMap::new(), CategoryWeighting::Items);
        assert_eq!(f[0].fractions.get(UNCATEGORIZED), Some(&1.0));
    }
}
