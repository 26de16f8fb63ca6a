//! Synthetic fingerprint datasets with known ground truth.
//!
//! Item `i` of the catalog has Zipf weight `(i + 1)^-α`, so item 0 is the
//! most popular. Each user draws a fingerprint size once from a Poisson
//! distribution shifted to start at the per-period minimum, fills period 0
//! with distinct Zipf draws, and in every later period replaces a
//! Binomial(size, churn) subset of items with fresh draws. Each user has its
//! own random stream, so results do not depend on how users are sharded.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csr::Csr;
use crate::error::{Error, Result};
use crate::model::{
    build_tensor, BuildOptions, Event, FingerprintTensor, ItemId, PeriodIndex, PeriodSlice, UserId, Window,
};
use crate::rng::{self, DEFAULT_SEED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub users: usize,
    pub catalog: usize,
    pub periods: u32,
    /// Zipf exponent of item weights.
    pub alpha: f64,
    /// Mean items per user per period.
    pub mean_items: f64,
    /// Target distinct items per user over all periods; sets the churn
    /// rate when `churn` is unset.
    pub yearly_items: f64,
    /// Fraction of a user's items replaced each period.
    pub churn: Option<f64>,
    pub min_items_per_period: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            users: 10_000,
            catalog: 50_000,
            periods: 12,
            alpha: 1.5,
            mean_items: 23.0,
            yearly_items: 76.0,
            churn: None,
            min_items_per_period: crate::model::DEFAULT_MIN_ITEMS_PER_PERIOD,
            seed: DEFAULT_SEED,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.users == 0 || self.catalog == 0 || self.periods == 0 {
            return bad("users, catalog and periods must be at least 1".into());
        }
        if self.catalog > u32::MAX as usize || self.users > u32::MAX as usize {
            return bad("users and catalog must fit in 32 bits".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if let Some(p) = self.churn {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("churn must be within [0, 1], got {p}"));
            }
        }
        if self.min_items_per_period == 0 {
            return bad("min items per period must be at least 1".into());
        }
        if !(self.mean_items.is_finite() && self.mean_items >= self.min_items_per_period as f64) {
            return bad(format!(
                "mean items {} is below the per-period minimum {}",
                self.mean_items, self.min_items_per_period
            ));
        }
        if self.mean_items > self.catalog as f64 {
            return bad(format!(
                "mean items {} exceeds catalog size {}",
                self.mean_items, self.catalog
            ));
        }
        Ok(())
    }

    /// Churn rate in effect: the explicit one, or the rate at which a user
    /// holding `mean_items` items reaches about `yearly_items` distinct items
    /// over all periods.
    pub fn effective_churn(&self) -> f64 {
        match self.churn {
            Some(p) => p,
            None if self.periods <= 1 => 0.0,
            None => {
                let added = (self.yearly_items - self.mean_items).max(0.0);
                (added / ((self.periods - 1) as f64 * self.mean_items)).clamp(0.0, 1.0)
            }
        }
    }
}

/// Ground-truth sidecar written next to generated datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub effective_churn: f64,
    pub planted_users: Vec<UserId>,
    /// The fresh item given to each planted user, aligned with `planted_users`.
    pub planted_items: Vec<ItemId>,
}

struct ItemSampler {
    zipf: Zipf<f64>,
    alpha: f64,
    catalog: usize,
}

impl ItemSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        (self.zipf.sample(rng) as u64 - 1) as u32
    }

    /// Adds up to `count` distinct items to `held`, avoiding `held` and
    /// `avoid`. Falls back to exact weighted sampling over the remaining
    /// catalog when rejection keeps hitting taken items.
    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, held: &mut Vec<u32>, avoid: &[u32], count: usize) {
        let target = held.len() + count;
        let taken = |held: &[u32], i: u32| held.contains(&i) || avoid.contains(&i);
        let mut attempts = 0usize;
        while held.len() < target && attempts < 64 * count + 64 {
            attempts += 1;
            let i = self.draw(rng);
            if !taken(held, i) {
                held.push(i);
            }
        }
        if held.len() < target {
            let free: Vec<u32> = (0..self.catalog as u32).filter(|&i| !taken(held, i)).collect();
            let amount = (target - held.len()).min(free.len());
            let alpha = self.alpha;
            let picked = index::sample_weighted(rng, free.len(), |j| ((free[j] + 1) as f64).powf(-alpha), amount)
                .expect("weights are positive and finite");
            held.extend(picked.into_iter().map(|j| free[j]));
        }
    }
}

/// Generates a tensor per `config`. Every user is present in every period.
pub fn generate(config: &GeneratorConfig) -> Result<FingerprintTensor> {
    config.validate()?;
    let sampler = ItemSampler {
        zipf: Zipf::new(config.catalog as u64, config.alpha).map_err(|e| Error::InvalidConfig(format!("zipf: {e}")))?,
        alpha: config.alpha,
        catalog: config.catalog,
    };
    let churn = config.effective_churn();
    let min = config.min_items_per_period;
    let extra = config.mean_items - min as f64;
    let size_dist = (extra > 0.0)
        .then(|| Poisson::new(extra))
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("poisson: {e}")))?;

    // history[user][period] = sorted raw item ids
    let history: Vec<Vec<Vec<u32>>> = (0..config.users)
        .into_par_iter()
        .map(|u| {
            let mut rng = rng::stream(config.seed, u as u64);
            let size = match &size_dist {
                Some(d) => min + d.sample(&mut rng) as usize,
                None => min,
            }
            .min(config.catalog);
            let mut held = Vec::with_capacity(size);
            sampler.fill(&mut rng, &mut held, &[], size);
            // Replacements are items the user has never held, so every
            // churned slot adds one distinct item over the horizon.
            let mut dropped: Vec<u32> = Vec::new();
            let mut periods = Vec::with_capacity(config.periods as usize);
            let mut sorted = held.clone();
            sorted.sort_unstable();
            periods.push(sorted);
            for _ in 1..config.periods {
                let replace = if churn > 0.0 {
                    Binomial::new(held.len() as u64, churn)
                        .expect("valid churn")
                        .sample(&mut rng) as usize
                } else {
                    0
                };
                if replace > 0 {
                    let mut drop = index::sample(&mut rng, held.len(), replace).into_vec();
                    drop.sort_unstable_by(|a, b| b.cmp(a));
                    let removed: Vec<u32> = drop.into_iter().map(|i| held.swap_remove(i)).collect();
                    dropped.extend_from_slice(&removed);
                    sampler.fill(&mut rng, &mut held, &dropped, replace);
                    // A catalog too small to supply fresh items keeps some old ones.
                    for &r in &removed {
                        if held.len() >= size {
                            break;
                        }
                        held.push(r);
                    }
                }
                let mut sorted = held.clone();
                sorted.sort_unstable();
                periods.push(sorted);
            }
            periods
        })
        .collect();

    let mut used = vec![false; config.catalog];
    for periods in &history {
        for set in periods {
            for &i in set {
                used[i as usize] = true;
            }
        }
    }
    let mut dense = vec![u32::MAX; config.catalog];
    let mut item_ids = Vec::new();
    for (raw, _) in used.iter().enumerate().filter(|(_, &u)| u) {
        dense[raw] = item_ids.len() as u32;
        item_ids.push(ItemId(raw as u64));
    }

    let slices = (0..config.periods as usize)
        .map(|t| {
            let rows = history.iter().map(|periods| {
                // Dense order follows raw order, so rows stay sorted.
                periods[t].iter().map(|&i| dense[i as usize]).collect::<Vec<u32>>()
            });
            PeriodSlice {
                users: (0..config.users as u32).collect(),
                items: Csr::from_rows(rows),
            }
        })
        .collect();

    Ok(FingerprintTensor::from_parts(
        (0..config.users as u64).map(UserId).collect::<Arc<[UserId]>>(),
        item_ids.into(),
        config.catalog as u64,
        min,
        slices,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantOptions {
    /// Number of users to plant.
    pub k: usize,
    /// Users sharing each planted item: the planted user plus `rarity − 1`
    /// other users. 1 makes every planted user unique.
    pub rarity: usize,
    /// Periods receiving the planted items; all periods when unset.
    pub window: Option<Window>,
    pub seed: u64,
}

impl PlantOptions {
    pub fn unique(k: usize, seed: u64) -> Self {
        Self {
            k,
            rarity: 1,
            window: None,
            seed,
        }
    }
}

/// Result of [`plant_unique_users`].
#[derive(Clone, Debug)]
pub struct Planted {
    pub tensor: FingerprintTensor,
    /// Ascending.
    pub users: Vec<UserId>,
    /// Fresh item of each planted user, aligned with `users`.
    pub items: Vec<ItemId>,
}

/// Gives each of `k` random users a fresh catalog item that only
/// `rarity` users hold, in every period of the window where they are
/// present.
pub fn plant_unique_users(tensor: &FingerprintTensor, options: &PlantOptions) -> Result<Planted> {
    if options.rarity == 0 {
        return Err(Error::InvalidParameter("rarity must be at least 1".into()));
    }
    let window = options.window.unwrap_or_else(|| tensor.full_window());
    tensor.check_window(window)?;
    if options.k == 0 {
        return Ok(Planted {
            tensor: tensor.clone(),
            users: Vec::new(),
            items: Vec::new(),
        });
    }

    let candidates: Vec<UserId> = tensor.window_fingerprints(window)?.user_ids().collect();
    let covers_needed = options.k * (options.rarity - 1);
    if options.k + covers_needed > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "planting {} users with rarity {} needs {} users in window {window}, found {}",
            options.k,
            options.rarity,
            options.k + covers_needed,
            candidates.len()
        )));
    }

    let used: HashSet<ItemId> = tensor.item_ids().iter().copied().collect();
    let available = tensor.catalog_size() as usize - used.len();
    if available < options.k {
        return Err(Error::InsufficientFreshIds {
            needed: options.k,
            available,
        });
    }
    let fresh: Vec<ItemId> = (0..tensor.catalog_size())
        .rev()
        .map(ItemId)
        .filter(|i| !used.contains(i))
        .take(options.k)
        .collect();

    let mut rng = rng::stream(options.seed, 0);
    let chosen = index::sample(&mut rng, candidates.len(), options.k + covers_needed).into_vec();
    let mut planted: Vec<UserId> = chosen[..options.k].iter().map(|&c| candidates[c]).collect();
    let covers: Vec<UserId> = chosen[options.k..].iter().map(|&c| candidates[c]).collect();
    planted.sort_unstable();

    let mut extra: Vec<Event> = Vec::new();
    for (j, (&user, &item)) in planted.iter().zip(&fresh).enumerate() {
        let holders = std::iter::once(user).chain(
            covers[j * (options.rarity - 1)..(j + 1) * (options.rarity - 1)]
                .iter()
                .copied(),
        );
        for holder in holders {
            for p in window.periods() {
                if tensor.period_items(holder, p).is_some() {
                    extra.push(Event {
                        user: holder,
                        item,
                        period: PeriodIndex(p),
                    });
                }
            }
        }
    }

    let build = BuildOptions {
        exclusions: HashSet::new(),
        min_items_per_period: tensor.min_items_per_period(),
        periods: Some(tensor.num_periods()),
    };
    let (mut rebuilt, _) = build_tensor(tensor.events().chain(extra), &build)?;
    rebuilt.catalog_size = rebuilt.catalog_size.max(tensor.catalog_size());
    Ok(Planted {
        tensor: rebuilt,
        users: planted,
        items: fresh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::{jaccard_drift, DriftMode};

    fn small(users: usize, catalog: usize, periods: u32) -> GeneratorConfig {
        GeneratorConfig {
            users,
            catalog,
            periods,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn single_user_holds_whole_small_catalog() {
        let config = GeneratorConfig {
            mean_items: 5.0,
            min_items_per_period: 5,
            ..small(1, 5, 1)
        };
        let t = generate(&config).unwrap();
        let items = t.period_items(UserId(0), 0).unwrap();
        assert_eq!(items, (0..5).map(ItemId).collect::<Vec<_>>());
    }

    #[test]
    fn no_churn_means_no_drift() {
        let config = GeneratorConfig {
            churn: Some(0.0),
            ..small(200, 2_000, 12)
        };
        let t = generate(&config).unwrap();
        for u in t.user_ids() {
            let first = t.period_items(*u, 0).unwrap();
            for p in 1..12 {
                assert_eq!(t.period_items(*u, p).unwrap(), first);
            }
        }
        let drift = jaccard_drift(&t, DriftMode::Consecutive, false).unwrap();
        assert!(drift.points.iter().all(|p| p.summary.as_ref().unwrap().max == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let config = small(300, 1_000, 3);
        assert_eq!(generate(&config).unwrap(), generate(&config).unwrap());
        let other = GeneratorConfig {
            seed: 43,
            ..config.clone()
        };
        assert_ne!(generate(&config).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn invariants_hold() {
        let t = generate(&small(500, 3_000, 4)).unwrap();
        for p in 0..4 {
            assert_eq!(t.users_in_period_count(p), 500);
            for u in t.users_in_period(p) {
                let items = t.period_items(u, p).unwrap();
                assert!(items.len() >= 3);
                assert!(items.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(generate(&GeneratorConfig {
            mean_items: 30.0,
            ..small(1, 10, 1)
        })
        .is_err());
        assert!(generate(&GeneratorConfig {
            alpha: 0.0,
            ..small(1, 10, 1)
        })
        .is_err());
        assert!(generate(&GeneratorConfig {
            churn: Some(1.5),
            ..small(1, 10, 1)
        })
        .is_err());
        assert!(generate(&GeneratorConfig {
            mean_items: 2.0,
            ..small(1, 10, 1)
        })
        .is_err());
    }

    #[test]
    fn default_churn_targets_yearly_union() {
        let c = GeneratorConfig::default();
        assert!((c.effective_churn() - 53.0 / (11.0 * 23.0)).abs() < 1e-12);
        assert_eq!(GeneratorConfig { periods: 1, ..c }.effective_churn(), 0.0);
    }

    #[test]
    fn planting_nothing_is_identity() {
        let t = generate(&small(100, 5_000, 2)).unwrap();
        let planted = plant_unique_users(&t, &PlantOptions::unique(0, 1)).unwrap();
        assert_eq!(planted.tensor, t);
        assert!(planted.users.is_empty());
    }

    #[test]
    fn planted_items_have_requested_rarity() {
        let t = generate(&small(200, 5_000, 2)).unwrap();
        let options = PlantOptions {
            k: 5,
            rarity: 3,
            window: Some(Window::single(1)),
            seed: 9,
        };
        let planted = plant_unique_users(&t, &options).unwrap();
        let pop1 = planted.tensor.popularity(Window::single(1)).unwrap();
        let pop0 = planted.tensor.popularity(Window::single(0)).unwrap();
        for item in &planted.items {
            assert_eq!(pop1.get(*item), Some(3));
            assert_eq!(pop0.get(*item), None);
        }
        assert_eq!(planted.tensor.catalog_size(), t.catalog_size());
    }

    #[test]
    fn planting_needs_fresh_ids() {
        let config = GeneratorConfig {
            mean_items: 5.0,
            min_items_per_period: 5,
            ..small(3, 5, 1)
        };
        let t = generate(&config).unwrap();
        assert!(matches!(
            plant_unique_users(&t, &PlantOptions::unique(1, 0)),
            Err(Error::InsufficientFreshIds {
                needed: 1,
                available: 0
            })
        ));
    }
}
