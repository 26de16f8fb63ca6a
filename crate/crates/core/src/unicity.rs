//! Quasi-identifier selection and the sampled unicity estimator.
//!
//! A user is re-identified by an `n`-item quasi-identifier drawn from their
//! own fingerprint when they are the only user in the population whose
//! fingerprint contains all of those items. Unicity is the fraction of
//! sampled users re-identified this way, averaged over `s` independent
//! samples.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{FingerprintSet, PopularityTable};
use crate::index::MatchIndex;
use crate::model::{Fingerprint, FingerprintTensor, ItemId, UserId, Window};
use crate::rng::{self, DEFAULT_SEED};
use crate::stats;

pub const DEFAULT_SAMPLES: usize = 20;
pub const DEFAULT_SAMPLE_SIZE: usize = 10_000;

/// How quasi-identifier items are picked from a fingerprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Uniformly at random without replacement.
    Random,
    /// Least popular items first; ties by ascending item id.
    Popularity,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Random, Strategy::Popularity];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Popularity => "popularity",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "popularity" | "attack" => Ok(Strategy::Popularity),
            other => Err(format!("unknown strategy {other:?} (expected random or popularity)")),
        }
    }
}

/// Items used to single out `source_user`; a subset of their fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuasiIdentifier {
    pub source_user: UserId,
    /// Sorted ascending.
    pub items: Vec<ItemId>,
}

/// Picks `min(n, |fp|)` items of `fp` according to `strategy`.
///
/// `rng` is only consumed by [`Strategy::Random`], and only when a real
/// choice exists (`n < |fp|`).
pub fn select_quasi_identifier<R: Rng + ?Sized>(
    fp: &Fingerprint,
    n: usize,
    strategy: Strategy,
    popularity: &PopularityTable,
    rng: &mut R,
) -> Result<QuasiIdentifier> {
    if fp.is_empty() {
        return Err(Error::EmptyFingerprint { user: fp.owner });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    popularity.check_covers(fp)?;
    let k = n.min(fp.len());
    let mut items: Vec<ItemId> = match strategy {
        Strategy::Random if k < fp.len() => index::sample(rng, fp.len(), k)
            .into_iter()
            .map(|i| fp.items[i])
            .collect(),
        Strategy::Random => fp.items.clone(),
        Strategy::Popularity => {
            let mut ranked: Vec<(u32, ItemId)> =
                fp.items.iter().map(|&i| (popularity.get(i).unwrap_or(0), i)).collect();
            ranked.sort_unstable();
            ranked.into_iter().take(k).map(|(_, i)| i).collect()
        }
    };
    items.sort_unstable();
    Ok(QuasiIdentifier {
        source_user: fp.owner,
        items,
    })
}

/// Dense-index version of [`select_quasi_identifier`] writing into `out`.
/// Must draw exactly like the public one so both agree per seed.
pub(crate) fn select_dense<R: Rng + ?Sized>(
    items: &[u32],
    n: usize,
    strategy: Strategy,
    counts: &[u32],
    rng: &mut R,
    out: &mut Vec<u32>,
) {
    out.clear();
    let k = n.min(items.len());
    match strategy {
        Strategy::Random if k < items.len() => {
            out.extend(index::sample(rng, items.len(), k).into_iter().map(|i| items[i]));
        }
        Strategy::Random => out.extend_from_slice(items),
        Strategy::Popularity => {
            out.extend_from_slice(items);
            // Dense item order is item id order, so this breaks ties by id.
            out.sort_unstable_by_key(|&i| (counts[i as usize], i));
            out.truncate(k);
        }
    }
    out.sort_unstable();
}

/// A population under attack: window fingerprints, the popularity table
/// used to rank items, and the match index.
#[derive(Clone, Debug)]
pub struct Population {
    fingerprints: FingerprintSet,
    popularity: PopularityTable,
    index: MatchIndex,
}

impl Population {
    /// Popularity is computed over the population itself.
    pub fn new(fingerprints: FingerprintSet) -> Self {
        let popularity = fingerprints.popularity();
        let index = MatchIndex::new(&fingerprints);
        Self {
            fingerprints,
            popularity,
            index,
        }
    }

    /// Ranks items by an externally computed popularity table, e.g. one
    /// taken over a wider window or over the full dataset. The table must
    /// come from the same tensor.
    pub fn with_popularity(fingerprints: FingerprintSet, popularity: PopularityTable) -> Result<Self> {
        if !popularity.same_catalog(fingerprints.catalog()) {
            return Err(Error::CatalogMismatch);
        }
        let index = MatchIndex::new(&fingerprints);
        Ok(Self {
            fingerprints,
            popularity,
            index,
        })
    }

    pub fn from_tensor(tensor: &FingerprintTensor, window: Window) -> Result<Self> {
        Ok(Self::new(tensor.window_fingerprints(window)?))
    }

    pub fn window(&self) -> Window {
        self.fingerprints.window()
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    pub fn fingerprints(&self) -> &FingerprintSet {
        &self.fingerprints
    }

    pub fn popularity(&self) -> &PopularityTable {
        &self.popularity
    }

    pub fn index(&self) -> &MatchIndex {
        &self.index
    }
}

/// Parameters of one unicity estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub n_apps: usize,
    pub strategy: Strategy,
    /// Number of independent user samples `s`.
    pub samples: usize,
    /// Users per sample, capped at the population size.
    pub sample_size: usize,
    pub seed: u64,
}

impl EstimateParams {
    pub fn new(n_apps: usize, strategy: Strategy) -> Self {
        Self {
            n_apps,
            strategy,
            samples: DEFAULT_SAMPLES,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_samples(mut self, samples: usize, sample_size: usize) -> Self {
        self.samples = samples;
        self.sample_size = sample_size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_apps == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if self.samples == 0 || self.sample_size == 0 {
            return Err(Error::InvalidParameter("s and sample size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean ± population standard deviation of the per-sample unique fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicityEstimate {
    pub window: Window,
    pub n_apps: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub s: usize,
    pub sample_size: usize,
    pub population: usize,
    pub mean: f64,
    pub std: f64,
    pub per_sample: Vec<f64>,
}

/// Estimates unicity over the whole population.
///
/// Sample `k` draws `min(sample_size, population)` users without
/// replacement from stream `k` of the seed; each drawn user's
/// quasi-identifier is tested against the full population. Samples run in
/// parallel and are reduced in sample order.
pub fn estimate_unicity(population: &Population, params: &EstimateParams) -> Result<UnicityEstimate> {
    let candidates: Vec<usize> = (0..population.len()).collect();
    estimate_over(population, &candidates, params)
}

/// Like [`estimate_unicity`], but samples are drawn only from `targets`.
/// Uniqueness is still tested against the full population.
pub fn estimate_unicity_for(
    population: &Population,
    targets: &[UserId],
    params: &EstimateParams,
) -> Result<UnicityEstimate> {
    let candidates = target_rows(population, targets)?;
    estimate_over(population, &candidates, params)
}

fn target_rows(population: &Population, targets: &[UserId]) -> Result<Vec<usize>> {
    let mut rows = targets
        .iter()
        .map(|&u| {
            population.fingerprints.row_of(u).ok_or(Error::UserNotInWindow {
                user: u,
                window: population.window(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_unstable();
    rows.dedup();
    Ok(rows)
}

fn estimate_over(population: &Population, candidates: &[usize], params: &EstimateParams) -> Result<UnicityEstimate> {
    params.validate()?;
    if population.is_empty() || candidates.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let m = params.sample_size.min(candidates.len());
    let per_sample: Vec<f64> = (0..params.samples)
        .into_par_iter()
        .map(|k| {
            let unique = plan_sample(population, candidates, params, k, m)
                .filter(|(_, q)| population.index.count_dense(q, 2) == 1)
                .count();
            unique as f64 / m as f64
        })
        .collect();
    Ok(UnicityEstimate {
        window: population.window(),
        n_apps: params.n_apps,
        strategy: params.strategy,
        seed: params.seed,
        s: params.samples,
        sample_size: m,
        population: population.len(),
        mean: stats::mean(&per_sample),
        std: stats::population_std(&per_sample),
        per_sample,
    })
}

/// Sampled rows and their dense quasi-identifiers for sample `k`.
fn plan_sample<'a>(
    population: &'a Population,
    candidates: &'a [usize],
    params: &EstimateParams,
    k: usize,
    m: usize,
) -> impl Iterator<Item = (usize, Vec<u32>)> + 'a {
    let mut rng = rng::stream(params.seed, k as u64);
    let drawn = index::sample(&mut rng, candidates.len(), m);
    let counts = population.popularity.dense_counts();
    let (n, strategy) = (params.n_apps, params.strategy);
    drawn.into_iter().map(move |c| {
        let row = candidates[c];
        let mut q = Vec::with_capacity(n);
        select_dense(
            population.fingerprints.dense_row(row),
            n,
            strategy,
            counts,
            &mut rng,
            &mut q,
        );
        (row, q)
    })
}

/// The quasi-identifiers the estimator tests in sample `k`, in draw order.
/// Exposed so independent checks can re-evaluate them.
pub fn sample_plan(population: &Population, params: &EstimateParams, k: usize) -> Result<Vec<QuasiIdentifier>> {
    params.validate()?;
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let candidates: Vec<usize> = (0..population.len()).collect();
    let m = params.sample_size.min(candidates.len());
    let catalog = population.fingerprints.catalog();
    Ok(plan_sample(population, &candidates, params, k, m)
        .map(|(row, q)| QuasiIdentifier {
            source_user: population.fingerprints.user_id(row),
            items: q.into_iter().map(|i| catalog[i as usize]).collect(),
        })
        .collect())
}

/// Uniqueness of each listed user's quasi-identifier. Random draws for the
/// user at row `r` come from stream `r` of `seed`.
pub fn evaluate_users(
    population: &Population,
    users: &[UserId],
    n: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<(UserId, bool)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let counts = population.popularity.dense_counts();
    users
        .iter()
        .map(|&u| {
            let row = population.fingerprints.row_of(u).ok_or(Error::UserNotInWindow {
                user: u,
                window: population.window(),
            })?;
            let mut rng = rng::stream(seed, row as u64);
            let mut q = Vec::with_capacity(n);
            select_dense(
                population.fingerprints.dense_row(row),
                n,
                strategy,
                counts,
                &mut rng,
                &mut q,
            );
            Ok((u, population.index.count_dense(&q, 2) == 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::d0;
    use rand::SeedableRng;

    fn d0_population() -> Population {
        let t = d0();
        Population::from_tensor(&t, t.full_window()).unwrap()
    }

    fn whole(n: usize, strategy: Strategy) -> EstimateParams {
        EstimateParams::new(n, strategy).with_samples(1, 4)
    }

    fn qi(pop: &Population, user: u64, n: usize, strategy: Strategy) -> Vec<u64> {
        let row = pop.fingerprints().row_of(UserId(user)).unwrap();
        let fp = pop.fingerprints().fingerprint(row);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        select_quasi_identifier(&fp, n, strategy, pop.popularity(), &mut rng)
            .unwrap()
            .items
            .iter()
            .map(|i| i.0)
            .collect()
    }

    #[test]
    fn popularity_selection_ranks_by_count_then_id() {
        let pop = d0_population();
        assert_eq!(qi(&pop, 3, 2, Strategy::Popularity), vec![2, 3]);
        assert_eq!(qi(&pop, 3, 1, Strategy::Popularity), vec![2]);
    }

    #[test]
    fn selection_caps_at_fingerprint_size() {
        let pop = d0_population();
        for s in Strategy::ALL {
            assert_eq!(qi(&pop, 4, 3, s), vec![4]);
        }
        assert_eq!(qi(&pop, 1, 2, Strategy::Random), vec![1, 2]);
    }

    #[test]
    fn empty_fingerprint_and_zero_n_are_errors() {
        let pop = d0_population();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let empty = Fingerprint {
            owner: UserId(9),
            window: pop.window(),
            items: vec![],
        };
        assert!(matches!(
            select_quasi_identifier(&empty, 1, Strategy::Random, pop.popularity(), &mut rng),
            Err(Error::EmptyFingerprint { .. })
        ));
        let fp = pop.fingerprints().fingerprint(0);
        assert!(select_quasi_identifier(&fp, 0, Strategy::Random, pop.popularity(), &mut rng).is_err());
        let unknown = Fingerprint {
            owner: UserId(1),
            window: pop.window(),
            items: vec![ItemId(77)],
        };
        assert!(matches!(
            select_quasi_identifier(&unknown, 1, Strategy::Popularity, pop.popularity(), &mut rng),
            Err(Error::MissingPopularity { item: 77 })
        ));
    }

    #[test]
    fn d0_unicity_values() {
        let pop = d0_population();
        for s in Strategy::ALL {
            for seed in 0..20 {
                let est = estimate_unicity(&pop, &whole(1, s).with_seed(seed)).unwrap();
                assert_eq!(est.mean, 0.25, "{s} seed {seed}");
            }
        }
        assert_eq!(
            estimate_unicity(&pop, &whole(2, Strategy::Popularity)).unwrap().mean,
            0.5
        );
        for n in 3..6 {
            assert_eq!(
                estimate_unicity(&pop, &whole(n, Strategy::Popularity)).unwrap().mean,
                0.5
            );
        }
    }

    #[test]
    fn sample_size_caps_at_population() {
        let pop = d0_population();
        let est = estimate_unicity(&pop, &EstimateParams::new(2, Strategy::Popularity)).unwrap();
        assert_eq!(est.sample_size, 4);
        assert_eq!(est.per_sample.len(), DEFAULT_SAMPLES);
        assert!(est.per_sample.iter().all(|&v| v == 0.5));
        assert_eq!(est.std, 0.0);
    }

    #[test]
    fn restricted_estimate() {
        let pop = d0_population();
        let est = estimate_unicity_for(&pop, &[UserId(3), UserId(4)], &whole(3, Strategy::Popularity)).unwrap();
        assert_eq!(est.mean, 1.0);
        assert!(estimate_unicity_for(&pop, &[UserId(42)], &whole(1, Strategy::Random)).is_err());
    }

    #[test]
    fn sample_plan_matches_public_selection() {
        let pop = d0_population();
        let plan = sample_plan(&pop, &whole(2, Strategy::Popularity), 0).unwrap();
        assert_eq!(plan.len(), 4);
        for q in plan {
            let n = 2;
            let expected = qi(&pop, q.source_user.0, n, Strategy::Popularity);
            assert_eq!(q.items.iter().map(|i| i.0).collect::<Vec<_>>(), expected);
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("Popularity".parse::<Strategy>().unwrap(), Strategy::Popularity);
        assert_eq!("random".parse::<Strategy>().unwrap(), Strategy::Random);
        assert!("greedy".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::Random).unwrap(), "\"random\"");
    }
}
