//! Fingerprint data model: identifiers, period windows and the sparse
//! user × item × period tensor.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::csr::Csr;
use crate::error::{Error, Result};
use crate::fingerprint::{FingerprintSet, PopularityTable};

pub const DEFAULT_MIN_ITEMS_PER_PERIOD: usize = 3;

/// Pseudonymized user identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

/// Pseudonymized item (app) identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

/// Zero-based period (month) index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeriodIndex(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for PeriodIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Inclusive range of periods `first..=last`.
///
/// Serialized as a two-element array `[first, last]`; parsed from `"3"` or `"0-11"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct Window {
    first: u32,
    last: u32,
}

impl Window {
    pub fn new(first: u32, last: u32) -> Option<Self> {
        (first <= last).then_some(Self { first, last })
    }

    pub fn single(period: u32) -> Self {
        Self {
            first: period,
            last: period,
        }
    }

    /// Every period of a dataset with `periods` periods. `periods` must be ≥ 1.
    pub fn all(periods: u32) -> Self {
        Self {
            first: 0,
            last: periods.saturating_sub(1),
        }
    }

    pub fn first(&self) -> u32 {
        self.first
    }

    pub fn last(&self) -> u32 {
        self.last
    }

    pub fn len(&self) -> u32 {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn periods(&self) -> std::ops::RangeInclusive<u32> {
        self.first..=self.last
    }

    pub fn contains(&self, period: u32) -> bool {
        (self.first..=self.last).contains(&period)
    }

    pub fn is_subset_of(&self, other: &Window) -> bool {
        other.first <= self.first && self.last <= other.last
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}-{}", self.first, self.last)
        }
    }
}

impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad period {v:?}: {e}"));
        match s.split_once('-') {
            None => Ok(Window::single(parse(s)?)),
            Some((a, b)) => {
                Window::new(parse(a)?, parse(b)?).ok_or_else(|| format!("window {s:?} ends before it starts"))
            }
        }
    }
}

impl TryFrom<[u32; 2]> for Window {
    type Error = String;

    fn try_from([first, last]: [u32; 2]) -> std::result::Result<Self, Self::Error> {
        Window::new(first, last).ok_or_else(|| format!("window [{first}, {last}] ends before it starts"))
    }
}

impl From<Window> for [u32; 2] {
    fn from(w: Window) -> Self {
        [w.first, w.last]
    }
}

/// One presence record: `user` used `item` during `period`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub user: UserId,
    pub item: ItemId,
    pub period: PeriodIndex,
}

impl Event {
    pub fn new(user: u64, item: u64, period: u32) -> Self {
        Self {
            user: UserId(user),
            item: ItemId(item),
            period: PeriodIndex(period),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub exclusions: HashSet<ItemId>,
    pub min_items_per_period: usize,
    /// Number of periods T. Events at or past T are rejected. Inferred from
    /// the largest period seen when unset.
    pub periods: Option<u32>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            exclusions: HashSet::new(),
            min_items_per_period: DEFAULT_MIN_ITEMS_PER_PERIOD,
            periods: None,
        }
    }
}

/// Record counts from [`build_tensor`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub events_read: usize,
    pub rejected: usize,
    pub excluded: usize,
    pub duplicates: usize,
    /// (user, period) groups dropped for having too few items.
    pub dropped_user_periods: usize,
    pub events_kept: usize,
    pub users: usize,
    pub items: usize,
    pub periods: u32,
}

/// Users present in one period and their sorted item lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct PeriodSlice {
    /// Dense user indices, ascending.
    pub(crate) users: Vec<u32>,
    /// Row `i` holds the dense item indices of `users[i]`.
    pub(crate) items: Csr,
}

impl PeriodSlice {
    fn row_of(&self, user: u32) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }
}

/// Sparse binary user × item × period tensor.
///
/// Users and items are stored under dense indices assigned in ascending id
/// order, so ordering by dense index equals ordering by id. Immutable once
/// built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FingerprintTensor {
    pub(crate) user_ids: Arc<[UserId]>,
    pub(crate) item_ids: Arc<[ItemId]>,
    pub(crate) catalog_size: u64,
    pub(crate) min_items_per_period: usize,
    pub(crate) periods: Vec<PeriodSlice>,
}

impl FingerprintTensor {
    pub(crate) fn from_parts(
        user_ids: Arc<[UserId]>,
        item_ids: Arc<[ItemId]>,
        catalog_size: u64,
        min_items_per_period: usize,
        periods: Vec<PeriodSlice>,
    ) -> Self {
        debug_assert!(user_ids.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(item_ids.windows(2).all(|w| w[0] < w[1]));
        Self {
            user_ids,
            item_ids,
            catalog_size,
            min_items_per_period,
            periods,
        }
    }

    /// Distinct users present in at least one period.
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    /// Distinct items used in at least one period.
    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_periods(&self) -> u32 {
        self.periods.len() as u32
    }

    /// Number of assignable item ids: ids `0..catalog_size` are in the catalog.
    pub fn catalog_size(&self) -> u64 {
        self.catalog_size
    }

    pub fn min_items_per_period(&self) -> usize {
        self.min_items_per_period
    }

    pub fn user_ids(&self) -> &[UserId] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.item_ids
    }

    /// Total number of (user, item, period) presence triples.
    pub fn nnz(&self) -> usize {
        self.periods.iter().map(|p| p.items.nnz()).sum()
    }

    pub fn full_window(&self) -> Window {
        Window::all(self.num_periods())
    }

    pub fn check_window(&self, window: Window) -> Result<()> {
        if window.last() < self.num_periods() {
            Ok(())
        } else {
            Err(Error::InvalidWindow {
                window,
                periods: self.num_periods(),
            })
        }
    }

    pub(crate) fn dense_user(&self, user: UserId) -> Option<u32> {
        self.user_ids.binary_search(&user).ok().map(|i| i as u32)
    }

    /// Users present in `period`.
    pub fn users_in_period(&self, period: u32) -> impl Iterator<Item = UserId> + '_ {
        self.periods[period as usize]
            .users
            .iter()
            .map(|&u| self.user_ids[u as usize])
    }

    pub fn users_in_period_count(&self, period: u32) -> usize {
        self.periods[period as usize].users.len()
    }

    /// Number of distinct items with at least one user in `period`.
    pub fn items_in_period(&self, period: u32) -> usize {
        let slice = &self.periods[period as usize];
        let mut seen = vec![false; self.num_items()];
        let mut distinct = 0;
        for &i in slice.items.values() {
            if !std::mem::replace(&mut seen[i as usize], true) {
                distinct += 1;
            }
        }
        distinct
    }

    /// The user's items in one period, or `None` if absent from it.
    pub fn period_items(&self, user: UserId, period: u32) -> Option<Vec<ItemId>> {
        let slice = self.periods.get(period as usize)?;
        let row = slice.row_of(self.dense_user(user)?)?;
        Some(
            slice
                .items
                .row(row)
                .iter()
                .map(|&i| self.item_ids[i as usize])
                .collect(),
        )
    }

    /// Union of the user's per-period item sets over `window` (the maximum
    /// over periods of a binary tensor).
    pub fn window_fingerprint(&self, user: UserId, window: Window) -> Result<Fingerprint> {
        self.check_window(window)?;
        let absent = || Error::UserNotInWindow { user, window };
        let dense = self.dense_user(user).ok_or_else(absent)?;
        let mut items: Vec<u32> = Vec::new();
        let mut present = false;
        for p in window.periods() {
            let slice = &self.periods[p as usize];
            if let Some(row) = slice.row_of(dense) {
                present = true;
                items.extend_from_slice(slice.items.row(row));
            }
        }
        if !present {
            return Err(absent());
        }
        items.sort_unstable();
        items.dedup();
        Ok(Fingerprint {
            owner: user,
            window,
            items: items.into_iter().map(|i| self.item_ids[i as usize]).collect(),
        })
    }

    /// Fingerprints of every user present somewhere in `window`.
    pub fn window_fingerprints(&self, window: Window) -> Result<FingerprintSet> {
        self.check_window(window)?;
        FingerprintSet::from_tensor(self, window)
    }

    /// Per-item user counts over `window`.
    pub fn popularity(&self, window: Window) -> Result<PopularityTable> {
        Ok(self.window_fingerprints(window)?.popularity())
    }

    /// Every presence triple, ordered by (period, user, item).
    pub fn events(&self) -> impl Iterator<Item = Event> + '_ {
        self.periods.iter().enumerate().flat_map(move |(p, slice)| {
            slice.users.iter().zip(slice.items.iter()).flat_map(move |(&u, items)| {
                items.iter().map(move |&i| Event {
                    user: self.user_ids[u as usize],
                    item: self.item_ids[i as usize],
                    period: PeriodIndex(p as u32),
                })
            })
        })
    }
}

/// One user's item set over a window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub owner: UserId,
    pub window: Window,
    /// Sorted, duplicate-free.
    pub items: Vec<ItemId>,
}

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.binary_search(&item).is_ok()
    }
}

/// Builds a tensor from raw presence events.
///
/// Excluded items are dropped first, then duplicates are collapsed, then
/// (user, period) groups with fewer than `min_items_per_period` items are
/// removed from that period only. Events whose period is outside
/// `0..options.periods` are rejected and counted.
pub fn build_tensor<I>(events: I, options: &BuildOptions) -> Result<(FingerprintTensor, BuildReport)>
where
    I: IntoIterator<Item = Event>,
{
    let mut report = BuildReport::default();
    let mut kept: Vec<(u32, u64, u64)> = Vec::new();
    for e in events {
        report.events_read += 1;
        if options.periods.is_some_and(|t| e.period.0 >= t) {
            report.rejected += 1;
            continue;
        }
        if options.exclusions.contains(&e.item) {
            report.excluded += 1;
            continue;
        }
        kept.push((e.period.0, e.user.0, e.item.0));
    }
    kept.sort_unstable();
    let before = kept.len();
    kept.dedup();
    report.duplicates = before - kept.len();

    let min_items = options.min_items_per_period.max(1);
    let mut retained: Vec<(u32, u64, u64)> = Vec::with_capacity(kept.len());
    for group in kept.chunk_by(|a, b| a.0 == b.0 && a.1 == b.1) {
        if group.len() >= min_items {
            retained.extend_from_slice(group);
        } else {
            report.dropped_user_periods += 1;
        }
    }
    if retained.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let periods = options
        .periods
        .unwrap_or_else(|| retained.last().map_or(0, |e| e.0) + 1);
    let mut user_ids: Vec<u64> = retained.iter().map(|e| e.1).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u64> = retained.iter().map(|e| e.2).collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let catalog_size = item_ids.last().map_or(0, |&m| m + 1);

    let dense_item = |id: u64| item_ids.binary_search(&id).expect("item collected above") as u32;
    let dense_user = |id: u64| user_ids.binary_search(&id).expect("user collected above") as u32;

    let mut slices = vec![PeriodSlice::default(); periods as usize];
    for period_group in retained.chunk_by(|a, b| a.0 == b.0) {
        let p = period_group[0].0 as usize;
        let mut users = Vec::new();
        let mut offsets = vec![0];
        let mut values = Vec::with_capacity(period_group.len());
        for user_group in period_group.chunk_by(|a, b| a.1 == b.1) {
            users.push(dense_user(user_group[0].1));
            // Sorted by item id, hence by dense item index.
            values.extend(user_group.iter().map(|e| dense_item(e.2)));
            offsets.push(values.len());
        }
        slices[p] = PeriodSlice {
            users,
            items: Csr::from_parts(offsets, values),
        };
    }

    report.events_kept = retained.len();
    report.users = user_ids.len();
    report.items = item_ids.len();
    report.periods = periods;

    let tensor = FingerprintTensor::from_parts(
        user_ids.into_iter().map(UserId).collect(),
        item_ids.into_iter().map(ItemId).collect(),
        catalog_size,
        min_items,
        slices,
    );
    Ok((tensor, report))
}
