//! Window fingerprints of a whole population and per-item popularity.

use std::sync::Arc;

use crate::csr::Csr;
use crate::error::{Error, Result};
use crate::model::{Fingerprint, FingerprintTensor, ItemId, UserId, Window};

/// Fingerprints of every user present in a window, one row per user in
/// ascending [`UserId`] order.
#[derive(Clone, Debug)]
pub struct FingerprintSet {
    window: Window,
    user_ids: Arc<[UserId]>,
    item_ids: Arc<[ItemId]>,
    /// Dense tensor user index of each row.
    users: Vec<u32>,
    /// Dense item indices per row.
    items: Csr,
}

impl FingerprintSet {
    pub(crate) fn from_tensor(tensor: &FingerprintTensor, window: Window) -> Result<Self> {
        let (users, items) = if window.len() == 1 {
            let slice = &tensor.periods[window.first() as usize];
            (slice.users.clone(), slice.items.clone())
        } else {
            let mut pairs: Vec<(u32, u32)> = Vec::new();
            for p in window.periods() {
                let slice = &tensor.periods[p as usize];
                for (&u, row) in slice.users.iter().zip(slice.items.iter()) {
                    pairs.extend(row.iter().map(|&i| (u, i)));
                }
            }
            pairs.sort_unstable();
            pairs.dedup();
            let mut users = Vec::new();
            let mut offsets = vec![0];
            let mut values = Vec::with_capacity(pairs.len());
            for group in pairs.chunk_by(|a, b| a.0 == b.0) {
                users.push(group[0].0);
                values.extend(group.iter().map(|p| p.1));
                offsets.push(values.len());
            }
            (users, Csr::from_parts(offsets, values))
        };
        Ok(Self {
            window,
            user_ids: Arc::clone(&tensor.user_ids),
            item_ids: Arc::clone(&tensor.item_ids),
            users,
            items,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Number of users (rows).
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Σ |fingerprint| over all rows.
    pub fn nnz(&self) -> usize {
        self.items.nnz()
    }

    pub fn user_id(&self, row: usize) -> UserId {
        self.user_ids[self.users[row] as usize]
    }

    pub fn user_ids(&self) -> impl ExactSizeIterator<Item = UserId> + '_ {
        self.users.iter().map(|&u| self.user_ids[u as usize])
    }

    pub fn row_of(&self, user: UserId) -> Option<usize> {
        let dense = self.user_ids.binary_search(&user).ok()? as u32;
        self.users.binary_search(&dense).ok()
    }

    pub fn fingerprint(&self, row: usize) -> Fingerprint {
        Fingerprint {
            owner: self.user_id(row),
            window: self.window,
            items: self.items.row(row).iter().map(|&i| self.item_ids[i as usize]).collect(),
        }
    }

    pub fn fingerprints(&self) -> impl Iterator<Item = Fingerprint> + '_ {
        (0..self.len()).map(|r| self.fingerprint(r))
    }

    /// Rows restricted to `rows`, which must be strictly ascending.
    pub fn subset(&self, rows: &[usize]) -> FingerprintSet {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        Self {
            window: self.window,
            user_ids: Arc::clone(&self.user_ids),
            item_ids: Arc::clone(&self.item_ids),
            users: rows.iter().map(|&r| self.users[r]).collect(),
            items: self.items.select_rows(rows),
        }
    }

    pub fn popularity(&self) -> PopularityTable {
        let mut counts = vec![0u32; self.item_ids.len()];
        for &i in self.items.values() {
            counts[i as usize] += 1;
        }
        PopularityTable {
            window: self.window,
            item_ids: Arc::clone(&self.item_ids),
            counts,
        }
    }

    pub(crate) fn dense_row(&self, row: usize) -> &[u32] {
        self.items.row(row)
    }

    pub(crate) fn rows(&self) -> &Csr {
        &self.items
    }

    pub(crate) fn catalog(&self) -> &Arc<[ItemId]> {
        &self.item_ids
    }
}

/// Number of distinct users whose window fingerprint contains each item.
#[derive(Clone, Debug)]
pub struct PopularityTable {
    window: Window,
    item_ids: Arc<[ItemId]>,
    /// Indexed by dense item index; zero for items unused in the window.
    counts: Vec<u32>,
}

impl PopularityTable {
    pub fn window(&self) -> Window {
        self.window
    }

    /// User count of `item`, or `None` if no user in the window has it.
    pub fn get(&self, item: ItemId) -> Option<u32> {
        let i = self.item_ids.binary_search(&item).ok()?;
        Some(self.counts[i]).filter(|&c| c > 0)
    }

    /// Items with at least one user, ascending by id.
    pub fn iter(&self) -> impl Iterator<Item = (ItemId, u32)> + '_ {
        self.item_ids
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&i, &c)| (i, c))
    }

    /// Number of items with at least one user.
    pub fn len(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Σ counts, equal to Σ |fingerprint| over the window's users.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub(crate) fn dense_counts(&self) -> &[u32] {
        &self.counts
    }

    pub(crate) fn same_catalog(&self, catalog: &Arc<[ItemId]>) -> bool {
        Arc::ptr_eq(&self.item_ids, catalog) || *self.item_ids == **catalog
    }

    pub(crate) fn check_covers(&self, fp: &Fingerprint) -> Result<()> {
        match fp.items.iter().find(|&&i| self.get(i).is_none()) {
            Some(&missing) => Err(Error::MissingPopularity { item: missing.0 }),
            None => Ok(()),
        }
    }
}
