//! Inverted item → user index answering "who has all of these items".

use std::sync::Arc;

use crate::csr::Csr;
use crate::error::{Error, Result};
use crate::fingerprint::FingerprintSet;
use crate::model::{ItemId, UserId, Window};
use crate::unicity::QuasiIdentifier;

/// Posting lists at least `population / DENSE_DIVISOR` long also get a bitset.
const DENSE_DIVISOR: usize = 32;
/// Bitsets are not worth it for tiny populations.
const DENSE_MIN_POPULATION: usize = 2048;
const NO_BITSET: u32 = u32::MAX;

/// Inverted index over one population's window fingerprints.
///
/// Posting lists hold population rows (ascending, so also ascending by
/// [`UserId`]). Long lists are mirrored as bitsets so that intersections of
/// popular items run word-at-a-time.
#[derive(Clone, Debug)]
pub struct MatchIndex {
    window: Window,
    item_ids: Arc<[ItemId]>,
    population: Vec<UserId>,
    postings: Csr,
    bitset_slot: Vec<u32>,
    bits: Vec<u64>,
    words: usize,
}

impl MatchIndex {
    pub fn new(fps: &FingerprintSet) -> Self {
        let n = fps.len();
        let postings = fps.rows().transpose(fps.catalog().len());
        let words = n.div_ceil(64);
        let mut bitset_slot = vec![NO_BITSET; postings.rows()];
        let mut bits = Vec::new();
        if n >= DENSE_MIN_POPULATION {
            let mut slots = 0u32;
            for (item, list) in postings.iter().enumerate() {
                if list.len() * DENSE_DIVISOR >= n {
                    bitset_slot[item] = slots;
                    slots += 1;
                    let start = bits.len();
                    bits.resize(start + words, 0u64);
                    for &r in list {
                        bits[start + (r as usize >> 6)] |= 1u64 << (r & 63);
                    }
                }
            }
        }
        Self {
            window: fps.window(),
            item_ids: Arc::clone(fps.catalog()),
            population: fps.user_ids().collect(),
            postings,
            bitset_slot,
            bits,
            words,
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn population_size(&self) -> usize {
        self.population.len()
    }

    pub fn population(&self) -> &[UserId] {
        &self.population
    }

    fn dense_item(&self, item: ItemId) -> Option<u32> {
        self.item_ids.binary_search(&item).ok().map(|i| i as u32)
    }

    /// Users whose fingerprint contains `item`, ascending.
    pub fn posting(&self, item: ItemId) -> Vec<UserId> {
        self.dense_item(item)
            .map(|i| {
                self.postings
                    .row(i as usize)
                    .iter()
                    .map(|&r| self.population[r as usize])
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn posting_len(&self, item: ItemId) -> usize {
        self.dense_item(item).map_or(0, |i| self.postings.row(i as usize).len())
    }

    /// Number of users whose fingerprint contains every item of `query`.
    /// Items unknown to the index match nobody.
    pub fn match_count(&self, query: &[ItemId]) -> Result<usize> {
        let dense = self.dense_query(query)?;
        Ok(dense.map_or(0, |q| self.count_dense(&q, usize::MAX)))
    }

    /// Users whose fingerprint contains every item of `query`, ascending.
    pub fn matches(&self, query: &[ItemId]) -> Result<Vec<UserId>> {
        let Some(mut q) = self.dense_query(query)? else {
            return Ok(Vec::new());
        };
        self.order_by_length(&mut q);
        let (first, rest) = q.split_first().expect("non-empty query");
        Ok(self
            .postings
            .row(*first as usize)
            .iter()
            .filter(|&&r| {
                rest.iter()
                    .all(|&i| self.postings.row(i as usize).binary_search(&r).is_ok())
            })
            .map(|&r| self.population[r as usize])
            .collect())
    }

    /// True iff exactly one user matches the quasi-identifier. That user is
    /// its source, since the items were taken from the source's fingerprint.
    pub fn is_unique(&self, q: &QuasiIdentifier) -> bool {
        match self.dense_query(&q.items) {
            Ok(Some(dense)) => self.count_dense(&dense, 2) == 1,
            _ => false,
        }
    }

    fn dense_query(&self, query: &[ItemId]) -> Result<Option<Vec<u32>>> {
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let mut dense = Vec::with_capacity(query.len());
        for &item in query {
            match self.dense_item(item) {
                Some(i) => dense.push(i),
                None => return Ok(None),
            }
        }
        Ok(Some(dense))
    }

    fn order_by_length(&self, q: &mut Vec<u32>) {
        q.sort_unstable();
        q.dedup();
        q.sort_by_key(|&i| (self.postings.row(i as usize).len(), i));
    }

    fn bitset(&self, item: u32) -> Option<&[u64]> {
        match self.bitset_slot[item as usize] {
            NO_BITSET => None,
            slot => {
                let start = slot as usize * self.words;
                Some(&self.bits[start..start + self.words])
            }
        }
    }

    /// Counts users containing every dense item in `query`, stopping once
    /// `limit` matches are found. Lists are intersected smallest-first.
    pub(crate) fn count_dense(&self, query: &[u32], limit: usize) -> usize {
        debug_assert!(!query.is_empty());
        let mut q: Vec<u32> = query.to_vec();
        self.order_by_length(&mut q);
        let smallest = self.postings.row(q[0] as usize);
        if q.len() == 1 || smallest.is_empty() {
            return smallest.len();
        }

        // The smallest list is dense only if every list is.
        if let Some(first) = self.bitset(q[0]) {
            let others: Vec<&[u64]> = q[1..]
                .iter()
                .map(|&i| self.bitset(i).expect("longer list is dense"))
                .collect();
            let mut count = 0usize;
            for (w, &word) in first.iter().enumerate() {
                let mut acc = word;
                for other in &others {
                    acc &= other[w];
                    if acc == 0 {
                        break;
                    }
                }
                count += acc.count_ones() as usize;
                if count >= limit {
                    return count;
                }
            }
            return count;
        }

        enum Probe<'a> {
            Bits(&'a [u64]),
            List(&'a [u32], usize),
        }
        let mut probes: Vec<Probe<'_>> = q[1..]
            .iter()
            .map(|&i| match self.bitset(i) {
                Some(b) => Probe::Bits(b),
                None => Probe::List(self.postings.row(i as usize), 0),
            })
            .collect();

        let mut count = 0usize;
        'candidates: for &r in smallest {
            for probe in probes.iter_mut() {
                match probe {
                    Probe::Bits(b) => {
                        if b[r as usize >> 6] & (1u64 << (r & 63)) == 0 {
                            continue 'candidates;
                        }
                    }
                    Probe::List(list, pos) => {
                        *pos = gallop(list, *pos, r);
                        if *pos == list.len() {
                            break 'candidates;
                        }
                        if list[*pos] != r {
                            continue 'candidates;
                        }
                    }
                }
            }
            count += 1;
            if count >= limit {
                break;
            }
        }
        count
    }
}

/// First index `>= from` whose value is `>= target`, by exponential then
/// binary search.
#[inline]
fn gallop(list: &[u32], from: usize, target: u32) -> usize {
    if from >= list.len() || list[from] >= target {
        return from;
    }
    let mut step = 1;
    let mut lo = from;
    let mut hi = from + 1;
    while hi < list.len() && list[hi] < target {
        lo = hi;
        step *= 2;
        hi = from + step;
    }
    let hi = hi.min(list.len());
    lo + 1 + list[lo + 1..hi].partition_point(|&v| v < target)
}
