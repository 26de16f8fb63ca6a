//! Brute-force reference implementations. Nothing here touches the match
//! index or the dense selection code under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use unicity_core::{Event, Fingerprint, FingerprintTensor, ItemId, UserId, Window};

/// Window fingerprints rebuilt from the raw event stream.
pub fn scan_fingerprints(tensor: &FingerprintTensor, window: Window) -> Vec<Fingerprint> {
    let mut by_user: BTreeMap<UserId, Vec<ItemId>> = BTreeMap::new();
    for e in tensor.events().filter(|e| window.contains(e.period.0)) {
        by_user.entry(e.user).or_default().push(e.item);
    }
    by_user
        .into_iter()
        .map(|(owner, mut items)| {
            items.sort_unstable();
            items.dedup();
            Fingerprint { owner, window, items }
        })
        .collect()
}

/// Users whose fingerprint contains every item of `q`, by full scan.
pub fn scan_matches(fps: &[Fingerprint], q: &[ItemId]) -> Vec<UserId> {
    fps.iter()
        .filter(|fp| q.iter().all(|i| fp.items.contains(i)))
        .map(|fp| fp.owner)
        .collect()
}

pub fn scan_count(fps: &[Fingerprint], q: &[ItemId]) -> usize {
    scan_matches(fps, q).len()
}

pub fn scan_popularity(fps: &[Fingerprint]) -> BTreeMap<ItemId, u32> {
    let mut counts = BTreeMap::new();
    for fp in fps {
        for &i in &fp.items {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    counts
}

/// The `n` least popular items of `fp`, ties by ascending id.
pub fn least_popular(fp: &Fingerprint, n: usize, counts: &BTreeMap<ItemId, u32>) -> Vec<ItemId> {
    let mut ranked: Vec<(u32, ItemId)> = fp.items.iter().map(|i| (counts[i], *i)).collect();
    ranked.sort();
    let mut out: Vec<ItemId> = ranked.into_iter().take(n).map(|(_, i)| i).collect();
    out.sort();
    out
}

/// u1={a,b}, u2={a,c}, u3={a,b,c}, u4={d}; a..d = items 1..4, one period.
pub fn d0_events() -> Vec<Event> {
    let rows: [(u64, &[u64]); 4] = [(1, &[1, 2]), (2, &[1, 3]), (3, &[1, 2, 3]), (4, &[4])];
    rows.iter()
        .flat_map(|(u, items)| items.iter().map(move |&i| Event::new(*u, i, 0)))
        .collect()
}

pub fn d0() -> FingerprintTensor {
    let options = unicity_core::BuildOptions {
        min_items_per_period: 1,
        ..Default::default()
    };
    unicity_core::build_tensor(d0_events(), &options).unwrap().0
}
