mod common;

use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, ProptestConfig};
use proptest::strategy::Strategy;
use unicity_core::io::{load_tensor, read_events, save_tensor, write_events};
use unicity_core::{build_tensor, BuildOptions, Event, FingerprintTensor, ItemId, Window};

fn events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..50, 0u64..30, 0u32..4), 1..500)
        .prop_map(|raw| raw.into_iter().map(|(u, i, p)| Event::new(u, i, p)).collect())
}

fn build(events: &[Event], min_items: usize) -> Option<FingerprintTensor> {
    let options = BuildOptions {
        min_items_per_period: min_items,
        ..Default::default()
    };
    build_tensor(events.iter().copied(), &options).ok().map(|(t, _)| t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rebuilding_from_own_events_is_identity(events in events(), min_items in 1usize..4) {
        if let Some(t) = build(&events, min_items) {
            let again = build(&t.events().collect::<Vec<_>>(), min_items).unwrap();
            prop_assert_eq!(again, t);
        }
    }

    #[test]
    fn fingerprint_sizes_sum_to_popularity(events in events()) {
        let t = build(&events, 1).unwrap();
        for a in 0..t.num_periods() {
            for b in a..t.num_periods() {
                let w = Window::new(a, b).unwrap();
                let fps = t.window_fingerprints(w).unwrap();
                let sizes: usize = fps.fingerprints().map(|fp| fp.len()).sum();
                prop_assert_eq!(sizes as u64, t.popularity(w).unwrap().total());
                prop_assert_eq!(sizes, fps.nnz());
            }
        }
    }

    #[test]
    fn wider_windows_hold_supersets(events in events()) {
        let t = build(&events, 1).unwrap();
        let periods = t.num_periods();
        for a in 0..periods {
            for b in a..periods {
                let inner = t.window_fingerprints(Window::new(a, b).unwrap()).unwrap();
                let outer = t.full_window();
                for fp in inner.fingerprints() {
                    let wide = t.window_fingerprint(fp.owner, outer).unwrap();
                    prop_assert!(fp.items.iter().all(|&i| wide.contains(i)));
                }
            }
        }
    }

    #[test]
    fn kept_user_periods_meet_threshold(events in events(), min_items in 1usize..5) {
        if let Some(t) = build(&events, min_items) {
            for p in 0..t.num_periods() {
                for u in t.users_in_period(p).collect::<Vec<_>>() {
                    prop_assert!(t.period_items(u, p).unwrap().len() >= min_items);
                }
            }
        }
    }

    #[test]
    fn binary_cache_round_trips(events in events()) {
        let t = build(&events, 1).unwrap();
        let mut buf = Vec::new();
        save_tensor(&mut buf, &t).unwrap();
        prop_assert_eq!(load_tensor(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn csv_round_trips(events in events()) {
        let t = build(&events, 1).unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &t).unwrap();
        let parsed = read_events(buf.as_slice()).unwrap();
        prop_assert_eq!(parsed.rejected, 0);
        prop_assert_eq!(build(&parsed.events, 1).unwrap(), t);
    }
}

#[test]
fn exclusions_drop_items_before_thresholding() {
    let events = common::d0_events();
    let options = BuildOptions {
        min_items_per_period: 2,
        exclusions: [ItemId(1)].into_iter().collect(),
        ..Default::default()
    };
    let (t, report) = build_tensor(events, &options).unwrap();
    // Without item 1 only u3 keeps two items.
    assert_eq!(t.num_users(), 1);
    assert_eq!(report.excluded, 3);
}

#[test]
fn truncated_cache_is_rejected() {
    let t = common::d0();
    let mut buf = Vec::new();
    save_tensor(&mut buf, &t).unwrap();
    for cut in [0, 4, 8, buf.len() / 2, buf.len() - 1] {
        assert!(load_tensor(&buf[..cut]).is_err(), "cut at {cut}");
    }
    buf.push(0);
    assert!(load_tensor(buf.as_slice()).is_err());
}
