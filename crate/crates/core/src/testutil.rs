use crate::model::{build_tensor, BuildOptions, Event, FingerprintTensor};

/// u1={a,b}, u2={a,c}, u3={a,b,c}, u4={d} with a..d = items 1..4, one period.
pub(crate) fn d0() -> FingerprintTensor {
    let rows: [(u64, &[u64]); 4] = [(1, &[1, 2]), (2, &[1, 3]), (3, &[1, 2, 3]), (4, &[4])];
    let events = rows
        .iter()
        .flat_map(|(u, items)| items.iter().map(move |&i| Event::new(*u, i, 0)));
    let options = BuildOptions {
        min_items_per_period: 1,
        ..Default::default()
    };
    build_tensor(events, &options).unwrap().0
}
