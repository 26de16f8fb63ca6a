//! Value parsers for command-line flags.

use unicity_core::{FitForm, Strategy};

/// `"1..10"` (inclusive), `"1..=10"`, `"1,2,4"` or a single number.
pub fn n_list(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let mut out = if let Some((lo, hi)) = s.split_once("..") {
        let lo = count(lo)?;
        let hi = count(hi.trim_start_matches('='))?;
        if hi < lo {
            return Err(format!("empty range {s:?}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(count).collect::<Result<Vec<_>, _>>()?
    };
    if out.contains(&0) {
        return Err("n must be at least 1".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Comma-separated sizes; `_` separators and `k`/`M` suffixes allowed.
pub fn size_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(size).collect()
}

pub fn size(s: &str) -> Result<usize, String> {
    let t = s.trim().replace('_', "");
    let (digits, scale) = match t.chars().last() {
        Some('k' | 'K') => (&t[..t.len() - 1], 1_000),
        Some('m' | 'M') => (&t[..t.len() - 1], 1_000_000),
        _ => (t.as_str(), 1),
    };
    let v = count(digits)?;
    v.checked_mul(scale).ok_or_else(|| format!("{s:?} is too large"))
}

fn count(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|e| format!("bad number {s:?}: {e}"))
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    }
    .map_err(|e| format!("bad seed {s:?}: {e}"))
}

/// `random`, `popularity` or `both`.
pub fn strategies(s: &str) -> Result<Vec<Strategy>, String> {
    match s.trim() {
        "both" | "all" => Ok(Strategy::ALL.to_vec()),
        one => Ok(vec![one.parse()?]),
    }
}

/// Comma-separated fit forms, or `all`.
pub fn forms(s: &str) -> Result<Vec<FitForm>, String> {
    if s.trim() == "all" {
        return Ok(FitForm::ALL.to_vec());
    }
    let mut out = s
        .split(',')
        .map(|f| f.trim().parse())
        .collect::<Result<Vec<FitForm>, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}
