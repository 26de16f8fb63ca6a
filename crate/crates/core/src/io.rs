//! Text ingestion formats and the binary dataset cache.
//!
//! Events: one `user_id,item_id,period_index` record per line (unsigned
//! integers). A first line whose first field is not numeric is a header.
//! Blank lines are skipped; malformed lines are counted as rejected.
//!
//! Exclusions: one item id per line. Categories: `item_id,label` per line.
//!
//! Dataset cache, all integers little-endian:
//!
//! ```text
//! magic "UNIQTNSR" | version u8 = 1
//! periods u32 | catalog_size u64 | min_items_per_period u64
//! users u64, then that many u64 user ids (ascending)
//! items u64, then that many u64 item ids (ascending)
//! per period: present u64, present × u32 dense user index,
//!             nnz u64, present × u64 row end offsets, nnz × u32 dense item index
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};

use crate::csr::Csr;
use crate::error::{Error, Result};
use crate::model::{Event, FingerprintTensor, ItemId, PeriodSlice, UserId};

pub const MAGIC: &[u8; 8] = b"UNIQTNSR";
pub const FORMAT_VERSION: u8 = 1;

/// Up to this many rejected lines are kept verbatim for reporting.
const KEEP_REJECTED: usize = 20;

#[derive(Clone, Debug, Default)]
pub struct ParsedEvents {
    pub events: Vec<Event>,
    pub header: bool,
    pub rejected: usize,
    /// (line number, reason) of the first few rejected lines.
    pub rejected_samples: Vec<(usize, String)>,
}

pub fn read_events<R: BufRead>(reader: R) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if line_no == 1 && fields[0].parse::<u64>().is_err() {
            out.header = true;
            continue;
        }
        match parse_event(&fields) {
            Ok(e) => out.events.push(e),
            Err(reason) => {
                out.rejected += 1;
                if out.rejected_samples.len() < KEEP_REJECTED {
                    out.rejected_samples.push((line_no, reason));
                }
            }
        }
    }
    Ok(out)
}

fn parse_event(fields: &[&str]) -> std::result::Result<Event, String> {
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    let num = |s: &str, what: &str| s.parse::<u64>().map_err(|e| format!("bad {what} {s:?}: {e}"));
    let period = num(fields[2], "period")?;
    let period = u32::try_from(period).map_err(|_| format!("period {period} out of range"))?;
    Ok(Event::new(
        num(fields[0], "user id")?,
        num(fields[1], "item id")?,
        period,
    ))
}

pub fn write_events<W: Write>(mut writer: W, tensor: &FingerprintTensor) -> Result<()> {
    for e in tensor.events() {
        writeln!(writer, "{},{},{}", e.user, e.item, e.period)?;
    }
    writer.flush()?;
    Ok(())
}

/// Item ids, one per line; blank lines and `#` comments are skipped.
pub fn read_exclusions<R: BufRead>(reader: R) -> Result<HashSet<ItemId>> {
    let mut out = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let id = t.parse::<u64>().map_err(|e| Error::Parse {
            line: n + 1,
            message: format!("bad item id {t:?}: {e}"),
        })?;
        out.insert(ItemId(id));
    }
    Ok(out)
}

/// `item_id,label` lines; a non-numeric first line is a header.
pub fn read_categories<R: BufRead>(reader: R) -> Result<HashMap<ItemId, String>> {
    let mut out = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (id, label) = t.split_once(',').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected item_id,label".into(),
        })?;
        match id.trim().parse::<u64>() {
            Ok(id) => {
                out.insert(ItemId(id), label.trim().to_owned());
            }
            Err(_) if n == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("bad item id {id:?}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

pub fn save_tensor<W: Write>(mut w: W, tensor: &FingerprintTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&tensor.num_periods().to_le_bytes())?;
    w.write_all(&tensor.catalog_size().to_le_bytes())?;
    w.write_all(&(tensor.min_items_per_period() as u64).to_le_bytes())?;
    write_u64s(&mut w, tensor.user_ids().iter().map(|u| u.0), tensor.num_users())?;
    write_u64s(&mut w, tensor.item_ids().iter().map(|i| i.0), tensor.num_items())?;
    for slice in &tensor.periods {
        w.write_all(&(slice.users.len() as u64).to_le_bytes())?;
        write_u32s(&mut w, &slice.users)?;
        w.write_all(&(slice.items.nnz() as u64).to_le_bytes())?;
        for &end in &slice.items.offsets()[1..] {
            w.write_all(&(end as u64).to_le_bytes())?;
        }
        write_u32s(&mut w, slice.items.values())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor<R: Read>(mut r: R) -> Result<FingerprintTensor> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = read_array::<1>(&mut r)?[0];
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let periods = u32::from_le_bytes(read_array(&mut r)?);
    let catalog_size = read_u64(&mut r)?;
    let min_items = read_u64(&mut r)? as usize;
    let users = read_len(&mut r)?;
    let user_ids: Vec<UserId> = read_u64s(&mut r, users)?.into_iter().map(UserId).collect();
    let items = read_len(&mut r)?;
    let item_ids: Vec<ItemId> = read_u64s(&mut r, items)?.into_iter().map(ItemId).collect();
    if !user_ids.windows(2).all(|w| w[0] < w[1]) || !item_ids.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Format("ids are not strictly ascending".into()));
    }

    let mut slices = Vec::with_capacity(periods as usize);
    for p in 0..periods {
        let present = read_len(&mut r)?;
        let users_p = read_u32s(&mut r, present)?;
        let nnz = read_len(&mut r)?;
        let mut offsets = Vec::with_capacity(present + 1);
        offsets.push(0usize);
        for end in read_u64s(&mut r, present)? {
            offsets.push(end as usize);
        }
        let values = read_u32s(&mut r, nnz)?;
        let corrupt = |what: &str| Error::Format(format!("period {p}: {what}"));
        if users_p.iter().any(|&u| u as usize >= users) || !users_p.windows(2).all(|w| w[0] < w[1]) {
            return Err(corrupt("bad user indices"));
        }
        if !offsets.windows(2).all(|w| w[0] <= w[1]) || offsets.last() != Some(&nnz) {
            return Err(corrupt("bad row offsets"));
        }
        let items_csr = Csr::from_parts(offsets, values);
        if items_csr
            .iter()
            .any(|row| row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&i| i as usize >= items))
        {
            return Err(corrupt("bad item lists"));
        }
        slices.push(PeriodSlice {
            users: users_p,
            items: items_csr,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after last period".into()));
    }
    Ok(FingerprintTensor::from_parts(
        user_ids.into(),
        item_ids.into(),
        catalog_size,
        min_items,
        slices,
    ))
}

fn write_u64s<W: Write>(w: &mut W, values: impl Iterator<Item = u64>, len: usize) -> Result<()> {
    w.write_all(&(len as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_u32s<W: Write>(w: &mut W, values: &[u32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_len(r: &mut impl Read) -> Result<usize> {
    let v = read_u64(r)?;
    usize::try_from(v)
        .ok()
        .filter(|&v| v <= u32::MAX as usize * 64)
        .ok_or_else(|| Error::Format(format!("implausible length {v}")))
}

fn read_bytes(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Format("unexpected end of file".into()));
    }
    Ok(buf)
}

fn read_u64s(r: &mut impl Read, n: usize) -> Result<Vec<u64>> {
    Ok(read_bytes(r, n * 8)?
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u32s(r: &mut impl Read, n: usize) -> Result<Vec<u32>> {
    Ok(read_bytes(r, n * 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
