//! Text formats for slate datasets and generated slates.
//!
//! ```text
//! slatelab-dataset v1 n=100 k=3 seed=7
//! 4 17 4 | 0 1 0
//! 9 0 52 | 1 1 0 | 12
//! ```
//!
//! Each record lists `k` document ids, `|`, `k` responses, and optionally `|`
//! and a user id. Generated slates use the header `slatelab-slates v1 n=.. k=..`
//! and carry only the document ids.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{parse_err, Result};
use crate::slate::{ResponseVector, Slate, SlateDataset, SlateRecord};

const DATASET_MAGIC: &str = "slatelab-dataset";
const SLATES_MAGIC: &str = "slatelab-slates";
const VERSION: &str = "v1";

pub fn write_dataset(ds: &SlateDataset) -> String {
    let mut out = format!("{DATASET_MAGIC} {VERSION} n={} k={} seed={}\n", ds.n, ds.k, ds.seed);
    for rec in &ds.records {
        push_ids(&mut out, rec.slate.docs().iter().copied());
        out.push_str(" |");
        for &r in rec.response.values() {
            out.push_str(if r { " 1" } else { " 0" });
        }
        if let Some(u) = rec.user {
            let _ = write!(out, " | {u}");
        }
        out.push('\n');
    }
    out
}

fn push_ids(out: &mut String, ids: impl Iterator<Item = usize>) {
    for (i, d) in ids.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{d}");
    }
}

struct Header {
    n: usize,
    k: usize,
    seed: Option<u64>,
}

fn parse_header(line: Option<&str>, magic: &str, need_seed: bool) -> Result<Header> {
    let line = line.ok_or_else(|| parse_err(1, "missing header"))?;
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(magic) {
        return Err(parse_err(1, format!("expected header starting with `{magic}`")));
    }
    if tokens.next() != Some(VERSION) {
        return Err(parse_err(1, format!("unsupported version, expected {VERSION}")));
    }
    let (mut n, mut k, mut seed) = (None, None, None);
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{tok}`")))?;
        let bad = || parse_err(1, format!("bad value for `{key}`: `{value}`"));
        let slot = match key {
            "n" => &mut n,
            "k" => &mut k,
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| bad())?);
                continue;
            }
            _ => return Err(parse_err(1, format!("unknown header field `{key}`"))),
        };
        if slot.is_some() {
            return Err(parse_err(1, format!("duplicate header field `{key}`")));
        }
        *slot = Some(value.parse::<usize>().map_err(|_| bad())?);
    }
    let n = n.ok_or_else(|| parse_err(1, "header lacks n"))?;
    let k = k.ok_or_else(|| parse_err(1, "header lacks k"))?;
    if n == 0 || k == 0 {
        return Err(parse_err(1, "n and k must be positive"));
    }
    if need_seed && seed.is_none() {
        return Err(parse_err(1, "header lacks seed"));
    }
    Ok(Header { n, k, seed })
}

fn parse_ids(field: &str, h: &Header, line: usize) -> Result<Vec<usize>> {
    let ids = field
        .split_ascii_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(line, format!("bad document id `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != h.k {
        return Err(parse_err(line, format!("expected {} document ids, found {}", h.k, ids.len())));
    }
    if let Some(&d) = ids.iter().find(|&&d| d >= h.n) {
        return Err(parse_err(line, format!("document id {d} out of range for n = {}", h.n)));
    }
    Ok(ids)
}

pub fn parse_dataset(text: &str) -> Result<SlateDataset> {
    let mut lines = text.lines();
    let h = parse_header(lines.next(), DATASET_MAGIC, true)?;
    let mut ds = SlateDataset::new(h.n, h.k, h.seed.unwrap_or_default());
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(lineno, "expected `docs | responses [| user]`"));
        }
        let docs = parse_ids(fields[0], &h, lineno)?;
        let bits = fields[1]
            .split_ascii_whitespace()
            .map(|t| match t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(parse_err(lineno, format!("response `{t}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.len() != h.k {
            return Err(parse_err(lineno, format!("expected {} responses, found {}", h.k, bits.len())));
        }
        let user = match fields.get(2) {
            None => None,
            Some(f) => Some(
                f.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(lineno, format!("bad user id `{}`", f.trim())))?,
            ),
        };
        ds.records.push(SlateRecord {
            slate: Slate::from_docs(docs),
            response: ResponseVector::new(bits),
            user,
        });
    }
    Ok(ds)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<SlateDataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn save_dataset(ds: &SlateDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_dataset(ds))?;
    Ok(())
}

pub fn write_slates(n: usize, k: usize, slates: &[Slate]) -> String {
    let mut out = format!("{SLATES_MAGIC} {VERSION} n={n} k={k}\n");
    for s in slates {
        push_ids(&mut out, s.docs().iter().copied());
        out.push('\n');
    }
    out
}

/// Returns `(n, k, slates)`.
pub fn parse_slates(text: &str) -> Result<(usize, usize, Vec<Slate>)> {
    let mut lines = text.lines();
    let h = parse_header(lines.next(), SLATES_MAGIC, false)?;
    let mut slates = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        slates.push(Slate::from_docs(parse_ids(line, &h, i + 2)?));
    }
    Ok((h.n, h.k, slates))
}
