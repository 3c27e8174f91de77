//! Session-log ingestion: YOOCHOOSE-style click and buy files to slates.
//!
//! Clicks are `session,timestamp,item,category`; buys are
//! `session,timestamp,item,price,quantity`. Timestamps are RFC 3339.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{invalid, parse_err, Result};
use crate::rng::stream;
use crate::slate::{ResponseVector, Slate, SlateDataset, SlateRecord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClickRecord {
    pub session: u64,
    pub timestamp: DateTime<Utc>,
    pub item: u64,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuyRecord {
    pub session: u64,
    pub timestamp: DateTime<Utc>,
    pub item: u64,
    pub price: u64,
    pub quantity: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: u64,
    /// Clicked items in time order; ties keep file order.
    pub clicks: Vec<u64>,
    pub buys: BTreeSet<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Windowing {
    NonOverlapping,
    Sliding,
}

impl Windowing {
    pub fn name(self) -> &'static str {
        match self {
            Windowing::NonOverlapping => "non-overlapping",
            Windowing::Sliding => "sliding",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "non-overlapping" => Ok(Windowing::NonOverlapping),
            "sliding" => Ok(Windowing::Sliding),
            other => Err(invalid(format!("unknown windowing `{other}`; expected non-overlapping or sliding"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestConfig {
    pub k: usize,
    pub corpus_cap: usize,
    pub zero_fraction: f64,
    pub windowing: Windowing,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { k: 5, corpus_cap: 10_000, zero_fraction: 0.5, windowing: Windowing::NonOverlapping, seed: 0 }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.corpus_cap == 0 {
            return Err(invalid("slate size and corpus cap must be positive"));
        }
        if !(self.zero_fraction > 0.0 && self.zero_fraction < 1.0) {
            return Err(invalid(format!("zero-response fraction {} is outside (0, 1)", self.zero_fraction)));
        }
        Ok(())
    }
}

fn fields<'a>(line: &'a str, lineno: usize, want: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != want {
        return Err(parse_err(lineno, format!("expected {want} comma-separated fields, found {}", f.len())));
    }
    Ok(f)
}

fn number(s: &str, what: &str, lineno: usize) -> Result<u64> {
    s.parse().map_err(|_| parse_err(lineno, format!("{what} `{s}` is not a non-negative integer")))
}

fn timestamp(s: &str, lineno: usize) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| parse_err(lineno, format!("timestamp `{s}`: {e}")))
}

/// Reads non-blank lines, numbering them from 1.
fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Into::into))
        .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()))
}

pub fn parse_clicks<R: BufRead>(reader: R) -> Result<Vec<ClickRecord>> {
    lines(reader)
        .map(|r| {
            let (n, line) = r?;
            let f = fields(&line, n, 4)?;
            Ok(ClickRecord {
                session: number(f[0], "session id", n)?,
                timestamp: timestamp(f[1], n)?,
                item: number(f[2], "item id", n)?,
                category: f[3].to_string(),
            })
        })
        .collect()
}

pub fn parse_buys<R: BufRead>(reader: R) -> Result<Vec<BuyRecord>> {
    lines(reader)
        .map(|r| {
            let (n, line) = r?;
            let f = fields(&line, n, 5)?;
            let quantity = number(f[4], "quantity", n)?;
            if quantity == 0 {
                return Err(parse_err(n, "quantity must be at least 1"));
            }
            Ok(BuyRecord {
                session: number(f[0], "session id", n)?,
                timestamp: timestamp(f[1], n)?,
                item: number(f[2], "item id", n)?,
                price: number(f[3], "price", n)?,
                quantity,
            })
        })
        .collect()
}

/// Groups clicks into sessions ordered by id. Buys in sessions without
/// clicks are dropped.
pub fn group_sessions(clicks: &[ClickRecord], buys: &[BuyRecord]) -> Vec<Session> {
    let mut by_session: BTreeMap<u64, Vec<&ClickRecord>> = BTreeMap::new();
    for c in clicks {
        by_session.entry(c.session).or_default().push(c);
    }
    let mut bought: HashMap<u64, BTreeSet<u64>> = HashMap::new();
    for b in buys {
        bought.entry(b.session).or_default().insert(b.item);
    }
    by_session
        .into_iter()
        .map(|(id, mut cs)| {
            cs.sort_by_key(|c| c.timestamp);
            Session { id, clicks: cs.iter().map(|c| c.item).collect(), buys: bought.remove(&id).unwrap_or_default() }
        })
        .collect()
}

pub fn parse_logs<C: BufRead, B: BufRead>(clicks: C, buys: B) -> Result<Vec<Session>> {
    Ok(group_sessions(&parse_clicks(clicks)?, &parse_buys(buys)?))
}

/// A slate over original item ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemSlate {
    pub session: u64,
    pub items: Vec<u64>,
    pub response: ResponseVector,
}

fn windows(session: &Session, k: usize, mode: Windowing) -> Vec<ItemSlate> {
    if session.clicks.len() < k {
        return Vec::new();
    }
    let step = match mode {
        Windowing::NonOverlapping => k,
        Windowing::Sliding => 1,
    };
    (0..=session.clicks.len() - k)
        .step_by(step)
        .map(|start| {
            let items = session.clicks[start..start + k].to_vec();
            let response = ResponseVector::new(items.iter().map(|i| session.buys.contains(i)).collect());
            ItemSlate { session: session.id, items, response }
        })
        .collect()
}

/// Windows of `k` consecutive clicks, ordered by session then window.
pub fn build_slates(sessions: &[Session], cfg: &IngestConfig) -> Vec<ItemSlate> {
    sessions.par_iter().flat_map_iter(|s| windows(s, cfg.k, cfg.windowing)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub dataset: SlateDataset,
    /// Original item id of every remapped document, indexed by new id.
    pub items: Vec<u64>,
    pub dropped_for_rare_items: usize,
    pub dropped_zero_response: usize,
    /// Set when fewer than `corpus_cap` items were ever purchased, in which
    /// case no item was dropped.
    pub short_corpus: bool,
}

impl Ingested {
    /// `new_id original_id` per line.
    pub fn id_map_text(&self) -> String {
        self.items.iter().enumerate().map(|(new, old)| format!("{new} {old}\n")).collect()
    }
}

/// Keeps the `corpus_cap` most-purchased items (ties to the smaller id, and
/// every item when fewer were ever purchased), drops slates touching any
/// other item, remaps survivors to `0..N` in ascending original-id order,
/// then thins zero-response slates uniformly at random down to the target
/// fraction.
pub fn filter_and_rebalance(slates: &[ItemSlate], cfg: &IngestConfig) -> Result<Ingested> {
    cfg.validate()?;
    if slates.is_empty() {
        return Err(invalid("no slates to filter"));
    }
    let mut purchases: BTreeMap<u64, usize> = BTreeMap::new();
    for s in slates {
        for (item, &r) in s.items.iter().zip(s.response.values()) {
            *purchases.entry(*item).or_default() += usize::from(r);
        }
    }
    let bought = purchases.values().filter(|&&c| c > 0).count();
    let short_corpus = bought < cfg.corpus_cap;
    let mut items: Vec<u64> = if short_corpus {
        log::warn!("only {bought} distinct purchased items, fewer than the cap of {}; keeping every item", cfg.corpus_cap);
        purchases.into_keys().collect()
    } else {
        let mut ranked: Vec<(u64, usize)> = purchases.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.into_iter().take(cfg.corpus_cap).map(|(i, _)| i).collect()
    };
    items.sort_unstable();
    let remap: HashMap<u64, usize> = items.iter().enumerate().map(|(new, &old)| (old, new)).collect();

    let kept: Vec<(Vec<usize>, &ResponseVector)> = slates
        .iter()
        .filter_map(|s| {
            let docs: Option<Vec<usize>> = s.items.iter().map(|i| remap.get(i).copied()).collect();
            docs.map(|d| (d, &s.response))
        })
        .collect();
    let dropped_for_rare_items = slates.len() - kept.len();

    let zero: Vec<usize> = (0..kept.len()).filter(|&i| kept[i].1.clicks() == 0).collect();
    let positive = kept.len() - zero.len();
    let f = cfg.zero_fraction;
    let target = ((f * positive as f64) / (1.0 - f) + 1e-9).floor() as usize;
    let mut keep = vec![true; kept.len()];
    if zero.len() > target {
        for i in &zero {
            keep[*i] = false;
        }
        let mut rng = stream(cfg.seed, "rebalance");
        for j in index::sample(&mut rng, zero.len(), target) {
            keep[zero[j]] = true;
        }
    }
    let dropped_zero_response = keep.iter().filter(|&&k| !k).count();

    let mut dataset = SlateDataset::new(items.len(), cfg.k, cfg.seed);
    for ((docs, response), _) in kept.into_iter().zip(&keep).filter(|(_, &k)| k) {
        dataset.push(SlateRecord { slate: Slate::from_docs(docs), response: response.clone(), user: None })?;
    }
    Ok(Ingested { dataset, items, dropped_for_rare_items, dropped_zero_response, short_corpus })
}

/// Full pipeline from the two log readers.
pub fn ingest<C: BufRead, B: BufRead>(clicks: C, buys: B, cfg: &IngestConfig) -> Result<Ingested> {
    cfg.validate()?;
    let sessions = parse_logs(clicks, buys)?;
    filter_and_rebalance(&build_slates(&sessions, cfg), cfg)
}
