//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use slatelab::format::write_dataset;
use slatelab::ingest::{ingest, IngestConfig, Ingested};

pub fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "yoochoose", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

pub struct Expected {
    pub items: Vec<u64>,
    pub dropped_for_rare_items: usize,
    pub zero_before: usize,
    pub zero_after: usize,
    /// `docs | responses` before rebalancing, in canonical order.
    pub slates: Vec<String>,
}

pub fn expected(cap: usize) -> Expected {
    let text = fixture(&format!("expected_cap{cap}.txt"));
    let mut lines = text.lines();
    let mut header = |key: &str| {
        let line = lines.next().unwrap();
        line.strip_prefix(key).unwrap().trim().to_string()
    };
    let _windows = header("windows");
    let items = header("items").split(' ').map(|s| s.parse().unwrap()).collect();
    let dropped_for_rare_items = header("dropped_for_rare_items").parse().unwrap();
    let zero = header("zero_response");
    let (before, after) = zero.split_once(" kept ").unwrap();
    let slates = lines.map(|l| l.split_once(" | ").unwrap().1.to_string()).collect();
    Expected {
        items,
        dropped_for_rare_items,
        zero_before: before.parse().unwrap(),
        zero_after: after.parse().unwrap(),
        slates,
    }
}

pub fn ingest_fixture(cap: usize) -> Ingested {
    let cfg = IngestConfig { corpus_cap: cap, ..IngestConfig::default() };
    ingest(fixture("clicks.dat").as_bytes(), fixture("buys.dat").as_bytes(), &cfg).unwrap()
}

pub fn render(out: &Ingested) -> Vec<String> {
    out.dataset
        .records
        .iter()
        .map(|r| {
            let d: Vec<String> = r.slate.docs().iter().map(|d| d.to_string()).collect();
            let b: Vec<&str> = r.response.values().iter().map(|&x| if x { "1" } else { "0" }).collect();
            format!("{} | {}", d.join(" "), b.join(" "))
        })
        .collect()
}

fn has_positive(row: &str) -> bool {
    row.split(" | ").nth(1).unwrap().contains('1')
}

/// Compares an ingestion at `cap` with the reference output, describing the
/// first mismatch.
pub fn check_fixture(cap: usize) -> Result<(), String> {
    let want = expected(cap);
    let got = ingest_fixture(cap);
    if got.items != want.items || got.dataset.n != want.items.len() {
        return Err(format!("cap {cap}: items {:?}, expected {:?}", got.items, want.items));
    }
    if got.dropped_for_rare_items != want.dropped_for_rare_items {
        return Err(format!("cap {cap}: dropped {} for rare items, expected {}", got.dropped_for_rare_items, want.dropped_for_rare_items));
    }
    if got.dropped_zero_response != want.zero_before - want.zero_after {
        return Err(format!("cap {cap}: dropped {} zero slates, expected {}", got.dropped_zero_response, want.zero_before - want.zero_after));
    }
    let rows = render(&got);
    let positives: Vec<&String> = want.slates.iter().filter(|s| has_positive(s)).collect();
    let got_positives: Vec<&String> = rows.iter().filter(|s| has_positive(s)).collect();
    if got_positives != positives {
        return Err(format!("cap {cap}: positive slates differ"));
    }
    if rows.len() - got_positives.len() != want.zero_after {
        return Err(format!("cap {cap}: kept {} zero slates, expected {}", rows.len() - got_positives.len(), want.zero_after));
    }
    // surviving rows keep the canonical order of the unbalanced set
    let mut cursor = want.slates.iter();
    for row in &rows {
        if !cursor.any(|s| s == row) {
            return Err(format!("cap {cap}: {row} out of order or unexpected"));
        }
    }
    Ok(())
}

/// Dataset text and id map of the cap-10 ingestion on a pool of `threads`.
pub fn fixture_bytes(threads: usize) -> (String, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let out = ingest_fixture(10);
        (write_dataset(&out.dataset), out.id_map_text())
    })
}
