//! The shipped session fixture against outputs derived by `reference.py`.

mod common;

use common::{check_fixture, fixture, fixture_bytes, ingest_fixture, render};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slatelab::ingest::parse_logs;

#[test]
fn fixture_short_corpus_keeps_every_item() {
    check_fixture(10).unwrap();
    let out = ingest_fixture(10);
    assert!(out.short_corpus);
    assert!(render(&out).contains(&"0 1 2 4 7 | 1 0 0 0 1".to_string()));
}

#[test]
fn fixture_cap_filters_rare_items() {
    check_fixture(6).unwrap();
    let out = ingest_fixture(6);
    assert!(!out.short_corpus);
    assert_eq!(render(&out)[0], "0 1 2 3 4 | 1 0 0 0 1");
}

#[test]
fn fixture_is_byte_identical_across_runs_and_threads() {
    let one = fixture_bytes(1);
    assert_eq!(one, fixture_bytes(1));
    assert_eq!(one, fixture_bytes(4));
}

#[test]
fn shuffled_click_lines_parse_to_the_same_sessions() {
    let clicks = fixture("clicks.dat");
    let buys = fixture("buys.dat");
    let base = parse_logs(clicks.as_bytes(), buys.as_bytes()).unwrap();
    assert_eq!(base.len(), 30);
    let mut lines: Vec<&str> = clicks.lines().collect();
    for seed in 0..5 {
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = lines.join("\n");
        assert_eq!(parse_logs(shuffled.as_bytes(), buys.as_bytes()).unwrap(), base);
    }
}
