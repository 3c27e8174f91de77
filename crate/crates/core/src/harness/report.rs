//! Evaluation records, cross-run aggregation and the report CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{invalid, parse_err, Result};

pub const REPORT_HEADER: &str = "scenario,policy,run,step,mean_expected_clicks,ci_low,ci_high,samples";

/// Run label: a run index, or `all` for rows aggregated across runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunId {
    Index(usize),
    All,
}

impl std::fmt::Display for RunId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunId::Index(i) => write!(f, "{i}"),
            RunId::All => f.write_str("all"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub scenario: String,
    pub policy: String,
    pub run: RunId,
    pub step: usize,
    pub mean: f64,
    /// Interval bounds; `None` when undefined (a single run).
    pub ci: Option<(f64, f64)>,
    pub samples: usize,
}

/// Mean and 95% normal-approximation interval `mean ± 1.96·s/√R` using the
/// sample standard deviation `s`; `None` for fewer than two values.
pub fn confidence_interval(values: &[f64]) -> (f64, Option<(f64, f64)>) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let half = 1.96 * var.sqrt() / r.sqrt();
    (mean, Some((mean - half, mean + half)))
}

/// One row per (scenario, policy, step) with `run = all`; rows already
/// aggregated are ignored.
pub fn aggregate_runs(records: &[EvalRecord]) -> Vec<EvalRecord> {
    let mut groups: BTreeMap<(String, String, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.run != RunId::All) {
        let e = groups.entry((r.scenario.clone(), r.policy.clone(), r.step)).or_default();
        e.0.push(r.mean);
        e.1 += r.samples;
    }
    groups
        .into_iter()
        .map(|((scenario, policy, step), (values, samples))| {
            if values.len() < 2 {
                log::warn!("{scenario}/{policy} step {step}: single run, confidence interval undefined");
            }
            let (mean, ci) = confidence_interval(&values);
            EvalRecord { scenario, policy, run: RunId::All, step, mean, ci, samples }
        })
        .collect()
}

/// Looks up the aggregated row for `policy` at `step`.
pub fn find<'a>(records: &'a [EvalRecord], policy: &str, step: usize) -> Option<&'a EvalRecord> {
    records.iter().find(|r| r.policy == policy && r.step == step && r.run == RunId::All)
}

pub fn write_report(records: &[EvalRecord]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in records {
        let (lo, hi) = match r.ci {
            Some((lo, hi)) => (format!("{lo:?}"), format!("{hi:?}")),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{},{},{:?},{lo},{hi},{}", r.scenario, r.policy, r.run, r.step, r.mean, r.samples);
    }
    out
}

pub fn parse_report(text: &str) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{REPORT_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(parse_err(lineno, format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_err(lineno, format!("bad {what} `{s}`"))),
            }
        };
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| parse_err(lineno, format!("bad {what} `{s}`")));
        if f[0].is_empty() || f[1].is_empty() {
            return Err(parse_err(lineno, "scenario and policy must be non-empty"));
        }
        let run = if f[2] == "all" { RunId::All } else { RunId::Index(int(f[2], "run")?) };
        let ci = match (f[5], f[6]) {
            ("", "") => None,
            (lo, hi) => Some((num(lo, "ci_low")?, num(hi, "ci_high")?)),
        };
        out.push(EvalRecord {
            scenario: f[0].to_string(),
            policy: f[1].to_string(),
            run,
            step: int(f[3], "step")?,
            mean: num(f[4], "mean")?,
            ci,
            samples: int(f[7], "samples")?,
        });
    }
    Ok(out)
}

pub fn read_report(path: impl AsRef<std::path::Path>) -> Result<Vec<EvalRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_report(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(policy: &str, run: usize, step: usize, mean: f64) -> EvalRecord {
        EvalRecord { scenario: "small".into(), policy: policy.into(), run: RunId::Index(run), step, mean, ci: None, samples: 10 }
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let (m, ci) = confidence_interval(&[3.0, 3.0, 3.0]);
        assert_eq!((m, ci), (3.0, Some((3.0, 3.0))));
    }

    #[test]
    fn two_runs_interval() {
        let (m, ci) = confidence_interval(&[4.0, 6.0]);
        assert_eq!(m, 5.0);
        let (lo, hi) = ci.unwrap();
        assert!((hi - m - 1.96).abs() < 1e-12 && (m - lo - 1.96).abs() < 1e-12);
    }

    #[test]
    fn single_run_has_no_interval() {
        let agg = aggregate_runs(&[rec("random", 0, 0, 2.0)]);
        assert_eq!(agg[0].ci, None);
        assert_eq!(agg[0].run, RunId::All);
    }

    #[test]
    fn aggregation_groups_by_policy_and_step() {
        let rs = vec![rec("a", 0, 0, 1.0), rec("a", 1, 0, 3.0), rec("a", 0, 50, 5.0), rec("b", 0, 0, 7.0)];
        let agg = aggregate_runs(&rs);
        assert_eq!(agg.len(), 3);
        assert_eq!(find(&agg, "a", 0).unwrap().mean, 2.0);
        assert_eq!(find(&agg, "a", 0).unwrap().samples, 20);
    }

    #[test]
    fn csv_round_trip() {
        let mut rs = vec![rec("list-cvae", 0, 100, 4.25), rec("random", 1, 0, 1.0 / 3.0)];
        rs.extend(aggregate_runs(&rs));
        let text = write_report(&rs);
        assert!(text.starts_with("scenario,policy,run,step,mean_expected_clicks,ci_low,ci_high,samples\n"));
        assert_eq!(parse_report(&text).unwrap(), rs);
        assert_eq!(write_report(&parse_report(&text).unwrap()), text);
    }

    #[test]
    fn malformed_rows_rejected() {
        for row in ["s,p,0,0,1.0,,,x", "s,p,x,0,1,,,1", "s,p,0,0,nan,,,1", "s,p,0,0,1,1,,1", "s,p,0", ",p,0,0,1,,,1"] {
            let text = format!("{REPORT_HEADER}\n{row}\n");
            assert!(parse_report(&text).is_err(), "{row}");
        }
        assert!(parse_report("bogus\n").is_err());
    }
}
