//! Ranking baselines: pointwise and pairwise MLPs, LSTM sequence scorers and
//! a random training-slate policy.

pub mod pointwise;
pub mod random;
pub mod sequence;

pub use pointwise::{PairwiseConfig, PointwiseConfig, PointwiseModel, PointwisePolicy, PointwiseTrainer, PointwiseVariant, RankMode};
pub use random::RandomPolicy;
pub use sequence::{SequenceConfig, SequenceMode, SequenceModel, SequencePolicy, SequenceTrainer};

use crate::error::{invalid, Result};
use crate::slate::{Slate, SlateDataset};

/// Top-`k` documents by descending score, ties to the smaller id.
pub fn top_k(scores: &[f64], k: usize) -> Result<Slate> {
    if scores.len() < k {
        return Err(invalid(format!("cannot fill a slate of {k} from {} documents", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(Slate::from_docs(order))
}

/// Best document not yet in `taken`, ties to the smaller id.
pub(crate) fn best_remaining(scores: &[f64], taken: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (d, &s) in scores.iter().enumerate() {
        if taken.contains(&d) {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(d);
        }
    }
    best
}

pub(crate) fn check_dataset(ds: &SlateDataset, n: usize, k: usize, personalized: bool) -> Result<()> {
    if ds.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    if ds.n != n || ds.k != k {
        return Err(invalid(format!("dataset has n={}, k={}; model expects n={n}, k={k}", ds.n, ds.k)));
    }
    if personalized && ds.records.iter().any(|r| r.user.is_none()) {
        return Err(invalid("personalized model needs a user id on every record"));
    }
    Ok(())
}
