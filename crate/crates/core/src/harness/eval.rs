use rand::RngCore;

use crate::error::{invalid, Result};
use crate::oracle::ClickOracle;
use crate::policy::SlatePolicy;

/// Mean oracle expected clicks of a policy's slates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    /// Standard error of the mean over sampled slates; 0 for deterministic
    /// policies.
    pub std_err: f64,
    pub samples: usize,
}

impl Evaluation {
    /// Normal-approximation 95% sampling interval.
    pub fn interval(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.std_err, self.mean + 1.96 * self.std_err)
    }
}

/// Averages `oracle` expected clicks over `samples` generated slates. A
/// personalized oracle is evaluated on every user with the samples split
/// evenly; deterministic policies need one slate per user.
pub fn evaluate_policy(policy: &dyn SlatePolicy, oracle: &dyn ClickOracle, samples: usize, rng: &mut dyn RngCore) -> Result<Evaluation> {
    let (n, k) = policy.shape();
    if (n, k) != (oracle.n(), oracle.k()) {
        return Err(invalid(format!(
            "policy {} emits n={n}, k={k} slates but the oracle expects n={}, k={}",
            policy.name(),
            oracle.n(),
            oracle.k()
        )));
    }
    if samples == 0 {
        return Err(invalid("evaluation needs at least one sample"));
    }
    let users: Vec<Option<usize>> = match oracle.num_users() {
        0 => vec![None],
        u => (0..u).map(Some).collect(),
    };
    let per_user = if policy.is_deterministic() { 1 } else { samples.div_ceil(users.len()) };
    let mut user_means = Vec::with_capacity(users.len());
    let mut all = Vec::with_capacity(per_user * users.len());
    for &u in &users {
        let slates = policy.generate_many(u, per_user, rng)?;
        let values = oracle.expected_clicks_batch(&slates, &vec![u; slates.len()])?;
        user_means.push(values.iter().sum::<f64>() / values.len() as f64);
        all.extend(values);
    }
    let mean = user_means.iter().sum::<f64>() / user_means.len() as f64;
    let std_err = if policy.is_deterministic() || all.len() < 2 {
        0.0
    } else {
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
        (var / all.len() as f64).sqrt()
    };
    Ok(Evaluation { mean, std_err, samples: all.len() })
}
