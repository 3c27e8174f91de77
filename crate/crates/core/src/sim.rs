//! Synthetic click environment with positional and contextual bias.
//!
//! Each document has an innate attractiveness `A[d] ~ U[0, 1]`. The click
//! probability at position `i` multiplies `A[d_i]` by interaction factors
//! `W(i, d_i, j, d_j)` for the documents at positions `j <= i`, then clamps to
//! `[0, 1]`. `W` has `k²n²` entries and is never stored: every entry is a
//! normal deviate computed from a counter-based hash of its indices.
//!
//! Positions are 0-based throughout.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::oracle::ClickOracle;
use crate::rng::{counter_normal, hash_counters, stream, unit_open};
use crate::slate::{ResponseVector, Slate, SlateDataset, SlateRecord};

const W_TAG: u64 = 0x5749;
const A_TAG: u64 = 0x4154;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub mu_w: f64,
    pub sigma_w: f64,
    pub seed: u64,
    /// Include the `j = i` self-interaction factor in the product.
    pub self_interaction: bool,
    /// Number of users with their own corpus permutation; 0 disables
    /// personalization.
    pub users: usize,
}

impl SimConfig {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            mu_w: 1.0,
            sigma_w: 0.5,
            seed,
            self_interaction: true,
            users: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(invalid(format!("corpus size and slate size must be positive (n={}, k={})", self.n, self.k)));
        }
        if !(self.sigma_w >= 0.0) || !self.mu_w.is_finite() || !self.sigma_w.is_finite() {
            return Err(invalid(format!("interaction parameters must be finite with sigma >= 0 (mu={}, sigma={})", self.mu_w, self.sigma_w)));
        }
        Ok(())
    }
}

/// A user's permutation of document identities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserPermutation {
    pub user: usize,
    perm: Vec<usize>,
}

impl UserPermutation {
    pub fn new(user: usize, perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(invalid(format!("user {user}: not a permutation of 0..{}", perm.len())));
            }
        }
        Ok(Self { user, perm })
    }

    pub fn identity(user: usize, n: usize) -> Self {
        Self { user, perm: (0..n).collect() }
    }

    pub fn apply(&self, d: usize) -> usize {
        self.perm[d]
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SimEnvironment {
    config: SimConfig,
    attractiveness: Vec<f64>,
    users: Vec<UserPermutation>,
}

impl SimEnvironment {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let attractiveness = (0..config.n)
            .map(|d| unit_open(hash_counters(config.seed, &[A_TAG, d as u64])))
            .collect();
        let mut rng = stream(config.seed, "user-permutations");
        let users = (0..config.users)
            .map(|u| {
                let mut perm: Vec<usize> = (0..config.n).collect();
                perm.shuffle(&mut rng);
                UserPermutation { user: u, perm }
            })
            .collect();
        Ok(Self { config, attractiveness, users })
    }

    /// Replaces the drawn attractiveness values (for constructed scenarios).
    pub fn with_attractiveness(mut self, a: Vec<f64>) -> Result<Self> {
        if a.len() != self.config.n || a.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("attractiveness must have n values in [0, 1]"));
        }
        self.attractiveness = a;
        Ok(self)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn attractiveness(&self) -> &[f64] {
        &self.attractiveness
    }

    pub fn users(&self) -> &[UserPermutation] {
        &self.users
    }

    pub fn user(&self, u: usize) -> Result<&UserPermutation> {
        self.users
            .get(u)
            .ok_or_else(|| invalid(format!("unknown user {u} (environment has {})", self.users.len())))
    }

    #[inline]
    fn w(&self, i: usize, di: usize, j: usize, dj: usize) -> f64 {
        if self.config.sigma_w == 0.0 {
            return self.config.mu_w;
        }
        let z = counter_normal(self.config.seed, &[W_TAG, i as u64, di as u64, j as u64, dj as u64]);
        self.config.mu_w + self.config.sigma_w * z
    }

    /// Interaction multiplier between document `di` at position `i` and
    /// document `dj` at position `j`.
    pub fn interaction(&self, i: usize, di: usize, j: usize, dj: usize) -> Result<f64> {
        let (n, k) = (self.config.n, self.config.k);
        if i >= k || j >= k {
            return Err(invalid(format!("positions ({i}, {j}) out of range for slate size {k}")));
        }
        if di >= n || dj >= n {
            return Err(invalid(format!("documents ({di}, {dj}) out of range for corpus of {n}")));
        }
        Ok(self.w(i, di, j, dj))
    }

    fn check_slate(&self, slate: &Slate) -> Result<()> {
        if slate.len() != self.config.k {
            return Err(invalid(format!("slate has {} documents, expected {}", slate.len(), self.config.k)));
        }
        if let Some(&d) = slate.docs().iter().find(|&&d| d >= self.config.n) {
            return Err(invalid(format!("document {d} out of range for corpus of {}", self.config.n)));
        }
        Ok(())
    }

    fn probabilities_mapped(&self, docs: &[usize], map: impl Fn(usize) -> usize) -> Vec<f64> {
        let mapped: Vec<usize> = docs.iter().map(|&d| map(d)).collect();
        (0..mapped.len())
            .map(|i| {
                let last = if self.config.self_interaction { i + 1 } else { i };
                let p = (0..last).fold(self.attractiveness[mapped[i]], |acc, j| {
                    acc * self.w(i, mapped[i], j, mapped[j])
                });
                p.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Per-position click probabilities for a slate.
    pub fn engagement_probabilities(&self, slate: &Slate) -> Result<Vec<f64>> {
        self.check_slate(slate)?;
        Ok(self.probabilities_mapped(slate.docs(), |d| d))
    }

    /// Click probabilities for `user`, whose permutation relabels documents
    /// before both attractiveness and interaction lookups.
    pub fn personalized_probabilities(&self, user: &UserPermutation, slate: &Slate) -> Result<Vec<f64>> {
        self.check_slate(slate)?;
        if user.len() != self.config.n {
            return Err(invalid(format!("permutation of length {} for corpus of {}", user.len(), self.config.n)));
        }
        Ok(self.probabilities_mapped(slate.docs(), |d| user.apply(d)))
    }

    fn probabilities_for(&self, slate: &Slate, user: Option<usize>) -> Result<Vec<f64>> {
        match user {
            None => self.engagement_probabilities(slate),
            Some(u) => self.personalized_probabilities(self.user(u)?, slate),
        }
    }

    pub fn sample_response<R: Rng + ?Sized>(&self, slate: &Slate, user: Option<usize>, rng: &mut R) -> Result<ResponseVector> {
        let p = self.probabilities_for(slate, user)?;
        Ok(sample_bernoulli(&p, rng))
    }

    /// Uniform random slate over `{0..n-1}^k`.
    pub fn random_slate<R: Rng + ?Sized>(&self, rng: &mut R) -> Slate {
        Slate::from_docs((0..self.config.k).map(|_| rng.random_range(0..self.config.n)).collect())
    }

    /// `count` uniform slates with sampled responses; when the environment has
    /// users, each record belongs to a uniformly drawn user.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<SlateDataset> {
        let mut ds = SlateDataset::new(self.config.n, self.config.k, self.config.seed);
        ds.records.reserve(count);
        for _ in 0..count {
            let slate = self.random_slate(rng);
            let user = (!self.users.is_empty()).then(|| rng.random_range(0..self.users.len()));
            let response = self.sample_response(&slate, user, rng)?;
            ds.records.push(SlateRecord { slate, response, user });
        }
        Ok(ds)
    }
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> ResponseVector {
    ResponseVector::new(p.iter().map(|&pi| rng.random::<f64>() < pi).collect())
}

impl ClickOracle for SimEnvironment {
    fn n(&self) -> usize {
        self.config.n
    }

    fn k(&self) -> usize {
        self.config.k
    }

    fn num_users(&self) -> usize {
        self.users.len()
    }

    fn expected_clicks(&self, slate: &Slate, user: Option<usize>) -> Result<f64> {
        Ok(self.probabilities_for(slate, user)?.iter().sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(n: usize, k: usize, seed: u64) -> SimEnvironment {
        SimEnvironment::new(SimConfig::new(n, k, seed)).unwrap()
    }

    #[test]
    fn degenerate_interactions_equal_mean() {
        let mut cfg = SimConfig::new(10, 3, 1);
        cfg.sigma_w = 0.0;
        cfg.mu_w = 1.25;
        let e = SimEnvironment::new(cfg).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(e.interaction(i, 4, j, 7).unwrap(), 1.25);
            }
        }
    }

    #[test]
    fn interaction_is_pure() {
        let e = env(50, 4, 9);
        assert_eq!(e.interaction(3, 10, 1, 42).unwrap(), e.interaction(3, 10, 1, 42).unwrap());
        assert!(e.interaction(4, 0, 0, 0).is_err());
        assert!(e.interaction(0, 50, 0, 0).is_err());
    }

    #[test]
    fn unit_interactions_give_attractiveness() {
        let mut cfg = SimConfig::new(6, 3, 2);
        cfg.sigma_w = 0.0;
        let e = SimEnvironment::new(cfg).unwrap();
        let s = Slate::from_docs(vec![5, 0, 5]);
        let p = e.engagement_probabilities(&s).unwrap();
        let a = e.attractiveness();
        assert_eq!(p, vec![a[5], a[0], a[5]]);
    }

    #[test]
    fn zero_attractiveness_never_clicks() {
        let e = env(4, 3, 3).with_attractiveness(vec![0.0, 0.5, 0.5, 0.5]).unwrap();
        let p = e.engagement_probabilities(&Slate::from_docs(vec![0, 1, 0])).unwrap();
        assert_eq!((p[0], p[2]), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_probabilities_n5_k2() {
        let e = env(5, 2, 17);
        let a = e.attractiveness().to_vec();
        for d1 in 0..5 {
            for d2 in 0..5 {
                let s = Slate::from_docs(vec![d1, d2]);
                let p = e.engagement_probabilities(&s).unwrap();
                let p1 = (a[d1] * e.interaction(0, d1, 0, d1).unwrap()).clamp(0.0, 1.0);
                let p2 = (a[d2] * e.interaction(1, d2, 0, d1).unwrap() * e.interaction(1, d2, 1, d2).unwrap())
                    .clamp(0.0, 1.0);
                assert_eq!(p, vec![p1, p2]);
            }
        }
    }

    #[test]
    fn excluding_self_interaction() {
        let mut cfg = SimConfig::new(5, 2, 17);
        cfg.self_interaction = false;
        let e = SimEnvironment::new(cfg).unwrap();
        let a = e.attractiveness().to_vec();
        let p = e.engagement_probabilities(&Slate::from_docs(vec![3, 1])).unwrap();
        assert_eq!(p[0], a[3]);
        assert_eq!(p[1], (a[1] * e.interaction(1, 1, 0, 3).unwrap()).clamp(0.0, 1.0));
    }

    #[test]
    fn first_position_ignores_later_documents() {
        let e = env(30, 5, 4);
        let base = e.engagement_probabilities(&Slate::from_docs(vec![7, 1, 2, 3, 4])).unwrap();
        let other = e.engagement_probabilities(&Slate::from_docs(vec![7, 9, 28, 0, 11])).unwrap();
        assert_eq!(base[0], other[0]);
    }

    #[test]
    fn certain_and_impossible_clicks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_bernoulli(&[0.0; 4], &mut rng).clicks(), 0);
            assert_eq!(sample_bernoulli(&[1.0; 4], &mut rng).clicks(), 4);
        }
    }

    #[test]
    fn empty_and_single_document_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env(10, 3, 0).sample_dataset(0, &mut rng).unwrap().is_empty());
        let ds = env(1, 4, 0).sample_dataset(20, &mut rng).unwrap();
        assert!(ds.records.iter().all(|r| r.slate.docs() == [0, 0, 0, 0]));
    }

    #[test]
    fn identity_user_matches_plain_probabilities() {
        let e = env(20, 4, 5);
        let id = UserPermutation::identity(0, 20);
        let s = Slate::from_docs(vec![3, 19, 3, 0]);
        assert_eq!(e.personalized_probabilities(&id, &s).unwrap(), e.engagement_probabilities(&s).unwrap());
    }

    #[test]
    fn invalid_permutation_rejected() {
        assert!(UserPermutation::new(0, vec![0, 0, 1]).is_err());
        assert!(UserPermutation::new(0, vec![0, 3, 1]).is_err());
        assert!(UserPermutation::new(0, vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn users_disagree_somewhere() {
        let mut cfg = SimConfig::new(6, 2, 8);
        cfg.users = 2;
        let e = SimEnvironment::new(cfg).unwrap();
        let (u0, u1) = (&e.users()[0], &e.users()[1]);
        let differs = (0..6).any(|a| {
            (0..6).any(|b| {
                let s = Slate::from_docs(vec![a, b]);
                e.personalized_probabilities(u0, &s).unwrap() != e.personalized_probabilities(u1, &s).unwrap()
            })
        });
        assert!(differs);
    }

    #[test]
    fn personalized_degenerate_interactions() {
        let mut cfg = SimConfig::new(8, 3, 8);
        cfg.users = 3;
        cfg.sigma_w = 0.0;
        let e = SimEnvironment::new(cfg).unwrap();
        let u = &e.users()[2];
        let s = Slate::from_docs(vec![1, 6, 1]);
        let p = e.personalized_probabilities(u, &s).unwrap();
        let a = e.attractiveness();
        assert_eq!(p, vec![a[u.apply(1)], a[u.apply(6)], a[u.apply(1)]]);
    }

    #[test]
    fn environment_is_reproducible() {
        let (e1, e2) = (env(40, 3, 77), env(40, 3, 77));
        assert_eq!(e1.attractiveness(), e2.attractiveness());
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(e1.sample_dataset(50, &mut r1).unwrap(), e2.sample_dataset(50, &mut r2).unwrap());
    }
}
