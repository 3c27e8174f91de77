//! Slate-producing policies and their registry names.

use std::sync::Arc;

use rand::RngCore;

use crate::cvae::CvaeModel;
use crate::embedding::{EmbeddingMatrix, UserTable};
use crate::error::{invalid, Result};
use crate::slate::{ResponseVector, Slate};

/// Features shared by every learner: normalized document embeddings and,
/// in the personalized setting, user embeddings.
#[derive(Clone, Debug)]
pub struct FeatureSpace {
    pub docs: Arc<EmbeddingMatrix>,
    pub users: Option<Arc<UserTable>>,
}

impl FeatureSpace {
    pub fn new(docs: Arc<EmbeddingMatrix>, users: Option<Arc<UserTable>>) -> Self {
        Self { docs, users }
    }

    pub fn n(&self) -> usize {
        self.docs.n()
    }

    pub fn q(&self) -> usize {
        self.docs.q()
    }

    pub fn user_dim(&self) -> usize {
        self.users.as_ref().map_or(0, |u| u.dim())
    }

    /// User feature row; `None` when the space is not personalized.
    pub fn user_row(&self, user: Option<usize>) -> Result<Option<&[f64]>> {
        match (&self.users, user) {
            (None, None) => Ok(None),
            (Some(t), Some(u)) => t.row(u).map(Some),
            (None, Some(u)) => Err(invalid(format!("user {u} given to a non-personalized policy"))),
            (Some(_), None) => Err(invalid("personalized policy requires a user id")),
        }
    }
}

pub trait SlatePolicy: Send + Sync {
    fn name(&self) -> &str;

    /// Corpus size and slate size of the slates this policy emits.
    fn shape(&self) -> (usize, usize);

    /// Deterministic policies return the same slate for a given user on every
    /// call, so a single sample evaluates them exactly.
    fn is_deterministic(&self) -> bool;

    fn generate(&self, user: Option<usize>, rng: &mut dyn RngCore) -> Result<Slate>;

    fn generate_many(&self, user: Option<usize>, count: usize, rng: &mut dyn RngCore) -> Result<Vec<Slate>> {
        (0..count).map(|_| self.generate(user, rng)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    ListCvae,
    GreedyMlp,
    PairwiseMlp,
    PositionMlp,
    ArPositionMlp,
    GreedyLstm,
    ArLstm,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::ListCvae,
        PolicyKind::GreedyMlp,
        PolicyKind::PairwiseMlp,
        PolicyKind::PositionMlp,
        PolicyKind::ArPositionMlp,
        PolicyKind::GreedyLstm,
        PolicyKind::ArLstm,
        PolicyKind::Random,
    ];

    pub const RANKERS: [PolicyKind; 7] = [
        PolicyKind::GreedyMlp,
        PolicyKind::PairwiseMlp,
        PolicyKind::PositionMlp,
        PolicyKind::ArPositionMlp,
        PolicyKind::GreedyLstm,
        PolicyKind::ArLstm,
        PolicyKind::Random,
    ];

    pub const GREEDY: [PolicyKind; 4] =
        [PolicyKind::GreedyMlp, PolicyKind::PairwiseMlp, PolicyKind::PositionMlp, PolicyKind::GreedyLstm];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::ListCvae => "list-cvae",
            PolicyKind::GreedyMlp => "greedy-mlp",
            PolicyKind::PairwiseMlp => "pairwise-mlp",
            PolicyKind::PositionMlp => "position-mlp",
            PolicyKind::ArPositionMlp => "ar-position-mlp",
            PolicyKind::GreedyLstm => "greedy-lstm",
            PolicyKind::ArLstm => "ar-lstm",
            PolicyKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                invalid(format!("unknown policy `{s}`; known policies: {}", names.join(", ")))
            })
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// List-CVAE generation under the ideal conditioning `Φ(1, …, 1)`, with the
/// user's embedding appended when personalized.
pub struct CvaePolicy {
    model: Arc<CvaeModel>,
    features: FeatureSpace,
    target: Vec<f64>,
}

impl CvaePolicy {
    pub fn new(model: Arc<CvaeModel>, features: FeatureSpace) -> Self {
        Self::with_target(model, features, &ResponseVector::all(0, true))
    }

    /// Generation under an explicit target response; an empty target means
    /// all positive.
    pub fn with_target(model: Arc<CvaeModel>, features: FeatureSpace, target: &ResponseVector) -> Self {
        let target = if target.is_empty() { ResponseVector::all(model.k(), true) } else { target.clone() };
        let target = crate::cvae::condition_of(&target, model.config().conditioning);
        Self { model, features, target }
    }

    pub fn model(&self) -> &CvaeModel {
        &self.model
    }

    pub fn condition(&self, user: Option<usize>) -> Result<Vec<f64>> {
        let mut c = self.target.clone();
        if let Some(row) = self.features.user_row(user)? {
            c.extend_from_slice(row);
        }
        Ok(c)
    }
}

impl SlatePolicy for CvaePolicy {
    fn name(&self) -> &str {
        PolicyKind::ListCvae.name()
    }

    fn shape(&self) -> (usize, usize) {
        (self.model.n(), self.model.k())
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn generate(&self, user: Option<usize>, rng: &mut dyn RngCore) -> Result<Slate> {
        self.model.generate(&self.condition(user)?, rng)
    }

    fn generate_many(&self, user: Option<usize>, count: usize, rng: &mut dyn RngCore) -> Result<Vec<Slate>> {
        self.model.generate_many(&self.condition(user)?, count, rng)
    }
}

/// Always emits the same slate.
pub struct FixedPolicy {
    name: String,
    n: usize,
    slate: Slate,
}

impl FixedPolicy {
    pub fn new(name: impl Into<String>, n: usize, slate: Slate) -> Self {
        Self { name: name.into(), n, slate }
    }
}

impl SlatePolicy for FixedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.slate.len())
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn generate(&self, _user: Option<usize>, _rng: &mut dyn RngCore) -> Result<Slate> {
        Ok(self.slate.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(PolicyKind::parse(k.name()).unwrap(), k);
        }
        let names: Vec<&str> = PolicyKind::RANKERS.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            ["greedy-mlp", "pairwise-mlp", "position-mlp", "ar-position-mlp", "greedy-lstm", "ar-lstm", "random"]
        );
        assert!(PolicyKind::parse("beam").is_err());
    }
}
