use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{invalid, Result};
use crate::policy::{PolicyKind, SlatePolicy};
use crate::slate::{Slate, SlateDataset};

/// Replays a uniformly drawn training slate.
pub struct RandomPolicy {
    n: usize,
    slates: Arc<Vec<Slate>>,
}

impl RandomPolicy {
    pub fn new(n: usize, slates: Arc<Vec<Slate>>) -> Result<Self> {
        if slates.is_empty() {
            return Err(invalid("random policy needs a non-empty training set"));
        }
        Ok(Self { n, slates })
    }

    pub fn from_dataset(ds: &SlateDataset) -> Result<Self> {
        Self::new(ds.n, Arc::new(ds.records.iter().map(|r| r.slate.clone()).collect()))
    }

    pub fn slates(&self) -> &[Slate] {
        &self.slates
    }
}

impl SlatePolicy for RandomPolicy {
    fn name(&self) -> &str {
        PolicyKind::Random.name()
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.slates[0].len())
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn generate(&self, _user: Option<usize>, rng: &mut dyn RngCore) -> Result<Slate> {
        Ok(self.slates[rng.random_range(0..self.slates.len())].clone())
    }
}
