//! Training and loading any registered policy by name.

use std::sync::Arc;

use slatelab_autodiff::Checkpoint;

use crate::cvae::{condition_of, CvaeConfig, CvaeExample, CvaeModel, CvaeTrainer};
use crate::error::{invalid, Result};
use crate::policy::{CvaePolicy, FeatureSpace, PolicyKind, SlatePolicy};
use crate::rankers::{
    PointwiseConfig, PointwiseModel, PointwisePolicy, PointwiseTrainer, PointwiseVariant, RandomPolicy, SequenceConfig,
    SequenceModel, SequencePolicy, SequenceTrainer,
};
use crate::slate::SlateDataset;

/// Per-family settings; `steps` and `seed` override the families' own.
#[derive(Clone, Debug)]
pub struct PolicyTraining {
    pub steps: usize,
    pub seed: u64,
    pub cvae: CvaeConfig,
    pub pointwise: PointwiseConfig,
    pub sequence: SequenceConfig,
}

impl Default for PolicyTraining {
    fn default() -> Self {
        Self {
            steps: 2000,
            seed: 0,
            cvae: CvaeConfig::default(),
            pointwise: PointwiseConfig { batch_size: 32, ..PointwiseConfig::default() },
            sequence: SequenceConfig { batch_size: 32, ..SequenceConfig::default() },
        }
    }
}

/// Conditions built from each record's response and, when the features
/// carry users, the record's user embedding.
pub fn cvae_examples(ds: &SlateDataset, cfg: &CvaeConfig, features: &FeatureSpace) -> Result<Vec<CvaeExample>> {
    ds.records
        .iter()
        .map(|r| {
            let mut condition = condition_of(&r.response, cfg.conditioning);
            if let Some(u) = features.user_row(r.user)? {
                condition.extend_from_slice(u);
            }
            Ok(CvaeExample { slate: r.slate.clone(), condition })
        })
        .collect()
}

pub fn pointwise_variant(kind: PolicyKind) -> Option<PointwiseVariant> {
    match kind {
        PolicyKind::GreedyMlp => Some(PointwiseVariant::Greedy),
        PolicyKind::PairwiseMlp => Some(PointwiseVariant::Pairwise),
        PolicyKind::PositionMlp | PolicyKind::ArPositionMlp => Some(PointwiseVariant::Position),
        _ => None,
    }
}

pub fn cvae_trainer(features: &FeatureSpace, data: &SlateDataset, cfg: &PolicyTraining) -> Result<CvaeTrainer> {
    let config = CvaeConfig { steps: cfg.steps, seed: cfg.seed, user_dim: features.user_dim(), ..cfg.cvae.clone() };
    let examples = cvae_examples(data, &config, features)?;
    CvaeTrainer::new(data.k, features.docs.clone(), config, Arc::new(examples))
}

pub fn pointwise_trainer(kind: PolicyKind, features: &FeatureSpace, data: Arc<SlateDataset>, cfg: &PolicyTraining) -> Result<PointwiseTrainer> {
    let variant = pointwise_variant(kind).ok_or_else(|| invalid(format!("{kind} is not a pointwise ranker")))?;
    let config = PointwiseConfig { variant, steps: cfg.steps, seed: cfg.seed, ..cfg.pointwise.clone() };
    PointwiseTrainer::new(features.clone(), data, config)
}

pub fn sequence_trainer(features: &FeatureSpace, data: Arc<SlateDataset>, cfg: &PolicyTraining) -> Result<SequenceTrainer> {
    let config = SequenceConfig { steps: cfg.steps, seed: cfg.seed, ..cfg.sequence.clone() };
    SequenceTrainer::new(features.clone(), data, config)
}

/// Trains the model behind `kind`. The random policy has no model and
/// yields `None`.
pub fn train_policy(kind: PolicyKind, features: &FeatureSpace, data: Arc<SlateDataset>, cfg: &PolicyTraining) -> Result<Option<Checkpoint>> {
    let ckpt = match kind {
        PolicyKind::Random => return Ok(None),
        PolicyKind::ListCvae => {
            let mut t = cvae_trainer(features, &data, cfg)?;
            for _ in 0..cfg.steps {
                t.step()?;
            }
            t.model.to_checkpoint()
        }
        PolicyKind::GreedyLstm | PolicyKind::ArLstm => sequence_trainer(features, data, cfg)?.train()?.0.to_checkpoint(),
        _ => pointwise_trainer(kind, features, data, cfg)?.train()?.0.to_checkpoint(),
    };
    Ok(Some(ckpt.with_meta("policy", kind.name()).with_meta("trained_steps", cfg.steps)))
}

/// Rebuilds policy `kind` from its checkpoint; the random policy instead
/// needs the training set it resamples.
pub fn load_policy(kind: PolicyKind, ckpt: Option<&Checkpoint>, features: &FeatureSpace, data: Option<&SlateDataset>) -> Result<Box<dyn SlatePolicy>> {
    if kind == PolicyKind::Random {
        let data = data.ok_or_else(|| invalid("the random policy needs the training dataset"))?;
        return Ok(Box::new(RandomPolicy::from_dataset(data)?));
    }
    let ckpt = ckpt.ok_or_else(|| invalid(format!("{kind} needs a model checkpoint")))?;
    Ok(match kind {
        PolicyKind::ListCvae => {
            let model = CvaeModel::from_checkpoint(ckpt, features.docs.clone())?;
            Box::new(CvaePolicy::new(Arc::new(model), features.clone()))
        }
        PolicyKind::GreedyLstm | PolicyKind::ArLstm => {
            Box::new(SequencePolicy::new(kind, Arc::new(SequenceModel::from_checkpoint(ckpt, features.clone())?))?)
        }
        _ => Box::new(PointwisePolicy::new(kind, Arc::new(PointwiseModel::from_checkpoint(ckpt, features.clone())?))?),
    })
}
