//! Pointwise click predictors: Greedy MLP, Position MLP and Pairwise MLP.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use slatelab_autodiff::{Activation, Adam, Checkpoint, Graph, Mlp, ParamStore, Tensor, Var};

use crate::error::{invalid, Result};
use crate::policy::{FeatureSpace, PolicyKind, SlatePolicy};
use crate::rankers::{best_remaining, check_dataset, top_k};
use crate::response::load_params;
use crate::rng::stream;
use crate::slate::{Slate, SlateDataset};

const KIND: &str = "pointwise";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointwiseVariant {
    Greedy,
    Position,
    Pairwise,
}

impl PointwiseVariant {
    pub fn name(self) -> &'static str {
        match self {
            PointwiseVariant::Greedy => "greedy",
            PointwiseVariant::Position => "position",
            PointwiseVariant::Pairwise => "pairwise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PointwiseVariant::Greedy),
            "position" => Ok(PointwiseVariant::Position),
            "pairwise" => Ok(PointwiseVariant::Pairwise),
            _ => Err(invalid(format!("unknown pointwise variant `{s}`"))),
        }
    }

    fn uses_position(self) -> bool {
        self == PointwiseVariant::Position
    }
}

/// `loss = α·BCE + (1 − α)·mean max(0, η − (P̂(x_pos) − P̂(x_neg)))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseConfig {
    pub alpha: f64,
    pub eta: f64,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self { alpha: 0.5, eta: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseConfig {
    pub variant: PointwiseVariant,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Slates per minibatch; every position of each slate is an example.
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub pairwise: PairwiseConfig,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        Self {
            variant: PointwiseVariant::Greedy,
            hidden: 128,
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 2000,
            seed: 0,
            pairwise: PairwiseConfig::default(),
        }
    }
}

/// How a trained scorer fills the `k` slate positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    /// Score once with the position feature zeroed, then take the top `k`.
    ZeroPosition,
    /// Pick the best remaining document for each position in turn.
    ArPosition,
}

#[derive(Clone, Debug)]
pub struct PointwiseModel {
    k: usize,
    variant: PointwiseVariant,
    features: FeatureSpace,
    store: ParamStore,
    mlp: Mlp,
}

/// Model inputs and labels for one minibatch.
pub struct PointwiseBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    /// Row indices of `(positive, negative)` pairs from the same slate.
    pub pairs: Vec<(usize, usize)>,
}

impl PointwiseModel {
    pub fn new<R: Rng + ?Sized>(k: usize, features: FeatureSpace, variant: PointwiseVariant, hidden: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || hidden == 0 {
            return Err(invalid("slate size and hidden width must be positive"));
        }
        let mut store = ParamStore::new();
        let width = Self::input_width(k, &features, variant);
        let mlp = Mlp::new(&mut store, "pointwise", &[width, hidden, hidden, 1], Activation::Relu, rng);
        Ok(Self { k, variant, features, store, mlp })
    }

    fn input_width(k: usize, features: &FeatureSpace, variant: PointwiseVariant) -> usize {
        features.q() + if variant.uses_position() { k } else { 0 } + features.user_dim()
    }

    pub fn variant(&self) -> PointwiseVariant {
        self.variant
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn features(&self) -> &FeatureSpace {
        &self.features
    }

    fn push_row(&self, out: &mut Vec<f64>, doc: usize, position: Option<usize>, user: Option<&[f64]>) {
        out.extend_from_slice(self.features.docs.row(doc));
        if self.variant.uses_position() {
            out.extend((0..self.k).map(|i| if Some(i) == position { 1.0 } else { 0.0 }));
        }
        if let Some(u) = user {
            out.extend_from_slice(u);
        }
    }

    /// Builds the minibatch for `records`, drawing one mixed pair per slate
    /// with both responses present.
    pub fn batch<R: Rng + ?Sized>(&self, ds: &SlateDataset, records: &[usize], rng: &mut R) -> Result<PointwiseBatch> {
        let width = Self::input_width(self.k, &self.features, self.variant);
        let rows = records.len() * self.k;
        let mut inputs = Vec::with_capacity(rows * width);
        let mut targets = Vec::with_capacity(rows);
        let mut pairs = Vec::new();
        for (b, &i) in records.iter().enumerate() {
            let rec = &ds.records[i];
            let user = self.features.user_row(rec.user)?;
            for (pos, (&d, &r)) in rec.slate.docs().iter().zip(rec.response.values()).enumerate() {
                self.push_row(&mut inputs, d, Some(pos), user);
                targets.push(if r { 1.0 } else { 0.0 });
            }
            if self.variant == PointwiseVariant::Pairwise {
                let vals = rec.response.values();
                let pos: Vec<usize> = (0..self.k).filter(|&j| vals[j]).collect();
                let neg: Vec<usize> = (0..self.k).filter(|&j| !vals[j]).collect();
                if !pos.is_empty() && !neg.is_empty() {
                    let p = pos[rng.random_range(0..pos.len())];
                    let n = neg[rng.random_range(0..neg.len())];
                    pairs.push((b * self.k + p, b * self.k + n));
                }
            }
        }
        Ok(PointwiseBatch {
            inputs: Tensor::new(vec![rows, width], inputs)?,
            targets: Tensor::new(vec![rows, 1], targets)?,
            pairs,
        })
    }

    /// Mean binary cross-entropy, plus the margin term for the pairwise
    /// variant.
    pub fn loss(&self, store: &ParamStore, g: &mut Graph, batch: &PointwiseBatch, pairwise: &PairwiseConfig) -> Result<Var> {
        let x = g.constant(batch.inputs.clone());
        let logits = self.mlp.forward(g, store, x)?;
        let bce = g.bce_with_logits(logits, &batch.targets)?;
        let bce = g.mean(bce);
        if self.variant != PointwiseVariant::Pairwise {
            return Ok(bce);
        }
        let weighted = g.scale(bce, pairwise.alpha);
        if batch.pairs.is_empty() {
            return Ok(weighted);
        }
        let probs = g.sigmoid(logits);
        let pos: Vec<usize> = batch.pairs.iter().map(|p| p.0).collect();
        let neg: Vec<usize> = batch.pairs.iter().map(|p| p.1).collect();
        let p_pos = g.gather_rows(probs, &pos)?;
        let p_neg = g.gather_rows(probs, &neg)?;
        let gap = g.sub(p_pos, p_neg)?;
        let gap = g.scale(gap, -1.0);
        let shortfall = g.add_scalar(gap, pairwise.eta);
        let hinge = g.relu(shortfall);
        let hinge = g.mean(hinge);
        let hinge = g.scale(hinge, 1.0 - pairwise.alpha);
        Ok(g.add(weighted, hinge)?)
    }

    /// Logit of every document at `position` (`None` zeroes the feature).
    pub fn scores(&self, position: Option<usize>, user: Option<usize>) -> Result<Vec<f64>> {
        if position.is_some_and(|p| p >= self.k) {
            return Err(invalid(format!("position out of range for slate size {}", self.k)));
        }
        let user = self.features.user_row(user)?;
        let n = self.features.n();
        let width = Self::input_width(self.k, &self.features, self.variant);
        let mut out = Vec::with_capacity(n);
        let chunk = 4096;
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let mut inputs = Vec::with_capacity((end - start) * width);
            for d in start..end {
                self.push_row(&mut inputs, d, position, user);
            }
            let x = Tensor::new(vec![end - start, width], inputs)?;
            out.extend_from_slice(self.mlp.infer(&self.store, &x)?.data());
        }
        Ok(out)
    }

    pub fn click_probability(&self, doc: usize, position: Option<usize>, user: Option<usize>) -> Result<f64> {
        Ok(slatelab_autodiff::sigmoid(self.scores(position, user)?[doc]))
    }

    pub fn greedy_slate(&self, mode: RankMode, user: Option<usize>) -> Result<Slate> {
        let n = self.features.n();
        if n < self.k {
            return Err(invalid(format!("corpus of {n} cannot fill a slate of {} without repeats", self.k)));
        }
        match mode {
            RankMode::ZeroPosition => top_k(&self.scores(None, user)?, self.k),
            RankMode::ArPosition => {
                let mut docs = Vec::with_capacity(self.k);
                for i in 0..self.k {
                    let pos = self.variant.uses_position().then_some(i);
                    let scores = self.scores(pos, user)?;
                    docs.push(best_remaining(&scores, &docs).expect("n >= k"));
                }
                Ok(Slate::from_docs(docs))
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.store.clone())
            .with_meta("kind", KIND)
            .with_meta("variant", self.variant.name())
            .with_meta("n", self.features.n())
            .with_meta("k", self.k)
            .with_meta("hidden", self.mlp.layers[0].fan_out)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, features: FeatureSpace) -> Result<Self> {
        if ckpt.meta_str("kind")? != KIND {
            return Err(invalid(format!("checkpoint holds a {}, not a pointwise model", ckpt.meta_str("kind")?)));
        }
        if ckpt.meta_parse::<usize>("n")? != features.n() {
            return Err(invalid("checkpoint corpus size does not match the embeddings"));
        }
        let variant = PointwiseVariant::parse(ckpt.meta_str("variant")?)?;
        let mut model = Self::new(ckpt.meta_parse("k")?, features, variant, ckpt.meta_parse("hidden")?, &mut stream(0, KIND))?;
        load_params(&mut model.store, &ckpt.params)?;
        Ok(model)
    }
}

pub struct PointwiseTrainer {
    pub model: PointwiseModel,
    adam: Adam,
    rng: ChaCha8Rng,
    data: Arc<SlateDataset>,
    config: PointwiseConfig,
}

impl PointwiseTrainer {
    pub fn new(features: FeatureSpace, data: Arc<SlateDataset>, config: PointwiseConfig) -> Result<Self> {
        check_dataset(&data, features.n(), data.k, features.users.is_some())?;
        if config.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(0.0..=1.0).contains(&config.pairwise.alpha) {
            return Err(invalid(format!("pairwise alpha {} is outside [0, 1]", config.pairwise.alpha)));
        }
        if config.variant == PointwiseVariant::Pairwise
            && !data.records.iter().any(|r| (1..data.k).contains(&r.response.clicks()))
        {
            return Err(invalid(
                "pairwise training needs at least one slate with both positive and negative responses; none found",
            ));
        }
        let mut rng = stream(config.seed, KIND);
        let model = PointwiseModel::new(data.k, features, config.variant, config.hidden, &mut rng)?;
        Ok(Self { model, adam: Adam::new(config.learning_rate), rng, data, config })
    }

    pub fn step(&mut self) -> Result<f64> {
        let b = self.config.batch_size.min(self.data.len());
        let idx: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..self.data.len())).collect();
        let batch = self.model.batch(&self.data, &idx, &mut self.rng)?;
        let mut g = Graph::new();
        let loss = self.model.loss(&self.model.store, &mut g, &batch, &self.config.pairwise)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        self.model.store.accumulate(&grads)?;
        self.adam.step(&mut self.model.store);
        Ok(value)
    }

    pub fn train(mut self) -> Result<(PointwiseModel, Vec<f64>)> {
        let losses = (0..self.config.steps).map(|_| self.step()).collect::<Result<Vec<_>>>()?;
        Ok((self.model, losses))
    }
}

pub struct PointwisePolicy {
    kind: PolicyKind,
    model: Arc<PointwiseModel>,
    mode: RankMode,
}

impl PointwisePolicy {
    pub fn new(kind: PolicyKind, model: Arc<PointwiseModel>) -> Result<Self> {
        let (variant, mode) = match kind {
            PolicyKind::GreedyMlp => (PointwiseVariant::Greedy, RankMode::ZeroPosition),
            PolicyKind::PairwiseMlp => (PointwiseVariant::Pairwise, RankMode::ZeroPosition),
            PolicyKind::PositionMlp => (PointwiseVariant::Position, RankMode::ZeroPosition),
            PolicyKind::ArPositionMlp => (PointwiseVariant::Position, RankMode::ArPosition),
            other => return Err(invalid(format!("{other} is not a pointwise policy"))),
        };
        if model.variant() != variant {
            return Err(invalid(format!("{kind} needs a {} model, got {}", variant.name(), model.variant().name())));
        }
        Ok(Self { kind, model, mode })
    }
}

impl SlatePolicy for PointwisePolicy {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn shape(&self) -> (usize, usize) {
        (self.model.features().n(), self.model.k)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn generate(&self, user: Option<usize>, _rng: &mut dyn RngCore) -> Result<Slate> {
        self.model.greedy_slate(self.mode, user)
    }

    fn generate_many(&self, user: Option<usize>, count: usize, rng: &mut dyn RngCore) -> Result<Vec<Slate>> {
        Ok(vec![self.generate(user, rng)?; count])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingMatrix;
    use crate::slate::{ResponseVector, SlateRecord};
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    fn features(n: usize) -> FeatureSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = (0..n * 8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        FeatureSpace::new(Arc::new(EmbeddingMatrix::normalized(n, 8, data).unwrap()), None)
    }

    fn mixed_dataset(n: usize, k: usize, count: usize) -> SlateDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ds = SlateDataset::new(n, k, 0);
        for _ in 0..count {
            let slate = Slate::from_docs((0..k).map(|_| rng.random_range(0..n)).collect());
            let response = ResponseVector::new((0..k).map(|_| rng.random::<bool>()).collect());
            ds.push(SlateRecord { slate, response, user: None }).unwrap();
        }
        ds
    }

    #[test]
    fn alpha_one_pairwise_equals_pointwise_bitwise() {
        let ds = mixed_dataset(20, 4, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = PointwiseModel::new(4, features(20), PointwiseVariant::Pairwise, 16, &mut rng).unwrap();
        let mut point = pair.clone();
        point.variant = PointwiseVariant::Greedy;
        let idx: Vec<usize> = (0..16).collect();
        let batch = pair.batch(&ds, &idx, &mut rng).unwrap();
        assert!(!batch.pairs.is_empty());
        let cfg = PairwiseConfig { alpha: 1.0, eta: 0.3 };
        let mut g1 = Graph::new();
        let l1 = pair.loss(&pair.store, &mut g1, &batch, &cfg).unwrap();
        let mut g2 = Graph::new();
        let l2 = point.loss(&point.store, &mut g2, &batch, &cfg).unwrap();
        assert_eq!(g1.value(l1).item().to_bits(), g2.value(l2).item().to_bits());
    }

    #[test]
    fn pairwise_without_mixed_slates_rejected() {
        let mut ds = SlateDataset::new(5, 2, 0);
        for r in [false, true] {
            ds.push(SlateRecord { slate: Slate::from_docs(vec![0, 1]), response: ResponseVector::all(2, r), user: None })
                .unwrap();
        }
        let cfg = PointwiseConfig { variant: PointwiseVariant::Pairwise, ..PointwiseConfig::default() };
        let err = PointwiseTrainer::new(features(5), Arc::new(ds), cfg).err().unwrap();
        assert!(err.to_string().contains("both positive and negative"), "{err}");
    }

    #[test]
    fn separable_documents_ranked() {
        let mut ds = SlateDataset::new(10, 2, 0);
        for _ in 0..20 {
            ds.push(SlateRecord {
                slate: Slate::from_docs(vec![7, 3]),
                response: ResponseVector::new(vec![true, false]),
                user: None,
            })
            .unwrap();
        }
        let cfg = PointwiseConfig { steps: 200, batch_size: 8, ..PointwiseConfig::default() };
        let (model, _) = PointwiseTrainer::new(features(10), Arc::new(ds), cfg).unwrap().train().unwrap();
        assert!(model.click_probability(7, None, None).unwrap() > model.click_probability(3, None, None).unwrap());
    }

    #[test]
    fn greedy_slate_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = PointwiseModel::new(4, features(4), PointwiseVariant::Position, 8, &mut rng).unwrap();
        for mode in [RankMode::ZeroPosition, RankMode::ArPosition] {
            let s = m.greedy_slate(mode, None).unwrap();
            let mut docs = s.docs().to_vec();
            docs.sort();
            assert_eq!(docs, vec![0, 1, 2, 3]);
        }
        let small = PointwiseModel::new(5, features(4), PointwiseVariant::Greedy, 8, &mut rng).unwrap();
        assert!(small.greedy_slate(RankMode::ZeroPosition, None).is_err());
    }

    #[test]
    fn greedy_scores_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = PointwiseModel::new(5, features(30), PointwiseVariant::Greedy, 8, &mut rng).unwrap();
        let s = m.greedy_slate(RankMode::ZeroPosition, None).unwrap();
        let scores = m.scores(None, None).unwrap();
        assert!(s.docs().windows(2).all(|w| scores[w[0]] >= scores[w[1]]));
        assert!(!s.has_duplicates());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = PointwiseModel::new(3, features(6), PointwiseVariant::Position, 8, &mut rng).unwrap();
        let back = PointwiseModel::from_checkpoint(&m.to_checkpoint(), features(6)).unwrap();
        assert_eq!(back.store(), m.store());
        assert_eq!(back.variant(), PointwiseVariant::Position);
    }
}
