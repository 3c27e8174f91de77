//! LSTM slate scorers: dense input layer, recurrent middle layers and a dense
//! output head predicting the click at each slate position.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use slatelab_autodiff::{Activation, Adam, Checkpoint, Dense, Graph, Mlp, ParamId, ParamStore, Tensor, Var};

use crate::error::{invalid, Result};
use crate::policy::{FeatureSpace, PolicyKind, SlatePolicy};
use crate::rankers::{best_remaining, check_dataset, top_k};
use crate::response::load_params;
use crate::rng::stream;
use crate::slate::{Slate, SlateDataset};

const KIND: &str = "sequence";

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceConfig {
    pub input_hidden: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub output_hidden: usize,
    /// Initial bias of the forget gate.
    pub forget_bias: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            input_hidden: 64,
            lstm_hidden: 64,
            lstm_layers: 1,
            output_hidden: 64,
            forget_bias: 1.0,
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmLayer {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, hidden: usize, forget_bias: f64, rng: &mut R) -> Self {
        let input = store.add_glorot(format!("{name}.input"), fan_in, 4 * hidden, rng);
        let recurrent = store.add_glorot(format!("{name}.recurrent"), hidden, 4 * hidden, rng);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(forget_bias);
        let bias = store.add(format!("{name}.bias"), Tensor::new(vec![4 * hidden], b).expect("shape matches data"));
        Self { input, recurrent, bias, hidden }
    }

    /// One cell update; gates are laid out as input, forget, candidate, output.
    fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let wx = g.param(store, self.input)?;
        let wh = g.param(store, self.recurrent)?;
        let b = g.param(store, self.bias)?;
        let xa = g.matmul(x, wx)?;
        let ha = g.matmul(h, wh)?;
        let pre = g.add(xa, ha)?;
        let gates = g.add_row(pre, b)?;
        let i = g.slice_cols(gates, 0, hs)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(gates, hs, hs)?;
        let f = g.sigmoid(f);
        let cand = g.slice_cols(gates, 2 * hs, hs)?;
        let cand = g.tanh(cand);
        let o = g.slice_cols(gates, 3 * hs, hs)?;
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c2 = g.add(keep, write)?;
        let squashed = g.tanh(c2);
        let h2 = g.mul(o, squashed)?;
        Ok((h2, c2))
    }
}

#[derive(Clone, Debug)]
pub struct SequenceModel {
    k: usize,
    features: FeatureSpace,
    config: SequenceConfig,
    store: ParamStore,
    input: Dense,
    lstm: Vec<LstmLayer>,
    output: Mlp,
}

/// Recurrent state after a prefix: per layer `(h, c)`, one row each.
#[derive(Clone, Debug)]
pub struct SequenceState {
    layers: Vec<(Tensor, Tensor)>,
}

/// Greedy scores every document as a length-1 sequence; autoregressive
/// unrolls the state through the documents chosen so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceMode {
    Greedy,
    Autoregressive,
}

impl SequenceModel {
    pub fn new<R: Rng + ?Sized>(k: usize, features: FeatureSpace, config: SequenceConfig, rng: &mut R) -> Result<Self> {
        if k == 0 || config.lstm_layers == 0 || config.lstm_hidden == 0 || config.input_hidden == 0 || config.output_hidden == 0 {
            return Err(invalid("slate size, layer count and widths must be positive"));
        }
        let mut store = ParamStore::new();
        let width = features.q() + features.user_dim();
        let input = Dense::new(&mut store, "sequence.input", width, config.input_hidden, rng);
        let mut lstm = Vec::with_capacity(config.lstm_layers);
        let mut fan_in = config.input_hidden;
        for l in 0..config.lstm_layers {
            lstm.push(LstmLayer::new(&mut store, &format!("sequence.lstm{l}"), fan_in, config.lstm_hidden, config.forget_bias, rng));
            fan_in = config.lstm_hidden;
        }
        let output = Mlp::new(&mut store, "sequence.output", &[fan_in, config.output_hidden, 1], Activation::Relu, rng);
        Ok(Self { k, features, config, store, input, lstm, output })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn lstm_layers(&self) -> &[LstmLayer] {
        &self.lstm
    }

    pub fn features(&self) -> &FeatureSpace {
        &self.features
    }

    fn inputs(&self, docs: &[usize], user: Option<&[f64]>) -> Tensor {
        let width = self.features.q() + self.features.user_dim();
        let mut data = Vec::with_capacity(docs.len() * width);
        for &d in docs {
            data.extend_from_slice(self.features.docs.row(d));
            if let Some(u) = user {
                data.extend_from_slice(u);
            }
        }
        Tensor::new(vec![docs.len(), width], data).expect("shape matches data")
    }

    /// Advances every layer by one position; returns the output logits.
    fn advance(&self, store: &ParamStore, g: &mut Graph, x: Tensor, state: &mut [(Var, Var)]) -> Result<Var> {
        let x = g.constant(x);
        let x = self.input.forward(g, store, x)?;
        let mut x = g.relu(x);
        for (layer, (h, c)) in self.lstm.iter().zip(state.iter_mut()) {
            let (h2, c2) = layer.step(g, store, x, *h, *c)?;
            *h = h2;
            *c = c2;
            x = h2;
        }
        Ok(self.output.forward(g, store, x)?)
    }

    fn zero_state(&self, g: &mut Graph, rows: usize) -> Vec<(Var, Var)> {
        self.lstm
            .iter()
            .map(|l| {
                let z = g.constant(Tensor::zeros(&[rows, l.hidden]));
                (z, z)
            })
            .collect()
    }

    /// Mean per-position binary cross-entropy over the unrolled slates.
    pub fn loss(&self, store: &ParamStore, g: &mut Graph, ds: &SlateDataset, records: &[usize]) -> Result<Var> {
        let b = records.len();
        let mut state = self.zero_state(g, b);
        let mut logits = Vec::with_capacity(self.k);
        let users: Vec<Option<&[f64]>> =
            records.iter().map(|&i| self.features.user_row(ds.records[i].user)).collect::<Result<_>>()?;
        for t in 0..self.k {
            let width = self.features.q() + self.features.user_dim();
            let mut data = Vec::with_capacity(b * width);
            for (&i, u) in records.iter().zip(&users) {
                data.extend_from_slice(self.inputs(&ds.records[i].slate.docs()[t..t + 1], *u).data());
            }
            let x = Tensor::new(vec![b, width], data)?;
            logits.push(self.advance(store, g, x, &mut state)?);
        }
        let all = g.concat(&logits)?;
        let targets: Vec<f64> = records.iter().flat_map(|&i| ds.records[i].response.as_f64()).collect();
        let bce = g.bce_with_logits(all, &Tensor::new(vec![b, self.k], targets)?)?;
        Ok(g.mean(bce))
    }

    pub fn initial_state(&self) -> SequenceState {
        SequenceState { layers: self.lstm.iter().map(|l| (Tensor::zeros(&[1, l.hidden]), Tensor::zeros(&[1, l.hidden]))).collect() }
    }

    fn tile(t: &Tensor, rows: usize) -> Tensor {
        let mut data = Vec::with_capacity(rows * t.len());
        for _ in 0..rows {
            data.extend_from_slice(t.data());
        }
        Tensor::new(vec![rows, t.cols()], data).expect("shape matches data")
    }

    /// Logit of appending each document after the prefix summarized by
    /// `state`.
    pub fn next_scores(&self, state: &SequenceState, user: Option<usize>) -> Result<Vec<f64>> {
        let user = self.features.user_row(user)?;
        let n = self.features.n();
        let mut out = Vec::with_capacity(n);
        let chunk = 2048;
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let mut g = Graph::new();
            let mut st: Vec<(Var, Var)> = state
                .layers
                .iter()
                .map(|(h, c)| (g.constant(Self::tile(h, end - start)), g.constant(Self::tile(c, end - start))))
                .collect();
            let docs: Vec<usize> = (start..end).collect();
            let logits = self.advance(&self.store, &mut g, self.inputs(&docs, user), &mut st)?;
            out.extend_from_slice(g.value(logits).data());
        }
        Ok(out)
    }

    /// State after appending `doc`.
    pub fn push(&self, state: &SequenceState, doc: usize, user: Option<usize>) -> Result<SequenceState> {
        if doc >= self.features.n() {
            return Err(invalid(format!("document {doc} out of range")));
        }
        let user = self.features.user_row(user)?;
        let mut g = Graph::new();
        let mut st: Vec<(Var, Var)> =
            state.layers.iter().map(|(h, c)| (g.constant(h.clone()), g.constant(c.clone()))).collect();
        self.advance(&self.store, &mut g, self.inputs(&[doc], user), &mut st)?;
        Ok(SequenceState { layers: st.iter().map(|&(h, c)| (g.value(h).clone(), g.value(c).clone())).collect() })
    }

    /// Completes a slate after a forced prefix, choosing the best remaining
    /// document at each further position.
    pub fn complete(&self, prefix: &[usize], user: Option<usize>) -> Result<Slate> {
        let n = self.features.n();
        if n < self.k {
            return Err(invalid(format!("corpus of {n} cannot fill a slate of {} without repeats", self.k)));
        }
        let mut state = self.initial_state();
        let mut docs = Vec::with_capacity(self.k);
        for &d in prefix {
            state = self.push(&state, d, user)?;
            docs.push(d);
        }
        while docs.len() < self.k {
            let scores = self.next_scores(&state, user)?;
            let d = best_remaining(&scores, &docs).ok_or_else(|| invalid("ran out of documents"))?;
            docs.push(d);
            if docs.len() < self.k {
                state = self.push(&state, d, user)?;
            }
        }
        Ok(Slate::from_docs(docs))
    }

    pub fn slate(&self, mode: SequenceMode, user: Option<usize>) -> Result<Slate> {
        match mode {
            SequenceMode::Greedy => {
                if self.features.n() < self.k {
                    return Err(invalid(format!("corpus of {} cannot fill a slate of {}", self.features.n(), self.k)));
                }
                top_k(&self.next_scores(&self.initial_state(), user)?, self.k)
            }
            SequenceMode::Autoregressive => self.complete(&[], user),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint::new(self.store.clone())
            .with_meta("kind", KIND)
            .with_meta("n", self.features.n())
            .with_meta("k", self.k)
            .with_meta("input_hidden", c.input_hidden)
            .with_meta("lstm_hidden", c.lstm_hidden)
            .with_meta("lstm_layers", c.lstm_layers)
            .with_meta("output_hidden", c.output_hidden)
            .with_meta("forget_bias", c.forget_bias)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, features: FeatureSpace) -> Result<Self> {
        if ckpt.meta_str("kind")? != KIND {
            return Err(invalid(format!("checkpoint holds a {}, not a sequence model", ckpt.meta_str("kind")?)));
        }
        if ckpt.meta_parse::<usize>("n")? != features.n() {
            return Err(invalid("checkpoint corpus size does not match the embeddings"));
        }
        let config = SequenceConfig {
            input_hidden: ckpt.meta_parse("input_hidden")?,
            lstm_hidden: ckpt.meta_parse("lstm_hidden")?,
            lstm_layers: ckpt.meta_parse("lstm_layers")?,
            output_hidden: ckpt.meta_parse("output_hidden")?,
            forget_bias: ckpt.meta_parse("forget_bias")?,
            ..SequenceConfig::default()
        };
        let mut model = Self::new(ckpt.meta_parse("k")?, features, config, &mut stream(0, KIND))?;
        load_params(&mut model.store, &ckpt.params)?;
        Ok(model)
    }
}

pub struct SequenceTrainer {
    pub model: SequenceModel,
    adam: Adam,
    rng: ChaCha8Rng,
    data: Arc<SlateDataset>,
}

impl SequenceTrainer {
    pub fn new(features: FeatureSpace, data: Arc<SlateDataset>, config: SequenceConfig) -> Result<Self> {
        check_dataset(&data, features.n(), data.k, features.users.is_some())?;
        if config.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        let mut rng = stream(config.seed, KIND);
        let adam = Adam::new(config.learning_rate);
        let model = SequenceModel::new(data.k, features, config, &mut rng)?;
        Ok(Self { model, adam, rng, data })
    }

    pub fn step(&mut self) -> Result<f64> {
        let b = self.model.config.batch_size.min(self.data.len());
        let idx: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..self.data.len())).collect();
        let mut g = Graph::new();
        let loss = self.model.loss(&self.model.store, &mut g, &self.data, &idx)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        self.model.store.accumulate(&grads)?;
        self.adam.step(&mut self.model.store);
        Ok(value)
    }

    pub fn train(mut self) -> Result<(SequenceModel, Vec<f64>)> {
        let steps = self.model.config.steps;
        let losses = (0..steps).map(|_| self.step()).collect::<Result<Vec<_>>>()?;
        Ok((self.model, losses))
    }
}

pub struct SequencePolicy {
    kind: PolicyKind,
    model: Arc<SequenceModel>,
    mode: SequenceMode,
}

impl SequencePolicy {
    pub fn new(kind: PolicyKind, model: Arc<SequenceModel>) -> Result<Self> {
        let mode = match kind {
            PolicyKind::GreedyLstm => SequenceMode::Greedy,
            PolicyKind::ArLstm => SequenceMode::Autoregressive,
            other => return Err(invalid(format!("{other} is not a sequence policy"))),
        };
        Ok(Self { kind, model, mode })
    }
}

impl SlatePolicy for SequencePolicy {
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
        self.model.slate(self.mode, user)
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
    use slatelab_autodiff::gradcheck::check_gradients;

    fn features(n: usize) -> FeatureSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = (0..n * 8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        FeatureSpace::new(Arc::new(EmbeddingMatrix::normalized(n, 8, data).unwrap()), None)
    }

    fn small() -> SequenceConfig {
        SequenceConfig { input_hidden: 6, lstm_hidden: 5, output_hidden: 4, lstm_layers: 2, ..SequenceConfig::default() }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut ds = SlateDataset::new(6, 3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..4 {
            let slate = Slate::from_docs((0..3).map(|_| rng.random_range(0..6)).collect());
            let response = ResponseVector::new((0..3).map(|_| rng.random::<bool>()).collect());
            ds.push(SlateRecord { slate, response, user: None }).unwrap();
        }
        let mut m = SequenceModel::new(3, features(6), small(), &mut rng).unwrap();
        for p in m.store_mut().iter_mut().filter(|p| p.name.ends_with("bias")) {
            p.value.data_mut().iter_mut().for_each(|b| *b += rng.random_range(-0.2..0.2));
        }
        let report = check_gradients(m.store(), 1e-6, |s, g| {
            m.loss(s, g, &ds, &[0, 1, 2, 3]).map_err(|e| slatelab_autodiff::Error::Checkpoint(e.to_string()))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn zero_recurrence_makes_ar_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = SequenceModel::new(4, features(25), SequenceConfig { lstm_layers: 1, ..small() }, &mut rng).unwrap();
        let layer = m.lstm_layers()[0];
        m.store_mut().value_mut(layer.recurrent).data_mut().fill(0.0);
        m.store_mut().value_mut(layer.bias).data_mut()[5..10].fill(-1e3);
        assert_eq!(m.slate(SequenceMode::Autoregressive, None).unwrap(), m.slate(SequenceMode::Greedy, None).unwrap());
    }

    #[test]
    fn ar_choice_depends_on_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = SequenceModel::new(3, features(40), SequenceConfig::default(), &mut rng).unwrap();
        let seconds: std::collections::HashSet<usize> = (0..40).map(|d| m.complete(&[d], None).unwrap().docs()[1]).collect();
        assert!(seconds.len() > 1);
    }

    #[test]
    fn slates_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = SequenceModel::new(5, features(12), small(), &mut rng).unwrap();
        for mode in [SequenceMode::Greedy, SequenceMode::Autoregressive] {
            let s = m.slate(mode, None).unwrap();
            assert_eq!(s.len(), 5);
            assert!(!s.has_duplicates());
        }
        let tiny = SequenceModel::new(5, features(3), small(), &mut rng).unwrap();
        assert!(tiny.slate(SequenceMode::Autoregressive, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = SequenceModel::new(3, features(7), small(), &mut rng).unwrap();
        let back = SequenceModel::from_checkpoint(&m.to_checkpoint(), features(7)).unwrap();
        assert_eq!(back.store(), m.store());
    }
}
