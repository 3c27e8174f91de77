//! Neural response model: maps a slate (and optionally a user) to the joint
//! distribution over its `2^k` response vectors.
//!
//! Documents are embedded into `q` dimensions, the `k` embeddings are
//! concatenated (followed by a user embedding in the personalized variant),
//! and two relu layers feed a `2^k`-way softmax. Class `c` is the response
//! vector whose bit `i` is the response at position `i`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use slatelab_autodiff::{Activation, Adam, Checkpoint, Graph, Mlp, ParamId, ParamStore, Tensor, Var};

use crate::embedding::{EmbeddingMatrix, UserTable};
use crate::error::{invalid, Result};
use crate::oracle::ClickOracle;
use crate::rng::stream;
use crate::slate::{Slate, SlateDataset};

pub const MAX_SLATE_SIZE: usize = 16;
const KIND: &str = "response-model";

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseConfig {
    pub embedding_dim: usize,
    pub user_dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 8,
            user_dim: 16,
            hidden: 128,
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseModel {
    n: usize,
    k: usize,
    q: usize,
    users: usize,
    user_dim: usize,
    store: ParamStore,
    doc_table: ParamId,
    user_table: Option<ParamId>,
    mlp: Mlp,
}

fn random_table<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| normal.sample(rng)).collect()).expect("shape matches data")
}

impl ResponseModel {
    /// Fresh model for corpus size `n`, slate size `k` and `users` users
    /// (0 for the non-personalized variant).
    pub fn new<R: Rng + ?Sized>(n: usize, k: usize, users: usize, config: &ResponseConfig, rng: &mut R) -> Result<Self> {
        if n == 0 || k == 0 || k > MAX_SLATE_SIZE {
            return Err(invalid(format!("response model needs n >= 1 and 1 <= k <= {MAX_SLATE_SIZE} (n={n}, k={k})")));
        }
        let q = config.embedding_dim;
        let mut store = ParamStore::new();
        let doc_table = store.add("doc_embedding", random_table(n, q, rng));
        let user_table = (users > 0).then(|| store.add("user_embedding", random_table(users, config.user_dim, rng)));
        let user_dim = if users > 0 { config.user_dim } else { 0 };
        let sizes = [k * q + user_dim, config.hidden, config.hidden, 1 << k];
        let mlp = Mlp::new(&mut store, "response", &sizes, Activation::Relu, rng);
        Ok(Self { n, k, q, users, user_dim, store, doc_table, user_table, mlp })
    }

    pub fn embedding_dim(&self) -> usize {
        self.q
    }

    pub fn user_dim(&self) -> usize {
        self.user_dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn output_layer(&self) -> slatelab_autodiff::Dense {
        *self.mlp.layers.last().expect("three layers")
    }

    fn check_inputs(&self, slates: &[Slate], users: &[Option<usize>]) -> Result<()> {
        if slates.len() != users.len() {
            return Err(invalid(format!("{} slates but {} user entries", slates.len(), users.len())));
        }
        for s in slates {
            if s.len() != self.k {
                return Err(invalid(format!("slate has {} documents, model expects {}", s.len(), self.k)));
            }
            if let Some(&d) = s.docs().iter().find(|&&d| d >= self.n) {
                return Err(invalid(format!("document {d} out of range for corpus of {}", self.n)));
            }
        }
        for u in users {
            match (u, self.user_table) {
                (Some(u), Some(_)) if *u >= self.users => {
                    return Err(invalid(format!("unknown user {u}; model knows {} users", self.users)))
                }
                (Some(_), None) => return Err(invalid("user given to a model without user embeddings")),
                (None, Some(_)) => return Err(invalid("personalized model requires a user id")),
                _ => {}
            }
        }
        Ok(())
    }

    fn input_rows(&self, slates: &[Slate], users: &[Option<usize>]) -> Tensor {
        let width = self.k * self.q + self.user_dim;
        let table = self.store.value(self.doc_table).data();
        let mut data = Vec::with_capacity(slates.len() * width);
        for (s, u) in slates.iter().zip(users) {
            for &d in s.docs() {
                data.extend_from_slice(&table[d * self.q..(d + 1) * self.q]);
            }
            if let (Some(u), Some(t)) = (u, self.user_table) {
                data.extend_from_slice(&self.store.value(t).data()[u * self.user_dim..(u + 1) * self.user_dim]);
            }
        }
        Tensor::new(vec![slates.len(), width], data).expect("shape matches data")
    }

    fn logits_graph(&self, g: &mut Graph, slates: &[Slate], users: &[Option<usize>]) -> Result<Var> {
        let b = slates.len();
        let ids: Vec<usize> = slates.iter().flat_map(|s| s.docs().iter().copied()).collect();
        let table = g.param(&self.store, self.doc_table)?;
        let emb = g.gather_rows(table, &ids)?;
        let mut x = g.reshape(emb, &[b, self.k * self.q])?;
        if let Some(t) = self.user_table {
            let ut = g.param(&self.store, t)?;
            let uids: Vec<usize> = users.iter().map(|u| u.unwrap_or(0)).collect();
            let ue = g.gather_rows(ut, &uids)?;
            x = g.concat(&[x, ue])?;
        }
        Ok(self.mlp.forward(g, &self.store, x)?)
    }

    /// Mean cross-entropy of the observed response classes.
    pub fn loss(&self, g: &mut Graph, slates: &[Slate], users: &[Option<usize>], labels: &[usize]) -> Result<Var> {
        self.check_inputs(slates, users)?;
        let logits = self.logits_graph(g, slates, users)?;
        let ce = g.softmax_cross_entropy(logits, labels)?;
        Ok(g.mean(ce))
    }

    /// Row-per-slate response distributions, `[slates.len(), 2^k]`.
    pub fn predict_batch(&self, slates: &[Slate], users: &[Option<usize>]) -> Result<Tensor> {
        self.check_inputs(slates, users)?;
        let mut out = self.mlp.infer(&self.store, &self.input_rows(slates, users))?;
        let classes = 1 << self.k;
        for row in out.data_mut().chunks_mut(classes) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        Ok(out)
    }

    pub fn predict(&self, slate: &Slate, user: Option<usize>) -> Result<Vec<f64>> {
        Ok(self.predict_batch(std::slice::from_ref(slate), &[user])?.into_data())
    }

    /// Per-position click probabilities obtained by marginalizing the joint.
    pub fn marginals(&self, slate: &Slate, user: Option<usize>) -> Result<Vec<f64>> {
        Ok(marginals_of(&self.predict(slate, user)?, self.k))
    }

    /// Unit-norm document embeddings.
    pub fn document_embeddings(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::from_tensor(self.store.value(self.doc_table))
    }

    /// Unnormalized document embedding table as trained.
    pub fn raw_document_embeddings(&self) -> &Tensor {
        self.store.value(self.doc_table)
    }

    pub fn user_embedding(&self, user: usize) -> Result<&[f64]> {
        let t = self.user_table.ok_or_else(|| invalid("model has no user embeddings"))?;
        if user >= self.users {
            return Err(invalid(format!("unknown user {user}; model knows {} users", self.users)));
        }
        Ok(&self.store.value(t).data()[user * self.user_dim..(user + 1) * self.user_dim])
    }

    pub fn user_table(&self) -> Option<UserTable> {
        self.user_table.map(|t| UserTable::new(self.store.value(t).clone()).expect("2-d table"))
    }

    /// Copy of the model whose corpus is extended by `extra` raw embedding
    /// rows (`[m, q]`), so new documents can be scored.
    pub fn with_extra_documents(&self, extra: &Tensor) -> Result<Self> {
        if extra.shape().len() != 2 || extra.cols() != self.q {
            return Err(invalid(format!("extra embeddings must be [m, {}], got {:?}", self.q, extra.shape())));
        }
        let mut out = self.clone();
        let mut data = out.store.value(out.doc_table).data().to_vec();
        data.extend_from_slice(extra.data());
        let rows = self.n + extra.rows();
        *out.store.value_mut(out.doc_table) = Tensor::new(vec![rows, self.q], data)?;
        out.store.get_mut(out.doc_table)?.grad = Tensor::zeros(&[rows, self.q]);
        out.n = rows;
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.store.clone())
            .with_meta("kind", KIND)
            .with_meta("n", self.n)
            .with_meta("k", self.k)
            .with_meta("q", self.q)
            .with_meta("users", self.users)
            .with_meta("user_dim", self.user_dim)
            .with_meta("hidden", self.mlp.layers[0].fan_out)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta_str("kind")? != KIND {
            return Err(invalid(format!("checkpoint holds a {}, not a response model", ckpt.meta_str("kind")?)));
        }
        let config = ResponseConfig {
            embedding_dim: ckpt.meta_parse("q")?,
            user_dim: ckpt.meta_parse::<usize>("user_dim")?.max(1),
            hidden: ckpt.meta_parse("hidden")?,
            ..ResponseConfig::default()
        };
        let users: usize = ckpt.meta_parse("users")?;
        let mut model = Self::new(ckpt.meta_parse("n")?, ckpt.meta_parse("k")?, users, &config, &mut stream(0, KIND))?;
        load_params(&mut model.store, &ckpt.params)?;
        Ok(model)
    }
}

/// Copies every parameter value from `src` into `dst`, requiring identical
/// names and shapes.
pub(crate) fn load_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(invalid(format!("checkpoint has {} parameters, model expects {}", src.len(), dst.len())));
    }
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return Err(invalid(format!(
                "checkpoint parameter {} {:?} does not match model parameter {} {:?}",
                s.name,
                s.value.shape(),
                d.name,
                d.value.shape()
            )));
        }
        d.value = s.value.clone();
    }
    Ok(())
}

/// `P(r_i = 1)` for every position from a joint distribution over `2^k`
/// classes.
pub fn marginals_of(probs: &[f64], k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k];
    for (c, &p) in probs.iter().enumerate() {
        for (i, mi) in m.iter_mut().enumerate() {
            if c >> i & 1 == 1 {
                *mi += p;
            }
        }
    }
    m
}

/// `Σ_c P(c) · popcount(c)`.
pub fn expected_clicks_of(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(c, &p)| p * c.count_ones() as f64).sum()
}

impl ClickOracle for ResponseModel {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn num_users(&self) -> usize {
        self.users
    }

    fn expected_clicks(&self, slate: &Slate, user: Option<usize>) -> Result<f64> {
        Ok(expected_clicks_of(&self.predict(slate, user)?))
    }

    fn expected_clicks_batch(&self, slates: &[Slate], users: &[Option<usize>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(slates.len());
        for (s, u) in slates.chunks(256).zip(users.chunks(256)) {
            let probs = self.predict_batch(s, u)?;
            out.extend(probs.data().chunks(1 << self.k).map(expected_clicks_of));
        }
        Ok(out)
    }
}

/// Trained model plus the per-step minibatch loss.
pub struct ResponseTraining {
    pub model: ResponseModel,
    pub losses: Vec<f64>,
}

/// Minibatch cross-entropy distillation of `dataset` into a response model.
pub fn train_response_model(dataset: &SlateDataset, config: &ResponseConfig) -> Result<ResponseTraining> {
    if dataset.is_empty() {
        return Err(invalid("cannot train a response model on an empty dataset"));
    }
    if config.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut rng = stream(config.seed, KIND);
    let users = if dataset.is_personalized() { dataset.num_users() } else { 0 };
    let mut model = ResponseModel::new(dataset.n, dataset.k, users, config, &mut rng)?;
    let mut adam = Adam::new(config.learning_rate);
    let mut losses = Vec::with_capacity(config.steps);
    let b = config.batch_size.min(dataset.len());
    for _ in 0..config.steps {
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..dataset.len())).collect();
        let slates: Vec<Slate> = idx.iter().map(|&i| dataset.records[i].slate.clone()).collect();
        let us: Vec<Option<usize>> = idx.iter().map(|&i| dataset.records[i].user).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| dataset.records[i].response.encode_index()).collect();
        let mut g = Graph::new();
        let loss = model.loss(&mut g, &slates, &us, &labels)?;
        losses.push(g.value(loss).item());
        let grads = g.backward(loss)?;
        model.store.accumulate(&grads)?;
        adam.step(&mut model.store);
    }
    Ok(ResponseTraining { model, losses })
}
