//! List-CVAE: a conditional VAE over whole slates.
//!
//! The encoder reads the concatenated (normalized) embeddings of a slate and
//! its conditioning vector and outputs a diagonal Gaussian posterior over `z`.
//! A small prior network maps the conditioning to a Gaussian prior. The
//! decoder maps `(z, c)` to `k` query vectors whose dot products with the
//! embedding matrix are the logits of `k` independent softmaxes.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use slatelab_autodiff::{gaussian_kl, reparameterize, Activation, Adam, Checkpoint, Graph, Mlp, ParamStore, Tensor, Var};

use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, Result};
use crate::response::load_params;
use crate::rng::stream;
use crate::slate::{ResponseVector, Slate};

const KIND: &str = "list-cvae";
const LOG_SIGMA_BOUND: f64 = 10.0;
const PRIOR_HIDDEN: [usize; 2] = [16, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditioningMode {
    /// `c = r` as reals.
    FullVector,
    /// `c = Σ r_i`.
    Sum,
}

impl ConditioningMode {
    pub fn dim(self, k: usize) -> usize {
        match self {
            ConditioningMode::FullVector => k,
            ConditioningMode::Sum => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditioningMode::FullVector => "full",
            ConditioningMode::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ConditioningMode::FullVector),
            "sum" => Ok(ConditioningMode::Sum),
            _ => Err(invalid(format!("unknown conditioning mode `{s}` (expected full or sum)"))),
        }
    }
}

pub fn condition_of(r: &ResponseVector, mode: ConditioningMode) -> Vec<f64> {
    match mode {
        ConditioningMode::FullVector => r.as_f64(),
        ConditioningMode::Sum => vec![r.clicks() as f64],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    Learned,
    /// `N(0, I)` regardless of the conditioning.
    Fixed,
}

impl PriorMode {
    pub fn name(self) -> &'static str {
        match self {
            PriorMode::Learned => "learned",
            PriorMode::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(PriorMode::Learned),
            "fixed" => Ok(PriorMode::Fixed),
            _ => Err(invalid(format!("unknown prior mode `{s}` (expected learned or fixed)"))),
        }
    }
}

/// Piecewise-linear KL weight: `start` at step 0 rising to `end` at `warmup`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSchedule {
    pub start: f64,
    pub end: f64,
    pub warmup: usize,
}

impl BetaSchedule {
    /// Linear 0 → 1 over the first half of `steps`.
    pub fn for_steps(steps: usize) -> Self {
        Self { start: 0.0, end: 1.0, warmup: steps / 2 }
    }

    pub fn constant(beta: f64) -> Self {
        Self { start: beta, end: beta, warmup: 0 }
    }

    pub fn value(&self, step: usize) -> f64 {
        if step >= self.warmup {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.warmup as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub conditioning: ConditioningMode,
    pub prior: PriorMode,
    /// `None` derives the schedule from the step budget.
    pub beta: Option<BetaSchedule>,
    /// Softmax candidates per example; `None` uses the full corpus.
    pub negative_budget: Option<usize>,
    /// Extra conditioning width appended after `Φ(r)` (user embeddings).
    pub user_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: 128,
            conditioning: ConditioningMode::FullVector,
            prior: PriorMode::Learned,
            beta: None,
            negative_budget: None,
            user_dim: 0,
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 2000,
            seed: 0,
        }
    }
}

impl CvaeConfig {
    pub fn beta_schedule(&self) -> BetaSchedule {
        self.beta.unwrap_or_else(|| BetaSchedule::for_steps(self.steps))
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(invalid("latent dim, hidden width and batch size must be positive"));
        }
        if let Some(b) = self.negative_budget {
            if b < k {
                return Err(invalid(format!("negative-sample budget {b} is below the slate size {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvaeModel {
    k: usize,
    cond_dim: usize,
    config: CvaeConfig,
    store: ParamStore,
    encoder: Mlp,
    prior: Option<Mlp>,
    decoder: Mlp,
    psi: Arc<EmbeddingMatrix>,
}

/// Candidate documents for one training example, positives first.
pub fn negative_downsample<R: Rng + ?Sized>(rng: &mut R, n: usize, budget: usize, positives: &[usize]) -> Result<Vec<usize>> {
    if budget < positives.len() {
        return Err(invalid(format!("budget {budget} is smaller than the {} positives", positives.len())));
    }
    if let Some(&d) = positives.iter().find(|&&d| d >= n) {
        return Err(invalid(format!("positive document {d} out of range for corpus of {n}")));
    }
    if budget >= n {
        return Ok((0..n).collect());
    }
    let mut out: Vec<usize> = Vec::with_capacity(budget);
    for &d in positives {
        if !out.contains(&d) {
            out.push(d);
        }
    }
    let need = budget - out.len();
    if need * 2 > n {
        let taken: HashSet<usize> = out.iter().copied().collect();
        let pool: Vec<usize> = (0..n).filter(|d| !taken.contains(d)).collect();
        out.extend(sample_indices(rng, pool.len(), need).into_iter().map(|i| pool[i]));
    } else {
        let mut seen: HashSet<usize> = out.iter().copied().collect();
        while out.len() < budget {
            let d = rng.random_range(0..n);
            if seen.insert(d) {
                out.push(d);
            }
        }
    }
    Ok(out)
}

/// Softmax candidates for a training batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Candidates {
    /// Every head scores the whole corpus.
    Full,
    /// One candidate list per example, shared by its `k` heads.
    PerExample(Vec<Vec<usize>>),
}

/// Index of the row's largest value; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

impl CvaeModel {
    pub fn new<R: Rng + ?Sized>(k: usize, psi: Arc<EmbeddingMatrix>, config: CvaeConfig, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(invalid("slate size must be positive"));
        }
        config.validate(k)?;
        let (q, m, h) = (psi.q(), config.latent_dim, config.hidden);
        let cond_dim = config.conditioning.dim(k) + config.user_dim;
        let mut store = ParamStore::new();
        let encoder = Mlp::new(&mut store, "encoder", &[k * q + cond_dim, h, h, 2 * m], Activation::Relu, rng);
        let prior = (config.prior == PriorMode::Learned).then(|| {
            Mlp::new(&mut store, "prior", &[cond_dim, PRIOR_HIDDEN[0], PRIOR_HIDDEN[1], 2 * m], Activation::Relu, rng)
        });
        let decoder = Mlp::new(&mut store, "decoder", &[m + cond_dim, h, h, k * q], Activation::Relu, rng);
        Ok(Self { k, cond_dim, config, store, encoder, prior, decoder, psi })
    }

    pub fn n(&self) -> usize {
        self.psi.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn config(&self) -> &CvaeConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingMatrix> {
        &self.psi
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn decoder_mlp(&self) -> &Mlp {
        &self.decoder
    }

    /// Conditioning vector for a response and an optional user embedding.
    pub fn condition(&self, r: &ResponseVector, user: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut c = condition_of(r, self.config.conditioning);
        if let Some(u) = user {
            c.extend_from_slice(u);
        }
        self.check_condition(&c)?;
        Ok(c)
    }

    fn check_condition(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.cond_dim {
            return Err(invalid(format!("conditioning has {} values, model expects {}", c.len(), self.cond_dim)));
        }
        Ok(())
    }

    fn check_slate(&self, s: &Slate) -> Result<()> {
        if s.len() != self.k {
            return Err(invalid(format!("slate has {} documents, model expects {}", s.len(), self.k)));
        }
        if let Some(&d) = s.docs().iter().find(|&&d| d >= self.n()) {
            return Err(invalid(format!("document {d} out of range for corpus of {}", self.n())));
        }
        Ok(())
    }

    fn rows(conds: &[&[f64]], width: usize) -> Tensor {
        let data = conds.iter().flat_map(|c| c.iter().copied()).collect();
        Tensor::new(vec![conds.len(), width], data).expect("shape matches data")
    }

    fn encoder_input(&self, slates: &[&Slate], conds: &[&[f64]]) -> Tensor {
        let width = self.k * self.psi.q() + self.cond_dim;
        let mut data = Vec::with_capacity(slates.len() * width);
        for (s, c) in slates.iter().zip(conds) {
            for &d in s.docs() {
                data.extend_from_slice(self.psi.row(d));
            }
            data.extend_from_slice(c);
        }
        Tensor::new(vec![slates.len(), width], data).expect("shape matches data")
    }

    fn split_gaussian(&self, g: &mut Graph, out: Var) -> Result<(Var, Var)> {
        let m = self.config.latent_dim;
        let mu = g.slice_cols(out, 0, m)?;
        let ls = g.slice_cols(out, m, m)?;
        Ok((mu, g.clamp(ls, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)))
    }

    fn split_values(&self, t: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let m = self.config.latent_dim;
        let mut mu = Vec::with_capacity(t.rows() * m);
        let mut ls = Vec::with_capacity(t.rows() * m);
        for r in 0..t.rows() {
            mu.extend_from_slice(&t.row(r)[..m]);
            ls.extend(t.row(r)[m..].iter().map(|x| x.clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)));
        }
        (mu, ls)
    }

    /// Posterior `(μ, log σ)` for one slate and conditioning.
    pub fn encode(&self, slate: &Slate, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_slate(slate)?;
        self.check_condition(c)?;
        let out = self.encoder.infer(&self.store, &self.encoder_input(&[slate], &[c]))?;
        Ok(self.split_values(&out))
    }

    /// Prior `(μ0, log σ0)` for a conditioning vector.
    pub fn prior(&self, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_condition(c)?;
        match &self.prior {
            None => Ok((vec![0.0; self.config.latent_dim], vec![0.0; self.config.latent_dim])),
            Some(p) => Ok(self.split_values(&p.infer(&self.store, &Self::rows(&[c], self.cond_dim))?)),
        }
    }

    /// Decoder query vectors for a batch of latents, `[b·k, q]`.
    fn decode_queries(&self, z: &Tensor, c: &[f64]) -> Result<Tensor> {
        let b = z.rows();
        let m = self.config.latent_dim;
        let mut data = Vec::with_capacity(b * (m + self.cond_dim));
        for r in 0..b {
            data.extend_from_slice(z.row(r));
            data.extend_from_slice(c);
        }
        let x = Tensor::new(vec![b, m + self.cond_dim], data)?;
        Ok(self.decoder.infer(&self.store, &x)?.reshape(&[b * self.k, self.psi.q()])?)
    }

    /// `k` rows of logits over `candidates` for latent `z`.
    pub fn decode_logits(&self, z: &[f64], c: &[f64], candidates: &[usize]) -> Result<Tensor> {
        self.check_condition(c)?;
        if z.len() != self.config.latent_dim {
            return Err(invalid(format!("latent has {} values, model expects {}", z.len(), self.config.latent_dim)));
        }
        if candidates.is_empty() {
            return Err(invalid("candidate set is empty"));
        }
        if let Some(&d) = candidates.iter().find(|&&d| d >= self.n()) {
            return Err(invalid(format!("candidate {d} out of range for corpus of {}", self.n())));
        }
        let x = self.decode_queries(&Tensor::new(vec![1, z.len()], z.to_vec())?, c)?;
        Ok(slatelab_autodiff::matmul_nt(&x, &self.psi.gather(candidates))?)
    }

    /// Argmax slate over the full corpus for each latent row of `z`.
    pub fn decode_slates(&self, z: &Tensor, c: &[f64]) -> Result<Vec<Slate>> {
        self.check_condition(c)?;
        let n = self.n();
        let chunk = (4_000_000 / (n * self.k)).max(1);
        let psi = self.psi.as_tensor();
        let mut out = Vec::with_capacity(z.rows());
        let m = self.config.latent_dim;
        for start in (0..z.rows()).step_by(chunk) {
            let len = chunk.min(z.rows() - start);
            let zc = Tensor::new(vec![len, m], z.data()[start * m..(start + len) * m].to_vec())?;
            let x = self.decode_queries(&zc, c)?;
            let logits = slatelab_autodiff::matmul_nt(&x, psi)?;
            for s in 0..len {
                let docs = (0..self.k).map(|i| argmax(logits.row(s * self.k + i))).collect();
                out.push(Slate::from_docs(docs));
            }
        }
        Ok(out)
    }

    pub fn decode_slate(&self, z: &[f64], c: &[f64]) -> Result<Slate> {
        let z = Tensor::new(vec![1, z.len()], z.to_vec())?;
        Ok(self.decode_slates(&z, c)?.remove(0))
    }

    /// Draws `count` latents from the prior for `c`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, c: &[f64], count: usize, rng: &mut R) -> Result<Tensor> {
        let (mu0, ls0) = self.prior(c)?;
        let m = self.config.latent_dim;
        let mut data = Vec::with_capacity(count * m);
        for _ in 0..count {
            for j in 0..m {
                let eps: f64 = rng.sample(StandardNormal);
                data.push(mu0[j] + ls0[j].exp() * eps);
            }
        }
        Ok(Tensor::new(vec![count, m], data)?)
    }

    /// One generated slate: `z` from the prior, argmax per head.
    pub fn generate<R: Rng + ?Sized>(&self, c: &[f64], rng: &mut R) -> Result<Slate> {
        Ok(self.generate_many(c, 1, rng)?.remove(0))
    }

    /// `count` slates, each from its own prior draw.
    pub fn generate_many<R: Rng + ?Sized>(&self, c: &[f64], count: usize, rng: &mut R) -> Result<Vec<Slate>> {
        let z = self.sample_prior(c, count, rng)?;
        self.decode_slates(&z, c)
    }

    /// Batch ELBO objective (per-example mean) and its two parts.
    pub fn elbo_loss(
        &self,
        g: &mut Graph,
        slates: &[&Slate],
        conds: &[&[f64]],
        noise: &Tensor,
        beta: f64,
        candidates: &Candidates,
    ) -> Result<ElboParts> {
        self.elbo_loss_with(&self.store, g, slates, conds, noise, beta, candidates)
    }

    /// [`CvaeModel::elbo_loss`] evaluated with the parameter values in `store`.
    #[allow(clippy::too_many_arguments)]
    pub fn elbo_loss_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        slates: &[&Slate],
        conds: &[&[f64]],
        noise: &Tensor,
        beta: f64,
        candidates: &Candidates,
    ) -> Result<ElboParts> {
        let b = slates.len();
        if b == 0 || conds.len() != b {
            return Err(invalid(format!("batch of {b} slates with {} conditions", conds.len())));
        }
        for (s, c) in slates.iter().zip(conds) {
            self.check_slate(s)?;
            self.check_condition(c)?;
        }
        let (k, q, m) = (self.k, self.psi.q(), self.config.latent_dim);
        let enc_in = g.constant(self.encoder_input(slates, conds));
        let enc_out = self.encoder.forward(g, store, enc_in)?;
        let (mu, ls) = self.split_gaussian(g, enc_out)?;
        let cvar = g.constant(Self::rows(conds, self.cond_dim));
        let (mu0, ls0) = match &self.prior {
            Some(p) => {
                let out = p.forward(g, store, cvar)?;
                self.split_gaussian(g, out)?
            }
            None => {
                let zeros = g.constant(Tensor::zeros(&[b, m]));
                (zeros, zeros)
            }
        };
        let kl = gaussian_kl(g, mu, ls, mu0, ls0)?;
        let z = reparameterize(g, mu, ls, noise)?;
        let dec_in = g.concat(&[z, cvar])?;
        let dec_out = self.decoder.forward(g, store, dec_in)?;
        let x = g.reshape(dec_out, &[b * k, q])?;
        let per_row = match candidates {
            Candidates::Full => {
                let psi = g.constant(self.psi.as_tensor().clone());
                let logits = g.matmul_nt(x, psi)?;
                let labels: Vec<usize> = slates.iter().flat_map(|s| s.docs().iter().copied()).collect();
                g.softmax_cross_entropy(logits, &labels)?
            }
            Candidates::PerExample(cands) => {
                if cands.len() != b {
                    return Err(invalid(format!("{} candidate lists for a batch of {b}", cands.len())));
                }
                let mut parts = Vec::with_capacity(b);
                for (e, (s, cand)) in slates.iter().zip(cands).enumerate() {
                    let labels = s
                        .docs()
                        .iter()
                        .map(|d| {
                            cand.iter()
                                .position(|c| c == d)
                                .ok_or_else(|| invalid(format!("label {d} missing from its candidate set")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let xe = g.slice_rows(x, e * k, k)?;
                    let emb = g.constant(self.psi.gather(cand));
                    let logits = g.matmul_nt(xe, emb)?;
                    parts.push(g.softmax_cross_entropy(logits, &labels)?);
                }
                g.concat_rows(&parts)?
            }
        };
        let recon_sum = g.sum(per_row);
        let recon = g.scale(recon_sum, 1.0 / b as f64);
        let kl_mean = g.scale(kl, 1.0 / b as f64);
        let weighted = g.scale(kl_mean, beta);
        let loss = g.add(recon, weighted)?;
        Ok(ElboParts { loss, reconstruction: recon, kl: kl_mean })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let beta = self.config.beta_schedule();
        Checkpoint::new(self.store.clone())
            .with_meta("kind", KIND)
            .with_meta("n", self.n())
            .with_meta("k", self.k)
            .with_meta("latent_dim", self.config.latent_dim)
            .with_meta("hidden", self.config.hidden)
            .with_meta("conditioning", self.config.conditioning.name())
            .with_meta("prior", self.config.prior.name())
            .with_meta("user_dim", self.config.user_dim)
            .with_meta("negative_budget", self.config.negative_budget.map_or(0, |b| b))
            .with_meta("beta_start", beta.start)
            .with_meta("beta_end", beta.end)
            .with_meta("beta_warmup", beta.warmup)
            .with_meta("learning_rate", self.config.learning_rate)
            .with_meta("batch_size", self.config.batch_size)
            .with_meta("steps", self.config.steps)
            .with_meta("seed", self.config.seed)
    }

    /// Rebuilds a model from its checkpoint and the embedding matrix it was
    /// trained with.
    pub fn from_checkpoint(ckpt: &Checkpoint, psi: Arc<EmbeddingMatrix>) -> Result<Self> {
        if ckpt.meta_str("kind")? != KIND {
            return Err(invalid(format!("checkpoint holds a {}, not a List-CVAE", ckpt.meta_str("kind")?)));
        }
        let n: usize = ckpt.meta_parse("n")?;
        if n != psi.n() {
            return Err(invalid(format!("checkpoint expects {n} documents, embeddings have {}", psi.n())));
        }
        let budget: usize = ckpt.meta_parse("negative_budget")?;
        let config = CvaeConfig {
            latent_dim: ckpt.meta_parse("latent_dim")?,
            hidden: ckpt.meta_parse("hidden")?,
            conditioning: ConditioningMode::parse(ckpt.meta_str("conditioning")?)?,
            prior: PriorMode::parse(ckpt.meta_str("prior")?)?,
            beta: Some(BetaSchedule {
                start: ckpt.meta_parse("beta_start")?,
                end: ckpt.meta_parse("beta_end")?,
                warmup: ckpt.meta_parse("beta_warmup")?,
            }),
            negative_budget: (budget > 0).then_some(budget),
            user_dim: ckpt.meta_parse("user_dim")?,
            learning_rate: ckpt.meta_parse("learning_rate")?,
            batch_size: ckpt.meta_parse("batch_size")?,
            steps: ckpt.meta_parse("steps")?,
            seed: ckpt.meta_parse("seed")?,
        };
        let mut model = Self::new(ckpt.meta_parse("k")?, psi, config, &mut stream(0, KIND))?;
        load_params(&mut model.store, &ckpt.params)?;
        Ok(model)
    }
}

/// Graph handles for the scalar objective and its components.
#[derive(Clone, Copy, Debug)]
pub struct ElboParts {
    pub loss: Var,
    pub reconstruction: Var,
    pub kl: Var,
}

/// A training example: slate plus its conditioning vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeExample {
    pub slate: Slate,
    pub condition: Vec<f64>,
}

/// Stepwise trainer so callers can evaluate between steps.
pub struct CvaeTrainer {
    pub model: CvaeModel,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    examples: Arc<Vec<CvaeExample>>,
    step: usize,
    largest_axis: usize,
}

impl CvaeTrainer {
    pub fn new(k: usize, psi: Arc<EmbeddingMatrix>, config: CvaeConfig, examples: Arc<Vec<CvaeExample>>) -> Result<Self> {
        if examples.is_empty() {
            return Err(invalid("cannot train List-CVAE on an empty dataset"));
        }
        let mut rng = stream(config.seed, KIND);
        let adam = Adam::new(config.learning_rate);
        let model = CvaeModel::new(k, psi, config, &mut rng)?;
        for ex in examples.iter() {
            model.check_slate(&ex.slate)?;
            model.check_condition(&ex.condition)?;
        }
        Ok(Self { model, adam, rng, examples, step: 0, largest_axis: 0 })
    }

    /// Resumes from saved model and optimizer state with a caller-supplied
    /// random stream.
    pub fn resume(model: CvaeModel, adam: Adam, rng: ChaCha8Rng, examples: Arc<Vec<CvaeExample>>, step: usize) -> Self {
        Self { model, adam, rng, examples, step, largest_axis: 0 }
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Longest tensor axis any training step has built so far.
    pub fn largest_axis(&self) -> usize {
        self.largest_axis
    }

    /// One optimizer step; returns the minibatch loss.
    pub fn step(&mut self) -> Result<f64> {
        let cfg = self.model.config.clone();
        let b = cfg.batch_size.min(self.examples.len());
        let idx: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..self.examples.len())).collect();
        let slates: Vec<&Slate> = idx.iter().map(|&i| &self.examples[i].slate).collect();
        let conds: Vec<&[f64]> = idx.iter().map(|&i| self.examples[i].condition.as_slice()).collect();
        let m = cfg.latent_dim;
        let noise = Tensor::new(vec![b, m], (0..b * m).map(|_| self.rng.sample(StandardNormal)).collect())?;
        let n = self.model.n();
        let candidates = match cfg.negative_budget {
            Some(budget) if budget < n => Candidates::PerExample(
                slates
                    .iter()
                    .map(|s| negative_downsample(&mut self.rng, n, budget, s.docs()))
                    .collect::<Result<_>>()?,
            ),
            _ => Candidates::Full,
        };
        let beta = cfg.beta_schedule().value(self.step);
        let mut g = Graph::new();
        let parts = self.model.elbo_loss(&mut g, &slates, &conds, &noise, beta, &candidates)?;
        let loss = g.value(parts.loss).item();
        let grads = g.backward(parts.loss)?;
        self.largest_axis = self.largest_axis.max(g.largest_axis());
        self.model.store.accumulate(&grads)?;
        self.adam.step(&mut self.model.store);
        self.step += 1;
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = self.model.to_checkpoint().with_meta("trained_steps", self.step);
        ckpt.optimizer = Some(self.adam.clone());
        ckpt
    }
}

pub struct CvaeTraining {
    pub model: CvaeModel,
    pub losses: Vec<f64>,
}

/// Runs `config.steps` optimizer steps.
pub fn train_cvae(k: usize, psi: Arc<EmbeddingMatrix>, config: CvaeConfig, examples: Vec<CvaeExample>) -> Result<CvaeTraining> {
    let steps = config.steps;
    let mut trainer = CvaeTrainer::new(k, psi, config, Arc::new(examples))?;
    let losses = (0..steps).map(|_| trainer.step()).collect::<Result<Vec<_>>>()?;
    Ok(CvaeTraining { model: trainer.model, losses })
}
