//! Scenario wiring: data, oracle, every policy, checkpoint evaluation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cvae::{CvaeConfig, CvaeModel, CvaeTrainer, PriorMode};
use crate::error::{invalid, Result};
use crate::harness::eval::evaluate_policy;
use crate::harness::registry::{cvae_trainer, pointwise_trainer, pointwise_variant, sequence_trainer, PolicyTraining};
use crate::harness::report::{aggregate_runs, EvalRecord, RunId};
use crate::harness::synth::{generalization_filter, label_with_oracle, synthesize_corpus};
use crate::oracle::ClickOracle;
use crate::policy::{CvaePolicy, FeatureSpace, PolicyKind, SlatePolicy};
use crate::rankers::{
    PointwiseConfig, PointwisePolicy, PointwiseTrainer, PointwiseVariant, RandomPolicy, SequenceConfig, SequencePolicy,
    SequenceTrainer,
};
use crate::response::{train_response_model, ResponseConfig, ResponseModel, MAX_SLATE_SIZE};
use crate::rng::{child_seed, stream};
use crate::sim::{SimConfig, SimEnvironment};
use crate::slate::{ResponseVector, SlateDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Small,
    Medium,
    Large,
    Generalization,
    Personalization,
    LatentSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Small,
        Scenario::Medium,
        Scenario::Large,
        Scenario::Generalization,
        Scenario::Personalization,
        Scenario::LatentSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Small => "small",
            Scenario::Medium => "medium",
            Scenario::Large => "large",
            Scenario::Generalization => "generalization",
            Scenario::Personalization => "personalization",
            Scenario::LatentSweep => "latent-sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|x| x.name()).collect();
            invalid(format!("unknown scenario `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

pub const LATENT_CENTER: &str = "latent-center";
pub const LATENT_RING: &str = "latent-ring";

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub k: usize,
    pub runs: usize,
    /// Training steps for every policy.
    pub steps: usize,
    pub eval_samples: usize,
    /// Training slates drawn from the simulator (or labelled by the oracle
    /// for the large scenario).
    pub train_size: usize,
    /// Fresh simulator slates the oracle is distilled from; 0 reuses the
    /// training set.
    pub oracle_size: usize,
    pub seed: u64,
    /// Response-sum threshold fraction for the generalization scenario.
    pub h: Option<f64>,
    pub corpus_factor: usize,
    pub noise_std: f64,
    pub users: usize,
    /// Evaluated in addition to the regular grid.
    pub extra_checkpoints: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub response: ResponseConfig,
    pub cvae: CvaeConfig,
    pub pointwise: PointwiseConfig,
    pub sequence: SequenceConfig,
    /// Logged data to use instead of the simulator.
    pub dataset: Option<Arc<SlateDataset>>,
}

impl ExperimentSpec {
    pub fn preset(scenario: Scenario) -> Self {
        let mut spec = Self {
            scenario,
            n: 100,
            k: 10,
            runs: 5,
            steps: 2000,
            eval_samples: 10_000,
            train_size: 100_000,
            oracle_size: 500_000,
            seed: 0,
            h: None,
            corpus_factor: 1,
            noise_std: 0.1,
            users: 0,
            extra_checkpoints: Vec::new(),
            policies: PolicyKind::ALL.to_vec(),
            response: ResponseConfig::default(),
            cvae: CvaeConfig::default(),
            pointwise: PointwiseConfig { batch_size: 32, ..PointwiseConfig::default() },
            sequence: SequenceConfig { batch_size: 32, ..SequenceConfig::default() },
            dataset: None,
        };
        match scenario {
            Scenario::Small => {}
            Scenario::Medium => {
                spec.n = 10_000;
                spec.k = 5;
            }
            Scenario::Large => {
                spec.n = 10_000;
                spec.k = 5;
                spec.corpus_factor = 100;
                spec.cvae.negative_budget = Some(1000);
            }
            Scenario::Generalization => {
                spec.n = 1000;
                spec.k = 5;
                spec.h = Some(0.6);
            }
            Scenario::Personalization => {
                spec.users = 50;
                spec.runs = 3;
                spec.steps = 4000;
                spec.cvae.hidden = 512;
                spec.cvae.user_dim = spec.response.user_dim;
            }
            Scenario::LatentSweep => {
                spec.n = 1000;
                spec.runs = 1;
                spec.steps = 5000;
                spec.extra_checkpoints = vec![500, 1000, 5000];
                spec.cvae.latent_dim = 2;
                spec.cvae.prior = PriorMode::Fixed;
                spec.policies = vec![PolicyKind::ListCvae];
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.dataset.as_ref().map_or((self.n, self.k), |d| (d.n, d.k));
        if k == 0 || k > MAX_SLATE_SIZE {
            return Err(invalid(format!("slate size {k} is outside 1..={MAX_SLATE_SIZE}")));
        }
        if n == 0 || self.runs == 0 || self.eval_samples == 0 {
            return Err(invalid("n, runs and eval samples must be positive"));
        }
        if self.dataset.as_ref().is_some_and(|d| d.is_empty()) || (self.dataset.is_none() && self.train_size == 0) {
            return Err(invalid("training set would be empty"));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h <= 1.0) {
                return Err(invalid(format!("h = {h} is outside (0, 1]")));
            }
        }
        if self.corpus_factor == 0 {
            return Err(invalid("corpus factor must be at least 1"));
        }
        self.cvae.validate(k)?;
        if self.policies.iter().any(|p| p != &PolicyKind::ListCvae && p != &PolicyKind::Random) && n * self.corpus_factor < k {
            return Err(invalid(format!("ranking baselines need at least k = {k} documents")));
        }
        if self.scenario == Scenario::LatentSweep && (self.cvae.latent_dim != 2 || self.cvae.prior != PriorMode::Fixed) {
            return Err(invalid("latent sweep needs a 2-d latent space with the fixed prior"));
        }
        Ok(())
    }

    /// Every `max(steps / 20, 50)` steps from 0, the final step and any
    /// extra checkpoints within range.
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        let every = (self.steps / 20).max(50);
        let mut steps: Vec<usize> = (0..=self.steps).step_by(every).collect();
        steps.push(self.steps);
        steps.extend(self.extra_checkpoints.iter().copied().filter(|&s| s <= self.steps));
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Everything a single run produced, for follow-up analysis.
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub oracle: Arc<ResponseModel>,
    pub features: FeatureSpace,
    pub cvae: Option<Arc<CvaeModel>>,
}

pub struct ExperimentReport {
    pub records: Vec<EvalRecord>,
    pub aggregated: Vec<EvalRecord>,
}

impl ExperimentReport {
    /// Per-run rows followed by aggregated rows.
    pub fn all_records(&self) -> Vec<EvalRecord> {
        self.records.iter().chain(&self.aggregated).cloned().collect()
    }
}

/// Runs every seed (concurrently) and aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let outputs: Vec<RunOutput> = (0..spec.runs).into_par_iter().map(|r| run_single(spec, r)).collect::<Result<_>>()?;
    let records: Vec<EvalRecord> = outputs.into_iter().flat_map(|o| o.records).collect();
    let aggregated = aggregate_runs(&records);
    Ok(ExperimentReport { records, aggregated })
}

enum Learner {
    Cvae(Box<CvaeTrainer>),
    Pointwise(PointwiseVariant, Box<PointwiseTrainer>),
    Sequence(Box<SequenceTrainer>),
}

/// Prepared data for one run: oracle, features and the unfiltered training
/// set.
#[derive(Clone)]
pub struct RunSetup {
    pub oracle: Arc<ResponseModel>,
    pub features: FeatureSpace,
    pub training: Arc<SlateDataset>,
}

pub fn prepare_run(spec: &ExperimentSpec, seed: u64) -> Result<RunSetup> {
    let (base, oracle_data) = match &spec.dataset {
        Some(ds) => (ds.clone(), ds.clone()),
        None => {
            let mut cfg = SimConfig::new(spec.n, spec.k, seed);
            cfg.users = spec.users;
            let env = SimEnvironment::new(cfg)?;
            let base = Arc::new(env.sample_dataset(spec.train_size, &mut stream(seed, "training-data"))?);
            let oracle_data = match spec.oracle_size {
                0 => base.clone(),
                size => Arc::new(env.sample_dataset(size, &mut stream(seed, "oracle-data"))?),
            };
            (base, oracle_data)
        }
    };
    let response_cfg = ResponseConfig { seed: child_seed(seed, 1), ..spec.response.clone() };
    let oracle = train_response_model(&oracle_data, &response_cfg)?.model;
    drop(oracle_data);
    let users = oracle.user_table().map(Arc::new);
    let docs = Arc::new(oracle.document_embeddings()?);
    if spec.corpus_factor > 1 {
        let mut rng = stream(seed, "synthetic-corpus");
        let synth = synthesize_corpus(&docs, oracle.raw_document_embeddings(), spec.corpus_factor, spec.noise_std, &mut rng)?;
        let oracle = oracle.with_extra_documents(&synth.raw_extra)?;
        let count = spec.dataset.as_ref().map_or(spec.train_size, |d| d.len());
        let training = label_with_oracle(&oracle, count, oracle.num_users(), seed, &mut rng)?;
        let features = FeatureSpace::new(Arc::new(synth.embeddings), users);
        return Ok(RunSetup { oracle: Arc::new(oracle), features, training: Arc::new(training) });
    }
    Ok(RunSetup { oracle: Arc::new(oracle), features: FeatureSpace::new(docs, users), training: base })
}

/// The policies' training set: the generalization threshold applied to the
/// run's data.
pub fn policy_data(spec: &ExperimentSpec, setup: &RunSetup) -> Result<Arc<SlateDataset>> {
    let training = match spec.h {
        Some(h) if spec.scenario == Scenario::Generalization => Arc::new(generalization_filter(&setup.training, h)?),
        _ => setup.training.clone(),
    };
    if training.is_empty() {
        return Err(invalid("no training slates left after filtering"));
    }
    Ok(training)
}

/// Builds one learner per trained model the requested policies need.
fn learners(spec: &ExperimentSpec, setup: &RunSetup, seed: u64) -> Result<Vec<Learner>> {
    let wants = |kinds: &[PolicyKind]| spec.policies.iter().any(|p| kinds.contains(p));
    let cfg = |salt: u64| PolicyTraining {
        steps: spec.steps,
        seed: child_seed(seed, salt),
        cvae: spec.cvae.clone(),
        pointwise: spec.pointwise.clone(),
        sequence: spec.sequence.clone(),
    };
    let (features, training) = (&setup.features, &setup.training);
    let mut out = Vec::new();
    if wants(&[PolicyKind::ListCvae]) {
        out.push(Learner::Cvae(Box::new(cvae_trainer(features, training, &cfg(2))?)));
    }
    let pointwise = [
        (&[PolicyKind::GreedyMlp][..], 3),
        (&[PolicyKind::PairwiseMlp][..], 4),
        (&[PolicyKind::PositionMlp, PolicyKind::ArPositionMlp][..], 5),
    ];
    for (kinds, salt) in pointwise {
        if wants(kinds) {
            let trainer = pointwise_trainer(kinds[0], features, training.clone(), &cfg(salt))?;
            out.push(Learner::Pointwise(trainer.model.variant(), Box::new(trainer)));
        }
    }
    if wants(&[PolicyKind::GreedyLstm, PolicyKind::ArLstm]) {
        out.push(Learner::Sequence(Box::new(sequence_trainer(features, training.clone(), &cfg(6))?)));
    }
    Ok(out)
}

fn snapshot(spec: &ExperimentSpec, setup: &RunSetup, learners: &[Learner]) -> Result<Vec<Box<dyn SlatePolicy>>> {
    let mut out: Vec<Box<dyn SlatePolicy>> = Vec::new();
    for &kind in &spec.policies {
        let policy: Box<dyn SlatePolicy> = match kind {
            PolicyKind::Random => Box::new(RandomPolicy::from_dataset(&setup.training)?),
            PolicyKind::ListCvae => {
                let model = learners.iter().find_map(|l| match l {
                    Learner::Cvae(t) => Some(Arc::new(t.model.clone())),
                    _ => None,
                });
                Box::new(CvaePolicy::new(model.expect("learner built"), setup.features.clone()))
            }
            PolicyKind::GreedyLstm | PolicyKind::ArLstm => {
                let model = learners.iter().find_map(|l| match l {
                    Learner::Sequence(t) => Some(Arc::new(t.model.clone())),
                    _ => None,
                });
                Box::new(SequencePolicy::new(kind, model.expect("learner built"))?)
            }
            pointwise => {
                let variant = pointwise_variant(pointwise).expect("remaining kinds are pointwise");
                let model = learners.iter().find_map(|l| match l {
                    Learner::Pointwise(v, t) if *v == variant => Some(Arc::new(t.model.clone())),
                    _ => None,
                });
                Box::new(PointwisePolicy::new(pointwise, model.expect("learner built"))?)
            }
        };
        out.push(policy);
    }
    Ok(out)
}

/// `-3..=3` in steps of `0.25` on both axes.
pub fn latent_grid() -> Vec<[f64; 2]> {
    let ticks: Vec<f64> = (-12..=12).map(|i| f64::from(i) * 0.25).collect();
    ticks.iter().flat_map(|&x| ticks.iter().map(move |&y| [x, y])).collect()
}

/// Oracle expected clicks of the decoded slate at every grid point.
pub fn latent_sweep(model: &CvaeModel, grid: &[[f64; 2]], condition: &[f64], oracle: &dyn ClickOracle) -> Result<Vec<f64>> {
    if model.config().latent_dim != 2 {
        return Err(invalid(format!("latent sweep needs a 2-d latent space, model has {}", model.config().latent_dim)));
    }
    let z = slatelab_autodiff::Tensor::new(vec![grid.len(), 2], grid.iter().flatten().copied().collect())?;
    let slates = model.decode_slates(&z, condition)?;
    oracle.expected_clicks_batch(&slates, &vec![None; slates.len()])
}

/// Means over the grid points with `‖z‖ ≤ 1` and with `2 ≤ ‖z‖ ≤ 3`.
pub fn center_and_ring(grid: &[[f64; 2]], values: &[f64]) -> (f64, f64) {
    let mean_where = |keep: &dyn Fn(f64) -> bool| {
        let sel: Vec<f64> = grid.iter().zip(values).filter(|(z, _)| keep((z[0] * z[0] + z[1] * z[1]).sqrt())).map(|(_, &v)| v).collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    };
    (mean_where(&|r| r <= 1.0), mean_where(&|r| (2.0..=3.0).contains(&r)))
}

/// Seed of run `run` under the spec's master seed.
pub fn run_seed(spec: &ExperimentSpec, run: usize) -> u64 {
    child_seed(spec.seed, run as u64)
}

pub fn run_single(spec: &ExperimentSpec, run: usize) -> Result<RunOutput> {
    let setup = prepare_run(spec, run_seed(spec, run))?;
    run_with_setup(spec, run, &setup)
}

/// Trains and evaluates every policy on a prepared oracle, so several specs
/// differing only in policy-side settings can share one.
pub fn run_with_setup(spec: &ExperimentSpec, run: usize, prepared: &RunSetup) -> Result<RunOutput> {
    spec.validate()?;
    let seed = run_seed(spec, run);
    let setup = RunSetup { training: policy_data(spec, prepared)?, ..prepared.clone() };
    let mut learners = learners(spec, &setup, seed)?;
    let checkpoints = spec.checkpoint_steps();
    let scenario = spec.scenario.name();
    let mut records = Vec::new();
    let mut done = 0;
    for &step in &checkpoints {
        while done < step {
            for l in learners.iter_mut() {
                match l {
                    Learner::Cvae(t) => t.step()?,
                    Learner::Pointwise(_, t) => t.step()?,
                    Learner::Sequence(t) => t.step()?,
                };
            }
            done += 1;
        }
        log::info!("{scenario} run {run}: evaluating step {step}");
        for policy in snapshot(spec, &setup, &learners)? {
            let mut rng = stream(child_seed(seed, 1000 + step as u64), policy.name());
            let ev = evaluate_policy(policy.as_ref(), setup.oracle.as_ref(), spec.eval_samples, &mut rng)?;
            records.push(EvalRecord {
                scenario: scenario.to_string(),
                policy: policy.name().to_string(),
                run: RunId::Index(run),
                step,
                mean: ev.mean,
                ci: Some(ev.interval()),
                samples: ev.samples,
            });
        }
        if spec.scenario == Scenario::LatentSweep {
            let model = learners.iter().find_map(|l| match l {
                Learner::Cvae(t) => Some(&t.model),
                _ => None,
            });
            if let Some(model) = model {
                let grid = latent_grid();
                let c = model.condition(&ResponseVector::all(model.k(), true), None)?;
                let values = latent_sweep(model, &grid, &c, setup.oracle.as_ref())?;
                let (center, ring) = center_and_ring(&grid, &values);
                for (name, mean) in [(LATENT_CENTER, center), (LATENT_RING, ring)] {
                    records.push(EvalRecord {
                        scenario: scenario.to_string(),
                        policy: name.to_string(),
                        run: RunId::Index(run),
                        step,
                        mean,
                        ci: None,
                        samples: grid.len(),
                    });
                }
            }
        }
    }
    let cvae = learners.into_iter().find_map(|l| match l {
        Learner::Cvae(t) => Some(Arc::new(t.model)),
        _ => None,
    });
    Ok(RunOutput { records, oracle: setup.oracle, features: setup.features, cvae })
}
