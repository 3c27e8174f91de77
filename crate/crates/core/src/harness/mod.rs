//! Experiment harness: policy evaluation, scenario runs and reports.

pub mod eval;
pub mod experiment;
pub mod registry;
pub mod report;
pub mod synth;

pub use eval::{evaluate_policy, Evaluation};
pub use experiment::{run_experiment, run_single, ExperimentReport, ExperimentSpec, RunOutput, Scenario};
pub use registry::{load_policy, train_policy, PolicyTraining};
pub use report::{aggregate_runs, parse_report, write_report, EvalRecord, RunId, REPORT_HEADER};
pub use synth::{generalization_filter, label_with_oracle, synthesize_corpus};
