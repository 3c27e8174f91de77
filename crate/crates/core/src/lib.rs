pub mod config;
pub mod cvae;
pub mod embedding;
pub mod error;
pub mod format;
pub mod harness;
pub mod ingest;
pub mod oracle;
pub mod policy;
pub mod rankers;
pub mod response;
pub mod rng;
pub mod sim;
pub mod slate;

pub use cvae::{train_cvae, CvaeConfig, CvaeModel, CvaeTrainer};
pub use embedding::{EmbeddingMatrix, UserTable};
pub use error::{Error, Result};
pub use oracle::ClickOracle;
pub use policy::{FeatureSpace, PolicyKind, SlatePolicy};
pub use response::{train_response_model, ResponseConfig, ResponseModel};
pub use sim::{SimConfig, SimEnvironment, UserPermutation};
pub use slate::{ResponseVector, Slate, SlateDataset, SlateRecord};
