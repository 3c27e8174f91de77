//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Graph`] records primitives eagerly as they execute; [`Graph::backward`]
//! replays the record in reverse to produce [`Gradients`], which are folded
//! into a [`ParamStore`] and consumed by [`Adam`].

pub mod checkpoint;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod param;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use gaussian::{gaussian_kl, gaussian_kl_value, reparameterize};
pub use graph::{sigmoid, Graph, Var};
pub use nn::{Activation, Dense, Mlp};
pub use optim::Adam;
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::{matmul, matmul_nt, Tensor};
