//! A small reverse-mode differentiation kernel and the networks built on it.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod policy;

use thiserror::Error;

pub use graph::{Graph, Mat, Var};
pub use layers::{Dense, LstmCell, LstmState, Mogrifier, MogrifierLstm};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use policy::{ActorCritic, PolicyConfig, RecurrentState};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
}
