//! Dense tensors, a reverse-mode tape, the layers the reader and extractors
//! need, and the Adam optimizer.

mod adam;
mod backward;
mod gradcheck;
mod graph;
mod layers;
mod params;
mod rng;
#[allow(clippy::module_inception)]
mod tensor;

pub use adam::AdamState;
pub use backward::Gradients;
pub use gradcheck::{grad_check, grad_check_inputs, relative_error, GradCheckOptions, GradCheckReport};
pub use graph::{masked_softmax, Graph, Var};
pub use layers::{conv1d_narrow, dropout, lstm_step, max_over_time, Linear, LstmCell, Mode};
pub use params::{ParamEntry, ParamGrads, ParamId, ParamStore};
pub use rng::{RngState, RngStream, RNG_ALGORITHM};
pub use tensor::Tensor;
