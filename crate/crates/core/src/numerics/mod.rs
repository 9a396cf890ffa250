//! Dense numerics: MLPs with Mish activations, Adam, Polyak averaging and a seedable RNG.

mod activation;
mod linalg;
mod mlp;
mod optim;
pub mod par;
mod rng;

pub use activation::{mish, mish_grad, softplus};
pub use mlp::{Gradients, Mlp, Tape, DEFAULT_HIDDEN, LAYER_NORM_EPS};
pub use optim::{ema_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use par::ExecMode;
pub use rng::Rng;
