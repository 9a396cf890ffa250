//! One-step consistency policy, its training losses, and the multi-step
//! denoiser used as a sampling-speed baseline.

mod consistency;
mod denoiser;
mod losses;

pub(crate) use consistency::join_rows;
pub use consistency::ConsistencyPolicy;
pub use denoiser::{check_steps, euler_chain, euler_indices, euler_sample, euler_sample_batch, loss_denoising, DenoiserPolicy};
pub use losses::{
    consistency_loss_with, loss_consistency, loss_reconstruction, policy_loss_total, policy_loss_total_with,
    q_guidance_loss, q_guidance_loss_with, reconstruction_loss_with, LossGrad, LossMode, NoiseDraw, PolicyLoss,
    PolicyNoise, Q_NORM_FLOOR,
};
