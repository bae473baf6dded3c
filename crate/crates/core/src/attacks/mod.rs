//! Membership statistics computed from a latent noise predictor.

mod frequency;
mod mask;
mod statistics;

pub use frequency::{apply_freq_filter, build_freq_mask, freq_filtered_statistic, FrequencyMask};
pub use mask::{lp_norm, DimensionMask};
pub use statistics::{
    attack_vector, ddim_step, loss_vector, masked_score, pia_vector, secmi_vector, shared_loss_noise, sima_vector,
    AttackMethod, AttackParams, AttackScore, AttackVector,
};
