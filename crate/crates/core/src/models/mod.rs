//! Toy β-VAE and latent noise predictor with hand-written derivatives.

mod adam;
mod checkpoint;
mod diffusion;
mod mlp;
mod oracle;
mod vae;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_predictor, load_vae, save_predictor, save_vae, CheckpointManifest, LayerManifest,
    CHECKPOINT_FORMAT_VERSION,
};
pub use diffusion::{
    denoising_loss, q_sample, train_latent_diffusion, ConstantPredictor, DiffusionSchedule,
    DiffusionTrainConfig, DiffusionTrainer, FnPredictor, NoisePredictor, ScorePredictor,
    TrainedPredictor,
};
pub use mlp::{Activation, Dense, Gradients, Mlp, Trace};
pub use oracle::{DecoderOracle, FiniteDifferenceJvp, LatentStandardizer, LinearDecoder, MlpDecoder, StandardizedDecoder};
pub use vae::{gaussian_kl, train_vae, EncoderOracle, TrainedVae, VaeTrainConfig};
