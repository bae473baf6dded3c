use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{normal_vec, RngStream};

use super::adam::{Adam, AdamConfig};
use super::mlp::{Activation, Gradients, Mlp};
use super::oracle::{check_len, MlpDecoder};

/// β-VAE training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeTrainConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub beta_kl: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden_dim: 128,
            beta_kl: 1e-3,
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

impl VaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_kl >= 0.0) {
            return Err(Error::Config(format!("beta_kl must be >= 0, got {}", self.beta_kl)));
        }
        if self.latent_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("VAE dimensions and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Gaussian encoder `x ↦ (μ(x), log σ²(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOracle {
    pub net: Mlp,
}

impl EncoderOracle {
    pub fn latent_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    pub fn data_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.net.check_input(x)?;
        let mut out = self.net.forward(x);
        let logvar = out.split_off(self.latent_dim());
        if out.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("encoder produced non-finite output".into()));
        }
        Ok((out, logvar))
    }

    /// Posterior mean, the deterministic code used at attack time.
    pub fn encode_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode(x)?.0)
    }
}

/// `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − log σ²)`.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct TrainedVae {
    pub encoder: EncoderOracle,
    pub decoder: MlpDecoder,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains a β-VAE with mean-ℓ1 reconstruction plus `β_KL`-weighted Gaussian KL.
///
/// Parameters are rounded to `f32` once training finishes.
pub fn train_vae(data: &[Vec<f64>], cfg: &VaeTrainConfig, seed: u64) -> Result<TrainedVae> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::Config("VAE training set is empty".into()));
    };
    let m = first.len();
    for x in data {
        check_len("training sample", x.len(), m)?;
    }
    let d = cfg.latent_dim;
    let h = cfg.hidden_dim;
    let root = RngStream::new(seed, 0);
    let mut init_rng = root.derive(1).rng();
    let mut encoder = Mlp::new_random(&[m, h, h, 2 * d], Activation::Tanh, Activation::Identity, &mut init_rng);
    let mut decoder = Mlp::new_random(&[d, h, h, m], Activation::Tanh, Activation::Identity, &mut init_rng);
    // Start with small posterior variance so early reconstructions are informative.
    let last = encoder.layers.len() - 1;
    for b in encoder.layers[last].bias[d..].iter_mut() {
        *b = -4.0;
    }
    let mut enc_opt = Adam::new(&encoder, cfg.adam);
    let mut dec_opt = Adam::new(&decoder, cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = root.derive(2).rng();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut enc_grads = Gradients::zeros_like(&encoder);
            let mut dec_grads = Gradients::zeros_like(&decoder);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &data[i];
                let enc_trace = encoder.forward_trace(x);
                let (mu, logvar) = enc_trace.output.split_at(d);
                let xi = normal_vec(&mut rng, d);
                let std: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
                let z: Vec<f64> = mu.iter().zip(&std).zip(&xi).map(|((m, s), e)| m + s * e).collect();
                let dec_trace = decoder.forward_trace(&z);
                let recon: f64 = dec_trace
                    .output
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / m as f64;
                let kl = gaussian_kl(mu, logvar);
                epoch_loss += recon + cfg.beta_kl * kl;

                let d_out: Vec<f64> = dec_trace
                    .output
                    .iter()
                    .zip(x)
                    .map(|(a, b)| scale * sign(a - b) / m as f64)
                    .collect();
                let dz = decoder.backward(&dec_trace, &d_out, &mut dec_grads);
                let mut d_enc = vec![0.0; 2 * d];
                for k in 0..d {
                    d_enc[k] = dz[k] + scale * cfg.beta_kl * mu[k];
                    d_enc[d + k] = dz[k] * xi[k] * 0.5 * std[k]
                        + scale * cfg.beta_kl * 0.5 * (logvar[k].exp() - 1.0);
                }
                encoder.backward(&enc_trace, &d_enc, &mut enc_grads);
            }
            if !enc_grads.is_finite() || !dec_grads.is_finite() {
                return Err(Error::TrainingDiverged {
                    stage: "vae".into(),
                    epoch,
                });
            }
            enc_opt.update(&mut encoder, &enc_grads, cfg.learning_rate);
            dec_opt.update(&mut decoder, &dec_grads, cfg.learning_rate);
        }
        let mean_loss = epoch_loss / data.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                stage: "vae".into(),
                epoch,
            });
        }
        loss_trace.push(mean_loss);
    }
    encoder.round_to_f32();
    decoder.round_to_f32();
    Ok(TrainedVae {
        encoder: EncoderOracle { net: encoder },
        decoder: MlpDecoder::new(decoder),
        loss_trace,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
