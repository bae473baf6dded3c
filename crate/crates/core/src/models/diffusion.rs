use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{normal_vec, RngStream};

use super::adam::{Adam, AdamConfig};
use super::mlp::{Activation, Gradients, Mlp};
use super::oracle::check_len;

/// Linear β ramp over `steps` timesteps with cumulative products `ᾱ_t`.
///
/// Timesteps run `0..=steps`; `ᾱ_0 = 1` so `t = 0` is the identity corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(skip)]
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        let mut s = Self {
            steps,
            beta_start,
            beta_end,
            alpha_bars: Vec::new(),
        };
        s.rebuild()?;
        Ok(s)
    }

    /// Recomputes the cached `ᾱ` table; needed after deserialization.
    pub fn rebuild(&mut self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config("schedule needs at least 2 steps".into()));
        }
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start < beta_end < 1, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        let mut alpha_bars = Vec::with_capacity(self.steps + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for t in 1..=self.steps {
            prod *= 1.0 - self.beta(t);
            alpha_bars.push(prod);
        }
        self.alpha_bars = alpha_bars;
        Ok(())
    }

    /// `β_t` for `t` in `1..=steps`.
    pub fn beta(&self, t: usize) -> f64 {
        let frac = (t - 1) as f64 / (self.steps - 1) as f64;
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or(Error::Range { t, max: self.steps })
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::Range { t, max: self.steps });
        }
        Ok(())
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(100, 1e-4, 2e-2).expect("default schedule is valid")
    }
}

/// Forward corruption `z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε`.
pub fn q_sample(schedule: &DiffusionSchedule, z0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    let ab = schedule.alpha_bar(t)?;
    check_len("noise", eps.len(), z0.len())?;
    Ok(mix(ab, z0, eps))
}

pub(crate) fn mix(alpha_bar: f64, z0: &[f64], eps: &[f64]) -> Vec<f64> {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect()
}

/// Noise predictor `ε̂_θ(z_t, t)`.
pub trait NoisePredictor: Sync {
    fn latent_dim(&self) -> usize;
    fn predict(&self, z_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// Predictor defined by a closure; handy for analytic test models.
pub struct FnPredictor<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> NoisePredictor for FnPredictor<F>
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        check_len("latent", z_t.len(), self.dim)?;
        Ok((self.f)(z_t, t))
    }
}

/// Predictor returning the same vector for every input.
#[derive(Debug, Clone)]
pub struct ConstantPredictor(pub Vec<f64>);

impl NoisePredictor for ConstantPredictor {
    fn latent_dim(&self) -> usize {
        self.0.len()
    }

    fn predict(&self, z_t: &[f64], _t: usize) -> Result<Vec<f64>> {
        check_len("latent", z_t.len(), self.0.len())?;
        Ok(self.0.clone())
    }
}

/// MLP noise predictor on `[z_t, sinusoidal features of t/T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePredictor {
    pub net: Mlp,
    pub steps: usize,
    pub time_frequencies: usize,
}

impl ScorePredictor {
    pub fn new_random<R: Rng + ?Sized>(
        latent_dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        steps: usize,
        time_frequencies: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![latent_dim + 2 * time_frequencies];
        sizes.extend(std::iter::repeat_n(hidden_dim, hidden_layers.max(1)));
        sizes.push(latent_dim);
        Self {
            net: Mlp::new_random(&sizes, Activation::Silu, Activation::Identity, rng),
            steps,
            time_frequencies,
        }
    }

    fn input(&self, z_t: &[f64], t: usize) -> Vec<f64> {
        let phase = std::f64::consts::PI * t as f64 / self.steps as f64;
        let mut x = Vec::with_capacity(z_t.len() + 2 * self.time_frequencies);
        x.extend_from_slice(z_t);
        for j in 0..self.time_frequencies {
            let w = phase * (1u64 << j) as f64;
            x.push(w.sin());
            x.push(w.cos());
        }
        x
    }
}

impl NoisePredictor for ScorePredictor {
    fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn predict(&self, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        check_len("latent", z_t.len(), self.latent_dim())?;
        if t > self.steps {
            return Err(Error::Range { t, max: self.steps });
        }
        Ok(self.net.forward(&self.input(z_t, t)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionTrainConfig {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub time_frequencies: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            hidden_layers: 3,
            time_frequencies: 4,
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPredictor {
    pub predictor: ScorePredictor,
    /// Mean ε-prediction MSE per epoch.
    pub loss_trace: Vec<f64>,
}

/// Incremental ε-prediction trainer. Each example draws `t ~ U{1..T}` and
/// `ε ~ N(0, I)` and regresses `ε̂_θ(z_t, t)` onto `ε` under mean squared error.
pub struct DiffusionTrainer<'a> {
    pub predictor: ScorePredictor,
    schedule: &'a DiffusionSchedule,
    optimizer: Adam,
}

impl<'a> DiffusionTrainer<'a> {
    pub fn new(predictor: ScorePredictor, schedule: &'a DiffusionSchedule, adam: AdamConfig) -> Self {
        let optimizer = Adam::new(&predictor.net, adam);
        Self {
            predictor,
            schedule,
            optimizer,
        }
    }

    /// One optimizer step on the given batch; returns the batch's mean loss.
    pub fn step<R: Rng + ?Sized>(&mut self, batch: &[&[f64]], rng: &mut R, learning_rate: f64) -> Result<f64> {
        let d = self.predictor.latent_dim();
        let mut grads = Gradients::zeros_like(&self.predictor.net);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for z0 in batch {
            check_len("latent", z0.len(), d)?;
            let t = rng.random_range(1..=self.schedule.steps);
            let eps = normal_vec(rng, d);
            let z_t = mix(self.schedule.alpha_bar(t)?, z0, &eps);
            let trace = self.predictor.net.forward_trace(&self.predictor.input(&z_t, t));
            let mut loss = 0.0;
            let dy: Vec<f64> = trace
                .output
                .iter()
                .zip(&eps)
                .map(|(p, e)| {
                    loss += (p - e) * (p - e);
                    scale * 2.0 * (p - e) / d as f64
                })
                .collect();
            total += loss / d as f64;
            self.predictor.net.backward(&trace, &dy, &mut grads);
        }
        if !grads.is_finite() {
            return Err(Error::InvalidInput("non-finite gradient".into()));
        }
        self.optimizer.update(&mut self.predictor.net, &grads, learning_rate);
        Ok(total * scale)
    }
}

/// Trains a noise predictor on latent codes (encoder means of the member set).
pub fn train_latent_diffusion(
    latents: &[Vec<f64>],
    schedule: &DiffusionSchedule,
    cfg: &DiffusionTrainConfig,
    seed: u64,
) -> Result<TrainedPredictor> {
    let Some(first) = latents.first() else {
        return Err(Error::Config("diffusion training set is empty".into()));
    };
    if cfg.batch_size == 0 || cfg.hidden_dim == 0 {
        return Err(Error::Config("batch size and hidden width must be positive".into()));
    }
    let d = first.len();
    let root = RngStream::new(seed, 0);
    let predictor = ScorePredictor::new_random(
        d,
        cfg.hidden_dim,
        cfg.hidden_layers,
        schedule.steps,
        cfg.time_frequencies,
        &mut root.derive(1).rng(),
    );
    let mut trainer = DiffusionTrainer::new(predictor, schedule, cfg.adam);
    let mut rng = root.derive(2).rng();
    let mut order: Vec<usize> = (0..latents.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| latents[i].as_slice()).collect();
            let loss = trainer
                .step(&batch, &mut rng, cfg.learning_rate)
                .map_err(|_| Error::TrainingDiverged {
                    stage: "latent diffusion".into(),
                    epoch,
                })?;
            epoch_loss += loss * batch.len() as f64;
        }
        let mean = epoch_loss / latents.len() as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged {
                stage: "latent diffusion".into(),
                epoch,
            });
        }
        loss_trace.push(mean);
    }
    let mut predictor = trainer.predictor;
    predictor.net.round_to_f32();
    Ok(TrainedPredictor {
        predictor,
        loss_trace,
    })
}

/// Mean ε-prediction MSE at a fixed timestep, each sample using its own noise stream.
pub fn denoising_loss(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    latents: &[Vec<f64>],
    t: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, z0) in latents.iter().enumerate() {
        let mut rng = RngStream::new(seed, i as u64).rng();
        for _ in 0..draws {
            let eps = normal_vec(&mut rng, z0.len());
            let z_t = q_sample(schedule, z0, t, &eps)?;
            let pred = predictor.predict(&z_t, t)?;
            total += pred.iter().zip(&eps).map(|(p, e)| (p - e).powi(2)).sum::<f64>() / z0.len() as f64;
        }
    }
    Ok(total / (latents.len() * draws) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_invariants() {
        let s = DiffusionSchedule::default();
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert!((s.beta(1) - 1e-4).abs() < 1e-18);
        assert!((s.beta(100) - 2e-2).abs() < 1e-15);
        for t in 1..=100 {
            assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
        }
        assert!(matches!(s.alpha_bar(101), Err(Error::Range { t: 101, max: 100 })));
        assert!(DiffusionSchedule::linear(10, 0.5, 0.1).is_err());
    }

    #[test]
    fn q_sample_examples() {
        let s = DiffusionSchedule::default();
        assert_eq!(q_sample(&s, &[1.5, -2.0], 0, &[9.0, 9.0]).unwrap(), vec![1.5, -2.0]);
        let z = mix(0.25, &[2.0, 0.0], &[0.0, 2.0]);
        assert_eq!(z[0], 1.0);
        assert!((z[1] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(mix(0.0, &[2.0, 1.0], &[0.3, -0.4]), vec![0.3, -0.4]);
        assert!(matches!(q_sample(&s, &[0.0], 101, &[0.0]), Err(Error::Range { .. })));
    }

    #[test]
    fn q_sample_variance_matches_schedule() {
        let s = DiffusionSchedule::default();
        let t = 60;
        let ab = s.alpha_bar(t).unwrap();
        let mut rng = RngStream::new(8, 0).rng();
        let samples: Vec<f64> = (0..10_000)
            .map(|_| q_sample(&s, &[0.7], t, &normal_vec(&mut rng, 1)).unwrap()[0])
            .collect();
        let var = crate::numerics::std_dev(&samples).powi(2);
        assert!((var - (1.0 - ab)).abs() <= 0.05 * (1.0 - ab), "{var} vs {}", 1.0 - ab);
    }

    #[test]
    fn zero_predictor_loss_is_noise_energy() {
        let s = DiffusionSchedule::default();
        let zero = ConstantPredictor(vec![0.0; 3]);
        let latents = vec![vec![0.1, 0.2, 0.3]; 4];
        let loss = denoising_loss(&zero, &s, &latents, 30, 1, 5).unwrap();
        let mut expected = 0.0;
        for i in 0..4 {
            let eps = RngStream::new(5, i).normal_vec(3);
            expected += eps.iter().map(|e| e * e).sum::<f64>() / 3.0;
        }
        assert!((loss - expected / 4.0).abs() < 1e-14);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let s = DiffusionSchedule::default();
        let mut rng = RngStream::new(1, 0).rng();
        let pred = ScorePredictor::new_random(4, 16, 2, s.steps, 2, &mut rng);
        let before = pred.net.clone();
        let mut trainer = DiffusionTrainer::new(pred, &s, AdamConfig::default());
        let z = [0.1, 0.2, 0.3, 0.4];
        trainer.step(&[&z, &z], &mut rng, 0.0).unwrap();
        for (a, b) in before.layers.iter().zip(&trainer.predictor.net.layers) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.bias), bits(&b.bias));
        }
    }

    #[test]
    fn predictor_rejects_bad_inputs() {
        let s = DiffusionSchedule::default();
        let pred = ScorePredictor::new_random(3, 8, 1, s.steps, 2, &mut RngStream::new(0, 0).rng());
        assert!(matches!(pred.predict(&[0.0; 2], 5), Err(Error::Shape(_))));
        assert!(matches!(pred.predict(&[0.0; 3], 101), Err(Error::Range { .. })));
        assert_eq!(pred.predict(&[0.0; 3], 5).unwrap().len(), 3);
    }
}
