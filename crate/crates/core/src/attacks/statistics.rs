use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DiffusionSchedule, NoisePredictor};
use crate::numerics::RngStream;

use super::mask::{lp_norm, DimensionMask};

/// The four threshold attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Loss,
    Sima,
    Secmi,
    Pia,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 4] = [
        AttackMethod::Loss,
        AttackMethod::Sima,
        AttackMethod::Secmi,
        AttackMethod::Pia,
    ];

    /// Norm applied to the attack vector: ℓ2 for Loss and SecMI, ℓ4 for SimA and PIA.
    pub fn default_norm_order(self) -> f64 {
        match self {
            AttackMethod::Loss | AttackMethod::Secmi => 2.0,
            AttackMethod::Sima | AttackMethod::Pia => 4.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Loss => "loss",
            AttackMethod::Sima => "sima",
            AttackMethod::Secmi => "secmi",
            AttackMethod::Pia => "pia",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            AttackMethod::Loss => "Loss",
            AttackMethod::Sima => "SimA",
            AttackMethod::Secmi => "SecMI",
            AttackMethod::Pia => "PIA",
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loss" | "naive" => Ok(AttackMethod::Loss),
            "sima" => Ok(AttackMethod::Sima),
            "secmi" => Ok(AttackMethod::Secmi),
            "pia" => Ok(AttackMethod::Pia),
            _ => Err(Error::UnsupportedMethod(s.to_string())),
        }
    }
}

/// Per-dimension attack statistic `S(z)` before taking a norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    pub sample_id: u64,
    pub method: AttackMethod,
    pub t: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub sample_id: u64,
    pub method: AttackMethod,
    pub t: usize,
    pub norm_order: f64,
    pub masked: bool,
    pub value: f64,
}

fn check_dim(predictor: &dyn NoisePredictor, z0: &[f64]) -> Result<()> {
    if z0.len() != predictor.latent_dim() {
        return Err(Error::shape(format!(
            "latent has length {}, predictor expects {}",
            z0.len(),
            predictor.latent_dim()
        )));
    }
    Ok(())
}

fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Noise draws shared by every sample probed at timestep `t`.
pub fn shared_loss_noise(seed: u64, t: usize, draws: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed, t as u64).rng();
    (0..draws)
        .map(|_| crate::numerics::normal_vec(&mut rng, dim))
        .collect()
}

/// Loss: mean over draws of `ε − ε̂_θ(√ᾱ_t z0 + √(1−ᾱ_t) ε, t)`.
pub fn loss_vector(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    z0: &[f64],
    t: usize,
    draws: &[Vec<f64>],
    sample_id: u64,
) -> Result<AttackVector> {
    check_dim(predictor, z0)?;
    if draws.is_empty() {
        return Err(Error::Config("loss attack needs at least one noise draw".into()));
    }
    let ab = schedule.alpha_bar(t)?;
    let mut acc = vec![0.0; z0.len()];
    for eps in draws {
        if eps.len() != z0.len() {
            return Err(Error::shape("noise draw length differs from latent"));
        }
        let z_t = combine(ab.sqrt(), z0, (1.0 - ab).sqrt(), eps);
        let pred = predictor.predict(&z_t, t)?;
        acc.iter_mut()
            .zip(eps.iter().zip(&pred))
            .for_each(|(a, (e, p))| *a += e - p);
    }
    let n = draws.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(AttackVector {
        sample_id,
        method: AttackMethod::Loss,
        t,
        values: acc,
    })
}

/// SimA: `ε̂_θ(√ᾱ_t z0, t)`, i.e. the Loss input at `ε = 0`.
pub fn sima_vector(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    z0: &[f64],
    t: usize,
    sample_id: u64,
) -> Result<AttackVector> {
    check_dim(predictor, z0)?;
    let ab = schedule.alpha_bar(t)?;
    let z_t: Vec<f64> = z0.iter().map(|z| ab.sqrt() * z).collect();
    Ok(AttackVector {
        sample_id,
        method: AttackMethod::Sima,
        t,
        values: predictor.predict(&z_t, t)?,
    })
}

/// Deterministic DDIM move from `from` to `to`, using `ε̂_θ(x, from)`.
///
/// Works in either direction: `to > from` is the inversion step, `to < from`
/// the denoising step.
pub fn ddim_step(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    x: &[f64],
    from: usize,
    to: usize,
) -> Result<Vec<f64>> {
    let ab_from = schedule.alpha_bar(from)?;
    let ab_to = schedule.alpha_bar(to)?;
    let eps = predictor.predict(x, from)?;
    let x0 = combine(1.0 / ab_from.sqrt(), x, -(1.0 - ab_from).sqrt() / ab_from.sqrt(), &eps);
    Ok(combine(ab_to.sqrt(), &x0, (1.0 - ab_to).sqrt(), &eps))
}

/// SecMI t-error: invert `z0` to `t` in `stride` steps, take one more
/// inversion step to `t + stride`, denoise back to `t`, and return the
/// difference from the inverted point.
pub fn secmi_vector(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    z0: &[f64],
    t: usize,
    stride: usize,
    sample_id: u64,
) -> Result<AttackVector> {
    check_dim(predictor, z0)?;
    if stride == 0 || t % stride != 0 {
        return Err(Error::Config(format!("SecMI stride {stride} does not divide t = {t}")));
    }
    if t + stride > schedule.steps {
        return Err(Error::Range {
            t: t + stride,
            max: schedule.steps,
        });
    }
    let mut x = z0.to_vec();
    let mut s = 0;
    while s < t {
        x = ddim_step(predictor, schedule, &x, s, s + stride)?;
        s += stride;
    }
    let ahead = ddim_step(predictor, schedule, &x, t, t + stride)?;
    let back = ddim_step(predictor, schedule, &ahead, t + stride, t)?;
    Ok(AttackVector {
        sample_id,
        method: AttackMethod::Secmi,
        t,
        values: sub(&back, &x),
    })
}

/// PIA: `ε̂_θ(z0, 0) − ε̂_θ(√ᾱ_t z0 + √(1−ᾱ_t) ε̂_θ(z0, 0), t)`.
pub fn pia_vector(
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    z0: &[f64],
    t: usize,
    sample_id: u64,
) -> Result<AttackVector> {
    check_dim(predictor, z0)?;
    let ab = schedule.alpha_bar(t)?;
    let eps0 = predictor.predict(z0, 0)?;
    let z_t = combine(ab.sqrt(), z0, (1.0 - ab).sqrt(), &eps0);
    let eps_t = predictor.predict(&z_t, t)?;
    Ok(AttackVector {
        sample_id,
        method: AttackMethod::Pia,
        t,
        values: sub(&eps0, &eps_t),
    })
}

/// Parameters shared by every statistic evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    pub loss_draws: usize,
    pub noise_seed: u64,
    pub secmi_stride: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            loss_draws: 1,
            noise_seed: 0,
            secmi_stride: 10,
        }
    }
}

pub fn attack_vector(
    method: AttackMethod,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    z0: &[f64],
    t: usize,
    params: &AttackParams,
    sample_id: u64,
) -> Result<AttackVector> {
    match method {
        AttackMethod::Loss => {
            let draws = shared_loss_noise(params.noise_seed, t, params.loss_draws, z0.len());
            loss_vector(predictor, schedule, z0, t, &draws, sample_id)
        }
        AttackMethod::Sima => sima_vector(predictor, schedule, z0, t, sample_id),
        AttackMethod::Secmi => secmi_vector(predictor, schedule, z0, t, params.secmi_stride, sample_id),
        AttackMethod::Pia => pia_vector(predictor, schedule, z0, t, sample_id),
    }
}

/// `‖S ⊙ 𝟙_I‖_p`; without a mask this is the plain norm.
pub fn masked_score(vector: &AttackVector, mask: Option<&DimensionMask>, norm_order: f64) -> Result<AttackScore> {
    if !(norm_order >= 1.0) {
        return Err(Error::Config(format!("norm order must be >= 1, got {norm_order}")));
    }
    let value = match mask {
        None => lp_norm(&vector.values, norm_order),
        Some(mask) => {
            if mask.dim() != vector.values.len() {
                return Err(Error::shape(format!(
                    "mask covers {} dimensions, vector has {}",
                    mask.dim(),
                    vector.values.len()
                )));
            }
            if mask.kept() == 0 {
                return Err(Error::EmptyMask);
            }
            let kept: Vec<f64> = vector
                .values
                .iter()
                .zip(mask.bits())
                .map(|(&v, &b)| if b { v } else { 0.0 })
                .collect();
            lp_norm(&kept, norm_order)
        }
    };
    Ok(AttackScore {
        sample_id: vector.sample_id,
        method: vector.method,
        t: vector.t,
        norm_order,
        masked: mask.is_some_and(|m| !m.is_full()),
        value,
    })
}
