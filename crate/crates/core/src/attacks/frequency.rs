use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DecoderOracle, DiffusionSchedule, NoisePredictor};
use crate::numerics::{centered_radius, fft2_forward, fft2_inverse, Image};

use super::statistics::{shared_loss_noise, AttackMethod, AttackScore};

/// Radial spectral gain: coefficients further than `radius` from the
/// centered DC bin are multiplied by `scale`, the rest pass unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMask {
    pub height: usize,
    pub width: usize,
    pub radius: f64,
    pub scale: f64,
    gains: Vec<f64>,
}

impl FrequencyMask {
    pub fn gain(&self, row: usize, col: usize) -> f64 {
        self.gains[row * self.width + col]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
}

pub fn build_freq_mask(height: usize, width: usize, radius: f64, scale: f64) -> Result<FrequencyMask> {
    if !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::UnsupportedShape { height, width });
    }
    if !(radius >= 0.0) || !(0.0..=1.0).contains(&scale) {
        return Err(Error::Config(format!(
            "frequency mask needs radius >= 0 and scale in [0, 1], got radius {radius}, scale {scale}"
        )));
    }
    let gains = (0..height * width)
        .map(|i| {
            if centered_radius(height, width, i / width, i % width) > radius {
                scale
            } else {
                1.0
            }
        })
        .collect();
    Ok(FrequencyMask {
        height,
        width,
        radius,
        scale,
        gains,
    })
}

pub fn apply_freq_filter(image: &Image, mask: &FrequencyMask) -> Result<Image> {
    if image.height != mask.height || image.width != mask.width {
        return Err(Error::shape(format!(
            "image is {}x{}, mask is {}x{}",
            image.height, image.width, mask.height, mask.width
        )));
    }
    let mut spectrum = fft2_forward(image)?;
    spectrum
        .coeffs
        .iter_mut()
        .zip(&mask.gains)
        .for_each(|(c, g)| *c *= *g);
    fft2_inverse(&spectrum)
}

/// Pixel-space reconstruction score with high frequencies attenuated.
///
/// Both the reconstruction and its target are decoded, filtered and compared
/// in ℓ2. Only Loss and PIA define a target.
#[allow(clippy::too_many_arguments)]
pub fn freq_filtered_statistic(
    method: AttackMethod,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    decoder: &dyn DecoderOracle,
    z0: &[f64],
    t: usize,
    mask: &FrequencyMask,
    noise_seed: u64,
    sample_id: u64,
) -> Result<AttackScore> {
    let d = predictor.latent_dim();
    if z0.len() != d || decoder.latent_dim() != d {
        return Err(Error::shape("latent, predictor and decoder dimensions disagree"));
    }
    if decoder.data_dim() != mask.height * mask.width {
        return Err(Error::shape(format!(
            "decoder emits {} values, mask covers {}x{}",
            decoder.data_dim(),
            mask.height,
            mask.width
        )));
    }
    let ab = schedule.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let eps = match method {
        AttackMethod::Loss => shared_loss_noise(noise_seed, t, 1, d).remove(0),
        AttackMethod::Pia => predictor.predict(z0, 0)?,
        other => return Err(Error::UnsupportedMethod(format!("{} has no frequency-filtered form", other.display_name()))),
    };
    let z_t: Vec<f64> = z0.iter().zip(&eps).map(|(z, e)| a * z + b * e).collect();
    let eps_hat = predictor.predict(&z_t, t)?;
    let recover = |noise: &[f64]| -> Vec<f64> { z_t.iter().zip(noise).map(|(z, e)| (z - b * e) / a).collect() };
    let target = recover(&eps);
    let recon = recover(&eps_hat);
    let x_target = Image::new(mask.height, mask.width, decoder.forward(&target)?)?;
    let x_recon = Image::new(mask.height, mask.width, decoder.forward(&recon)?)?;
    let f_target = apply_freq_filter(&x_target, mask)?;
    let f_recon = apply_freq_filter(&x_recon, mask)?;
    let value = f_recon
        .pixels
        .iter()
        .zip(&f_target.pixels)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(AttackScore {
        sample_id,
        method,
        t,
        norm_order: 2.0,
        masked: false,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantPredictor, FnPredictor, LinearDecoder};
    use crate::numerics::Matrix;

    fn decoder(d: usize, m: usize) -> LinearDecoder {
        LinearDecoder::new(Matrix::from_fn(m, d, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.1 - 0.2))
    }

    #[test]
    fn mask_gains_follow_radius() {
        let mask = build_freq_mask(8, 8, 2.0, 0.25).unwrap();
        assert_eq!(mask.gain(0, 0), 1.0);
        assert_eq!(mask.gain(0, 2), 1.0);
        assert_eq!(mask.gain(0, 3), 0.25);
        assert_eq!(mask.gain(4, 4), 0.25);
        assert_eq!(mask.gain(7, 1), 1.0);
        assert!(matches!(build_freq_mask(6, 8, 1.0, 0.5), Err(Error::UnsupportedShape { .. })));
    }

    #[test]
    fn unit_scale_filter_is_identity() {
        let mask = build_freq_mask(4, 8, 1.0, 1.0).unwrap();
        let img = Image::new(4, 8, (0..32).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let out = apply_freq_filter(&img, &mask).unwrap();
        for (a, b) in out.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scale_keeps_only_low_band() {
        let mask = build_freq_mask(8, 8, 0.0, 0.0).unwrap();
        let img = Image::new(8, 8, (0..64).map(|i| (i % 5) as f64).collect()).unwrap();
        let out = apply_freq_filter(&img, &mask).unwrap();
        let mean = img.pixels.iter().sum::<f64>() / 64.0;
        assert!(out.pixels.iter().all(|p| (p - mean).abs() < 1e-12));
    }

    #[test]
    fn pia_with_zero_predictor_scores_zero() {
        let dec = decoder(3, 16);
        let mask = build_freq_mask(4, 4, 1.0, 0.5).unwrap();
        let zero = ConstantPredictor(vec![0.0; 3]);
        let s = freq_filtered_statistic(AttackMethod::Pia, &zero, &DiffusionSchedule::default(), &dec, &[0.3, -0.2, 0.9], 20, &mask, 0, 0).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn unit_scale_equals_unfiltered_distance() {
        let d = 3;
        let dec = decoder(d, 16);
        let mask = build_freq_mask(4, 4, 1.0, 1.0).unwrap();
        let sched = DiffusionSchedule::default();
        let pred = FnPredictor { dim: d, f: |z: &[f64], _| z.iter().map(|v| 0.5 * v).collect() };
        let z0 = [0.4, -0.1, 0.7];
        for method in [AttackMethod::Loss, AttackMethod::Pia] {
            let s = freq_filtered_statistic(method, &pred, &sched, &dec, &z0, 30, &mask, 5, 0).unwrap();
            let ab = sched.alpha_bar(30).unwrap();
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let eps = match method {
                AttackMethod::Loss => shared_loss_noise(5, 30, 1, d).remove(0),
                _ => pred.predict(&z0, 0).unwrap(),
            };
            let zt: Vec<f64> = (0..d).map(|k| a * z0[k] + b * eps[k]).collect();
            let eh = pred.predict(&zt, 30).unwrap();
            let tgt: Vec<f64> = (0..d).map(|k| (zt[k] - b * eps[k]) / a).collect();
            let rec: Vec<f64> = (0..d).map(|k| (zt[k] - b * eh[k]) / a).collect();
            let xa = dec.forward(&tgt).unwrap();
            let xb = dec.forward(&rec).unwrap();
            let direct = xa.iter().zip(&xb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!((s.value - direct).abs() < 1e-9, "{method}: {} vs {direct}", s.value);
        }
    }

    #[test]
    fn unsupported_methods() {
        let dec = decoder(2, 16);
        let mask = build_freq_mask(4, 4, 1.0, 0.5).unwrap();
        let zero = ConstantPredictor(vec![0.0; 2]);
        for m in [AttackMethod::Sima, AttackMethod::Secmi] {
            let r = freq_filtered_statistic(m, &zero, &DiffusionSchedule::default(), &dec, &[0.0, 0.0], 10, &mask, 0, 0);
            assert!(matches!(r, Err(Error::UnsupportedMethod(_))));
        }
    }
}
