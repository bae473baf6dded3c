use crate::error::{Error, Result};
use crate::numerics::{fft2_forward, pearson_r, Image};

use super::report::CorrelationEntry;

/// Low-frequency radius scaled from 5 bins on a 32-pixel-wide image.
pub fn default_low_frequency_radius(width: usize) -> f64 {
    5.0 * width as f64 / 32.0
}

/// Spectral energy inside and outside `radius` of the centered DC bin.
pub fn spectral_energy(image: &Image, radius: f64) -> Result<(f64, f64)> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput(format!("radius must be non-negative, got {radius}")));
    }
    let spectrum = fft2_forward(image)?;
    let (mut low, mut high) = (0.0, 0.0);
    for row in 0..spectrum.height {
        for col in 0..spectrum.width {
            let e = spectrum.get(row, col).norm_sqr();
            if spectrum.centered_radius(row, col) <= radius {
                low += e;
            } else {
                high += e;
            }
        }
    }
    Ok((low, high))
}

/// Pearson correlation of distortion against low- and high-frequency energy.
pub fn distortion_spectrum_correlation(distortions: &[f64], images: &[Image], radius: f64) -> Result<CorrelationEntry> {
    if distortions.len() != images.len() {
        return Err(Error::shape(format!(
            "{} distortions for {} images",
            distortions.len(),
            images.len()
        )));
    }
    let mut low = Vec::with_capacity(images.len());
    let mut high = Vec::with_capacity(images.len());
    for img in images {
        let (l, h) = spectral_energy(img, radius)?;
        low.push(l);
        high.push(h);
    }
    Ok(CorrelationEntry {
        radius,
        samples: images.len(),
        low_frequency_r: pearson_r(distortions, &low)?,
        high_frequency_r: pearson_r(distortions, &high)?,
    })
}
