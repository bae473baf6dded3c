use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Real-valued image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn energy(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum()
    }
}

/// Complex 2-D DFT coefficients, DC at index (0, 0), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub height: usize,
    pub width: usize,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.coeffs[row * self.width + col]
    }

    /// Distance of bin (row, col) from DC after centering the spectrum.
    pub fn centered_radius(&self, row: usize, col: usize) -> f64 {
        centered_radius(self.height, self.width, row, col)
    }

    /// Sum of squared coefficient magnitudes (equals `H·W·Σx²` by Parseval).
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub fn centered_radius(height: usize, width: usize, row: usize, col: usize) -> f64 {
    let signed = |i: usize, n: usize| {
        if i < n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let fy = signed(row, height);
    let fx = signed(col, width);
    (fy * fy + fx * fx).sqrt()
}

fn check_shape(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::UnsupportedShape { height, width });
    }
    Ok(())
}

fn transform_2d(height: usize, width: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

pub fn fft2_forward(image: &Image) -> Result<Spectrum2D> {
    check_shape(image.height, image.width)?;
    let mut coeffs: Vec<Complex64> = image.pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    transform_2d(image.height, image.width, &mut coeffs, false);
    Ok(Spectrum2D {
        height: image.height,
        width: image.width,
        coeffs,
    })
}

/// Inverse transform returning complex values (normalized by `1/(H·W)`).
pub fn fft2_inverse_complex(spectrum: &Spectrum2D) -> Result<Vec<Complex64>> {
    check_shape(spectrum.height, spectrum.width)?;
    if spectrum.coeffs.len() != spectrum.height * spectrum.width {
        return Err(Error::shape("spectrum length does not match its dimensions"));
    }
    let mut data = spectrum.coeffs.clone();
    transform_2d(spectrum.height, spectrum.width, &mut data, true);
    let scale = 1.0 / (spectrum.height * spectrum.width) as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    Ok(data)
}

/// Inverse transform keeping the real part.
pub fn fft2_inverse(spectrum: &Spectrum2D) -> Result<Image> {
    let data = fft2_inverse_complex(spectrum)?;
    Image::new(
        spectrum.height,
        spectrum.width,
        data.iter().map(|c| c.re).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use std::f64::consts::PI;

    fn direct_dft(image: &Image) -> Vec<Complex64> {
        let (h, w) = (image.height, image.width);
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let phase = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                        acc += image.pixels[y * w + x] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    fn random_image(h: usize, w: usize, stream: u64) -> Image {
        Image::new(h, w, RngStream::new(5, stream).normal_vec(h * w)).unwrap()
    }

    #[test]
    fn constant_image_has_only_dc() {
        let img = Image::new(4, 8, vec![1.5; 32]).unwrap();
        let s = fft2_forward(&img).unwrap();
        assert!((s.get(0, 0).re - 1.5 * 32.0).abs() < 1e-12);
        for (i, c) in s.coeffs.iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-12, "bin {i} = {c}");
        }
    }

    #[test]
    fn impulse_has_flat_magnitude() {
        let mut px = vec![0.0; 64];
        px[9] = 1.0;
        let s = fft2_forward(&Image::new(8, 8, px).unwrap()).unwrap();
        for c in &s.coeffs {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft_and_round_trips() {
        let img = random_image(16, 16, 1);
        let s = fft2_forward(&img).unwrap();
        let direct = direct_dft(&img);
        for (a, b) in s.coeffs.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-9);
        }
        let back = fft2_inverse(&s).unwrap();
        let err = back
            .pixels
            .iter()
            .zip(&img.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn parseval_holds() {
        let img = random_image(8, 16, 2);
        let s = fft2_forward(&img).unwrap();
        let lhs = img.energy();
        let rhs = s.energy() / 128.0;
        assert!((lhs - rhs).abs() <= 1e-8 * lhs);
    }

    #[test]
    fn linearity() {
        let x = random_image(8, 8, 3);
        let y = random_image(8, 8, 4);
        let (a, b) = (0.7, -2.3);
        let combo = Image::new(8, 8, x.pixels.iter().zip(&y.pixels).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let fx = fft2_forward(&x).unwrap();
        let fy = fft2_forward(&y).unwrap();
        let fc = fft2_forward(&combo).unwrap();
        for i in 0..64 {
            assert!((fc.coeffs[i] - (fx.coeffs[i] * a + fy.coeffs[i] * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let img = Image::new(3, 4, vec![0.0; 12]).unwrap();
        assert!(matches!(fft2_forward(&img), Err(Error::UnsupportedShape { height: 3, width: 4 })));
    }

    #[test]
    fn centered_radius_wraps_negative_frequencies() {
        assert_eq!(centered_radius(8, 8, 0, 0), 0.0);
        assert_eq!(centered_radius(8, 8, 7, 0), 1.0);
        assert_eq!(centered_radius(8, 8, 4, 0), 4.0);
        assert!((centered_radius(8, 8, 1, 7) - 2f64.sqrt()).abs() < 1e-15);
    }
}
