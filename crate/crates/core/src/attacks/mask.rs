use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Binary indicator over latent coordinates; at least one coordinate is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionMask {
    bits: Vec<bool>,
    kept: usize,
}

impl DimensionMask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        let kept = bits.iter().filter(|&&b| b).count();
        if kept == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self { bits, kept })
    }

    pub fn all(dim: usize) -> Result<Self> {
        Self::new(vec![true; dim])
    }

    /// Keeps `⌈keep_fraction·d⌉` coordinates chosen uniformly at random.
    pub fn random(dim: usize, keep_fraction: f64, stream: RngStream) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
        }
        let keep = ((keep_fraction * dim as f64) - 1e-9).ceil().max(1.0) as usize;
        let mut bits = vec![false; dim];
        for i in sample(&mut stream.rng(), dim, keep.min(dim)) {
            bits[i] = true;
        }
        Self::new(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn is_full(&self) -> bool {
        self.kept == self.bits.len()
    }
}

/// `ℓ_p` norm; `p = ∞` gives the max norm.
pub fn lp_norm(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    if p == 2.0 {
        return values.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    values.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_is_rejected() {
        assert!(matches!(DimensionMask::new(vec![false; 3]), Err(Error::EmptyMask)));
    }

    #[test]
    fn random_mask_keeps_ceiling_count() {
        let m = DimensionMask::random(8, 0.6, RngStream::new(1, 2)).unwrap();
        assert_eq!(m.kept(), 5);
        assert_eq!(m, DimensionMask::random(8, 0.6, RngStream::new(1, 2)).unwrap());
    }

    #[test]
    fn norms() {
        assert_eq!(lp_norm(&[3.0, 4.0], 2.0), 5.0);
        assert_eq!(lp_norm(&[3.0, -4.0], f64::INFINITY), 4.0);
        assert!((lp_norm(&[1.0, 1.0, 1.0, 1.0], 4.0) - 2f64.sqrt()).abs() < 1e-15);
    }
}
