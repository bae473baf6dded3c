use serde::{Deserialize, Serialize};

use crate::attacks::DimensionMask;
use crate::error::{Error, Result};
use crate::models::DecoderOracle;
use crate::numerics::{normal_vec, RngStream};

pub const DEFAULT_EPS_STAB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HutchinsonConfig {
    pub probes: usize,
    pub eps_stab: f64,
    pub seed: u64,
}

impl Default for HutchinsonConfig {
    fn default() -> Self {
        Self {
            probes: 8,
            eps_stab: DEFAULT_EPS_STAB,
            seed: 0,
        }
    }
}

impl HutchinsonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probes == 0 {
            return Err(Error::Config("Hutchinson needs at least one probe".into()));
        }
        if !(self.eps_stab > 0.0) {
            return Err(Error::Config("eps_stab must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-dimension log-influence `½·log(G_ii + ε_stab)` for one latent code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceMap {
    pub sample_id: u64,
    pub values: Vec<f64>,
}

impl InfluenceMap {
    pub fn from_diagonal(sample_id: u64, diagonal: &[f64], eps_stab: f64) -> Self {
        Self {
            sample_id,
            values: diagonal.iter().map(|g| 0.5 * (g + eps_stab).ln()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Exact `G_ii = ‖J e_i‖²` from `d` JVP evaluations.
pub fn exact_diagonal(oracle: &(impl DecoderOracle + ?Sized), z: &[f64]) -> Result<Vec<f64>> {
    let d = oracle.latent_dim();
    if d > 256 {
        return Err(Error::InvalidInput(format!("exact influence limited to d <= 256, got {d}")));
    }
    if z.len() != d {
        return Err(Error::shape(format!("latent has length {}, decoder expects {d}", z.len())));
    }
    (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let col = oracle.jvp(z, &e)?;
            Ok(col.iter().map(|v| v * v).sum())
        })
        .collect()
}

pub fn influence_exact(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    eps_stab: f64,
    sample_id: u64,
) -> Result<InfluenceMap> {
    Ok(InfluenceMap::from_diagonal(sample_id, &exact_diagonal(oracle, z)?, eps_stab))
}

/// Monte Carlo estimate of `diag(JᵀJ) = E_v[(Jᵀv) ⊙ (Jᵀv)]`, `v ~ N(0, I_m)`.
///
/// Probes for sample `sample_id` come from stream `(cfg.seed, sample_id)`.
pub fn hutchinson_diagonal(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    cfg: &HutchinsonConfig,
    sample_id: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, sample_id).rng();
    let mut acc = vec![0.0; oracle.latent_dim()];
    for _ in 0..cfg.probes {
        let v = normal_vec(&mut rng, oracle.data_dim());
        let g = oracle.vjp(z, &v)?;
        acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi * gi);
    }
    let n = cfg.probes as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn influence_hutchinson(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    cfg: &HutchinsonConfig,
    sample_id: u64,
) -> Result<InfluenceMap> {
    let diag = hutchinson_diagonal(oracle, z, cfg, sample_id)?;
    Ok(InfluenceMap::from_diagonal(sample_id, &diag, cfg.eps_stab))
}

/// Element-wise mean of several maps, for a dataset-level mask.
pub fn mean_influence(maps: &[InfluenceMap]) -> Result<InfluenceMap> {
    let Some(first) = maps.first() else {
        return Err(Error::InvalidInput("no influence maps to aggregate".into()));
    };
    let d = first.dim();
    let mut values = vec![0.0; d];
    for m in maps {
        if m.dim() != d {
            return Err(Error::shape("influence maps have differing dimensions"));
        }
        values.iter_mut().zip(&m.values).for_each(|(a, v)| *a += v);
    }
    values.iter_mut().for_each(|a| *a /= maps.len() as f64);
    Ok(InfluenceMap { sample_id: u64::MAX, values })
}

/// Keeps the `⌈keep_fraction·d⌉` most influential dimensions; ties go to the lower index.
pub fn select_top_influence(infl: &InfluenceMap, keep_fraction: f64) -> Result<DimensionMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
    }
    let d = infl.dim();
    // Guard against 0.6·5 = 3.0000000000000004 rounding up to 4.
    let keep = ((keep_fraction * d as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| infl.values[b].total_cmp(&infl.values[a]).then(a.cmp(&b)));
    let mut bits = vec![false; d];
    for &i in order.iter().take(keep.min(d)) {
        bits[i] = true;
    }
    DimensionMask::new(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, LinearDecoder, Mlp, MlpDecoder};
    use crate::numerics::Matrix;

    fn map(values: &[f64]) -> InfluenceMap {
        InfluenceMap { sample_id: 0, values: values.to_vec() }
    }

    #[test]
    fn exact_influence_of_linear_decoder() {
        let dec = LinearDecoder::new(Matrix::from_diag(&[3.0, 2.0, 1.0]));
        let infl = influence_exact(&dec, &[0.0; 3], 1e-300, 0).unwrap();
        let expected = [3f64.ln(), 2f64.ln(), 0.0];
        for (a, b) in infl.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_jacobian_gives_log_eps() {
        let dec = LinearDecoder::constant(4, vec![1.0; 5]);
        let eps = 1e-6;
        let exact = influence_exact(&dec, &[0.0; 4], eps, 0).unwrap();
        let cfg = HutchinsonConfig { eps_stab: eps, ..Default::default() };
        let mc = influence_hutchinson(&dec, &[0.0; 4], &cfg, 0).unwrap();
        for v in exact.values.iter().chain(&mc.values) {
            assert_eq!(*v, 0.5 * eps.ln());
        }
    }

    #[test]
    fn hutchinson_converges_on_linear_decoder() {
        let dec = LinearDecoder::new(Matrix::from_diag(&[3.0, 2.0, 1.0]));
        let cfg = HutchinsonConfig { probes: 4096, seed: 9, ..Default::default() };
        let diag = hutchinson_diagonal(&dec, &[0.0; 3], &cfg, 0).unwrap();
        for (est, exact) in diag.iter().zip([9.0, 4.0, 1.0]) {
            assert!((est - exact).abs() <= 0.05 * exact, "{est} vs {exact}");
        }
    }

    #[test]
    fn mlp_exact_influence_matches_metric_diagonal() {
        let mut rng = RngStream::new(51, 0).rng();
        let dec = MlpDecoder::new(Mlp::new_random(&[6, 20, 30], Activation::Silu, Activation::Identity, &mut rng));
        let z = RngStream::new(51, 1).normal_vec(6);
        let diag = exact_diagonal(&dec, &z).unwrap();
        let g = crate::geometry::pullback_metric_dense(&dec, &z).unwrap();
        for (a, b) in diag.iter().zip(g.diagonal()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn top_influence_selection() {
        let m = select_top_influence(&map(&[5.0, 1.0, 3.0, 2.0]), 0.5).unwrap();
        assert_eq!(m.bits(), &[true, false, true, false]);
        let all = select_top_influence(&map(&[5.0, 1.0, 3.0]), 1.0).unwrap();
        assert_eq!(all.kept(), 3);
        let tie = select_top_influence(&map(&[2.0, 2.0, 1.0]), 2.0 / 3.0).unwrap();
        assert_eq!(tie.bits(), &[true, true, false]);
        let sixty = select_top_influence(&map(&[0.0; 5]), 0.6).unwrap();
        assert_eq!(sixty.kept(), 3);
        assert!(select_top_influence(&map(&[1.0]), 0.0).is_err());
        assert!(select_top_influence(&map(&[1.0]), 1.5).is_err());
    }

    #[test]
    fn mean_influence_averages() {
        let m = mean_influence(&[map(&[1.0, 3.0]), map(&[3.0, 5.0])]).unwrap();
        assert_eq!(m.values, vec![2.0, 4.0]);
        assert!(mean_influence(&[]).is_err());
    }
}
