//! Checkpoints: a JSON manifest plus one flat little-endian `f32` file per tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::diffusion::{DiffusionSchedule, ScorePredictor};
use super::mlp::{Activation, Dense, Mlp};
use super::oracle::MlpDecoder;
use super::vae::EncoderOracle;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerManifest {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights_file: String,
    pub bias_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub schedule: Option<DiffusionSchedule>,
    #[serde(default)]
    pub time_frequencies: Option<usize>,
    pub networks: BTreeMap<String, Vec<LayerManifest>>,
}

fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format {
            offset: bytes.len().min(expected * 4),
            message: format!(
                "{} holds {} bytes, manifest expects {} f32 values",
                path.display(),
                bytes.len(),
                expected
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn save_network(dir: &Path, prefix: &str, net: &Mlp) -> Result<Vec<LayerManifest>> {
    net.layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let weights_file = format!("{prefix}.{i}.weights.f32");
            let bias_file = format!("{prefix}.{i}.bias.f32");
            write_f32(&dir.join(&weights_file), &layer.weights)?;
            write_f32(&dir.join(&bias_file), &layer.bias)?;
            Ok(LayerManifest {
                in_dim: layer.in_dim,
                out_dim: layer.out_dim,
                activation: layer.activation,
                weights_file,
                bias_file,
            })
        })
        .collect()
}

fn load_network(dir: &Path, layers: &[LayerManifest]) -> Result<Mlp> {
    let dense = layers
        .iter()
        .map(|l| {
            let weights = read_f32(&dir.join(&l.weights_file), l.in_dim * l.out_dim)?;
            let bias = read_f32(&dir.join(&l.bias_file), l.out_dim)?;
            Dense::new(l.in_dim, l.out_dim, weights, bias, l.activation)
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_layers(dense)
}

fn write_manifest(path: &Path, manifest: &CheckpointManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_manifest(path: &Path, kind: &str) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format {
            offset: 0,
            message: format!("unsupported checkpoint version {}", manifest.format_version),
        });
    }
    if manifest.kind != kind {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected a {kind} checkpoint, found {}", manifest.kind),
        });
    }
    Ok(manifest)
}

fn network<'a>(manifest: &'a CheckpointManifest, name: &str) -> Result<&'a [LayerManifest]> {
    manifest
        .networks
        .get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Format {
            offset: 0,
            message: format!("checkpoint lacks network `{name}`"),
        })
}

/// Writes `vae.json` and its tensor files into `dir`.
pub fn save_vae(dir: &Path, encoder: &EncoderOracle, decoder: &MlpDecoder, seed: u64, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut networks = BTreeMap::new();
    networks.insert("encoder".to_string(), save_network(dir, "vae.encoder", &encoder.net)?);
    networks.insert("decoder".to_string(), save_network(dir, "vae.decoder", &decoder.net)?);
    write_manifest(
        &dir.join("vae.json"),
        &CheckpointManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: "vae".into(),
            seed,
            config_hash: config_hash.into(),
            schedule: None,
            time_frequencies: None,
            networks,
        },
    )
}

pub fn load_vae(dir: &Path) -> Result<(EncoderOracle, MlpDecoder)> {
    let manifest = read_manifest(&dir.join("vae.json"), "vae")?;
    let encoder = load_network(dir, network(&manifest, "encoder")?)?;
    let decoder = load_network(dir, network(&manifest, "decoder")?)?;
    if encoder.output_dim() != 2 * decoder.input_dim() || encoder.input_dim() != decoder.output_dim() {
        return Err(Error::Format {
            offset: 0,
            message: "encoder and decoder shapes are inconsistent".into(),
        });
    }
    Ok((EncoderOracle { net: encoder }, MlpDecoder::new(decoder)))
}

/// Writes `ldm.json` (network, schedule, time features) into `dir`.
pub fn save_predictor(
    dir: &Path,
    predictor: &ScorePredictor,
    schedule: &DiffusionSchedule,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut networks = BTreeMap::new();
    networks.insert("eps".to_string(), save_network(dir, "ldm.eps", &predictor.net)?);
    write_manifest(
        &dir.join("ldm.json"),
        &CheckpointManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: "latent_diffusion".into(),
            seed,
            config_hash: config_hash.into(),
            schedule: Some(schedule.clone()),
            time_frequencies: Some(predictor.time_frequencies),
            networks,
        },
    )
}

pub fn load_predictor(dir: &Path) -> Result<(ScorePredictor, DiffusionSchedule)> {
    let manifest = read_manifest(&dir.join("ldm.json"), "latent_diffusion")?;
    let missing = |what: &str| Error::Format {
        offset: 0,
        message: format!("latent diffusion checkpoint lacks {what}"),
    };
    let mut schedule = manifest.schedule.clone().ok_or_else(|| missing("a schedule"))?;
    schedule.rebuild()?;
    let time_frequencies = manifest.time_frequencies.ok_or_else(|| missing("time_frequencies"))?;
    let net = load_network(dir, network(&manifest, "eps")?)?;
    if net.input_dim() != net.output_dim() + 2 * time_frequencies {
        return Err(Error::Format {
            offset: 0,
            message: "noise predictor input width does not match its time features".into(),
        });
    }
    Ok((
        ScorePredictor {
            net,
            steps: schedule.steps,
            time_frequencies,
        },
        schedule,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn predictor_round_trip_is_exact_after_f32_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let schedule = DiffusionSchedule::default();
        let mut pred = ScorePredictor::new_random(4, 8, 2, schedule.steps, 3, &mut RngStream::new(2, 0).rng());
        pred.net.round_to_f32();
        save_predictor(dir.path(), &pred, &schedule, 2, "abc").unwrap();
        let (loaded, sched) = load_predictor(dir.path()).unwrap();
        assert_eq!(loaded, pred);
        assert_eq!(sched.alpha_bar(50).unwrap(), schedule.alpha_bar(50).unwrap());
    }

    #[test]
    fn truncated_tensor_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let schedule = DiffusionSchedule::default();
        let pred = ScorePredictor::new_random(2, 4, 1, schedule.steps, 1, &mut RngStream::new(2, 0).rng());
        save_predictor(dir.path(), &pred, &schedule, 2, "abc").unwrap();
        let f = dir.path().join("ldm.eps.0.weights.f32");
        let bytes = std::fs::read(&f).unwrap();
        std::fs::write(&f, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_predictor(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let schedule = DiffusionSchedule::default();
        let pred = ScorePredictor::new_random(2, 4, 1, schedule.steps, 1, &mut RngStream::new(2, 0).rng());
        save_predictor(dir.path(), &pred, &schedule, 2, "abc").unwrap();
        std::fs::copy(dir.path().join("ldm.json"), dir.path().join("vae.json")).unwrap();
        assert!(matches!(load_vae(dir.path()), Err(Error::Format { .. })));
    }
}
