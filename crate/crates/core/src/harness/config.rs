use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::AttackMethod;
use crate::error::{Error, Result};
use crate::geometry::{RandSvdConfig, DEFAULT_EPS_STAB};
use crate::models::{DiffusionSchedule, DiffusionTrainConfig, VaeTrainConfig};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Full description of one experiment; every stage seed derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub vae: VaeTrainConfig,
    /// Standardize each latent dimension on member statistics before
    /// diffusion training; geometry is then measured in those coordinates.
    pub standardize_latents: bool,
    pub ldm: DiffusionTrainConfig,
    pub schedule: ScheduleConfig,
    pub geometry: GeometryConfig,
    pub attacks: AttackConfig,
    pub t_grid: Vec<usize>,
    pub baseline_trials: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        generator: String,
        samples: usize,
        #[serde(default = "default_side")]
        side: usize,
    },
    Idx {
        path: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

fn default_side() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 2e-2,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub rand_svd: RandSvdConfig,
    pub hutchinson_probes: usize,
    pub eps_stab: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            rand_svd: RandSvdConfig::default(),
            hutchinson_probes: 8,
            eps_stab: DEFAULT_EPS_STAB,
        }
    }
}

/// How the influence mask is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    /// Each sample keeps its own most influential dimensions.
    PerSample,
    /// One mask from the influence averaged over every sample.
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyFilterConfig {
    pub radius: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub methods: Vec<AttackMethod>,
    pub keep_fraction: f64,
    pub mask_scope: MaskScope,
    pub random_drop_control: bool,
    pub loss_draws: usize,
    pub secmi_stride: usize,
    #[serde(default)]
    pub frequency_filter: Option<FrequencyFilterConfig>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            methods: AttackMethod::ALL.to_vec(),
            keep_fraction: 0.6,
            mask_scope: MaskScope::PerSample,
            random_drop_control: true,
            loss_draws: 1,
            secmi_stride: 10,
            frequency_filter: None,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            dataset: DatasetSpec::Synthetic {
                generator: "two-scale-blobs".into(),
                samples: 128,
                side: 16,
            },
            vae: VaeTrainConfig::default(),
            standardize_latents: true,
            ldm: DiffusionTrainConfig::default(),
            schedule: ScheduleConfig::default(),
            geometry: GeometryConfig::default(),
            attacks: AttackConfig::default(),
            t_grid: (0..=30).step_by(10).collect(),
            baseline_trials: 10,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex sha256 of the compact JSON form, with `output_dir` blanked so the
    /// same experiment hashes identically wherever it is written.
    pub fn hash(&self) -> String {
        let located = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let compact = serde_json::to_vec(&located).expect("config serializes");
        hex::encode(Sha256::digest(&compact))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "config format version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.vae.validate()?;
        self.geometry.rand_svd.validate()?;
        let schedule = self.schedule.build()?;
        if self.geometry.hutchinson_probes == 0 || !(self.geometry.eps_stab > 0.0) {
            return Err(Error::Config("Hutchinson needs probes > 0 and eps_stab > 0".into()));
        }
        let a = &self.attacks;
        if a.methods.is_empty() {
            return Err(Error::Config("no attack methods configured".into()));
        }
        if !(a.keep_fraction > 0.0 && a.keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep fraction must be in (0, 1], got {}", a.keep_fraction)));
        }
        if a.loss_draws == 0 || a.secmi_stride == 0 {
            return Err(Error::Config("loss draws and SecMI stride must be positive".into()));
        }
        if self.t_grid.is_empty() {
            return Err(Error::Config("probe-time grid is empty".into()));
        }
        for &t in &self.t_grid {
            schedule.check_t(t)?;
            if a.methods.contains(&AttackMethod::Secmi) {
                if t % a.secmi_stride != 0 {
                    return Err(Error::Config(format!("SecMI stride {} does not divide t = {t}", a.secmi_stride)));
                }
                schedule.check_t(t + a.secmi_stride)?;
            }
        }
        if self.baseline_trials == 0 {
            return Err(Error::Config("baseline needs at least one trial".into()));
        }
        if let DatasetSpec::Synthetic { samples, side, .. } = &self.dataset {
            if *samples < 2 || !side.is_power_of_two() {
                return Err(Error::Config("synthetic data needs >= 2 samples and a power-of-two side".into()));
            }
        }
        Ok(())
    }

    /// Seed for a named stage, independent across stages.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let digest = Sha256::digest(format!("{}:{stage}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::default().to_json()).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn bad_grid_is_rejected() {
        let cfg = ExperimentConfig { t_grid: vec![15], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig { t_grid: vec![100], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.stage_seed("vae"), cfg.stage_seed("ldm"));
    }
}
