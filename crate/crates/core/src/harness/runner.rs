//! Stage-by-stage execution against a run directory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{load_predictor, load_vae, save_predictor, save_vae, LatentStandardizer, StandardizedDecoder};

use super::config::ExperimentConfig;
use super::pipeline::{
    attack_stage, distortion_stage, evaluate_scores, influence_stage, latent_codes, prepare_dataset, split_images,
    train_ldm_stage, train_vae_stage, LatentCode,
};
use super::report::render_report;
use super::store::{
    ResultStore, CONFIG_FILE, DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE, LATENTS_FILE, REPORT_JSON, SCORES_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PipelineStage {
    Generate,
    TrainVae,
    TrainLdm,
    Distortion,
    Influence,
    Attack,
    Evaluate,
    Report,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 8] = [
        PipelineStage::Generate,
        PipelineStage::TrainVae,
        PipelineStage::TrainLdm,
        PipelineStage::Distortion,
        PipelineStage::Influence,
        PipelineStage::Attack,
        PipelineStage::Evaluate,
        PipelineStage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Generate => "generate",
            PipelineStage::TrainVae => "train-vae",
            PipelineStage::TrainLdm => "train-ldm",
            PipelineStage::Distortion => "distortion",
            PipelineStage::Influence => "influence",
            PipelineStage::Attack => "attack",
            PipelineStage::Evaluate => "evaluate",
            PipelineStage::Report => "report",
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Serialize, Deserialize)]
struct LatentFile {
    config_hash: String,
    standardizer: LatentStandardizer,
    codes: Vec<LatentCode>,
}

fn write_latents(store: &ResultStore, standardizer: &LatentStandardizer, codes: &[LatentCode]) -> Result<()> {
    let file = LatentFile {
        config_hash: store.config_hash().to_string(),
        standardizer: standardizer.clone(),
        codes: codes.to_vec(),
    };
    store.write_text(LATENTS_FILE, &serde_json::to_string(&file)?)
}

fn read_latents(store: &ResultStore) -> Result<(LatentStandardizer, Vec<LatentCode>)> {
    store.require(&[LATENTS_FILE])?;
    let path = store.path(LATENTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: LatentFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    if file.config_hash != store.config_hash() {
        return Err(Error::Format {
            offset: 0,
            message: format!("{} was written under config {}", path.display(), file.config_hash),
        });
    }
    Ok((file.standardizer, file.codes))
}

fn vae_dir(store: &ResultStore) -> Result<std::path::PathBuf> {
    let dir = store.checkpoint_dir();
    store.require(&[&format!("{}/vae.json", super::store::CHECKPOINT_DIR)])?;
    Ok(dir)
}

fn ldm_dir(store: &ResultStore) -> Result<std::path::PathBuf> {
    let dir = store.checkpoint_dir();
    store.require(&[&format!("{}/ldm.json", super::store::CHECKPOINT_DIR)])?;
    Ok(dir)
}

/// Runs one stage, reading its inputs from and writing its outputs to `store`.
pub fn run_stage(store: &ResultStore, cfg: &ExperimentConfig, stage: PipelineStage) -> Result<()> {
    store.log(&format!("stage {stage} started"))?;
    match stage {
        PipelineStage::Generate => {
            let split = prepare_dataset(cfg)?;
            for w in &split.warnings {
                store.log(&format!("warning: {w}"))?;
            }
            store.write_dataset(&split)?;
        }
        PipelineStage::TrainVae => {
            let split = store.read_dataset()?;
            let vae = train_vae_stage(cfg, &split)?;
            if let Some(last) = vae.loss_trace.last() {
                store.log(&format!("vae final loss {last:.6}"))?;
            }
            save_vae(
                &store.checkpoint_dir(),
                &vae.encoder,
                &vae.decoder,
                cfg.stage_seed("vae"),
                store.config_hash(),
            )?;
            let (encoder, _) = load_vae(&store.checkpoint_dir())?;
            let (codes, standardizer) = latent_codes(cfg, &encoder, &split)?;
            write_latents(store, &standardizer, &codes)?;
        }
        PipelineStage::TrainLdm => {
            let (_, codes) = read_latents(store)?;
            let schedule = cfg.schedule.build()?;
            let trained = train_ldm_stage(cfg, &codes, &schedule)?;
            if let Some(last) = trained.loss_trace.last() {
                store.log(&format!("ldm final loss {last:.6}"))?;
            }
            save_predictor(
                &store.checkpoint_dir(),
                &trained.predictor,
                &schedule,
                cfg.stage_seed("ldm"),
                store.config_hash(),
            )?;
        }
        PipelineStage::Distortion => {
            let (_, decoder) = load_vae(&vae_dir(store)?)?;
            let (standardizer, codes) = read_latents(store)?;
            let oracle = StandardizedDecoder {
                inner: &decoder,
                standardizer: &standardizer,
            };
            store.write_distortion(&distortion_stage(cfg, &oracle, &codes)?)?;
        }
        PipelineStage::Influence => {
            let (_, decoder) = load_vae(&vae_dir(store)?)?;
            let (standardizer, codes) = read_latents(store)?;
            let oracle = StandardizedDecoder {
                inner: &decoder,
                standardizer: &standardizer,
            };
            store.write_influence(&influence_stage(cfg, &oracle, &codes)?)?;
        }
        PipelineStage::Attack => {
            let split = store.read_dataset()?;
            let (_, decoder) = load_vae(&vae_dir(store)?)?;
            let (predictor, schedule) = load_predictor(&ldm_dir(store)?)?;
            let (standardizer, codes) = read_latents(store)?;
            let influence = store.read_influence()?;
            let oracle = StandardizedDecoder {
                inner: &decoder,
                standardizer: &standardizer,
            };
            let scores = attack_stage(
                cfg,
                &predictor,
                &schedule,
                &oracle,
                &codes,
                &influence,
                (split.height, split.width),
            )?;
            store.write_scores(&scores)?;
        }
        PipelineStage::Evaluate => {
            store.require(&[DATASET_FILE, DISTORTION_FILE, SCORES_FILE])?;
            let split = store.read_dataset()?;
            let images = split_images(&split)?;
            let summary = evaluate_scores(cfg, &store.read_scores()?, &store.read_distortion()?, Some(&images))?;
            store.write_summary(&summary)?;
        }
        PipelineStage::Report => {
            render_report(store)?;
        }
    }
    store.log(&format!("stage {stage} finished"))
}

/// Runs every stage in order into `cfg.output_dir`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ResultStore> {
    cfg.validate()?;
    let store = ResultStore::create(cfg)?;
    for stage in PipelineStage::ALL {
        run_stage(&store, cfg, stage)?;
    }
    Ok(store)
}

/// Artifacts a complete run directory must hold.
pub const REQUIRED_ARTIFACTS: [&str; 6] = [CONFIG_FILE, DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE, SCORES_FILE, REPORT_JSON];
