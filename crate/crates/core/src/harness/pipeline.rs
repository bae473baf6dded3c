use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_vector, build_freq_mask, freq_filtered_statistic, masked_score, AttackMethod, AttackParams, DimensionMask,
};
use crate::error::{Error, Result};
use crate::eval::{
    default_low_frequency_radius, distortion_spectrum_correlation, probe_time_sweep, quartile_partition,
    random_baseline, stratified_attack, BaselineResult, CorrelationEntry, EvalReport, LabeledScore, LabeledScores,
    Orientation, QuartileReport,
};
use crate::geometry::{influence_hutchinson, mean_influence, randomized_topk_spectrum, select_top_influence, HutchinsonConfig, InfluenceMap};
use crate::models::{
    train_latent_diffusion, train_vae, DecoderOracle, DiffusionSchedule, EncoderOracle, LatentStandardizer, NoisePredictor,
    StandardizedDecoder, TrainedPredictor, TrainedVae,
};
use crate::numerics::{Image, RngStream};

use super::config::{DatasetSpec, ExperimentConfig, MaskScope};
use super::data::{generate_synthetic, ingest_idx, pad_to_power_of_two, DatasetSplit, Sample};

/// Encoder mean of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub sample_id: u64,
    pub member: bool,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionRow {
    pub sample_id: u64,
    pub member: bool,
    pub log_volume: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRow {
    pub member: bool,
    pub map: InfluenceMap,
}

/// Which dimensions (or frequencies) fed a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    Unfiltered,
    Influence,
    RandomDrop,
    Frequency,
}

impl ScoreVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::Unfiltered => "unfiltered",
            ScoreVariant::Influence => "influence",
            ScoreVariant::RandomDrop => "random_drop",
            ScoreVariant::Frequency => "frequency",
        }
    }

    pub fn masked(self) -> bool {
        self != ScoreVariant::Unfiltered
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unfiltered" => Ok(ScoreVariant::Unfiltered),
            "influence" => Ok(ScoreVariant::Influence),
            "random_drop" => Ok(ScoreVariant::RandomDrop),
            "frequency" => Ok(ScoreVariant::Frequency),
            _ => Err(Error::Format {
                offset: 0,
                message: format!("unknown score variant `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: u64,
    pub member: bool,
    pub method: AttackMethod,
    pub t: usize,
    pub norm_order: f64,
    pub variant: ScoreVariant,
    pub keep_fraction: f64,
    pub score: f64,
}

fn stage<T>(cfg: &ExperimentConfig, name: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name.to_string(),
            config_hash: cfg.hash(),
            source: Box::new(e),
        },
    })
}

fn member_pixels(split: &DatasetSplit) -> Vec<Vec<f64>> {
    split.members.iter().map(|s| s.pixels.clone()).collect()
}

pub fn train_vae_stage(cfg: &ExperimentConfig, split: &DatasetSplit) -> Result<TrainedVae> {
    stage(cfg, "train-vae", train_vae(&member_pixels(split), &cfg.vae, cfg.stage_seed("vae")))
}

/// Posterior means of every sample, members first.
pub fn encode_split(encoder: &EncoderOracle, split: &DatasetSplit) -> Result<Vec<LatentCode>> {
    split
        .labeled()
        .map(|(s, member)| {
            Ok(LatentCode {
                sample_id: s.id,
                member,
                z: encoder.encode_mean(&s.pixels)?,
            })
        })
        .collect()
}

/// Codes the diffusion model sees: posterior means, standardized on member
/// statistics when the config asks for it.
pub fn latent_codes(
    cfg: &ExperimentConfig,
    encoder: &EncoderOracle,
    split: &DatasetSplit,
) -> Result<(Vec<LatentCode>, LatentStandardizer)> {
    let result = (|| {
        let mut codes = encode_split(encoder, split)?;
        let standardizer = if cfg.standardize_latents {
            let members: Vec<Vec<f64>> = codes.iter().filter(|c| c.member).map(|c| c.z.clone()).collect();
            LatentStandardizer::fit(&members)?
        } else {
            LatentStandardizer::identity(encoder.latent_dim())
        };
        for c in &mut codes {
            c.z = standardizer.standardize(&c.z);
        }
        Ok((codes, standardizer))
    })();
    stage(cfg, "encode", result)
}

pub fn train_ldm_stage(
    cfg: &ExperimentConfig,
    latents: &[LatentCode],
    schedule: &DiffusionSchedule,
) -> Result<TrainedPredictor> {
    let members: Vec<Vec<f64>> = latents.iter().filter(|l| l.member).map(|l| l.z.clone()).collect();
    stage(cfg, "train-ldm", train_latent_diffusion(&members, schedule, &cfg.ldm, cfg.stage_seed("ldm")))
}

pub fn distortion_stage(
    cfg: &ExperimentConfig,
    decoder: &dyn DecoderOracle,
    latents: &[LatentCode],
) -> Result<Vec<DistortionRow>> {
    let seed = cfg.stage_seed("distortion");
    let rows = latents
        .par_iter()
        .map(|l| {
            let est = randomized_topk_spectrum(decoder, &l.z, &cfg.geometry.rand_svd, RngStream::new(seed, l.sample_id))?;
            Ok(DistortionRow {
                sample_id: l.sample_id,
                member: l.member,
                log_volume: est.log_volume,
                rank: est.rank,
                singular_values: est.singular_values,
            })
        })
        .collect::<Result<Vec<_>>>();
    let mut rows = stage(cfg, "distortion", rows)?;
    rows.sort_by_key(|r| r.sample_id);
    Ok(rows)
}

pub fn influence_stage(
    cfg: &ExperimentConfig,
    decoder: &dyn DecoderOracle,
    latents: &[LatentCode],
) -> Result<Vec<InfluenceRow>> {
    let hcfg = HutchinsonConfig {
        probes: cfg.geometry.hutchinson_probes,
        eps_stab: cfg.geometry.eps_stab,
        seed: cfg.stage_seed("influence"),
    };
    let rows = latents
        .par_iter()
        .map(|l| {
            Ok(InfluenceRow {
                member: l.member,
                map: influence_hutchinson(decoder, &l.z, &hcfg, l.sample_id)?,
            })
        })
        .collect::<Result<Vec<_>>>();
    let mut rows = stage(cfg, "influence", rows)?;
    rows.sort_by_key(|r| r.map.sample_id);
    Ok(rows)
}

/// Scores every sample with every configured method and probe time, plain
/// and filtered.
pub fn attack_stage(
    cfg: &ExperimentConfig,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    decoder: &dyn DecoderOracle,
    latents: &[LatentCode],
    influence: &[InfluenceRow],
    image_shape: (usize, usize),
) -> Result<Vec<ScoreRow>> {
    let a = &cfg.attacks;
    let params = AttackParams {
        loss_draws: a.loss_draws,
        noise_seed: cfg.stage_seed("loss-noise"),
        secmi_stride: a.secmi_stride,
    };
    let by_id: BTreeMap<u64, &InfluenceMap> = influence.iter().map(|r| (r.map.sample_id, &r.map)).collect();
    let dataset_mask = match a.mask_scope {
        MaskScope::Dataset => {
            let maps: Vec<InfluenceMap> = influence.iter().map(|r| r.map.clone()).collect();
            Some(stage(cfg, "attack", mean_influence(&maps).and_then(|m| select_top_influence(&m, a.keep_fraction)))?)
        }
        MaskScope::PerSample => None,
    };
    let freq = match a.frequency_filter {
        Some(f) => Some(stage(cfg, "attack", build_freq_mask(image_shape.0, image_shape.1, f.radius, f.scale))?),
        None => None,
    };
    let random_seed = cfg.stage_seed("random-mask");

    let rows = latents
        .par_iter()
        .map(|l| -> Result<Vec<ScoreRow>> {
            let mask = match &dataset_mask {
                Some(m) => m.clone(),
                None => {
                    let map = by_id.get(&l.sample_id).ok_or_else(|| {
                        Error::InvalidInput(format!("sample {} has no influence map", l.sample_id))
                    })?;
                    select_top_influence(map, a.keep_fraction)?
                }
            };
            let random = if a.random_drop_control {
                Some(DimensionMask::random(l.z.len(), a.keep_fraction, RngStream::new(random_seed, l.sample_id))?)
            } else {
                None
            };
            let mut out = Vec::new();
            for &method in &a.methods {
                let p = method.default_norm_order();
                for &t in &cfg.t_grid {
                    let v = attack_vector(method, predictor, schedule, &l.z, t, &params, l.sample_id)?;
                    let mut push = |variant: ScoreVariant, keep: f64, score: f64, norm: f64| {
                        out.push(ScoreRow {
                            sample_id: l.sample_id,
                            member: l.member,
                            method,
                            t,
                            norm_order: norm,
                            variant,
                            keep_fraction: keep,
                            score,
                        })
                    };
                    push(ScoreVariant::Unfiltered, 1.0, masked_score(&v, None, p)?.value, p);
                    push(ScoreVariant::Influence, a.keep_fraction, masked_score(&v, Some(&mask), p)?.value, p);
                    if let Some(r) = &random {
                        push(ScoreVariant::RandomDrop, a.keep_fraction, masked_score(&v, Some(r), p)?.value, p);
                    }
                    if let Some(fm) = &freq {
                        if matches!(method, AttackMethod::Loss | AttackMethod::Pia) {
                            let s = freq_filtered_statistic(
                                method,
                                predictor,
                                schedule,
                                decoder,
                                &l.z,
                                t,
                                fm,
                                params.noise_seed,
                                l.sample_id,
                            )?;
                            push(ScoreVariant::Frequency, 1.0, s.value, s.norm_order);
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>();
    let mut rows: Vec<ScoreRow> = stage(cfg, "attack", rows)?.into_iter().flatten().collect();
    sort_scores(&mut rows);
    Ok(rows)
}

/// Canonical output order: sample id, method, t, variant.
pub fn sort_scores(rows: &mut [ScoreRow]) {
    rows.sort_by(|x, y| (x.sample_id, x.method, x.t, x.variant).cmp(&(y.sample_id, y.method, y.t, y.variant)));
}

/// AUC of each quartile at one probe time; `None` marks an empty bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileCurvePoint {
    pub t: usize,
    pub auc: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method: AttackMethod,
    pub variant: ScoreVariant,
    pub best: EvalReport,
    pub grid: Vec<EvalReport>,
    pub quartile_curves: Vec<QuartileCurvePoint>,
    pub baseline: BaselineResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub quartile_thresholds: [f64; 3],
    pub evaluations: Vec<MethodEvaluation>,
    pub correlation: Option<CorrelationEntry>,
}

impl EvalSummary {
    pub fn find(&self, method: AttackMethod, variant: ScoreVariant) -> Option<&MethodEvaluation> {
        self.evaluations
            .iter()
            .find(|e| e.method == method && e.variant == variant)
    }
}

fn labeled(rows: &[&ScoreRow]) -> Result<LabeledScores> {
    LabeledScores::new(
        rows.iter()
            .map(|r| LabeledScore {
                sample_id: r.sample_id,
                score: r.score,
                member: r.member,
            })
            .collect(),
        Orientation::MemberLow,
    )
}

/// Builds every report from score and distortion rows alone (plus images
/// for the spectral correlation).
pub fn evaluate_scores(
    cfg: &ExperimentConfig,
    scores: &[ScoreRow],
    distortion: &[DistortionRow],
    images: Option<&BTreeMap<u64, Image>>,
) -> Result<EvalSummary> {
    let result = (|| {
        let partition = quartile_partition(&distortion.iter().map(|d| (d.sample_id, d.log_volume)).collect::<Vec<_>>())?;
        let mut groups: BTreeMap<(AttackMethod, ScoreVariant), BTreeMap<usize, Vec<&ScoreRow>>> = BTreeMap::new();
        for r in scores {
            groups.entry((r.method, r.variant)).or_default().entry(r.t).or_default().push(r);
        }
        let baseline_seed = cfg.stage_seed("baseline");
        let mut evaluations = Vec::new();
        for ((method, variant), by_t) in &groups {
            let name = method.display_name();
            let ts: Vec<usize> = by_t.keys().copied().collect();
            let sweep = probe_time_sweep(&ts, |t| Ok(EvalReport::evaluate(name, Some(t), variant.masked(), &labeled(&by_t[&t])?)))?;
            let mut curves = Vec::with_capacity(ts.len());
            let mut best_quartiles: Vec<QuartileReport> = Vec::new();
            for &t in &ts {
                let q = stratified_attack(&labeled(&by_t[&t])?, &partition, name, Some(t), variant.masked())?;
                curves.push(QuartileCurvePoint {
                    t,
                    auc: std::array::from_fn(|i| q[i].report.as_ref().map(|r| r.auc)),
                });
                if Some(t) == sweep.best.t {
                    best_quartiles = q;
                }
            }
            let best_scores = labeled(&by_t[&sweep.best.t.expect("sweep sets t")])?;
            let group = (best_scores.members().min(best_scores.non_members()) / 4).max(1);
            let baseline = random_baseline(&best_scores, group, cfg.baseline_trials, baseline_seed)?;
            let mut best = sweep.best;
            best.quartiles = best_quartiles;
            evaluations.push(MethodEvaluation {
                method: *method,
                variant: *variant,
                best,
                grid: sweep.grid,
                quartile_curves: curves,
                baseline,
            });
        }
        let correlation = match images {
            Some(by_id) if distortion.len() >= 3 => {
                let mut dist = Vec::with_capacity(distortion.len());
                let mut imgs = Vec::with_capacity(distortion.len());
                for d in distortion {
                    let img = by_id.get(&d.sample_id).ok_or_else(|| {
                        Error::InvalidInput(format!("no image for sample {}", d.sample_id))
                    })?;
                    dist.push(d.log_volume);
                    imgs.push(img.clone());
                }
                let radius = default_low_frequency_radius(imgs[0].width);
                match distortion_spectrum_correlation(&dist, &imgs, radius) {
                    Ok(c) => Some(c),
                    Err(Error::UndefinedCorrelation(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        Ok(EvalSummary {
            config_hash: cfg.hash(),
            quartile_thresholds: partition.thresholds,
            evaluations,
            correlation,
        })
    })();
    stage(cfg, "evaluate", result)
}

/// Every in-memory product of one experiment.
pub struct ExperimentOutcome {
    pub vae: TrainedVae,
    pub predictor: TrainedPredictor,
    pub schedule: DiffusionSchedule,
    pub standardizer: LatentStandardizer,
    pub latents: Vec<LatentCode>,
    pub distortion: Vec<DistortionRow>,
    pub influence: Vec<InfluenceRow>,
    pub scores: Vec<ScoreRow>,
    pub summary: EvalSummary,
}

pub fn split_images(split: &DatasetSplit) -> Result<BTreeMap<u64, Image>> {
    split
        .labeled()
        .map(|(s, _)| Ok((s.id, Image::new(split.height, split.width, s.pixels.clone())?)))
        .collect()
}

/// Runs every stage in memory.
pub fn run_experiment(cfg: &ExperimentConfig, split: &DatasetSplit) -> Result<ExperimentOutcome> {
    stage(cfg, "config", cfg.validate())?;
    let schedule = stage(cfg, "config", cfg.schedule.build())?;
    let vae = train_vae_stage(cfg, split)?;
    let (latents, standardizer) = latent_codes(cfg, &vae.encoder, split)?;
    let decoder = StandardizedDecoder {
        inner: &vae.decoder,
        standardizer: &standardizer,
    };
    let predictor = train_ldm_stage(cfg, &latents, &schedule)?;
    let distortion = distortion_stage(cfg, &decoder, &latents)?;
    let influence = influence_stage(cfg, &decoder, &latents)?;
    let scores = attack_stage(
        cfg,
        &predictor.predictor,
        &schedule,
        &decoder,
        &latents,
        &influence,
        (split.height, split.width),
    )?;
    let images = stage(cfg, "evaluate", split_images(split))?;
    let summary = evaluate_scores(cfg, &scores, &distortion, Some(&images))?;
    Ok(ExperimentOutcome {
        vae,
        predictor,
        schedule,
        standardizer,
        latents,
        distortion,
        influence,
        scores,
        summary,
    })
}

/// Materializes the configured dataset as a balanced split.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    let seed = cfg.stage_seed("data");
    let result = match &cfg.dataset {
        DatasetSpec::Synthetic { generator, samples, side } => generate_synthetic(generator, *samples, *side, seed),
        DatasetSpec::Idx { path, limit } => {
            let parsed = ingest_idx(path)?;
            let (h, w, mut images) = pad_to_power_of_two(&parsed);
            if let Some(n) = limit {
                images.truncate(*n);
            }
            let samples = images
                .into_iter()
                .enumerate()
                .map(|(i, pixels)| Sample {
                    id: i as u64,
                    pixels,
                    fine_detail: None,
                })
                .collect();
            DatasetSplit::balanced(h, w, samples, seed)
        }
    };
    stage(cfg, "generate", result)
}
