//! Configuration, data, persistence and the end-to-end experiment.

mod config;
mod data;
mod pipeline;
mod report;
mod runner;
mod store;

pub use config::{
    AttackConfig, DatasetSpec, ExperimentConfig, FrequencyFilterConfig, GeometryConfig, MaskScope, ScheduleConfig,
    CONFIG_FORMAT_VERSION,
};
pub use data::{
    generate_synthetic, ingest_idx, pad_to_power_of_two, parse_idx, DatasetSplit, IdxImages, Sample, GENERATORS,
    IDX_UBYTE_3D_MAGIC,
};
pub use pipeline::{
    attack_stage, distortion_stage, encode_split, evaluate_scores, influence_stage, latent_codes, prepare_dataset, run_experiment, sort_scores,
    split_images, train_ldm_stage, train_vae_stage, DistortionRow, EvalSummary, ExperimentOutcome, InfluenceRow,
    LatentCode, MethodEvaluation, QuartileCurvePoint, ScoreRow, ScoreVariant,
};
pub use report::{filtering_deltas, render_report, report_rows, RenderedReport, ReportRow};
pub use runner::{run_pipeline, run_stage, PipelineStage, REQUIRED_ARTIFACTS};
pub use store::{
    ResultStore, CHECKPOINT_DIR, CONFIG_FILE, CORRELATION_FILE, DATASET_FILE, DISTORTION_FILE, INFLUENCE_FILE,
    LATENTS_FILE, LOG_FILE, PLOT_DIR, QUARTILE_CURVES, REPORT_JSON, REPORT_TABLE, SCORES_FILE,
};
