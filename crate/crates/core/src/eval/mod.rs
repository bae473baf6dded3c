//! ROC metrics and the evaluation protocols built on them.

mod report;
mod roc;
mod spectral;
mod strata;
mod sweep;

pub use report::{CorrelationEntry, EvalReport, QuartileReport};
pub use roc::{asr, auc, roc, tpr_at_fpr, LabeledScore, LabeledScores, Orientation, RocCurve};
pub use spectral::{default_low_frequency_radius, distortion_spectrum_correlation, spectral_energy};
pub use strata::{quartile_partition, random_baseline, stratified_attack, BaselineResult, QuartilePartition};
pub use sweep::{best_by_auc, probe_time_sweep, SweepResult};
