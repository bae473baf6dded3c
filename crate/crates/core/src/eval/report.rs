use serde::{Deserialize, Serialize};

use super::roc::{asr, auc, roc, tpr_at_fpr, LabeledScores};

/// Metrics for one attack configuration, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub t: Option<usize>,
    pub masked: bool,
    pub auc: f64,
    pub asr: f64,
    pub tpr_at_1_fpr: f64,
    pub members: usize,
    pub non_members: usize,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quartiles: Vec<QuartileReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<CorrelationEntry>,
}

impl EvalReport {
    pub fn evaluate(method: &str, t: Option<usize>, masked: bool, scores: &LabeledScores) -> Self {
        let curve = roc(scores);
        Self {
            method: method.to_string(),
            t,
            masked,
            auc: auc(&curve),
            asr: asr(&curve),
            tpr_at_1_fpr: tpr_at_fpr(&curve, 0.01),
            members: scores.members(),
            non_members: scores.non_members(),
            degenerate: curve.degenerate,
            quartiles: Vec::new(),
            correlations: Vec::new(),
        }
    }
}

/// One distortion stratum; `report` is `None` when a class is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileReport {
    pub quartile: usize,
    pub members: usize,
    pub non_members: usize,
    pub report: Option<Box<EvalReport>>,
}

impl QuartileReport {
    pub fn is_empty(&self) -> bool {
        self.report.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub radius: f64,
    pub samples: usize,
    pub low_frequency_r: f64,
    pub high_frequency_r: f64,
}
