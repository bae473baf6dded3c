use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the threshold a member is expected on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Members score lower (reconstruction errors).
    MemberLow,
    MemberHigh,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::MemberLow => Orientation::MemberHigh,
            Orientation::MemberHigh => Orientation::MemberLow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub sample_id: u64,
    pub score: f64,
    pub member: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    entries: Vec<LabeledScore>,
    orientation: Orientation,
}

impl LabeledScores {
    pub fn new(entries: Vec<LabeledScore>, orientation: Orientation) -> Result<Self> {
        if !entries.iter().any(|e| e.member) || entries.iter().all(|e| e.member) {
            return Err(Error::InvalidInput("scores need at least one member and one non-member".into()));
        }
        if let Some(bad) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {} has non-finite score", bad.sample_id)));
        }
        Ok(Self { entries, orientation })
    }

    /// Members first, then non-members; ids are assigned in that order.
    pub fn from_groups(members: &[f64], non_members: &[f64], orientation: Orientation) -> Result<Self> {
        let entries = members
            .iter()
            .map(|&s| (s, true))
            .chain(non_members.iter().map(|&s| (s, false)))
            .enumerate()
            .map(|(i, (score, member))| LabeledScore {
                sample_id: i as u64,
                score,
                member,
            })
            .collect();
        Self::new(entries, orientation)
    }

    pub fn entries(&self) -> &[LabeledScore] {
        &self.entries
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn members(&self) -> usize {
        self.entries.iter().filter(|e| e.member).count()
    }

    pub fn non_members(&self) -> usize {
        self.entries.len() - self.members()
    }

    /// Subset by id predicate; `None` if a class would be empty.
    pub fn subset(&self, keep: impl Fn(u64) -> bool) -> Option<Self> {
        let entries: Vec<LabeledScore> = self.entries.iter().copied().filter(|e| keep(e.sample_id)).collect();
        Self::new(entries, self.orientation).ok()
    }

    fn oriented(&self, score: f64) -> f64 {
        match self.orientation {
            Orientation::MemberHigh => score,
            Orientation::MemberLow => -score,
        }
    }
}

/// Operating points from "nobody is a member" to "everybody is a member".
///
/// `thresholds` are in the original score units; a sample is classified a
/// member when its score is on the member side of the threshold, inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub degenerate: bool,
}

pub fn roc(scores: &LabeledScores) -> RocCurve {
    let mut oriented: Vec<(f64, bool)> = scores
        .entries
        .iter()
        .map(|e| (scores.oriented(e.score), e.member))
        .collect();
    oriented.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = scores.members() as f64;
    let neg = scores.non_members() as f64;
    let back = |v: f64| match scores.orientation {
        Orientation::MemberHigh => v,
        Orientation::MemberLow => -v,
    };

    let mut thresholds = vec![back(f64::INFINITY)];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < oriented.len() {
        let value = oriented[i].0;
        while i < oriented.len() && oriented[i].0 == value {
            if oriented[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(back(value));
        tpr.push(tp as f64 / pos);
        fpr.push(fp as f64 / neg);
    }
    RocCurve {
        degenerate: thresholds.len() == 2,
        thresholds,
        tpr,
        fpr,
    }
}

/// Trapezoidal area under the curve, in percent.
pub fn auc(curve: &RocCurve) -> f64 {
    let area: f64 = curve
        .fpr
        .windows(2)
        .zip(curve.tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) * 0.5)
        .sum();
    100.0 * area
}

/// Best balanced accuracy over thresholds, in percent.
pub fn asr(curve: &RocCurve) -> f64 {
    let best = curve
        .tpr
        .iter()
        .zip(&curve.fpr)
        .map(|(t, f)| 0.5 * (t + 1.0 - f))
        .fold(0.0, f64::max);
    100.0 * best
}

/// TPR at the last operating point whose FPR is strictly below `cap`
/// (or equal to it when no point is strictly below), in percent.
pub fn tpr_at_fpr(curve: &RocCurve, cap: f64) -> f64 {
    let below = curve.fpr.iter().rposition(|&f| f < cap);
    let idx = below.or_else(|| curve.fpr.iter().rposition(|&f| f <= cap)).unwrap_or(0);
    100.0 * curve.tpr[idx]
}
