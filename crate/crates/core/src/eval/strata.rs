use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean, quantile_linear, std_dev, RngStream};

use super::report::{EvalReport, QuartileReport};
use super::roc::{auc, roc, LabeledScore, LabeledScores};

/// Four distortion buckets over members and held-out samples together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartilePartition {
    pub thresholds: [f64; 3],
    pub buckets: [Vec<u64>; 4],
}

impl QuartilePartition {
    /// Values equal to a threshold fall in the lower bucket.
    pub fn bucket_of(&self, value: f64) -> usize {
        self.thresholds.iter().filter(|&&q| value > q).count()
    }

    pub fn bucket_containing(&self, sample_id: u64) -> Option<usize> {
        self.buckets.iter().position(|b| b.binary_search(&sample_id).is_ok())
    }
}

pub fn quartile_partition(distortions: &[(u64, f64)]) -> Result<QuartilePartition> {
    if distortions.is_empty() {
        return Err(Error::InvalidInput("no distortion values to stratify".into()));
    }
    if let Some((id, _)) = distortions.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("sample {id} has non-finite distortion")));
    }
    let mut values: Vec<f64> = distortions.iter().map(|d| d.1).collect();
    values.sort_by(f64::total_cmp);
    let thresholds = [
        quantile_linear(&values, 0.25),
        quantile_linear(&values, 0.5),
        quantile_linear(&values, 0.75),
    ];
    let mut partition = QuartilePartition {
        thresholds,
        buckets: Default::default(),
    };
    for &(id, v) in distortions {
        let b = partition.bucket_of(v);
        partition.buckets[b].push(id);
    }
    for b in &mut partition.buckets {
        b.sort_unstable();
    }
    Ok(partition)
}

/// Evaluates the attack separately inside each distortion bucket.
pub fn stratified_attack(
    scores: &LabeledScores,
    partition: &QuartilePartition,
    method: &str,
    t: Option<usize>,
    masked: bool,
) -> Result<Vec<QuartileReport>> {
    if let Some(e) = scores.entries().iter().find(|e| partition.bucket_containing(e.sample_id).is_none()) {
        return Err(Error::InvalidInput(format!("sample {} has no distortion value", e.sample_id)));
    }
    Ok(partition
        .buckets
        .iter()
        .enumerate()
        .map(|(q, ids)| {
            let inside: Vec<&LabeledScore> = scores
                .entries()
                .iter()
                .filter(|e| ids.binary_search(&e.sample_id).is_ok())
                .collect();
            let members = inside.iter().filter(|e| e.member).count();
            QuartileReport {
                quartile: q,
                members,
                non_members: inside.len() - members,
                report: scores
                    .subset(|id| ids.binary_search(&id).is_ok())
                    .map(|s| Box::new(EvalReport::evaluate(method, t, masked, &s))),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub mean_auc: f64,
    pub std_auc: f64,
    pub trials: usize,
    pub group_size: usize,
    /// Set when a single trial makes the std meaningless.
    pub single_trial: bool,
}

/// AUC over `trials` random groups of `group_size` members and as many non-members.
pub fn random_baseline(scores: &LabeledScores, group_size: usize, trials: usize, seed: u64) -> Result<BaselineResult> {
    let members: Vec<&LabeledScore> = scores.entries().iter().filter(|e| e.member).collect();
    let others: Vec<&LabeledScore> = scores.entries().iter().filter(|e| !e.member).collect();
    if group_size == 0 || group_size > members.len().min(others.len()) {
        return Err(Error::Config(format!(
            "baseline group size {group_size} must be in 1..={}",
            members.len().min(others.len())
        )));
    }
    if trials == 0 {
        return Err(Error::Config("baseline needs at least one trial".into()));
    }
    let aucs: Vec<f64> = (0..trials)
        .map(|k| {
            let mut rng = RngStream::new(seed, k as u64).rng();
            let mut picked: Vec<LabeledScore> = sample(&mut rng, members.len(), group_size)
                .into_iter()
                .map(|i| *members[i])
                .collect();
            picked.extend(sample(&mut rng, others.len(), group_size).into_iter().map(|i| *others[i]));
            let group = LabeledScores::new(picked, scores.orientation()).expect("both classes present");
            auc(&roc(&group))
        })
        .collect();
    Ok(BaselineResult {
        mean_auc: mean(&aucs),
        std_auc: std_dev(&aucs),
        trials,
        group_size,
        single_trial: trials == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Orientation;

    #[test]
    fn quartiles_of_one_to_eight() {
        let d: Vec<(u64, f64)> = (0..8).map(|i| (i as u64, (i + 1) as f64)).collect();
        let p = quartile_partition(&d).unwrap();
        assert_eq!(p.thresholds, [2.75, 4.5, 6.25]);
        assert_eq!(p.buckets, [vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
    }

    #[test]
    fn equal_distortions_collapse_into_first_bucket() {
        let d: Vec<(u64, f64)> = (0..6).map(|i| (i, 3.0)).collect();
        let p = quartile_partition(&d).unwrap();
        assert_eq!(p.buckets[0].len(), 6);
        let scores = LabeledScores::from_groups(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Orientation::MemberLow).unwrap();
        let reports = stratified_attack(&scores, &p, "sima", Some(0), false).unwrap();
        assert!(!reports[0].is_empty());
        assert!(reports[1..].iter().all(|r| r.is_empty()));
    }

    #[test]
    fn baseline_on_perfect_scores() {
        let scores = LabeledScores::from_groups(&[0.0, 0.1, 0.2, 0.3], &[1.0, 1.1, 1.2, 1.3], Orientation::MemberLow).unwrap();
        let b = random_baseline(&scores, 2, 10, 7).unwrap();
        assert_eq!((b.mean_auc, b.std_auc), (100.0, 0.0));
        let one = random_baseline(&scores, 2, 1, 7).unwrap();
        assert!(one.single_trial && one.std_auc == 0.0);
        assert!(matches!(random_baseline(&scores, 5, 10, 7), Err(Error::Config(_))));
    }

    #[test]
    fn baseline_is_reproducible() {
        let m: Vec<f64> = (0..20).map(|i| ((i * 37) % 11) as f64).collect();
        let n: Vec<f64> = (0..20).map(|i| ((i * 53) % 13) as f64).collect();
        let s = LabeledScores::from_groups(&m, &n, Orientation::MemberLow).unwrap();
        let a = random_baseline(&s, 8, 10, 3).unwrap();
        let b = random_baseline(&s, 8, 10, 3).unwrap();
        assert_eq!(a.mean_auc.to_bits(), b.mean_auc.to_bits());
        assert_eq!(a.std_auc.to_bits(), b.std_auc.to_bits());
    }
}
