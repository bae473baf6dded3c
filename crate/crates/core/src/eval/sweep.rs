use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::report::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: EvalReport,
    pub grid: Vec<EvalReport>,
}

/// Argmax-AUC report, ties going to the earlier entry.
pub fn best_by_auc(reports: &[EvalReport]) -> Option<&EvalReport> {
    reports.iter().fold(None, |best: Option<&EvalReport>, r| match best {
        Some(b) if b.auc >= r.auc => Some(b),
        _ => Some(r),
    })
}

/// Evaluates `evaluate(t)` over the grid in parallel; the grid is sorted
/// first so ties resolve to the smaller `t`.
pub fn probe_time_sweep<F>(t_grid: &[usize], evaluate: F) -> Result<SweepResult>
where
    F: Fn(usize) -> Result<EvalReport> + Sync,
{
    if t_grid.is_empty() {
        return Err(Error::Config("probe-time grid is empty".into()));
    }
    let mut ts = t_grid.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let grid = ts.par_iter().map(|&t| evaluate(t)).collect::<Result<Vec<_>>>()?;
    let best = best_by_auc(&grid).cloned().expect("non-empty grid");
    Ok(SweepResult { best, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{LabeledScores, Orientation};

    fn report(t: usize, auc: f64) -> EvalReport {
        let s = LabeledScores::from_groups(&[0.0], &[1.0], Orientation::MemberLow).unwrap();
        EvalReport { auc, ..EvalReport::evaluate("sima", Some(t), false, &s) }
    }

    #[test]
    fn single_point_and_ties() {
        let r = probe_time_sweep(&[30], |t| Ok(report(t, 61.0))).unwrap();
        assert_eq!(r.best.t, Some(30));
        let r = probe_time_sweep(&[40, 10, 20], |t| Ok(report(t, if t == 10 || t == 40 { 70.0 } else { 60.0 }))).unwrap();
        assert_eq!(r.best.t, Some(10));
        assert_eq!(r.grid.iter().map(|g| g.t.unwrap()).collect::<Vec<_>>(), vec![10, 20, 40]);
    }

    #[test]
    fn empty_grid_is_config_error() {
        assert!(matches!(probe_time_sweep(&[], |t| Ok(report(t, 50.0))), Err(Error::Config(_))));
    }
}
