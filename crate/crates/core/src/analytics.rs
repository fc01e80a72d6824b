//! Per-run metrics, depth binning and the exponential-decay fit.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::dataset::TaskInstance;
use crate::verify::{evaluate_text, VerificationReport, Violation};

/// Fraction of the ground truth reproduced before the first divergence.
/// `None` (an unparseable answer) scores zero.
pub fn progress_ratio(pred: Option<&[Action]>, gt: &[Action]) -> f64 {
    let Some(pred) = pred else { return 0.0 };
    if gt.is_empty() {
        return 0.0;
    }
    let k = pred.iter().zip(gt).take_while(|(p, g)| p == g).count();
    k as f64 / gt.len() as f64
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { row[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Order-preserving match via longest common subsequence.
pub fn precision_recall(pred: Option<&[Action]>, gt: &[Action]) -> (f64, f64) {
    let Some(pred) = pred else { return (0.0, 0.0) };
    let matched = lcs_len(pred, gt) as f64;
    let precision = if pred.is_empty() { 0.0 } else { matched / pred.len() as f64 };
    let recall = if gt.is_empty() { 0.0 } else { matched / gt.len() as f64 };
    (precision, recall)
}

/// Verdict for one model run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub instance_id: String,
    pub run_index: u32,
    pub parsed_ok: bool,
    pub exact_match: bool,
    pub goal_reached: bool,
    pub progress: f64,
    pub precision: f64,
    pub recall: f64,
    pub first_violation_step: Option<usize>,
    /// -1 when the provider did not report usage.
    pub output_tokens: i64,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

/// Verdict for raw model text; `None` stands for a request that produced
/// no completion and scores as a parse failure.
pub fn score_run(instance: &TaskInstance, run_index: u32, raw: Option<&str>, output_tokens: i64) -> RunResult {
    let gt = &instance.ground_truth.actions;
    let (pred, report) = match raw {
        Some(text) => evaluate_text(text, &instance.world(), gt),
        None => (None, VerificationReport::parse_failure("no completion")),
    };
    let (precision, recall) = precision_recall(pred.as_deref(), gt);
    RunResult {
        instance_id: instance.id.clone(),
        run_index,
        parsed_ok: report.parsed_ok,
        exact_match: report.exact_match,
        goal_reached: report.goal_reached,
        progress: progress_ratio(pred.as_deref(), gt),
        precision,
        recall,
        first_violation_step: report.first_violation_step,
        output_tokens,
        violations: report.violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSeries {
    pub lower: usize,
    pub width: usize,
    /// Mean logical depth over the trials in the bin; the fit abscissa.
    pub mean_depth: f64,
    pub trials: usize,
    pub successes: usize,
    pub p: f64,
    pub mean_progress: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Mean over runs with known token counts.
    pub mean_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("result references unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("bin width must be positive")]
    ZeroWidth,
}

/// Pools every run of every instance in a depth bin.
pub fn aggregate_bins(
    results: &[RunResult],
    depth_of: &HashMap<String, usize>,
    bin_width: usize,
) -> Result<Vec<BinSeries>, AnalyticsError> {
    if bin_width == 0 {
        return Err(AnalyticsError::ZeroWidth);
    }
    #[derive(Default)]
    struct Acc {
        trials: usize,
        successes: usize,
        depth: f64,
        progress: f64,
        precision: f64,
        recall: f64,
        tokens: f64,
        token_runs: usize,
    }
    let mut bins: BTreeMap<usize, Acc> = BTreeMap::new();
    for r in results {
        let depth = *depth_of
            .get(&r.instance_id)
            .ok_or_else(|| AnalyticsError::UnknownInstance(r.instance_id.clone()))?;
        let acc = bins.entry(depth / bin_width * bin_width).or_default();
        acc.trials += 1;
        acc.successes += usize::from(r.exact_match);
        acc.depth += depth as f64;
        acc.progress += r.progress;
        acc.precision += r.precision;
        acc.recall += r.recall;
        if r.output_tokens >= 0 {
            acc.tokens += r.output_tokens as f64;
            acc.token_runs += 1;
        }
    }
    Ok(bins
        .into_iter()
        .map(|(lower, a)| {
            let t = a.trials as f64;
            BinSeries {
                lower,
                width: bin_width,
                mean_depth: a.depth / t,
                trials: a.trials,
                successes: a.successes,
                p: a.successes as f64 / t,
                mean_progress: a.progress / t,
                mean_precision: a.precision / t,
                mean_recall: a.recall / t,
                mean_tokens: (a.token_runs > 0).then(|| a.tokens / a.token_runs as f64),
            }
        })
        .collect())
}

/// Counts of first-violation steps; clean runs contribute nothing.
pub fn first_violation_histogram(
    steps: impl IntoIterator<Item = Option<usize>>,
    normalize: bool,
) -> BTreeMap<usize, f64> {
    let mut hist: BTreeMap<usize, f64> = BTreeMap::new();
    for step in steps.into_iter().flatten() {
        *hist.entry(step).or_default() += 1.0;
    }
    if normalize {
        let total: f64 = hist.values().sum();
        for v in hist.values_mut() {
            *v /= total;
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub l0_ols: f64,
    pub l0_wls: f64,
    pub slope_ols: f64,
    /// Slope of the reweighted fit.
    pub slope: f64,
    /// Uncentred, weighted coefficient of determination of the reweighted fit.
    pub r_squared: f64,
    pub bins_used: usize,
    pub bins_dropped_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("InsufficientData: {usable} usable bin(s), need at least 2")]
    InsufficientData { usable: usize },
    #[error("NonDecaying: fitted slope {slope} is not negative")]
    NonDecaying { slope: f64 },
}

/// Floor on residual magnitude when forming weights.
pub const RESIDUAL_FLOOR: f64 = 1e-6;

/// Fits `ln p = s * L` through the origin, first by ordinary least squares,
/// then reweighted by inverse squared OLS residuals. `L0 = -1/s`.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<FitResult, FitError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(l, p)| (l, p.ln()))
        .collect();
    let dropped = points.len() - usable.len();
    if usable.len() < 2 {
        return Err(FitError::InsufficientData { usable: usable.len() });
    }
    let sxx: f64 = usable.iter().map(|(l, _)| l * l).sum();
    let sxy: f64 = usable.iter().map(|(l, y)| l * y).sum();
    let slope_ols = sxy / sxx;
    if slope_ols.is_nan() || slope_ols >= 0.0 {
        return Err(FitError::NonDecaying { slope: slope_ols });
    }
    let weights: Vec<f64> = usable
        .iter()
        .map(|(l, y)| {
            let r = y - slope_ols * l;
            1.0 / (r * r).max(RESIDUAL_FLOOR * RESIDUAL_FLOOR)
        })
        .collect();
    let wxx: f64 = usable.iter().zip(&weights).map(|((l, _), w)| w * l * l).sum();
    let wxy: f64 = usable.iter().zip(&weights).map(|((l, y), w)| w * l * y).sum();
    let slope = wxy / wxx;
    if slope.is_nan() || slope >= 0.0 {
        return Err(FitError::NonDecaying { slope });
    }
    let ss_res: f64 = usable
        .iter()
        .zip(&weights)
        .map(|((l, y), w)| w * (y - slope * l).powi(2))
        .sum();
    let ss_tot: f64 = usable.iter().zip(&weights).map(|((_, y), w)| w * y * y).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitResult {
        l0_ols: -1.0 / slope_ols,
        l0_wls: -1.0 / slope,
        slope_ols,
        slope,
        r_squared,
        bins_used: usable.len(),
        bins_dropped_zero: dropped,
    })
}

pub fn fit_l0(bins: &[BinSeries]) -> Result<FitResult, FitError> {
    let points: Vec<(f64, f64)> = bins.iter().map(|b| (b.mean_depth, b.p)).collect();
    fit_decay(&points)
}

/// Diagnostic OLS fit of `ln p = a + s * L` with a free intercept.
/// Returns `(slope, intercept)`.
pub fn fit_with_intercept(bins: &[BinSeries]) -> Result<(f64, f64), FitError> {
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.p > 0.0)
        .map(|b| (b.mean_depth, b.p.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(FitError::InsufficientData { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::InsufficientData { usable: 1 });
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::CellLabel;

    fn cell(s: &str) -> CellLabel {
        s.parse().unwrap()
    }

    // Example 2's ground truth
    fn gt() -> Vec<Action> {
        crate::verify::parse_solution(
            "Solution: [('start', 'A1'), ('move_to', 'A2'), ('pick_up_key', '1'), ('move_to', 'B2'), \
             ('move_to', 'B1'), ('move_to', 'C1'), ('use_key', '1'), ('unlock_and_open_door_to', 'C2'), \
             ('move_to', 'C2'), ('rescue', 'Alice')]",
        )
        .unwrap()
    }

    // naive exponential-time LCS, used only to cross-check the DP
    fn lcs_brute(a: &[Action], b: &[Action]) -> usize {
        match (a.split_first(), b.split_first()) {
            (Some((x, ra)), Some((y, rb))) => {
                if x == y {
                    1 + lcs_brute(ra, rb)
                } else {
                    lcs_brute(ra, b).max(lcs_brute(a, rb))
                }
            }
            _ => 0,
        }
    }

    #[test]
    fn progress_examples() {
        let gt = gt();
        assert_eq!(progress_ratio(Some(&gt), &gt), 1.0);
        let mut diverged = gt[..5].to_vec();
        diverged.push(Action::MoveTo(cell("A1")));
        assert_eq!(progress_ratio(Some(&diverged), &gt), 0.5);
        assert_eq!(progress_ratio(None, &gt), 0.0);
    }

    #[test]
    fn precision_recall_examples() {
        let gt = gt();
        assert_eq!(precision_recall(Some(&gt), &gt), (1.0, 1.0));

        let mut longer = gt.clone();
        longer.push(Action::MoveTo(cell("C1")));
        longer.push(Action::MoveTo(cell("C2")));
        assert_eq!(lcs_brute(&longer, &gt), 10);
        assert_eq!(precision_recall(Some(&longer), &gt), (10.0 / 12.0, 1.0));

        let shorter: Vec<Action> = gt
            .iter()
            .copied()
            .filter(|a| !matches!(a, Action::PickUpKey(_) | Action::UseKey(_) | Action::UnlockAndOpenDoorTo(_)))
            .collect();
        assert_eq!(shorter.len(), 7);
        assert_eq!(lcs_brute(&shorter, &gt), 7);
        assert_eq!(precision_recall(Some(&shorter), &gt), (1.0, 0.7));
        assert_eq!(precision_recall(Some(&[]), &gt), (0.0, 0.0));
    }

    #[test]
    fn lcs_matches_brute_force() {
        let gt = gt();
        let mut rng_state = 17u64;
        for _ in 0..200 {
            let pick = |s: &mut u64| {
                *s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (*s >> 33) as usize
            };
            let len = pick(&mut rng_state) % 9;
            let pred: Vec<Action> = (0..len).map(|_| gt[pick(&mut rng_state) % gt.len()]).collect();
            let m = lcs_len(&pred, &gt);
            assert_eq!(m, lcs_brute(&pred, &gt));
            assert!(m <= pred.len().min(gt.len()));
        }
    }

    fn result(id: &str, exact: bool, tokens: i64) -> RunResult {
        RunResult {
            instance_id: id.into(),
            run_index: 0,
            parsed_ok: true,
            exact_match: exact,
            goal_reached: exact,
            progress: if exact { 1.0 } else { 0.5 },
            precision: 1.0,
            recall: 1.0,
            first_violation_step: None,
            output_tokens: tokens,
            violations: vec![],
        }
    }

    #[test]
    fn binning() {
        let depth: HashMap<String, usize> = (0..40).map(|i| (format!("i{i}"), 12)).collect();
        let mut runs = Vec::new();
        for i in 0..40 {
            for r in 0..5 {
                runs.push(result(&format!("i{i}"), (i * 5 + r) % 2 == 0, if r == 0 { -1 } else { 100 }));
            }
        }
        let bins = aggregate_bins(&runs, &depth, 1).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].trials, 200);
        assert_eq!(bins[0].successes, 100);
        assert_eq!(bins[0].p, 0.5);
        assert_eq!(bins[0].mean_tokens, Some(100.0));
        let all: Vec<RunResult> = runs.iter().map(|r| RunResult { exact_match: true, ..r.clone() }).collect();
        assert_eq!(aggregate_bins(&all, &depth, 1).unwrap()[0].p, 1.0);
        assert_eq!(
            aggregate_bins(&[result("nope", true, 1)], &depth, 1),
            Err(AnalyticsError::UnknownInstance("nope".into()))
        );
        let wide = aggregate_bins(&runs, &depth, 5).unwrap();
        assert_eq!(wide[0].lower, 10);
    }

    #[test]
    fn histogram() {
        assert!(first_violation_histogram([None, None], false).is_empty());
        let h = first_violation_histogram([Some(2), Some(2), Some(7), None], false);
        assert_eq!(h, BTreeMap::from([(2, 2.0), (7, 1.0)]));
        let n = first_violation_histogram([Some(2), Some(2), Some(7)], true);
        assert!((n.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let pts: Vec<(f64, f64)> = (10..=80).map(|l| (l as f64, (-(l as f64) / 50.0).exp())).collect();
        let fit = fit_decay(&pts).unwrap();
        assert!((fit.l0_ols - 50.0).abs() < 1e-9);
        assert!((fit.l0_wls - 50.0).abs() < 1e-9);
        assert!((fit.slope * fit.l0_wls + 1.0).abs() < 1e-12);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(fit_decay(&[(10.0, 0.5)]), Err(FitError::InsufficientData { usable: 1 }));
        assert_eq!(fit_decay(&[(10.0, 0.5), (20.0, 0.0)]), Err(FitError::InsufficientData { usable: 1 }));
        assert!(matches!(fit_decay(&[(10.0, 1.0), (20.0, 1.0)]), Err(FitError::NonDecaying { .. })));
        let fit = fit_decay(&[(10.0, 0.8), (20.0, 0.0), (30.0, 0.5)]).unwrap();
        assert_eq!((fit.bins_used, fit.bins_dropped_zero), (2, 1));
    }

    #[test]
    fn intercept_diagnostic() {
        let bins: Vec<BinSeries> = (10..=30)
            .map(|l| BinSeries {
                lower: l,
                width: 1,
                mean_depth: l as f64,
                trials: 1,
                successes: 1,
                p: 0.9 * (-(l as f64) / 40.0).exp(),
                mean_progress: 0.0,
                mean_precision: 0.0,
                mean_recall: 0.0,
                mean_tokens: None,
            })
            .collect();
        let (slope, intercept) = fit_with_intercept(&bins).unwrap();
        assert!((slope + 1.0 / 40.0).abs() < 1e-12);
        assert!((intercept - 0.9f64.ln()).abs() < 1e-10);
    }
}
