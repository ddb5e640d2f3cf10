use std::ops::Range;

use crate::error::{Error, Result};

use super::abc::wrap;

/// Pairwise (cascade) summation; the result does not depend on how the
/// input was produced, only on its order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if x.len() <= LEAF {
        return x.iter().sum();
    }
    let (l, r) = x.split_at(x.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `phi_est - phi` on the real line.
    Unwrapped,
    /// `phi_est - phi` folded into `(-pi, pi]`.
    Wrapped,
}

impl ErrorMetric {
    fn apply(self, e: f64) -> f64 {
        match self {
            ErrorMetric::Unwrapped => e,
            ErrorMetric::Wrapped => wrap(e),
        }
    }
}

/// Time-averaged squared error over `window`.
pub fn trial_mse(
    truth: &[f64],
    estimate: &[f64],
    window: Range<usize>,
    metric: ErrorMetric,
) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    if window.start >= window.end || window.end > truth.len() {
        return Err(Error::EmptyWindow(format!(
            "window {}..{} over {} samples",
            window.start,
            window.end,
            truth.len()
        )));
    }
    let sq: Vec<f64> = truth[window.clone()]
        .iter()
        .zip(&estimate[window.clone()])
        .map(|(t, e)| metric.apply(e - t).powi(2))
        .collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseStats {
    pub mse: f64,
    /// Standard error of `mse` from the spread between trials.
    pub stderr: f64,
    pub n_trials: usize,
}

/// Ensemble mean of per-trial MSEs with standard error `sd / sqrt(n)`.
pub fn aggregate(per_trial: &[f64]) -> Result<MseStats> {
    let n = per_trial.len();
    if n < 2 {
        return Err(Error::invalid(
            "trials",
            format!("need at least 2 trials for an error bar, got {n}"),
        ));
    }
    let mean = pairwise_sum(per_trial) / n as f64;
    let dev: Vec<f64> = per_trial.iter().map(|m| (m - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    Ok(MseStats {
        mse: mean,
        stderr: (var / n as f64).sqrt(),
        n_trials: n,
    })
}

pub fn mse_statistics(
    truths: &[Vec<f64>],
    estimates: &[Vec<f64>],
    window: Range<usize>,
    metric: ErrorMetric,
) -> Result<MseStats> {
    if truths.len() != estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: estimates.len(),
        });
    }
    let per_trial = truths
        .iter()
        .zip(estimates)
        .map(|(t, e)| trial_mse(t, e, window.clone(), metric))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&per_trial)
}

/// `count` consecutive windows with log-spaced edges from `start` to `end`.
pub fn log_windows(start: usize, end: usize, count: usize) -> Result<Vec<Range<usize>>> {
    if start == 0 || end <= start || count == 0 {
        return Err(Error::EmptyWindow(format!(
            "cannot split {start}..{end} into {count} log-spaced windows"
        )));
    }
    let ratio = (end as f64 / start as f64).powf(1.0 / count as f64);
    let mut edges: Vec<usize> = (0..=count)
        .map(|k| (start as f64 * ratio.powi(k as i32)).round() as usize)
        .collect();
    edges[0] = start;
    edges[count] = end;
    let w: Vec<Range<usize>> = edges.windows(2).map(|e| e[0]..e[1]).collect();
    if w.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyWindow(format!(
            "{start}..{end} is too short for {count} log-spaced windows"
        )));
    }
    Ok(w)
}

pub fn windowed_mse(
    truths: &[Vec<f64>],
    estimates: &[Vec<f64>],
    windows: &[Range<usize>],
    metric: ErrorMetric,
) -> Result<Vec<MseStats>> {
    windows
        .iter()
        .map(|w| mse_statistics(truths, estimates, w.clone(), metric))
        .collect()
}

/// True if every window's MSE exceeds the previous one by more than `sigmas`
/// combined standard errors. Needs at least two windows.
pub fn is_increasing(stats: &[MseStats], sigmas: f64) -> bool {
    stats.len() >= 2
        && stats.windows(2).all(|w| {
            let se = w[0].stderr.hypot(w[1].stderr);
            w[1].mse - w[0].mse > sigmas * se
        })
}

/// Per-window statistics of a batch of trials, `per_trial[k][w]` being the
/// MSE of trial `k` in window `w`: the ensemble mean MSE and the mean of
/// `ln MSE`.
pub fn window_trend(per_trial: &[Vec<f64>]) -> Result<(Vec<MseStats>, Vec<MseStats>)> {
    let count = per_trial.first().map_or(0, Vec::len);
    if per_trial.iter().any(|t| t.len() != count) {
        return Err(Error::DimensionMismatch {
            expected: count,
            found: per_trial
                .iter()
                .map(Vec::len)
                .find(|&l| l != count)
                .unwrap_or(count),
        });
    }
    let column =
        |w: usize, f: fn(f64) -> f64| per_trial.iter().map(|t| f(t[w])).collect::<Vec<_>>();
    let means = (0..count)
        .map(|w| aggregate(&column(w, |m| m)))
        .collect::<Result<_>>()?;
    let logs = (0..count)
        .map(|w| aggregate(&column(w, |m| m.max(f64::MIN_POSITIVE).ln())))
        .collect::<Result<_>>()?;
    Ok((means, logs))
}

/// Growth signature: the mean MSE rises strictly from window to window and
/// the mean log-MSE of the last window exceeds the first by more than
/// `sigmas` combined standard errors. The log keeps a few runaway trials
/// from swamping the error bar.
pub fn trend_increasing(means: &[MseStats], logs: &[MseStats], sigmas: f64) -> bool {
    if means.len() < 2 || logs.len() != means.len() || !is_increasing(means, 0.0) {
        return false;
    }
    let (a, b) = (logs[0], logs[logs.len() - 1]);
    b.mse - a.mse > sigmas * a.stderr.hypot(b.stderr)
}
