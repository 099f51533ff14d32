//! RMS performance metrics and run-to-run percentage comparisons.

use crate::error::{Error, Result};
use crate::harness::log::SimLog;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rms_lateral: f64,
    pub rms_yaw_rate: f64,
    pub rms_yaw_rate_err: f64,
    pub rms_beta: f64,
    pub steps: usize,
    pub x_start: f64,
    pub x_end: f64,
}

pub fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn compute_metrics(log: &SimLog) -> Result<Metrics> {
    if log.records.is_empty() {
        return Err(Error::Comparison("log has no records".into()));
    }
    Ok(Metrics {
        rms_lateral: rms(log.records.iter().map(|r| r.lateral_err)),
        rms_yaw_rate: rms(log.records.iter().map(|r| r.phi_dot)),
        rms_yaw_rate_err: rms(log.records.iter().map(|r| r.yaw_rate_err)),
        rms_beta: rms(log.records.iter().map(|r| r.beta)),
        steps: log.records.len(),
        x_start: log.records.first().unwrap().x,
        x_end: log.records.last().unwrap().x,
    })
}

/// Percentage change per channel for a pair (A, B):
///
/// ```text
/// dRMS_{A-B} (%) = (RMS_B - RMS_A) / RMS_B * 100
/// ```
///
/// positive means A improved on B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub lateral_pct: f64,
    pub yaw_rate_pct: f64,
    pub yaw_rate_err_pct: f64,
    pub beta_pct: f64,
}

pub fn delta_rms_pct(rms_a: f64, rms_b: f64) -> Result<f64> {
    if rms_b == 0.0 {
        if rms_a == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Comparison(
            "baseline RMS is zero; percentage change undefined".into(),
        ));
    }
    Ok((rms_b - rms_a) / rms_b * 100.0)
}

/// Station-range window within which two runs are considered comparable (m).
/// Runs of the same experiment can end at slightly different stations when a
/// controller works the tires hard enough to scrub speed, so the guard
/// against comparing unrelated experiments leaves room for that.
const RANGE_TOL_M: f64 = 10.0;

pub fn compare(a: &Metrics, b: &Metrics) -> Result<ComparisonRow> {
    if a.steps != b.steps {
        return Err(Error::Comparison(format!(
            "step counts differ: {} vs {}",
            a.steps, b.steps
        )));
    }
    if (a.x_start - b.x_start).abs() > RANGE_TOL_M || (a.x_end - b.x_end).abs() > RANGE_TOL_M {
        return Err(Error::Comparison(format!(
            "station ranges differ: [{:.2}, {:.2}] vs [{:.2}, {:.2}]",
            a.x_start, a.x_end, b.x_start, b.x_end
        )));
    }
    Ok(ComparisonRow {
        lateral_pct: delta_rms_pct(a.rms_lateral, b.rms_lateral)?,
        yaw_rate_pct: delta_rms_pct(a.rms_yaw_rate, b.rms_yaw_rate)?,
        yaw_rate_err_pct: delta_rms_pct(a.rms_yaw_rate_err, b.rms_yaw_rate_err)?,
        beta_pct: delta_rms_pct(a.rms_beta, b.rms_beta)?,
    })
}

/// Compare each candidate against the first entry (the baseline).
pub fn compare_runs(metrics: &[Metrics]) -> Result<Vec<ComparisonRow>> {
    let baseline = metrics
        .first()
        .ok_or_else(|| Error::Comparison("need at least one run".into()))?;
    metrics[1..].iter().map(|m| compare(m, baseline)).collect()
}

/// Station of the first sample with y >= level; None when never reached.
pub fn first_crossing_station(log: &SimLog, level: f64) -> Option<f64> {
    log.records.iter().find(|r| r.y >= level).map(|r| r.x)
}

pub fn peak_abs_yaw_rate(log: &SimLog) -> f64 {
    log.records
        .iter()
        .map(|r| r.phi_dot.abs())
        .fold(0.0, f64::max)
}

/// Earliest station after which |y - target| stays within tol for the rest
/// of the run.
pub fn settle_station(log: &SimLog, target: f64, tol: f64) -> Option<f64> {
    let mut settled_from: Option<f64> = None;
    for r in &log.records {
        if (r.y - target).abs() <= tol {
            settled_from.get_or_insert(r.x);
        } else {
            settled_from = None;
        }
    }
    settled_from
}
