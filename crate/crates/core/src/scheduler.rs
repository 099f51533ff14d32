//! Speed-scheduled lookup of the MPC prediction horizon and cost weights.
//!
//! Three one-dimensional tables keyed on vehicle speed: Np and R_delta grow
//! with speed, Q_y shrinks. Q_y spans three orders of magnitude across the
//! table, so it is interpolated on a log scale; Np and R_delta are linear.
//! Outputs are frozen below 5 km/h and clamped to Np <= 75 and Q_y >= 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KMH_TO_MS: f64 = 1.0 / 3.6;

/// One anchor of the schedule (speed in km/h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAnchor {
    pub vx_kmh: f64,
    pub np: f64,
    pub q_y: f64,
    pub r_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleTable {
    /// Ordered breakpoints; below the first the first values hold, above the
    /// last the final segment extrapolates.
    pub anchors: Vec<ScheduleAnchor>,
    pub np_max: usize,
    pub q_y_min: f64,
    /// Outputs constant at or below this speed (km/h).
    pub freeze_kmh: f64,
    /// Input saturates at this speed (km/h).
    pub vx_max_kmh: f64,
}

impl Default for ScheduleTable {
    fn default() -> Self {
        Self {
            anchors: vec![
                ScheduleAnchor { vx_kmh: 18.0, np: 16.0, q_y: 2400.0, r_delta: 860.0 },
                ScheduleAnchor { vx_kmh: 60.0, np: 45.0, q_y: 4.0, r_delta: 2500.0 },
                ScheduleAnchor { vx_kmh: 62.0, np: 48.0, q_y: 4.0, r_delta: 2700.0 },
                ScheduleAnchor { vx_kmh: 72.0, np: 63.0, q_y: 3.8, r_delta: 3700.0 },
            ],
            np_max: 75,
            q_y_min: 2.0,
            freeze_kmh: 5.0,
            vx_max_kmh: 120.0,
        }
    }
}

/// Scheduled parameters for one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledParams {
    pub np: usize,
    pub q_y: f64,
    pub r_delta: f64,
}

impl ScheduleTable {
    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::InvalidParameter("schedule needs anchors".into()));
        }
        for w in self.anchors.windows(2) {
            if w[1].vx_kmh <= w[0].vx_kmh {
                return Err(Error::InvalidParameter(
                    "schedule anchors must be strictly increasing in speed".into(),
                ));
            }
            if w[1].np < w[0].np || w[1].r_delta < w[0].r_delta || w[1].q_y > w[0].q_y {
                return Err(Error::InvalidParameter(
                    "schedule must be monotone: Np and R_delta non-decreasing, Q_y non-increasing"
                        .into(),
                ));
            }
        }
        if self.anchors.iter().any(|a| a.q_y <= 0.0) {
            return Err(Error::InvalidParameter("Q_y anchors must be positive".into()));
        }
        Ok(())
    }

    /// Look up (Np, Q_y, R_delta) for a speed given in m/s.
    pub fn schedule_params(&self, vx_ms: f64) -> ScheduledParams {
        let vx_kmh = (vx_ms / KMH_TO_MS)
            .clamp(0.0, self.vx_max_kmh)
            .max(self.freeze_kmh);
        let (np_raw, q_y_raw, r_raw) = self.interpolate(vx_kmh);
        ScheduledParams {
            np: (np_raw.round() as usize).min(self.np_max).max(1),
            q_y: q_y_raw.max(self.q_y_min),
            r_delta: r_raw,
        }
    }

    fn interpolate(&self, vx_kmh: f64) -> (f64, f64, f64) {
        let first = self.anchors.first().unwrap();
        let last = self.anchors.last().unwrap();
        if vx_kmh <= first.vx_kmh {
            return (first.np, first.q_y, first.r_delta);
        }
        // segment lookup; above the last anchor the final segment extrapolates
        let (lo, hi) = if vx_kmh >= last.vx_kmh && self.anchors.len() >= 2 {
            let n = self.anchors.len();
            (&self.anchors[n - 2], &self.anchors[n - 1])
        } else {
            let mut pair = (first, first);
            for w in self.anchors.windows(2) {
                if vx_kmh <= w[1].vx_kmh {
                    pair = (&w[0], &w[1]);
                    break;
                }
            }
            pair
        };
        let s = (vx_kmh - lo.vx_kmh) / (hi.vx_kmh - lo.vx_kmh);
        let np = lo.np + s * (hi.np - lo.np);
        let r = lo.r_delta + s * (hi.r_delta - lo.r_delta);
        // log-scale interpolation keeps Q_y from staying unrealistically high
        // through the midrange
        let q_y = (lo.q_y.ln() + s * (hi.q_y.ln() - lo.q_y.ln())).exp();
        (np, q_y, r)
    }
}
