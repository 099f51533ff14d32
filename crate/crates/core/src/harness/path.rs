//! Reference path geometry and longitudinal speed profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::KMH_TO_MS;

/// Reference path evaluated by station X (m). The double-lane-change shape is
/// the usual pair of opposed tanh ramps; all shape constants are
/// configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathReference {
    Straight {
        y0: f64,
    },
    DoubleLaneChange {
        #[serde(default = "default_dy1")]
        dy1: f64,
        #[serde(default = "default_dy2")]
        dy2: f64,
        /// First ramp slope factor (1/m) and center station (m)
        #[serde(default = "default_s1")]
        s1: f64,
        #[serde(default = "default_x1")]
        x1: f64,
        /// Second ramp slope factor (1/m) and center station (m)
        #[serde(default = "default_s2")]
        s2: f64,
        #[serde(default = "default_x2")]
        x2: f64,
        /// Ramp midpoint offset in the tanh argument
        #[serde(default = "default_shift")]
        shift: f64,
    },
}

fn default_dy1() -> f64 {
    4.05
}
fn default_dy2() -> f64 {
    5.7
}
fn default_s1() -> f64 {
    2.4 / 25.0
}
fn default_x1() -> f64 {
    27.19
}
fn default_s2() -> f64 {
    2.4 / 21.95
}
fn default_x2() -> f64 {
    56.46
}
fn default_shift() -> f64 {
    1.2
}

impl PathReference {
    pub fn straight(y0: f64) -> Self {
        Self::Straight { y0 }
    }

    pub fn standard_dlc() -> Self {
        Self::DoubleLaneChange {
            dy1: default_dy1(),
            dy2: default_dy2(),
            s1: default_s1(),
            x1: default_x1(),
            s2: default_s2(),
            x2: default_x2(),
            shift: default_shift(),
        }
    }

    /// (Y_ref, theta_ref) at station x; theta from the analytic derivative.
    pub fn reference_at(&self, x: f64) -> (f64, f64) {
        match *self {
            Self::Straight { y0 } => (y0, 0.0),
            Self::DoubleLaneChange {
                dy1,
                dy2,
                s1,
                x1,
                s2,
                x2,
                shift,
            } => {
                let z1 = s1 * (x - x1) - shift;
                let z2 = s2 * (x - x2) - shift;
                let y = dy1 / 2.0 * (1.0 + z1.tanh()) - dy2 / 2.0 * (1.0 + z2.tanh());
                let sech2 = |z: f64| {
                    let c = z.cosh();
                    1.0 / (c * c)
                };
                let dy = dy1 / 2.0 * s1 * sech2(z1) - dy2 / 2.0 * s2 * sech2(z2);
                (y, dy.atan())
            }
        }
    }
}

/// Longitudinal target speed as a function of station X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant {
        v_kmh: f64,
    },
    /// Linear ramp in station from v0 at X=0 to v1 at `ramp_end_m`, held
    /// afterwards.
    RampThenHold {
        v0_kmh: f64,
        v1_kmh: f64,
        ramp_end_m: f64,
    },
}

impl SpeedProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=120.0).contains(&v);
        match *self {
            Self::Constant { v_kmh } if ok(v_kmh) => Ok(()),
            Self::RampThenHold {
                v0_kmh,
                v1_kmh,
                ramp_end_m,
            } if ok(v0_kmh) && ok(v1_kmh) && ramp_end_m > 0.0 => Ok(()),
            _ => Err(Error::Config(
                "speeds must lie in [0, 120] km/h and ramp length must be positive".into(),
            )),
        }
    }

    /// Target speed in m/s at station x.
    pub fn target_ms(&self, x: f64) -> f64 {
        let kmh = match *self {
            Self::Constant { v_kmh } => v_kmh,
            Self::RampThenHold {
                v0_kmh,
                v1_kmh,
                ramp_end_m,
            } => {
                let s = (x / ramp_end_m).clamp(0.0, 1.0);
                v0_kmh + s * (v1_kmh - v0_kmh)
            }
        };
        kmh * KMH_TO_MS
    }
}
