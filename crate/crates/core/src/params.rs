use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the vehicle, shared by the plant and all controllers.
///
/// Cornering stiffnesses are stored with their negative sign: a positive slip
/// angle produces a negative (leftward-opposing) lateral force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Curb weight (kg)
    pub m: f64,
    /// Yaw moment of inertia (kg m^2)
    pub iz: f64,
    /// Distance from centroid to front axle (m)
    pub a: f64,
    /// Distance from centroid to rear axle (m)
    pub b: f64,
    /// Track width (m)
    pub d: f64,
    /// Wheel radius (m)
    pub r: f64,
    /// Front per-axle cornering stiffness (N/rad, negative)
    pub caf: f64,
    /// Rear per-axle cornering stiffness (N/rad, negative)
    pub car: f64,
    /// Front per-axle longitudinal stiffness (N per unit slip)
    pub clf: f64,
    /// Rear per-axle longitudinal stiffness (N per unit slip)
    pub clr: f64,
    /// Centroid height (m)
    pub h_cg: f64,
    /// Motor torque limit per wheel (N m)
    pub t_max: f64,
    /// Gravity (m/s^2)
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        // m..b from the production vehicle data set; h_cg, clf, clr, t_max
        // and g are repo defaults, not measured values.
        Self {
            m: 1860.0,
            iz: 4175.0,
            a: 1.232,
            b: 1.468,
            d: 1.6,
            r: 0.3,
            caf: -77_223.0,
            car: -66_782.0,
            clf: 50_000.0,
            clr: 50_000.0,
            h_cg: 0.54,
            t_max: 300.0,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    /// Wheelbase a + b (m).
    pub fn wheelbase(&self) -> f64 {
        self.a + self.b
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("a", self.a),
            ("b", self.b),
            ("d", self.d),
            ("r", self.r),
            ("h_cg", self.h_cg),
            ("t_max", self.t_max),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.caf < 0.0 && self.car < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cornering stiffnesses must be negative, got caf={}, car={}",
                self.caf, self.car
            )));
        }
        Ok(())
    }
}

/// Road adhesion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadCondition {
    pub mu: f64,
}

impl Default for RoadCondition {
    fn default() -> Self {
        Self { mu: 0.6 }
    }
}

impl RoadCondition {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu <= 1.2 {
            Ok(Self { mu })
        } else {
            Err(Error::InvalidParameter(format!(
                "adhesion coefficient must be in (0, 1.2], got {mu}"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        VehicleParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_positive_stiffness() {
        let p = VehicleParams {
            caf: 77_223.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_out_of_range_mu() {
        assert!(RoadCondition::new(0.0).is_err());
        assert!(RoadCondition::new(1.3).is_err());
        assert!(RoadCondition::new(0.6).is_ok());
    }
}
