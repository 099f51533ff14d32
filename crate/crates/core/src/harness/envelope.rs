//! Offline fit of the phase-plane stability boundary coefficients B1, B2
//! from the two-degree-of-freedom model.
//!
//! The stable region is |B1 beta_dot + B2 beta| <= 1. B2 is anchored at the
//! sideslip angle where the rear tires saturate (beyond it the yaw dynamics
//! lose their restoring force); B1 at the largest sideslip rate reachable
//! inside the admissible state box.

use crate::dyc::TwoDofModel;
use crate::error::Result;
use crate::params::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub b1: f64,
    pub b2: f64,
    /// Sideslip bound used for B2 (rad)
    pub beta_limit: f64,
    /// Sideslip-rate bound used for B1 (rad/s)
    pub beta_dot_limit: f64,
}

pub fn fit_envelope(params: &VehicleParams, mu: f64, vx: f64) -> Result<EnvelopeFit> {
    params.validate()?;
    let model = TwoDofModel::new(params, vx)?;

    // rear-axle static load per tire; brush tires saturate fully at
    // tan(alpha) = 3 mu Fz / C
    let wheelbase = params.wheelbase();
    let fz_rear = params.m * params.g * params.a / (2.0 * wheelbase);
    let beta_limit = (3.0 * mu * fz_rear / params.car.abs()).atan();

    // largest |beta_dot| over the admissible box |beta| <= beta_limit,
    // |phi_dot| <= phi_dot_max (the beta_dot row is linear in the state)
    let phi_dot_max = 0.85 * mu * params.g / vx;
    let beta_dot_limit =
        model.a[(0, 0)].abs() * beta_limit + model.a[(0, 1)].abs() * phi_dot_max;

    Ok(EnvelopeFit {
        b1: 1.0 / beta_dot_limit,
        b2: 1.0 / beta_limit,
        beta_limit,
        beta_dot_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn boundary_passes_through_the_axis_limits() {
        let p = VehicleParams::default();
        let fit = fit_envelope(&p, 0.6, 60.0 / 3.6).unwrap();
        // on-axis points of the fitted boundary sit exactly at the limits
        assert_relative_eq!(fit.b2 * fit.beta_limit, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.b1 * fit.beta_dot_limit, 1.0, max_relative = 1e-12);
        assert!(fit.b1 > 0.0 && fit.b2 > 0.0);
    }

    #[test]
    fn lower_grip_shrinks_the_stable_region() {
        let p = VehicleParams::default();
        let vx = 60.0 / 3.6;
        let wet = fit_envelope(&p, 0.3, vx).unwrap();
        let dry = fit_envelope(&p, 0.9, vx).unwrap();
        // smaller mu -> smaller beta_limit -> larger B2 (tighter boundary)
        assert!(wet.b2 > dry.b2);
        assert!(wet.beta_limit < dry.beta_limit);
    }

    #[test]
    fn higher_speed_tightens_the_rate_axis() {
        let p = VehicleParams::default();
        let slow = fit_envelope(&p, 0.6, 10.0).unwrap();
        let fast = fit_envelope(&p, 0.6, 30.0).unwrap();
        assert!(fast.beta_dot_limit < slow.beta_dot_limit);
        assert!(fast.b1 > slow.b1);
    }
}
