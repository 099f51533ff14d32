//! Nonlinear double-track vehicle plant and the tire-force primitives shared
//! with the controller-side prediction model.
//!
//! The plant integrates a 3-DOF (lateral, longitudinal, yaw) body with four
//! individually driven wheels. Wheel longitudinal forces are quasi-static
//! (`Fx = T / r`); lateral forces come from a brush tire model with vertical
//! loads from a static-plus-transfer split. Force rotation and global
//! kinematics use full trigonometry; only the controllers use small-angle
//! forms, so the controller/plant model mismatch is real.

use crate::error::{Error, Result};
use crate::params::{RoadCondition, VehicleParams};

/// Minimum longitudinal speed accepted by slip-angle math (m/s).
pub const MIN_VX: f64 = 0.1;
/// Denominator clamp for slip angles inside the plant (m/s), so the 5 km/h
/// scenario start does not blow up the division.
pub const VX_CLAMP: f64 = 0.5;

/// Global pose and body-frame velocities; the single source of truth each
/// control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Global position (m)
    pub x: f64,
    pub y: f64,
    /// Yaw angle (rad)
    pub phi: f64,
    /// Body-frame velocities (m/s)
    pub vx: f64,
    pub vy: f64,
    /// Yaw rate (rad/s)
    pub phi_dot: f64,
}

impl PlantState {
    /// Sideslip angle, derived as vy/vx.
    pub fn beta(&self) -> f64 {
        self.vy / self.vx
    }

    /// The 7-vector [vy, vx, phi, phi_dot, Y, X, beta] used by the MPC
    /// prediction model.
    pub fn to_model_vector(&self) -> [f64; 7] {
        [
            self.vy,
            self.vx,
            self.phi,
            self.phi_dot,
            self.y,
            self.x,
            self.beta(),
        ]
    }
}

/// Commands held constant over a plant integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs {
    /// Front steer angle (rad)
    pub delta_f: f64,
    /// Wheel torques (N m), order [fl, fr, rl, rr]
    pub wheel_torques: [f64; 4],
}

/// A quantity evaluated per wheel, order fl, fr, rl, rr.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerWheel<T> {
    pub fl: T,
    pub fr: T,
    pub rl: T,
    pub rr: T,
}

impl<T: Copy> PerWheel<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.fl, self.fr, self.rl, self.rr]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self {
            fl: a[0],
            fr: a[1],
            rl: a[2],
            rr: a[3],
        }
    }
}

/// Per-wheel force state, reported for logging and allocation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelForces {
    /// Longitudinal force in the wheel frame (N)
    pub fx: PerWheel<f64>,
    /// Lateral force in the wheel frame (N)
    pub fy: PerWheel<f64>,
    /// Vertical load (N)
    pub fz: PerWheel<f64>,
    /// Slip angle (rad)
    pub alpha: PerWheel<f64>,
}

/// Per-wheel slip angles for the double-track layout. Left/right wheels see
/// the track-width correction `+/- (d/2) phi_dot` in the denominator velocity.
pub fn wheel_slip_angles(
    state: &PlantState,
    delta_f: f64,
    params: &VehicleParams,
) -> Result<PerWheel<f64>> {
    if state.vx <= MIN_VX {
        return Err(Error::DegenerateSpeed {
            vx: state.vx,
            min: MIN_VX,
        });
    }
    let half_d = params.d / 2.0;
    let vx_left = (state.vx - half_d * state.phi_dot).max(VX_CLAMP);
    let vx_right = (state.vx + half_d * state.phi_dot).max(VX_CLAMP);
    let front = |vxw: f64| (state.vy + params.a * state.phi_dot) / vxw - delta_f;
    let rear = |vxw: f64| (state.vy - params.b * state.phi_dot) / vxw;
    Ok(PerWheel {
        fl: front(vx_left),
        fr: front(vx_right),
        rl: rear(vx_left),
        rr: rear(vx_right),
    })
}

/// Brush-model lateral force for one tire.
///
/// Cubic below the saturation slip angle `arctan(3 mu Fz / C)`, friction
/// limited `-mu Fz sgn(alpha)` beyond it; continuous across the boundary.
/// `c_alpha_mag` is the stiffness magnitude (positive).
pub fn brush_lateral_force(alpha: f64, c_alpha_mag: f64, mu: f64, fz: f64) -> f64 {
    debug_assert!(c_alpha_mag > 0.0 && mu > 0.0 && fz > 0.0);
    let limit = 3.0 * mu * fz / c_alpha_mag;
    let t = alpha.tan();
    if t.abs() < limit {
        -c_alpha_mag * t + c_alpha_mag.powi(2) / (3.0 * mu * fz) * t.abs() * t
            - c_alpha_mag.powi(3) / (27.0 * mu.powi(2) * fz.powi(2)) * t.powi(3)
    } else {
        -mu * fz * alpha.signum()
    }
}

/// Linear tire lateral force, `Fy = C_alpha * alpha` with the signed
/// (negative) stiffness convention.
pub fn linear_lateral_force(alpha: f64, c_alpha_signed: f64) -> f64 {
    c_alpha_signed * alpha
}

/// Static vertical load split plus longitudinal and lateral transfer.
/// The four loads sum to `m g` exactly for any accelerations.
pub fn vertical_loads(ax: f64, ay: f64, params: &VehicleParams) -> Result<PerWheel<f64>> {
    let l = params.wheelbase();
    let front_static = params.m * params.g * params.b / (2.0 * l);
    let rear_static = params.m * params.g * params.a / (2.0 * l);
    // ax > 0 unloads the front axle; ay > 0 (leftward) loads the right side
    let dlong = params.m * ax * params.h_cg / (2.0 * l);
    let dlat = params.m * ay * params.h_cg / (2.0 * params.d);
    let loads = PerWheel {
        fl: front_static - dlong - dlat,
        fr: front_static - dlong + dlat,
        rl: rear_static + dlong - dlat,
        rr: rear_static + dlong + dlat,
    };
    for (name, fz) in [
        ("fl", loads.fl),
        ("fr", loads.fr),
        ("rl", loads.rl),
        ("rr", loads.rr),
    ] {
        if fz <= 0.0 {
            return Err(Error::RolloverRegime {
                wheel: name,
                fz,
                ax,
                ay,
            });
        }
    }
    Ok(loads)
}

/// Tire model used by the plant derivative. The linear variant exists for
/// verification against the single-track prediction model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TireModel {
    #[default]
    Brush,
    Linear,
}

/// Time derivative of the plant state together with the wheel force state
/// that produced it.
#[derive(Debug, Clone, Copy)]
pub struct PlantDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dphi: f64,
    pub dvx: f64,
    pub dvy: f64,
    pub dphi_dot: f64,
    pub forces: WheelForces,
}

impl PlantDerivative {
    /// Sideslip-angle rate implied by the body derivatives.
    pub fn beta_dot(&self, state: &PlantState) -> f64 {
        (self.dvy * state.vx - state.vy * self.dvx) / (state.vx * state.vx)
    }
}

pub fn plant_derivative(
    state: &PlantState,
    inputs: &PlantInputs,
    road: &RoadCondition,
    params: &VehicleParams,
) -> Result<PlantDerivative> {
    plant_derivative_with(state, inputs, road, params, TireModel::Brush)
}

pub fn plant_derivative_with(
    state: &PlantState,
    inputs: &PlantInputs,
    road: &RoadCondition,
    params: &VehicleParams,
    tire: TireModel,
) -> Result<PlantDerivative> {
    let alpha = wheel_slip_angles(state, inputs.delta_f, params)?;

    // Quasi-static load estimate: longitudinal accel from commanded torque,
    // lateral accel from the steady-state centripetal term.
    let torque_sum: f64 = inputs.wheel_torques.iter().sum();
    let ax_est = torque_sum / (params.r * params.m);
    let ay_est = state.vx * state.phi_dot;
    let fz = vertical_loads(ax_est, ay_est, params)?;

    // Per-wheel stiffness magnitude: Table-style values are per axle used
    // with a factor 2 in the single-track equations, i.e. per tire.
    let c_front = params.caf.abs();
    let c_rear = params.car.abs();
    let mu = road.mu;

    let lateral = |a: f64, c: f64, fz: f64| match tire {
        TireModel::Brush => brush_lateral_force(a, c, mu, fz),
        TireModel::Linear => linear_lateral_force(a, -c),
    };

    let mut fx_w = PerWheel::from_array([
        inputs.wheel_torques[0] / params.r,
        inputs.wheel_torques[1] / params.r,
        inputs.wheel_torques[2] / params.r,
        inputs.wheel_torques[3] / params.r,
    ]);
    let mut fy_w = PerWheel {
        fl: lateral(alpha.fl, c_front, fz.fl),
        fr: lateral(alpha.fr, c_front, fz.fr),
        rl: lateral(alpha.rl, c_rear, fz.rl),
        rr: lateral(alpha.rr, c_rear, fz.rr),
    };

    // Friction-circle clamp: longitudinal demand keeps priority, lateral
    // force is limited to what is left of the adhesion budget. Linear tires
    // stay unclamped so the reduction checks are exact.
    if tire == TireModel::Brush {
        let clamp_pair = |fx: &mut f64, fy: &mut f64, fz: f64| {
            let cap = mu * fz;
            if fx.abs() > cap {
                *fx = cap * fx.signum();
            }
            let avail = (cap * cap - *fx * *fx).max(0.0).sqrt();
            if fy.abs() > avail {
                *fy = avail * fy.signum();
            }
        };
        clamp_pair(&mut fx_w.fl, &mut fy_w.fl, fz.fl);
        clamp_pair(&mut fx_w.fr, &mut fy_w.fr, fz.fr);
        clamp_pair(&mut fx_w.rl, &mut fy_w.rl, fz.rl);
        clamp_pair(&mut fx_w.rr, &mut fy_w.rr, fz.rr);
    }

    // Rotate the front wheel forces into the body frame (full trigonometry).
    let (sd, cd) = inputs.delta_f.sin_cos();
    let rot_front = |fx: f64, fy: f64| (fx * cd - fy * sd, fx * sd + fy * cd);
    let (fx_fl_b, fy_fl_b) = rot_front(fx_w.fl, fy_w.fl);
    let (fx_fr_b, fy_fr_b) = rot_front(fx_w.fr, fy_w.fr);
    let (fx_rl_b, fy_rl_b) = (fx_w.rl, fy_w.rl);
    let (fx_rr_b, fy_rr_b) = (fx_w.rr, fy_w.rr);

    let sum_fx = fx_fl_b + fx_fr_b + fx_rl_b + fx_rr_b;
    let sum_fy = fy_fl_b + fy_fr_b + fy_rl_b + fy_rr_b;
    let yaw_moment = params.a * (fy_fl_b + fy_fr_b) - params.b * (fy_rl_b + fy_rr_b)
        + (params.d / 2.0) * ((fx_fr_b + fx_rr_b) - (fx_fl_b + fx_rl_b));

    let (sp, cp) = state.phi.sin_cos();
    Ok(PlantDerivative {
        dx: state.vx * cp - state.vy * sp,
        dy: state.vx * sp + state.vy * cp,
        dphi: state.phi_dot,
        dvx: state.vy * state.phi_dot + sum_fx / params.m,
        dvy: -state.vx * state.phi_dot + sum_fy / params.m,
        dphi_dot: yaw_moment / params.iz,
        forces: WheelForces {
            fx: fx_w,
            fy: fy_w,
            fz,
            alpha,
        },
    })
}

/// Classical 4th-order Runge-Kutta advance with inputs held over `dt`.
pub fn integrate_step(
    state: &PlantState,
    inputs: &PlantInputs,
    road: &RoadCondition,
    params: &VehicleParams,
    dt: f64,
) -> Result<PlantState> {
    debug_assert!(dt > 0.0 && dt <= 0.01);
    let add = |s: &PlantState, k: &PlantDerivative, h: f64| PlantState {
        x: s.x + h * k.dx,
        y: s.y + h * k.dy,
        phi: s.phi + h * k.dphi,
        vx: s.vx + h * k.dvx,
        vy: s.vy + h * k.dvy,
        phi_dot: s.phi_dot + h * k.dphi_dot,
    };
    let k1 = plant_derivative(state, inputs, road, params)?;
    let k2 = plant_derivative(&add(state, &k1, dt / 2.0), inputs, road, params)?;
    let k3 = plant_derivative(&add(state, &k2, dt / 2.0), inputs, road, params)?;
    let k4 = plant_derivative(&add(state, &k3, dt), inputs, road, params)?;
    Ok(PlantState {
        x: state.x + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: state.y + dt / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        phi: state.phi + dt / 6.0 * (k1.dphi + 2.0 * k2.dphi + 2.0 * k3.dphi + k4.dphi),
        vx: state.vx + dt / 6.0 * (k1.dvx + 2.0 * k2.dvx + 2.0 * k3.dvx + k4.dvx),
        vy: state.vy + dt / 6.0 * (k1.dvy + 2.0 * k2.dvy + 2.0 * k3.dvy + k4.dvy),
        phi_dot: state.phi_dot
            + dt / 6.0 * (k1.dphi_dot + 2.0 * k2.dphi_dot + 2.0 * k3.dphi_dot + k4.dphi_dot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    fn straight(vx: f64) -> PlantState {
        PlantState {
            vx,
            ..Default::default()
        }
    }

    #[test]
    fn slip_angles_straight_rolling_are_zero() {
        let a = wheel_slip_angles(&straight(10.0), 0.0, &params()).unwrap();
        for v in a.as_array() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn slip_angles_pure_steer() {
        let a = wheel_slip_angles(&straight(10.0), 0.05, &params()).unwrap();
        assert_abs_diff_eq!(a.fl, -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(a.fr, -0.05, epsilon = 1e-15);
        assert_eq!(a.rl, 0.0);
        assert_eq!(a.rr, 0.0);
    }

    #[test]
    fn slip_angles_hand_case_single_track() {
        // d -> 0 collapses left/right to the single-track expressions
        let p = VehicleParams {
            d: 1e-12,
            ..params()
        };
        let s = PlantState {
            vx: 10.0,
            vy: 0.5,
            phi_dot: 0.1,
            ..Default::default()
        };
        let a = wheel_slip_angles(&s, 0.0, &p).unwrap();
        assert_relative_eq!(a.fl, 0.06232, max_relative = 1e-9);
        assert_relative_eq!(a.rl, 0.03532, max_relative = 1e-9);
    }

    #[test]
    fn slip_angles_degenerate_speed_errors() {
        let e = wheel_slip_angles(&straight(0.05), 0.0, &params());
        assert!(matches!(e, Err(Error::DegenerateSpeed { .. })));
    }

    #[test]
    fn brush_is_odd_and_zero_at_origin() {
        assert_eq!(brush_lateral_force(0.0, 77_223.0, 0.6, 4560.0), 0.0);
        for a in [0.005, 0.02, 0.08, 0.3, 1.0] {
            let fp = brush_lateral_force(a, 77_223.0, 0.6, 4560.0);
            let fm = brush_lateral_force(-a, 77_223.0, 0.6, 4560.0);
            assert_abs_diff_eq!(fp, -fm, epsilon = 1e-9);
        }
    }

    #[test]
    fn brush_continuous_at_branch_boundary() {
        let (c, mu, fz): (f64, f64, f64) = (77_223.0, 0.6, 4560.0);
        let a_sat = (3.0 * mu * fz / c).atan();
        let below = brush_lateral_force(a_sat - 1e-9, c, mu, fz);
        let above = brush_lateral_force(a_sat + 1e-9, c, mu, fz);
        assert_relative_eq!(below, -mu * fz, max_relative = 1e-6);
        assert_relative_eq!(above, -mu * fz, max_relative = 1e-12);
    }

    #[test]
    fn brush_matches_high_precision_cubic() {
        // independent evaluation of the cubic at alpha = 0.02:
        // t = tan(0.02) = 0.020002667093...; with C = 77223, mu = 0.6,
        // Fz = 4560 the three terms are -1544.666 + 290.690 - 18.234,
        // about -1272.21
        let f = brush_lateral_force(0.02, 77_223.0, 0.6, 4560.0);
        let t = 0.02f64.tan();
        let (c, mu, fz) = (77_223.0f64, 0.6, 4560.0);
        let oracle =
            -c * t + c * c / (3.0 * mu * fz) * t.abs() * t - c * c * c / (27.0 * mu * mu * fz * fz) * t * t * t;
        assert_relative_eq!(f, oracle, max_relative = 1e-14);
        assert!((f - -1272.21).abs() < 0.5, "f = {f}");
    }

    #[test]
    fn brush_bounded_by_adhesion() {
        let (c, mu, fz) = (66_782.0, 0.8, 5000.0);
        let mut a = -1.5;
        while a <= 1.5 {
            assert!(brush_lateral_force(a, c, mu, fz).abs() <= mu * fz + 1e-9);
            a += 0.001;
        }
    }

    #[test]
    fn linear_force_hand_case() {
        assert_eq!(linear_lateral_force(0.0, -77_223.0), 0.0);
        assert_relative_eq!(
            linear_lateral_force(0.01, -77_223.0),
            -772.23,
            max_relative = 1e-12
        );
    }

    #[test]
    fn brush_slope_at_origin_matches_linear() {
        let (c, mu, fz) = (77_223.0, 0.6, 4560.0);
        let h = 1e-7;
        let slope = (brush_lateral_force(h, c, mu, fz) - brush_lateral_force(-h, c, mu, fz)) / (2.0 * h);
        assert_relative_eq!(slope, -c, max_relative = 1e-6);
    }

    #[test]
    fn static_loads_hand_case() {
        let p = params();
        let fz = vertical_loads(0.0, 0.0, &p).unwrap();
        let expect_front = 1860.0 * 9.81 * 1.468 / (2.0 * 2.7);
        assert_relative_eq!(fz.fl, expect_front, max_relative = 1e-12);
        assert_relative_eq!(fz.fr, expect_front, max_relative = 1e-12);
        assert!((fz.fl - 4960.4).abs() < 0.1);
    }

    #[test]
    fn loads_sum_to_weight() {
        let p = params();
        for (ax, ay) in [(0.0, 0.0), (2.0, 0.0), (0.0, 4.0), (-3.0, 5.0), (1.5, -6.0)] {
            let fz = vertical_loads(ax, ay, &p).unwrap();
            let total: f64 = fz.as_array().iter().sum();
            assert_relative_eq!(total, p.m * p.g, max_relative = 1e-12);
        }
    }

    #[test]
    fn extreme_lateral_accel_is_rollover_error() {
        let e = vertical_loads(0.0, 60.0, &params());
        assert!(matches!(e, Err(Error::RolloverRegime { .. })));
    }

    #[test]
    fn derivative_symmetric_straight_drive() {
        let p = params();
        let road = RoadCondition { mu: 0.8 };
        let inputs = PlantInputs {
            delta_f: 0.0,
            wheel_torques: [50.0; 4],
        };
        let d = plant_derivative(&straight(15.0), &inputs, &road, &p).unwrap();
        assert_abs_diff_eq!(d.dvy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.dphi_dot, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.dvx, 200.0 / (0.3 * 1860.0), max_relative = 1e-12);
    }

    #[test]
    fn torque_differential_yaws_the_body() {
        let p = params();
        let road = RoadCondition { mu: 0.8 };
        let inputs = PlantInputs {
            delta_f: 0.0,
            wheel_torques: [0.0, 60.0, 0.0, 60.0], // right side only
        };
        let d = plant_derivative(&straight(15.0), &inputs, &road, &p).unwrap();
        let dfx = 120.0 / p.r;
        assert_relative_eq!(d.dphi_dot, (p.d / 2.0) * dfx / p.iz, max_relative = 1e-12);
    }

    #[test]
    fn integrate_straight_coasting() {
        let p = params();
        let road = RoadCondition { mu: 0.8 };
        let s0 = straight(12.0);
        let inputs = PlantInputs::default();
        let mut s = s0;
        for _ in 0..100 {
            s = integrate_step(&s, &inputs, &road, &p, 0.001).unwrap();
        }
        assert_relative_eq!(s.x, 12.0 * 0.1, max_relative = 1e-12);
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.vx, 12.0, max_relative = 1e-12);
    }

    #[test]
    fn rk4_richardson_order_check() {
        // 1 s steer pulse; halving dt must shrink the end-state difference
        // by roughly 2^4
        let p = params();
        let road = RoadCondition { mu: 0.8 };
        let inputs = PlantInputs {
            delta_f: 0.03,
            wheel_torques: [20.0; 4],
        };
        let run = |dt: f64| {
            let mut s = straight(15.0);
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                s = integrate_step(&s, &inputs, &road, &p, dt).unwrap();
            }
            s
        };
        let coarse = run(0.008);
        let mid = run(0.004);
        let fine = run(0.002);
        let e1 = (coarse.y - fine.y).abs();
        let e2 = (mid.y - fine.y).abs();
        // O(dt^4): ratio of successive errors should be near 16 (allow slack)
        assert!(e1 / e2 > 8.0, "e1 = {e1:.3e}, e2 = {e2:.3e}");
    }

    #[test]
    fn determinism_bitwise() {
        let p = params();
        let road = RoadCondition { mu: 0.6 };
        let inputs = PlantInputs {
            delta_f: 0.02,
            wheel_torques: [30.0, 35.0, 25.0, 40.0],
        };
        let run = || {
            let mut s = straight(18.0);
            for _ in 0..500 {
                s = integrate_step(&s, &inputs, &road, &p, 0.001).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }
}
