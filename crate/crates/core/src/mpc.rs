//! Linear time-varying MPC path tracking: linearize the single-track
//! prediction model at the current operating point, discretize, lift to the
//! increment form, condense the horizon to a dense QP with a slack on the
//! steer bound, solve, and apply the first increment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{RoadCondition, VehicleParams};
use crate::qp::{self, QpProblem, QpStatus};

pub const N_STATES: usize = 7;
pub const N_OUTPUTS: usize = 2;

/// MPC horizon lengths, weights and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Prediction horizon (steps)
    pub np: usize,
    /// Control horizon (steps)
    pub nc: usize,
    /// Controller sample period (s)
    pub t: f64,
    /// Heading-error weight
    pub q_theta: f64,
    /// Lateral-error weight
    pub q_y: f64,
    /// Control-increment weight
    pub r_delta: f64,
    /// Slack weight on the softened steer bound
    pub rho: f64,
    /// Steer bounds (rad)
    pub u_min: f64,
    pub u_max: f64,
    /// Per-step increment bounds (rad)
    pub du_min: f64,
    pub du_max: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            np: 20,
            nc: 5,
            t: 0.05,
            q_theta: 100.0,
            q_y: 800.0,
            r_delta: 1500.0,
            rho: 1000.0,
            u_min: -0.44,
            u_max: 0.44,
            du_min: -0.015,
            du_max: 0.015,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nc < 1 || self.nc > self.np {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= nc <= np, got nc={}, np={}",
                self.nc, self.np
            )));
        }
        if self.q_theta < 0.0 || self.q_y < 0.0 || self.r_delta < 0.0 {
            return Err(Error::InvalidParameter("weights must be >= 0".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter("rho must be > 0".into()));
        }
        if !(self.u_min < self.u_max) || !(self.du_min < 0.0 && 0.0 < self.du_max) {
            return Err(Error::InvalidParameter("bad steer bounds".into()));
        }
        Ok(())
    }
}

/// Right-hand side of the single-track prediction model with linear tire
/// forces. State order: [vy, vx, phi, phi_dot, Y, X, beta].
pub fn model_field(
    x: &[f64; N_STATES],
    delta_f: f64,
    params: &VehicleParams,
    slip_ratios: (f64, f64),
) -> [f64; N_STATES] {
    let (vy, vx, phi, phid) = (x[0], x[1], x[2], x[3]);
    let (caf, car) = (params.caf, params.car);
    let (sf, sr) = slip_ratios;
    let alpha_f = (vy + params.a * phid) / vx - delta_f;
    let alpha_r = (vy - params.b * phid) / vx;
    let (sp, cp) = phi.sin_cos();
    [
        -vx * phid + 2.0 / params.m * (caf * alpha_f + car * alpha_r),
        vy * phid + 2.0 / params.m * (params.clf * sf + caf * alpha_f * delta_f + params.clr * sr),
        phid,
        2.0 / params.iz * (params.a * caf * alpha_f - params.b * car * alpha_r),
        vx * sp + vy * cp,
        vx * cp - vy * sp,
        2.0 / (params.m * vx) * (caf * alpha_f + car * alpha_r) - phid,
    ]
}

/// Continuous-time Jacobians of the prediction model plus the fixed output
/// map selecting [theta, Y] with theta = phi + beta.
///
/// `r_c` is the affine remainder f(x0, u0) - A_c x0 - B_c u0 of the
/// first-order expansion: the nonlinear rows (trigonometric position
/// kinematics, the 1/vx force terms) are not homogeneous, so propagating
/// absolute states through the Jacobians alone mispredicts even at the
/// operating point. Carrying the remainder makes the one-step prediction
/// exact there.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub r_c: DVector<f64>,
    pub c: DMatrix<f64>,
}

/// Forward-Euler discretization: A_d = I + T A_c, B_d = T B_c, d_d = T r_c.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DVector<f64>,
    pub d_d: DVector<f64>,
    pub c: DMatrix<f64>,
}

/// State-plus-previous-input lift for the increment formulation.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DVector<f64>,
    pub d_tilde: DVector<f64>,
    pub c_tilde: DMatrix<f64>,
}

/// Condensed horizon matrices: predicted outputs
/// = Psi x_tilde + Theta dU + gamma, with gamma collecting the affine drift.
#[derive(Debug, Clone)]
pub struct PredictionMatrices {
    pub psi: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub np: usize,
    pub nc: usize,
}

pub fn output_map() -> DMatrix<f64> {
    let mut c = DMatrix::zeros(N_OUTPUTS, N_STATES);
    c[(0, 2)] = 1.0; // phi
    c[(0, 6)] = 1.0; // beta
    c[(1, 4)] = 1.0; // Y
    c
}

/// Secant cornering stiffness of the brush tire at the operating slip
/// angles: the linear-tire single-track model reproduces the true (nonlinear)
/// axle forces at the operating point when run with these values. Returns
/// signed per-tire stiffness (negative, like `VehicleParams::caf`).
pub fn corrected_cornering_stiffness(
    operating_state: &[f64; N_STATES],
    operating_input: f64,
    params: &VehicleParams,
    road: &RoadCondition,
) -> Result<(f64, f64)> {
    let (vy, vx, phid) = (operating_state[0], operating_state[1], operating_state[3]);
    if vx <= 0.5 {
        return Err(Error::DegenerateSpeed { vx, min: 0.5 });
    }
    let alpha_f = (vy + params.a * phid) / vx - operating_input;
    let alpha_r = (vy - params.b * phid) / vx;
    let fz = crate::plant::vertical_loads(0.0, 0.0, params)?;
    let secant = |alpha: f64, c_mag: f64, fz_tire: f64| -> f64 {
        if alpha.abs() < 1e-6 {
            -c_mag
        } else {
            crate::plant::brush_lateral_force(alpha, c_mag, road.mu, fz_tire) / alpha
        }
    };
    Ok((
        secant(alpha_f, params.caf.abs(), fz.fl),
        secant(alpha_r, params.car.abs(), fz.rl),
    ))
}

/// Analytic Jacobians of `model_field` at the operating point, with the
/// cornering stiffness corrected by the brush tire model for the road grip.
pub fn linearize_at(
    operating_state: &[f64; N_STATES],
    operating_input: f64,
    params: &VehicleParams,
    road: &RoadCondition,
    slip_ratios: (f64, f64),
) -> Result<LinearizedModel> {
    let (caf, car) =
        corrected_cornering_stiffness(operating_state, operating_input, params, road)?;
    linearize_with_stiffness(operating_state, operating_input, params, slip_ratios, caf, car)
}

/// Analytic Jacobians of `model_field` with explicitly supplied (signed)
/// cornering stiffness values.
pub fn linearize_with_stiffness(
    operating_state: &[f64; N_STATES],
    operating_input: f64,
    params: &VehicleParams,
    slip_ratios: (f64, f64),
    caf: f64,
    car: f64,
) -> Result<LinearizedModel> {
    let (vy, vx, phi, phid) = (
        operating_state[0],
        operating_state[1],
        operating_state[2],
        operating_state[3],
    );
    if vx <= 0.5 {
        return Err(Error::DegenerateSpeed { vx, min: 0.5 });
    }
    let (m, iz, a, b) = (params.m, params.iz, params.a, params.b);
    let df = operating_input;
    let alpha_f = (vy + a * phid) / vx - df;
    let vx2 = vx * vx;
    let (sp, cp) = phi.sin_cos();

    let mut a_c = DMatrix::<f64>::zeros(N_STATES, N_STATES);
    let mut b_c = DVector::<f64>::zeros(N_STATES);

    // vy_dot row
    a_c[(0, 0)] = 2.0 / m * (caf + car) / vx;
    a_c[(0, 1)] = -phid - 2.0 / m * (caf * (vy + a * phid) + car * (vy - b * phid)) / vx2;
    a_c[(0, 3)] = -vx + 2.0 / m * (a * caf - b * car) / vx;
    b_c[0] = -2.0 / m * caf;

    // vx_dot row
    a_c[(1, 0)] = phid + 2.0 / m * caf * df / vx;
    a_c[(1, 1)] = -2.0 / m * caf * df * (vy + a * phid) / vx2;
    a_c[(1, 3)] = vy + 2.0 / m * caf * df * a / vx;
    b_c[1] = 2.0 / m * caf * (alpha_f - df);

    // phi_dot row
    a_c[(2, 3)] = 1.0;

    // phi_ddot row
    a_c[(3, 0)] = 2.0 / iz * (a * caf - b * car) / vx;
    a_c[(3, 1)] = -2.0 / iz * (a * caf * (vy + a * phid) - b * car * (vy - b * phid)) / vx2;
    a_c[(3, 3)] = 2.0 / iz * (a * a * caf + b * b * car) / vx;
    b_c[3] = -2.0 / iz * a * caf;

    // Y_dot row
    a_c[(4, 0)] = cp;
    a_c[(4, 1)] = sp;
    a_c[(4, 2)] = vx * cp - vy * sp;

    // X_dot row
    a_c[(5, 0)] = -sp;
    a_c[(5, 1)] = cp;
    a_c[(5, 2)] = -vx * sp - vy * cp;

    // beta_dot row
    let s_force = caf * ((vy + a * phid) / vx - df) + car * (vy - b * phid) / vx;
    a_c[(6, 0)] = 2.0 / (m * vx) * (caf + car) / vx;
    a_c[(6, 1)] = -2.0 / (m * vx2) * s_force
        - 2.0 / (m * vx) * (caf * (vy + a * phid) + car * (vy - b * phid)) / vx2;
    a_c[(6, 3)] = 2.0 / (m * vx) * (a * caf - b * car) / vx - 1.0;
    b_c[6] = -2.0 / (m * vx) * caf;

    let params_eff = VehicleParams {
        caf,
        car,
        ..*params
    };
    let f0 = model_field(operating_state, operating_input, &params_eff, slip_ratios);
    let x0 = DVector::from_row_slice(operating_state);
    let r_c = DVector::from_row_slice(&f0) - &a_c * &x0 - &b_c * operating_input;

    Ok(LinearizedModel {
        a_c,
        b_c,
        r_c,
        c: output_map(),
    })
}

pub fn discretize(model: &LinearizedModel, t: f64) -> DiscreteModel {
    let n = model.a_c.nrows();
    DiscreteModel {
        d_d: t * &model.r_c,
        a_d: DMatrix::identity(n, n) + t * &model.a_c,
        b_d: t * &model.b_c,
        c: model.c.clone(),
    }
}

pub fn augment(model: &DiscreteModel) -> AugmentedModel {
    let n = model.a_d.nrows();
    let mut a_tilde = DMatrix::<f64>::zeros(n + 1, n + 1);
    a_tilde.view_mut((0, 0), (n, n)).copy_from(&model.a_d);
    for i in 0..n {
        a_tilde[(i, n)] = model.b_d[i];
    }
    a_tilde[(n, n)] = 1.0;

    let mut b_tilde = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        b_tilde[i] = model.b_d[i];
    }
    b_tilde[n] = 1.0;

    let mut d_tilde = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        d_tilde[i] = model.d_d[i];
    }

    let mut c_tilde = DMatrix::<f64>::zeros(N_OUTPUTS, n + 1);
    c_tilde
        .view_mut((0, 0), (N_OUTPUTS, n))
        .copy_from(&model.c);

    AugmentedModel {
        a_tilde,
        b_tilde,
        d_tilde,
        c_tilde,
    }
}

pub fn build_prediction(aug: &AugmentedModel, np: usize, nc: usize) -> PredictionMatrices {
    assert!(nc >= 1 && nc <= np);
    let na = aug.a_tilde.nrows();
    let mut psi = DMatrix::<f64>::zeros(N_OUTPUTS * np, na);
    let mut theta = DMatrix::<f64>::zeros(N_OUTPUTS * np, nc);

    // f_i = C A^i, g_k = C A^k B, built incrementally; the affine drift
    // accumulates as s_i = sum_{j<i} A^j d, gamma_i = C s_i.
    let mut f = aug.c_tilde.clone(); // C A^0
    let mut impulse: Vec<DVector<f64>> = Vec::with_capacity(np); // g_0 .. g_{np-1}
    impulse.push(&f * &aug.b_tilde);
    let mut gamma = DVector::<f64>::zeros(N_OUTPUTS * np);
    let mut drift = aug.d_tilde.clone(); // s_1 = d
    for i in 1..=np {
        f = &f * &aug.a_tilde;
        psi.view_mut((N_OUTPUTS * (i - 1), 0), (N_OUTPUTS, na))
            .copy_from(&f);
        let g_i = &aug.c_tilde * &drift;
        for r in 0..N_OUTPUTS {
            gamma[N_OUTPUTS * (i - 1) + r] = g_i[r];
        }
        if i < np {
            impulse.push(&f * &aug.b_tilde);
            drift = &aug.a_tilde * &drift + &aug.d_tilde;
        }
    }
    for i in 1..=np {
        for j in 1..=nc.min(i) {
            let g = &impulse[i - j];
            for r in 0..N_OUTPUTS {
                theta[(N_OUTPUTS * (i - 1) + r, j - 1)] = g[r];
            }
        }
    }
    PredictionMatrices {
        psi,
        theta,
        gamma,
        np,
        nc,
    }
}

/// Diagnostics from one QP solve, logged per control step.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub du: DVector<f64>,
    pub eps: f64,
    pub objective: f64,
    pub active_set: Vec<usize>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    /// Solver failed; the command is held at the previous value.
    InfeasibleFallback,
}

/// Build the condensed QP over z = [dU; eps].
///
/// The slack softens only the cumulative steer-bound rows; increment bounds
/// stay hard.
pub fn build_qp(
    pred: &PredictionMatrices,
    x_tilde0: &DVector<f64>,
    reference: &DVector<f64>,
    u_prev: f64,
    config: &MpcConfig,
) -> QpProblem {
    let nc = pred.nc;
    let np = pred.np;
    assert_eq!(reference.len(), N_OUTPUTS * np);
    let nz = nc + 1;

    // Q_bar diag(q_theta, q_y) per step applied through scaled Theta rows
    let mut qdiag = DVector::<f64>::zeros(N_OUTPUTS * np);
    for i in 0..np {
        qdiag[N_OUTPUTS * i] = config.q_theta;
        qdiag[N_OUTPUTS * i + 1] = config.q_y;
    }
    let err0 = &pred.psi * x_tilde0 + &pred.gamma - reference;

    let mut h = DMatrix::<f64>::zeros(nz, nz);
    let mut g = DVector::<f64>::zeros(nz);
    // H_du = 2 (Theta' Q Theta + R), g_du = 2 Theta' Q err0
    for c1 in 0..nc {
        for c2 in 0..=c1 {
            let mut acc = 0.0;
            for r in 0..N_OUTPUTS * np {
                acc += pred.theta[(r, c1)] * qdiag[r] * pred.theta[(r, c2)];
            }
            h[(c1, c2)] = 2.0 * acc;
            h[(c2, c1)] = 2.0 * acc;
        }
        h[(c1, c1)] += 2.0 * config.r_delta;
        let mut acc = 0.0;
        for r in 0..N_OUTPUTS * np {
            acc += pred.theta[(r, c1)] * qdiag[r] * err0[r];
        }
        g[c1] = 2.0 * acc;
    }
    h[(nc, nc)] = 2.0 * config.rho;

    // constraints: hard increment box, softened cumulative steer box, eps >= 0
    let m = 4 * nc + 1;
    let mut a = DMatrix::<f64>::zeros(m, nz);
    let mut b = DVector::<f64>::zeros(m);
    for k in 0..nc {
        a[(k, k)] = 1.0;
        b[k] = config.du_max;
        a[(nc + k, k)] = -1.0;
        b[nc + k] = -config.du_min;
        for j in 0..=k {
            a[(2 * nc + k, j)] = 1.0;
            a[(3 * nc + k, j)] = -1.0;
        }
        a[(2 * nc + k, nc)] = -1.0;
        b[2 * nc + k] = config.u_max - u_prev;
        a[(3 * nc + k, nc)] = -1.0;
        b[3 * nc + k] = u_prev - config.u_min;
    }
    a[(4 * nc, nc)] = -1.0;
    b[4 * nc] = 0.0;

    // Normalize the cost so KKT residuals are reported on a unit scale;
    // scaling H and g together leaves the minimizer unchanged.
    let scale = (0..nz).map(|i| h[(i, i)].abs()).fold(0.0_f64, f64::max);
    if scale > 0.0 {
        h /= scale;
        g /= scale;
    }

    QpProblem { h, g, a, b }
}

pub fn solve_qp(problem: &QpProblem, config: &MpcConfig) -> QpSolution {
    let nz = problem.h.nrows();
    let nc = nz - 1;
    // dU = 0 with eps covering any pre-existing steer-bound violation is
    // always feasible
    let mut z0 = DVector::<f64>::zeros(nz);
    let mut eps0 = 0.0_f64;
    for i in 0..problem.b.len() {
        let coef = problem.a[(i, nc)];
        if coef < 0.0 && problem.b[i] < 0.0 {
            eps0 = eps0.max(-problem.b[i] / -coef);
        }
    }
    z0[nc] = eps0 * (1.0 + 1e-9) + 1e-12;

    match qp::solve(problem, z0) {
        Ok(r) if r.status == QpStatus::Solved => QpSolution {
            du: r.z.rows(0, nc).into_owned(),
            eps: r.z[nc],
            objective: r.objective,
            active_set: r.active_set,
            status: SolveStatus::Solved,
            iterations: r.iterations,
            kkt_stationarity: r.kkt_stationarity,
            kkt_feasibility: r.kkt_feasibility,
        },
        _ => QpSolution {
            du: DVector::zeros(nc),
            eps: 0.0,
            objective: f64::NAN,
            active_set: Vec::new(),
            status: SolveStatus::InfeasibleFallback,
            iterations: 0,
            kkt_stationarity: f64::NAN,
            kkt_feasibility: f64::NAN,
        },
    }
    .clamp_first(config)
}

impl QpSolution {
    fn clamp_first(mut self, config: &MpcConfig) -> Self {
        if !self.du.is_empty() {
            self.du[0] = self.du[0].clamp(config.du_min, config.du_max);
        }
        self
    }
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone)]
pub struct MpcStep {
    pub command: f64,
    pub solution: QpSolution,
}

/// One full receding-horizon update: linearize at the current state and the
/// previous input, condense, solve, apply the first increment.
///
/// `reference_window` holds Np (theta_ref, y_ref) pairs.
/// Minimum longitudinal speed used when building the prediction model (m/s).
pub const MIN_MODEL_SPEED: f64 = 4.5;

pub fn mpc_step(
    model_state: &[f64; N_STATES],
    u_prev: f64,
    reference_window: &[(f64, f64)],
    config: &MpcConfig,
    params: &VehicleParams,
    road: &RoadCondition,
    slip_ratios: (f64, f64),
) -> Result<MpcStep> {
    config.validate()?;
    assert_eq!(reference_window.len(), config.np);

    // The lateral tire dynamics scale with 1/vx, so below a few m/s the
    // forward-difference discretization is unstable and the prediction
    // matrices blow up. Linearize (and predict) from a floored speed; the
    // plant state is untouched.
    let mut model_state = *model_state;
    model_state[1] = model_state[1].max(MIN_MODEL_SPEED);

    let lin = linearize_at(&model_state, u_prev, params, road, slip_ratios)?;
    let disc = discretize(&lin, config.t);
    let aug = augment(&disc);
    let pred = build_prediction(&aug, config.np, config.nc);

    let mut x_tilde0 = DVector::<f64>::zeros(N_STATES + 1);
    for i in 0..N_STATES {
        x_tilde0[i] = model_state[i];
    }
    x_tilde0[N_STATES] = u_prev;

    let mut reference = DVector::<f64>::zeros(N_OUTPUTS * config.np);
    for (k, &(theta_ref, y_ref)) in reference_window.iter().enumerate() {
        reference[N_OUTPUTS * k] = theta_ref;
        reference[N_OUTPUTS * k + 1] = y_ref;
    }

    let problem = build_qp(&pred, &x_tilde0, &reference, u_prev, config);
    let solution = solve_qp(&problem, config);
    let du0 = if solution.du.is_empty() {
        0.0
    } else {
        solution.du[0]
    };
    let command = (u_prev + du0).clamp(config.u_min, config.u_max);
    Ok(MpcStep { command, solution })
}
