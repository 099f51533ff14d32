//! Closed-loop scenario runner: plant + path-tracking MPC + yaw-moment
//! control + torque allocation, advanced at a fixed controller period with
//! plant substeps in between.

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, AllocationProblem};
use crate::dyc::{reference_yaw_rate, DycConfig, DycController};
use crate::error::{Error, Result};
use crate::harness::log::{SimLog, StepRecord};
use crate::harness::path::{PathReference, SpeedProfile};
use crate::mpc::{mpc_step, MpcConfig, SolveStatus};
use crate::params::{RoadCondition, VehicleParams};
use crate::plant::{integrate_step, plant_derivative, vertical_loads, PlantInputs, PlantState};
use crate::scheduler::ScheduleTable;

/// Which controller stack runs the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "LTV_MPC")]
    LtvMpc,
    #[serde(rename = "AMPC")]
    Ampc,
    #[serde(rename = "LTV_MPC+DYC")]
    LtvMpcDyc,
    #[serde(rename = "AMPC+DYC")]
    AmpcDyc,
}

impl ControllerKind {
    pub fn adaptive(self) -> bool {
        matches!(self, Self::Ampc | Self::AmpcDyc)
    }

    pub fn has_dyc(self) -> bool {
        matches!(self, Self::LtvMpcDyc | Self::AmpcDyc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LtvMpc => "LTV_MPC",
            Self::Ampc => "AMPC",
            Self::LtvMpcDyc => "LTV_MPC+DYC",
            Self::AmpcDyc => "AMPC+DYC",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LTV_MPC" => Ok(Self::LtvMpc),
            "AMPC" => Ok(Self::Ampc),
            "LTV_MPC+DYC" => Ok(Self::LtvMpcDyc),
            "AMPC+DYC" => Ok(Self::AmpcDyc),
            other => Err(Error::Config(format!(
                "unknown controller {other:?}; expected LTV_MPC, AMPC, LTV_MPC+DYC or AMPC+DYC"
            ))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Speed-tracking PI gains (force command per unit speed error).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedPiConfig {
    pub kp: f64,
    pub ki: f64,
}

impl Default for SpeedPiConfig {
    fn default() -> Self {
        Self {
            kp: 3000.0,
            ki: 400.0,
        }
    }
}

/// PI state with conditional-integration anti-windup; output clamped to the
/// total drive-force capability 4 Tmax / r.
struct SpeedPi {
    cfg: SpeedPiConfig,
    integ: f64,
    limit: f64,
}

impl SpeedPi {
    fn new(cfg: SpeedPiConfig, params: &VehicleParams) -> Self {
        Self {
            cfg,
            integ: 0.0,
            limit: 4.0 * params.t_max / params.r,
        }
    }

    fn update(&mut self, err: f64, dt: f64) -> f64 {
        let unsat = self.cfg.kp * err + self.integ;
        let out = unsat.clamp(-self.limit, self.limit);
        let winding_up = (unsat >= self.limit && err > 0.0) || (unsat <= -self.limit && err < 0.0);
        if !winding_up {
            self.integ += self.cfg.ki * err * dt;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

/// Full description of one closed-loop experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub controller: ControllerKind,
    pub mu: f64,
    pub duration_s: f64,
    /// Optional early stop once the vehicle passes this station (m).
    pub stop_station_m: Option<f64>,
    /// Plant integration step (s); must divide the controller period.
    pub plant_dt: f64,
    pub path: PathReference,
    pub speed: SpeedProfile,
    pub speed_pi: SpeedPiConfig,
    pub initial: InitialState,
    pub vehicle: VehicleParams,
    pub mpc: MpcConfig,
    pub schedule: ScheduleTable,
    pub dyc: DycConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            controller: ControllerKind::Ampc,
            mu: 0.6,
            duration_s: 15.0,
            stop_station_m: None,
            plant_dt: 0.001,
            path: PathReference::standard_dlc(),
            speed: SpeedProfile::Constant { v_kmh: 18.0 },
            speed_pi: SpeedPiConfig::default(),
            initial: InitialState::default(),
            vehicle: VehicleParams::default(),
            mpc: MpcConfig::default(),
            schedule: ScheduleTable::default(),
            dyc: DycConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        RoadCondition::new(self.mu)?;
        self.vehicle.validate()?;
        self.speed.validate()?;
        self.mpc.validate()?;
        self.schedule.validate()?;
        self.dyc.envelope.validate()?;
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.plant_dt > 0.0) {
            return Err(Error::Config("plant_dt must be positive".into()));
        }
        let ratio = self.mpc.t / self.plant_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config(format!(
                "controller period {} must be an integer multiple of plant_dt {}",
                self.mpc.t, self.plant_dt
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }
}

/// Run one scenario to completion. Configuration problems error out; runtime
/// failures (degenerate plant states, solver breakdowns) return the partial
/// log with `aborted` set.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimLog> {
    config.validate()?;
    let params = &config.vehicle;
    let road = RoadCondition::new(config.mu)?;
    let t_ctrl = config.mpc.t;
    let substeps = (t_ctrl / config.plant_dt).round() as usize;
    let n_steps = (config.duration_s / t_ctrl).round() as usize;

    let mut state = PlantState {
        x: config.initial.x,
        y: config.initial.y,
        phi: config.initial.phi,
        vx: config.speed.target_ms(config.initial.x),
        vy: 0.0,
        phi_dot: 0.0,
    };
    let mut u_prev = 0.0;
    let mut pi = SpeedPi::new(config.speed_pi, params);
    let mut dyc = DycController::new(config.dyc);
    let mut log = SimLog::default();

    for k in 0..n_steps {
        let t = k as f64 * t_ctrl;
        if let Some(stop) = config.stop_station_m {
            if state.x >= stop {
                break;
            }
        }

        let abort = |msg: String, log: &mut SimLog| {
            log.aborted = Some(format!("t = {t:.3} s: {msg}"));
        };

        // upper layer: (adaptive) path-tracking MPC
        let mut mpc_cfg = config.mpc;
        if config.controller.adaptive() {
            let s = config.schedule.schedule_params(state.vx);
            mpc_cfg.np = s.np;
            mpc_cfg.q_y = s.q_y;
            mpc_cfg.r_delta = s.r_delta;
            mpc_cfg.nc = mpc_cfg.nc.min(s.np);
        }
        let refs: Vec<(f64, f64)> = (1..=mpc_cfg.np)
            .map(|i| {
                let xs = state.x + state.vx * t_ctrl * i as f64;
                let (y_ref, theta_ref) = config.path.reference_at(xs);
                (theta_ref, y_ref)
            })
            .collect();
        let model_state = state.to_model_vector();
        let step = match mpc_step(&model_state, u_prev, &refs, &mpc_cfg, params, &road, (0.0, 0.0))
        {
            Ok(s) => s,
            Err(e) => {
                abort(format!("mpc: {e}"), &mut log);
                break;
            }
        };
        let delta_f = step.command;

        // lower layer: yaw-rate reference, intervention, yaw moment
        let (phi_dot_d, phi_dot_ref, mz_cmd, dyc_active) = if config.controller.has_dyc() {
            let beta_dot = match plant_derivative(
                &state,
                &PlantInputs {
                    delta_f,
                    wheel_torques: [0.0; 4],
                },
                &road,
                params,
            ) {
                Ok(d) => d.beta_dot(&state),
                Err(e) => {
                    abort(format!("plant derivative: {e}"), &mut log);
                    break;
                }
            };
            match dyc.step(
                state.beta(),
                state.phi_dot,
                beta_dot,
                delta_f,
                state.vx,
                config.mu,
                params,
            ) {
                Ok((cmd, d, r)) => (d, r, cmd.mz, cmd.active),
                Err(e) => {
                    abort(format!("dyc: {e}"), &mut log);
                    break;
                }
            }
        } else {
            match reference_yaw_rate(state.vx, delta_f, config.mu, params) {
                Ok((d, r)) => (d, r, 0.0, false),
                Err(e) => {
                    abort(format!("yaw reference: {e}"), &mut log);
                    break;
                }
            }
        };

        // longitudinal demand and torque split
        let v_target = config.speed.target_ms(state.x);
        let fx_total = pi.update(v_target - state.vx, t_ctrl);
        let fz = match vertical_loads(fx_total / params.m, state.vx * state.phi_dot, params) {
            Ok(fz) => fz,
            Err(e) => {
                abort(format!("loads: {e}"), &mut log);
                break;
            }
        };
        let alloc = match allocate(&AllocationProblem {
            fx_total,
            mz: mz_cmd,
            fz,
            mu: config.mu,
            r: params.r,
            d: params.d,
            t_max: params.t_max,
        }) {
            Ok(a) => a,
            Err(e) => {
                abort(format!("allocation: {e}"), &mut log);
                break;
            }
        };
        let torques = alloc.torques.as_array();

        let (y_ref_here, _) = config.path.reference_at(state.x);
        log.records.push(StepRecord {
            t,
            x: state.x,
            y: state.y,
            phi: state.phi,
            vx: state.vx,
            vy: state.vy,
            beta: state.beta(),
            phi_dot: state.phi_dot,
            phi_dot_d,
            phi_dot_ref,
            delta_f,
            mz: mz_cmd * alloc.scale,
            torque_fl: torques[0],
            torque_fr: torques[1],
            torque_rl: torques[2],
            torque_rr: torques[3],
            lateral_err: state.y - y_ref_here,
            yaw_rate_err: state.phi_dot - phi_dot_ref,
            dyc_active,
            np: mpc_cfg.np,
            q_y: mpc_cfg.q_y,
            r_delta: mpc_cfg.r_delta,
            qp_iterations: step.solution.iterations,
            qp_status: match step.solution.status {
                SolveStatus::Solved => 0,
                SolveStatus::InfeasibleFallback => 1,
            },
            qp_eps: step.solution.eps,
            qp_kkt_stationarity: step.solution.kkt_stationarity,
            qp_kkt_feasibility: step.solution.kkt_feasibility,
        });

        // plant substeps with commands held (zero-order hold)
        let inputs = PlantInputs {
            delta_f,
            wheel_torques: torques,
        };
        let mut failed = false;
        for _ in 0..substeps {
            match integrate_step(&state, &inputs, &road, params, config.plant_dt) {
                Ok(next) => state = next,
                Err(e) => {
                    abort(format!("plant: {e}"), &mut log);
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }
        let finite = [state.x, state.y, state.phi, state.vx, state.vy, state.phi_dot]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            abort("plant state diverged to non-finite values".into(), &mut log);
            break;
        }
        u_prev = delta_f;
    }

    Ok(log)
}

/// Swept MPC parameter for the comparative single-parameter studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Np,
    QY,
    RDelta,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Np" | "np" => Ok(Self::Np),
            "Q_y" | "q_y" => Ok(Self::QY),
            "R_delta" | "r_delta" => Ok(Self::RDelta),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected Np, Q_y or R_delta"
            ))),
        }
    }
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            Self::Np => "Np",
            Self::QY => "Q_y",
            Self::RDelta => "R_delta",
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            Self::Np => {
                cfg.mpc.np = value.round().max(1.0) as usize;
                cfg.mpc.nc = cfg.mpc.nc.min(cfg.mpc.np);
            }
            Self::QY => cfg.mpc.q_y = value,
            Self::RDelta => cfg.mpc.r_delta = value,
        }
    }
}

/// One run per value, varying only the chosen parameter. Per-value failures
/// are reported in place without aborting the rest of the family.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    base: &ScenarioConfig,
) -> Vec<(f64, Result<SimLog>)> {
    values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, v);
            cfg.name = format!("{}_{}_{v}", base.name, param.label());
            (v, run_scenario(&cfg))
        })
        .collect()
}
