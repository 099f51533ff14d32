//! Four-wheel torque distribution: minimize summed tire adhesion utilization
//! subject to the total-force / yaw-moment equality and per-wheel torque
//! boxes.
//!
//! The effectiveness matrix maps torques to (Fx_total, Mz):
//!
//! ```text
//! A = (1/r) [ 1     1    1     1   ]
//!           [-d/2  d/2  -d/2  d/2 ]
//! ```
//!
//! so right-side torque surplus produces a positive (left-turning) moment.

use nalgebra::{Matrix2, Matrix2x4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::plant::PerWheel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationProblem {
    /// Demanded total longitudinal force (N)
    pub fx_total: f64,
    /// Demanded yaw moment (N m)
    pub mz: f64,
    /// Vertical loads (N)
    pub fz: PerWheel<f64>,
    pub mu: f64,
    /// Wheel radius (m)
    pub r: f64,
    /// Track width (m)
    pub d: f64,
    /// Motor torque limit (N m)
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelTorques {
    pub fl: f64,
    pub fr: f64,
    pub rl: f64,
    pub rr: f64,
}

impl WheelTorques {
    pub fn as_array(&self) -> [f64; 4] {
        [self.fl, self.fr, self.rl, self.rr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationStatus {
    Exact,
    /// Demand exceeded the feasible set; (Fx, Mz) were scaled down by a
    /// common factor preserving their ratio.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub torques: WheelTorques,
    pub status: AllocationStatus,
    /// Scale applied to the demand (1 when exact).
    pub scale: f64,
}

/// Per-wheel torque bound: the adhesion limit converted to torque units,
/// capped by the motor limit.
pub fn torque_bounds(fz: &PerWheel<f64>, mu: f64, r: f64, t_max: f64) -> PerWheel<f64> {
    let bound = |fz: f64| (mu * fz * r).min(t_max);
    PerWheel {
        fl: bound(fz.fl),
        fr: bound(fz.fr),
        rl: bound(fz.rl),
        rr: bound(fz.rr),
    }
}

fn effectiveness(r: f64, d: f64) -> Matrix2x4<f64> {
    Matrix2x4::new(
        1.0 / r,
        1.0 / r,
        1.0 / r,
        1.0 / r,
        -d / (2.0 * r),
        d / (2.0 * r),
        -d / (2.0 * r),
        d / (2.0 * r),
    )
}

pub fn allocate(problem: &AllocationProblem) -> Result<Allocation> {
    for fz in problem.fz.as_array() {
        if !(fz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vertical loads must be positive, got {fz}"
            )));
        }
    }
    if !(problem.r > 0.0 && problem.d > 0.0) {
        return Err(Error::InvalidParameter("r and d must be positive".into()));
    }

    let bounds = torque_bounds(&problem.fz, problem.mu, problem.r, problem.t_max);
    let bound_v = Vector4::from_iterator(bounds.as_array());
    let a = effectiveness(problem.r, problem.d);
    let demand = Vector2::new(problem.fx_total, problem.mz);

    // feasibility split: the two equality rows only constrain the left and
    // right side torque sums, so the largest demand-preserving scale has a
    // closed form
    let sum_left_req = (problem.fx_total * problem.r
        - problem.mz * 2.0 * problem.r / problem.d)
        / 2.0;
    let sum_right_req = (problem.fx_total * problem.r
        + problem.mz * 2.0 * problem.r / problem.d)
        / 2.0;
    let cap_left = bounds.fl + bounds.rl;
    let cap_right = bounds.fr + bounds.rr;
    let mut scale = 1.0_f64;
    if sum_left_req.abs() > cap_left {
        scale = scale.min(cap_left / sum_left_req.abs());
    }
    if sum_right_req.abs() > cap_right {
        scale = scale.min(cap_right / sum_right_req.abs());
    }
    let status = if scale < 1.0 {
        AllocationStatus::Scaled
    } else {
        AllocationStatus::Exact
    };
    let target = demand * scale;

    // weighted pseudo-inverse for the unconstrained minimizer of
    // sum (T/r)^2 / (mu Fz)^2, then a deterministic active set over the
    // box constraints (lowest index fixed first)
    let w_inv = Vector4::from_iterator(
        problem
            .fz
            .as_array()
            .iter()
            .map(|&fz| (problem.mu * fz * problem.r).powi(2)),
    );

    let solve_free = |fixed: &[Option<f64>; 4]| -> Option<Vector4<f64>> {
        // equality-constrained minimum over the free coordinates
        let mut n_target = target;
        for (i, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                n_target -= a.column(i) * *v;
            }
        }
        let mut awa = Matrix2::zeros();
        for i in 0..4 {
            if fixed[i].is_none() {
                awa += a.column(i) * a.column(i).transpose() * w_inv[i];
            }
        }
        let inv = awa.try_inverse()?;
        let lambda = inv * n_target;
        let mut u = Vector4::zeros();
        for i in 0..4 {
            u[i] = match fixed[i] {
                Some(v) => v,
                None => w_inv[i] * a.column(i).dot(&lambda),
            };
        }
        Some(u)
    };

    let mut fixed: [Option<f64>; 4] = [None; 4];
    let mut u = Vector4::zeros();
    for _ in 0..8 {
        u = solve_free(&fixed).ok_or_else(|| {
            Error::QpSolve("allocation equality system became singular".into())
        })?;
        // most violated free coordinate, lowest index on ties
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..4 {
            if fixed[i].is_some() {
                continue;
            }
            let over = u[i].abs() - bound_v[i];
            if over > 1e-12 {
                let better = match worst {
                    None => true,
                    Some((_, w)) => over > w + 1e-15,
                };
                if better {
                    worst = Some((i, over));
                }
            }
        }
        match worst {
            Some((i, _)) => fixed[i] = Some(bound_v[i] * u[i].signum()),
            None => break,
        }
    }

    // release fixed coordinates whose multiplier has the wrong sign would be
    // needed in general; with two independent wheel pairs sharing one
    // equality each, clamping can only move the partner further inside its
    // box, so a release never fires. Post-conditions are asserted instead.
    let resid = a * u - target;
    if resid.amax() > 1e-9 {
        return Err(Error::QpSolve(format!(
            "allocation equality residual {:.3e}",
            resid.amax()
        )));
    }
    for i in 0..4 {
        if u[i].abs() > bound_v[i] + 1e-9 {
            return Err(Error::QpSolve(format!(
                "allocation bound violated on wheel {i}: {} > {}",
                u[i].abs(),
                bound_v[i]
            )));
        }
    }

    Ok(Allocation {
        torques: WheelTorques {
            fl: u[0],
            fr: u[1],
            rl: u[2],
            rr: u[3],
        },
        status,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn equal_loads(fz: f64) -> PerWheel<f64> {
        PerWheel {
            fl: fz,
            fr: fz,
            rl: fz,
            rr: fz,
        }
    }

    fn base(fx: f64, mz: f64) -> AllocationProblem {
        AllocationProblem {
            fx_total: fx,
            mz,
            fz: equal_loads(4561.65),
            mu: 0.6,
            r: 0.3,
            d: 1.6,
            t_max: 300.0,
        }
    }

    #[test]
    fn bounds_hand_values() {
        let b = torque_bounds(&equal_loads(4000.0), 0.6, 0.3, 300.0);
        // adhesion alone would allow 720 N m; the motor limit wins
        assert_eq!(b.fl, 300.0);
        let b = torque_bounds(&equal_loads(1000.0), 0.6, 0.3, 300.0);
        assert_relative_eq!(b.fl, 180.0, max_relative = 1e-12);
    }

    #[test]
    fn bounds_monotone_in_mu() {
        let fz = equal_loads(3000.0);
        let mut last = 0.0;
        for mu in [0.1, 0.3, 0.5, 0.8, 1.0] {
            let b = torque_bounds(&fz, mu, 0.3, 500.0);
            assert!(b.fl >= last);
            last = b.fl;
        }
    }

    #[test]
    fn pure_drive_splits_equally() {
        let alloc = allocate(&base(2000.0, 0.0)).unwrap();
        let expect = 2000.0 * 0.3 / 4.0;
        for t in alloc.torques.as_array() {
            assert_relative_eq!(t, expect, max_relative = 1e-12);
        }
        assert_eq!(alloc.status, AllocationStatus::Exact);
    }

    #[test]
    fn pure_moment_is_antisymmetric() {
        let m = 800.0;
        let alloc = allocate(&base(0.0, m)).unwrap();
        let expect = m * 0.3 / (2.0 * 1.6);
        assert_relative_eq!(alloc.torques.fr, expect, max_relative = 1e-12);
        assert_relative_eq!(alloc.torques.rr, expect, max_relative = 1e-12);
        assert_relative_eq!(alloc.torques.fl, -expect, max_relative = 1e-12);
        assert_relative_eq!(alloc.torques.rl, -expect, max_relative = 1e-12);
    }

    #[test]
    fn equality_residual_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = AllocationProblem {
                fx_total: rng.gen_range(-2000.0..3000.0),
                mz: rng.gen_range(-1500.0..1500.0),
                fz: PerWheel {
                    fl: rng.gen_range(2000.0..7000.0),
                    fr: rng.gen_range(2000.0..7000.0),
                    rl: rng.gen_range(2000.0..7000.0),
                    rr: rng.gen_range(2000.0..7000.0),
                },
                mu: rng.gen_range(0.2..1.0),
                r: 0.3,
                d: 1.6,
                t_max: 300.0,
            };
            let alloc = allocate(&p).unwrap();
            let a = effectiveness(p.r, p.d);
            let u = Vector4::from_iterator(alloc.torques.as_array());
            let n = a * u;
            let target_fx = p.fx_total * alloc.scale;
            let target_mz = p.mz * alloc.scale;
            assert!((n[0] - target_fx).abs() < 1e-9);
            assert!((n[1] - target_mz).abs() < 1e-9);
            if alloc.status == AllocationStatus::Scaled {
                // the demand ratio is preserved
                if p.fx_total.abs() > 1e-9 && p.mz.abs() > 1e-9 {
                    assert_relative_eq!(
                        target_mz / target_fx,
                        p.mz / p.fx_total,
                        max_relative = 1e-9
                    );
                }
            }
        }
    }

    /// Independent oracle: projected gradient with alternating projection
    /// onto the equality set and the box (Dykstra).
    fn oracle_objective(p: &AllocationProblem, target: Vector2<f64>) -> f64 {
        let a = effectiveness(p.r, p.d);
        let bounds = torque_bounds(&p.fz, p.mu, p.r, p.t_max);
        let bv = Vector4::from_iterator(bounds.as_array());
        let w: Vec<f64> = p
            .fz
            .as_array()
            .iter()
            .map(|&fz| 1.0 / (p.mu * fz * p.r).powi(2))
            .collect();
        let project = |mut u: Vector4<f64>| -> Vector4<f64> {
            // Dykstra alternating projection: affine {Au = target} and box
            let aat_inv = (a * a.transpose()).try_inverse().unwrap();
            let mut q_box = Vector4::zeros();
            for _ in 0..600 {
                let corr = a.transpose() * (aat_inv * (a * u - target));
                u -= corr;
                let y = u + q_box;
                let mut clipped = y;
                for i in 0..4 {
                    clipped[i] = clipped[i].clamp(-bv[i], bv[i]);
                }
                q_box = y - clipped;
                u = clipped;
            }
            u
        };
        let lip = 2.0 * w.iter().cloned().fold(0.0, f64::max);
        let mut u = project(Vector4::zeros());
        for _ in 0..40_000 {
            let grad = Vector4::from_fn(|i, _| 2.0 * w[i] * u[i]);
            u = project(u - grad / lip);
        }
        (0..4).map(|i| w[i] * u[i] * u[i]).sum()
    }

    #[test]
    fn objective_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let p = AllocationProblem {
                fx_total: rng.gen_range(-1500.0..2500.0),
                mz: rng.gen_range(-1000.0..1000.0),
                fz: PerWheel {
                    fl: rng.gen_range(3000.0..6000.0),
                    fr: rng.gen_range(3000.0..6000.0),
                    rl: rng.gen_range(3000.0..6000.0),
                    rr: rng.gen_range(3000.0..6000.0),
                },
                mu: rng.gen_range(0.4..1.0),
                r: 0.3,
                d: 1.6,
                t_max: 300.0,
            };
            let alloc = allocate(&p).unwrap();
            let w: Vec<f64> = p
                .fz
                .as_array()
                .iter()
                .map(|&fz| 1.0 / (p.mu * fz * p.r).powi(2))
                .collect();
            let obj: f64 = alloc
                .torques
                .as_array()
                .iter()
                .enumerate()
                .map(|(i, &t)| w[i] * t * t)
                .sum();
            let target = Vector2::new(p.fx_total * alloc.scale, p.mz * alloc.scale);
            let oracle = oracle_objective(&p, target);
            let denom = oracle.abs().max(1e-12);
            assert!(
                (obj - oracle).abs() / denom < 1e-6,
                "obj {obj} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn scale_invariance_of_unconstrained_minimizer() {
        let p1 = AllocationProblem {
            t_max: 1e9, // keep boxes inactive
            ..base(1200.0, 400.0)
        };
        let p2 = AllocationProblem {
            mu: p1.mu * 1.7,
            ..p1
        };
        let a1 = allocate(&p1).unwrap();
        let a2 = allocate(&p2).unwrap();
        for (t1, t2) in a1.torques.as_array().iter().zip(a2.torques.as_array()) {
            assert_abs_diff_eq!(t1, &t2, epsilon = 1e-9);
        }
    }

    #[test]
    fn infeasible_demand_scales_down() {
        let alloc = allocate(&base(50_000.0, 0.0)).unwrap();
        assert_eq!(alloc.status, AllocationStatus::Scaled);
        assert!(alloc.scale < 1.0);
        for t in alloc.torques.as_array() {
            assert!(t.abs() <= 300.0 + 1e-9);
        }
    }
}
