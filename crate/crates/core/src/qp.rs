//! Dense primal active-set solver for strictly convex quadratic programs
//!
//! ```text
//! minimize   1/2 z' H z + g' z
//! subject to A z <= b
//! ```
//!
//! Problems here are small (tens of variables), so each iteration solves the
//! working-set KKT system from scratch with an LU factorization. Pivoting is
//! deterministic: ties break toward the lowest constraint index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    /// The working-set iteration hit its bound; the caller must degrade.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Indices of inequality rows binding at the solution.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    pub iterations: usize,
    /// max-norm of H z + g + A' lambda at the solution
    pub kkt_stationarity: f64,
    /// max positive violation of A z <= b at the solution
    pub kkt_feasibility: f64,
    /// max |lambda_i (A z - b)_i| over the working set
    pub kkt_complementarity: f64,
}

pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.h * z)[(0, 0)] + self.g.dot(z)
    }
}

const FEAS_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;

/// Solve the QP starting from the feasible point `z0`.
pub fn solve(problem: &QpProblem, z0: DVector<f64>) -> Result<QpResult> {
    let n = problem.h.nrows();
    let m = problem.a.nrows();
    assert_eq!(problem.h.ncols(), n);
    assert_eq!(problem.g.len(), n);
    assert_eq!(problem.b.len(), m);
    assert_eq!(z0.len(), n);

    let resid0 = &problem.a * &z0 - &problem.b;
    if resid0.iter().any(|&v| v > 1e-8) {
        return Err(Error::QpSolve(format!(
            "initial point infeasible by {:.3e}",
            resid0.max()
        )));
    }

    let mut z = z0;
    let mut working: Vec<usize> = Vec::new();
    let max_iter = 50 * (m + n).max(4);
    let mut lambda_full = DVector::<f64>::zeros(m);

    for iter in 0..max_iter {
        // equality-constrained step on the working set
        let k = working.len();
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.h);
        for (row, &ci) in working.iter().enumerate() {
            for col in 0..n {
                kkt[(n + row, col)] = problem.a[(ci, col)];
                kkt[(col, n + row)] = problem.a[(ci, col)];
            }
        }
        let mut rhs = DVector::<f64>::zeros(n + k);
        let grad = &problem.h * &z + &problem.g;
        for i in 0..n {
            rhs[i] = -grad[i];
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::QpSolve("singular working-set KKT system".into()))?;
        let p = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, k).into_owned();

        if p.amax() < STEP_TOL {
            // stationary on the working set: check multiplier signs
            let (mut min_l, mut min_idx) = (0.0_f64, None);
            for (row, &ci) in working.iter().enumerate() {
                if lambda[row] < min_l {
                    min_l = lambda[row];
                    min_idx = Some((row, ci));
                }
            }
            match min_idx {
                None => {
                    lambda_full.fill(0.0);
                    for (row, &ci) in working.iter().enumerate() {
                        lambda_full[ci] = lambda[row];
                    }
                    return Ok(finish(problem, z, working, lambda_full, iter, QpStatus::Solved));
                }
                Some((row, _)) => {
                    working.remove(row);
                }
            }
            continue;
        }

        // ratio test against constraints outside the working set
        let mut alpha = 1.0_f64;
        let mut blocking: Option<usize> = None;
        for ci in 0..m {
            if working.contains(&ci) {
                continue;
            }
            let ap = problem.a.row(ci).transpose().dot(&p);
            if ap > FEAS_TOL {
                let slack = problem.b[ci] - problem.a.row(ci).transpose().dot(&z);
                let ratio = (slack / ap).max(0.0);
                if ratio < alpha - 1e-14 {
                    alpha = ratio;
                    blocking = Some(ci);
                }
            }
        }
        z += alpha * &p;
        if let Some(ci) = blocking {
            working.push(ci);
            working.sort_unstable();
        }
    }

    lambda_full.fill(0.0);
    Ok(finish(
        problem,
        z,
        working,
        lambda_full,
        max_iter,
        QpStatus::IterationLimit,
    ))
}

fn finish(
    problem: &QpProblem,
    z: DVector<f64>,
    working: Vec<usize>,
    lambda: DVector<f64>,
    iterations: usize,
    status: QpStatus,
) -> QpResult {
    let stat = (&problem.h * &z + &problem.g + problem.a.transpose() * &lambda).amax();
    let resid = &problem.a * &z - &problem.b;
    let feas = resid.iter().cloned().fold(0.0_f64, f64::max);
    let compl = (0..problem.b.len())
        .map(|i| (lambda[i] * resid[i]).abs())
        .fold(0.0_f64, f64::max);
    let objective = problem.objective(&z);
    QpResult {
        z,
        objective,
        active_set: working,
        status,
        iterations,
        kkt_stationarity: stat,
        kkt_feasibility: feas,
        kkt_complementarity: compl,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> QpProblem {
        let n = h.nrows();
        QpProblem {
            h,
            g,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    #[test]
    fn unconstrained_equals_linear_solve() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_row_slice(&[1.0, -2.0]);
        let expect = h.clone().lu().solve(&(-&g)).unwrap();
        let r = solve(&unconstrained(h, g), DVector::zeros(2)).unwrap();
        assert_relative_eq!(r.z[0], expect[0], max_relative = 1e-9);
        assert_relative_eq!(r.z[1], expect[1], max_relative = 1e-9);
        assert!(r.kkt_stationarity < 1e-9);
    }

    #[test]
    fn single_active_bound_matches_projection() {
        // min 1/2 ||z - c||^2 s.t. z0 <= 0.5 with c = (1, 1): KKT by hand
        // gives z = (0.5, 1), lambda = 0.5
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_row_slice(&[-1.0, -1.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DVector::from_row_slice(&[0.5]);
        let r = solve(&QpProblem { h, g, a, b }, DVector::zeros(2)).unwrap();
        assert_relative_eq!(r.z[0], 0.5, max_relative = 1e-10);
        assert_relative_eq!(r.z[1], 1.0, max_relative = 1e-10);
        assert_eq!(r.active_set, vec![0]);
    }

    /// Projected-gradient oracle for box-constrained QPs; intentionally
    /// independent of the active-set path.
    pub fn pgd_box_oracle(
        h: &DMatrix<f64>,
        g: &DVector<f64>,
        lo: &DVector<f64>,
        hi: &DVector<f64>,
    ) -> DVector<f64> {
        let n = g.len();
        let lip = h.iter().map(|v| v.abs()).sum::<f64>(); // crude upper bound on ||H||
        let step = 1.0 / lip;
        let mut z = DVector::<f64>::zeros(n);
        for _ in 0..200_000 {
            let grad = h * &z + g;
            let mut znew = &z - step * grad;
            for i in 0..n {
                znew[i] = znew[i].clamp(lo[i], hi[i]);
            }
            let delta = (&znew - &z).amax();
            z = znew;
            if delta < 1e-13 {
                break;
            }
        }
        z
    }

    #[test]
    fn random_box_qps_match_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = 5;
            let m_rand = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = &m_rand * m_rand.transpose() + DMatrix::identity(n, n);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let lo = DVector::from_element(n, -0.5);
            let hi = DVector::from_element(n, 0.5);

            let mut a = DMatrix::zeros(2 * n, n);
            let mut b = DVector::zeros(2 * n);
            for i in 0..n {
                a[(i, i)] = 1.0;
                b[i] = hi[i];
                a[(n + i, i)] = -1.0;
                b[n + i] = -lo[i];
            }
            let problem = QpProblem { h: h.clone(), g: g.clone(), a, b };
            let r = solve(&problem, DVector::zeros(n)).unwrap();
            assert_eq!(r.status, QpStatus::Solved);
            assert!(r.kkt_stationarity < 1e-8, "stat {:.3e}", r.kkt_stationarity);
            assert!(r.kkt_feasibility < 1e-9);

            let z_oracle = pgd_box_oracle(&h, &g, &lo, &hi);
            let obj_oracle =
                0.5 * (z_oracle.transpose() * &h * &z_oracle)[(0, 0)] + g.dot(&z_oracle);
            let denom = obj_oracle.abs().max(1.0);
            assert!(
                (r.objective - obj_oracle).abs() / denom < 1e-6,
                "objective {} vs oracle {}",
                r.objective,
                obj_oracle
            );
        }
    }
}
