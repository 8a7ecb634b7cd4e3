use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::lm::{levenberg_marquardt, LeastSquares, Termination};
use super::metrics::{min_clearance, post_collision_check, stays_on_road};
use super::problem::{build_residuals, controls_to_vec, fill_residuals, rollout_controls, vec_to_controls, CostBreakdown, OptProblem};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::sim::{Action, VehicleState};

/// Least-squares view of an [`OptProblem`] over the flattened controls
/// `[δ_0, a_0, δ_1, a_1, …]`.
struct VehicleLsq<'a> {
    p: &'a OptProblem,
    exec: Execution,
    stamps: Vec<usize>,
}

impl LeastSquares for VehicleLsq<'_> {
    fn num_params(&self) -> usize {
        2 * self.p.horizon()
    }

    fn residuals(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(build_residuals(self.p, &vec_to_controls(z))?.flatten())
    }

    fn jacobian(&self, z: &[f64], r: &[f64], h: f64) -> Result<DMatrix<f64>> {
        causal_jacobian(self.p, z, r, h, &self.stamps, self.exec)
    }
}

/// Forward differences, one column per control entry. Perturbing control
/// step c leaves states 0..=c and every row stamped before c unchanged, so
/// only the tail is re-integrated and re-evaluated; the skipped entries
/// are exact zeros.
fn causal_jacobian(p: &OptProblem, z: &[f64], r: &[f64], h: f64, stamps: &[usize], exec: Execution) -> Result<DMatrix<f64>> {
    let a = vec_to_controls(z);
    let base = rollout_controls(p.x0, &a, p.dt, p.wheelbase)?;
    let m = r.len();
    let cols = exec.map_range(z.len(), |col| {
        let c = col / 2;
        let mut ap = a.clone();
        if col % 2 == 0 {
            ap[c].delta += h;
        } else {
            ap[c].a += h;
        }
        let mut states = base.clone();
        for k in c..ap.len() {
            states[k + 1] = crate::sim::step_single_track(states[k], ap[k], p.dt, p.wheelbase);
        }
        let mut rp = r.to_vec();
        fill_residuals(p, &ap, &states, c, &mut rp);
        let mut column = vec![0.0; m];
        for i in 0..m {
            if stamps[i] >= c {
                column[i] = (rp[i] - r[i]) / h;
            }
        }
        column
    });
    let mut j = DMatrix::zeros(m, z.len());
    for (c, col) in cols.into_iter().enumerate() {
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "jacobian", index: i });
        }
        j.set_column(c, &nalgebra::DVector::from_vec(col));
    }
    Ok(j)
}

/// Residual Jacobian with respect to the flattened controls.
pub fn jacobian(p: &OptProblem, a: &[Action], exec: Execution) -> Result<DMatrix<f64>> {
    let r = build_residuals(p, a)?.flatten();
    let stamps = p.layout().stamps();
    causal_jacobian(p, &controls_to_vec(a), &r, p.config.solver.fd_step, &stamps, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub initial_cost: f64,
    /// Cost of the delivered (clamped) controls.
    pub final_cost: f64,
    /// Delivered controls, clamped to the limits.
    pub controls: Vec<Action>,
    /// Exact forward integration of `controls` from the initial state.
    pub trajectory: Vec<VehicleState>,
    pub initial_breakdown: CostBreakdown,
    pub final_breakdown: CostBreakdown,
    /// No footprint overlap with any recorded agent at any step.
    pub post_check_passed: bool,
    pub stays_on_road: bool,
    pub min_clearance_initial: f64,
    pub min_clearance_final: f64,
    pub cost_history: Vec<f64>,
}

impl SolveReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "termination: {}", self.termination.as_str());
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let _ = writeln!(s, "initial_cost: {}", self.initial_cost);
        let _ = writeln!(s, "final_cost: {}", self.final_cost);
        for (tag, b) in [("initial", &self.initial_breakdown), ("final", &self.final_breakdown)] {
            let _ = writeln!(s, "{tag}_cost_tracking: {}", b.tracking);
            let _ = writeln!(s, "{tag}_cost_jerk: {}", b.jerk);
            let _ = writeln!(s, "{tag}_cost_collision: {}", b.collision);
            let _ = writeln!(s, "{tag}_cost_boundary: {}", b.boundary);
            let _ = writeln!(s, "{tag}_cost_limits: {}", b.limits);
        }
        let _ = writeln!(s, "min_clearance_initial: {}", self.min_clearance_initial);
        let _ = writeln!(s, "min_clearance_final: {}", self.min_clearance_final);
        let _ = writeln!(s, "post_check_passed: {}", self.post_check_passed);
        let _ = writeln!(s, "stays_on_road: {}", self.stays_on_road);
        s
    }
}

/// Runs Levenberg-Marquardt from the initial controls, clamps the result
/// to the limits, re-integrates it and checks it against the recorded
/// agents.
pub fn solve_lm(p: &OptProblem, exec: Execution) -> Result<SolveReport> {
    p.validate()?;
    let lsq = VehicleLsq {
        p,
        exec,
        stamps: p.layout().stamps(),
    };
    let initial = build_residuals(p, &p.a_init)?;
    let rep = levenberg_marquardt(&lsq, &controls_to_vec(&p.a_init), &p.config.solver)?;
    let controls: Vec<Action> = vec_to_controls(&rep.x).into_iter().map(|u| p.limits.clamp(u)).collect();
    let trajectory = rollout_controls(p.x0, &controls, p.dt, p.wheelbase)?;
    let fin = build_residuals(p, &controls)?;
    Ok(SolveReport {
        converged: rep.termination.converged(),
        termination: rep.termination,
        iterations: rep.iterations,
        initial_cost: initial.cost(),
        final_cost: fin.cost(),
        initial_breakdown: initial.breakdown(),
        final_breakdown: fin.breakdown(),
        post_check_passed: post_collision_check(&trajectory, p),
        stays_on_road: stays_on_road(&trajectory, p),
        min_clearance_initial: min_clearance(&p.x_ref, p),
        min_clearance_final: min_clearance(&trajectory, p),
        cost_history: rep.cost_history,
        controls,
        trajectory,
    })
}
