//! Levenberg-Marquardt for unconstrained nonlinear least squares,
//! minimizing the cost ‖r(x)‖².

use nalgebra::{DMatrix, DVector};

use super::config::LmSettings;
use crate::error::{Error, Result};

/// Damping beyond which no descent step is considered reachable.
const LAMBDA_MAX: f64 = 1e16;

/// Gain ratios this close to one mean the quadratic model was exact for
/// the step just taken; the next trial then uses the undamped Gauss-Newton
/// step.
const EXACT_MODEL_TOLERANCE: f64 = 1e-3;

pub trait LeastSquares {
    fn num_params(&self) -> usize;

    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Jacobian of the residuals at `x`, where `r = residuals(x)`.
    fn jacobian(&self, x: &[f64], r: &[f64], step: f64) -> Result<DMatrix<f64>> {
        forward_difference_jacobian(self, x, r, step)
    }
}

pub fn forward_difference_jacobian<P: LeastSquares + ?Sized>(p: &P, x: &[f64], r: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(r.len(), x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + step;
        let rp = p.residuals(&xp)?;
        for (i, (a, b)) in rp.iter().zip(r).enumerate() {
            j[(i, c)] = (a - b) / step;
        }
        xp[c] = x[c];
    }
    Ok(j)
}

pub fn central_difference_jacobian<P: LeastSquares + ?Sized>(p: &P, x: &[f64], m: usize, step: f64) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + step;
        let rp = p.residuals(&xp)?;
        xp[c] = x[c] - step;
        let rm = p.residuals(&xp)?;
        for i in 0..m {
            j[(i, c)] = (rp[i] - rm[i]) / (2.0 * step);
        }
        xp[c] = x[c];
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    /// No damping level produced a decrease; the iterate is a numerical
    /// local minimum.
    NoProgress,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::MaxIterations
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gradient_tolerance",
            Termination::RelativeDecrease => "relative_decrease",
            Termination::NoProgress => "no_progress",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    /// Jacobian evaluations that led to a step attempt.
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Max-norm of Jᵀr at the last Jacobian evaluation.
    pub gradient_norm: f64,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |s, v| s + v * v)
}

/// Minimizes ‖r(x)‖² from `x0`. λ starts at `initial_lambda`, is divided by
/// ten on acceptance and multiplied by ten on rejection; damping is scaled
/// by diag(JᵀJ).
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(p: &P, x0: &[f64], s: &LmSettings) -> Result<LmReport> {
    if x0.len() != p.num_params() {
        return Err(Error::Shape {
            context: "least-squares start point",
            expected: p.num_params(),
            actual: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut r = p.residuals(&x)?;
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial residuals",
            index: i,
        });
    }
    let mut cost = sum_sq(&r);
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = s.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut gradient_norm = f64::INFINITY;

    'outer: while iterations < s.max_iterations {
        let j = p.jacobian(&x, &r, s.fd_step)?;
        let jtj = j.tr_mul(&j);
        let g = j.tr_mul(&DVector::from_column_slice(&r));
        gradient_norm = g.amax();
        if gradient_norm < s.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(1.0);
        loop {
            let mut a = jtj.clone();
            if lambda > 0.0 {
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
                }
            }
            let step = a.cholesky().map(|c| c.solve(&(-&g)));
            let trial = step.and_then(|d| {
                let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                let rn = p.residuals(&xn).ok()?;
                let cn = sum_sq(&rn);
                cn.is_finite().then_some((d, xn, rn, cn))
            });
            match trial {
                Some((d, xn, rn, cn)) if cn < cost => {
                    let predicted = -(2.0 * d.dot(&g) + d.dot(&(&jtj * &d)));
                    let rho = (cost - cn) / predicted;
                    let rel = (cost - cn) / cost;
                    x = xn;
                    r = rn;
                    cost = cn;
                    history.push(cost);
                    lambda = if (rho - 1.0).abs() < EXACT_MODEL_TOLERANCE {
                        0.0
                    } else if lambda == 0.0 {
                        s.initial_lambda
                    } else {
                        lambda / 10.0
                    };
                    if rel < s.relative_tolerance {
                        termination = Termination::RelativeDecrease;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda = if lambda == 0.0 { s.initial_lambda } else { lambda * 10.0 };
                    if lambda > LAMBDA_MAX {
                        termination = Termination::NoProgress;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(LmReport {
        x,
        cost,
        initial_cost,
        iterations,
        termination,
        cost_history: history,
        gradient_norm,
    })
}
